use nalgebra::{DMatrix, DVector};

use super::certify::reference_solution;
use super::{shifted, CertMethod, StepCertificate, StepObjective};
use crate::error::{OmdError, Result};
use crate::geometry::{coord_gradient, Domain, Point, Regularizer};
use crate::lp;
use crate::numeric::{bisect_increasing, kahan_sum, log_sum_exp};

/// Iteration cap for [`frank_wolfe`].
pub const FW_MAX_ITER: usize = 1_000_000;

/// Exact minimizer of the round objective with its certificate.
///
/// Entropy over the simplex uses the multiplicative-weights closed form in the
/// log domain, other separable regularizers over the simplex a dual root-find,
/// and an interval the clipped stationary point. A polytope is delegated to
/// [`exact_step_polytope`] with a `1e-12` gap target.
pub fn exact_step(obj: &StepObjective) -> Result<(Point, StepCertificate)> {
    match (obj.dom, obj.reg) {
        (Domain::Simplex { .. }, Regularizer::NegEntropy) => {
            let z: Vec<f64> = (0..obj.dim())
                .map(|i| obj.anchor.ln(i) - obj.eta * obj.loss[i])
                .collect();
            let lse = log_sum_exp(&z);
            let w = Point::from_logs(z.iter().map(|v| v - lse).collect());
            certified(obj, w, CertMethod::ClosedForm)
        }
        (Domain::Simplex { .. }, _) => dual_root_step(obj),
        (Domain::Interval { lo, hi }, reg) => {
            let y = coord_gradient(reg, obj.anchor, 0) - obj.eta * obj.loss[0];
            let x = reg.dr_inverse(y).clamp(*lo, *hi);
            certified(obj, Point::new(vec![x]), CertMethod::ClosedForm)
        }
        (Domain::Polytope(_), _) => exact_step_polytope(obj, 1e-12),
    }
}

fn certified(obj: &StepObjective, w: Point, method: CertMethod) -> Result<(Point, StepCertificate)> {
    let r = reference_solution(obj, w, method)?;
    let cert = r.certificate();
    Ok((r.point, cert))
}

/// Simplex step for a separable regularizer via bisection on the multiplier of `sum w = 1`.
pub fn dual_root_step(obj: &StepObjective) -> Result<(Point, StepCertificate)> {
    let d = obj.dim();
    if !matches!(obj.dom, Domain::Simplex { .. }) {
        return Err(OmdError::Unsupported("dual root step needs a simplex domain".into()));
    }
    let reg = obj.reg;
    let c: Vec<f64> = (0..d)
        .map(|i| coord_gradient(reg, obj.anchor, i) - obj.eta * obj.loss[i])
        .collect();
    let x_of = |lam: f64, i: usize| reg.dr_inverse(c[i] + lam).clamp(0.0, 1.0);
    let total = |lam: f64| kahan_sum((0..d).map(|i| x_of(lam, i)));

    let pivot = reg.dr(1.0 / d as f64);
    let cmax = c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let cmin = c.iter().copied().fold(f64::INFINITY, f64::min);
    let (mut lo, mut hi) = (pivot - cmax, pivot - cmin);
    let mut width = (hi - lo).max(1.0);
    let mut expansions = 0;
    while total(lo) > 1.0 || total(hi) < 1.0 {
        if expansions == 200 {
            return Err(OmdError::Bracket(format!(
                "sum w(lambda) does not cross 1 on [{lo:.3e}, {hi:.3e}]"
            )));
        }
        if total(lo) > 1.0 {
            lo -= width;
        }
        if total(hi) < 1.0 {
            hi += width;
        }
        width *= 2.0;
        expansions += 1;
    }
    let root = bisect_increasing(total, 1.0, lo, hi, 1e-14, 200).root;
    let x: Vec<f64> = (0..d).map(|i| x_of(root, i)).collect();
    let s = kahan_sum(x.iter().copied());
    let w = if reg.is_entropy() {
        let ls = s.ln();
        Point::from_logs((0..d).map(|i| c[i] + root - 1.0 - ls).collect())
    } else {
        Point::new(x.iter().map(|v| v / s).collect())
    };
    certified(obj, w, CertMethod::DualRoot)
}

/// Polytope step certified by a Frank-Wolfe gap no larger than `gap_target`.
///
/// Barrier regularizers are first solved by damped Newton in kernel coordinates;
/// the Frank-Wolfe loop then only has to confirm the gap. Euclidean regularizers
/// run Frank-Wolfe from the anchor.
pub fn exact_step_polytope(obj: &StepObjective, gap_target: f64) -> Result<(Point, StepCertificate)> {
    if !(gap_target > 0.0) {
        return Err(OmdError::Spec(format!("gap target must be positive, got {gap_target}")));
    }
    let Domain::Polytope(p) = obj.dom else {
        return Err(OmdError::Unsupported("exact_step_polytope needs a polytope domain".into()));
    };
    let start = if obj.reg.is_barrier() {
        newton_in_span(obj, obj.anchor, p.basis())?
    } else {
        obj.anchor.clone()
    };
    frank_wolfe(obj, start, gap_target, FW_MAX_ITER)
}

/// Minimizes the objective over `start + span(basis)` by damped Newton.
///
/// Iterates stay interior through a fraction-to-boundary rule; the line search
/// compares objective values through exact increments.
pub fn newton_in_span(obj: &StepObjective, start: &Point, basis: &[Vec<f64>]) -> Result<Point> {
    let reg = obj.reg;
    if !reg.is_barrier() {
        return Err(OmdError::Unsupported("Newton solver needs a barrier regularizer".into()));
    }
    let d = obj.dim();
    let k = basis.len();
    let keep_logs = reg.is_entropy();
    let mut x = if keep_logs { start.clone().with_log_coords() } else { start.clone() };
    if k == 0 {
        return Ok(x);
    }
    let n = DMatrix::from_fn(d, k, |i, j| basis[j][i]);
    for _ in 0..200 {
        let g = DVector::from_vec(obj.gradient(&x));
        let h: Vec<f64> = x.coords.iter().map(|&v| reg.d2r(v)).collect();
        let gk = n.transpose() * &g;
        let mut hk = DMatrix::zeros(k, k);
        for a in 0..k {
            for b in a..k {
                let v: f64 = (0..d).map(|i| n[(i, a)] * h[i] * n[(i, b)]).sum();
                hk[(a, b)] = v;
                hk[(b, a)] = v;
            }
        }
        let scale: Vec<f64> = (0..k).map(|a| hk[(a, a)].max(f64::MIN_POSITIVE).sqrt()).collect();
        let hs = DMatrix::from_fn(k, k, |a, b| hk[(a, b)] / (scale[a] * scale[b]));
        let gs = DVector::from_fn(k, |a, _| -gk[a] / scale[a]);
        let ys = match hs.clone().cholesky() {
            Some(ch) => ch.solve(&gs),
            None => hs.lu().solve(&gs).ok_or_else(|| {
                OmdError::Domain("singular reduced Hessian in Newton solve".into())
            })?,
        };
        let delta = DVector::from_fn(k, |a, _| ys[a] / scale[a]);
        let decrement = -gk.dot(&delta);
        if !(decrement > 1e-30) {
            break;
        }
        let dir: Vec<f64> = (&n * &delta).iter().copied().collect();
        let mut step: f64 = 1.0;
        for i in 0..d {
            if dir[i] < 0.0 {
                step = step.min(0.99 * x.coords[i] / -dir[i]);
            }
        }
        let slope: f64 = g.iter().zip(&dir).map(|(a, b)| a * b).sum();
        let mut accepted = false;
        for _ in 0..60 {
            let t: Vec<f64> = dir.iter().map(|v| v * step).collect();
            let change = obj.increment_difference(&x, &t)?;
            if change <= 0.25 * step * slope || change <= 0.0 && decrement < 1e-20 {
                x = shifted(&x, &t, keep_logs);
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted || decrement < 1e-28 {
            break;
        }
    }
    Ok(x)
}

/// Frank-Wolfe from `start` until the gap drops to `gap_target`.
///
/// Barrier objectives damp each step so no coordinate falls below `1e-3` of its
/// current value.
pub fn frank_wolfe(
    obj: &StepObjective,
    start: Point,
    gap_target: f64,
    max_iter: usize,
) -> Result<(Point, StepCertificate)> {
    let Domain::Polytope(p) = obj.dom else {
        return Err(OmdError::Unsupported("frank_wolfe needs a polytope domain".into()));
    };
    let reg = obj.reg;
    let keep_logs = reg.is_entropy();
    let mut x = start;
    let mut best_gap = f64::INFINITY;
    for _ in 0..max_iter {
        let g = obj.gradient(&x);
        let g_res = super::certify::residual_gradient(obj, &x, &g);
        let s = lp::min_vertex(p, &g_res)?;
        let dir: Vec<f64> = s.iter().zip(&x.coords).map(|(a, b)| a - b).collect();
        let gap = -kahan_sum(g_res.iter().zip(&dir).map(|(a, b)| a * b));
        best_gap = best_gap.min(gap);
        if gap <= gap_target {
            let value = obj.value_unchecked(&x)?;
            let cert = StepCertificate {
                value_at_candidate: value,
                min_lower_bound: value - gap.max(0.0),
                slack: gap.max(0.0),
                method: CertMethod::FwGap,
                relaxed: false,
            };
            return Ok((x, cert));
        }
        let mut gmax: f64 = 1.0;
        if reg.is_barrier() {
            for i in 0..dir.len() {
                if dir[i] < 0.0 {
                    gmax = gmax.min((1.0 - 1e-3) * x.coords[i] / -dir[i]);
                }
            }
        }
        let slope_at = |gamma: f64| -> f64 {
            let t: Vec<f64> = dir.iter().map(|v| v * gamma).collect();
            let y = shifted(&x, &t, keep_logs);
            kahan_sum(obj.gradient(&y).iter().zip(&dir).map(|(a, b)| a * b))
        };
        let gamma = if slope_at(gmax) <= 0.0 {
            gmax
        } else {
            let (mut lo, mut hi) = (0.0, gmax);
            for _ in 0..64 {
                let mid = 0.5 * (lo + hi);
                if slope_at(mid) > 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            0.5 * (lo + hi)
        };
        if gamma == 0.0 {
            break;
        }
        let t: Vec<f64> = dir.iter().map(|v| v * gamma).collect();
        x = shifted(&x, &t, keep_logs);
    }
    Err(OmdError::IterationCap { cap: max_iter, best_gap })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Polytope;
    use approx::assert_relative_eq;

    #[test]
    fn entropy_closed_form_example() {
        let reg = Regularizer::NegEntropy;
        let dom = Domain::simplex(2).unwrap();
        let anchor = Point::uniform(2);
        let loss = [1.0, 0.0];
        let obj = StepObjective::new(2f64.ln(), &loss, &anchor, &reg, &dom).unwrap();
        let (w, cert) = exact_step(&obj).unwrap();
        assert_relative_eq!(w.coords[0], 1.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(w.coords[1], 2.0 / 3.0, epsilon = 1e-15);
        assert_eq!(cert.method, CertMethod::ClosedForm);
        assert!(cert.slack <= 1e-12);
    }

    #[test]
    fn zero_loss_returns_anchor() {
        let anchor = Point::new(vec![0.1, 0.2, 0.7]);
        let loss = [0.0; 3];
        let dom = Domain::simplex(3).unwrap();
        for reg in [
            Regularizer::NegEntropy,
            Regularizer::LogBarrier,
            Regularizer::Tsallis { q: 0.5 },
            Regularizer::Euclidean { beta: 1.0 },
        ] {
            let obj = StepObjective::new(0.3, &loss, &anchor, &reg, &dom).unwrap();
            let (w, cert) = exact_step(&obj).unwrap();
            for i in 0..3 {
                assert_relative_eq!(w.coords[i], anchor.coords[i], epsilon = 1e-12);
            }
            assert!(cert.slack <= 1e-12, "{}: {}", reg.name(), cert.slack);
        }
    }

    #[test]
    fn interval_gradient_step() {
        let reg = Regularizer::Euclidean { beta: 2.0 };
        let dom = Domain::interval(0.0, 1.0).unwrap();
        let anchor = Point::new(vec![0.5]);
        let loss = [0.5];
        let obj = StepObjective::new(0.2, &loss, &anchor, &reg, &dom).unwrap();
        let (w, cert) = exact_step(&obj).unwrap();
        assert_relative_eq!(w.coords[0], 0.5 - 0.2 / 2.0 * 0.5, epsilon = 1e-15);
        assert!(cert.slack <= 1e-15);
        // clipped at the boundary
        let loss = [-1.0];
        let obj = StepObjective::new(2.0, &loss, &anchor, &reg, &dom).unwrap();
        assert_eq!(exact_step(&obj).unwrap().0.coords[0], 1.0);
    }

    #[test]
    fn dual_root_agrees_with_closed_form_for_entropy() {
        let reg = Regularizer::NegEntropy;
        let dom = Domain::simplex(4).unwrap();
        let anchor = Point::new(vec![0.1, 0.2, 0.3, 0.4]);
        let loss = [0.9, -0.3, 0.1, 0.5];
        let obj = StepObjective::new(0.7, &loss, &anchor, &reg, &dom).unwrap();
        let (a, _) = exact_step(&obj).unwrap();
        let (b, cert) = dual_root_step(&obj).unwrap();
        for i in 0..4 {
            assert_relative_eq!(a.coords[i], b.coords[i], max_relative = 1e-12);
        }
        assert_eq!(cert.method, CertMethod::DualRoot);
    }

    fn simplex_polytope(d: usize) -> Domain {
        let a = DMatrix::from_element(1, d, 1.0);
        Domain::Polytope(Polytope::new(a, DVector::from_element(1, 1.0)).unwrap())
    }

    #[test]
    fn polytope_solver_matches_simplex_solver() {
        let reg = Regularizer::NegEntropy;
        let simplex = Domain::simplex(3).unwrap();
        let poly = simplex_polytope(3);
        let anchor = Point::new(vec![0.2, 0.5, 0.3]);
        let loss = [1.0, -0.5, 0.25];
        let a = StepObjective::new(0.4, &loss, &anchor, &reg, &simplex).unwrap();
        let b = StepObjective::new(0.4, &loss, &anchor, &reg, &poly).unwrap();
        let (_, ca) = exact_step(&a).unwrap();
        let (_, cb) = exact_step_polytope(&b, 1e-10).unwrap();
        assert!((ca.value_at_candidate - cb.value_at_candidate).abs() <= 1e-10);
        assert_eq!(cb.method, CertMethod::FwGap);
    }

    #[test]
    fn polytope_zero_loss_recovers_anchor() {
        let reg = Regularizer::LogBarrier;
        let poly = simplex_polytope(4);
        let anchor = Point::uniform(4);
        let loss = [0.0; 4];
        let obj = StepObjective::new(0.4, &loss, &anchor, &reg, &poly).unwrap();
        let (w, cert) = exact_step_polytope(&obj, 1e-10).unwrap();
        assert!(cert.value_at_candidate.abs() <= 1e-10);
        assert!(cert.slack <= 1e-10);
        for i in 0..4 {
            assert_relative_eq!(w.coords[i], 0.25, epsilon = 1e-6);
        }
    }

    #[test]
    fn plain_frank_wolfe_on_euclidean_polytope() {
        let reg = Regularizer::Euclidean { beta: 1.0 };
        let poly = simplex_polytope(3);
        let anchor = Point::new(vec![0.2, 0.5, 0.3]);
        let loss = [1.0, -0.5, 0.25];
        let obj = StepObjective::new(0.1, &loss, &anchor, &reg, &poly).unwrap();
        let (w, cert) = frank_wolfe(&obj, anchor.clone(), 1e-9, FW_MAX_ITER).unwrap();
        // unconstrained step stays interior here: w = a - eta*l + mean shift
        let shift = 0.1 * (1.0 - 0.5 + 0.25) / 3.0;
        let expect = [0.2 - 0.1 + shift, 0.5 + 0.05 + shift, 0.3 - 0.025 + shift];
        for i in 0..3 {
            assert_relative_eq!(w.coords[i], expect[i], epsilon = 1e-4);
        }
        assert!(cert.slack <= 1e-9);
    }

    #[test]
    fn iteration_cap_reports_best_gap() {
        let reg = Regularizer::Euclidean { beta: 1.0 };
        let poly = simplex_polytope(3);
        let anchor = Point::new(vec![0.2, 0.5, 0.3]);
        let loss = [1.0, -0.5, 0.25];
        let obj = StepObjective::new(0.1, &loss, &anchor, &reg, &poly).unwrap();
        match frank_wolfe(&obj, anchor.clone(), 1e-30, 3) {
            Err(OmdError::IterationCap { cap: 3, best_gap }) => assert!(best_gap.is_finite()),
            other => panic!("{other:?}"),
        }
    }
}
