//! Balance of a trajectory along kernel directions, loss balance, and the
//! checks that tie them to iterate bounds.

use std::collections::BTreeMap;

use crate::error::{OmdError, Result};
use crate::geometry::{Domain, Regularizer};
use crate::numeric::{dot, KahanSum};
use crate::trajectories::Trajectory;

pub use crate::thresholds::psi_floor;

/// Tolerance on `||A v||_inf` for a kernel vector.
pub const KERNEL_TOL: f64 = 1e-10;

fn kernel_residual(dom: &Domain, v: &[f64]) -> Result<f64> {
    if v.len() != dom.dim() {
        return Err(OmdError::Dimension { expected: dom.dim(), got: v.len() });
    }
    match dom {
        Domain::Simplex { .. } => Ok(v.iter().copied().collect::<KahanSum>().value().abs()),
        Domain::Polytope(p) => Ok((0..p.rows())
            .map(|r| (0..p.dim()).map(|j| p.a()[(r, j)] * v[j]).collect::<KahanSum>().value().abs())
            .fold(0.0, f64::max)),
        Domain::Interval { .. } => Err(OmdError::Unsupported("an interval has no kernel directions".into())),
    }
}

fn check_time(traj: &Trajectory, t: usize) -> Result<()> {
    if t == 0 || t > traj.iterates.len() {
        return Err(OmdError::Spec(format!(
            "iterate index {t} outside 1..={}",
            traj.iterates.len()
        )));
    }
    Ok(())
}

/// `B^v(t1, t2) = <grad R(w_t1) - grad R(w_t2), v>` for 1-based iterate indices.
pub fn trajectory_balance(traj: &Trajectory, v: &[f64], t1: usize, t2: usize) -> Result<f64> {
    let res = kernel_residual(&traj.dom, v)?;
    if res > KERNEL_TOL {
        return Err(OmdError::Domain(format!("vector is not in the kernel: ||Av|| = {res:.3e}")));
    }
    check_time(traj, t1)?;
    check_time(traj, t2)?;
    let (a, b) = (&traj.iterates[t1 - 1], &traj.iterates[t2 - 1]);
    let mut acc = KahanSum::new();
    for (i, &vi) in v.iter().enumerate() {
        if vi == 0.0 {
            continue;
        }
        let diff = if traj.reg.is_entropy() {
            a.ln(i) - b.ln(i)
        } else {
            traj.mirror(t1, i) - traj.mirror(t2, i)
        };
        acc.add(diff * vi);
    }
    Ok(acc.value())
}

/// `sum_{s=t1}^{t2-1} l_s`, the loss between iterates `t1` and `t2`.
pub fn loss_interval_sum(losses: &[Vec<f64>], t1: usize, t2: usize) -> Vec<f64> {
    let d = losses.first().map_or(0, Vec::len);
    let mut acc = vec![KahanSum::new(); d];
    for l in &losses[t1 - 1..t2 - 1] {
        for (a, x) in acc.iter_mut().zip(l) {
            a.add(*x);
        }
    }
    acc.iter().map(KahanSum::value).collect()
}

fn l1(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

/// Smallest `alpha` with `|<l_{t1:t2}, v>| <= alpha ||v||_1` over all intervals and basis vectors.
///
/// Uses the prefix range `max_t P_t - min_t P_t` with `P_0 = 0`.
pub fn loss_balance(losses: &[Vec<f64>], basis: &[Vec<f64>]) -> f64 {
    let mut alpha: f64 = 0.0;
    for v in basis {
        let norm = l1(v);
        if norm == 0.0 {
            continue;
        }
        let mut p = KahanSum::new();
        let (mut hi, mut lo): (f64, f64) = (0.0, 0.0);
        for l in losses {
            p.add(dot(l, v));
            hi = hi.max(p.value());
            lo = lo.min(p.value());
        }
        alpha = alpha.max((hi - lo) / norm);
    }
    alpha
}

/// `e_j - e_i` for every ordered pair, the family used for simplex bounds.
pub fn simplex_pair_basis(d: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(d * (d - 1));
    for j in 0..d {
        for i in 0..d {
            if i != j {
                let mut v = vec![0.0; d];
                v[j] = 1.0;
                v[i] = -1.0;
                out.push(v);
            }
        }
    }
    out
}

/// Direction family used for balance statistics: all pairs on the simplex,
/// the kernel basis on a polytope, the unit direction on an interval.
pub fn balance_family(dom: &Domain) -> Vec<Vec<f64>> {
    match dom {
        Domain::Simplex { dim } => simplex_pair_basis(*dim),
        Domain::Polytope(p) => p.basis().to_vec(),
        Domain::Interval { .. } => vec![vec![1.0]],
    }
}

/// Running balance `max_v |B^v(1, t+1)| / ||v||_1` over [`balance_family`], one value per round.
pub fn balance_path(traj: &Trajectory) -> Vec<f64> {
    let d = traj.dim();
    let diff = |t: usize, i: usize| {
        if traj.reg.is_entropy() {
            traj.iterates[0].ln(i) - traj.iterates[t - 1].ln(i)
        } else {
            traj.mirror(1, i) - traj.mirror(t, i)
        }
    };
    let family = match &traj.dom {
        Domain::Polytope(p) => Some(p.basis().to_vec()),
        _ => None,
    };
    let mut out = Vec::with_capacity(traj.horizon());
    for t in 2..=traj.iterates.len() {
        let delta: Vec<f64> = (0..d).map(|i| diff(t, i)).collect();
        let k = match (&traj.dom, &family) {
            (Domain::Simplex { .. }, _) => {
                let hi = delta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lo = delta.iter().copied().fold(f64::INFINITY, f64::min);
                (hi - lo) / 2.0
            }
            (_, Some(basis)) => basis
                .iter()
                .map(|v| dot(&delta, v).abs() / l1(v))
                .fold(0.0, f64::max),
            _ => delta[0].abs(),
        };
        out.push(k);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct BalanceReport {
    /// `(vector index, t1, t2)` to the balance of the L1-normalized vector.
    pub per_pair: BTreeMap<(usize, usize, usize), f64>,
    pub max_over_pairs: f64,
    /// Largest `|B|` over the grid; a lower bound on the trajectory's balance
    /// unless `exact_family` is set.
    pub k_balanced_at: f64,
    pub exact_family: bool,
}

/// Balance over every `t1 < t2` of `times` and every basis vector.
pub fn balance_report(traj: &Trajectory, basis: &[Vec<f64>], times: &[usize]) -> Result<BalanceReport> {
    let mut per_pair = BTreeMap::new();
    let mut max_over_pairs = f64::NEG_INFINITY;
    let mut k: f64 = 0.0;
    for (vi, v) in basis.iter().enumerate() {
        let norm = l1(v);
        if norm == 0.0 {
            continue;
        }
        let unit: Vec<f64> = v.iter().map(|x| x / norm).collect();
        for (a, &t1) in times.iter().enumerate() {
            for &t2 in &times[a + 1..] {
                let b = trajectory_balance(traj, &unit, t1, t2)?;
                max_over_pairs = max_over_pairs.max(b);
                k = k.max(b.abs());
                per_pair.insert((vi, t1, t2), b);
            }
        }
    }
    let exact_family = matches!(traj.dom, Domain::Simplex { dim } if basis.len() == dim * (dim - 1));
    Ok(BalanceReport {
        per_pair,
        max_over_pairs: if max_over_pairs.is_finite() { max_over_pairs } else { 0.0 },
        k_balanced_at: k,
        exact_family,
    })
}

/// `(4 eta / c1) w^nu <= eps`: freezing a coordinate at `w` stays epsilon-valid.
pub fn stuck_criterion(reg: &Regularizer, w: f64, eta: f64, eps: f64) -> bool {
    match reg.constants() {
        Some(k) => 4.0 * eta / k.c1 * w.powf(k.nu) <= eps,
        None => false,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CeilingReport {
    pub bound: f64,
    /// Smallest `bound - (-r'(w_t^i))`.
    pub min_margin: f64,
    /// `(t, i, margin)` with negative margin.
    pub violations: Vec<(usize, usize, f64)>,
    /// Bound as stated in the main text, `4kd - r'(1/(2d))`.
    pub main_text_bound: f64,
    pub main_text_min_margin: f64,
}

/// Checks `-r'(w_t^i) <= max(4kd - r'(1/d), -r'(1/(2d)))` for every iterate.
pub fn entropy_gradient_ceiling(traj: &Trajectory, k: f64) -> Result<CeilingReport> {
    if !matches!(traj.dom, Domain::Simplex { .. }) {
        return Err(OmdError::Unsupported("gradient ceiling is stated over the simplex".into()));
    }
    let d = traj.dim();
    let df = d as f64;
    let reg = &traj.reg;
    let bound = (4.0 * k * df - reg.dr(1.0 / df)).max(-reg.dr(0.5 / df));
    let main_text_bound = 4.0 * k * df - reg.dr(0.5 / df);
    let mut min_margin = f64::INFINITY;
    let mut main_min = f64::INFINITY;
    let mut violations = Vec::new();
    for t in 1..=traj.iterates.len() {
        for i in 0..d {
            let neg = -traj.mirror(t, i);
            let margin = bound - neg;
            min_margin = min_margin.min(margin);
            main_min = main_min.min(main_text_bound - neg);
            if margin < -1e-9 * (1.0 + bound.abs()) {
                violations.push((t, i, margin));
            }
        }
    }
    Ok(CeilingReport { bound, min_margin, violations, main_text_bound, main_text_min_margin: main_min })
}

/// Drift implications for coordinate `i` against `i_star` between iterates `t1`, `t2`:
/// (1) `w_t2^i >= w_t1^i` implies `e^(k/c1) w_t2^i* >= w_t1^i*`;
/// (2) `w_t2^i* <= w_t1^i*` implies `w_t2^i <= e^(k/c1) w_t1^i`.
pub fn simplex_coordinate_bounds_check(
    traj: &Trajectory,
    i: usize,
    i_star: usize,
    t1: usize,
    t2: usize,
    k: f64,
) -> Result<bool> {
    let d = traj.dim();
    if i >= d || i_star >= d {
        return Err(OmdError::Spec(format!("coordinate out of range for d = {d}")));
    }
    let c1 = traj
        .reg
        .constants()
        .ok_or_else(|| OmdError::Unsupported(format!("{} is not a barrier", traj.reg.name())))?
        .c1;
    let mut v = vec![0.0; d];
    v[i_star] += 1.0;
    v[i] -= 1.0;
    let b = trajectory_balance(traj, &v, t1, t2)?;
    if b > k + 1e-12 * (1.0 + k.abs()) {
        return Err(OmdError::Precondition(format!("balance {b:.6e} exceeds k = {k:.6e}")));
    }
    let (a, c) = (&traj.iterates[t1 - 1], &traj.iterates[t2 - 1]);
    let f = (k / c1).exp() * (1.0 + 1e-12);
    let one = c.coords[i] < a.coords[i] || f * c.coords[i_star] >= a.coords[i_star];
    let two = c.coords[i_star] > a.coords[i_star] || c.coords[i] <= f * a.coords[i];
    Ok(one && two)
}

/// Compares an approximate trajectory's balance with an exact one sharing its losses:
/// `B_hat <= B + (t2 - t1) sqrt(c2 eps / psi^nu)` for L1-normalized `v`.
///
/// Returns `(B_hat, bound)`; errors when the floor or epsilon premise fails.
pub fn trajectory_difference_check(
    exact: &Trajectory,
    approx: &Trajectory,
    v: &[f64],
    t1: usize,
    t2: usize,
    psi: f64,
) -> Result<(f64, f64)> {
    let k = approx
        .reg
        .constants()
        .ok_or_else(|| OmdError::Unsupported(format!("{} is not a barrier", approx.reg.name())))?;
    if (l1(v) - 1.0).abs() > 1e-12 {
        return Err(OmdError::Spec("kernel vector must be L1-normalized".into()));
    }
    if approx.eps > k.c2 * psi / 2.0 {
        return Err(OmdError::Precondition(format!(
            "eps <= c2 psi / 2 fails: eps = {:.3e}, psi = {psi:.3e}",
            approx.eps
        )));
    }
    for t in t1..=t2 {
        for (i, &vi) in v.iter().enumerate() {
            if vi != 0.0 && approx.iterates[t - 1].coords[i] < psi {
                return Err(OmdError::Precondition(format!("iterate {t} coordinate {i} below psi")));
            }
        }
    }
    let b = trajectory_balance(exact, v, t1, t2)?;
    let b_hat = trajectory_balance(approx, v, t1, t2)?;
    let bound = b + (t2 - t1) as f64 * (k.c2 * approx.eps / psi.powf(k.nu)).sqrt();
    Ok((b_hat, bound))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point;
    use crate::trajectories::{build_entropy_stuck, run_exact};
    use approx::assert_relative_eq;

    fn mw_run() -> Trajectory {
        let dom = Domain::simplex(2).unwrap();
        run_exact(&dom, &Regularizer::NegEntropy, &vec![vec![1.0, 0.0]; 20], 0.1, &Point::uniform(2)).unwrap()
    }

    #[test]
    fn balance_identity_example() {
        let traj = mw_run();
        let b = trajectory_balance(&traj, &[-1.0, 1.0], 1, 11).unwrap();
        assert_relative_eq!(b, -1.0, epsilon = 1e-12);
        let l = loss_interval_sum(&traj.losses, 1, 11);
        assert_relative_eq!(b, 0.1 * (l[1] - l[0]), epsilon = 1e-12);
        assert_eq!(trajectory_balance(&traj, &[-1.0, 1.0], 5, 5).unwrap(), 0.0);
    }

    #[test]
    fn running_balance_grows_linearly_for_constant_losses() {
        let path = balance_path(&mw_run());
        assert_eq!(path.len(), 20);
        for (t, k) in path.iter().enumerate() {
            assert_relative_eq!(*k, 0.05 * (t + 1) as f64, epsilon = 1e-12);
        }
    }

    #[test]
    fn non_kernel_vector_is_rejected() {
        let traj = mw_run();
        assert!(trajectory_balance(&traj, &[1.0, 1.0], 1, 2).is_err());
    }

    #[test]
    fn loss_balance_examples() {
        let basis = vec![vec![-0.5, 0.5]];
        assert_eq!(loss_balance(&vec![vec![0.0, 0.0]; 10], &basis), 0.0);
        assert_relative_eq!(loss_balance(&vec![vec![1.0, 0.0]; 40], &basis), 20.0);
    }

    #[test]
    fn report_is_consistent() {
        let traj = mw_run();
        let basis = simplex_pair_basis(2);
        let rep = balance_report(&traj, &basis, &[1, 4, 9, 21]).unwrap();
        assert!(rep.exact_family);
        assert!(rep.max_over_pairs <= rep.k_balanced_at);
        let b = |t1, t2| rep.per_pair[&(0, t1, t2)];
        assert_relative_eq!(b(1, 4) + b(4, 9), b(1, 9), epsilon = 1e-12);
        assert_relative_eq!(rep.k_balanced_at, 0.1 * 20.0 / 2.0 * 2.0 / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn stuck_criterion_examples() {
        let reg = Regularizer::NegEntropy;
        assert!(stuck_criterion(&reg, 1e-3, 0.1, 4e-4));
        assert!(!stuck_criterion(&reg, 0.5, 0.1, 4e-4));
        assert!(stuck_criterion(&reg, 1.0, 0.1, 0.4));
        assert!(!stuck_criterion(&Regularizer::Euclidean { beta: 1.0 }, 0.0, 0.1, 1.0));
    }

    #[test]
    fn ceiling_holds_with_zero_balance() {
        let dom = Domain::simplex(3).unwrap();
        let traj = run_exact(&dom, &Regularizer::NegEntropy, &vec![vec![0.0; 3]; 5], 0.1, &Point::uniform(3)).unwrap();
        let rep = entropy_gradient_ceiling(&traj, 0.0).unwrap();
        assert!(rep.violations.is_empty());
        assert!(rep.min_margin >= 0.0);
    }

    #[test]
    fn coordinate_bounds_on_constant_loss() {
        let traj = mw_run();
        let eta = 0.1;
        for t2 in 2..=21 {
            // loss on arm 0 only; arm 1 is the best arm
            let k = eta * (t2 - 1) as f64;
            assert!(simplex_coordinate_bounds_check(&traj, 0, 1, 1, t2, k).unwrap());
        }
    }

    #[test]
    fn frozen_stretch_has_zero_balance() {
        let traj = build_entropy_stuck(70.0, 4e-4, 0.1, 200).unwrap();
        assert_eq!(trajectory_balance(&traj, &[1.0, -1.0], 80, 150).unwrap(), 0.0);
        assert!(simplex_coordinate_bounds_check(&traj, 0, 1, 80, 150, 0.0).unwrap());
    }

    #[test]
    fn psi_floor_reexport() {
        assert_relative_eq!(psi_floor(2.0, 1.0, 0.1, 100, 2).unwrap(), 1.0 / 164.0, epsilon = 1e-15);
        assert!(psi_floor(1.0, 1.0, 0.1, 100, 2).is_err());
    }
}
