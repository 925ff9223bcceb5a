//! Whole trajectories: exact and honest inexact OMD, approximate FTRL, the
//! adversarial stuck constructions, and regret.

pub mod audits;
mod constructions;
mod regret;

pub use constructions::{
    build_dimension_stuck, build_double_switch, build_entropy_stuck, build_polytope_stuck,
    build_scripted_freeze, build_smooth_stuck, double_switch_losses, entropy_stuck_regret,
    entropy_stuck_tau, frozen_entropy_slack, polytope_comparator, DoubleSwitch, PolytopeStuck,
};
pub use regret::{best_in_hindsight, regret, RegretReport};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{OmdError, Result};
use crate::geometry::{coord_gradient, Domain, Point, Regularizer};
use crate::numeric::{dot, KahanSum};
use crate::subproblem::{
    exact_step, perturb_to_slack, solve_reference, StepCertificate, StepObjective, CERT_FLOOR,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TrajectoryKind {
    Exact,
    Honest,
    Adversarial,
    Ftrl,
}

impl TrajectoryKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TrajectoryKind::Exact => "exact",
            TrajectoryKind::Honest => "honest",
            TrajectoryKind::Adversarial => "adversarial",
            TrajectoryKind::Ftrl => "ftrl",
        }
    }
}

/// How an honest solver spends its error budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoisePolicy {
    /// Return the reference minimizer (slack at most `eps / 10`).
    Tight,
    /// Push the reference minimizer along a random feasible direction until the
    /// certified slack lies in `[eps/2, eps]`.
    Saturating { seed: u64 },
}

/// An iterate sequence `w_1..w_{T+1}` with its losses and per-round certificates.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub kind: TrajectoryKind,
    pub dom: Domain,
    pub reg: Regularizer,
    pub eta: f64,
    pub eps: f64,
    pub iterates: Vec<Point>,
    pub losses: Vec<Vec<f64>>,
    pub certificates: Vec<StepCertificate>,
    /// Rounds (1-based) where saturating noise could not be placed and the tight step was used.
    pub fallback_rounds: Vec<usize>,
    /// Rounds (1-based) whose output repeats the anchor.
    pub frozen_rounds: Vec<usize>,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.losses.len()
    }

    pub fn dim(&self) -> usize {
        self.dom.dim()
    }

    /// `<l_t, w_t>` for `t = 1..T`.
    pub fn loss_dot_w(&self) -> Vec<f64> {
        self.losses
            .iter()
            .zip(&self.iterates)
            .map(|(l, w)| dot(l, &w.coords))
            .collect()
    }

    pub fn cumulative_loss(&self) -> f64 {
        self.loss_dot_w().into_iter().collect::<KahanSum>().value()
    }

    pub fn max_slack(&self) -> f64 {
        self.certificates.iter().map(|c| c.slack).fold(0.0, f64::max)
    }

    /// Smallest coordinate over all iterates.
    pub fn min_coord(&self) -> f64 {
        self.iterates.iter().map(Point::min_coord).fold(f64::INFINITY, f64::min)
    }

    /// True when some certificate was checked at the floor instead of `eps`.
    pub fn relaxed(&self) -> bool {
        self.certificates.iter().any(|c| c.relaxed)
    }

    /// `r'` of iterate `t` (1-based) at coordinate `i`, via logs when present.
    pub fn mirror(&self, t: usize, i: usize) -> f64 {
        coord_gradient(&self.reg, &self.iterates[t - 1], i)
    }

    /// Re-checks feasibility and certificate bounds.
    pub fn validate(&self) -> Result<()> {
        let t_len = self.horizon();
        if self.iterates.len() != t_len + 1 || self.certificates.len() != t_len {
            return Err(OmdError::Spec(format!(
                "trajectory shape: {} iterates, {} losses, {} certificates",
                self.iterates.len(),
                t_len,
                self.certificates.len()
            )));
        }
        for (t, w) in self.iterates.iter().enumerate() {
            self.dom.check_feasible(&w.coords).map_err(|e| e.at_round(t + 1))?;
        }
        let bound = match self.kind {
            TrajectoryKind::Exact => 1e-10,
            _ => self.eps,
        };
        for (t, c) in self.certificates.iter().enumerate() {
            let limit = if c.relaxed { bound.max(CERT_FLOOR) } else { bound };
            if c.slack > limit {
                return Err(OmdError::Certification { round: t + 1, slack: c.slack, eps: limit });
            }
        }
        Ok(())
    }
}

fn check_losses(dom: &Domain, losses: &[Vec<f64>]) -> Result<()> {
    let d = dom.dim();
    for (t, l) in losses.iter().enumerate() {
        if l.len() != d {
            return Err(OmdError::Dimension { expected: d, got: l.len() }.at_round(t + 1));
        }
        if l.iter().any(|x| !x.is_finite()) {
            return Err(OmdError::Spec(format!("loss at round {} is not finite", t + 1)));
        }
    }
    Ok(())
}

fn start_point(reg: &Regularizer, w1: &Point) -> Point {
    if reg.is_entropy() {
        w1.clone().with_log_coords()
    } else {
        w1.clone()
    }
}

fn initial_check(dom: &Domain, reg: &Regularizer, w1: &Point) -> Result<()> {
    dom.check_feasible(&w1.coords)?;
    if reg.is_barrier() {
        w1.check_interior()?;
    }
    Ok(())
}

/// Exact OMD: every round is solved to reference accuracy.
pub fn run_exact(
    dom: &Domain,
    reg: &Regularizer,
    losses: &[Vec<f64>],
    eta: f64,
    w1: &Point,
) -> Result<Trajectory> {
    check_losses(dom, losses)?;
    initial_check(dom, reg, w1)?;
    let mut iterates = vec![start_point(reg, w1)];
    let mut certificates = Vec::with_capacity(losses.len());
    for (t, l) in losses.iter().enumerate() {
        let anchor = &iterates[t];
        let obj = StepObjective::new(eta, l, anchor, reg, dom).map_err(|e| e.at_round(t + 1))?;
        let (w, cert) = exact_step(&obj).map_err(|e| e.at_round(t + 1))?;
        iterates.push(w);
        certificates.push(cert);
    }
    Ok(Trajectory {
        kind: TrajectoryKind::Exact,
        dom: dom.clone(),
        reg: reg.clone(),
        eta,
        eps: 0.0,
        iterates,
        losses: losses.to_vec(),
        certificates,
        fallback_rounds: Vec::new(),
        frozen_rounds: Vec::new(),
    })
}

/// Attempts per round before saturating noise falls back to the tight step.
const NOISE_ATTEMPTS: usize = 8;

struct Honest<'a> {
    dom: &'a Domain,
    reg: &'a Regularizer,
    eta: f64,
    eps: f64,
    policy: NoisePolicy,
    rng: Option<ChaCha8Rng>,
}

impl Honest<'_> {
    /// One certified epsilon-minimizer; the flag reports a fallback.
    fn step(&mut self, round: usize, loss: &[f64], anchor: &Point) -> Result<(Point, StepCertificate, bool)> {
        let obj = StepObjective::new(self.eta, loss, anchor, self.reg, self.dom)?;
        let r = solve_reference(&obj, self.eps)?;
        if r.slack > self.eps {
            return Err(OmdError::Certification { round, slack: r.slack, eps: self.eps });
        }
        let out = match (&self.policy, self.rng.as_mut()) {
            (NoisePolicy::Saturating { .. }, Some(rng)) => {
                let mut found = None;
                for _ in 0..NOISE_ATTEMPTS {
                    if let Some(hit) = perturb_to_slack(&obj, &r, self.eps, rng)? {
                        found = Some(hit);
                        break;
                    }
                }
                match found {
                    Some((p, c)) => (p, c, false),
                    None => (r.point.clone(), r.certificate(), true),
                }
            }
            _ => (r.point.clone(), r.certificate(), false),
        };
        if out.1.slack > self.eps {
            return Err(OmdError::Certification { round, slack: out.1.slack, eps: self.eps });
        }
        Ok(out)
    }
}

fn honest_setup<'a>(
    dom: &'a Domain,
    reg: &'a Regularizer,
    eta: f64,
    eps: f64,
    policy: NoisePolicy,
) -> Result<Honest<'a>> {
    if !(eps >= CERT_FLOOR) {
        return Err(OmdError::BelowResolution { target: eps, floor: CERT_FLOOR });
    }
    let rng = match policy {
        NoisePolicy::Saturating { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
        NoisePolicy::Tight => None,
    };
    Ok(Honest { dom, reg, eta, eps, policy, rng })
}

/// Honest inexact OMD: each round returns a certified `eps`-minimizer.
pub fn run_honest_inexact(
    dom: &Domain,
    reg: &Regularizer,
    losses: &[Vec<f64>],
    eta: f64,
    eps: f64,
    w1: &Point,
    policy: NoisePolicy,
) -> Result<Trajectory> {
    check_losses(dom, losses)?;
    initial_check(dom, reg, w1)?;
    let mut solver = honest_setup(dom, reg, eta, eps, policy)?;
    let mut iterates = vec![start_point(reg, w1)];
    let mut certificates = Vec::with_capacity(losses.len());
    let mut fallback_rounds = Vec::new();
    for (t, l) in losses.iter().enumerate() {
        let (w, cert, fell_back) =
            solver.step(t + 1, l, &iterates[t]).map_err(|e| e.at_round(t + 1))?;
        if fell_back {
            fallback_rounds.push(t + 1);
        }
        iterates.push(w);
        certificates.push(cert);
    }
    Ok(Trajectory {
        kind: TrajectoryKind::Honest,
        dom: dom.clone(),
        reg: reg.clone(),
        eta,
        eps,
        iterates,
        losses: losses.to_vec(),
        certificates,
        fallback_rounds,
        frozen_rounds: Vec::new(),
    })
}

/// Minimizer of the regularizer over the domain.
pub fn regularizer_minimizer(dom: &Domain, reg: &Regularizer) -> Result<Point> {
    match dom {
        Domain::Simplex { dim } => Ok(Point::uniform(*dim)),
        Domain::Interval { lo, hi } => Ok(Point::new(vec![reg.dr_inverse(0.0).clamp(*lo, *hi)])),
        Domain::Polytope(_) => {
            let anchor = start_point(reg, &Point::new(dom.center()));
            initial_check(dom, reg, &anchor)?;
            let shift: Vec<f64> = (0..dom.dim()).map(|i| coord_gradient(reg, &anchor, i)).collect();
            let obj = StepObjective::new(1.0, &shift, &anchor, reg, dom)?;
            Ok(solve_reference(&obj, CERT_FLOOR)?.point)
        }
    }
}

/// Approximate FTRL: round `t` returns an `eps`-minimizer of `eta <L_t, w> + R(w)`.
///
/// The objective is rewritten as a proximal step anchored at `w_1 = argmin R`
/// with loss `L_t + grad R(w_1) / eta`, which differs from it by a constant.
pub fn run_ftrl_approx(
    dom: &Domain,
    reg: &Regularizer,
    losses: &[Vec<f64>],
    eta: f64,
    eps: f64,
    policy: NoisePolicy,
) -> Result<Trajectory> {
    check_losses(dom, losses)?;
    let w1 = start_point(reg, &regularizer_minimizer(dom, reg)?);
    initial_check(dom, reg, &w1)?;
    let mut solver = honest_setup(dom, reg, eta, eps, policy)?;
    let d = dom.dim();
    let grad_w1: Vec<f64> = (0..d).map(|i| coord_gradient(reg, &w1, i)).collect();
    let mut cum = vec![KahanSum::new(); d];
    let mut iterates = vec![w1.clone()];
    let mut certificates = Vec::with_capacity(losses.len());
    let mut fallback_rounds = Vec::new();
    for (t, l) in losses.iter().enumerate() {
        for (c, x) in cum.iter_mut().zip(l) {
            c.add(*x);
        }
        let shifted: Vec<f64> = (0..d).map(|i| cum[i].value() + grad_w1[i] / eta).collect();
        let (w, cert, fell_back) =
            solver.step(t + 1, &shifted, &w1).map_err(|e| e.at_round(t + 1))?;
        if fell_back {
            fallback_rounds.push(t + 1);
        }
        iterates.push(w);
        certificates.push(cert);
    }
    Ok(Trajectory {
        kind: TrajectoryKind::Ftrl,
        dom: dom.clone(),
        reg: reg.clone(),
        eta,
        eps,
        iterates,
        losses: losses.to_vec(),
        certificates,
        fallback_rounds,
        frozen_rounds: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn constant(l: &[f64], t: usize) -> Vec<Vec<f64>> {
        vec![l.to_vec(); t]
    }

    #[test]
    fn exact_entropy_matches_multiplicative_weights() {
        let dom = Domain::simplex(2).unwrap();
        let traj = run_exact(&dom, &Regularizer::NegEntropy, &constant(&[1.0, 0.0], 20), 0.1, &Point::uniform(2))
            .unwrap();
        // w_11 second coordinate
        let expect = 1.0 / (1.0 + (-1.0f64).exp());
        assert_relative_eq!(traj.iterates[10].coords[1], expect, epsilon = 1e-14);
        for (t, w) in traj.iterates.iter().enumerate() {
            let e = 1.0 / (1.0 + (-0.1 * t as f64).exp());
            assert_relative_eq!(w.coords[1], e, epsilon = 1e-14);
        }
        traj.validate().unwrap();
    }

    #[test]
    fn zero_losses_keep_start() {
        let dom = Domain::simplex(3).unwrap();
        let w1 = Point::new(vec![0.2, 0.3, 0.5]);
        for reg in [Regularizer::NegEntropy, Regularizer::LogBarrier, Regularizer::Tsallis { q: 0.5 }] {
            let traj = run_exact(&dom, &reg, &constant(&[0.0; 3], 5), 0.3, &w1).unwrap();
            for w in &traj.iterates {
                for i in 0..3 {
                    assert_relative_eq!(w.coords[i], w1.coords[i], epsilon = 1e-13);
                }
            }
        }
    }

    #[test]
    fn tight_honest_tracks_exact() {
        let dom = Domain::simplex(3).unwrap();
        let reg = Regularizer::LogBarrier;
        let losses: Vec<Vec<f64>> = (0..30)
            .map(|t| vec![(t as f64 * 0.7).sin(), (t as f64 * 0.3).cos(), 0.2])
            .collect();
        let w1 = Point::uniform(3);
        let ex = run_exact(&dom, &reg, &losses, 0.2, &w1).unwrap();
        let hn = run_honest_inexact(&dom, &reg, &losses, 0.2, 1e-12, &w1, NoisePolicy::Tight).unwrap();
        for (a, b) in ex.iterates.iter().zip(&hn.iterates) {
            for i in 0..3 {
                assert!((a.coords[i] - b.coords[i]).abs() < 1e-5);
            }
        }
        hn.validate().unwrap();
    }

    #[test]
    fn saturating_slacks_land_in_band() {
        let dom = Domain::simplex(4).unwrap();
        let reg = Regularizer::NegEntropy;
        let losses: Vec<Vec<f64>> = (0..50).map(|t| vec![(t % 3) as f64 / 2.0, 0.1, -0.3, 0.5]).collect();
        let eps = 1e-6;
        let traj = run_honest_inexact(
            &dom,
            &reg,
            &losses,
            0.1,
            eps,
            &Point::uniform(4),
            NoisePolicy::Saturating { seed: 7 },
        )
        .unwrap();
        traj.validate().unwrap();
        for (t, c) in traj.certificates.iter().enumerate() {
            if !traj.fallback_rounds.contains(&(t + 1)) {
                assert!(c.slack >= 0.5 * eps && c.slack <= eps, "round {t}: {}", c.slack);
            }
        }
    }

    #[test]
    fn honest_refuses_subfloor_eps() {
        let dom = Domain::simplex(2).unwrap();
        let err = run_honest_inexact(
            &dom,
            &Regularizer::NegEntropy,
            &constant(&[1.0, 0.0], 3),
            0.1,
            1e-13,
            &Point::uniform(2),
            NoisePolicy::Tight,
        )
        .unwrap_err();
        assert!(matches!(err, OmdError::BelowResolution { .. }));
    }

    #[test]
    fn ftrl_matches_exponential_weights() {
        let dom = Domain::simplex(3).unwrap();
        let losses: Vec<Vec<f64>> = (0..40).map(|t| vec![(t as f64).sin(), 0.5, (t as f64 * 0.5).cos()]).collect();
        let eta = 0.15;
        let traj = run_ftrl_approx(&dom, &Regularizer::NegEntropy, &losses, eta, 1e-12, NoisePolicy::Tight).unwrap();
        let mut cum = [0.0; 3];
        for (t, l) in losses.iter().enumerate() {
            for i in 0..3 {
                cum[i] += l[i];
            }
            let z: Vec<f64> = cum.iter().map(|c| (-eta * c).exp()).collect();
            let s: f64 = z.iter().sum();
            for i in 0..3 {
                assert_relative_eq!(traj.iterates[t + 1].coords[i], z[i] / s, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn solver_errors_carry_the_round() {
        let dom = Domain::simplex(2).unwrap();
        let mut losses = constant(&[0.0, 0.0], 4);
        losses[2] = vec![0.0];
        let err = run_exact(&dom, &Regularizer::NegEntropy, &losses, 0.1, &Point::uniform(2)).unwrap_err();
        assert!(matches!(err, OmdError::Round { round: 3, .. }));
    }
}
