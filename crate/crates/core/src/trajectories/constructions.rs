use super::{start_point, Trajectory, TrajectoryKind};
use crate::balance::stuck_criterion;
use crate::error::{OmdError, Result};
use crate::geometry::{Domain, Point, Regularizer};
use crate::instances::{event_holds, EventCheck, HardPolytope};
use crate::numeric::ceil_tolerant;
use crate::subproblem::{
    certify, exact_step, newton_in_span, CertMethod, StepCertificate, StepObjective, CERT_FLOOR,
};
use crate::thresholds::dimension_stuck_threshold;

/// Relative slack allowed when comparing epsilon against a threshold formula.
const THRESHOLD_RTOL: f64 = 1e-12;

fn below_threshold(eps: f64, threshold: f64) -> bool {
    eps < threshold * (1.0 - THRESHOLD_RTOL)
}

fn adversarial(
    dom: Domain,
    reg: Regularizer,
    eta: f64,
    eps: f64,
    iterates: Vec<Point>,
    losses: Vec<Vec<f64>>,
    certificates: Vec<StepCertificate>,
    frozen_rounds: Vec<usize>,
) -> Trajectory {
    Trajectory {
        kind: TrajectoryKind::Adversarial,
        dom,
        reg,
        eta,
        eps,
        iterates,
        losses,
        certificates,
        fallback_rounds: Vec::new(),
        frozen_rounds,
    }
}

/// Certifies `anchor` as the round's output. Targets below the floor are
/// accepted only on the analytic criterion and keep the numeric slack for reference.
fn certify_frozen(
    obj: &StepObjective,
    eps: f64,
    round: usize,
    analytic_ok: bool,
) -> Result<StepCertificate> {
    let (ok, mut cert) = certify(obj, obj.anchor, eps)?;
    if eps >= CERT_FLOOR {
        if !ok {
            return Err(OmdError::Certification { round, slack: cert.slack, eps });
        }
    } else {
        if !analytic_ok {
            return Err(OmdError::Precondition(format!(
                "round {round}: eps {eps:.3e} is below the certification floor and no analytic criterion applies"
            )));
        }
        cert.method = CertMethod::Analytic;
        cert.relaxed = true;
    }
    Ok(cert)
}

/// Euclidean regularizer on `[0, D]` with constant loss `min(sqrt(2 beta eps)/eta, 1)`
/// and every iterate at `D/2`.
pub fn build_smooth_stuck(diameter: f64, beta: f64, eps: f64, eta: f64, horizon: usize) -> Result<Trajectory> {
    if !(eps > 0.0) {
        return Err(OmdError::Spec(format!("eps must be positive, got {eps}")));
    }
    let dom = Domain::interval(0.0, diameter)?;
    let reg = Regularizer::euclidean(beta)?;
    let level = ((2.0 * beta * eps).sqrt() / eta).min(1.0);
    let loss = vec![level];
    let w = Point::new(vec![diameter / 2.0]);
    let mut certificates = Vec::with_capacity(horizon);
    for t in 1..=horizon {
        let obj = StepObjective::new(eta, &loss, &w, &reg, &dom)?;
        certificates.push(certify_frozen(&obj, eps, t, false)?);
    }
    Ok(adversarial(
        dom,
        reg,
        eta,
        eps,
        vec![w; horizon + 1],
        vec![loss; horizon],
        certificates,
        (1..=horizon).collect(),
    ))
}

/// Runs exact steps except on `frozen` rounds, which repeat the anchor.
///
/// With `require_stuck`, every frozen round must meet the stuck criterion on the
/// anchor's smallest coordinate (two-point simplex only).
#[allow(clippy::too_many_arguments)]
pub fn build_scripted_freeze(
    dom: &Domain,
    reg: &Regularizer,
    losses: &[Vec<f64>],
    eta: f64,
    eps: f64,
    w1: &Point,
    frozen: &[bool],
    require_stuck: bool,
) -> Result<Trajectory> {
    if frozen.len() != losses.len() {
        return Err(OmdError::Dimension { expected: losses.len(), got: frozen.len() });
    }
    if require_stuck && !matches!(dom, Domain::Simplex { dim: 2 }) {
        return Err(OmdError::Unsupported("the stuck criterion is stated for the two-point simplex".into()));
    }
    super::check_losses(dom, losses)?;
    super::initial_check(dom, reg, w1)?;
    let mut iterates = vec![start_point(reg, w1)];
    let mut certificates = Vec::with_capacity(losses.len());
    let mut frozen_rounds = Vec::new();
    for (t, l) in losses.iter().enumerate() {
        let round = t + 1;
        let anchor = iterates[t].clone();
        let obj = StepObjective::new(eta, l, &anchor, reg, dom).map_err(|e| e.at_round(round))?;
        if frozen[t] {
            let stuck = stuck_criterion(reg, anchor.min_coord(), eta, eps);
            if require_stuck && !stuck {
                return Err(OmdError::Precondition(format!(
                    "stuck criterion (4 eta / c1) w^nu <= eps fails at round {round} (w = {:.3e})",
                    anchor.min_coord()
                )));
            }
            let cert = certify_frozen(&obj, eps, round, stuck)?;
            certificates.push(cert);
            frozen_rounds.push(round);
            iterates.push(anchor);
        } else {
            let (w, cert) = exact_step(&obj).map_err(|e| e.at_round(round))?;
            certificates.push(cert);
            iterates.push(w);
        }
    }
    Ok(adversarial(dom.clone(), reg.clone(), eta, eps, iterates, losses.to_vec(), certificates, frozen_rounds))
}

/// `ceil((1/eta) ln(4 eta / eps))`, floored at zero.
pub fn entropy_stuck_tau(eta: f64, eps: f64) -> usize {
    let x = (4.0 * eta / eps).ln() / eta;
    if x <= 0.0 {
        0
    } else {
        ceil_tolerant(x) as usize
    }
}

/// Closed-form regret of [`build_entropy_stuck`] against the best arm.
pub fn entropy_stuck_regret(eta: f64, tau: usize, horizon: usize) -> f64 {
    let mut learner = 0.0;
    for t in 0..tau {
        learner += 1.0 / (1.0 + (eta * t as f64).exp());
    }
    learner += (horizon - tau) as f64 / (1.0 + (-eta * tau as f64).exp());
    learner - tau.min(horizon - tau) as f64
}

/// Exact slack of freezing `(s, 1 - s)` under entropy with loss `(0, 1)`:
/// `ln(1 + s (e^eta - 1)) - eta s`.
pub fn frozen_entropy_slack(s: f64, eta: f64) -> f64 {
    (s * eta.exp_m1()).ln_1p() - eta * s
}

/// Two-point entropy trajectory: exact for `tau` rounds of loss `(1,0)`, then frozen
/// while the loss is `(0,1)`.
pub fn build_entropy_stuck(alpha: f64, eps: f64, eta: f64, horizon: usize) -> Result<Trajectory> {
    if !(eps > 0.0) {
        return Err(OmdError::Spec(format!("eps must be positive, got {eps}")));
    }
    let threshold = 4.0 * eta * (-eta * alpha).exp();
    if below_threshold(eps, threshold) {
        return Err(OmdError::Precondition(format!(
            "eps >= 4 eta exp(-eta alpha) fails: eps = {eps:.6e}, threshold = {threshold:.6e}"
        )));
    }
    if alpha > horizon as f64 / 2.0 {
        return Err(OmdError::Precondition(format!("alpha <= T/2 fails: alpha = {alpha}, T = {horizon}")));
    }
    let tau = entropy_stuck_tau(eta, eps);
    if tau > horizon {
        return Err(OmdError::Precondition(format!("tau = {tau} exceeds the horizon {horizon}")));
    }
    let losses: Vec<Vec<f64>> =
        (0..horizon).map(|t| if t < tau { vec![1.0, 0.0] } else { vec![0.0, 1.0] }).collect();
    let frozen: Vec<bool> = (0..horizon).map(|t| t >= tau).collect();
    build_scripted_freeze(
        &Domain::simplex(2)?,
        &Regularizer::NegEntropy,
        &losses,
        eta,
        eps,
        &Point::uniform(2),
        &frozen,
        true,
    )
}

/// Frozen-uniform trajectory under losses `(1,...,1,0)`.
pub fn build_dimension_stuck(reg: &Regularizer, d: usize, eps: f64, eta: f64, horizon: usize) -> Result<Trajectory> {
    let k = reg
        .constants()
        .ok_or_else(|| OmdError::Unsupported(format!("{} is not a barrier", reg.name())))?;
    let threshold = dimension_stuck_threshold(k, eta, d);
    if below_threshold(eps, threshold) {
        return Err(OmdError::Precondition(format!(
            "eps >= 4 eta^2 / (c1 d^nu) fails: eps = {eps:.6e}, threshold = {threshold:.6e}"
        )));
    }
    let dom = Domain::simplex(d)?;
    let mut loss = vec![1.0; d];
    loss[d - 1] = 0.0;
    let w = Point::uniform(d);
    let mut certificates = Vec::with_capacity(horizon);
    for t in 1..=horizon {
        let obj = StepObjective::new(eta, &loss, &w, reg, &dom)?;
        certificates.push(certify_frozen(&obj, eps, t, true)?);
    }
    Ok(adversarial(
        dom,
        reg.clone(),
        eta,
        eps,
        vec![w; horizon + 1],
        vec![loss; horizon],
        certificates,
        (1..=horizon).collect(),
    ))
}

/// Loss schedule `(0,1)` for `3 tau` rounds, `(1,0)` for `2 tau`, then `(0,1)`.
pub fn double_switch_losses(tau: usize, horizon: usize) -> Vec<Vec<f64>> {
    (0..horizon)
        .map(|t| if (3 * tau..5 * tau).contains(&t) { vec![1.0, 0.0] } else { vec![0.0, 1.0] })
        .collect()
}

#[derive(Debug, Clone)]
pub struct DoubleSwitch {
    pub trajectory: Trajectory,
    pub tau: usize,
    pub eps: f64,
}

/// Two-point entropy trajectory frozen on rounds `tau+1..=3 tau` and from `5 tau + 1` on,
/// with `eps = 4 eta e^(-k/2)` and `tau = ceil(k / (2 eta))`.
pub fn build_double_switch(k: f64, eta: f64, horizon: usize) -> Result<DoubleSwitch> {
    if !(k > 0.0) {
        return Err(OmdError::Spec(format!("k must be positive, got {k}")));
    }
    let cap = horizon as f64 * eta / 20.0;
    if k > cap * (1.0 + THRESHOLD_RTOL) {
        return Err(OmdError::Precondition(format!("k <= T eta / 20 fails: k = {k}, T eta / 20 = {cap}")));
    }
    let eps = 4.0 * eta * (-k / 2.0).exp();
    let tau = ceil_tolerant(k / (2.0 * eta)) as usize;
    if 5 * tau > horizon {
        return Err(OmdError::Precondition(format!("5 tau = {} exceeds the horizon {horizon}", 5 * tau)));
    }
    let losses = double_switch_losses(tau, horizon);
    let frozen: Vec<bool> = (0..horizon).map(|t| (tau..3 * tau).contains(&t) || t >= 5 * tau).collect();
    let trajectory = build_scripted_freeze(
        &Domain::simplex(2)?,
        &Regularizer::NegEntropy,
        &losses,
        eta,
        eps,
        &Point::uniform(2),
        &frozen,
        true,
    )?;
    Ok(DoubleSwitch { trajectory, tau, eps })
}

/// Output of [`build_polytope_stuck`] with the quantities its shape checks read.
#[derive(Debug, Clone)]
pub struct PolytopeStuck {
    pub trajectory: Trajectory,
    /// Coefficient of the last basis vector, `w^(5m+2) - 1/d`, at iterates `tau+1..=T+1`.
    pub pinned: Vec<f64>,
    /// Smallest value of coordinate `5m+1` (1-based) over the same iterates.
    pub min_block_coord: f64,
    /// Modified rounds whose certificate exceeded `eps` (diagnostic mode only).
    pub uncertified_rounds: Vec<usize>,
    /// Whether the full hardness event holds for the supplied losses.
    pub event: bool,
    /// Point with every basis coefficient equal to `1/d`.
    pub comparator: Point,
}

/// The zero-loss comparator: `5/d` on the first block, `2/d` on the last coordinate.
pub fn polytope_comparator(m: usize) -> Point {
    let d = 5 * m + 2;
    let mut c = vec![0.0; d];
    for x in c.iter_mut().take(m) {
        *x = 5.0 / d as f64;
    }
    c[d - 1] = 2.0 / d as f64;
    Point::new(c)
}

/// Exact OMD for `tau = ceil(3/eta)` rounds, then steps solved only along the first
/// `m` basis vectors so the last coefficient stays pinned.
///
/// `EventCheck::Full` requires the hardness event and treats a failed certificate as
/// an error. `EventCheck::PrefixOnly` requires only the prefix condition and records
/// failed certificates instead.
pub fn build_polytope_stuck(
    hard: &HardPolytope,
    losses: &[Vec<f64>],
    eta: f64,
    eps: f64,
    check: EventCheck,
) -> Result<PolytopeStuck> {
    if !(eps > 0.0 && eps < 4.0 * eta) {
        return Err(OmdError::Precondition(format!(
            "polytope construction needs 0 < eps < 4 eta (eps = {eps:.3e})"
        )));
    }
    let (m, d) = (hard.m, hard.d);
    let tau = ceil_tolerant(3.0 / eta) as usize;
    let dom = &hard.domain;
    let reg = Regularizer::NegEntropy;
    super::check_losses(dom, losses)?;
    let event = event_holds(losses, m, tau, EventCheck::Full);
    if !event_holds(losses, m, tau, check) {
        return Err(OmdError::Precondition(format!(
            "losses do not satisfy the hardness event ({check:?}) for m = {m}, tau = {tau}"
        )));
    }
    let partial = &hard.basis[..m];
    let mut iterates = vec![hard.w1.clone().with_log_coords()];
    let mut certificates = Vec::with_capacity(losses.len());
    let mut uncertified = Vec::new();
    for (t, l) in losses.iter().enumerate() {
        let round = t + 1;
        let anchor = iterates[t].clone();
        let obj = StepObjective::new(eta, l, &anchor, &reg, dom).map_err(|e| e.at_round(round))?;
        if t < tau {
            let (w, cert) = exact_step(&obj).map_err(|e| e.at_round(round))?;
            iterates.push(w);
            certificates.push(cert);
            continue;
        }
        let cand = newton_in_span(&obj, &anchor, partial).map_err(|e| e.at_round(round))?;
        let (ok, cert) = certify(&obj, &cand, eps).map_err(|e| e.at_round(round))?;
        if !ok {
            if check == EventCheck::Full {
                return Err(OmdError::Certification { round, slack: cert.slack, eps });
            }
            uncertified.push(round);
        }
        iterates.push(cand);
        certificates.push(cert);
    }
    let inv_d = 1.0 / d as f64;
    let tail = &iterates[tau.min(losses.len())..];
    let pinned: Vec<f64> = tail.iter().map(|w| w.coords[d - 1] - inv_d).collect();
    let min_block_coord = tail.iter().map(|w| w.coords[5 * m]).fold(f64::INFINITY, f64::min);
    let trajectory = adversarial(
        dom.clone(),
        reg,
        eta,
        eps,
        iterates,
        losses.to_vec(),
        certificates,
        (tau + 1..=losses.len()).collect(),
    );
    Ok(PolytopeStuck {
        trajectory,
        pinned,
        min_block_coord,
        uncertified_rounds: uncertified,
        event,
        comparator: polytope_comparator(m),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{build_hard_polytope_with, HardPolytopeOptions};
    use crate::trajectories::regret;
    use approx::assert_relative_eq;

    #[test]
    fn smooth_stuck_examples() {
        let traj = build_smooth_stuck(1.0, 1.0, 0.005, 0.2, 100).unwrap();
        assert_eq!(traj.losses[0], vec![0.5]);
        let r = regret(&traj, Some(&Point::new(vec![0.0]))).unwrap();
        assert_relative_eq!(r.regret, 25.0, epsilon = 1e-12);
        for c in &traj.certificates {
            assert_relative_eq!(c.slack, 0.005, epsilon = 1e-15);
        }
        traj.validate().unwrap();

        // eps >= eta^2 / (2 beta) saturates the loss at one
        let traj = build_smooth_stuck(2.0, 1.0, 0.05, 0.2, 10).unwrap();
        assert_eq!(traj.losses[0], vec![1.0]);
        let r = regret(&traj, Some(&Point::new(vec![0.0]))).unwrap();
        assert_relative_eq!(r.regret, 10.0 * 2.0 / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn entropy_stuck_tau_examples() {
        assert_eq!(entropy_stuck_tau(0.1, 4e-4), 70);
        assert_eq!(entropy_stuck_tau(0.1, 0.4 * (-20.0f64).exp()), 200);
    }

    #[test]
    fn entropy_stuck_matches_closed_form() {
        let eta = 0.1;
        let eps = 0.4 * (-20.0f64).exp();
        let traj = build_entropy_stuck(200.0, eps, eta, 600).unwrap();
        traj.validate().unwrap();
        let tau = 200;
        assert_eq!(traj.frozen_rounds.len(), 400);
        let w = &traj.iterates[tau];
        assert!(w.coords[0] <= eps / (4.0 * eta));
        for c in &traj.certificates[tau..] {
            assert_relative_eq!(c.slack, frozen_entropy_slack(w.coords[0], eta), max_relative = 1e-6);
        }
        let r = regret(&traj, None).unwrap();
        assert_relative_eq!(r.regret, entropy_stuck_regret(eta, tau, 600), max_relative = 1e-12);
        assert!(r.regret >= 150.0);
    }

    #[test]
    fn entropy_stuck_precondition() {
        let eta = 0.1;
        let err = build_entropy_stuck(100.0, 1e-9, eta, 600).unwrap_err();
        assert!(matches!(err, OmdError::Precondition(_)));
        assert!(build_entropy_stuck(400.0, 1.0, eta, 600).is_err());
    }

    #[test]
    fn subfloor_entropy_stuck_is_analytic() {
        let eta = 0.1;
        let eps = 0.4 * (-30.0f64).exp();
        let traj = build_entropy_stuck(300.0, eps, eta, 600).unwrap();
        assert!(traj.relaxed());
        assert!(traj.certificates[300..].iter().all(|c| c.method == CertMethod::Analytic));
    }

    #[test]
    fn dimension_stuck_examples() {
        let traj = build_dimension_stuck(&Regularizer::NegEntropy, 4, 0.01, 0.1, 1000).unwrap();
        traj.validate().unwrap();
        let r = regret(&traj, None).unwrap();
        assert_eq!(r.comparator.coords, vec![0.0, 0.0, 0.0, 1.0]);
        assert_eq!(r.comparator_loss, 0.0);
        assert_relative_eq!(r.regret, 750.0, epsilon = 1e-9);
        let err = build_dimension_stuck(&Regularizer::NegEntropy, 4, 0.009, 0.1, 10).unwrap_err();
        assert!(matches!(err, OmdError::Precondition(_)));
    }

    #[test]
    fn double_switch_is_linear() {
        let ds = build_double_switch(10.0, 0.1, 2000).unwrap();
        assert_eq!(ds.tau, 50);
        ds.trajectory.validate().unwrap();
        let w = &ds.trajectory.iterates[5 * ds.tau];
        assert!(w.coords[0] <= ds.eps / 0.4);
        let mid = &ds.trajectory.iterates[4 * ds.tau];
        assert_relative_eq!(mid.coords[0], 0.5, epsilon = 1e-12);
        let r = regret(&ds.trajectory, None).unwrap();
        assert!(r.regret > 1500.0, "{}", r.regret);
    }

    #[test]
    fn polytope_stuck_with_degenerate_losses() {
        let eta = 0.5;
        let hard =
            build_hard_polytope_with(1.0, eta, HardPolytopeOptions { block: Some(2), horizon_floor: None }).unwrap();
        let coords = crate::instances::LossSpec::gaussian_polytope_coords(2, eta);
        let row: Vec<f64> = coords
            .iter()
            .map(|c| match c {
                crate::instances::CoordDist::Constant(v) => *v,
                _ => 0.0,
            })
            .collect();
        let losses = vec![row; 20];
        let out = build_polytope_stuck(&hard, &losses, eta, 1.0, EventCheck::Full).unwrap();
        assert!(out.event);
        assert!(out.uncertified_rounds.is_empty());
        out.trajectory.validate().unwrap();
        let tau = 6;
        let first = out.pinned[0];
        for p in &out.pinned {
            assert_relative_eq!(*p, first, epsilon = 1e-12);
        }
        assert_eq!(out.trajectory.frozen_rounds.first(), Some(&(tau + 1)));
        let comp = &out.comparator;
        hard.domain.check_feasible(&comp.coords).unwrap();
        let loss: f64 = losses[0].iter().zip(&comp.coords).map(|(a, b)| a * b).sum();
        assert_eq!(loss, 0.0);
    }
}
