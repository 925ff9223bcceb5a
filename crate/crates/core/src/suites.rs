//! Randomized property suites over small instances.
//!
//! Each check takes an explicit instance and returns `Err(OmdError::Audit)` on a
//! violation, so the same checks serve seeded batch runs and property tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::balance::{
    entropy_gradient_ceiling, loss_balance, simplex_coordinate_bounds_check, simplex_pair_basis,
    trajectory_balance, trajectory_difference_check, loss_interval_sum,
};
use crate::error::{OmdError, Result};
use crate::geometry::{bregman, gradient, Domain, Point, Polytope, Regularizer};
use crate::numeric::{dot, splitmix64};
use crate::par::{self, Execution};
use crate::subproblem::{certify, exact_step, StepObjective};
use crate::trajectories::audits::{max_step_audit, not_too_far_audit};
use crate::trajectories::{run_exact, run_honest_inexact, NoisePolicy, Trajectory};

fn violation(msg: String) -> OmdError {
    OmdError::Audit(msg)
}

/// A run over the simplex with explicit losses.
#[derive(Debug, Clone)]
pub struct SimplexCase {
    pub reg: Regularizer,
    pub d: usize,
    pub eta: f64,
    pub losses: Vec<Vec<f64>>,
    pub w1: Vec<f64>,
}

impl SimplexCase {
    pub fn exact(&self) -> Result<Trajectory> {
        run_exact(&Domain::simplex(self.d)?, &self.reg, &self.losses, self.eta, &Point::new(self.w1.clone()))
    }

    pub fn honest(&self, eps: f64, seed: u64) -> Result<Trajectory> {
        run_honest_inexact(
            &Domain::simplex(self.d)?,
            &self.reg,
            &self.losses,
            self.eta,
            eps,
            &Point::new(self.w1.clone()),
            NoisePolicy::Saturating { seed },
        )
    }
}

/// Which regularizers a generator may draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegFamily {
    /// Entropy, log barrier, Tsallis and a stiff Euclidean.
    All,
    /// Entropy, log barrier, Tsallis.
    Barriers,
    /// Log barrier and Tsallis.
    PowerBarriers,
}

pub fn random_regularizer<R: Rng + ?Sized>(rng: &mut R, family: RegFamily, d: usize) -> Regularizer {
    let n = match family {
        RegFamily::All => 4,
        RegFamily::Barriers => 3,
        RegFamily::PowerBarriers => 2,
    };
    let pick = rng.random_range(0..n);
    let pick = if family == RegFamily::PowerBarriers { pick + 1 } else { pick };
    match pick {
        0 => Regularizer::NegEntropy,
        1 => Regularizer::LogBarrier,
        2 => Regularizer::Tsallis { q: rng.random_range(0.2..0.8) },
        _ => Regularizer::Euclidean { beta: 100.0 * d as f64 },
    }
}

fn random_interior<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..d).map(|_| rng.random_range(0.2..1.0)).collect();
    let s: f64 = raw.iter().sum();
    raw.iter().map(|x| x / s).collect()
}

/// Random case with `d <= max_d`, `T <= max_t`, uniform `[-1,1]` losses and step in `eta_range`.
pub fn random_case<R: Rng + ?Sized>(
    rng: &mut R,
    family: RegFamily,
    max_d: usize,
    max_t: usize,
    eta_range: (f64, f64),
    uniform_start: bool,
) -> SimplexCase {
    let d = rng.random_range(2..=max_d);
    let t = rng.random_range(1..=max_t);
    let reg = random_regularizer(rng, family, d);
    let eta = rng.random_range(eta_range.0..=eta_range.1);
    let losses = (0..t).map(|_| (0..d).map(|_| rng.random_range(-1.0..=1.0)).collect()).collect();
    let w1 = if uniform_start || matches!(reg, Regularizer::Euclidean { .. }) {
        vec![1.0 / d as f64; d]
    } else {
        random_interior(rng, d)
    };
    SimplexCase { reg, d, eta, losses, w1 }
}

/// `D(x,z) - D(x,y) - D(y,z) = <grad R(y) - grad R(z), x - y>` and `D >= 0`.
pub fn check_three_points(reg: &Regularizer, x: &Point, y: &Point, z: &Point) -> Result<()> {
    let dxz = bregman(reg, x, z)?;
    let dxy = bregman(reg, x, y)?;
    let dyz = bregman(reg, y, z)?;
    for (name, v) in [("D(x,z)", dxz), ("D(x,y)", dxy), ("D(y,z)", dyz)] {
        if v < -1e-14 {
            return Err(violation(format!("{name} = {v:.3e} is negative")));
        }
    }
    let gy = gradient(reg, y);
    let gz = gradient(reg, z);
    let diff: Vec<f64> = gy.iter().zip(&gz).map(|(a, b)| a - b).collect();
    let xy: Vec<f64> = x.coords.iter().zip(&y.coords).map(|(a, b)| a - b).collect();
    let rhs = dot(&diff, &xy);
    let lhs = dxz - dxy - dyz;
    let scale = 1.0 + dxz.abs() + dxy.abs() + dyz.abs() + rhs.abs();
    if (lhs - rhs).abs() > 1e-10 * scale {
        return Err(violation(format!("three-points identity: {lhs:.12e} vs {rhs:.12e}")));
    }
    Ok(())
}

fn random_kernel_vector<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let v = Domain::Simplex { dim: d }.project_tangent(&raw);
    let n: f64 = v.iter().map(|x| x.abs()).sum();
    v.iter().map(|x| x / n).collect()
}

fn random_times<R: Rng + ?Sized>(rng: &mut R, n: usize, k: usize) -> Vec<usize> {
    let mut t: Vec<usize> = (0..k).map(|_| rng.random_range(1..=n)).collect();
    t.sort_unstable();
    t
}

/// Exact runs satisfy `B^v(t1,t2) = eta <l_{t1:t2}, v>` to `1e-8`.
pub fn check_balance_identity<R: Rng + ?Sized>(case: &SimplexCase, rng: &mut R, probes: usize) -> Result<()> {
    let traj = case.exact()?;
    let n = traj.iterates.len();
    for _ in 0..probes {
        let v = random_kernel_vector(rng, case.d);
        let t = random_times(rng, n, 2);
        let b = trajectory_balance(&traj, &v, t[0], t[1])?;
        let expect = case.eta * dot(&loss_interval_sum(&case.losses, t[0], t[1]), &v);
        if (b - expect).abs() > 1e-8 {
            return Err(violation(format!(
                "balance identity on ({}, {}): {b:.12e} vs {expect:.12e}",
                t[0], t[1]
            )));
        }
    }
    Ok(())
}

/// `B(t1,t2) + B(t2,t3) = B(t1,t3)` on exact and saturating honest runs.
pub fn check_balance_additivity<R: Rng + ?Sized>(case: &SimplexCase, rng: &mut R, probes: usize) -> Result<()> {
    let eps = 10f64.powf(rng.random_range(-10.0..-5.0));
    let runs = [case.exact()?, case.honest(eps, rng.random())?];
    for traj in &runs {
        let n = traj.iterates.len();
        for _ in 0..probes {
            let v = random_kernel_vector(rng, case.d);
            let t = random_times(rng, n, 3);
            let ab = trajectory_balance(traj, &v, t[0], t[1])?;
            let bc = trajectory_balance(traj, &v, t[1], t[2])?;
            let ac = trajectory_balance(traj, &v, t[0], t[2])?;
            let scale = 1.0 + ab.abs() + bc.abs() + ac.abs();
            if (ab + bc - ac).abs() > 1e-9 * scale {
                return Err(violation(format!("additivity on {t:?}: {:.3e}", ab + bc - ac)));
            }
        }
    }
    Ok(())
}

/// Honest run versus exact run under a power barrier; the premise is met by
/// taking `psi` as the honest run's smallest coordinate on the vector's support.
///
/// Returns `Ok(false)` when the drawn epsilon violates `eps <= c2 psi / 2`.
pub fn check_trajectory_difference<R: Rng + ?Sized>(case: &SimplexCase, rng: &mut R, probes: usize) -> Result<bool> {
    let k = case.reg.constants().ok_or_else(|| OmdError::Unsupported("needs a barrier".into()))?;
    let eps = 10f64.powf(rng.random_range(-10.0..-6.0));
    let exact = case.exact()?;
    let approx = case.honest(eps, rng.random())?;
    let n = exact.iterates.len();
    for _ in 0..probes {
        let j = rng.random_range(0..case.d);
        let mut i = rng.random_range(0..case.d - 1);
        if i >= j {
            i += 1;
        }
        let mut v = vec![0.0; case.d];
        v[j] = 0.5;
        v[i] = -0.5;
        let t = random_times(rng, n, 2);
        let psi = (t[0]..=t[1])
            .map(|s| approx.iterates[s - 1].coords[i].min(approx.iterates[s - 1].coords[j]))
            .fold(f64::INFINITY, f64::min);
        if eps > k.c2 * psi / 2.0 {
            return Ok(false);
        }
        let (b_hat, bound) = trajectory_difference_check(&exact, &approx, &v, t[0], t[1], psi)?;
        if b_hat > bound + 1e-9 * (1.0 + bound.abs()) {
            return Err(violation(format!(
                "trajectory difference on ({}, {}): {b_hat:.12e} > {bound:.12e}",
                t[0], t[1]
            )));
        }
    }
    Ok(true)
}

/// Exact barrier runs from uniform respect the gradient ceiling with `k = eta alpha`.
pub fn check_gradient_ceiling(case: &SimplexCase) -> Result<()> {
    let traj = case.exact()?;
    let alpha = loss_balance(&case.losses, &simplex_pair_basis(case.d));
    let rep = entropy_gradient_ceiling(&traj, case.eta * alpha)?;
    if let Some(&(t, i, m)) = rep.violations.first() {
        return Err(violation(format!("gradient ceiling at t={t}, i={i}: margin {m:.3e}")));
    }
    Ok(())
}

/// Both drift implications hold with `k = max(B^i, 0)` against the best arm.
pub fn check_coordinate_bounds<R: Rng + ?Sized>(case: &SimplexCase, rng: &mut R, probes: usize) -> Result<()> {
    let traj = case.exact()?;
    let total = loss_interval_sum(&case.losses, 1, case.losses.len() + 1);
    let mut i_star = 0;
    for i in 1..case.d {
        if total[i] < total[i_star] {
            i_star = i;
        }
    }
    let n = traj.iterates.len();
    for _ in 0..probes {
        let i = rng.random_range(0..case.d);
        if i == i_star {
            continue;
        }
        let t = random_times(rng, n, 2);
        let mut v = vec![0.0; case.d];
        v[i_star] += 1.0;
        v[i] -= 1.0;
        let k = trajectory_balance(&traj, &v, t[0], t[1])?.max(0.0);
        if !simplex_coordinate_bounds_check(&traj, i, i_star, t[0], t[1], k)? {
            return Err(violation(format!("coordinate bounds fail for i={i}, t={t:?}, k={k:.3e}")));
        }
    }
    Ok(())
}

/// Max-step and not-too-far audits on exact and saturating honest runs.
pub fn check_movement_audits<R: Rng + ?Sized>(case: &SimplexCase, rng: &mut R) -> Result<()> {
    let eps = 10f64.powf(rng.random_range(-10.0..-4.0));
    for traj in [case.exact()?, case.honest(eps, rng.random())?] {
        for rep in [max_step_audit(&traj)?, not_too_far_audit(&traj)?] {
            if let Some(v) = rep.violations.first() {
                return Err(violation(format!(
                    "movement audit at t={}, i={}: {:.3e} vs {:.3e}",
                    v.t, v.i, v.observed, v.bound
                )));
            }
        }
    }
    Ok(())
}

/// One subproblem for the grid oracle.
#[derive(Debug, Clone)]
pub struct StepCase {
    pub dom: Domain,
    pub reg: Regularizer,
    pub eta: f64,
    pub loss: Vec<f64>,
    pub anchor: Vec<f64>,
}

/// `{w in R^4 : w1 + w2 = 1/2, w3 + w4 = 1/2}`.
pub fn square_polytope() -> Domain {
    let a = nalgebra::DMatrix::from_row_slice(2, 4, &[1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0]);
    let b = nalgebra::DVector::from_column_slice(&[0.5, 0.5]);
    Domain::Polytope(Polytope::new(a, b).expect("square polytope has full row rank"))
}

/// Simplex (d <= 4) for any regularizer, the square polytope for barriers.
pub fn random_step_case<R: Rng + ?Sized>(rng: &mut R) -> StepCase {
    let polytope = rng.random_bool(0.2);
    if polytope {
        let reg = random_regularizer(rng, RegFamily::Barriers, 4);
        let mut anchor = random_interior(rng, 2);
        anchor.extend(random_interior(rng, 2));
        anchor.iter_mut().for_each(|x| *x *= 0.5);
        return StepCase {
            dom: square_polytope(),
            reg,
            eta: rng.random_range(0.05..=2.0),
            loss: (0..4).map(|_| rng.random_range(-1.0..=1.0)).collect(),
            anchor,
        };
    }
    let d = rng.random_range(2..=4);
    let reg = match random_regularizer(rng, RegFamily::All, d) {
        Regularizer::Euclidean { .. } => Regularizer::Euclidean { beta: rng.random_range(0.5..4.0) },
        r => r,
    };
    StepCase {
        dom: Domain::Simplex { dim: d },
        reg,
        eta: rng.random_range(0.05..=2.0),
        loss: (0..d).map(|_| rng.random_range(-1.0..=1.0)).collect(),
        anchor: random_interior(rng, d),
    }
}

/// Blocks of coordinates whose sums are fixed, with their totals.
fn blocks(dom: &Domain) -> Vec<(Vec<usize>, f64)> {
    match dom {
        Domain::Simplex { dim } => vec![((0..*dim).collect(), 1.0)],
        _ => vec![(vec![0, 1], 0.5), (vec![2, 3], 0.5)],
    }
}

fn grid_block(k: usize, out: &mut Vec<Vec<usize>>, cur: &mut Vec<usize>, left: usize) {
    if cur.len() + 1 == k {
        cur.push(left);
        out.push(cur.clone());
        cur.pop();
        return;
    }
    for a in 0..=left {
        cur.push(a);
        grid_block(k, out, cur, left - a);
        cur.pop();
    }
}

/// Grid search at the given resolution followed by pairwise pattern search.
pub fn grid_minimum(case: &StepCase) -> Result<(Vec<f64>, f64)> {
    let anchor = Point::new(case.anchor.clone());
    let obj = StepObjective::new(case.eta, &case.loss, &anchor, &case.reg, &case.dom)?;
    let d = case.dom.dim();
    let barrier = case.reg.is_barrier();
    let value = |w: &[f64]| -> f64 {
        if barrier && w.iter().any(|&x| x <= 0.0) {
            return f64::INFINITY;
        }
        obj.value_unchecked(&Point::new(w.to_vec())).unwrap_or(f64::INFINITY)
    };
    let bl = blocks(&case.dom);
    let n = if d <= 3 && bl.len() == 1 { 1000 } else { 100 };
    let grids: Vec<Vec<Vec<usize>>> = bl
        .iter()
        .map(|(idx, _)| {
            let mut out = Vec::new();
            grid_block(idx.len(), &mut out, &mut Vec::new(), n);
            out
        })
        .collect();
    let mut best = (vec![0.0; d], f64::INFINITY);
    let mut w = vec![0.0; d];
    let mut stack = vec![0usize; bl.len()];
    loop {
        for (b, (idx, total)) in bl.iter().enumerate() {
            for (k, &j) in idx.iter().enumerate() {
                w[j] = grids[b][stack[b]][k] as f64 * total / n as f64;
            }
        }
        let v = value(&w);
        if v < best.1 {
            best = (w.clone(), v);
        }
        let mut b = 0;
        loop {
            if b == bl.len() {
                return Ok(refine(best, &bl, n, value));
            }
            stack[b] += 1;
            if stack[b] < grids[b].len() {
                break;
            }
            stack[b] = 0;
            b += 1;
        }
    }
}

fn refine<F: Fn(&[f64]) -> f64>(
    start: (Vec<f64>, f64),
    bl: &[(Vec<usize>, f64)],
    n: usize,
    value: F,
) -> (Vec<f64>, f64) {
    let (mut w, mut v) = start;
    let mut delta = 1.0 / n as f64;
    while delta > 1e-12 {
        let mut improved = true;
        while improved {
            improved = false;
            for (idx, _) in bl {
                for &i in idx {
                    for &j in idx {
                        if i == j || w[j] < delta {
                            continue;
                        }
                        let mut c = w.clone();
                        c[i] += delta;
                        c[j] -= delta;
                        let cv = value(&c);
                        if cv < v {
                            w = c;
                            v = cv;
                            improved = true;
                        }
                    }
                }
            }
        }
        delta *= 0.5;
    }
    (w, v)
}

/// The exact solver matches the grid oracle and every certificate's lower bound
/// sits below the oracle's minimum.
pub fn check_grid_oracle<R: Rng + ?Sized>(case: &StepCase, rng: &mut R) -> Result<()> {
    let anchor = Point::new(case.anchor.clone());
    let obj = StepObjective::new(case.eta, &case.loss, &anchor, &case.reg, &case.dom)?;
    let (w, cert) = exact_step(&obj)?;
    let (_, oracle) = grid_minimum(case)?;
    let value = obj.value_unchecked(&w)?;
    let tol = 1e-9 * (1.0 + oracle.abs());
    if value > oracle + tol {
        return Err(violation(format!("solver value {value:.15e} above oracle {oracle:.15e}")));
    }
    if value < oracle - 1e-7 * (1.0 + oracle.abs()) {
        return Err(violation(format!("oracle {oracle:.15e} far above solver {value:.15e}")));
    }
    if cert.min_lower_bound > oracle + tol {
        return Err(violation(format!("lower bound {:.15e} above oracle {oracle:.15e}", cert.min_lower_bound)));
    }
    // a random feasible candidate: its slack must cover its true suboptimality
    let mix: f64 = rng.random_range(0.0..1.0);
    let center = case.dom.center();
    let cand: Vec<f64> = w.coords.iter().zip(&center).map(|(a, c)| (1.0 - mix) * a + mix * c).collect();
    let (_, c2) = certify(&obj, &Point::new(cand), 1.0)?;
    if c2.value_at_candidate - oracle > c2.slack + tol {
        return Err(violation(format!(
            "slack {:.6e} below true gap {:.6e}",
            c2.slack,
            c2.value_at_candidate - oracle
        )));
    }
    Ok(())
}

/// The named suites of the property battery.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    ThreePoints,
    BalanceIdentity,
    BalanceAdditivity,
    TrajectoryDifference,
    GradientCeiling,
    CoordinateBounds,
    MovementAudits,
    GridOracle,
}

impl Suite {
    pub const ALL: [Suite; 8] = [
        Suite::ThreePoints,
        Suite::BalanceIdentity,
        Suite::BalanceAdditivity,
        Suite::TrajectoryDifference,
        Suite::GradientCeiling,
        Suite::CoordinateBounds,
        Suite::MovementAudits,
        Suite::GridOracle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::ThreePoints => "three_points",
            Suite::BalanceIdentity => "balance_identity",
            Suite::BalanceAdditivity => "balance_additivity",
            Suite::TrajectoryDifference => "trajectory_difference",
            Suite::GradientCeiling => "gradient_ceiling",
            Suite::CoordinateBounds => "coordinate_bounds",
            Suite::MovementAudits => "movement_audits",
            Suite::GridOracle => "grid_oracle",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SuiteOutcome {
    pub suite: Suite,
    pub cases: usize,
    /// `(case index, message)`.
    pub violations: Vec<(usize, String)>,
}

/// Draws premise-satisfying instances until one is checked; returns its verdict.
fn run_case(suite: Suite, rng: &mut ChaCha8Rng) -> Result<()> {
    match suite {
        Suite::ThreePoints => {
            let d = rng.random_range(2..=6);
            let reg = match random_regularizer(rng, RegFamily::All, d) {
                Regularizer::Euclidean { .. } => Regularizer::Euclidean { beta: rng.random_range(0.1..10.0) },
                r => r,
            };
            let pts: Vec<Point> = (0..3).map(|_| Point::new(random_interior(rng, d))).collect();
            check_three_points(&reg, &pts[0], &pts[1], &pts[2])
        }
        Suite::BalanceIdentity => {
            let case = random_case(rng, RegFamily::All, 5, 50, (0.01, 1.0), false);
            check_balance_identity(&case, rng, 10)
        }
        Suite::BalanceAdditivity => {
            let case = random_case(rng, RegFamily::Barriers, 5, 30, (0.01, 0.5), false);
            check_balance_additivity(&case, rng, 10)
        }
        Suite::TrajectoryDifference => loop {
            let case = random_case(rng, RegFamily::PowerBarriers, 4, 30, (0.01, 0.5), false);
            if check_trajectory_difference(&case, rng, 10)? {
                return Ok(());
            }
        },
        Suite::GradientCeiling => {
            let case = random_case(rng, RegFamily::Barriers, 5, 50, (0.01, 1.0), true);
            check_gradient_ceiling(&case)
        }
        Suite::CoordinateBounds => {
            let case = random_case(rng, RegFamily::Barriers, 5, 50, (0.01, 1.0), false);
            check_coordinate_bounds(&case, rng, 10)
        }
        Suite::MovementAudits => {
            let case = random_case(rng, RegFamily::Barriers, 5, 40, (0.005, 1.0 / 16.0), false);
            check_movement_audits(&case, rng)
        }
        Suite::GridOracle => check_grid_oracle(&random_step_case(rng), rng),
    }
}

/// Runs `cases` independent instances; case `k` uses seed `splitmix64(seed ^ splitmix64(k))`.
pub fn run_suite(suite: Suite, cases: usize, seed: u64, exec: Execution) -> SuiteOutcome {
    let ks: Vec<usize> = (0..cases).collect();
    let results = par::map(exec, &ks, |&k| {
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(k as u64)));
        run_case(suite, &mut rng)
    });
    let violations = results
        .into_iter()
        .enumerate()
        .filter_map(|(k, r)| r.err().map(|e| (k, e.to_string())))
        .collect();
    SuiteOutcome { suite, cases, violations }
}
