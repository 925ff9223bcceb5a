//! Validation and execution of scenarios.

use omdlab_core::balance::{balance_family, balance_path, loss_balance, psi_floor, stuck_criterion};
use omdlab_core::geometry::{bregman, Domain, Point, Regularizer};
use omdlab_core::instances::{
    build_hard_polytope_with, estimate_event_rate, hard_block_size, make_loss_stream, sample_until_event, CoordDist,
    EventCheck, HardPolytope, HardPolytopeOptions, LossSpec,
};
use omdlab_core::numeric::splitmix64;
use omdlab_core::subproblem::CERT_FLOOR;
use omdlab_core::thresholds::{
    barrier_robust_eps, dimension_stuck_threshold, entropy_robust_eps, entropy_stuck_threshold, ftrl_regret_bound,
    smooth_regret_bound, stochastic_robust_eps,
};
use omdlab_core::trajectories::{
    build_dimension_stuck, build_double_switch, build_entropy_stuck, build_polytope_stuck, build_smooth_stuck,
    entropy_stuck_regret, entropy_stuck_tau, regret, run_exact, run_ftrl_approx, run_honest_inexact, NoisePolicy,
    RegretReport, Trajectory,
};
use omdlab_core::{par, Execution, OmdError};

use crate::config::{
    Check, CheckKind, DomainSpec, EpsFormula, EpsSpec, LossConfig, RegSpec, Runner, Scenario, Target, TargetName,
};
use crate::error::{CliError, Result};

/// A validated scenario expanded into cells.
#[derive(Debug, Clone)]
pub struct Plan {
    pub scenario: Scenario,
    pub cells: Vec<CellSpec>,
    hard: Option<HardPolytope>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellSpec {
    pub runner: Runner,
    pub reg: RegSpec,
    pub eps_index: usize,
    /// Epsilon as written or evaluated, before the floor.
    pub eps_nominal: f64,
    pub eps: f64,
    pub seed: u64,
}

impl CellSpec {
    /// File-name friendly identifier, unique within a scenario.
    pub fn label(&self) -> String {
        let reg: String = self
            .reg
            .to_string()
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '.' { c } else { '_' })
            .collect();
        format!("{}-{}-eps{}-seed{}", self.runner, reg.trim_end_matches('_'), self.eps_index, self.seed)
    }
}

#[derive(Debug, Clone)]
pub struct PolytopeNotes {
    /// Whether the full hardness event holds for this stream.
    pub event: bool,
    pub tries: usize,
    /// Set when no event stream was found and a prefix-conditioned one was used instead.
    pub diagnostic: bool,
    pub uncertified_rounds: usize,
    pub max_pinned: f64,
    pub min_block_coord: f64,
}

#[derive(Debug, Clone)]
pub struct CellOutcome {
    pub spec: CellSpec,
    pub trajectory: Trajectory,
    pub regret: RegretReport,
    pub loss_alpha: f64,
    /// Running balance after each round.
    pub balance: Vec<f64>,
    pub tau: Option<usize>,
    pub polytope: Option<PolytopeNotes>,
}

impl CellOutcome {
    pub fn relaxed(&self) -> bool {
        self.spec.eps > self.spec.eps_nominal || self.trajectory.relaxed()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assertion {
    pub label: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub plan: Plan,
    pub cells: Vec<CellOutcome>,
    /// Scenario-level measurements such as event rates.
    pub metrics: Vec<(String, f64)>,
    pub assertions: Vec<Assertion>,
}

impl RunOutcome {
    pub fn passed(&self) -> bool {
        self.assertions.iter().all(|a| a.passed)
    }
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

fn core(context: impl Into<String>) -> impl FnOnce(OmdError) -> CliError {
    let context = context.into();
    move |source| CliError::Run { context, source }
}

fn param(s: &Scenario, key: &str) -> Result<f64> {
    s.params.get(key).copied().ok_or_else(|| invalid(format!("missing parameter {key:?} in [params]")))
}

fn count_param(s: &Scenario, key: &str) -> Result<usize> {
    let v = param(s, key)?;
    if !(v >= 1.0 && v.fract() == 0.0 && v < 1e12) {
        return Err(invalid(format!("parameter {key} must be a positive integer, got {v}")));
    }
    Ok(v as usize)
}

fn resolve_eps(s: &Scenario, reg: &Regularizer, spec: EpsSpec) -> Result<f64> {
    let d = s.domain.dim();
    let (eta, t) = (s.eta, s.horizon);
    let barrier = || {
        reg.constants()
            .ok_or_else(|| invalid(format!("epsilon formula needs a barrier regularizer, got {}", reg.name())))
    };
    let eps = match spec {
        EpsSpec::Value(x) => x,
        EpsSpec::Formula(f) => match f {
            EpsFormula::EntropyStuck => entropy_stuck_threshold(eta, t),
            EpsFormula::EntropyRobust => entropy_robust_eps(d, eta, t),
            EpsFormula::BarrierRobust => barrier_robust_eps(barrier()?, eta, t, d).map_err(core("barrier_robust"))?,
            EpsFormula::StochasticRobust => stochastic_robust_eps(param(s, "delta")?, d, t),
            EpsFormula::DimensionStuck => dimension_stuck_threshold(barrier()?, eta, d),
            EpsFormula::DoubleSwitch => 4.0 * eta * (-param(s, "k")? / 2.0).exp(),
        },
    };
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(invalid(format!("eps {spec} evaluates to {eps}, which is not a positive number")));
    }
    Ok(eps)
}

const PARAMS: [(&str, &[Runner]); 6] = [
    ("alpha", &[Runner::EntropyStuck]),
    ("k", &[Runner::DoubleSwitch]),
    ("delta", &[]),
    ("max_tries", &[Runner::PolytopeStuck]),
    ("diagnostic_tries", &[Runner::PolytopeStuck]),
    ("rate_samples", &[Runner::PolytopeStuck]),
];

fn check_params(s: &Scenario) -> Result<()> {
    for key in s.params.keys() {
        let Some((_, users)) = PARAMS.iter().find(|p| p.0 == key) else {
            let known: Vec<&str> = PARAMS.iter().map(|p| p.0).collect();
            return Err(invalid(format!("unknown parameter {key:?} (known: {})", known.join(", "))));
        };
        let formula_use = match key.as_str() {
            "delta" => s.eps.contains(&EpsSpec::Formula(EpsFormula::StochasticRobust)),
            "k" => s.eps.contains(&EpsSpec::Formula(EpsFormula::DoubleSwitch)),
            _ => false,
        };
        if !formula_use && !users.iter().any(|r| s.runners.contains(r)) {
            return Err(invalid(format!("parameter {key:?} is not used by any runner of this scenario")));
        }
    }
    Ok(())
}

fn check_losses(s: &Scenario, needs_stream: bool) -> Result<()> {
    let d = s.domain.dim();
    let bounded = |v: &[f64]| v.iter().all(|x| x.is_finite() && x.abs() <= 1.0);
    match &s.losses {
        LossConfig::Construction | LossConfig::GaussianPolytope if needs_stream => Err(invalid(format!(
            "runners {} need an explicit loss stream, not {}",
            s.runners.iter().filter(|r| !r.is_scripted()).map(|r| r.as_str()).collect::<Vec<_>>().join(", "),
            s.losses.kind()
        ))),
        LossConfig::Constant(v) => {
            if v.len() != d || !bounded(v) {
                return Err(invalid(format!("constant loss must have {d} entries in [-1, 1]")));
            }
            Ok(())
        }
        LossConfig::Switching(phases) => {
            for (len, v) in phases {
                if v.len() != d || !bounded(v) || *len == 0 {
                    return Err(invalid(format!("every phase needs a positive length and {d} entries in [-1, 1]")));
                }
            }
            let total: usize = phases.iter().map(|p| p.0).sum();
            if total != s.horizon {
                return Err(invalid(format!("phase lengths sum to {total}, horizon is {}", s.horizon)));
            }
            Ok(())
        }
        LossConfig::IidUniform { lo, hi } => {
            if !(-1.0 <= *lo && lo < hi && *hi <= 1.0) {
                return Err(invalid(format!("iid_uniform needs -1 <= lo < hi <= 1, got [{lo}, {hi}]")));
            }
            Ok(())
        }
        _ => Ok(()),
    }
}

fn need_two_point_entropy(s: &Scenario, reg: &RegSpec, runner: Runner) -> Result<()> {
    if s.domain != (DomainSpec::Simplex { dim: 2 }) || *reg != RegSpec::NegEntropy {
        return Err(invalid(format!("{runner} needs the two-point simplex with neg_entropy")));
    }
    Ok(())
}

fn check_runner(s: &Scenario, runner: Runner, reg: &RegSpec, r: &Regularizer, eps: f64) -> Result<()> {
    let (eta, t) = (s.eta, s.horizon as f64);
    match runner {
        Runner::Exact | Runner::HonestTight | Runner::HonestSaturating | Runner::Ftrl => {
            if matches!(s.domain, DomainSpec::HardPolytope { .. }) {
                return Err(invalid(format!("{runner} runs on simplex or interval domains")));
            }
            if runner != Runner::Exact && eps < CERT_FLOOR {
                return Err(invalid(format!(
                    "{runner}: eps = {eps:.3e} is below the certification floor {CERT_FLOOR:.0e}; set eps_floor"
                )));
            }
            if matches!(s.domain, DomainSpec::Interval { .. }) && r.is_barrier() {
                return Err(invalid(format!("{} is not defined on an interval", r.name())));
            }
        }
        Runner::SmoothStuck => {
            let DomainSpec::Interval { lo, .. } = s.domain else {
                return Err(invalid("adversarial_smooth_stuck needs an interval domain"));
            };
            if lo != 0.0 {
                return Err(invalid("adversarial_smooth_stuck needs an interval starting at 0"));
            }
            if !matches!(reg, RegSpec::Euclidean { .. }) {
                return Err(invalid("adversarial_smooth_stuck needs a euclidean regularizer"));
            }
        }
        Runner::EntropyStuck => {
            need_two_point_entropy(s, reg, runner)?;
            let alpha = param(s, "alpha")?;
            if alpha > t / 2.0 {
                return Err(invalid(format!("alpha <= T/2 fails: alpha = {alpha}, T/2 = {}", t / 2.0)));
            }
            let threshold = 4.0 * eta * (-eta * alpha).exp();
            if eps < threshold * (1.0 - 1e-12) {
                return Err(invalid(format!(
                    "eps >= 4 eta exp(-eta alpha) fails: eps = {eps:.6e}, threshold = {threshold:.6e}"
                )));
            }
        }
        Runner::DimensionStuck => {
            if !matches!(s.domain, DomainSpec::Simplex { .. }) {
                return Err(invalid("adversarial_dimension_stuck needs a simplex domain"));
            }
            let k = r.constants().ok_or_else(|| invalid("adversarial_dimension_stuck needs a barrier regularizer"))?;
            let threshold = dimension_stuck_threshold(k, eta, s.domain.dim());
            if eps < threshold * (1.0 - 1e-12) {
                return Err(invalid(format!(
                    "eps >= 4 eta^2 / (c1 d^nu) fails: eps = {eps:.6e}, threshold = {threshold:.6e}"
                )));
            }
        }
        Runner::DoubleSwitch => {
            need_two_point_entropy(s, reg, runner)?;
            let k = param(s, "k")?;
            if !(k > 0.0 && k <= t * eta / 20.0) {
                return Err(invalid(format!("0 < k <= T eta / 20 fails: k = {k}, T eta / 20 = {}", t * eta / 20.0)));
            }
            let fixed = 4.0 * eta * (-k / 2.0).exp();
            if (eps - fixed).abs() > 1e-12 * fixed {
                return Err(invalid(format!(
                    "adversarial_double_switch fixes eps = 4 eta exp(-k/2) = {fixed:.6e}; got {eps:.6e}"
                )));
            }
        }
        Runner::PolytopeStuck => {
            let DomainSpec::HardPolytope { m } = s.domain else {
                return Err(invalid("adversarial_polytope_stuck needs the hard_polytope domain"));
            };
            if *reg != RegSpec::NegEntropy {
                return Err(invalid("adversarial_polytope_stuck needs neg_entropy"));
            }
            if s.losses != LossConfig::GaussianPolytope {
                return Err(invalid("adversarial_polytope_stuck needs gaussian_polytope losses"));
            }
            if !(eps < 4.0 * eta) {
                return Err(invalid(format!("0 < eps < 4 eta fails: eps = {eps:.6e}, 4 eta = {}", 4.0 * eta)));
            }
            let rule = hard_block_size(eps, None);
            if rule != m {
                return Err(invalid(format!(
                    "block size m = max(8, ceil(16 ln(1/eps))) gives {rule} at eps = {eps:.6e}, domain has m = {m}"
                )));
            }
            for key in ["max_tries", "diagnostic_tries", "rate_samples"] {
                count_param(s, key)?;
            }
        }
    }
    Ok(())
}

fn check_targets(s: &Scenario) -> Result<()> {
    for c in &s.checks {
        if let Some(r) = c.scope {
            if !s.runners.contains(&r) {
                return Err(invalid(format!("check {} is scoped to {r}, which the scenario does not run", c.label())));
            }
        }
        let target = match c.kind {
            CheckKind::RegretAtMost { target, fraction } => {
                if !(fraction > 0.0 && fraction <= 1.0) {
                    return Err(invalid(format!("check {}: fraction must lie in (0, 1]", c.label())));
                }
                Some(target)
            }
            CheckKind::RegretAtLeast { target, .. }
            | CheckKind::MeanRegretAtLeast { target, .. }
            | CheckKind::MinCoordAtLeast { target } => Some(target),
            _ => None,
        };
        let ok = match (c.kind, target) {
            (CheckKind::MinCoordAtLeast { .. }, Some(Target::Named(n))) => n == TargetName::Psi,
            (_, Some(Target::Named(TargetName::Psi))) => false,
            (CheckKind::RegretAtMost { .. }, Some(Target::Named(n))) => {
                !matches!(n, TargetName::StuckClosedForm | TargetName::PolytopeRate)
            }
            _ => true,
        };
        if !ok {
            return Err(invalid(format!("check {} uses a target that does not apply to it", c.label())));
        }
    }
    Ok(())
}

pub fn validate(s: &Scenario) -> Result<Plan> {
    if s.name.is_empty() || s.name.contains(['/', '\\']) {
        return Err(invalid("scenario name must be non-empty and free of path separators"));
    }
    if s.seeds.is_empty() {
        return Err(invalid("seed list is empty"));
    }
    if s.runners.is_empty() || s.eps.is_empty() || s.regularizers.is_empty() {
        return Err(invalid("runners, eps and regularizer kinds must be non-empty"));
    }
    if s.horizon == 0 {
        return Err(invalid("horizon must be positive"));
    }
    if !(s.eta > 0.0 && s.eta.is_finite()) {
        return Err(invalid(format!("eta must be positive, got {}", s.eta)));
    }
    if let Some(f) = s.eps_floor {
        if !(f > 0.0 && f.is_finite()) {
            return Err(invalid(format!("eps_floor must be positive, got {f}")));
        }
    }
    match s.domain {
        DomainSpec::Simplex { dim } if dim < 2 => return Err(invalid("simplex dimension must be at least 2")),
        DomainSpec::Interval { lo, hi } if !(lo < hi && lo.is_finite() && hi.is_finite()) => {
            return Err(invalid("interval needs lo < hi"))
        }
        DomainSpec::HardPolytope { m: 0 } => return Err(invalid("block size m must be positive")),
        DomainSpec::HardPolytope { .. } if s.runners.iter().any(|r| *r != Runner::PolytopeStuck) => {
            return Err(invalid("the hard_polytope domain is only used by adversarial_polytope_stuck"))
        }
        _ => {}
    }
    check_params(s)?;
    check_losses(s, s.runners.iter().any(|r| !r.is_scripted() && *r != Runner::PolytopeStuck))?;
    check_targets(s)?;

    let mut cells = Vec::new();
    for reg in &s.regularizers {
        let r = reg.build().map_err(|e| invalid(e.to_string()))?;
        for (eps_index, spec) in s.eps.iter().enumerate() {
            let eps_nominal = resolve_eps(s, &r, *spec)?;
            let eps = s.eps_floor.map_or(eps_nominal, |f| eps_nominal.max(f));
            for &runner in &s.runners {
                check_runner(s, runner, reg, &r, eps)?;
                let seeds = if runner.is_scripted() { &s.seeds[..1] } else { &s.seeds[..] };
                for &seed in seeds {
                    cells.push(CellSpec { runner, reg: *reg, eps_index, eps_nominal, eps, seed });
                }
            }
        }
    }
    let hard = match s.domain {
        DomainSpec::HardPolytope { m } => Some(
            build_hard_polytope_with(
                cells[0].eps,
                s.eta,
                HardPolytopeOptions { block: Some(m), horizon_floor: None },
            )
            .map_err(|e| invalid(e.to_string()))?,
        ),
        _ => None,
    };
    Ok(Plan { scenario: s.clone(), cells, hard })
}

impl Plan {
    fn domain(&self) -> Result<Domain> {
        match (&self.hard, self.scenario.domain) {
            (Some(h), _) => Ok(h.domain.clone()),
            (None, DomainSpec::Simplex { dim }) => Domain::simplex(dim).map_err(core("domain")),
            (None, DomainSpec::Interval { lo, hi }) => Domain::interval(lo, hi).map_err(core("domain")),
            (None, DomainSpec::HardPolytope { .. }) => unreachable!("hard polytope is built during validation"),
        }
    }

    fn loss_spec(&self) -> Result<LossSpec> {
        let d = self.scenario.domain.dim();
        Ok(match &self.scenario.losses {
            LossConfig::Constant(v) => LossSpec::Constant(v.clone()),
            LossConfig::Switching(p) => LossSpec::Switching(p.clone()),
            LossConfig::IidUniform { lo, hi } => LossSpec::Iid(vec![CoordDist::Uniform { lo: *lo, hi: *hi }; d]),
            LossConfig::GaussianPolytope => {
                let DomainSpec::HardPolytope { m } = self.scenario.domain else {
                    return Err(invalid("gaussian_polytope losses need the hard_polytope domain"));
                };
                LossSpec::GaussianPolytope { m, eta: self.scenario.eta, degenerate: false }
            }
            LossConfig::Construction => return Err(invalid("this runner needs an explicit loss stream")),
        })
    }
}

/// Seed of the solver noise, kept apart from the loss stream's seed.
fn noise_seed(seed: u64) -> u64 {
    splitmix64(seed ^ 0x6e6f_6973_6500_0000)
}

fn run_polytope(plan: &Plan, cell: &CellSpec) -> Result<(Trajectory, PolytopeNotes, Point)> {
    let s = &plan.scenario;
    let hard = plan.hard.as_ref().expect("validated");
    let spec = plan.loss_spec()?;
    let ctx = cell.label();
    let full = sample_until_event(&spec, s.horizon, count_param(s, "max_tries")?, cell.seed, EventCheck::Full);
    let (stream, tries, check) = match full {
        Ok((stream, tries)) => (stream, tries, EventCheck::Full),
        Err(OmdError::EventExhausted { .. }) => {
            let (stream, tries) =
                sample_until_event(&spec, s.horizon, count_param(s, "diagnostic_tries")?, cell.seed, EventCheck::PrefixOnly)
                    .map_err(core(ctx.clone()))?;
            (stream, tries, EventCheck::PrefixOnly)
        }
        Err(e) => return Err(core(ctx)(e)),
    };
    let out = build_polytope_stuck(hard, &stream.realized, s.eta, cell.eps, check).map_err(core(ctx))?;
    let notes = PolytopeNotes {
        event: out.event,
        tries,
        diagnostic: check == EventCheck::PrefixOnly,
        uncertified_rounds: out.uncertified_rounds.len(),
        max_pinned: out.pinned.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        min_block_coord: out.min_block_coord,
    };
    Ok((out.trajectory, notes, out.comparator))
}

fn run_cell(plan: &Plan, cell: &CellSpec) -> Result<CellOutcome> {
    let s = &plan.scenario;
    let ctx = cell.label();
    let reg = cell.reg.build().map_err(core(ctx.clone()))?;
    let dom = plan.domain()?;
    let (eta, t, eps) = (s.eta, s.horizon, cell.eps);
    let stream = || -> Result<Vec<Vec<f64>>> {
        Ok(make_loss_stream(&plan.loss_spec()?, t, cell.seed).map_err(core(ctx.clone()))?.realized)
    };
    let start = || Point::new(dom.center());
    let noise = NoisePolicy::Saturating { seed: noise_seed(cell.seed) };
    let (mut tau, mut polytope, mut comparator) = (None, None, None);
    let traj = match cell.runner {
        Runner::Exact => run_exact(&dom, &reg, &stream()?, eta, &start()),
        Runner::HonestTight => run_honest_inexact(&dom, &reg, &stream()?, eta, eps, &start(), NoisePolicy::Tight),
        Runner::HonestSaturating => run_honest_inexact(&dom, &reg, &stream()?, eta, eps, &start(), noise),
        Runner::Ftrl => run_ftrl_approx(&dom, &reg, &stream()?, eta, eps, noise),
        Runner::SmoothStuck => {
            let (DomainSpec::Interval { hi, .. }, RegSpec::Euclidean { beta }) = (s.domain, cell.reg) else {
                unreachable!("validated")
            };
            build_smooth_stuck(hi, beta, eps, eta, t)
        }
        Runner::EntropyStuck => {
            tau = Some(entropy_stuck_tau(eta, eps));
            build_entropy_stuck(param(s, "alpha")?, eps, eta, t)
        }
        Runner::DimensionStuck => build_dimension_stuck(&reg, s.domain.dim(), eps, eta, t),
        Runner::DoubleSwitch => build_double_switch(param(s, "k")?, eta, t).map(|ds| {
            tau = Some(ds.tau);
            ds.trajectory
        }),
        Runner::PolytopeStuck => {
            let (traj, notes, comp) = run_polytope(plan, cell)?;
            polytope = Some(notes);
            comparator = Some(comp);
            Ok(traj)
        }
    }
    .map_err(core(ctx.clone()))?;
    let report = regret(&traj, comparator.as_ref()).map_err(core(ctx))?;
    let loss_alpha = loss_balance(&traj.losses, &balance_family(&traj.dom));
    let balance = balance_path(&traj);
    Ok(CellOutcome { spec: cell.clone(), trajectory: traj, regret: report, loss_alpha, balance, tau, polytope })
}

pub fn execute(plan: Plan, exec: Execution) -> Result<RunOutcome> {
    let cells: Vec<CellOutcome> =
        par::map(exec, &plan.cells, |c| run_cell(&plan, c)).into_iter().collect::<Result<_>>()?;
    let mut metrics = Vec::new();
    if plan.scenario.runners.contains(&Runner::PolytopeStuck) {
        let s = &plan.scenario;
        let spec = plan.loss_spec()?;
        let n = count_param(s, "rate_samples")?;
        let seed = splitmix64(s.seeds[0] ^ 0x7261_7465);
        for (name, check) in [("event_rate", EventCheck::Full), ("prefix_event_rate", EventCheck::PrefixOnly)] {
            let rate = estimate_event_rate(&spec, s.horizon, n, seed, check, exec).map_err(core(name))?;
            metrics.push((name.to_string(), rate));
        }
    }
    let assertions = plan.scenario.checks.iter().map(|c| evaluate(c, &plan, &cells, &metrics)).collect();
    Ok(RunOutcome { plan, cells, metrics, assertions })
}

/// Validates and executes. `jobs` sizes a dedicated worker pool; `Some(1)` runs sequentially.
pub fn run(s: &Scenario, jobs: Option<usize>) -> Result<RunOutcome> {
    let plan = validate(s)?;
    if jobs == Some(1) {
        return execute(plan, Execution::Sequential);
    }
    #[cfg(feature = "parallel")]
    if let Some(n) = jobs {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| invalid(format!("cannot start {n} workers: {e}")))?;
        return pool.install(|| execute(plan, Execution::Parallel));
    }
    execute(plan, Execution::Parallel)
}

// ---- checks ----

/// `(regret used by the check, reference value)` for one cell.
fn target_value(target: Target, cell: &CellOutcome, s: &Scenario) -> omdlab_core::Result<(f64, f64)> {
    let traj = &cell.trajectory;
    let own = cell.regret.regret;
    let name = match target {
        Target::Value(x) => return Ok((own, x)),
        Target::Named(n) => n,
    };
    let (eta, t) = (traj.eta, traj.horizon());
    let w1 = &traj.iterates[0];
    let w_star = &cell.regret.comparator;
    Ok(match name {
        TargetName::Smooth => {
            let (DomainSpec::Interval { lo, hi }, RegSpec::Euclidean { beta }) = (s.domain, cell.spec.reg) else {
                return Err(OmdError::Unsupported("smooth_bound needs a euclidean interval scenario".into()));
            };
            let div = bregman(&traj.reg, w_star, w1)?;
            (own, smooth_regret_bound(div, eta, t, hi - lo, beta, cell.spec.eps))
        }
        TargetName::Robust => {
            let smooth = traj.reg.constants().is_some_and(|k| k.nu > 1.0);
            let u = if smooth {
                let a = 1.0 / t as f64;
                Point::new(w_star.coords.iter().zip(&w1.coords).map(|(x, y)| (1.0 - a) * x + a * y).collect())
            } else {
                w_star.clone()
            };
            let r = if smooth { regret(traj, Some(&u))?.regret } else { own };
            (r, bregman(&traj.reg, &u, w1)? / eta + 8.0 * eta * t as f64)
        }
        TargetName::Stochastic => (own, 8.0 * (t as f64 * (traj.dim() as f64).ln()).sqrt()),
        TargetName::Ftrl => {
            let total = |w: &Point| w.coords.iter().map(|x| traj.reg.r(*x)).sum::<f64>();
            (own, ftrl_regret_bound(total(w_star) - total(w1), eta, cell.spec.eps, t))
        }
        TargetName::StuckClosedForm => {
            let tau = cell.tau.ok_or_else(|| OmdError::Unsupported("no stuck construction in this cell".into()))?;
            (own, entropy_stuck_regret(eta, tau, t))
        }
        TargetName::PolytopeRate => {
            let d = traj.dim() as f64;
            (own, t as f64 * (eta * d).sqrt() / d)
        }
        TargetName::Psi => {
            let k = traj.reg.constants().ok_or_else(|| OmdError::Unsupported("psi needs a barrier".into()))?;
            (traj.min_coord(), psi_floor(k.nu, k.c1, eta, t, traj.dim())?)
        }
    })
}

fn fail(label: String, detail: impl Into<String>) -> Assertion {
    Assertion { label, passed: false, detail: detail.into() }
}

fn evaluate(check: &Check, plan: &Plan, cells: &[CellOutcome], metrics: &[(String, f64)]) -> Assertion {
    let label = check.label();
    let scoped: Vec<&CellOutcome> =
        cells.iter().filter(|c| check.scope.is_none_or(|r| c.spec.runner == r)).collect();
    if scoped.is_empty() {
        return fail(label, "no cells in scope");
    }
    let s = &plan.scenario;
    let n = scoped.len();
    let values = |target: Target| -> std::result::Result<Vec<(f64, f64)>, String> {
        scoped.iter().map(|c| target_value(target, c, s).map_err(|e| format!("{}: {e}", c.spec.label()))).collect()
    };
    let (passed, detail) = match check.kind {
        CheckKind::RegretEquals { value, tol } => {
            let worst = scoped.iter().map(|c| (c.regret.regret - value).abs()).fold(0.0, f64::max);
            (worst <= tol, format!("max |regret - {value}| = {worst:.3e} over {n} cell(s)"))
        }
        CheckKind::SlackEquals { value, tol } => {
            let worst = scoped
                .iter()
                .flat_map(|c| c.trajectory.certificates.iter())
                .map(|k| (k.slack - value).abs())
                .fold(0.0, f64::max);
            (worst <= tol, format!("max |slack - {value}| = {worst:.3e}"))
        }
        CheckKind::RegretAtMost { target, fraction } => match values(target) {
            Err(e) => (false, e),
            Ok(v) => {
                let ok = v.iter().filter(|(r, b)| r <= b).count();
                let need = (fraction * n as f64 - 1e-9).ceil() as usize;
                let worst = v.iter().map(|(r, b)| r - b).fold(f64::NEG_INFINITY, f64::max);
                let bound = v.iter().map(|x| x.1).fold(f64::INFINITY, f64::min);
                (
                    ok >= need,
                    format!("{ok}/{n} cells within bound (need {need}); smallest bound {bound:.6}, worst regret - bound {worst:.4}"),
                )
            }
        },
        CheckKind::RegretAtLeast { target, factor } => match values(target) {
            Err(e) => (false, e),
            Ok(v) => {
                let ok = v.iter().filter(|(r, b)| *r >= factor * b).count();
                let low = v.iter().map(|x| x.0).fold(f64::INFINITY, f64::min);
                let need = v.iter().map(|x| factor * x.1).fold(f64::NEG_INFINITY, f64::max);
                (ok == n, format!("{ok}/{n} cells; lowest regret {low:.6}, required {need:.6}"))
            }
        },
        CheckKind::MeanRegretAtLeast { target, factor } => match values(target) {
            Err(e) => (false, e),
            Ok(v) => {
                let mean = v.iter().map(|x| x.0).sum::<f64>() / n as f64;
                let need = factor * v[0].1;
                (mean >= need, format!("mean regret {mean:.6} over {n} cells, required {need:.6}"))
            }
        },
        CheckKind::MinCoordAtLeast { target } => match values(target) {
            Err(e) => (false, e),
            Ok(v) => {
                let ok = v.iter().filter(|(m, f)| m >= f).count();
                let low = v.iter().map(|x| x.0).fold(f64::INFINITY, f64::min);
                let floor = v.iter().map(|x| x.1).fold(f64::NEG_INFINITY, f64::max);
                (ok == n, format!("{ok}/{n} cells; smallest coordinate {low:.6e}, largest floor {floor:.6e}"))
            }
        },
        CheckKind::Certified => {
            let mut bad = Vec::new();
            for c in &scoped {
                if let Err(e) = c.trajectory.validate() {
                    bad.push(format!("{}: {e}", c.spec.label()));
                } else if let Some(p) = c.polytope.as_ref().filter(|p| p.uncertified_rounds > 0) {
                    bad.push(format!("{}: {} uncertified round(s)", c.spec.label(), p.uncertified_rounds));
                }
            }
            let rounds: usize = scoped.iter().map(|c| c.trajectory.horizon()).sum();
            match bad.first() {
                None => (true, format!("{rounds} rounds over {n} cell(s) certified")),
                Some(first) => (false, format!("{} of {n} cells fail; first: {first}", bad.len())),
            }
        }
        CheckKind::FrozenStuck => {
            let (mut total, mut bad) = (0usize, 0usize);
            for c in &scoped {
                let traj = &c.trajectory;
                for &round in &traj.frozen_rounds {
                    total += 1;
                    let w = traj.iterates[round - 1].min_coord();
                    if !stuck_criterion(&traj.reg, w, traj.eta, c.spec.eps) {
                        bad += 1;
                    }
                }
            }
            (total > 0 && bad == 0, format!("{bad} of {total} frozen rounds fail the stuck criterion"))
        }
        CheckKind::PolytopeShape => {
            let notes: Vec<&PolytopeNotes> = scoped.iter().filter_map(|c| c.polytope.as_ref()).collect();
            if notes.len() != n {
                (false, "cells without a polytope construction".to_string())
            } else {
                let DomainSpec::HardPolytope { m } = s.domain else { unreachable!("validated") };
                let d = (5 * m + 2) as f64;
                let cap = -1.0 / d + (-(m as f64) / 8.0).exp();
                let events = notes.iter().filter(|p| p.event).count();
                let block = notes.iter().map(|p| p.min_block_coord).fold(f64::INFINITY, f64::min);
                let pinned = notes.iter().map(|p| p.max_pinned).fold(f64::NEG_INFINITY, f64::max);
                let shape = block >= 1.0 / d && pinned <= cap;
                (
                    shape && events == n,
                    format!(
                        "{events}/{n} streams satisfy the hardness event; min block coordinate {block:.6} (need >= {:.6}), max pinned coefficient {pinned:.6} (need <= {cap:.6})",
                        1.0 / d
                    ),
                )
            }
        }
        CheckKind::EventRateAtLeast { rate } => match metrics.iter().find(|m| m.0 == "event_rate") {
            Some((_, r)) => (*r >= rate, format!("empirical event rate {r:.3e}, required {rate}")),
            None => (false, "no event rate was measured".to_string()),
        },
    };
    Assertion { label, passed, detail }
}
