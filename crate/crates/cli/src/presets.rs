//! Built-in scenarios reproducing the desk-scale experiments.

use std::collections::BTreeMap;

use crate::config::{
    Check, CheckKind, DomainSpec, EpsFormula, EpsSpec, LossConfig, OutputKind, RegSpec, Runner, Scenario, Target,
    TargetName,
};
use crate::error::{CliError, Result};

pub const PRESETS: [(&str, &str); 10] = [
    ("smooth-lb", "Euclidean iterate frozen at the interval midpoint: regret T/4 from a valid inexact trajectory"),
    ("smooth-ub", "honest tight runs on [0, 1] with uniform losses stay under the smooth inexact bound"),
    ("entropy-lb", "two-arm entropy trajectory frozen after tau rounds: linear regret at eps = 4 eta e^(-eta T/3)"),
    ("entropy-ub", "saturating entropy noise at the robust epsilon (clamped to 1e-12) against switching losses"),
    ("barrier-ub", "log-barrier and tsallis(0.5) under saturating noise keep every coordinate above psi"),
    ("stochastic-ub", "entropy with saturating noise under uniform losses within 8 sqrt(T log d)"),
    ("polytope-lb", "hard polytope with Gaussian losses conditioned on the hardness event"),
    ("dimension-lb", "frozen-uniform entropy trajectory under constant losses: regret 3T/4 at d = 4"),
    ("double-switch", "two-arm entropy trajectory frozen twice around a double loss switch"),
    ("ftrl", "approximate FTRL at eps = 1e-4 next to the stuck OMD construction at the same eps"),
];

pub fn preset_names() -> Vec<&'static str> {
    PRESETS.iter().map(|p| p.0).collect()
}

fn base(name: &str, runner: Runner, domain: DomainSpec, reg: RegSpec) -> Scenario {
    Scenario {
        name: name.to_string(),
        runners: vec![runner],
        seeds: vec![0],
        horizon: 1,
        eta: 0.1,
        eps: Vec::new(),
        eps_floor: None,
        outputs: OutputKind::ALL.to_vec(),
        domain,
        regularizers: vec![reg],
        losses: LossConfig::Construction,
        params: BTreeMap::new(),
        checks: Vec::new(),
    }
}

/// Rotating phases of equal length: in phase `k` every arm but `k mod d` costs 1.
fn rotating_losses(d: usize, phases: usize, horizon: usize) -> LossConfig {
    let len = horizon / phases;
    LossConfig::Switching(
        (0..phases)
            .map(|k| {
                let mut v = vec![1.0; d];
                v[k % d] = 0.0;
                let n = if k + 1 == phases { horizon - len * (phases - 1) } else { len };
                (n, v)
            })
            .collect(),
    )
}

fn named(n: TargetName) -> Target {
    Target::Named(n)
}

pub fn preset(name: &str) -> Result<Scenario> {
    use CheckKind::*;
    let simplex = |dim| DomainSpec::Simplex { dim };
    let twenty: Vec<u64> = (0..20).collect();
    let s = match name {
        "smooth-lb" => {
            let mut s = base(name, Runner::SmoothStuck, DomainSpec::Interval { lo: 0.0, hi: 1.0 }, RegSpec::Euclidean {
                beta: 1.0,
            });
            s.horizon = 1000;
            s.eta = 0.2;
            s.eps = vec![EpsSpec::Value(0.005)];
            s.checks = vec![
                Check::all(RegretEquals { value: 250.0, tol: 1e-6 }),
                Check::all(SlackEquals { value: 0.005, tol: 1e-9 }),
                Check::all(Certified),
            ];
            s
        }
        "smooth-ub" => {
            let mut s = base(name, Runner::HonestTight, DomainSpec::Interval { lo: 0.0, hi: 1.0 }, RegSpec::Euclidean {
                beta: 1.0,
            });
            s.horizon = 4096;
            s.eta = 1.0 / 64.0;
            s.seeds = twenty;
            s.eps = vec![EpsSpec::Value(1e-6), EpsSpec::Value(1e-8)];
            s.losses = LossConfig::IidUniform { lo: -1.0, hi: 1.0 };
            s.checks = vec![
                Check::all(RegretAtMost { target: named(TargetName::Smooth), fraction: 1.0 }),
                Check::all(Certified),
            ];
            s
        }
        "entropy-lb" => {
            let mut s = base(name, Runner::EntropyStuck, simplex(2), RegSpec::NegEntropy);
            s.horizon = 600;
            s.eps = vec![EpsSpec::Formula(EpsFormula::EntropyStuck)];
            s.params.insert("alpha".into(), 200.0);
            s.checks = vec![
                Check::all(RegretAtLeast { target: named(TargetName::StuckClosedForm), factor: 0.9 }),
                Check::all(RegretAtLeast { target: Target::Value(150.0), factor: 1.0 }),
                Check::all(FrozenStuck),
                Check::all(Certified),
            ];
            s
        }
        "entropy-ub" => {
            let mut s = base(name, Runner::HonestSaturating, simplex(4), RegSpec::NegEntropy);
            s.horizon = 400;
            s.eta = 0.05;
            s.seeds = twenty;
            s.eps = vec![EpsSpec::Formula(EpsFormula::EntropyRobust)];
            s.eps_floor = Some(1e-12);
            s.losses = rotating_losses(4, 8, 400);
            s.checks = vec![
                Check::all(RegretAtMost { target: named(TargetName::Robust), fraction: 1.0 }),
                Check::all(Certified),
            ];
            s
        }
        "barrier-ub" => {
            let mut s = base(name, Runner::HonestSaturating, simplex(4), RegSpec::LogBarrier);
            s.regularizers.push(RegSpec::Tsallis { q: 0.5 });
            s.horizon = 2000;
            s.eta = 0.05;
            s.seeds = twenty;
            s.eps = vec![EpsSpec::Formula(EpsFormula::BarrierRobust)];
            s.eps_floor = Some(1e-12);
            s.losses = rotating_losses(4, 8, 2000);
            s.checks = vec![
                Check::all(MinCoordAtLeast { target: named(TargetName::Psi) }),
                Check::all(RegretAtMost { target: named(TargetName::Robust), fraction: 1.0 }),
                Check::all(Certified),
            ];
            s
        }
        "stochastic-ub" => {
            let mut s = base(name, Runner::HonestSaturating, simplex(4), RegSpec::NegEntropy);
            s.horizon = 4096;
            s.eta = (4f64.ln() / 4096.0).sqrt();
            s.seeds = twenty;
            s.eps = vec![EpsSpec::Formula(EpsFormula::StochasticRobust)];
            s.eps_floor = Some(1e-12);
            s.params.insert("delta".into(), 0.05);
            s.losses = LossConfig::IidUniform { lo: -1.0, hi: 1.0 };
            s.checks = vec![
                Check::all(RegretAtMost { target: named(TargetName::Stochastic), fraction: 0.95 }),
                Check::all(Certified),
            ];
            s
        }
        "polytope-lb" => {
            let mut s = base(name, Runner::PolytopeStuck, DomainSpec::HardPolytope { m: 16 }, RegSpec::NegEntropy);
            s.horizon = 3000;
            s.seeds = twenty;
            s.eps = vec![EpsSpec::Value((-1f64).exp())];
            s.losses = LossConfig::GaussianPolytope;
            s.params.insert("max_tries".into(), 10_000.0);
            s.params.insert("diagnostic_tries".into(), 400_000.0);
            s.params.insert("rate_samples".into(), 20_000.0);
            s.checks = vec![
                Check::all(EventRateAtLeast { rate: 0.01 }),
                Check::all(PolytopeShape),
                Check::all(Certified),
                Check::all(MeanRegretAtLeast { target: named(TargetName::PolytopeRate), factor: 0.25 }),
            ];
            s
        }
        "dimension-lb" => {
            let mut s = base(name, Runner::DimensionStuck, simplex(4), RegSpec::NegEntropy);
            s.horizon = 1000;
            s.eps = vec![EpsSpec::Value(0.01)];
            s.checks = vec![Check::all(RegretEquals { value: 750.0, tol: 1e-9 }), Check::all(Certified)];
            s
        }
        "double-switch" => {
            let mut s = base(name, Runner::DoubleSwitch, simplex(2), RegSpec::NegEntropy);
            s.horizon = 2000;
            s.eps = vec![EpsSpec::Formula(EpsFormula::DoubleSwitch)];
            s.params.insert("k".into(), 10.0);
            s.checks = vec![
                Check::all(Certified),
                Check::all(FrozenStuck),
                Check::all(RegretAtLeast { target: Target::Value(500.0), factor: 1.0 }),
            ];
            s
        }
        "ftrl" => {
            let mut s = base(name, Runner::Ftrl, simplex(2), RegSpec::NegEntropy);
            s.runners.push(Runner::EntropyStuck);
            s.horizon = 1000;
            s.seeds = twenty;
            s.eps = vec![EpsSpec::Value(1e-4)];
            s.losses = LossConfig::Switching(vec![(200, vec![1.0, 0.0]), (800, vec![0.0, 1.0])]);
            s.params.insert("alpha".into(), 500.0);
            s.checks = vec![
                Check::only(RegretAtMost { target: named(TargetName::Ftrl), fraction: 1.0 }, Runner::Ftrl),
                Check::all(Certified),
                Check::only(RegretAtLeast { target: Target::Value(250.0), factor: 1.0 }, Runner::EntropyStuck),
            ];
            s
        }
        _ => {
            return Err(CliError::UnknownPreset { name: name.to_string(), valid: preset_names().join(", ") });
        }
    };
    Ok(s)
}
