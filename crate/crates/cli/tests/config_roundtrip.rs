use std::collections::BTreeMap;

use omdlab::config::{
    Check, CheckKind, DomainSpec, EpsFormula, EpsSpec, LossConfig, OutputKind, RegSpec, Runner, Target, TargetName,
};
use omdlab::Scenario;
use proptest::prelude::*;

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![any::<f64>().prop_filter("finite", |x| x.is_finite()), -1.0f64..1.0]
}

fn pick<T: Copy + std::fmt::Debug + 'static>(all: &'static [T]) -> impl Strategy<Value = T> {
    (0..all.len()).prop_map(move |i| all[i])
}

fn target() -> impl Strategy<Value = Target> {
    prop_oneof![finite().prop_map(Target::Value), pick(TargetName::ALL).prop_map(Target::Named)]
}

fn check_kind() -> impl Strategy<Value = CheckKind> {
    prop_oneof![
        (finite(), finite()).prop_map(|(value, tol)| CheckKind::RegretEquals { value, tol }),
        (finite(), finite()).prop_map(|(value, tol)| CheckKind::SlackEquals { value, tol }),
        (target(), finite()).prop_map(|(target, fraction)| CheckKind::RegretAtMost { target, fraction }),
        (target(), finite()).prop_map(|(target, factor)| CheckKind::RegretAtLeast { target, factor }),
        (target(), finite()).prop_map(|(target, factor)| CheckKind::MeanRegretAtLeast { target, factor }),
        target().prop_map(|target| CheckKind::MinCoordAtLeast { target }),
        Just(CheckKind::Certified),
        Just(CheckKind::FrozenStuck),
        Just(CheckKind::PolytopeShape),
        finite().prop_map(|rate| CheckKind::EventRateAtLeast { rate }),
    ]
}

fn reg() -> impl Strategy<Value = RegSpec> {
    prop_oneof![
        Just(RegSpec::NegEntropy),
        Just(RegSpec::LogBarrier),
        finite().prop_map(|q| RegSpec::Tsallis { q }),
        finite().prop_map(|beta| RegSpec::Euclidean { beta }),
    ]
}

fn losses() -> impl Strategy<Value = LossConfig> {
    let vector = || prop::collection::vec(finite(), 1..5);
    prop_oneof![
        Just(LossConfig::Construction),
        Just(LossConfig::GaussianPolytope),
        vector().prop_map(LossConfig::Constant),
        prop::collection::vec((0usize..10_000, vector()), 1..4).prop_map(LossConfig::Switching),
        (finite(), finite()).prop_map(|(lo, hi)| LossConfig::IidUniform { lo, hi }),
    ]
}

fn domain() -> impl Strategy<Value = DomainSpec> {
    prop_oneof![
        (0usize..100).prop_map(|dim| DomainSpec::Simplex { dim }),
        (finite(), finite()).prop_map(|(lo, hi)| DomainSpec::Interval { lo, hi }),
        (0usize..100).prop_map(|m| DomainSpec::HardPolytope { m }),
    ]
}

fn scenario() -> impl Strategy<Value = Scenario> {
    let head = (
        "[a-z][a-z0-9_-]{0,15}",
        prop::collection::vec(pick(Runner::ALL), 1..4),
        prop::collection::vec(any::<u64>(), 0..30),
        0usize..1_000_000,
        finite(),
        prop::collection::vec(
            prop_oneof![finite().prop_map(EpsSpec::Value), pick(EpsFormula::ALL).prop_map(EpsSpec::Formula)],
            1..4,
        ),
        proptest::option::of(finite()),
        prop::collection::vec(pick(OutputKind::ALL), 0..4),
    );
    let tail = (
        domain(),
        prop::collection::vec(reg(), 1..3),
        losses(),
        prop::collection::btree_map("[a-z_]{1,10}", finite(), 0..4),
        prop::collection::vec((check_kind(), proptest::option::of(pick(Runner::ALL))), 0..6),
    );
    (head, tail).prop_map(
        |((name, runners, seeds, horizon, eta, eps, eps_floor, outputs), (domain, regularizers, losses, params, checks))| {
            Scenario {
                name,
                runners,
                seeds,
                horizon,
                eta,
                eps,
                eps_floor,
                outputs,
                domain,
                regularizers,
                losses,
                params: params.into_iter().collect::<BTreeMap<_, _>>(),
                checks: checks.into_iter().map(|(kind, scope)| Check { kind, scope }).collect(),
            }
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn parse_inverts_serialize(s in scenario()) {
        let text = s.serialize();
        let back = Scenario::parse(&text).map_err(|e| TestCaseError::fail(format!("{e}\n{text}")))?;
        prop_assert_eq!(back, s);
    }
}
