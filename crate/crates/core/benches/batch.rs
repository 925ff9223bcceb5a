use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use omdlab_core::geometry::{Domain, Point, Regularizer};
use omdlab_core::instances::{estimate_event_rate, make_loss_stream, CoordDist, EventCheck, LossSpec};
use omdlab_core::par;
use omdlab_core::suites::{run_suite, Suite};
use omdlab_core::trajectories::{run_honest_inexact, NoisePolicy};
use omdlab_core::Execution;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn seed_batch(c: &mut Criterion) {
    let dom = Domain::simplex(4).unwrap();
    let spec = LossSpec::Iid(vec![CoordDist::Uniform { lo: -1.0, hi: 1.0 }; 4]);
    let seeds: Vec<u64> = (0..16).collect();
    let mut g = c.benchmark_group("honest_seed_batch");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| {
                par::map(exec, &seeds, |&s| {
                    let losses = make_loss_stream(&spec, 400, s).unwrap().realized;
                    run_honest_inexact(
                        &dom,
                        &Regularizer::NegEntropy,
                        &losses,
                        0.05,
                        1e-12,
                        &Point::uniform(4),
                        NoisePolicy::Saturating { seed: s },
                    )
                    .unwrap()
                    .max_slack()
                })
            })
        });
    }
    g.finish();
}

fn event_rate(c: &mut Criterion) {
    let spec = LossSpec::GaussianPolytope { m: 16, eta: 0.1, degenerate: false };
    let mut g = c.benchmark_group("event_rate");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| estimate_event_rate(&spec, 3000, 2000, 1, EventCheck::PrefixOnly, exec).unwrap())
        });
    }
    g.finish();
}

fn property_suite(c: &mut Criterion) {
    let mut g = c.benchmark_group("balance_identity_suite");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| run_suite(Suite::BalanceIdentity, 200, 5, exec).violations.len())
        });
    }
    g.finish();
}

criterion_group!(benches, seed_batch, event_rate, property_suite);
criterion_main!(benches);
