use omdlab_core::balance::{loss_balance, psi_floor, simplex_pair_basis};
use omdlab_core::geometry::{bregman, Domain, Point, Regularizer};
use omdlab_core::numeric::fmt_sig17;
use omdlab_core::subproblem::{certify, exact_step, StepObjective};
use omdlab_core::suites::{check_balance_identity, check_three_points, SimplexCase};
use omdlab_core::trajectories::{regret, run_exact};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn reg_of(k: usize, q: f64) -> Regularizer {
    match k % 4 {
        0 => Regularizer::NegEntropy,
        1 => Regularizer::LogBarrier,
        2 => Regularizer::Tsallis { q },
        _ => Regularizer::Euclidean { beta: 1.0 + 3.0 * q },
    }
}

fn simplex_point(raw: &[f64]) -> Vec<f64> {
    let s: f64 = raw.iter().sum();
    raw.iter().map(|x| x / s).collect()
}

fn loss_matrix(d: usize, t: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-1.0f64..=1.0, d), t)
}

fn case_strategy() -> impl Strategy<Value = SimplexCase> {
    (2usize..=5, 1usize..=30, 0usize..3, 0.2f64..0.8, 0.01f64..1.0).prop_flat_map(|(d, t, k, q, eta)| {
        (loss_matrix(d, t), prop::collection::vec(0.2f64..1.0, d)).prop_map(move |(losses, raw)| SimplexCase {
            reg: reg_of(k, q),
            d,
            eta,
            losses,
            w1: simplex_point(&raw),
        })
    })
}

/// Largest `|<l_{t1:t2}, v>| / ||v||_1` over all intervals, by enumeration.
fn brute_force_balance(losses: &[Vec<f64>], basis: &[Vec<f64>]) -> f64 {
    let mut best: f64 = 0.0;
    for v in basis {
        let n: f64 = v.iter().map(|x| x.abs()).sum();
        for a in 0..losses.len() {
            let mut s = 0.0;
            for l in &losses[a..] {
                s += l.iter().zip(v).map(|(x, y)| x * y).sum::<f64>();
                best = best.max(s.abs() / n);
            }
        }
    }
    best
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn three_points_and_nonnegativity(
        k in 0usize..4,
        q in 0.2f64..0.8,
        raw in prop::collection::vec(0.05f64..1.0, 9),
    ) {
        let reg = reg_of(k, q);
        let x = Point::new(simplex_point(&raw[0..3]));
        let y = Point::new(simplex_point(&raw[3..6]));
        let z = Point::new(simplex_point(&raw[6..9]));
        check_three_points(&reg, &x, &y, &z).unwrap();
        prop_assert!(bregman(&reg, &x, &y).unwrap() >= -1e-15);
        prop_assert!(bregman(&reg, &x, &x).unwrap().abs() <= 1e-15);
    }

    #[test]
    fn exact_balance_identity(case in case_strategy(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        check_balance_identity(&case, &mut rng, 8).unwrap();
    }

    #[test]
    fn entropy_step_is_softmax(
        d in 2usize..7,
        eta in 0.01f64..5.0,
        raw in prop::collection::vec(0.01f64..1.0, 7),
        loss in prop::collection::vec(-1.0f64..1.0, 7),
    ) {
        let anchor = Point::new(simplex_point(&raw[..d]));
        let dom = Domain::simplex(d).unwrap();
        let reg = Regularizer::NegEntropy;
        let obj = StepObjective::new(eta, &loss[..d], &anchor, &reg, &dom).unwrap();
        let (w, cert) = exact_step(&obj).unwrap();
        let z: Vec<f64> = (0..d).map(|i| anchor.coords[i] * (-eta * loss[i]).exp()).collect();
        let s: f64 = z.iter().sum();
        for i in 0..d {
            prop_assert!((w.coords[i] - z[i] / s).abs() <= 1e-13);
        }
        prop_assert!(cert.slack <= 1e-12);
    }

    #[test]
    fn slack_covers_true_gap(
        d in 2usize..6,
        k in 0usize..4,
        q in 0.2f64..0.8,
        eta in 0.05f64..2.0,
        raw in prop::collection::vec(0.1f64..1.0, 6),
        other in prop::collection::vec(0.1f64..1.0, 6),
        loss in prop::collection::vec(-1.0f64..1.0, 6),
    ) {
        let reg = reg_of(k, q);
        let anchor = Point::new(simplex_point(&raw[..d]));
        let cand = Point::new(simplex_point(&other[..d]));
        let dom = Domain::simplex(d).unwrap();
        let obj = StepObjective::new(eta, &loss[..d], &anchor, &reg, &dom).unwrap();
        let (w, _) = exact_step(&obj).unwrap();
        let min = obj.value_unchecked(&w).unwrap();
        let (_, cert) = certify(&obj, &cand, 10.0).unwrap();
        let gap = cert.value_at_candidate - min;
        prop_assert!(gap <= cert.slack + 1e-10 * (1.0 + min.abs()), "gap {gap} slack {}", cert.slack);
        prop_assert!(cert.min_lower_bound <= min + 1e-10 * (1.0 + min.abs()));
    }

    #[test]
    fn interval_step_is_clipped_stationary_point(
        beta in 0.1f64..10.0,
        a in 0.0f64..1.0,
        eta in 0.01f64..3.0,
        l in -1.0f64..1.0,
    ) {
        let reg = Regularizer::Euclidean { beta };
        let dom = Domain::interval(0.0, 1.0).unwrap();
        let anchor = Point::new(vec![a]);
        let loss = [l];
        let obj = StepObjective::new(eta, &loss, &anchor, &reg, &dom).unwrap();
        let (w, _) = exact_step(&obj).unwrap();
        let expect = (a - eta * l / beta).clamp(0.0, 1.0);
        prop_assert!((w.coords[0] - expect).abs() <= 1e-15);
    }

    #[test]
    fn loss_balance_matches_enumeration(d in 2usize..5, losses in (1usize..40).prop_flat_map(|t| loss_matrix(4, t))) {
        let losses: Vec<Vec<f64>> = losses.iter().map(|l| l[..d].to_vec()).collect();
        let basis = simplex_pair_basis(d);
        let fast = loss_balance(&losses, &basis);
        let slow = brute_force_balance(&losses, &basis);
        prop_assert!((fast - slow).abs() <= 1e-12 * (1.0 + slow));
    }

    #[test]
    fn best_in_hindsight_beats_every_vertex(d in 2usize..6, losses in (1usize..20).prop_flat_map(|t| loss_matrix(5, t))) {
        let losses: Vec<Vec<f64>> = losses.iter().map(|l| l[..d].to_vec()).collect();
        let dom = Domain::simplex(d).unwrap();
        let traj = run_exact(&dom, &Regularizer::NegEntropy, &losses, 0.1, &Point::uniform(d)).unwrap();
        let rep = regret(&traj, None).unwrap();
        prop_assert!((rep.regret - (rep.cumulative_loss - rep.comparator_loss)).abs() <= 1e-15);
        for i in 0..d {
            let vertex_loss: f64 = losses.iter().map(|l| l[i]).sum();
            prop_assert!(rep.comparator_loss <= vertex_loss + 1e-12);
        }
    }

    #[test]
    fn psi_floor_is_monotone(
        nu in 1.05f64..2.0,
        c1 in 0.1f64..2.0,
        eta in 0.001f64..0.5,
        t in 1usize..5000,
        d in 2usize..50,
    ) {
        let base = psi_floor(nu, c1, eta, t, d).unwrap();
        prop_assert!(psi_floor(nu, c1, eta * 1.5, t, d).unwrap() <= base);
        prop_assert!(psi_floor(nu, c1, eta, t + 10, d).unwrap() <= base);
        prop_assert!(psi_floor(nu, c1, eta, t, d + 1).unwrap() <= base);
    }

    #[test]
    fn seventeen_digits_round_trip(x in any::<f64>().prop_filter("finite", |x| x.is_finite())) {
        let s = fmt_sig17(x);
        prop_assert_eq!(s.parse::<f64>().unwrap(), x);
    }
}
