use omdlab_core::balance::{entropy_gradient_ceiling, loss_balance, psi_floor, simplex_pair_basis};
use omdlab_core::geometry::{bregman, Domain, Point, Regularizer};
use omdlab_core::instances::{make_loss_stream, CoordDist, LossSpec};
use omdlab_core::thresholds::{barrier_robust_eps, ftrl_regret_bound};
use omdlab_core::trajectories::{
    build_entropy_stuck, entropy_stuck_regret, regret, run_exact, run_ftrl_approx, run_honest_inexact,
    NoisePolicy,
};

fn uniform_losses(d: usize, t: usize, seed: u64) -> Vec<Vec<f64>> {
    let spec = LossSpec::Iid(vec![CoordDist::Uniform { lo: -1.0, hi: 1.0 }; d]);
    make_loss_stream(&spec, t, seed).unwrap().realized
}

#[test]
fn exact_entropy_regret_within_classical_bound() {
    let (d, t) = (4usize, 4096usize);
    let eta = ((d as f64).ln() / t as f64).sqrt();
    let bound = 2.0 * (t as f64 * (d as f64).ln()).sqrt();
    let dom = Domain::simplex(d).unwrap();
    for seed in 0..20 {
        let losses = uniform_losses(d, t, seed);
        let traj = run_exact(&dom, &Regularizer::NegEntropy, &losses, eta, &Point::uniform(d)).unwrap();
        let r = regret(&traj, None).unwrap();
        assert!(r.regret <= bound, "seed {seed}: {} > {bound}", r.regret);
    }
}

#[test]
fn iid_loss_balance_within_hoeffding() {
    let (d, t) = (4usize, 4096usize);
    let bound = 2.0 * (t as f64 * (d as f64 * (t * t) as f64 / 0.05).ln() / 2.0).sqrt();
    let basis: Vec<Vec<f64>> = simplex_pair_basis(d);
    let within = (0..20).filter(|&s| loss_balance(&uniform_losses(d, t, 100 + s), &basis) <= bound).count();
    assert!(within >= 19, "{within}/20 within {bound}");
}

#[test]
fn ftrl_bound_example() {
    let bound = ftrl_regret_bound(2f64.ln(), 0.1, 1e-4, 1000);
    assert!((bound - (2f64.ln() / 0.1 + (0.2 + 2e-4f64.sqrt()) * 1000.0)).abs() < 1e-9);
    assert!((bound - 221.1).abs() < 0.05);
    let dom = Domain::simplex(2).unwrap();
    let tau = 70;
    let losses: Vec<Vec<f64>> = (0..1000).map(|t| if t < tau { vec![1.0, 0.0] } else { vec![0.0, 1.0] }).collect();
    for seed in 0..5 {
        let traj =
            run_ftrl_approx(&dom, &Regularizer::NegEntropy, &losses, 0.1, 1e-4, NoisePolicy::Saturating { seed })
                .unwrap();
        traj.validate().unwrap();
        assert!(regret(&traj, None).unwrap().regret <= bound);
    }
}

#[test]
fn barrier_run_stays_above_psi() {
    let (d, t, eta) = (4usize, 400usize, 0.05);
    let reg = Regularizer::LogBarrier;
    let k = reg.constants().unwrap();
    let psi = psi_floor(k.nu, k.c1, eta, t, d).unwrap();
    let eps = barrier_robust_eps(k, eta, t, d).unwrap().max(1e-12);
    let dom = Domain::simplex(d).unwrap();
    let losses = uniform_losses(d, t, 9);
    let traj = run_honest_inexact(&dom, &reg, &losses, eta, eps, &Point::uniform(d), NoisePolicy::Saturating { seed: 3 })
        .unwrap();
    assert!(traj.min_coord() >= psi);
    // the ceiling with k = eta alpha implies the floor
    let alpha = loss_balance(&losses, &simplex_pair_basis(d));
    let exact = run_exact(&dom, &reg, &losses, eta, &Point::uniform(d)).unwrap();
    assert!(entropy_gradient_ceiling(&exact, eta * alpha).unwrap().violations.is_empty());
}

#[test]
fn entropy_stuck_regret_closed_form_by_summation() {
    // independent evaluation of the learner's loss along the construction
    let (eta, tau, t) = (0.1f64, 200usize, 600usize);
    let mut loss = 0.0;
    for s in 0..tau {
        let w1 = (-eta * s as f64).exp() / (1.0 + (-eta * s as f64).exp());
        loss += w1;
    }
    let frozen_w2 = 1.0 / (1.0 + (-eta * tau as f64).exp());
    loss += (t - tau) as f64 * frozen_w2;
    let expect = loss - tau as f64;
    assert!((entropy_stuck_regret(eta, tau, t) - expect).abs() < 1e-9);
    let traj = build_entropy_stuck(200.0, 0.4 * (-20.0f64).exp(), eta, t).unwrap();
    assert!((regret(&traj, None).unwrap().regret - expect).abs() < 1e-9);
}

#[test]
fn comparator_divergence_is_finite_for_smoothed_vertex() {
    let d = 4;
    let w1 = Point::uniform(d);
    let t = 2000.0;
    let mut c = vec![1.0 / (t * d as f64); d];
    c[0] += 1.0 - 1.0 / t;
    let div = bregman(&Regularizer::LogBarrier, &Point::new(c), &w1).unwrap();
    assert!(div.is_finite() && div > 0.0);
}
