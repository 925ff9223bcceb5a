//! Closed-form epsilon thresholds and regret bounds used to parameterize runs.

use crate::error::{OmdError, Result};
use crate::geometry::BarrierConstants;

/// Smallest epsilon at which the entropy stuck construction over horizon `T` applies:
/// `4 eta exp(-eta T / 3)`.
pub fn entropy_stuck_threshold(eta: f64, horizon: usize) -> f64 {
    4.0 * eta * (-eta * horizon as f64 / 3.0).exp()
}

/// Entropy robustness threshold `exp(-eta T / 2) min(eta^4, T^-2) / (6d)`.
pub fn entropy_robust_eps(d: usize, eta: f64, horizon: usize) -> f64 {
    let t = horizon as f64;
    (-eta * t / 2.0).exp() * eta.powi(4).min(t.powi(-2)) / (6.0 * d as f64)
}

/// Balance-based threshold `min(eta^4, T^-2) / (d max(6 exp(eta alpha), 1/eta))`.
pub fn balanced_robust_eps(d: usize, eta: f64, alpha: f64, horizon: usize) -> f64 {
    let t = horizon as f64;
    eta.powi(4).min(t.powi(-2)) / (d as f64 * (6.0 * (eta * alpha).exp()).max(1.0 / eta))
}

/// Robustness threshold for a nu-barrier with `nu > 1`:
/// `eta^4 min(1/c2, c2) (16 eta T d / c1 + 2 (2d)^(nu-1))^(-nu/(nu-1))`.
pub fn barrier_robust_eps(k: BarrierConstants, eta: f64, horizon: usize, d: usize) -> Result<f64> {
    if !(k.nu > 1.0) {
        return Err(OmdError::Precondition(format!(
            "barrier threshold needs nu > 1, got nu = {}",
            k.nu
        )));
    }
    let d = d as f64;
    let inner = 16.0 * eta * horizon as f64 * d / k.c1 + 2.0 * (2.0 * d).powf(k.nu - 1.0);
    Ok(eta.powi(4) * (1.0 / k.c2).min(k.c2) * inner.powf(-k.nu / (k.nu - 1.0)))
}

/// Stochastic entropy threshold `delta / (6 d^2 T^4)`.
pub fn stochastic_robust_eps(delta: f64, d: usize, horizon: usize) -> f64 {
    delta / (6.0 * (d * d) as f64 * (horizon as f64).powi(4))
}

/// Smallest epsilon for the frozen-uniform construction: `4 eta^2 / (c1 d^nu)`.
pub fn dimension_stuck_threshold(k: BarrierConstants, eta: f64, d: usize) -> f64 {
    4.0 * eta * eta / (k.c1 * (d as f64).powf(k.nu))
}

/// Smooth-regularizer regret bound `D_R(w, w1)/eta + 2 eta T + 2 T D sqrt(beta eps)/eta`.
pub fn smooth_regret_bound(div: f64, eta: f64, horizon: usize, diameter: f64, beta: f64, eps: f64) -> f64 {
    let t = horizon as f64;
    div / eta + 2.0 * eta * t + 2.0 * t * diameter * (beta * eps).sqrt() / eta
}

/// Approximate-FTRL regret bound `(R(w*) - R(w1))/eta + (2 eta + sqrt(2 eps)) T`.
pub fn ftrl_regret_bound(reg_gap: f64, eta: f64, eps: f64, horizon: usize) -> f64 {
    reg_gap / eta + (2.0 * eta + (2.0 * eps).sqrt()) * horizon as f64
}

/// Iterate floor for a nu-barrier:
/// `psi = (c1 / (8 eta T d + c1 (2d)^(nu-1)))^(1/(nu-1))`.
pub fn psi_floor(nu: f64, c1: f64, eta: f64, horizon: usize, d: usize) -> Result<f64> {
    if !(nu > 1.0) {
        return Err(OmdError::Precondition(
            "no polynomial iterate floor exists for nu = 1".into(),
        ));
    }
    let d = d as f64;
    let denom = 8.0 * eta * horizon as f64 * d + c1 * (2.0 * d).powf(nu - 1.0);
    Ok((c1 / denom).powf(1.0 / (nu - 1.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn psi_examples() {
        assert_relative_eq!(psi_floor(2.0, 1.0, 0.1, 100, 2).unwrap(), 1.0 / 164.0, epsilon = 1e-16);
        let v = psi_floor(1.5, 0.5, 0.1, 100, 2).unwrap();
        assert_relative_eq!(v, (0.5f64 / 161.0).powi(2), max_relative = 1e-14);
        assert!((v - 9.65e-6).abs() < 1e-8);
        assert_relative_eq!(psi_floor(2.0, 1.0, 1e-12, 100, 3).unwrap(), 1.0 / 6.0, max_relative = 1e-9);
        assert!(psi_floor(1.0, 1.0, 0.1, 100, 2).is_err());
    }

    #[test]
    fn entropy_thresholds() {
        let e = entropy_stuck_threshold(0.1, 600);
        assert_relative_eq!(e, 0.4 * (-20f64).exp(), max_relative = 1e-15);
        assert!((e - 8.24e-10).abs() < 1e-12);
        let r = entropy_robust_eps(4, 0.05, 400);
        assert_relative_eq!(r, (-10f64).exp() * 0.05f64.powi(4) / 24.0, max_relative = 1e-14);
    }

    #[test]
    fn barrier_threshold_log_barrier() {
        let k = BarrierConstants { nu: 2.0, c1: 1.0, c2: 1.0 };
        let e = barrier_robust_eps(k, 0.05, 2000, 4).unwrap();
        assert_relative_eq!(e, 0.05f64.powi(4) / 6416f64.powi(2), max_relative = 1e-14);
    }

    #[test]
    fn ftrl_bound_example() {
        let b = ftrl_regret_bound(2f64.ln(), 0.1, 1e-4, 1000);
        assert!((b - 221.07).abs() < 0.01);
    }
}
