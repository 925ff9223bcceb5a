use std::fmt;
use std::sync::Arc;

use crate::error::{OmdError, Result};
use crate::numeric::{bisect_increasing, entropy_gap, log_gap, power_gap};

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// User-supplied separable barrier `r` with its first two derivatives.
#[derive(Clone)]
pub struct CustomBarrier {
    pub name: String,
    pub r: ScalarFn,
    pub dr: ScalarFn,
    pub d2r: ScalarFn,
    pub nu: f64,
    pub c1: f64,
    pub c2: f64,
}

impl fmt::Debug for CustomBarrier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomBarrier")
            .field("name", &self.name)
            .field("nu", &self.nu)
            .field("c1", &self.c1)
            .field("c2", &self.c2)
            .finish()
    }
}

/// A coordinate-separable regularizer `R(w) = sum_i r(w_i)`.
#[derive(Debug, Clone)]
pub enum Regularizer {
    /// `r(x) = beta x^2 / 2`.
    Euclidean { beta: f64 },
    /// `r(x) = x ln x`.
    NegEntropy,
    /// `r(x) = (x - x^q) / (1 - q)`.
    Tsallis { q: f64 },
    /// `r(x) = -ln x`.
    LogBarrier,
    Custom(CustomBarrier),
}

/// `(nu, c1, c2)` with `c1 / x^nu <= r''(x) <= c2 / x^nu` on `(0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierConstants {
    pub nu: f64,
    pub c1: f64,
    pub c2: f64,
}

impl Regularizer {
    pub fn tsallis(q: f64) -> Result<Self> {
        if !(q > 0.0 && q < 1.0) {
            return Err(OmdError::Spec(format!("tsallis q must lie in (0,1), got {q}")));
        }
        Ok(Regularizer::Tsallis { q })
    }

    pub fn euclidean(beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(OmdError::Spec(format!("euclidean beta must be positive, got {beta}")));
        }
        Ok(Regularizer::Euclidean { beta })
    }

    pub fn name(&self) -> String {
        match self {
            Regularizer::Euclidean { beta } => format!("euclidean(beta={beta})"),
            Regularizer::NegEntropy => "neg_entropy".into(),
            Regularizer::Tsallis { q } => format!("tsallis(q={q})"),
            Regularizer::LogBarrier => "log_barrier".into(),
            Regularizer::Custom(c) => c.name.clone(),
        }
    }

    pub fn is_barrier(&self) -> bool {
        !matches!(self, Regularizer::Euclidean { .. })
    }

    pub fn is_entropy(&self) -> bool {
        matches!(self, Regularizer::NegEntropy)
    }

    pub fn constants(&self) -> Option<BarrierConstants> {
        match self {
            Regularizer::Euclidean { .. } => None,
            Regularizer::NegEntropy => Some(BarrierConstants { nu: 1.0, c1: 1.0, c2: 1.0 }),
            Regularizer::LogBarrier => Some(BarrierConstants { nu: 2.0, c1: 1.0, c2: 1.0 }),
            Regularizer::Tsallis { q } => Some(BarrierConstants { nu: 2.0 - q, c1: *q, c2: *q }),
            Regularizer::Custom(c) => Some(BarrierConstants { nu: c.nu, c1: c.c1, c2: c.c2 }),
        }
    }

    fn check_arg(&self, x: f64) -> Result<()> {
        if self.is_barrier() && !(x > 0.0) {
            return Err(OmdError::Domain(format!("{} needs x > 0, got {x}", self.name())));
        }
        Ok(())
    }

    /// `(r(x), r'(x), r''(x))`.
    pub fn derivatives(&self, x: f64) -> Result<(f64, f64, f64)> {
        self.check_arg(x)?;
        Ok((self.r(x), self.dr(x), self.d2r(x)))
    }

    pub fn r(&self, x: f64) -> f64 {
        match self {
            Regularizer::Euclidean { beta } => 0.5 * beta * x * x,
            Regularizer::NegEntropy => {
                if x == 0.0 {
                    0.0
                } else {
                    x * x.ln()
                }
            }
            Regularizer::Tsallis { q } => (x - x.powf(*q)) / (1.0 - q),
            Regularizer::LogBarrier => -x.ln(),
            Regularizer::Custom(c) => (c.r)(x),
        }
    }

    pub fn dr(&self, x: f64) -> f64 {
        match self {
            Regularizer::Euclidean { beta } => beta * x,
            Regularizer::NegEntropy => x.ln() + 1.0,
            Regularizer::Tsallis { q } => (1.0 - q * x.powf(q - 1.0)) / (1.0 - q),
            Regularizer::LogBarrier => -1.0 / x,
            Regularizer::Custom(c) => (c.dr)(x),
        }
    }

    pub fn d2r(&self, x: f64) -> f64 {
        match self {
            Regularizer::Euclidean { beta } => *beta,
            Regularizer::NegEntropy => 1.0 / x,
            Regularizer::Tsallis { q } => q * x.powf(q - 2.0),
            Regularizer::LogBarrier => 1.0 / (x * x),
            Regularizer::Custom(c) => (c.d2r)(x),
        }
    }

    /// `r'` evaluated from `ln x`; exact for entropy when `x` underflows.
    pub fn dr_from_log(&self, x: f64, ln_x: f64) -> f64 {
        match self {
            Regularizer::NegEntropy => ln_x + 1.0,
            Regularizer::LogBarrier => -(-ln_x).exp(),
            Regularizer::Tsallis { q } => (1.0 - q * ((q - 1.0) * ln_x).exp()) / (1.0 - q),
            _ => self.dr(x),
        }
    }

    /// Smallest `x >= 0` with `r'(x) >= y`, or `+inf` when `y` exceeds the range of `r'`.
    pub fn dr_inverse(&self, y: f64) -> f64 {
        match self {
            Regularizer::Euclidean { beta } => y / beta,
            Regularizer::NegEntropy => (y - 1.0).exp(),
            Regularizer::LogBarrier => {
                if y < 0.0 {
                    -1.0 / y
                } else {
                    f64::INFINITY
                }
            }
            Regularizer::Tsallis { q } => {
                let base = (1.0 - (1.0 - q) * y) / q;
                if base > 0.0 {
                    base.powf(1.0 / (q - 1.0))
                } else {
                    f64::INFINITY
                }
            }
            Regularizer::Custom(c) => {
                let f = |x: f64| (c.dr)(x);
                let mut hi = 1.0;
                let mut expand = 0;
                while f(hi) < y {
                    hi *= 2.0;
                    expand += 1;
                    if expand > 60 {
                        return f64::INFINITY;
                    }
                }
                let mut lo = hi;
                expand = 0;
                while f(lo) > y {
                    lo *= 0.5;
                    expand += 1;
                    if expand > 1100 {
                        return 0.0;
                    }
                }
                // bisect in log space
                let b = bisect_increasing(|s| f(s.exp()), y, lo.ln(), hi.ln(), 1e-16, 200);
                b.root.exp()
            }
        }
    }

    /// Scalar divergence `r(x) - r(y) - r'(y)(x - y)`, free of cancellation for nearby arguments.
    ///
    /// `x = 0` uses the limiting value where `r(0)` is finite.
    pub fn scalar_bregman(&self, x: f64, y: f64) -> Result<f64> {
        if x == 0.0 {
            return self.bregman_increment(y, -y);
        }
        self.bregman_increment_impl(x, y, x - y)
    }

    /// `d_r(y + t || y)` with the increment `t` given exactly.
    pub fn bregman_increment(&self, y: f64, t: f64) -> Result<f64> {
        let x = if t == -y { 0.0 } else { y + t };
        self.bregman_increment_impl(x, y, t)
    }

    fn bregman_increment_impl(&self, x: f64, y: f64, t: f64) -> Result<f64> {
        if self.is_barrier() {
            if !(y > 0.0) {
                return Err(OmdError::Domain(format!(
                    "{}: divergence anchor must be interior, got {y}",
                    self.name()
                )));
            }
            if x < 0.0 {
                return Err(OmdError::Domain(format!("{}: negative argument {x}", self.name())));
            }
        }
        let u = t / y;
        let v = match self {
            Regularizer::Euclidean { beta } => 0.5 * beta * t * t,
            Regularizer::NegEntropy => y * entropy_gap(u),
            Regularizer::LogBarrier => {
                if x == 0.0 {
                    return Err(OmdError::Domain("log_barrier is infinite at 0".into()));
                }
                log_gap(u)
            }
            Regularizer::Tsallis { q } => y.powf(*q) * power_gap(*q, u) / (1.0 - q),
            Regularizer::Custom(c) => {
                if x == 0.0 {
                    let r0 = (c.r)(0.0);
                    if !r0.is_finite() {
                        return Err(OmdError::Domain(format!("{} is infinite at 0", c.name)));
                    }
                    r0 - (c.r)(y) + (c.dr)(y) * y
                } else if u.abs() < 1e-2 {
                    gauss_legendre_remainder(&*c.d2r, x, y)
                } else {
                    (c.r)(x) - (c.r)(y) - (c.dr)(y) * t
                }
            }
        };
        Ok(v.max(0.0))
    }

    /// Entropy divergence term from log-coordinates; valid when `x` or `y` underflow.
    pub fn entropy_bregman_log(x: f64, ln_x: f64, y: f64, ln_y: f64) -> f64 {
        if x == 0.0 && ln_x == f64::NEG_INFINITY {
            return y;
        }
        let delta = ln_x - ln_y;
        if delta.abs() < 0.5 {
            y * entropy_gap(delta.exp_m1())
        } else {
            // y (delta e^delta - e^delta + 1)
            x * delta - x + y
        }
    }

    /// Sandwich check `c1/x^nu <= r''(x) <= c2/x^nu` on a log grid from 1e-8 to 1.
    pub fn sandwich_violations(&self, points: usize) -> Vec<f64> {
        let Some(k) = self.constants() else {
            return Vec::new();
        };
        let mut bad = Vec::new();
        for j in 0..points {
            let x = 10f64.powf(-8.0 + 8.0 * j as f64 / (points - 1) as f64);
            let h = self.d2r(x);
            let scale = x.powf(-k.nu);
            let tol = 1e-12 * h.abs();
            if h < k.c1 * scale - tol || h > k.c2 * scale + tol || h <= 0.0 {
                bad.push(x);
            }
        }
        bad
    }
}

/// `int_y^x r''(s) (x - s) ds` by 8-point Gauss-Legendre.
fn gauss_legendre_remainder(d2r: &(dyn Fn(f64) -> f64 + Send + Sync), x: f64, y: f64) -> f64 {
    const NODES: [f64; 4] = [
        0.183_434_642_495_649_8,
        0.525_532_409_916_329,
        0.796_666_477_413_626_7,
        0.960_289_856_497_536_3,
    ];
    const WEIGHTS: [f64; 4] = [
        0.362_683_783_378_362,
        0.313_706_645_877_887_3,
        0.222_381_034_453_374_5,
        0.101_228_536_290_376_3,
    ];
    let half = 0.5 * (x - y);
    let mid = 0.5 * (x + y);
    let mut acc = 0.0;
    for (n, w) in NODES.iter().zip(WEIGHTS) {
        for s in [mid - half * n, mid + half * n] {
            acc += w * d2r(s) * (x - s);
        }
    }
    acc * half
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn custom_log_barrier() -> Regularizer {
        Regularizer::Custom(CustomBarrier {
            name: "custom_log".into(),
            r: Arc::new(|x: f64| -x.ln()),
            dr: Arc::new(|x: f64| -1.0 / x),
            d2r: Arc::new(|x: f64| 1.0 / (x * x)),
            nu: 2.0,
            c1: 1.0,
            c2: 1.0,
        })
    }

    #[test]
    fn derivative_table() {
        let (r, dr, d2r) = Regularizer::NegEntropy.derivatives(1.0).unwrap();
        assert_eq!((r, dr, d2r), (0.0, 1.0, 1.0));
        let (r, dr, d2r) = Regularizer::LogBarrier.derivatives(0.5).unwrap();
        assert_relative_eq!(r, 2f64.ln(), epsilon = 1e-15);
        assert_relative_eq!(dr, -2.0);
        assert_relative_eq!(d2r, 4.0);
        // q x^(q-2) = 0.5 * 0.25^-1.5
        let (_, _, d2r) = Regularizer::Tsallis { q: 0.5 }.derivatives(0.25).unwrap();
        assert_relative_eq!(d2r, 4.0, epsilon = 1e-14);
        assert!(Regularizer::LogBarrier.derivatives(0.0).is_err());
        assert!(Regularizer::NegEntropy.derivatives(-1.0).is_err());
        assert!(Regularizer::Euclidean { beta: 1.0 }.derivatives(-3.0).is_ok());
    }

    #[test]
    fn tsallis_constants_are_exact() {
        let k = Regularizer::Tsallis { q: 0.5 }.constants().unwrap();
        assert_eq!((k.nu, k.c1, k.c2), (1.5, 0.5, 0.5));
        assert!(Regularizer::tsallis(1.0).is_err());
    }

    #[test]
    fn sandwich_holds_for_builtins() {
        for reg in [
            Regularizer::NegEntropy,
            Regularizer::LogBarrier,
            Regularizer::Tsallis { q: 0.3 },
            Regularizer::Tsallis { q: 0.5 },
            custom_log_barrier(),
        ] {
            assert!(reg.sandwich_violations(81).is_empty(), "{}", reg.name());
        }
    }

    #[test]
    fn inverse_gradient_round_trips() {
        for reg in [
            Regularizer::NegEntropy,
            Regularizer::LogBarrier,
            Regularizer::Tsallis { q: 0.5 },
            Regularizer::Euclidean { beta: 2.0 },
            custom_log_barrier(),
        ] {
            for &x in &[1e-9, 1e-3, 0.2, 0.9] {
                let back = reg.dr_inverse(reg.dr(x));
                assert_relative_eq!(back, x, max_relative = 1e-12);
            }
        }
        assert_eq!(Regularizer::LogBarrier.dr_inverse(0.5), f64::INFINITY);
    }

    #[test]
    fn scalar_bregman_matches_direct_formula() {
        for reg in [
            Regularizer::NegEntropy,
            Regularizer::LogBarrier,
            Regularizer::Tsallis { q: 0.5 },
            custom_log_barrier(),
        ] {
            for &(x, y) in &[(0.3, 0.6), (0.6, 0.3), (0.5, 0.5005), (0.01, 0.9)] {
                let direct = reg.r(x) - reg.r(y) - reg.dr(y) * (x - y);
                let v = reg.scalar_bregman(x, y).unwrap();
                assert!((v - direct).abs() < 1e-13, "{} {x} {y}: {v} vs {direct}", reg.name());
            }
        }
    }

    #[test]
    fn entropy_zero_argument_limit() {
        assert_relative_eq!(Regularizer::NegEntropy.scalar_bregman(0.0, 0.5).unwrap(), 0.5);
        assert_relative_eq!(
            Regularizer::Tsallis { q: 0.5 }.scalar_bregman(0.0, 0.25).unwrap(),
            0.5,
            epsilon = 1e-15
        );
        assert!(Regularizer::LogBarrier.scalar_bregman(0.0, 0.5).is_err());
        assert!(Regularizer::NegEntropy.scalar_bregman(0.5, 0.0).is_err());
    }

    #[test]
    fn log_form_agrees_with_plain_form() {
        for &(x, y) in &[(0.3f64, 0.6f64), (0.5, 0.5000001), (1e-200, 0.5), (0.5, 1e-200)] {
            let a = Regularizer::entropy_bregman_log(x, x.ln(), y, y.ln());
            let b = Regularizer::NegEntropy.scalar_bregman(x, y).unwrap();
            assert_relative_eq!(a, b, max_relative = 1e-12);
        }
    }
}
