//! Small numeric kernels shared by the solvers: compensated summation,
//! cancellation-free Bregman pieces, and bisection.

/// Kahan-Babuška (Neumaier) compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for KahanSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = KahanSum::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

pub fn kahan_sum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    iter.into_iter().collect::<KahanSum>().value()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    kahan_sum(a.iter().zip(b).map(|(x, y)| x * y))
}

/// `(1+u) ln(1+u) - u`, accurate near `u = 0`.
pub fn entropy_gap(u: f64) -> f64 {
    if u.abs() < 1e-3 {
        // sum_{k>=2} (-1)^k u^k / (k (k-1))
        let mut term = u * u;
        let mut acc = 0.0;
        let mut sign = 1.0;
        for k in 2..12 {
            let kf = k as f64;
            acc += sign * term / (kf * (kf - 1.0));
            term *= u;
            sign = -sign;
        }
        acc
    } else if u <= -1.0 {
        // limit 0 * ln 0 = 0
        1.0
    } else {
        (1.0 + u) * u.ln_1p() - u
    }
}

/// `u - ln(1+u)`, accurate near `u = 0`.
pub fn log_gap(u: f64) -> f64 {
    if u.abs() < 1e-3 {
        let mut term = u * u;
        let mut acc = 0.0;
        let mut sign = 1.0;
        for k in 2..12 {
            acc += sign * term / k as f64;
            term *= u;
            sign = -sign;
        }
        acc
    } else {
        u - u.ln_1p()
    }
}

/// `1 + q u - (1+u)^q` for `q in (0,1)`, accurate near `u = 0`.
pub fn power_gap(q: f64, u: f64) -> f64 {
    if u.abs() < 1e-2 {
        // -(sum_{k>=2} C(q,k) u^k)
        let mut coeff = q;
        let mut term = u;
        let mut acc = 0.0;
        for k in 2..16 {
            coeff *= (q - (k as f64 - 1.0)) / k as f64;
            term *= u;
            acc -= coeff * term;
        }
        acc
    } else if u <= -1.0 {
        1.0 - q
    } else {
        1.0 + q * u - (q * u.ln_1p()).exp()
    }
}

/// Outcome of [`bisect_increasing`].
#[derive(Debug, Clone, Copy)]
pub struct Bisection {
    pub root: f64,
    pub lo: f64,
    pub hi: f64,
    pub iterations: usize,
}

/// Finds `x` with `f(x) = target` for nondecreasing `f`, given `f(lo) <= target <= f(hi)`.
pub fn bisect_increasing<F: FnMut(f64) -> f64>(
    mut f: F,
    target: f64,
    mut lo: f64,
    mut hi: f64,
    rel_tol: f64,
    max_iter: usize,
) -> Bisection {
    let mut iterations = 0;
    while iterations < max_iter {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if hi - lo <= rel_tol * lo.abs().max(hi.abs()).max(1.0) {
            break;
        }
        let v = f(mid);
        if v < target {
            lo = mid;
        } else {
            hi = mid;
        }
        iterations += 1;
    }
    Bisection {
        root: 0.5 * (lo + hi),
        lo,
        hi,
        iterations,
    }
}

/// `ceil(x)` that ignores floating-point noise just above an integer.
pub fn ceil_tolerant(x: f64) -> f64 {
    (x - 1e-9).ceil()
}

/// Numerically stable `ln(sum exp(x_i))`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + kahan_sum(xs.iter().map(|x| (x - max).exp())).ln()
}

/// SplitMix64 step, used to derive independent sub-seeds.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Formats with 17 significant digits, enough to round-trip any double.
pub fn fmt_sig17(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    format!("{x:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kahan_beats_naive_summation() {
        let xs: Vec<f64> = std::iter::once(1.0)
            .chain(std::iter::repeat_n(1e-16, 10_000))
            .collect();
        assert!((kahan_sum(xs.iter().copied()) - (1.0 + 1e-12)).abs() < 1e-18);
    }

    #[test]
    fn gap_series_match_direct_formulas() {
        for &u in &[-0.5, -2e-3, -9e-4, 1e-5, 9e-4, 2e-3, 0.7] {
            let direct = (1.0 + u) * f64::ln_1p(u) - u;
            assert!((entropy_gap(u) - direct).abs() < 1e-15, "u={u}");
            let direct = u - f64::ln_1p(u);
            assert!((log_gap(u) - direct).abs() < 1e-15, "u={u}");
            let q = 0.5;
            let direct = 1.0 + q * u - (1.0 + u).powf(q);
            assert!((power_gap(q, u) - direct).abs() < 1e-15, "u={u}");
        }
        // relative accuracy in the cancellation regime
        let u = 1e-7;
        assert!((entropy_gap(u) / (u * u / 2.0) - 1.0).abs() < 1e-6);
        assert!((log_gap(u) / (u * u / 2.0) - 1.0).abs() < 1e-6);
        assert!((power_gap(0.5, u) / (0.125 * u * u) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn bisection_finds_sqrt_two() {
        let b = bisect_increasing(|x| x * x, 2.0, 0.0, 2.0, 1e-15, 200);
        assert!((b.root - 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn tolerant_ceiling() {
        assert_eq!(ceil_tolerant(200.00000000001), 200.0);
        assert_eq!(ceil_tolerant(69.07), 70.0);
        assert_eq!(ceil_tolerant(3.0), 3.0);
    }

    #[test]
    fn sig17_round_trips() {
        for &x in &[0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0] {
            let s = fmt_sig17(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
        }
        assert_eq!(fmt_sig17(0.1), "1.0000000000000001e-1");
    }

    #[test]
    fn lse_is_stable() {
        let v = log_sum_exp(&[-1000.0, -1000.0]);
        assert!((v - (-1000.0 + 2f64.ln())).abs() < 1e-12);
    }
}
