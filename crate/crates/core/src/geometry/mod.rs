//! Regularizers, Bregman divergences, feasible domains and kernel bases.

mod domain;
mod regularizer;

pub use domain::{dependent_rows, kernel_basis, nullspace, Domain, Polytope, FEASIBILITY_TOL};
pub use regularizer::{BarrierConstants, CustomBarrier, Regularizer, ScalarFn};

use crate::error::{OmdError, Result};
use crate::numeric::KahanSum;

/// A point of the decision set, optionally carrying natural-log coordinates.
///
/// Entropy trajectories keep `log_coords` so that coordinates of order
/// `e^-600` and below stay usable in gradients and divergences.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub coords: Vec<f64>,
    pub log_coords: Option<Vec<f64>>,
}

impl Point {
    pub fn new(coords: Vec<f64>) -> Self {
        Point { coords, log_coords: None }
    }

    pub fn from_logs(log_coords: Vec<f64>) -> Self {
        let coords = log_coords.iter().map(|l| l.exp()).collect();
        Point { coords, log_coords: Some(log_coords) }
    }

    pub fn uniform(d: usize) -> Self {
        Point::from_logs(vec![-(d as f64).ln(); d])
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn ln(&self, i: usize) -> f64 {
        match &self.log_coords {
            Some(l) => l[i],
            None => self.coords[i].ln(),
        }
    }

    pub fn logs(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.ln(i)).collect()
    }

    pub fn with_log_coords(mut self) -> Self {
        if self.log_coords.is_none() {
            self.log_coords = Some(self.coords.iter().map(|x| x.ln()).collect());
        }
        self
    }

    pub fn min_coord(&self) -> f64 {
        self.coords.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Checks that `exp(log_coords)` matches `coords` where representable.
    pub fn representations_agree(&self) -> bool {
        match &self.log_coords {
            None => true,
            Some(l) => self.coords.iter().zip(l).all(|(&x, &lx)| {
                x <= 1e-290 || ((lx.exp() - x) / x).abs() <= 1e-12
            }),
        }
    }

    /// Errors unless every coordinate is strictly positive.
    pub fn check_interior(&self) -> Result<()> {
        match self.coords.iter().position(|&x| !(x > 0.0)) {
            Some(i) if self.log_coords.as_ref().is_none_or(|l| !l[i].is_finite()) => Err(
                OmdError::Domain(format!("coordinate {i} = {} is on the boundary", self.coords[i])),
            ),
            _ => Ok(()),
        }
    }
}

impl From<Vec<f64>> for Point {
    fn from(v: Vec<f64>) -> Self {
        Point::new(v)
    }
}

/// `grad R(w)` coordinate-wise, using log coordinates when present.
pub fn gradient(reg: &Regularizer, w: &Point) -> Vec<f64> {
    (0..w.dim()).map(|i| coord_gradient(reg, w, i)).collect()
}

pub fn coord_gradient(reg: &Regularizer, w: &Point, i: usize) -> f64 {
    match &w.log_coords {
        Some(l) => reg.dr_from_log(w.coords[i], l[i]),
        None => reg.dr(w.coords[i]),
    }
}

/// Single-coordinate divergence `d_r(w_i || w'_i)`.
pub fn coord_bregman(reg: &Regularizer, w: &Point, wp: &Point, i: usize) -> Result<f64> {
    if reg.is_entropy() && (w.log_coords.is_some() || wp.log_coords.is_some()) {
        let (x, y) = (w.coords[i], wp.coords[i]);
        let ly = wp.ln(i);
        if !ly.is_finite() {
            return Err(OmdError::Domain(format!("anchor coordinate {i} is on the boundary")));
        }
        let lx = if x == 0.0 && w.log_coords.is_none() { f64::NEG_INFINITY } else { w.ln(i) };
        return Ok(Regularizer::entropy_bregman_log(x, lx, y, ly).max(0.0));
    }
    reg.scalar_bregman(w.coords[i], wp.coords[i])
}

/// `D_R(w || w') = R(w) - R(w') - <grad R(w'), w - w'>`, compensated.
pub fn bregman(reg: &Regularizer, w: &Point, wp: &Point) -> Result<f64> {
    if w.dim() != wp.dim() {
        return Err(OmdError::Dimension { expected: wp.dim(), got: w.dim() });
    }
    let mut acc = KahanSum::new();
    for i in 0..w.dim() {
        acc.add(coord_bregman(reg, w, wp, i)?);
    }
    Ok(acc.value())
}

/// Largest `r''` over the coordinate segments between `w1` and `w2`.
///
/// Coordinates that coincide are skipped; if all coincide the maximum of
/// `r''` over all coordinates of `w1` is returned.
pub fn effective_smoothness(reg: &Regularizer, w1: &Point, w2: &Point) -> Result<f64> {
    if w1.dim() != w2.dim() {
        return Err(OmdError::Dimension { expected: w1.dim(), got: w2.dim() });
    }
    if let Regularizer::Euclidean { beta } = reg {
        return Ok(*beta);
    }
    let sup = |lo: f64, hi: f64| -> f64 {
        match reg {
            Regularizer::Custom(c) => {
                // r'' is not assumed monotone here; sample the segment
                let mut m = (c.d2r)(lo).max((c.d2r)(hi));
                for j in 1..32 {
                    let s = lo + (hi - lo) * j as f64 / 32.0;
                    m = m.max((c.d2r)(s));
                }
                m
            }
            _ => reg.d2r(lo),
        }
    };
    let mut best: Option<f64> = None;
    for i in 0..w1.dim() {
        let (a, b) = (w1.coords[i], w2.coords[i]);
        if a != b {
            let v = sup(a.min(b), a.max(b));
            best = Some(best.map_or(v, |m: f64| m.max(v)));
        }
    }
    Ok(match best {
        Some(v) => v,
        None => w1.coords.iter().map(|&x| reg.d2r(x)).fold(f64::NEG_INFINITY, f64::max),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn bregman_examples() {
        let e = Regularizer::Euclidean { beta: 3.0 };
        assert_relative_eq!(bregman(&e, &Point::new(vec![1.0]), &Point::new(vec![0.0])).unwrap(), 1.5);
        let w = Point::new(vec![1.0 - 1e-12, 1e-12]);
        let u = Point::new(vec![0.5, 0.5]);
        let v = bregman(&Regularizer::NegEntropy, &w, &u).unwrap();
        assert!((v - 2f64.ln()).abs() < 1e-10);
        for reg in [Regularizer::NegEntropy, Regularizer::LogBarrier, Regularizer::Tsallis { q: 0.4 }] {
            assert_eq!(bregman(&reg, &u, &u).unwrap(), 0.0);
        }
        assert!(bregman(&Regularizer::LogBarrier, &Point::new(vec![1.0, 0.0]), &u).is_err());
    }

    #[test]
    fn entropy_vertex_comparator() {
        let e = Point::new(vec![0.0, 1.0]);
        let u = Point::uniform(2);
        assert_relative_eq!(bregman(&Regularizer::NegEntropy, &e, &u).unwrap(), 2f64.ln(), epsilon = 1e-15);
    }

    #[test]
    fn smoothness_examples() {
        let a = Point::new(vec![0.2, 0.8]);
        let b = Point::new(vec![0.4, 0.6]);
        assert_relative_eq!(effective_smoothness(&Regularizer::NegEntropy, &a, &b).unwrap(), 5.0);
        assert_relative_eq!(
            effective_smoothness(&Regularizer::Euclidean { beta: 7.0 }, &a, &b).unwrap(),
            7.0
        );
        // degenerate segment: r'' at the point, maximised over coordinates
        assert_relative_eq!(effective_smoothness(&Regularizer::LogBarrier, &a, &a).unwrap(), 25.0);
    }

    #[test]
    fn log_points_survive_underflow() {
        let p = Point::from_logs(vec![-800.0, 0.0]);
        assert_eq!(p.coords[0], 0.0);
        assert!(p.check_interior().is_ok());
        assert_eq!(gradient(&Regularizer::NegEntropy, &p)[0], -799.0);
        assert!(p.representations_agree());
    }
}
