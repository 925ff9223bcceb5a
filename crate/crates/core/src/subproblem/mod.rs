//! Per-round objective `phi(w) = eta <loss, w> + D_R(w || anchor)`, its exact and
//! iterative solvers, and epsilon-minimizer certificates.

mod certify;
mod solve;

pub use certify::{
    approx_optimality_gap, certify, perturb_to_slack, reference_solution, solve_reference, Reference,
};
pub use solve::{
    dual_root_step, exact_step, exact_step_polytope, frank_wolfe, newton_in_span, FW_MAX_ITER,
};

use crate::error::{OmdError, Result};
use crate::geometry::{coord_bregman, coord_gradient, Domain, Point, Regularizer};
use crate::numeric::KahanSum;

/// Smallest epsilon an honest solver is asked to certify.
pub const CERT_FLOOR: f64 = 1e-12;

/// How a certificate's lower bound was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CertMethod {
    ClosedForm,
    DualRoot,
    FwGap,
    /// Validity follows from an analytic criterion; no numeric bound was computed.
    Analytic,
}

impl CertMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            CertMethod::ClosedForm => "closed_form",
            CertMethod::DualRoot => "dual_root",
            CertMethod::FwGap => "fw_gap",
            CertMethod::Analytic => "analytic",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepCertificate {
    pub value_at_candidate: f64,
    pub min_lower_bound: f64,
    pub slack: f64,
    pub method: CertMethod,
    /// Set when the requested epsilon was below [`CERT_FLOOR`] and the floor was used instead.
    pub relaxed: bool,
}

/// One round's subproblem. All fields are borrowed.
#[derive(Debug, Clone, Copy)]
pub struct StepObjective<'a> {
    pub eta: f64,
    pub loss: &'a [f64],
    pub anchor: &'a Point,
    pub reg: &'a Regularizer,
    pub dom: &'a Domain,
}

impl<'a> StepObjective<'a> {
    pub fn new(
        eta: f64,
        loss: &'a [f64],
        anchor: &'a Point,
        reg: &'a Regularizer,
        dom: &'a Domain,
    ) -> Result<Self> {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(OmdError::Spec(format!("step size must be positive, got {eta}")));
        }
        let d = dom.dim();
        if loss.len() != d {
            return Err(OmdError::Dimension { expected: d, got: loss.len() });
        }
        dom.check_feasible(&anchor.coords)?;
        if reg.is_barrier() {
            anchor.check_interior()?;
        }
        Ok(StepObjective { eta, loss, anchor, reg, dom })
    }

    pub fn dim(&self) -> usize {
        self.loss.len()
    }

    /// Objective value without a feasibility check.
    pub fn value_unchecked(&self, w: &Point) -> Result<f64> {
        let mut acc = KahanSum::new();
        for i in 0..self.dim() {
            acc.add(self.eta * self.loss[i] * w.coords[i]);
            acc.add(coord_bregman(self.reg, w, self.anchor, i)?);
        }
        Ok(acc.value())
    }

    /// `grad phi(w)_i = eta loss_i + r'(w_i) - r'(anchor_i)`.
    pub fn gradient(&self, w: &Point) -> Vec<f64> {
        (0..self.dim()).map(|i| self.coord_gradient(w, i)).collect()
    }

    fn coord_gradient(&self, w: &Point, i: usize) -> f64 {
        let mirror = if self.reg.is_entropy() {
            w.ln(i) - self.anchor.ln(i)
        } else {
            coord_gradient(self.reg, w, i) - coord_gradient(self.reg, self.anchor, i)
        };
        self.eta * self.loss[i] + mirror
    }

    /// `phi(w + t) - phi(w)` for an exact increment vector `t`.
    pub fn increment_difference(&self, w: &Point, t: &[f64]) -> Result<f64> {
        let mut acc = KahanSum::new();
        for i in 0..self.dim() {
            if t[i] != 0.0 {
                acc.add(self.coord_gradient(w, i) * t[i]);
                acc.add(self.reg.bregman_increment(w.coords[i], t[i])?);
            }
        }
        Ok(acc.value())
    }
}

/// Compensated evaluation of `phi(w)`; errors name the violated constraint.
pub fn objective_eval(obj: &StepObjective, w: &Point) -> Result<f64> {
    obj.dom.check_feasible(&w.coords)?;
    if obj.reg.is_barrier() && !obj.reg.is_entropy() {
        w.check_interior()?;
    }
    obj.value_unchecked(w)
}

/// Moves `w` by `t`, keeping log coordinates in step when present.
pub(crate) fn shifted(w: &Point, t: &[f64], keep_logs: bool) -> Point {
    let coords: Vec<f64> = w.coords.iter().zip(t).map(|(x, dx)| x + dx).collect();
    if keep_logs {
        let logs = (0..w.dim())
            .map(|i| {
                if t[i] == 0.0 {
                    w.ln(i)
                } else {
                    w.ln(i) + (t[i] / w.coords[i]).ln_1p()
                }
            })
            .collect();
        Point { coords, log_coords: Some(logs) }
    } else {
        Point::new(coords)
    }
}
