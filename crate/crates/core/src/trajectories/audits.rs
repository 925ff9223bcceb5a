//! Per-coordinate movement audits over simplex trajectories.

use super::Trajectory;
use crate::error::{OmdError, Result};
use crate::geometry::Domain;

#[derive(Debug, Clone, PartialEq)]
pub struct AuditViolation {
    /// 1-based iterate index.
    pub t: usize,
    pub i: usize,
    pub observed: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AuditReport {
    pub checked: usize,
    pub violations: Vec<AuditViolation>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Epsilon the audit may assume: the stated one, or the largest slack actually used.
fn effective_eps(traj: &Trajectory) -> f64 {
    traj.eps.max(traj.max_slack())
}

fn require_simplex(traj: &Trajectory) -> Result<()> {
    match traj.dom {
        Domain::Simplex { .. } => Ok(()),
        _ => Err(OmdError::Unsupported("movement audits are stated over the simplex".into())),
    }
}

/// `|w_t^i - w_{t+1}^i| < 4 eta / h + sqrt(eps / h)` with `h = min r''` of the two values.
pub fn max_step_audit(traj: &Trajectory) -> Result<AuditReport> {
    require_simplex(traj)?;
    if traj.eta > 0.25 {
        return Err(OmdError::Precondition(format!("max-step audit needs eta <= 1/4, got {}", traj.eta)));
    }
    let eps = effective_eps(traj);
    let mut report = AuditReport::default();
    for (t, pair) in traj.iterates.windows(2).enumerate() {
        for i in 0..traj.dim() {
            let (a, b) = (pair[0].coords[i], pair[1].coords[i]);
            let h = traj.reg.d2r(a).min(traj.reg.d2r(b));
            let bound = 4.0 * traj.eta / h + (eps / h).sqrt();
            report.checked += 1;
            if !((a - b).abs() < bound) {
                report.violations.push(AuditViolation { t: t + 1, i, observed: (a - b).abs(), bound });
            }
        }
    }
    Ok(report)
}

/// Whenever `eps <= (w_t^i)^nu / (16 c1)`, both neighbours keep at least half of `w_t^i`.
pub fn not_too_far_audit(traj: &Trajectory) -> Result<AuditReport> {
    require_simplex(traj)?;
    let k = traj
        .reg
        .constants()
        .ok_or_else(|| OmdError::Unsupported(format!("{} is not a barrier", traj.reg.name())))?;
    if traj.eta > 1.0 / (16.0 * k.c1) {
        return Err(OmdError::Precondition(format!(
            "not-too-far audit needs eta <= 1/(16 c1) = {}, got {}",
            1.0 / (16.0 * k.c1),
            traj.eta
        )));
    }
    let eps = effective_eps(traj);
    let n = traj.iterates.len();
    let mut report = AuditReport::default();
    for t in 0..n {
        for i in 0..traj.dim() {
            let w = traj.iterates[t].coords[i];
            if eps > w.powf(k.nu) / (16.0 * k.c1) {
                continue;
            }
            for s in [t.wrapping_sub(1), t + 1] {
                if s < n {
                    let v = traj.iterates[s].coords[i];
                    report.checked += 1;
                    if v < 0.5 * w {
                        report.violations.push(AuditViolation { t: t + 1, i, observed: v, bound: 0.5 * w });
                    }
                }
            }
        }
    }
    Ok(report)
}
