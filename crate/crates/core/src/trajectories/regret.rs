use super::Trajectory;
use crate::error::Result;
use crate::geometry::{Domain, Point};
use crate::lp;
use crate::numeric::{dot, KahanSum};

/// Vertex enumeration is used up to this many equality rows.
const ENUMERATION_ROWS: usize = 20;
const ENUMERATION_LIMIT: usize = 100_000;

#[derive(Debug, Clone, PartialEq)]
pub struct RegretReport {
    pub cumulative_loss: f64,
    pub comparator_loss: f64,
    pub regret: f64,
    pub comparator: Point,
    /// `<l_t, w_t - comparator>` per round.
    pub per_round_regret: Vec<f64>,
}

impl RegretReport {
    /// Running sum of `per_round_regret`.
    pub fn cumulative(&self) -> Vec<f64> {
        let mut acc = KahanSum::new();
        self.per_round_regret
            .iter()
            .map(|r| {
                acc.add(*r);
                acc.value()
            })
            .collect()
    }
}

/// Best fixed decision for the summed loss.
///
/// Simplex ties go to the lowest index, interval ties to the lower end.
pub fn best_in_hindsight(dom: &Domain, total: &[f64]) -> Result<Point> {
    match dom {
        Domain::Simplex { dim } => {
            let mut best = 0;
            for i in 1..*dim {
                if total[i] < total[best] {
                    best = i;
                }
            }
            let mut v = vec![0.0; *dim];
            v[best] = 1.0;
            Ok(Point::new(v))
        }
        Domain::Interval { lo, hi } => Ok(Point::new(vec![if total[0] > 0.0 { *lo } else if total[0] < 0.0 { *hi } else { *lo }])),
        Domain::Polytope(p) => {
            if p.rows() <= ENUMERATION_ROWS {
                if let Some(vs) = lp::enumerate_vertices(p, ENUMERATION_LIMIT) {
                    let mut best: Option<(f64, &Vec<f64>)> = None;
                    for v in &vs {
                        let val = dot(total, v);
                        if best.is_none_or(|(b, _)| val < b) {
                            best = Some((val, v));
                        }
                    }
                    if let Some((_, v)) = best {
                        return Ok(Point::new(v.clone()));
                    }
                }
            }
            Ok(Point::new(lp::min_vertex(p, total)?))
        }
    }
}

/// Regret against `comparator`, or against the best fixed decision when absent.
pub fn regret(traj: &Trajectory, comparator: Option<&Point>) -> Result<RegretReport> {
    let d = traj.dim();
    let mut total = vec![KahanSum::new(); d];
    for l in &traj.losses {
        for (a, x) in total.iter_mut().zip(l) {
            a.add(*x);
        }
    }
    let total: Vec<f64> = total.iter().map(KahanSum::value).collect();
    let comparator = match comparator {
        Some(c) => c.clone(),
        None => best_in_hindsight(&traj.dom, &total)?,
    };
    let per_round: Vec<f64> = traj
        .losses
        .iter()
        .zip(&traj.iterates)
        .map(|(l, w)| {
            let diff: Vec<f64> = w.coords.iter().zip(&comparator.coords).map(|(a, b)| a - b).collect();
            dot(l, &diff)
        })
        .collect();
    let cumulative_loss = traj.cumulative_loss();
    let comparator_loss = traj
        .losses
        .iter()
        .map(|l| dot(l, &comparator.coords))
        .collect::<KahanSum>()
        .value();
    Ok(RegretReport {
        cumulative_loss,
        comparator_loss,
        regret: cumulative_loss - comparator_loss,
        comparator,
        per_round_regret: per_round,
    })
}
