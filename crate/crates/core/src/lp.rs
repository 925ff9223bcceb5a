// Linear minimization over {Aw = b, w >= 0}.

use minilp::{ComparisonOp, OptimizationDirection, Problem};
use nalgebra::{DMatrix, DVector};

use crate::error::{OmdError, Result};
use crate::geometry::Polytope;

/// Vertex minimizing `<g, s>` over the polytope.
pub(crate) fn min_vertex(p: &Polytope, g: &[f64]) -> Result<Vec<f64>> {
    let d = p.dim();
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let vars: Vec<_> = g.iter().map(|&c| lp.add_var(c, (0.0, f64::INFINITY))).collect();
    for r in 0..p.rows() {
        let terms: Vec<_> = (0..d)
            .filter(|&j| p.a()[(r, j)] != 0.0)
            .map(|j| (vars[j], p.a()[(r, j)]))
            .collect();
        lp.add_constraint(terms.as_slice(), ComparisonOp::Eq, p.b()[r]);
    }
    let sol = lp.solve().map_err(|e| OmdError::Lp(e.to_string()))?;
    let raw: Vec<f64> = vars.iter().map(|&v| sol[v].max(0.0)).collect();
    Ok(refine_on_support(p, raw))
}

/// Re-solves `A_S s_S = b` on the vertex support to remove simplex-tableau drift.
fn refine_on_support(p: &Polytope, s: Vec<f64>) -> Vec<f64> {
    let support: Vec<usize> = (0..s.len()).filter(|&j| s[j] > 1e-12).collect();
    if support.is_empty() || support.len() > p.rows() {
        return s;
    }
    let a_s = DMatrix::from_fn(p.rows(), support.len(), |i, k| p.a()[(i, support[k])]);
    let svd = a_s.clone().svd(true, true);
    let Ok(x) = svd.solve(p.b(), 1e-12) else {
        return s;
    };
    let residual = (&a_s * &x - p.b()).amax();
    if residual > 1e-13 * (1.0 + p.b().amax()) || x.iter().any(|&v| v < -1e-12) {
        return s;
    }
    let mut out = vec![0.0; s.len()];
    for (k, &j) in support.iter().enumerate() {
        out[j] = x[k].max(0.0);
    }
    out
}

/// All vertices of a small polytope, by basis enumeration.
///
/// Returns `None` when the number of candidate bases exceeds `limit`.
pub(crate) fn enumerate_vertices(p: &Polytope, limit: usize) -> Option<Vec<Vec<f64>>> {
    let (m, d) = (p.rows(), p.dim());
    let mut count: f64 = 1.0;
    for k in 0..m {
        count *= (d - k) as f64 / (k + 1) as f64;
    }
    if count > limit as f64 {
        return None;
    }
    let mut out: Vec<Vec<f64>> = Vec::new();
    let mut idx: Vec<usize> = (0..m).collect();
    loop {
        let a_s = DMatrix::from_fn(m, m, |i, k| p.a()[(i, idx[k])]);
        if let Some(lu) = a_s.clone().lu().solve(p.b()) {
            let ok_solve = (&a_s * &lu - p.b()).amax() < 1e-10;
            if ok_solve && lu.iter().all(|&v| v >= -1e-12) {
                let mut v = vec![0.0; d];
                for (k, &j) in idx.iter().enumerate() {
                    v[j] = lu[k].max(0.0);
                }
                if !out.iter().any(|u| dist(u, &v) < 1e-10) {
                    out.push(v);
                }
            }
        }
        // next combination in lexicographic order
        let Some(i) = (0..m).rev().find(|&i| idx[i] != i + d - m) else {
            return Some(out);
        };
        idx[i] += 1;
        for j in i + 1..m {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub(crate) fn weighted_normal_solve(
    a: &DMatrix<f64>,
    weights: &[f64],
    rhs: &[f64],
) -> Option<DVector<f64>> {
    // (A W A^T) mu = A W rhs
    let (m, d) = a.shape();
    let mut aw = a.clone();
    for j in 0..d {
        for i in 0..m {
            aw[(i, j)] *= weights[j];
        }
    }
    let lhs = &aw * a.transpose();
    let r = &aw * DVector::from_column_slice(rhs);
    let diag: Vec<f64> = (0..m).map(|i| lhs[(i, i)].max(f64::MIN_POSITIVE).sqrt()).collect();
    let scaled = DMatrix::from_fn(m, m, |i, j| lhs[(i, j)] / (diag[i] * diag[j]));
    let rs = DVector::from_fn(m, |i, _| r[i] / diag[i]);
    let y = match scaled.clone().cholesky() {
        Some(ch) => ch.solve(&rs),
        None => scaled.lu().solve(&rs)?,
    };
    Some(DVector::from_fn(m, |i, _| y[i] / diag[i]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> Polytope {
        // {w in R^4 : w1 + w2 = 0.5, w3 + w4 = 0.5}
        let a = DMatrix::from_row_slice(2, 4, &[1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0]);
        Polytope::new(a, DVector::from_column_slice(&[0.5, 0.5])).unwrap()
    }

    #[test]
    fn lp_picks_cheapest_vertex() {
        let v = min_vertex(&square(), &[1.0, -1.0, 0.5, 0.2]).unwrap();
        assert_eq!(v, vec![0.0, 0.5, 0.0, 0.5]);
    }

    #[test]
    fn enumeration_finds_four_vertices() {
        let vs = enumerate_vertices(&square(), 1000).unwrap();
        assert_eq!(vs.len(), 4);
    }
}
