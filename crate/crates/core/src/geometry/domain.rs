use nalgebra::{DMatrix, DVector};

use crate::error::{OmdError, Result};
use crate::numeric::kahan_sum;

/// Absolute tolerance used when testing `Aw = b` and `sum w = 1`.
pub const FEASIBILITY_TOL: f64 = 1e-9;

/// Standard-form polytope `{w : Aw = b, w >= 0}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Polytope {
    a: DMatrix<f64>,
    b: DVector<f64>,
    basis: Vec<Vec<f64>>,
    within_simplex: bool,
}

impl Polytope {
    /// Builds the polytope and computes a nullspace basis of `A`.
    pub fn new(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        if a.nrows() != b.len() {
            return Err(OmdError::Dimension { expected: a.nrows(), got: b.len() });
        }
        let basis = nullspace(&a)?;
        Ok(Self::finish(a, b, basis))
    }

    /// Builds the polytope from a known kernel basis, validating `Av = 0` and independence.
    pub fn with_basis(a: DMatrix<f64>, b: DVector<f64>, basis: Vec<Vec<f64>>) -> Result<Self> {
        if a.nrows() != b.len() {
            return Err(OmdError::Dimension { expected: a.nrows(), got: b.len() });
        }
        let dependent = dependent_rows(&a);
        if !dependent.is_empty() {
            return Err(OmdError::RankDeficient { rows: dependent });
        }
        let d = a.ncols();
        if basis.len() != d - a.nrows() {
            return Err(OmdError::Domain(format!(
                "basis has {} vectors, nullspace has dimension {}",
                basis.len(),
                d - a.nrows()
            )));
        }
        for (k, v) in basis.iter().enumerate() {
            if v.len() != d {
                return Err(OmdError::Dimension { expected: d, got: v.len() });
            }
            let av = &a * DVector::from_column_slice(v);
            if av.amax() > 1e-12 {
                return Err(OmdError::Domain(format!("basis vector {k} is not in ker(A)")));
            }
        }
        if !basis.is_empty() {
            let n = DMatrix::from_fn(basis.len(), d, |i, j| basis[i][j]);
            if !dependent_rows(&n).is_empty() {
                return Err(OmdError::Domain("basis vectors are linearly dependent".into()));
            }
        }
        Ok(Self::finish(a, b, basis))
    }

    fn finish(a: DMatrix<f64>, b: DVector<f64>, basis: Vec<Vec<f64>>) -> Self {
        let sums_vanish = basis.iter().all(|v| kahan_sum(v.iter().copied()).abs() < 1e-12);
        // minimum-norm solution of Aw = b carries the common coordinate sum
        let within_simplex = sums_vanish
            && (a.nrows() > 0)
            && {
                let aat = &a * a.transpose();
                match aat.cholesky() {
                    Some(ch) => {
                        let w0 = a.transpose() * ch.solve(&b);
                        (w0.sum() - 1.0).abs() < 1e-9
                    }
                    None => false,
                }
            };
        Polytope { a, b, basis, within_simplex }
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn basis(&self) -> &[Vec<f64>] {
        &self.basis
    }

    pub fn within_simplex(&self) -> bool {
        self.within_simplex
    }

    pub fn rows(&self) -> usize {
        self.a.nrows()
    }

    pub fn dim(&self) -> usize {
        self.a.ncols()
    }
}

/// Feasible region of a round's subproblem.
#[derive(Debug, Clone, PartialEq)]
pub enum Domain {
    Simplex { dim: usize },
    Polytope(Polytope),
    /// One-dimensional closed interval.
    Interval { lo: f64, hi: f64 },
}

impl Domain {
    pub fn simplex(dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(OmdError::Spec(format!("simplex dimension must be >= 2, got {dim}")));
        }
        Ok(Domain::Simplex { dim })
    }

    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(OmdError::Spec(format!("interval needs lo < hi, got [{lo}, {hi}]")));
        }
        Ok(Domain::Interval { lo, hi })
    }

    pub fn dim(&self) -> usize {
        match self {
            Domain::Simplex { dim } => *dim,
            Domain::Polytope(p) => p.dim(),
            Domain::Interval { .. } => 1,
        }
    }

    /// True when every feasible point has coordinate sum one.
    pub fn within_simplex(&self) -> bool {
        match self {
            Domain::Simplex { .. } => true,
            Domain::Polytope(p) => p.within_simplex(),
            Domain::Interval { .. } => false,
        }
    }

    /// Upper bound on any single coordinate of a feasible point.
    pub fn coordinate_cap(&self) -> f64 {
        match self {
            Domain::Interval { hi, .. } => *hi,
            d if d.within_simplex() => 1.0,
            _ => f64::INFINITY,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Domain::Simplex { .. } => "simplex",
            Domain::Polytope(_) => "polytope",
            Domain::Interval { .. } => "interval",
        }
    }

    /// Checks feasibility; the index names the violated constraint.
    ///
    /// Simplex: 0 is the sum row, `1 + i` is `w_i >= 0`.
    /// Polytope: `0..rows` are equality rows, `rows + i` is `w_i >= 0`.
    /// Interval: 0 is the lower end, 1 the upper end.
    pub fn check_feasible(&self, w: &[f64]) -> Result<()> {
        if w.len() != self.dim() {
            return Err(OmdError::Dimension { expected: self.dim(), got: w.len() });
        }
        if let Some(i) = w.iter().position(|x| !x.is_finite()) {
            return Err(OmdError::Domain(format!("coordinate {i} is not finite")));
        }
        match self {
            Domain::Simplex { dim } => {
                let s = kahan_sum(w.iter().copied());
                let tol = FEASIBILITY_TOL * (*dim as f64).sqrt();
                if (s - 1.0).abs() > tol {
                    return Err(OmdError::Infeasible { index: 0, violation: (s - 1.0).abs() });
                }
                nonneg(w, 1)
            }
            Domain::Polytope(p) => {
                for r in 0..p.rows() {
                    let row = p.a.row(r);
                    let lhs = kahan_sum(row.iter().zip(w).map(|(a, x)| a * x));
                    let scale = 1.0 + p.b[r].abs() + row.iter().map(|a| a.abs()).sum::<f64>();
                    if (lhs - p.b[r]).abs() > FEASIBILITY_TOL * scale {
                        return Err(OmdError::Infeasible {
                            index: r,
                            violation: (lhs - p.b[r]).abs(),
                        });
                    }
                }
                nonneg(w, p.rows())
            }
            Domain::Interval { lo, hi } => {
                if w[0] < *lo {
                    return Err(OmdError::Infeasible { index: 0, violation: lo - w[0] });
                }
                if w[0] > *hi {
                    return Err(OmdError::Infeasible { index: 1, violation: w[0] - hi });
                }
                Ok(())
            }
        }
    }

    /// Uniform distribution for simplex-type domains, the midpoint for an interval.
    pub fn center(&self) -> Vec<f64> {
        match self {
            Domain::Interval { lo, hi } => vec![0.5 * (lo + hi)],
            d => vec![1.0 / d.dim() as f64; d.dim()],
        }
    }

    /// Projects a direction onto the tangent space `{u : Au = 0}` (or `sum u = 0`).
    pub fn project_tangent(&self, u: &[f64]) -> Vec<f64> {
        match self {
            Domain::Interval { .. } => u.to_vec(),
            Domain::Simplex { .. } => {
                let mean = kahan_sum(u.iter().copied()) / u.len() as f64;
                u.iter().map(|x| x - mean).collect()
            }
            Domain::Polytope(p) => {
                let uv = DVector::from_column_slice(u);
                let aat = &p.a * p.a.transpose();
                match aat.cholesky() {
                    Some(ch) => {
                        let y = ch.solve(&(&p.a * &uv));
                        (uv - p.a.transpose() * y).iter().copied().collect()
                    }
                    None => u.to_vec(),
                }
            }
        }
    }
}

fn nonneg(w: &[f64], offset: usize) -> Result<()> {
    match w.iter().position(|&x| x < 0.0) {
        Some(i) => Err(OmdError::Infeasible { index: offset + i, violation: -w[i] }),
        None => Ok(()),
    }
}

/// Row indices that are linear combinations of earlier rows.
pub fn dependent_rows(a: &DMatrix<f64>) -> Vec<usize> {
    let (m, n) = a.shape();
    let scale = a.amax().max(1.0);
    let tol = 1e-10 * scale * (m.max(n) as f64);
    let mut reduced: Vec<Vec<f64>> = Vec::new();
    let mut pivots: Vec<usize> = Vec::new();
    let mut dependent = Vec::new();
    for r in 0..m {
        let mut row: Vec<f64> = a.row(r).iter().copied().collect();
        for (basis_row, &p) in reduced.iter().zip(&pivots) {
            let f = row[p] / basis_row[p];
            if f != 0.0 {
                for (x, y) in row.iter_mut().zip(basis_row) {
                    *x -= f * y;
                }
            }
        }
        match (0..n).max_by(|&i, &j| row[i].abs().total_cmp(&row[j].abs())) {
            Some(p) if row[p].abs() > tol => {
                pivots.push(p);
                reduced.push(row);
            }
            _ => dependent.push(r),
        }
    }
    dependent
}

/// Nullspace basis of `A` from its reduced row echelon form.
pub fn nullspace(a: &DMatrix<f64>) -> Result<Vec<Vec<f64>>> {
    let dependent = dependent_rows(a);
    if !dependent.is_empty() {
        return Err(OmdError::RankDeficient { rows: dependent });
    }
    let (m, n) = a.shape();
    let mut r = a.clone();
    let tol = 1e-12 * r.amax().max(1.0);
    let mut pivot_cols = Vec::with_capacity(m);
    let mut row = 0;
    for col in 0..n {
        if row == m {
            break;
        }
        let (best, val) = (row..m)
            .map(|i| (i, r[(i, col)].abs()))
            .max_by(|x, y| x.1.total_cmp(&y.1))
            .unwrap();
        if val <= tol {
            continue;
        }
        r.swap_rows(row, best);
        let piv = r[(row, col)];
        for j in 0..n {
            r[(row, j)] /= piv;
        }
        for i in 0..m {
            if i != row {
                let f = r[(i, col)];
                if f != 0.0 {
                    for j in 0..n {
                        let v = r[(row, j)];
                        r[(i, j)] -= f * v;
                    }
                }
            }
        }
        pivot_cols.push(col);
        row += 1;
    }
    let free: Vec<usize> = (0..n).filter(|c| !pivot_cols.contains(c)).collect();
    Ok(free
        .iter()
        .map(|&f| {
            let mut v = vec![0.0; n];
            v[f] = 1.0;
            for (i, &p) in pivot_cols.iter().enumerate() {
                v[p] = -r[(i, f)];
            }
            v
        })
        .collect())
}

/// Basis of the tangent space of the feasible region.
///
/// Simplex: `e_i - e_d`. Polytope: the stored basis.
pub fn kernel_basis(dom: &Domain) -> Result<Vec<Vec<f64>>> {
    match dom {
        Domain::Simplex { dim } => Ok((0..dim - 1)
            .map(|i| {
                let mut v = vec![0.0; *dim];
                v[i] = 1.0;
                v[dim - 1] = -1.0;
                v
            })
            .collect()),
        Domain::Polytope(p) => Ok(p.basis.clone()),
        Domain::Interval { .. } => Err(OmdError::Unsupported(
            "an interval has no equality constraints".into(),
        )),
    }
}
