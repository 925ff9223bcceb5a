//! Loss streams and the hard polytope family with its hardness event.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::error::{OmdError, Result};
use crate::geometry::{Domain, Point, Polytope};
use crate::numeric::{ceil_tolerant, fmt_sig17, splitmix64};
use crate::par::{self, Execution};

/// Marginal law of one loss coordinate.
#[derive(Debug, Clone, PartialEq)]
pub enum CoordDist {
    Constant(f64),
    Uniform { lo: f64, hi: f64 },
    Normal { mean: f64, sd: f64 },
}

impl CoordDist {
    fn bounded(&self) -> bool {
        match *self {
            CoordDist::Constant(c) => c.abs() <= 1.0,
            CoordDist::Uniform { lo, hi } => lo >= -1.0 && hi <= 1.0,
            CoordDist::Normal { sd, mean } => sd == 0.0 && mean.abs() <= 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LossSpec {
    Constant(Vec<f64>),
    /// Phases of `(length, vector)`; lengths must sum to the horizon.
    Switching(Vec<(usize, Vec<f64>)>),
    /// Independent coordinates, independent rounds.
    Iid(Vec<CoordDist>),
    /// Losses for the hard polytope with block size `m`.
    ///
    /// `degenerate` replaces every Gaussian draw by zero (test injection).
    GaussianPolytope { m: usize, eta: f64, degenerate: bool },
    Explicit(Vec<Vec<f64>>),
}

impl LossSpec {
    pub fn dim(&self) -> usize {
        match self {
            LossSpec::Constant(v) => v.len(),
            LossSpec::Switching(p) => p.first().map_or(0, |(_, v)| v.len()),
            LossSpec::Iid(c) => c.len(),
            LossSpec::GaussianPolytope { m, .. } => 5 * m + 2,
            LossSpec::Explicit(rows) => rows.first().map_or(0, |r| r.len()),
        }
    }

    /// Coordinate laws of the hard-polytope stream.
    ///
    /// Block one is 0, blocks two to four are 1, block five and coordinate
    /// `5m+1` are Gaussian (the latter with mean `sqrt(eta d)`), the last is 0.
    pub fn gaussian_polytope_coords(m: usize, eta: f64) -> Vec<CoordDist> {
        let d = 5 * m + 2;
        let mut c = Vec::with_capacity(d);
        c.extend(std::iter::repeat_n(CoordDist::Constant(0.0), m));
        c.extend(std::iter::repeat_n(CoordDist::Constant(1.0), 3 * m));
        c.extend(std::iter::repeat_n(CoordDist::Normal { mean: 0.0, sd: 1.0 }, m));
        c.push(CoordDist::Normal { mean: (eta * d as f64).sqrt(), sd: 1.0 });
        c.push(CoordDist::Constant(0.0));
        c
    }
}

/// A realized `T x d` loss matrix and the recipe that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct LossStream {
    pub spec: LossSpec,
    pub horizon: usize,
    pub seed: u64,
    pub realized: Vec<Vec<f64>>,
    /// False when some entry may leave `[-1, 1]`.
    pub bounded: bool,
}

impl LossStream {
    pub fn dim(&self) -> usize {
        self.realized.first().map_or(0, |r| r.len())
    }

    /// Sum of all rows.
    pub fn total(&self) -> Vec<f64> {
        let mut acc = vec![crate::numeric::KahanSum::new(); self.dim()];
        for row in &self.realized {
            for (a, x) in acc.iter_mut().zip(row) {
                a.add(*x);
            }
        }
        acc.iter().map(|a| a.value()).collect()
    }

    /// Writes `t,l1,...,ld` rows with 17 significant digits.
    pub fn to_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.dim()).map(|i| format!("l{i}")));
        w.write_record(&header).map_err(io_err)?;
        for (t, row) in self.realized.iter().enumerate() {
            let mut rec = vec![(t + 1).to_string()];
            rec.extend(row.iter().map(|&x| fmt_sig17(x)));
            w.write_record(&rec).map_err(io_err)?;
        }
        w.flush().map_err(|e| OmdError::Spec(format!("csv write failed: {e}")))?;
        Ok(())
    }
}

fn io_err(e: csv::Error) -> OmdError {
    OmdError::Spec(format!("csv write failed: {e}"))
}

enum Sampler {
    Const(f64),
    Uniform(Uniform<f64>),
    Normal(Normal<f64>),
}

/// Per-coordinate ChaCha8 streams; coordinate `i` reads stream `i` of the seed.
struct CoordSampler {
    rngs: Vec<ChaCha8Rng>,
    samplers: Vec<Sampler>,
}

impl CoordSampler {
    fn new(coords: &[CoordDist], seed: u64, degenerate: bool) -> Result<Self> {
        let mut rngs = Vec::with_capacity(coords.len());
        let mut samplers = Vec::with_capacity(coords.len());
        for (i, c) in coords.iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            rngs.push(rng);
            samplers.push(match *c {
                CoordDist::Constant(v) => Sampler::Const(v),
                CoordDist::Normal { .. } if degenerate => Sampler::Const(0.0),
                CoordDist::Uniform { lo, hi } => Sampler::Uniform(
                    Uniform::new_inclusive(lo, hi)
                        .map_err(|e| OmdError::Spec(format!("coordinate {i}: {e}")))?,
                ),
                CoordDist::Normal { mean, sd } => Sampler::Normal(
                    Normal::new(mean, sd).map_err(|e| OmdError::Spec(format!("coordinate {i}: {e}")))?,
                ),
            });
        }
        Ok(CoordSampler { rngs, samplers })
    }

    fn next_row(&mut self) -> Vec<f64> {
        self.rngs
            .iter_mut()
            .zip(&self.samplers)
            .map(|(rng, s)| match s {
                Sampler::Const(v) => *v,
                Sampler::Uniform(u) => u.sample(rng),
                Sampler::Normal(n) => n.sample(rng),
            })
            .collect()
    }
}

fn iid_coords(spec: &LossSpec) -> Option<(Vec<CoordDist>, bool)> {
    match spec {
        LossSpec::Iid(c) => Some((c.clone(), false)),
        LossSpec::GaussianPolytope { m, eta, degenerate } => {
            Some((LossSpec::gaussian_polytope_coords(*m, *eta), *degenerate))
        }
        _ => None,
    }
}

/// Realizes `spec` over `horizon` rounds; a pure function of its arguments.
pub fn make_loss_stream(spec: &LossSpec, horizon: usize, seed: u64) -> Result<LossStream> {
    if horizon == 0 {
        return Err(OmdError::Spec("horizon must be positive".into()));
    }
    let d = spec.dim();
    if d == 0 {
        return Err(OmdError::Spec("loss spec has no coordinates".into()));
    }
    let in_range = |v: &[f64]| v.iter().all(|x| x.abs() <= 1.0);
    let (realized, bounded) = match spec {
        LossSpec::Constant(v) => (vec![v.clone(); horizon], in_range(v)),
        LossSpec::Switching(phases) => {
            let total: usize = phases.iter().map(|p| p.0).sum();
            if total != horizon {
                return Err(OmdError::Spec(format!(
                    "phase lengths sum to {total}, horizon is {horizon}"
                )));
            }
            if let Some((_, v)) = phases.iter().find(|(_, v)| v.len() != d) {
                return Err(OmdError::Dimension { expected: d, got: v.len() });
            }
            let rows: Vec<Vec<f64>> = phases
                .iter()
                .flat_map(|(n, v)| std::iter::repeat_n(v.clone(), *n))
                .collect();
            let bounded = phases.iter().all(|(_, v)| in_range(v));
            (rows, bounded)
        }
        LossSpec::Explicit(rows) => {
            if rows.len() != horizon {
                return Err(OmdError::Spec(format!(
                    "explicit stream has {} rows, horizon is {horizon}",
                    rows.len()
                )));
            }
            if let Some(r) = rows.iter().find(|r| r.len() != d) {
                return Err(OmdError::Dimension { expected: d, got: r.len() });
            }
            (rows.clone(), rows.iter().all(|r| in_range(r)))
        }
        LossSpec::Iid(_) | LossSpec::GaussianPolytope { .. } => {
            let (coords, degenerate) = iid_coords(spec).expect("iid spec");
            let mut s = CoordSampler::new(&coords, seed, degenerate)?;
            let rows = (0..horizon).map(|_| s.next_row()).collect();
            let bounded = coords.iter().all(|c| c.bounded()) || degenerate;
            (rows, bounded)
        }
    };
    Ok(LossStream { spec: spec.clone(), horizon, seed, realized, bounded })
}

/// The standard-form polytope on which stochastic entropy losses force large regret.
#[derive(Debug, Clone)]
pub struct HardPolytope {
    pub m: usize,
    pub d: usize,
    pub domain: Domain,
    pub w1: Point,
    pub basis: Vec<Vec<f64>>,
    pub tau: usize,
    pub eta: f64,
    pub eps: f64,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct HardPolytopeOptions {
    /// Use this block size instead of the epsilon rule.
    pub block: Option<usize>,
    /// Enforce `m >= ceil(128 ln(2T))` for this horizon.
    pub horizon_floor: Option<usize>,
}

/// Block size `max(8, ceil(16 ln(1/eps)))`, optionally floored at `ceil(128 ln(2T))`.
pub fn hard_block_size(eps: f64, horizon_floor: Option<usize>) -> usize {
    let mut m = (ceil_tolerant(16.0 * (1.0 / eps).ln()) as usize).max(8);
    if let Some(t) = horizon_floor {
        m = m.max(ceil_tolerant(128.0 * (2.0 * t as f64).ln()) as usize);
    }
    m
}

/// Constraint matrix with `4m+1` rows over `d = 5m+2` coordinates.
pub fn hard_polytope_matrix(m: usize) -> DMatrix<f64> {
    let d = 5 * m + 2;
    let mut a = DMatrix::zeros(4 * m + 1, d);
    for i in 0..m {
        a[(i, m + i)] = 1.0;
        a[(i, 2 * m + i)] = 1.0;
        a[(i, 3 * m + i)] = -2.0;
        a[(m + i, m + i)] = 1.0;
        a[(m + i, 2 * m + i)] = -1.0;
        a[(2 * m + i, i)] = 1.0;
        a[(2 * m + i, m + i)] = 3.0;
        a[(2 * m + i, 4 * m + i)] = 1.0;
        a[(3 * m + i, 4 * m + i)] = 1.0;
        a[(3 * m + i, 5 * m)] = -1.0;
    }
    a[(4 * m, 5 * m)] = 1.0;
    a[(4 * m, 5 * m + 1)] = 1.0;
    a
}

/// Explicit kernel basis: `v_i = 3e_i - e_{m+i} - e_{2m+i} - e_{3m+i}` and
/// `v_{m+1} = sum_{i<=m} e_i + e_{5m+2} - sum_{i=4m+1}^{5m+1} e_i` (1-based).
pub fn hard_polytope_basis(m: usize) -> Vec<Vec<f64>> {
    let d = 5 * m + 2;
    let mut basis = Vec::with_capacity(m + 1);
    for i in 0..m {
        let mut v = vec![0.0; d];
        v[i] = 3.0;
        v[m + i] = -1.0;
        v[2 * m + i] = -1.0;
        v[3 * m + i] = -1.0;
        basis.push(v);
    }
    let mut v = vec![0.0; d];
    for i in 0..m {
        v[i] = 1.0;
    }
    for x in v.iter_mut().take(5 * m + 1).skip(4 * m) {
        *x = -1.0;
    }
    v[5 * m + 1] = 1.0;
    basis.push(v);
    basis
}

pub fn build_hard_polytope(eps: f64, eta: f64) -> Result<HardPolytope> {
    build_hard_polytope_with(eps, eta, HardPolytopeOptions::default())
}

pub fn build_hard_polytope_with(eps: f64, eta: f64, opts: HardPolytopeOptions) -> Result<HardPolytope> {
    if !(eps > 0.0 && eps < 4.0 * eta) {
        return Err(OmdError::Precondition(format!(
            "hard polytope needs 0 < eps < 4 eta (eps = {eps:.3e}, 4 eta = {:.3e})",
            4.0 * eta
        )));
    }
    let m = match opts.block {
        Some(m) => {
            if m == 0 {
                return Err(OmdError::Spec("block size must be positive".into()));
            }
            m
        }
        None => hard_block_size(eps, opts.horizon_floor),
    };
    let d = 5 * m + 2;
    let a = hard_polytope_matrix(m);
    let w1 = vec![1.0 / d as f64; d];
    let b = &a * DVector::from_column_slice(&w1);
    let basis = hard_polytope_basis(m);
    let poly = Polytope::with_basis(a, b, basis.clone())?;
    if !poly.within_simplex() {
        return Err(OmdError::Domain("hard polytope is not contained in the simplex".into()));
    }
    let domain = Domain::Polytope(poly);
    domain.check_feasible(&w1)?;
    let mut warnings = Vec::new();
    if d as f64 > 1.0 / eta {
        warnings.push(format!("d = {d} exceeds 1/eta = {:.1}", 1.0 / eta));
    }
    Ok(HardPolytope {
        m,
        d,
        domain,
        w1: Point::uniform(d),
        basis,
        tau: ceil_tolerant(3.0 / eta) as usize,
        eta,
        eps,
        warnings,
    })
}

/// Which parts of the hardness event are enforced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventCheck {
    /// Prefix condition and the per-round cap.
    Full,
    /// Prefix condition only (diagnostic).
    PrefixOnly,
}

fn block_sum(row: &[f64], m: usize) -> f64 {
    row[4 * m..=5 * m].iter().sum()
}

/// Hardness event: the block sum over the first `tau` rounds is `<= 0` and
/// every round's block sum is `<= m/16`.
pub fn hardness_event(stream: &LossStream, m: usize, tau: usize) -> bool {
    event_holds(&stream.realized, m, tau, EventCheck::Full)
}

pub fn event_holds(rows: &[Vec<f64>], m: usize, tau: usize, check: EventCheck) -> bool {
    let cap = m as f64 / 16.0;
    let mut prefix = 0.0;
    for (t, row) in rows.iter().enumerate() {
        let s = block_sum(row, m);
        if check == EventCheck::Full && s > cap {
            return false;
        }
        if t < tau {
            prefix += s;
        }
    }
    prefix <= 0.0
}

fn sub_seed(seed: u64, k: usize) -> u64 {
    splitmix64(seed ^ splitmix64(k as u64))
}

/// Draws one stream for `sub`, rejecting as soon as the event is decided false.
fn try_stream(
    coords: &[CoordDist],
    degenerate: bool,
    sub: u64,
    horizon: usize,
    m: usize,
    tau: usize,
    check: EventCheck,
) -> Result<Option<Vec<Vec<f64>>>> {
    let mut s = CoordSampler::new(coords, sub, degenerate)?;
    let cap = m as f64 / 16.0;
    let mut prefix = 0.0;
    let mut rows = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let row = s.next_row();
        let b = block_sum(&row, m);
        if check == EventCheck::Full && b > cap {
            return Ok(None);
        }
        if t < tau {
            prefix += b;
        }
        if t + 1 == tau.min(horizon) && prefix > 0.0 {
            return Ok(None);
        }
        rows.push(row);
    }
    Ok(Some(rows))
}

/// Rejection-samples a gaussian-polytope stream conditioned on the hardness event.
///
/// Try `k` uses sub-seed `splitmix64(seed ^ splitmix64(k))`; the accepted stream equals
/// `make_loss_stream(spec, horizon, sub_seed)`. Returns the stream and the number of tries.
pub fn sample_until_event(
    spec: &LossSpec,
    horizon: usize,
    max_tries: usize,
    seed: u64,
    check: EventCheck,
) -> Result<(LossStream, usize)> {
    let LossSpec::GaussianPolytope { m, eta, degenerate } = *spec else {
        return Err(OmdError::Spec("event sampling needs a gaussian_polytope spec".into()));
    };
    if max_tries == 0 {
        return Err(OmdError::Spec("max_tries must be at least 1".into()));
    }
    let tau = ceil_tolerant(3.0 / eta) as usize;
    let coords = LossSpec::gaussian_polytope_coords(m, eta);
    for k in 0..max_tries {
        let sub = sub_seed(seed, k);
        if let Some(rows) = try_stream(&coords, degenerate, sub, horizon, m, tau, check)? {
            let stream = LossStream {
                spec: spec.clone(),
                horizon,
                seed: sub,
                realized: rows,
                bounded: degenerate,
            };
            return Ok((stream, k + 1));
        }
    }
    Err(OmdError::EventExhausted { tries: max_tries, rate: 0.0 })
}

/// Fraction of `n` independent seeds whose stream satisfies the event.
pub fn estimate_event_rate(
    spec: &LossSpec,
    horizon: usize,
    n: usize,
    seed: u64,
    check: EventCheck,
    exec: Execution,
) -> Result<f64> {
    let LossSpec::GaussianPolytope { m, eta, degenerate } = *spec else {
        return Err(OmdError::Spec("event rate needs a gaussian_polytope spec".into()));
    };
    let tau = ceil_tolerant(3.0 / eta) as usize;
    let coords = LossSpec::gaussian_polytope_coords(m, eta);
    let ks: Vec<usize> = (0..n).collect();
    let hits = par::map(exec, &ks, |&k| {
        try_stream(&coords, degenerate, sub_seed(seed, k), horizon, m, tau, check)
            .map(|r| r.is_some())
    });
    let mut count = 0usize;
    for h in hits {
        if h? {
            count += 1;
        }
    }
    Ok(count as f64 / n as f64)
}

/// Random standard-normal vector, for callers that need one outside a stream.
pub fn normal_vector<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.sample(rand_distr::StandardNormal)).collect()
}
