use thiserror::Error;

/// Errors raised by the geometry, solver and trajectory layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum OmdError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("point infeasible: constraint {index} violated by {violation:.3e}")]
    Infeasible { index: usize, violation: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("unsupported combination: {0}")]
    Unsupported(String),

    #[error("root bracket could not be established: {0}")]
    Bracket(String),

    #[error("iteration cap {cap} exceeded; best gap {best_gap:.3e}")]
    IterationCap { cap: usize, best_gap: f64 },

    #[error("target {target:.3e} is below numeric resolution (floor {floor:.0e})")]
    BelowResolution { target: f64, floor: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("rank-deficient constraint matrix; dependent rows {rows:?}")]
    RankDeficient { rows: Vec<usize> },

    #[error("certification failed at round {round}: slack {slack:.3e} > eps {eps:.3e}")]
    Certification { round: usize, slack: f64, eps: f64 },

    #[error("linear program failed: {0}")]
    Lp(String),

    #[error("round {round}: {source}")]
    Round {
        round: usize,
        #[source]
        source: Box<OmdError>,
    },

    #[error("audit violation: {0}")]
    Audit(String),

    #[error("hardness event not met after {tries} tries (empirical rate {rate:.3e})")]
    EventExhausted { tries: usize, rate: f64 },

    #[error("invalid specification: {0}")]
    Spec(String),
}

impl OmdError {
    pub(crate) fn at_round(self, round: usize) -> Self {
        match self {
            e @ OmdError::Round { .. } => e,
            e => OmdError::Round {
                round,
                source: Box::new(e),
            },
        }
    }
}

pub type Result<T, E = OmdError> = std::result::Result<T, E>;
