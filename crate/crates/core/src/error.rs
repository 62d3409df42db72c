use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("measure has no atoms")]
    EmptyMeasure,

    #[error("empty site window")]
    EmptyWindow,

    #[error("measures or fields live on different grids")]
    GridMismatch,

    #[error("negative or non-finite mass {mass} at site {site}")]
    NegativeMass { site: i64, mass: String },

    #[error("total mass {0} differs from one")]
    NotProbability(String),

    #[error("invalid stopping field: {0}")]
    InvalidField(String),

    #[error("barrier set is empty")]
    EmptyBarrier,

    #[error("initial law is not below the target in convex order (first violation at site {site:?})")]
    NotInConvexOrder { site: Option<i64> },

    #[error("chain stage {stage} breaks the convex order")]
    ChainOrderViolation { stage: usize },

    #[error("chain stage {stage}: {source}")]
    Stage {
        stage: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("residual mass {residual} still alive at horizon {horizon}")]
    ResidualTooLarge { residual: f64, horizon: usize },

    #[error("requested time {requested} lies beyond the trace horizon {horizon}")]
    HorizonExceeded { requested: usize, horizon: usize },

    #[error("delay law is not realizable by a stopping time (at step {t}, site {site})")]
    InvalidDelay { t: usize, site: i64 },

    #[error("free mass left the materialized site range at step {t}, site {site}")]
    MassEscaped { t: usize, site: i64 },

    #[error("discretization broke the convex order at site {site:?}")]
    OrderLostInDiscretization { site: Option<i64> },

    #[error("{0}")]
    Unsupported(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn at_stage(self, stage: usize) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
