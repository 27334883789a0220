use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller violated an operation's precondition.
    #[error("usage error: {0}")]
    Usage(String),

    #[error("config error: {0}")]
    Config(String),

    /// The gain argument of γ reached the boundary of its domain [0, 1).
    #[error("gain singularity at t={t}: w={w} (e_r={e_r:?})")]
    GainSingularity { t: f64, w: f64, e_r: Vec<f64> },

    /// A legacy intermediate error left its stage funnel.
    #[error("stage {stage} singularity at t={t}: |e_{stage}|={norm} >= psi_{stage}={bound}")]
    StageSingularity {
        t: f64,
        stage: usize,
        norm: f64,
        bound: f64,
    },

    #[error("non-finite value at t={t}: {what}")]
    NonFinite { t: f64, what: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// True for the failure modes that end a closed-loop run as a singularity.
    pub fn is_singularity(&self) -> bool {
        matches!(
            self,
            Error::GainSingularity { .. } | Error::StageSingularity { .. }
        )
    }
}
