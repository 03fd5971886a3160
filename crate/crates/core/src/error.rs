use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value violates one of its invariants. The message names
    /// the invariant.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("zadoff-chu root {root} is not coprime to length {len}")]
    ZcRootNotCoprime { root: usize, len: usize },

    #[error("user association windows overlap (Q={users}, N={doppler_bins}, kappa_max={kappa_max})")]
    OverlappingWindows {
        users: usize,
        doppler_bins: usize,
        kappa_max: f64,
    },

    #[error("ill-conditioned problem: {0}")]
    IllConditioned(String),

    #[error("polynomial has no nonzero coefficient")]
    ZeroPolynomial,

    #[error("scenario rejection sampling exceeded {attempts} attempts")]
    RejectionLimit { attempts: usize },

    #[error("matrix decomposition failed: {0}")]
    Decomposition(String),

    #[error("no matched estimate/truth pairs to pool")]
    EmptyMatchSet,

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidConfig(msg.into())
}
