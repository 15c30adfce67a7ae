use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Malformed { line: u64, message: String },

    #[error("line {line}: unknown outcome token `{token}` (expected W, D or L)")]
    UnknownOutcome { line: u64, token: String },

    #[error("duplicate match id `{0}`")]
    DuplicateMatch(String),

    #[error("match `{match_id}`: lineup {side} has {len} players, expected 11")]
    LineupSize {
        match_id: String,
        side: u8,
        len: usize,
    },

    #[error("match `{match_id}`: player `{player}` appears more than once in the two lineups")]
    DuplicatePlayer { match_id: String, player: String },

    #[error("match `{0}`: team1 and team2 are the same team")]
    SameTeam(String),

    #[error("invalid player id `{0}`")]
    InvalidPlayerId(String),

    #[error("player `{0}` is not in the registry")]
    UnknownPlayer(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("match `{match_id}`: predicted probability of the realized outcome is zero")]
    ZeroProbability { match_id: String },

    #[error(
        "Cholesky factorization failed at jitter {jitter:.3e} \
         (largest kernel diagonal {max_diag:.3e}, largest curvature {max_w:.3e})"
    )]
    Cholesky { jitter: f64, max_diag: f64, max_w: f64 },

    #[error("Newton iterations did not converge after {iterations} steps (last |dPsi| = {last_delta:.3e})")]
    NoConvergence { iterations: usize, last_delta: f64 },

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures of the numerical machinery rather than of the input data.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Cholesky { .. } | Error::NoConvergence { .. })
    }
}
