use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("interference matrix not full column rank")]
    InterferenceRankDeficient,

    #[error("matrix not full column rank ({rows}x{cols})")]
    RankDeficient { rows: usize, cols: usize },

    #[error("interference subspace fills the space (q = {q}, N = {n})")]
    SubspaceFillsSpace { n: usize, q: usize },

    #[error("matrix is not Hermitian (relative asymmetry {asymmetry:.3e})")]
    NotHermitian { asymmetry: f64 },

    #[error("matrix is not positive definite (smallest eigenvalue {min_eigenvalue:.6e}, largest {max_eigenvalue:.6e})")]
    NotPositiveDefinite { min_eigenvalue: f64, max_eigenvalue: f64 },

    #[error("insufficient or degenerate training data")]
    DegenerateTraining,

    #[error("degenerate test vector")]
    DegenerateTestVector,

    #[error("conventional detector requires invertible SCM (L = {l}, N = {n})")]
    ConventionalNeedsInvertibleScm { n: usize, l: usize },

    #[error("trial budget too small for target PFA ({trials} trials at PFA {pfa:e})")]
    TrialBudgetTooSmall { trials: usize, pfa: f64 },

    #[error("zero base eSNR: theta0 has no component outside the interference subspace")]
    ZeroBaseEsnr,

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    /// True for failures of the numerics (singular or indefinite matrices,
    /// degenerate draws) as opposed to invalid inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::InterferenceRankDeficient
                | Error::RankDeficient { .. }
                | Error::NotHermitian { .. }
                | Error::NotPositiveDefinite { .. }
                | Error::DegenerateTraining
                | Error::DegenerateTestVector
                | Error::NonFinite(_)
        )
    }
}
