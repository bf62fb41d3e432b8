use thiserror::Error;

/// Errors raised across model construction, reduction and estimation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("design matrix is rank deficient (rank {rank}, {cols} columns)")]
    RankDeficient { rank: usize, cols: usize },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("matrix has a negative eigenvalue {0:e}")]
    NegativeEigenvalue(f64),

    #[error("BV B' is nonsingular (nu_d = 0): the model violates the REML genericity condition")]
    NoNullEigenvalue,

    #[error("invalid variance point: {0}")]
    InvalidVariance(String),

    #[error("all statistics T_i with i < d vanish; the rational reduction does not apply")]
    VanishingStatistics,

    #[error("spurious point: {0}")]
    SpuriousPoint(String),

    #[error("identically zero polynomial: non-generic data")]
    ZeroPolynomial,

    #[error("constant polynomial: no critical points")]
    ConstantPolynomial,

    #[error("root iteration failed to converge")]
    NoConvergence,

    #[error("degenerate spectrum configuration: {0}")]
    DegenerateSpectrum(String),

    #[error("model does not satisfy the genericity condition: {0}")]
    NotGeneric(String),

    #[error("data in mean space, no estimate")]
    DataInMeanSpace,

    #[error("input error: {0}")]
    Input(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Stable machine-readable code, used by the CLI and the C ABI.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Dimension(_) => "E_DIM",
            Error::RankDeficient { .. } => "E_RANK",
            Error::InvalidModel(_) => "E_MODEL",
            Error::NotSymmetric(_) => "E_ASYM",
            Error::NegativeEigenvalue(_) => "E_NEGEIG",
            Error::NoNullEigenvalue => "E_NU_D",
            Error::InvalidVariance(_) => "E_VARIANCE",
            Error::VanishingStatistics => "E_STATS",
            Error::SpuriousPoint(_) => "E_SPURIOUS",
            Error::ZeroPolynomial => "E_ZEROPOLY",
            Error::ConstantPolynomial => "E_CONSTPOLY",
            Error::NoConvergence => "E_CONVERGE",
            Error::DegenerateSpectrum(_) => "E_DEGENERATE",
            Error::NotGeneric(_) => "E_GENERIC",
            Error::DataInMeanSpace => "E_MEANSPACE",
            Error::Input(_) => "E_INPUT",
        }
    }
}
