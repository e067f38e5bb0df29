//! Error type shared by every module of the toolkit.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, FrameError>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FrameError {
    #[error("frame rows are not orthonormal: max |FF* - I| = {residual:e}")]
    FrameInvariantViolated { residual: f64 },

    #[error("matrix is not a Hermitian projection: {0}")]
    NotAProjection(String),

    #[error("trace {trace} is not within tolerance of an integer")]
    TraceNotIntegral { trace: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not Hermitian: max |H - H*| = {residual:e}")]
    NotHermitian { residual: f64 },

    #[error("eigenvalues {upper} and {lower} at the rank cut are tied")]
    EigenvalueTie { upper: f64, lower: f64 },

    #[error("vector is not in the polytope: {0}")]
    NotInPolytope(String),

    #[error("problem too large: {0}")]
    TooLarge(String),

    #[error("bad dimensions: {0}")]
    BadDimensions(String),

    #[error("diagonal synthesis stalled with residual {residual:e}")]
    NumericalStall { residual: f64 },

    #[error("not a permutation: {0}")]
    BadPermutation(String),

    #[error("bad block composition: {0}")]
    BadComposition(String),

    #[error("descriptor is infeasible for this norm vector: {0}")]
    InfeasibleDescriptor(String),

    #[error("Hessian eigenvalue {value:e} lies in the ambiguity band")]
    AmbiguousEigenvalue { value: f64 },

    #[error("subspaces are at the cut locus (principal angle {angle} too close to pi/2)")]
    CutLocus { angle: f64 },

    #[error("retraction reached a critical point of positive level {level:e}")]
    RetractionHitCriticalStratum { level: f64 },

    #[error("retraction did not converge within the iteration budget (f = {level:e})")]
    RetractionDidNotConverge { level: f64 },

    #[error("loop is undersampled: phase step {step} at sample {index}")]
    UndersampledLoop { index: usize, step: f64 },

    #[error("frame entry vanishes at sample {index}")]
    ZeroEntry { index: usize },

    #[error("sample {index} is not in the expected fiber: {reason}")]
    NotInFiber { index: usize, reason: String },

    #[error("loop is not closed: {0}")]
    NotClosed(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl FrameError {
    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        use FrameError::*;
        match self {
            FrameInvariantViolated { .. } => "FrameInvariantViolated",
            NotAProjection(_) => "NotAProjection",
            TraceNotIntegral { .. } => "TraceNotIntegral",
            DimensionMismatch(_) => "DimensionMismatch",
            NotHermitian { .. } => "NotHermitian",
            EigenvalueTie { .. } => "EigenvalueTie",
            NotInPolytope(_) => "NotInPolytope",
            TooLarge(_) => "TooLarge",
            BadDimensions(_) => "BadDimensions",
            NumericalStall { .. } => "NumericalStall",
            BadPermutation(_) => "BadPermutation",
            BadComposition(_) => "BadComposition",
            InfeasibleDescriptor(_) => "InfeasibleDescriptor",
            AmbiguousEigenvalue { .. } => "AmbiguousEigenvalue",
            CutLocus { .. } => "CutLocus",
            RetractionHitCriticalStratum { .. } => "RetractionHitCriticalStratum",
            RetractionDidNotConverge { .. } => "RetractionDidNotConverge",
            UndersampledLoop { .. } => "UndersampledLoop",
            ZeroEntry { .. } => "ZeroEntry",
            NotInFiber { .. } => "NotInFiber",
            NotClosed(_) => "NotClosed",
            Parse(_) => "Parse",
            Io(_) => "Io",
        }
    }

    /// Internal failures (bug signals, I/O) as opposed to rejected inputs.
    pub fn is_internal(&self) -> bool {
        matches!(self, FrameError::NumericalStall { .. } | FrameError::Io(_))
    }
}

impl From<std::io::Error> for FrameError {
    fn from(e: std::io::Error) -> Self {
        FrameError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for FrameError {
    fn from(e: serde_json::Error) -> Self {
        FrameError::Parse(e.to_string())
    }
}
