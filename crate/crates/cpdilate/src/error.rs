//! Error type shared by every module.
//!
//! Each variant carries a stable machine-readable code (see [`CpError::code`])
//! that the CLI prints and that certificates record verbatim.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, CpError>;

#[derive(Debug, Error)]
pub enum CpError {
    #[error("matrix is not square: {rows}x{cols}")]
    NonSquare { rows: usize, cols: usize },

    #[error("matrix is not Hermitian (deviation {residual:e})")]
    NonHermitian { residual: f64 },

    #[error("matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },

    #[error("dimension mismatch: {context}")]
    DimensionMismatch { context: String },

    #[error("elements belong to different algebras")]
    AlgebraMismatch,

    #[error("elements belong to different modules")]
    ModuleMismatch,

    #[error("operands have different shape data: {context}")]
    ShapeMismatch { context: String },

    #[error("level {level} out of range (space has {levels} levels)")]
    LevelOutOfRange { level: usize, levels: usize },

    #[error("index {index} out of range (size {len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("operator is not flag compatible (violation {residual:e})")]
    NotFlagCompatible { residual: f64 },

    #[error("invalid multiplicity data: {context}")]
    BadMultiplicity { context: String },

    #[error("map matrix is not completely positive (min Choi eigenvalue {min_choi_eigenvalue:e})")]
    NotCp { min_choi_eigenvalue: f64 },

    #[error("dilation Gram matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    GramNotPsd { min_eigenvalue: f64 },

    #[error("module map is not compatible with its scalar part (residual {residual:e})")]
    CompatFail { residual: f64 },

    #[error("dilation is not minimal")]
    NotMinimal,

    #[error("dilations are not unitarily equivalent: {context}")]
    NotEquivalent { context: String },

    #[error("operator pair is not in the commutant (residual {residual:e})")]
    NotInCommutant { residual: f64 },

    #[error("map is not dominated (verdict {verdict})")]
    NotDominated { verdict: String },

    #[error("least-squares definition is inconsistent (residual {residual:e})")]
    NotWellDefined { residual: f64 },

    #[error("representation is degenerate")]
    NotNondegenerate,

    #[error("invalid tolerances: {context}")]
    InvalidTolerances { context: String },

    #[error("invalid input: {context}")]
    InvalidInput { context: String },

    #[error("schema error at {path}: {reason}")]
    SchemaError { path: String, reason: String },

    #[error("unsupported file version {found:?}")]
    VersionUnsupported { found: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl CpError {
    /// Stable code used in CLI diagnostics and certificates.
    pub fn code(&self) -> &'static str {
        match self {
            CpError::NonSquare { .. } => "NON_SQUARE",
            CpError::NonHermitian { .. } => "NON_HERMITIAN",
            CpError::NotPsd { .. } => "NOT_PSD",
            CpError::DimensionMismatch { .. } => "DIMENSION_MISMATCH",
            CpError::AlgebraMismatch => "ALGEBRA_MISMATCH",
            CpError::ModuleMismatch => "MODULE_MISMATCH",
            CpError::ShapeMismatch { .. } => "SHAPE_MISMATCH",
            CpError::LevelOutOfRange { .. } => "LEVEL_OUT_OF_RANGE",
            CpError::IndexOutOfRange { .. } => "INDEX_OUT_OF_RANGE",
            CpError::NotFlagCompatible { .. } => "NOT_FLAG_COMPATIBLE",
            CpError::BadMultiplicity { .. } => "BAD_MULTIPLICITY",
            CpError::NotCp { .. } => "NOT_CP",
            CpError::GramNotPsd { .. } => "GRAM_NOT_PSD",
            CpError::CompatFail { .. } => "COMPAT_FAIL",
            CpError::NotMinimal => "NOT_MINIMAL",
            CpError::NotEquivalent { .. } => "NOT_EQUIVALENT",
            CpError::NotInCommutant { .. } => "NOT_IN_COMMUTANT",
            CpError::NotDominated { .. } => "NOT_DOMINATED",
            CpError::NotWellDefined { .. } => "NOT_WELL_DEFINED",
            CpError::NotNondegenerate => "NOT_NONDEGENERATE",
            CpError::InvalidTolerances { .. } => "INVALID_TOLERANCES",
            CpError::InvalidInput { .. } => "INVALID_INPUT",
            CpError::SchemaError { .. } => "SCHEMA_ERROR",
            CpError::VersionUnsupported { .. } => "VERSION_UNSUPPORTED",
            CpError::Io(_) => "IO_ERROR",
            CpError::Json(_) => "SCHEMA_ERROR",
        }
    }

    /// Whether the error reflects bad input (CLI exit status 2) rather than a
    /// mathematical verdict (exit status 1).
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            CpError::NonSquare { .. }
                | CpError::DimensionMismatch { .. }
                | CpError::AlgebraMismatch
                | CpError::ModuleMismatch
                | CpError::ShapeMismatch { .. }
                | CpError::LevelOutOfRange { .. }
                | CpError::IndexOutOfRange { .. }
                | CpError::BadMultiplicity { .. }
                | CpError::InvalidTolerances { .. }
                | CpError::InvalidInput { .. }
                | CpError::SchemaError { .. }
                | CpError::VersionUnsupported { .. }
                | CpError::Io(_)
                | CpError::Json(_)
        )
    }
}
