use alloc::string::String;

pub type Result<T, E = DcmError> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DcmError {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("numerical degeneracy: {0}")]
    NumericalDegeneracy(String),

    #[error("estimation failed: {0}")]
    Estimation(String),

    #[error("model mismatch: {0}")]
    ModelMismatch(String),

    #[error("undefined posterior: {0}")]
    UndefinedPosterior(String),

    #[error(
        "information matrix is not positive definite (min eigenvalue {min_eigenvalue:e}, \
         max eigenvalue {max_eigenvalue:e})"
    )]
    NotPositiveDefinite {
        min_eigenvalue: f64,
        max_eigenvalue: f64,
    },
}

impl DcmError {
    /// Stable short code used in structured error records.
    pub fn code(&self) -> &'static str {
        match self {
            DcmError::Input(_) => "input",
            DcmError::DegenerateData(_) => "degenerate_data",
            DcmError::NumericalDegeneracy(_) => "numerical_degeneracy",
            DcmError::Estimation(_) => "estimation",
            DcmError::ModelMismatch(_) => "model_mismatch",
            DcmError::UndefinedPosterior(_) => "undefined_posterior",
            DcmError::NotPositiveDefinite { .. } => "not_positive_definite",
        }
    }
}
