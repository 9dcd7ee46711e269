use thiserror::Error;

/// Errors raised by structural validation, admissibility checks and budgets.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        found: usize,
    },

    #[error("measure space has no atoms")]
    EmptySpace,

    #[error("invalid field `{field}`: {reason}")]
    InvalidField { field: String, reason: String },

    #[error(
        "homogeneity violated (`exponents.gamma`, `exponents.p`): sum of gamma_j/p_j is {sum}, \
         deviating from 1 by {deviation:e} (tolerance 1e-12)"
    )]
    Homogeneity { sum: f64, deviation: f64 },

    #[error("positivity violated at `{field}`: entry {value} is negative but the operator is flagged positive")]
    Positivity { field: String, value: f64 },

    #[error("inadmissible exponents for index {index}: {condition}")]
    Inadmissible { index: usize, condition: String },

    #[error("operator {index} does not saturate X: row {row} is identically zero")]
    NotSaturating { index: usize, row: usize },

    #[error("search budget exceeded: {required:e} evaluations required, limit {limit:e}")]
    BudgetExceeded { required: f64, limit: f64 },

    #[error("parameter out of range: {0}")]
    OutOfRange(String),

    #[error("malformed document: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn ensure_len(context: &str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context: context.to_string(),
            expected,
            found,
        })
    }
}
