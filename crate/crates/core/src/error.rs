use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("length mismatch in {context}: expected {expected}, found {found}")]
    LengthMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("non-finite value at position {index} in {context}")]
    NonFinite { context: &'static str, index: usize },

    #[error("invalid frequencies: {0}")]
    InvalidFrequencies(String),

    #[error("invalid design matrix: {0}")]
    InvalidDesign(String),

    /// Columns listed are linear combinations of earlier columns under the fitting weights.
    #[error("rank-deficient weighted design; dependent columns {columns:?}")]
    RankDeficient { columns: Vec<usize> },

    #[error("{active} entities carry positive weight but the design has {columns} columns")]
    InsufficientRows { active: usize, columns: usize },

    #[error("predictor schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("mean fitness is zero; fitness cannot be normalized")]
    ZeroMeanFitness,

    #[error("invalid fitness: {0}")]
    InvalidFitness(String),

    #[error("missing fitness values")]
    MissingFitness,

    #[error("invalid genotype at entity {entity}, locus {locus}: {value} (expected 0 or 1)")]
    InvalidGenotype {
        entity: usize,
        locus: usize,
        value: f64,
    },

    /// An allele absent from the initial population appeared after selection.
    #[error("locus {locus}: frequency rose from 0 to {changed}, impossible under selection alone")]
    InconsistentSelection { locus: usize, changed: f64 },

    #[error("identity `{identity}` violated: error {error:e} exceeds tolerance {tolerance:e}")]
    IdentityViolation {
        identity: &'static str,
        error: f64,
        tolerance: f64,
    },

    #[error("invalid config field `{field}`: {message}")]
    InvalidConfig { field: String, message: String },
}

pub(crate) fn check_len(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::LengthMismatch {
            context,
            expected,
            found,
        })
    }
}
