use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter {name} = {value} outside its domain {domain}")]
    Domain { name: &'static str, value: f64, domain: &'static str },

    #[error("non-orthonormal basis (defect {defect:.3e})")]
    NonOrthonormalBasis { defect: f64 },

    #[error("2-vector is not simple (Pluecker defect {defect:.3e})")]
    NotSimple { defect: f64 },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("cardinality mismatch: {left} vs {right}")]
    CardinalityMismatch { left: usize, right: usize },

    #[error("invalid Q-graph: {}", .0.join("; "))]
    InvalidGraph(Vec<String>),

    #[error("boundary is not Q copies of the domain boundary at height 0")]
    NotZeroBoundary,

    #[error("singular linear map (|det| = {det:.3e})")]
    SingularMap { det: f64 },

    #[error("empty measure")]
    EmptyMeasure,

    #[error("not sheetwise-decomposable: {0}")]
    NotSheetwise(String),

    #[error("subdivision search exhausted at r = {r:.3e}: {diagnostics}")]
    SearchExhausted { r: f64, diagnostics: String },

    #[error("invalid envelope input: {0}")]
    InvalidEnvelope(String),
}
