use thiserror::Error;

/// Errors produced anywhere in the crate.
///
/// Variants are grouped by the stage that raises them; the CLI maps each
/// group onto a distinct exit code (see [`Error::exit_code`]).
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    // linear algebra
    #[error("matrix is not Hermitian (deviation {deviation:.3e})")]
    NotHermitian { deviation: f64 },
    #[error("matrix is not positive semidefinite (eigenvalue {eigenvalue:.3e})")]
    NotPsd { eigenvalue: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    // states and partial projections
    #[error("invalid probability parameter {name} = {value}")]
    InvalidProbability { name: &'static str, value: f64 },
    #[error("not a valid density matrix: {reason}")]
    NotDensityMatrix { reason: String },
    #[error("outcome {outcome} has probability {probability:.3e}, too small to condition on")]
    ZeroProbabilityBranch { outcome: u8, probability: f64 },

    // continuous readout
    #[error("threshold is infinite (p = {p}, q = {q}); the measurement can only be approximated")]
    InfiniteThreshold { p: f64, q: f64 },
    #[error("p + q = {sum} < 1 gives thresholds in the wrong order")]
    InvalidOrdering { sum: f64 },
    #[error("thresholds must be finite with R1 <= 0 <= R0 (got R0 = {r0}, R1 = {r1})")]
    NonFiniteThreshold { r0: f64, r1: f64 },
    #[error("trajectory exceeded the maximum duration {max_duration}")]
    MaxDurationExceeded { max_duration: f64 },
    #[error("invalid readout configuration: {reason}")]
    InvalidConfig { reason: String },

    // ancilla circuits
    #[error("angles out of range: |phi +- epsilon| must not exceed pi/2 (phi = {phi}, epsilon = {epsilon})")]
    OutOfRange { phi: f64, epsilon: f64 },
    #[error("unknown circuit variant {0:?}")]
    UnknownVariant(String),

    // decomposition
    #[error("Kraus set is not complete (deviation {deviation:.3e})")]
    NotComplete { deviation: f64 },
    #[error("operator norm exceeded: |N0|^2 has eigenvalue {eigenvalue}")]
    NormExceeded { eigenvalue: f64 },
    #[error("remainder operator at step {step} is singular (smallest singular value {singular_value:.3e}); try another outcome order")]
    SingularRemainder { step: usize, singular_value: f64 },
    #[error("unknown leaf label {0:?}")]
    UnknownLeaf(String),
    #[error("invalid outcome order: {0}")]
    InvalidOrder(String),
    #[error("empty Kraus set")]
    EmptyKrausSet,

    // fidelity
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("outcome labels do not match: {0}")]
    LabelMismatch(String),
    #[error("process trace {trace} is not 1")]
    TraceNotUnit { trace: f64 },
    #[error("ideal process is not rank one (second eigenvalue {second:.3e})")]
    RankViolation { second: f64 },
    #[error("process matrix has zero trace")]
    ZeroTrace,
    #[error("POVM set does not sum to identity (deviation {deviation:.3e})")]
    IncompleteSet { deviation: f64 },
    #[error("fidelity input: {0}")]
    FidelityInput(String),

    // interchange formats
    #[error("unsupported format version {0:?}")]
    UnsupportedFormat(String),
    #[error("{0}")]
    Format(String),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        use Error::*;
        match self {
            NotComplete { .. } | EmptyKrausSet | InvalidOrder(_) => 2,
            SingularRemainder { .. } | NormExceeded { .. } => 3,
            InfiniteThreshold { .. }
            | InvalidOrdering { .. }
            | NonFiniteThreshold { .. }
            | MaxDurationExceeded { .. }
            | InvalidConfig { .. }
            | ZeroProbabilityBranch { .. }
            | OutOfRange { .. } => 4,
            LengthMismatch { .. }
            | LabelMismatch(_)
            | TraceNotUnit { .. }
            | RankViolation { .. }
            | ZeroTrace
            | IncompleteSet { .. }
            | FidelityInput(_) => 5,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
