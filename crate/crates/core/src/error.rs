use thiserror::Error;

/// Errors raised by trellis construction, the enumerative codec and scheme calibration.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ShapingError {
    #[error("invalid amplitude alphabet: {0}")]
    InvalidAlphabet(String),
    #[error("invalid constraint profile: {0}")]
    InvalidProfile(String),
    #[error("no amplitude sequence satisfies the constraint profile")]
    EmptyTrellis,
    #[error("requested {requested} bits but the trellis only holds {available} full bits")]
    RateTooHigh { requested: u64, available: u64 },
    #[error("index out of range for a {bits}-bit codec")]
    IndexOutOfRange { bits: u64 },
    #[error("sequence violates the constraint profile at position {position}")]
    InadmissibleSequence { position: usize },
    #[error("bit width mismatch: expected {expected}, got {actual}")]
    WidthMismatch { expected: usize, actual: usize },
    #[error("{bits} bits per block is unachievable even without an energy limit")]
    Unachievable { bits: u64 },
    #[error("calibration failed: {0}")]
    CalibrationFailed(String),
    #[error("trellis dump is malformed: {0}")]
    MalformedDump(String),
}

/// Errors raised by frame mapping, temporal metrics, the channel and the receiver.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SignalError {
    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("window of {window} symbols exceeds the stream length {length}")]
    WindowTooLong { window: usize, length: usize },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("step policy error: {0}")]
    StepPolicy(String),
    #[error("input distribution assigns zero probability to a transmitted symbol")]
    DegenerateDistribution,
}

/// Errors raised while running experiments and file tools.
#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Shaping(#[from] ShapingError),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error("block {block}: {source}")]
    Block {
        block: usize,
        #[source]
        source: ShapingError,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("csv error: {0}")]
    Csv(String),
}

impl ExperimentError {
    /// True for errors caused by invalid user configuration rather than runtime failures.
    pub fn is_config(&self) -> bool {
        match self {
            ExperimentError::Config(_) => true,
            ExperimentError::Signal(e) => {
                matches!(e, SignalError::Config(_) | SignalError::StepPolicy(_))
            }
            ExperimentError::Shaping(e) => matches!(
                e,
                ShapingError::InvalidAlphabet(_)
                    | ShapingError::InvalidProfile(_)
                    | ShapingError::CalibrationFailed(_)
                    | ShapingError::RateTooHigh { .. }
                    | ShapingError::Unachievable { .. }
            ),
            _ => false,
        }
    }
}

pub type Result<T, E = ShapingError> = std::result::Result<T, E>;
