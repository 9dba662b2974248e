use thiserror::Error;

/// Errors raised by the solver library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid domain: b ({b}) must exceed a ({a})")]
    InvalidDomain { a: f64, b: f64 },

    #[error("invalid cell count {0}: at least one cell is required")]
    InvalidCellCount(usize),

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("kernel window W at interface {interface} is {value:e}, must be positive")]
    NonPositiveWindow { interface: usize, value: f64 },

    #[error("kernel support has zero length")]
    DegenerateSupport,

    #[error("length mismatch: expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("flux model `{model}` returned a non-finite value at (t={t}, x={x}, rho={rho}, R={r})")]
    NonFiniteValue {
        model: String,
        t: f64,
        x: f64,
        rho: f64,
        r: f64,
    },

    #[error("empty validity box: {0}")]
    EmptyBox(String),

    #[error("negative datum {value:e} sampled at {at} in {which}")]
    NegativeDatum {
        which: &'static str,
        at: f64,
        value: f64,
    },

    #[error("CFL condition violated: lambda = {lambda}, admissible maximum = {max}")]
    CflViolation { lambda: f64, max: f64 },

    #[error("non-finite state at step {step}, cell {cell}")]
    NonFiniteState { step: usize, cell: usize },

    #[error("states are not consecutive: step {prev} followed by step {next}")]
    StateMismatch { prev: usize, next: usize },

    #[error("missing norm: {0}")]
    MissingNorm(&'static str),

    #[error("a-priori bound violated at step {step}: {detail}")]
    BoundViolation { step: usize, detail: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config syntax error: {0}")]
    ConfigSyntax(String),

    #[error("config validation failed:\n{}", format_semantic(.0))]
    ConfigSemantic(Vec<FieldError>),

    #[error("i/o error: {0}")]
    Io(String),

    #[error("at step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },
}

/// One semantic validation failure, tied to a dotted field path.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl FieldError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

fn format_semantic(errors: &[FieldError]) -> String {
    errors
        .iter()
        .map(|e| format!("  {}: {}", e.field, e.message))
        .collect::<Vec<_>>()
        .join("\n")
}

impl Error {
    /// Strips any `AtStep` wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtStep { source, .. } => source.root(),
            other => other,
        }
    }

    pub(crate) fn at_step(self, step: usize) -> Error {
        match self {
            e @ Error::AtStep { .. } => e,
            e => Error::AtStep {
                step,
                source: Box::new(e),
            },
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
