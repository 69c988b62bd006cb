use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("zero population in group {group}")]
    ZeroPopulation { group: String },

    #[error("infeasible mixing closure: {name} = {value:.6e}{}", at_time.map(|t| format!(" at t = {t:.6}")).unwrap_or_default())]
    InfeasibleClosure {
        name: String,
        value: f64,
        at_time: Option<f64>,
    },

    #[error("negative state component {index} = {value:.6e} at t = {t:.6}")]
    NegativeState { index: usize, value: f64, t: f64 },

    #[error("step size underflow at t = {t:.6} (h = {h:.3e})")]
    StepSizeUnderflow { t: f64, h: f64 },

    #[error("trajectory span [{t0}, {t_end}] is not aligned to whole calendar years")]
    PartialYear { t0: f64, t_end: f64 },

    #[error("unsupported for the {0} variant")]
    UnsupportedVariant(String),

    #[error("perturbation out of range: epsilon {epsilon} +/- {eps_tilde} leaves [0, 1]")]
    PerturbationOutOfRange { epsilon: f64, eps_tilde: f64 },

    #[error("grid has {nodes} nodes, above the cap of {cap}")]
    DimensionOverflow { nodes: usize, cap: usize },

    #[error("quadrature not exact enough for total degree {degree}: {detail}")]
    ExactnessViolation { degree: usize, detail: String },

    #[error("unknown group `{0}`")]
    UnknownGroup(String),

    #[error("schema violation at `{key}`: {msg}")]
    SchemaViolation { key: String, msg: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("missing series `{0}`")]
    MissingSeries(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("io error: {0}")]
    Io(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// Innermost error, skipping context wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            e => e,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
