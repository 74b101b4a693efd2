use thiserror::Error;

/// Crate-wide error type. Variants map to the failure modes the public
/// operations promise to report.
#[derive(Debug, Error)]
pub enum Error {
    #[error("sequencing error: record generation {got} but archive holds {expected} records")]
    GenerationMismatch { expected: u64, got: u64 },

    #[error("integrity error: duplicate record id {0}")]
    DuplicateId(u64),

    #[error("unknown metric '{0}'")]
    UnknownMetric(String),

    #[error("archive has no valid records")]
    EmptyArchive,

    #[error("parse error at line {line}: {msg}")]
    ParseLine { line: usize, msg: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("execution timed out after {0} ms")]
    ExecTimeout(u64),

    #[error("spawn failure: {0}")]
    ExecSpawn(String),

    #[error("candidate exited with code {code:?}: {stderr}")]
    ExecFailed { code: Option<i32>, stderr: String },

    #[error("candidate output exceeds {0} bytes")]
    ExecOversized(usize),

    #[error("unknown planner action ({metric}, {direction})")]
    UnknownAction { metric: String, direction: i8 },

    #[error("planner has no registered actions")]
    EmptyActionSet,

    #[error("factor error: {0}")]
    Factor(String),

    #[error("gateway error: {0}")]
    Gateway(#[from] GatewayError),

    #[error("config error: {0}")]
    Config(String),

    #[error("report error: {0}")]
    Report(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("scripted backend exhausted for tag '{0}'")]
    ScriptExhausted(String),

    #[error("transport failure after {attempts} attempts: {msg}")]
    Transport { attempts: u32, msg: String },

    #[error("response exceeds {0} bytes")]
    Oversized(usize),

    #[error("gateway not configured: {0}")]
    NotConfigured(String),
}

pub type Result<T> = std::result::Result<T, Error>;
