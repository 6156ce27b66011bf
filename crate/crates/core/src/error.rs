use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("cannot schedule an event at t={requested} s, clock is already at {now} s")]
    ScheduleInPast { now: f64, requested: f64 },
    #[error("clock cannot move from {now} s back to {requested} s")]
    TimeReversal { now: f64, requested: f64 },
    #[error("invalid traffic parameter: {0}")]
    Traffic(String),
    #[error("invalid cell configuration: {0}")]
    Cell(String),
    #[error("{0} reports still pending after the drain period")]
    Unterminated(usize),
}

/// Configuration file problems, always tied to a line when one exists.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed line `{text}`")]
    Malformed { line: usize, text: String },
    #[error("line {line}: unknown section [{section}]")]
    UnknownSection { line: usize, section: String },
    #[error("line {line}: unknown key `{key}` in [{section}]")]
    UnknownKey {
        line: usize,
        section: String,
        key: String,
    },
    #[error("line {line}: invalid value for `{key}`: {reason}")]
    Invalid {
        line: usize,
        key: String,
        reason: String,
    },
    #[error("{0}")]
    Scenario(String),
}
