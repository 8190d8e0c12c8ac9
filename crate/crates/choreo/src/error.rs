use std::path::PathBuf;

/// Error type shared across the engine.
///
/// The variants map onto the CLI exit-code categories: `Validation` and
/// `Parse` are caller mistakes (bad inputs, malformed files), `Numeric`
/// means a computation produced non-finite values or hit a degenerate
/// configuration, and `Io` wraps filesystem failures.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("validation: {0}")]
    Validation(String),

    #[error("numeric: {0}")]
    Numeric(String),

    #[error("parse error in {path}{}: {msg}", location_suffix(*line, *column))]
    Parse {
        path: PathBuf,
        line: Option<usize>,
        column: Option<usize>,
        msg: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn location_suffix(line: Option<usize>, column: Option<usize>) -> String {
    match (line, column) {
        (Some(l), Some(c)) => format!(":{l}:{c}"),
        (Some(l), None) => format!(":{l}"),
        _ => String::new(),
    }
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

#[macro_export]
macro_rules! ensure {
    ($cond:expr, $($arg:tt)+) => {
        if !($cond) {
            return Err($crate::Error::Validation(format!($($arg)+)));
        }
    };
}
