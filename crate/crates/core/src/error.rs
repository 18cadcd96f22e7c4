use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid scenario or room configuration. `key` names the offending
    /// parameter and `line` its position in the config file, when known.
    #[error("configuration error{}: {message}", location(key, line))]
    Config {
        key: Option<String>,
        line: Option<usize>,
        message: String,
    },
    #[error("geometry error: {0}")]
    Geometry(String),
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("unservable user(s): {0:?} receive no line-of-sight gain from any access point")]
    UnservableUsers(Vec<usize>),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn location(key: &Option<String>, line: &Option<usize>) -> String {
    match (key, line) {
        (Some(k), Some(l)) => format!(" in `{k}` (line {l})"),
        (Some(k), None) => format!(" in `{k}`"),
        (None, Some(l)) => format!(" (line {l})"),
        (None, None) => String::new(),
    }
}

impl Error {
    pub fn config(message: impl Into<String>) -> Self {
        Error::Config {
            key: None,
            line: None,
            message: message.into(),
        }
    }

    pub fn config_key(key: &str, message: impl Into<String>) -> Self {
        Error::Config {
            key: Some(key.to_string()),
            line: None,
            message: message.into(),
        }
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config { .. })
    }
}
