use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] setsel::Error),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("csv error on {path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

impl CliError {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub fn csv(path: impl AsRef<std::path::Path>, source: csv::Error) -> Self {
        CliError::Csv {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// 2 configuration, 3 data, 4 numeric, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        use setsel::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Csv { .. } | CliError::Io { .. } => 3,
            CliError::Core(e) => match e {
                E::Parameter(_) | E::Spec(_) | E::Unsupported(_) | E::TooLarge(_) => 2,
                E::NonFinite(_) => 4,
                E::Contract(_) => 1,
                _ => 3,
            },
        }
    }
}
