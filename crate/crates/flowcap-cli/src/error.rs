use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Lib(#[from] flowcap::Error),
    #[error("stage '{stage}' failed: {source}")]
    Stage { stage: String, source: Box<CliError> },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Validation(String),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        CliError::Io { path: path.as_ref().display().to_string(), source }
    }

    /// 2 usage/contract/schema/io, 3 hypothesis violation, 4 numeric failure.
    pub fn exit_code(&self) -> i32 {
        use flowcap::Error as E;
        match self {
            CliError::Usage(_) | CliError::Io { .. } | CliError::Csv(_) | CliError::Validation(_) => 2,
            CliError::Stage { source, .. } => source.exit_code(),
            CliError::Lib(e) => match e {
                E::Contract(_) | E::Dimension { .. } | E::Unsupported(_) | E::Schema { .. } => 2,
                E::Hypothesis(_)
                | E::WrongFamily(_)
                | E::WrongForm(_)
                | E::NonSmooth(_)
                | E::Domain(_)
                | E::ProposalCoverage(_) => 3,
                E::Invertibility { .. }
                | E::NumericInversion { .. }
                | E::Capacity { .. }
                | E::Singular(_)
                | E::Coverage { .. }
                | E::NumericRange(_)
                | E::Unbounded(_) => 4,
            },
        }
    }
}

/// Tags an error with the experiment stage that produced it.
pub(crate) fn stage<T, E: Into<CliError>>(name: &str, r: std::result::Result<T, E>) -> CliResult<T> {
    r.map_err(|e| CliError::Stage { stage: name.to_string(), source: Box::new(e.into()) })
}
