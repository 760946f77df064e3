use std::path::PathBuf;

/// Failure of a run, each variant carrying its exit status.
#[derive(Debug, thiserror::Error)]
pub enum LabError {
    #[error("config violation [{invariant}]: {detail}")]
    Config { invariant: String, detail: String },

    #[error("numeric failure in {module}: {source}")]
    Numeric {
        module: &'static str,
        #[source]
        source: kahlerlab_core::Error,
    },

    #[error("missing artifacts: {0}")]
    MissingArtifacts(String),

    #[error("cannot write output under {path}: {source}")]
    Output {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type LabResult<T> = Result<T, LabError>;

impl LabError {
    pub fn config(invariant: impl Into<String>, detail: impl Into<String>) -> Self {
        LabError::Config { invariant: invariant.into(), detail: detail.into() }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            LabError::Config { .. } | LabError::Output { .. } => 2,
            LabError::Numeric { .. } => 3,
            LabError::MissingArtifacts(_) => 4,
        }
    }
}

pub(crate) trait NumericContext<T> {
    fn numeric(self, module: &'static str) -> LabResult<T>;
}

impl<T> NumericContext<T> for kahlerlab_core::Result<T> {
    fn numeric(self, module: &'static str) -> LabResult<T> {
        self.map_err(|source| LabError::Numeric { module, source })
    }
}
