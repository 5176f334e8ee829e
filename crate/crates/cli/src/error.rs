use holosub::datagen::DatagenError;
use holosub::hrr::HrrError;
use holosub::kv::KvError;
use holosub::loss::LossError;
use holosub::nn::NnError;
use holosub::saliency::SaliencyError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Placement(String),
    #[error("{0}")]
    Divergence(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) | CliError::Io { .. } => 2,
            CliError::Placement(_) => 3,
            CliError::Divergence(_) => 4,
        }
    }

    pub fn io(context: impl std::fmt::Display) -> impl FnOnce(std::io::Error) -> CliError {
        let context = context.to_string();
        move |source| CliError::Io { context, source }
    }
}

pub fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

impl From<DatagenError> for CliError {
    fn from(e: DatagenError) -> Self {
        match e {
            DatagenError::PlacementFailure { .. } => CliError::Placement(e.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<NnError> for CliError {
    fn from(e: NnError) -> Self {
        match e {
            NnError::Diverged { .. } | NnError::NonFinite(_) => CliError::Divergence(e.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<SaliencyError> for CliError {
    fn from(e: SaliencyError) -> Self {
        match e {
            SaliencyError::DivergedGradient => CliError::Divergence(e.to_string()),
            SaliencyError::Nn(inner) => inner.into(),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<LossError> for CliError {
    fn from(e: LossError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<HrrError> for CliError {
    fn from(e: HrrError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<KvError> for CliError {
    fn from(e: KvError) -> Self {
        CliError::Validation(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
