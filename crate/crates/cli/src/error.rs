use speechprint::audio_io::AudioError;
use speechprint::classical_ml::MlError;
use speechprint::crnn::CrnnError;
use speechprint::features::FeatureError;
use speechprint::spectral::SpectralError;
use speechprint::bispectral::BispectralError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad configuration or usage; exit code 2.
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Failed(String),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Bispectral(#[from] BispectralError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Ml(#[from] MlError),
    #[error(transparent)]
    Crnn(#[from] CrnnError),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Ml(MlError::Config(_)) | CliError::Crnn(CrnnError::Config(_)) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
