use thiserror::Error;

use crate::gca::GcaRegion;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("format error in field `{field}` at byte {offset}: {message}")]
    Format {
        field: &'static str,
        offset: usize,
        message: String,
    },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("invalid volume: {0}")]
    InvalidVolume(String),

    #[error("brain extraction failed: {0}")]
    ExtractionFailed(String),

    #[error("registration failed: {0}")]
    RegistrationFailed(String),

    #[error("incomplete rating for scan `{scan_id}`: region {region} is not assessed")]
    IncompleteRating { scan_id: String, region: GcaRegion },

    #[error("region {0} may not be assessable")]
    NotAssessable(GcaRegion),

    #[error("rating sheet row {row}: {message}")]
    RatingParse { row: usize, message: String },

    #[error("feature extraction failed: {0}")]
    FeatureExtraction(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
