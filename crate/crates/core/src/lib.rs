//! CT-brain global cortical atrophy pipeline: synthetic phantoms, brain
//! extraction, affine template registration, GCA score prediction and the
//! agreement statistics used to validate predictions against raters.

pub mod error;
pub mod gca;
pub mod phantom;
pub mod predictor;
pub mod preprocess;
pub mod stats;
pub mod volume;

pub use error::{Error, Result};
