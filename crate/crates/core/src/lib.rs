//! Calibrated chemical–protein relation classification.
//!
//! The crate covers the full workflow: anonymized single-sentence examples
//! from ChemProt annotations ([`corpus`]), a small trainable sentence encoder
//! ([`encoder`]), training with feature-level mixup and a confidence penalty
//! ([`training`]), binned calibration metrics ([`calibration`]), top-k
//! self-training ([`selftrain`]) and the run orchestration behind the CLI
//! ([`pipeline`]).

mod binio;
pub mod calibration;
pub mod corpus;
pub mod encoder;
pub mod error;
pub mod label;
pub mod model;
pub mod pipeline;
pub mod records;
pub mod seed;
pub mod selftrain;
pub mod synthetic;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use label::{Label, SoftLabel, NUM_CLASSES};
pub use model::Classifier;
