//! Multimodal handwriting classification: pen-stream ingestion, online
//! kinematic features, trajectory rasterization, offline image features,
//! calibrated SVM and gradient-boosted classifiers, multimodal fusion, and
//! subject-grouped evaluation.

pub mod error;
pub mod eval;
pub mod features;
pub mod fusion;
pub mod ingest;
pub mod models;
pub mod offline;
pub mod online;
pub mod par;
pub mod raster;
pub mod seed;
pub mod synth;

pub use error::{Error, Result};
