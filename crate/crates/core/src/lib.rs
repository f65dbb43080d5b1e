//! Health-index estimation and remaining-useful-life prediction from
//! multivariate sensor series.
//!
//! An LSTM encoder-decoder trained on healthy windows gives a reconstruction
//! error that grows as an instance degrades. A linear model maps derived
//! sensors to that error-based health index, and RUL is estimated by matching
//! a test instance's HI curve against the curves of run-to-failure instances.

pub mod config;
pub mod data;
pub mod error;
pub mod health;
pub mod lstm;
pub mod matching;
pub mod matrix;
pub mod metrics;
pub mod numerics;
pub mod pipeline;

pub use config::{HiVariant, RunConfig};
pub use data::{Instance, RunToFailureDataset};
pub use error::{Error, Result};
pub use health::HiCurve;
pub use lstm::{LstmEdModel, TrainConfig};
pub use matching::{MatchConfig, RulEstimate};
pub use matrix::Matrix;
pub use metrics::MetricsReport;
pub use pipeline::{train_pipeline, Pipeline};
