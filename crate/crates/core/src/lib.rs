//! Post-processing fairness toolkit for binary classifier scores.
//!
//! Measures group fairness (equalized odds and relatives), fits the Fair
//! Score Transformer, the Hardt–Price–Srebro equalized-odds post-processor
//! and threshold post-processing, and runs the dev-train / dev-eval
//! operating-point search without touching the upstream model.

pub mod calibrate;
pub mod dataset;
pub mod error;
pub mod fst;
pub mod hps;
pub mod metrics;
pub mod numeric;
pub mod report;
pub mod tuning;

pub use calibrate::{Calibrator, CalibratorKind};
pub use dataset::{Format, MissingMembership, SampleRecord, ScoredDataset, Split, SyntheticConfig};
pub use error::{Error, Result};
pub use fst::{FstModel, FstOptions, Solver};
pub use hps::HpsModel;
pub use metrics::{EoMode, FairnessReport};
pub use tuning::{OperatingPoint, ParetoFrontier};
