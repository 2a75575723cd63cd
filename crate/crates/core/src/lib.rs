//! Time majority voting (TMV) for segmented EEG spectral recordings.
//!
//! The crate covers the whole offline pipeline:
//!
//! - [`dataset`]: the recording data model and CSV ingestion,
//! - [`cleaning`]: transition trimming, stuck-sensor plateau removal and
//!   loss-based exclusion of subjects and sessions,
//! - [`cv`]: time-wise cross-validation over contiguous sub-intervals,
//! - [`classifiers`]: decision tree, random forest, kNN, RBF SVM and
//!   shrinkage LDA written from scratch,
//! - [`tmv`]: phase-1 ranking, noisy-block exclusion, the voting rule and
//!   phase-2 re-evaluation,
//! - [`synth`]: a seeded generator of sessions with known ground truth,
//! - [`report`]: tables, timelines and charts (CSV + SVG),
//! - [`pipeline`]: file-driven stages and the one-shot `reproduce` run.

pub mod classifiers;
pub mod cleaning;
pub mod cv;
pub mod dataset;
mod error;
pub mod pipeline;
pub mod report;
pub mod rng;
pub mod synth;
pub mod tmv;

pub use error::{Error, Result};

/// Integer task label, `1..=K`.
pub type LabelId = u8;

/// Slack used when comparing derived fractions against thresholds that
/// are nominally exact (e.g. `0.65`, `0.5`), so that representation error
/// in `1 - 35/100` does not flip a strict inequality.
pub(crate) const FRACTION_EPS: f64 = 1e-9;
