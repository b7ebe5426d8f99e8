//! Short-term streamflow forecasting with a gradient-boosted tree baseline
//! fused with a peak-specialised random forest.
//!
//! The crate is organised along the forecasting chain:
//!
//! * [`ingest`] reads per-catchment CSV series, resamples discharge to the
//!   model step and aligns it with areal rainfall.
//! * [`features`] turns a series block into a one-step-ahead design matrix of
//!   lag features and rolling statistics.
//! * [`gbt`] is the second-order boosted regression tree baseline.
//! * [`forest`] is the bagged regression forest trained on peak rows only.
//! * [`peaks`] defines exceedance thresholds, peak magnitudes and events.
//! * [`combine`] applies the fusion rule to the two model outputs.
//! * [`verify`] holds the hydrological, continuous and binary scores.
//! * [`pipeline`] runs the per-catchment workflow in batch and estimates energy.
//! * [`synth`] generates linear-reservoir catchments for testing.

pub mod combine;
pub mod config;
pub mod error;
pub mod features;
pub mod forest;
pub mod gbt;
pub mod ingest;
pub mod peaks;
pub mod pipeline;
pub mod series;
pub mod synth;
pub mod verify;

pub use config::{FrameworkConfig, SplitSpec};
pub use error::{Error, Result};
pub use series::CatchmentSeries;
