//! Framework configuration and the chronological split rule.
//!
//! The configuration file is a flat TOML document whose keys are the field
//! names of [`FrameworkConfig`]. Every key is optional; absent keys take the
//! locked defaults below. Unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::combine::PeakIdentification;
use crate::error::{Error, Result};
use crate::features::FeatureWindows;
use crate::forest::RfParams;
use crate::gbt::GbtParams;
use crate::pipeline::energy::EnergyModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrameworkConfig {
    // boosted trees
    pub learning_rate: f64,
    pub max_depth: usize,
    pub subsample: f64,
    pub colsample: f64,
    pub min_child_weight: f64,
    pub l1_penalty: f64,
    pub l2_penalty: f64,
    pub min_split_loss: f64,
    pub n_rounds: usize,
    pub early_stop_patience: usize,

    // peak forest
    pub rf_n_trees: usize,
    pub rf_max_depth: usize,
    pub rf_min_samples_leaf: usize,
    pub rf_feature_fraction: f64,
    pub rf_min_peak_rows: usize,

    // feature windows, in steps
    pub rain_lags: usize,
    pub q_lags: usize,
    pub q_rollmean_w: usize,
    pub q_rollstd_w: usize,
    pub rain_rollmean_w: usize,
    pub rain_rollstd_w: usize,

    // peaks and fusion
    pub peak_quantile: f64,
    pub fusion_weight: f64,
    pub peak_identification: PeakIdentification,
    pub match_max_offset: usize,

    // data layout
    pub step_hours: u32,
    pub train_fraction: f64,
    pub validation_fraction: f64,

    // energy accounting
    pub power_high_w: f64,
    pub power_low_w: f64,
    pub weight_high: f64,

    pub rng_seed: u64,
}

impl Default for FrameworkConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            max_depth: 5,
            subsample: 0.95,
            colsample: 0.90,
            min_child_weight: 1.0,
            l1_penalty: 0.0,
            l2_penalty: 1.0,
            min_split_loss: 0.0,
            n_rounds: 400,
            early_stop_patience: 30,

            rf_n_trees: 700,
            rf_max_depth: 8,
            rf_min_samples_leaf: 5,
            rf_feature_fraction: 0.80,
            rf_min_peak_rows: 10,

            rain_lags: 4,
            q_lags: 3,
            q_rollmean_w: 4,
            q_rollstd_w: 5,
            rain_rollmean_w: 2,
            rain_rollstd_w: 5,

            peak_quantile: 0.999,
            fusion_weight: 0.95,
            peak_identification: PeakIdentification::Forecast,
            match_max_offset: 4,

            step_hours: 6,
            train_fraction: 0.7,
            validation_fraction: 0.15,

            power_high_w: 130.0,
            power_low_w: 60.0,
            weight_high: 0.33,

            rng_seed: 42,
        }
    }
}

/// A parsed configuration together with the keys the document set explicitly.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedConfig {
    pub config: FrameworkConfig,
    pub overrides: Vec<String>,
}

impl FrameworkConfig {
    /// Field names accepted in a configuration document.
    pub fn field_names() -> Vec<String> {
        match toml::Table::try_from(FrameworkConfig::default()) {
            Ok(table) => table.keys().cloned().collect(),
            Err(_) => Vec::new(),
        }
    }

    /// Parses a flat TOML document and validates the result.
    pub fn from_toml_str(text: &str) -> Result<LoadedConfig> {
        let table: toml::Table = text.parse()?;
        let known = Self::field_names();
        let mut overrides = Vec::with_capacity(table.len());
        for (key, value) in &table {
            if !known.iter().any(|k| k == key) {
                return Err(Error::config(key, "unknown key"));
            }
            if value.is_table() || value.is_array() {
                return Err(Error::config(key, "expected a scalar value"));
            }
            overrides.push(key.clone());
        }
        let config: FrameworkConfig = table.try_into()?;
        Ok(LoadedConfig {
            config: config.validate()?,
            overrides,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<LoadedConfig> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        // A struct of scalars always serializes.
        toml::to_string(self).expect("flat config serializes to TOML")
    }

    /// Checks every range constraint and returns the config unchanged when
    /// all hold.
    pub fn validate(self) -> Result<Self> {
        unit_interval("learning_rate", self.learning_rate)?;
        unit_interval("subsample", self.subsample)?;
        unit_interval("colsample", self.colsample)?;
        unit_interval("rf_feature_fraction", self.rf_feature_fraction)?;
        at_least_one("max_depth", self.max_depth)?;
        at_least_one("rf_max_depth", self.rf_max_depth)?;
        at_least_one("n_rounds", self.n_rounds)?;
        at_least_one("early_stop_patience", self.early_stop_patience)?;
        at_least_one("rf_n_trees", self.rf_n_trees)?;
        at_least_one("rf_min_samples_leaf", self.rf_min_samples_leaf)?;
        at_least_one("rf_min_peak_rows", self.rf_min_peak_rows)?;
        nonnegative("min_child_weight", self.min_child_weight)?;
        nonnegative("l1_penalty", self.l1_penalty)?;
        nonnegative("l2_penalty", self.l2_penalty)?;
        nonnegative("min_split_loss", self.min_split_loss)?;
        nonnegative("fusion_weight", self.fusion_weight)?;

        at_least_one("rain_lags", self.rain_lags)?;
        at_least_one("q_lags", self.q_lags)?;
        at_least_one("q_rollmean_w", self.q_rollmean_w)?;
        at_least_one("rain_rollmean_w", self.rain_rollmean_w)?;
        if self.q_rollstd_w < 2 {
            return Err(Error::config("q_rollstd_w", "standard deviation window must be >= 2"));
        }
        if self.rain_rollstd_w < 2 {
            return Err(Error::config("rain_rollstd_w", "standard deviation window must be >= 2"));
        }

        open_unit_interval("peak_quantile", self.peak_quantile)?;
        open_unit_interval("train_fraction", self.train_fraction)?;
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::config("validation_fraction", "must lie in [0, 1)"));
        }
        if self.step_hours == 0 {
            return Err(Error::config("step_hours", "must be >= 1"));
        }
        positive("power_high_w", self.power_high_w)?;
        positive("power_low_w", self.power_low_w)?;
        if !(0.0..=1.0).contains(&self.weight_high) {
            return Err(Error::config("weight_high", "must lie in [0, 1]"));
        }
        Ok(self)
    }

    pub fn split_spec(&self) -> SplitSpec {
        SplitSpec {
            train_fraction: self.train_fraction,
            validation_fraction: self.validation_fraction,
        }
    }

    pub fn feature_windows(&self) -> FeatureWindows {
        FeatureWindows {
            rain_lags: self.rain_lags,
            q_lags: self.q_lags,
            q_rollmean_w: self.q_rollmean_w,
            q_rollstd_w: self.q_rollstd_w,
            rain_rollmean_w: self.rain_rollmean_w,
            rain_rollstd_w: self.rain_rollstd_w,
        }
    }

    pub fn gbt_params(&self) -> GbtParams {
        GbtParams {
            learning_rate: self.learning_rate,
            max_depth: self.max_depth,
            subsample: self.subsample,
            colsample: self.colsample,
            min_child_weight: self.min_child_weight,
            l1_penalty: self.l1_penalty,
            l2_penalty: self.l2_penalty,
            min_split_loss: self.min_split_loss,
            n_rounds: self.n_rounds,
            early_stop_patience: self.early_stop_patience,
            seed: self.rng_seed,
        }
    }

    pub fn rf_params(&self) -> RfParams {
        RfParams {
            n_trees: self.rf_n_trees,
            max_depth: self.rf_max_depth,
            min_samples_leaf: self.rf_min_samples_leaf,
            feature_fraction: self.rf_feature_fraction,
            min_peak_rows: self.rf_min_peak_rows,
            seed: self.rng_seed,
        }
    }

    pub fn energy_model(&self) -> Result<EnergyModel> {
        EnergyModel::new(self.power_high_w, self.power_low_w, self.weight_high)
    }
}

fn finite(field: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(field, "must be finite"))
    }
}

fn unit_interval(field: &str, v: f64) -> Result<()> {
    finite(field, v)?;
    if v > 0.0 && v <= 1.0 {
        Ok(())
    } else {
        Err(Error::config(field, format!("{v} is outside (0, 1]")))
    }
}

fn open_unit_interval(field: &str, v: f64) -> Result<()> {
    finite(field, v)?;
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(Error::config(field, format!("{v} is outside (0, 1)")))
    }
}

fn nonnegative(field: &str, v: f64) -> Result<()> {
    finite(field, v)?;
    if v >= 0.0 {
        Ok(())
    } else {
        Err(Error::config(field, format!("{v} is negative")))
    }
}

fn positive(field: &str, v: f64) -> Result<()> {
    finite(field, v)?;
    if v > 0.0 {
        Ok(())
    } else {
        Err(Error::config(field, format!("{v} must be > 0")))
    }
}

fn at_least_one(field: &str, v: usize) -> Result<()> {
    if v >= 1 {
        Ok(())
    } else {
        Err(Error::config(field, "must be >= 1"))
    }
}

/// Chronological train / validation / test partition of a series.
///
/// `boundary_index = floor(train_fraction * T)`; the validation block is the
/// last `floor(validation_fraction * boundary_index)` steps before the
/// boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub validation_fraction: f64,
}

impl SplitSpec {
    pub fn boundary_index(&self, len: usize) -> usize {
        (self.train_fraction * len as f64).floor() as usize
    }

    /// Lengths of the (train, validation, test) blocks for a series of `len`.
    pub fn block_lengths(&self, len: usize) -> (usize, usize, usize) {
        let boundary = self.boundary_index(len).min(len);
        let valid = (self.validation_fraction * boundary as f64).floor() as usize;
        (boundary - valid, valid, len - boundary)
    }

    pub fn validate(&self) -> Result<()> {
        open_unit_interval("train_fraction", self.train_fraction)?;
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::config("validation_fraction", "must lie in [0, 1)"));
        }
        Ok(())
    }
}
