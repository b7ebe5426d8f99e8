//! Fusion of the boosted baseline with the peak forest.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the steps that receive the peak adjustment are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PeakIdentification {
    /// Baseline forecast above the threshold; usable operationally.
    #[default]
    Forecast,
    /// Observed discharge above the threshold; diagnostic only, it reads the
    /// verifying observation.
    Observed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinedForecast {
    pub baseline: Vec<f64>,
    pub fused: Vec<f64>,
    /// Ascending indices where the peak adjustment was applied.
    pub adjusted_indices: Vec<usize>,
}

impl CombinedForecast {
    /// Baseline carried through unchanged.
    pub fn baseline_only(baseline: Vec<f64>) -> Self {
        Self { fused: baseline.clone(), baseline, adjusted_indices: Vec::new() }
    }

    pub fn is_adjusted(&self) -> Vec<bool> {
        let mut flags = vec![false; self.baseline.len()];
        for &i in &self.adjusted_indices {
            flags[i] = true;
        }
        flags
    }
}

/// Indices whose value exceeds `threshold`.
pub fn identify_peak_indices(values: &[f64], threshold: f64) -> Vec<usize> {
    values.iter().enumerate().filter(|(_, &v)| v > threshold).map(|(i, _)| i).collect()
}

/// `fused[i] = baseline[i] + weight * peak[j]` for the j-th identified index,
/// and `fused[i] = baseline[i]` everywhere else.
pub fn fuse(baseline: &[f64], indices: &[usize], peak_predictions: &[f64], weight: f64) -> Result<CombinedForecast> {
    if indices.len() != peak_predictions.len() {
        return Err(Error::Alignment(format!(
            "{} peak indices but {} peak predictions",
            indices.len(),
            peak_predictions.len()
        )));
    }
    if !weight.is_finite() {
        return Err(Error::Alignment(format!("fusion weight {weight} is not finite")));
    }
    let mut fused = baseline.to_vec();
    let mut seen = vec![false; baseline.len()];
    for (&i, &peak) in indices.iter().zip(peak_predictions) {
        if i >= baseline.len() {
            return Err(Error::Alignment(format!("peak index {i} outside a forecast of {}", baseline.len())));
        }
        if std::mem::replace(&mut seen[i], true) {
            return Err(Error::Alignment(format!("peak index {i} listed twice")));
        }
        if weight != 0.0 {
            fused[i] = baseline[i] + weight * peak;
        }
    }
    let mut adjusted_indices = indices.to_vec();
    adjusted_indices.sort_unstable();
    Ok(CombinedForecast { baseline: baseline.to_vec(), fused, adjusted_indices })
}
