//! Workload-weighted energy estimate for batch runs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Wall-power draw at high and low load with their phase weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyModel {
    pub p_high_w: f64,
    pub p_low_w: f64,
    pub w_high: f64,
    pub w_low: f64,
}

impl EnergyModel {
    /// `w_low` is `1 - w_high`.
    pub fn new(p_high_w: f64, p_low_w: f64, w_high: f64) -> Result<Self> {
        for (name, p) in [("power_high_w", p_high_w), ("power_low_w", p_low_w)] {
            if !(p > 0.0 && p.is_finite()) {
                return Err(Error::Config { field: name.into(), reason: format!("{p} must be > 0") });
            }
        }
        if !(0.0..=1.0).contains(&w_high) {
            return Err(Error::Config { field: "weight_high".into(), reason: format!("{w_high} is outside [0, 1]") });
        }
        Ok(Self { p_high_w, p_low_w, w_high, w_low: 1.0 - w_high })
    }

    /// A machine drawing `p_mean_w` throughout.
    pub fn constant(p_mean_w: f64) -> Result<Self> {
        Self::new(p_mean_w, p_mean_w, 1.0)
    }

    pub fn mean_power(&self) -> f64 {
        self.w_high * self.p_high_w + self.w_low * self.p_low_w
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyEstimate {
    pub mean_power_w: f64,
    pub per_task_kwh: f64,
    pub cumulative_kwh: f64,
}

/// Energy of one task of `task_seconds` and its linear extrapolation to
/// `n_tasks`.
pub fn estimate_energy(model: &EnergyModel, task_seconds: f64, n_tasks: u64) -> Result<EnergyEstimate> {
    if !(task_seconds > 0.0 && task_seconds.is_finite()) {
        return Err(Error::InvalidArgument { name: "task_seconds", reason: format!("{task_seconds} must be > 0") });
    }
    if n_tasks == 0 {
        return Err(Error::InvalidArgument { name: "n_tasks", reason: "must be >= 1".into() });
    }
    let mean_power_w = model.mean_power();
    let per_task_kwh = mean_power_w * task_seconds / 3.6e6;
    Ok(EnergyEstimate { mean_power_w, per_task_kwh, cumulative_kwh: per_task_kwh * n_tasks as f64 })
}
