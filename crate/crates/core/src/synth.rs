//! Linear-reservoir catchment generator.
//!
//! Rain arrives as Bernoulli storms with Pareto depths. Storage follows
//! `S[t+1] = k S[t] + c rain[t]` and discharge is
//! `Q[t] = q0 + (1 - k) S[t] + noise`, clipped at zero.

use std::path::{Path, PathBuf};

use chrono::{NaiveDate, NaiveDateTime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Pareto};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::{CatchmentSeries, TIMESTAMP_FORMAT};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub n_steps: usize,
    pub rng_seed: u64,
    /// Probability that a storm starts in any given step.
    pub storm_probability: f64,
    /// Pareto scale (minimum storm depth, mm).
    pub storm_scale: f64,
    /// Pareto shape; smaller values give heavier tails.
    pub storm_shape: f64,
    pub recession_k: f64,
    pub runoff_coefficient: f64,
    pub baseflow: f64,
    pub noise_std: f64,
    pub initial_storage: f64,
    pub step_hours: u32,
    pub start: NaiveDateTime,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_steps: 20_000,
            rng_seed: 1,
            storm_probability: 0.12,
            storm_scale: 2.0,
            storm_shape: 3.0,
            recession_k: 0.75,
            runoff_coefficient: 0.8,
            baseflow: 5.0,
            noise_std: 0.0,
            initial_storage: 0.0,
            step_hours: 6,
            start: NaiveDate::from_ymd_opt(1990, 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap(),
        }
    }
}

fn bad(field: &str, reason: impl Into<String>) -> Error {
    Error::Config { field: field.to_string(), reason: reason.into() }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_steps == 0 {
            return Err(bad("n_steps", "must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.storm_probability) {
            return Err(bad("storm_probability", "must lie in [0, 1]"));
        }
        if !(self.storm_scale > 0.0 && self.storm_scale.is_finite()) {
            return Err(bad("storm_scale", "must be positive"));
        }
        if !(self.storm_shape > 0.0 && self.storm_shape.is_finite()) {
            return Err(bad("storm_shape", "must be positive"));
        }
        if !(self.recession_k > 0.0 && self.recession_k < 1.0) {
            return Err(bad("recession_k", "must lie in (0, 1)"));
        }
        if !(self.runoff_coefficient > 0.0 && self.runoff_coefficient <= 1.0) {
            return Err(bad("runoff_coefficient", "must lie in (0, 1]"));
        }
        if !(self.baseflow >= 0.0 && self.baseflow.is_finite()) {
            return Err(bad("baseflow", "must be >= 0"));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(bad("noise_std", "must be >= 0"));
        }
        if !(self.initial_storage >= 0.0 && self.initial_storage.is_finite()) {
            return Err(bad("initial_storage", "must be >= 0"));
        }
        if self.step_hours == 0 {
            return Err(bad("step_hours", "must be >= 1"));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let spec: SynthSpec = toml::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }
}

/// Storm rainfall for `spec`, one value per step.
pub fn storm_rainfall(spec: &SynthSpec) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    rng.set_stream(0);
    let depth = Pareto::new(spec.storm_scale, spec.storm_shape).expect("validated Pareto parameters");
    (0..spec.n_steps)
        .map(|_| {
            if rng.random::<f64>() < spec.storm_probability {
                depth.sample(&mut rng)
            } else {
                0.0
            }
        })
        .collect()
}

/// Noise-free discharge of the reservoir driven by `rain`.
pub fn route(spec: &SynthSpec, rain: &[f64]) -> Vec<f64> {
    let k = spec.recession_k;
    let mut storage = spec.initial_storage;
    rain.iter()
        .map(|&r| {
            let q = spec.baseflow + (1.0 - k) * storage;
            storage = k * storage + spec.runoff_coefficient * r;
            q
        })
        .collect()
}

pub fn generate(spec: &SynthSpec, id: &str) -> Result<CatchmentSeries> {
    spec.validate()?;
    let rain = storm_rainfall(spec);
    let mut flow = route(spec, &rain);
    if spec.noise_std > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
        rng.set_stream(1);
        let noise = Normal::new(0.0, spec.noise_std).expect("validated noise std");
        for q in &mut flow {
            *q += noise.sample(&mut rng);
        }
    }
    for q in &mut flow {
        *q = q.max(0.0);
    }
    CatchmentSeries::regular(id, spec.step_hours, spec.start, rain, flow)
}

/// Writes `<id>_rain.csv` and `<id>_q.csv` under `dir` in the schema
/// [`crate::ingest::read_series`] reads. Returns the two paths.
pub fn write_catchment_csv(series: &CatchmentSeries, dir: impl AsRef<Path>) -> Result<(PathBuf, PathBuf)> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let rain_path = dir.join(format!("{}_rain.csv", series.id()));
    let q_path = dir.join(format!("{}_q.csv", series.id()));
    for (path, name, values) in [
        (&rain_path, "rainfall", series.rainfall()),
        (&q_path, "discharge", series.discharge()),
    ] {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["timestamp", name])?;
        for (t, v) in series.timestamps().iter().zip(values) {
            w.write_record([t.format(TIMESTAMP_FORMAT).to_string(), v.to_string()])?;
        }
        w.flush()?;
    }
    Ok((rain_path, q_path))
}
