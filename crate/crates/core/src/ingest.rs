//! Reading per-catchment CSV series, resampling discharge to the model step,
//! aligning rainfall with discharge and splitting chronologically.
//!
//! Input files carry a header row and two columns, `timestamp,value`. A value
//! of `NaN`, `NA` or an empty field is an explicit missing marker.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Duration, NaiveDate, NaiveDateTime};

use crate::config::SplitSpec;
use crate::error::{Error, GapReport, Result};
use crate::series::CatchmentSeries;

/// One record of a raw series. `value == None` marks a missing observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimedValue {
    pub time: NaiveDateTime,
    pub value: Option<f64>,
}

impl TimedValue {
    pub fn new(time: NaiveDateTime, value: Option<f64>) -> Self {
        Self { time, value }
    }
}

/// A two-column series file and its declared native step. When the step is
/// not declared it is inferred from the smallest timestamp spacing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawSeriesFile {
    pub path: PathBuf,
    pub native_step_hours: Option<u32>,
}

impl RawSeriesFile {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self { path: path.into(), native_step_hours: None }
    }

    pub fn with_step(path: impl Into<PathBuf>, hours: u32) -> Self {
        Self { path: path.into(), native_step_hours: Some(hours) }
    }
}

pub fn parse_timestamp(text: &str) -> Option<NaiveDateTime> {
    let text = text.trim();
    const FORMATS: [&str; 4] = [
        "%Y-%m-%dT%H:%M:%S",
        "%Y-%m-%dT%H:%M",
        "%Y-%m-%d %H:%M:%S",
        "%Y-%m-%d %H:%M",
    ];
    for fmt in FORMATS {
        if let Ok(t) = NaiveDateTime::parse_from_str(text, fmt) {
            return Some(t);
        }
    }
    if let Ok(t) = DateTime::parse_from_rfc3339(text) {
        return Some(t.naive_utc());
    }
    NaiveDate::parse_from_str(text, "%Y-%m-%d")
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
}

fn parse_value(text: &str) -> std::result::Result<Option<f64>, String> {
    let text = text.trim();
    if text.is_empty() || text.eq_ignore_ascii_case("nan") || text.eq_ignore_ascii_case("na") {
        return Ok(None);
    }
    match text.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(Some(v)),
        Ok(_) => Err(format!("non-finite value `{text}`")),
        Err(_) => Err(format!("cannot parse value `{text}`")),
    }
}

/// Reads a `timestamp,value` file in file order.
pub fn read_series(path: impl AsRef<Path>) -> Result<Vec<TimedValue>> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let header = reader.headers()?.clone();
    if header.len() != 2 {
        return Err(Error::Parse {
            path: display,
            line: 1,
            message: format!("expected header `timestamp,value`, found {} column(s)", header.len()),
        });
    }

    let mut points: Vec<TimedValue> = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != 2 {
            return Err(Error::Parse {
                path: display,
                line,
                message: format!("expected 2 fields, found {}", record.len()),
            });
        }
        let time = parse_timestamp(&record[0]).ok_or_else(|| Error::Parse {
            path: display.clone(),
            line,
            message: format!("cannot parse timestamp `{}`", &record[0]),
        })?;
        let value = parse_value(&record[1]).map_err(|message| Error::Parse {
            path: display.clone(),
            line,
            message,
        })?;
        if let Some(prev) = points.last() {
            if time == prev.time {
                return Err(Error::DuplicateTimestamp { path: display, line, timestamp: time });
            }
            if time < prev.time {
                return Err(Error::NonMonotoneTimestamp { path: display, line, timestamp: time });
            }
        }
        points.push(TimedValue { time, value });
    }
    Ok(points)
}

/// Smallest spacing between consecutive records, in whole hours.
pub fn infer_step_hours(points: &[TimedValue]) -> Result<u32> {
    let min_gap = points
        .windows(2)
        .map(|w| w[1].time - w[0].time)
        .min()
        .ok_or_else(|| Error::InsufficientData("need at least two records to infer the step".into()))?;
    let seconds = min_gap.num_seconds();
    if seconds <= 0 || seconds % 3600 != 0 {
        return Err(Error::Resample(format!("native spacing of {seconds} s is not a whole number of hours")));
    }
    Ok((seconds / 3600) as u32)
}

/// Index of the target-step block whose trailing interval `(end - step, end]`
/// contains `time`.
fn block_key(time: NaiveDateTime, target_seconds: i64) -> i64 {
    let s = time.and_utc().timestamp();
    s.div_euclid(target_seconds) + i64::from(s.rem_euclid(target_seconds) != 0)
}

/// Averages native-step values into trailing blocks of `target_step_hours`.
///
/// The value stamped at block end `t` is the mean over `(t - target, t]`.
/// A block with a missing native value yields a missing output value. Partial
/// blocks at either end of the record are dropped; interior partial blocks
/// are reported as missing.
pub fn resample_to_step(
    points: &[TimedValue],
    native_step_hours: u32,
    target_step_hours: u32,
) -> Result<Vec<TimedValue>> {
    if native_step_hours == 0 || target_step_hours == 0 {
        return Err(Error::Resample("steps must be positive".into()));
    }
    if native_step_hours > target_step_hours {
        return Err(Error::Resample(format!(
            "native step {native_step_hours} h exceeds target step {target_step_hours} h (no upsampling)"
        )));
    }
    if !target_step_hours.is_multiple_of(native_step_hours) {
        return Err(Error::Resample(format!(
            "native step {native_step_hours} h does not divide target step {target_step_hours} h"
        )));
    }
    let per_block = (target_step_hours / native_step_hours) as usize;
    let target_seconds = target_step_hours as i64 * 3600;

    let mut groups: Vec<(i64, Vec<Option<f64>>)> = Vec::new();
    for p in points {
        let key = block_key(p.time, target_seconds);
        match groups.last_mut() {
            Some((k, values)) if *k == key => values.push(p.value),
            _ => groups.push((key, vec![p.value])),
        }
    }

    let last = groups.len().saturating_sub(1);
    let mut out = Vec::with_capacity(groups.len());
    for (i, (key, values)) in groups.iter().enumerate() {
        if values.len() > per_block {
            return Err(Error::Resample(format!(
                "{} records fall in one {target_step_hours} h block; is the native step {native_step_hours} h?",
                values.len()
            )));
        }
        let end = DateTime::from_timestamp(key * target_seconds, 0)
            .ok_or_else(|| Error::Resample("timestamp out of range".into()))?
            .naive_utc();
        if values.len() < per_block {
            if i == 0 || i == last {
                continue;
            }
            out.push(TimedValue::new(end, None));
            continue;
        }
        let mean = values
            .iter()
            .copied()
            .sum::<Option<f64>>()
            .map(|s| s / per_block as f64);
        out.push(TimedValue::new(end, mean));
    }
    Ok(out)
}

/// Aligns rainfall and discharge on their common time range.
///
/// Both inputs must already be at `step_hours`. The overlap runs from the
/// later start to the earlier end; every step inside it must be present and
/// non-missing in both series.
pub fn align_and_build(
    catchment_id: &str,
    rainfall: &[TimedValue],
    discharge: &[TimedValue],
    step_hours: u32,
) -> Result<CatchmentSeries> {
    let (Some(r0), Some(q0)) = (rainfall.first(), discharge.first()) else {
        return Err(Error::EmptyOverlap);
    };
    let (r1, q1) = (rainfall[rainfall.len() - 1], discharge[discharge.len() - 1]);
    let start = r0.time.max(q0.time);
    let end = r1.time.min(q1.time);
    if start > end {
        return Err(Error::EmptyOverlap);
    }

    let rain: BTreeMap<NaiveDateTime, Option<f64>> =
        rainfall.iter().map(|p| (p.time, p.value)).collect();
    let flow: BTreeMap<NaiveDateTime, Option<f64>> =
        discharge.iter().map(|p| (p.time, p.value)).collect();

    let step = Duration::hours(step_hours as i64);
    let mut timestamps = Vec::new();
    let mut rain_values = Vec::new();
    let mut flow_values = Vec::new();
    let mut missing = Vec::new();
    let mut t = start;
    while t <= end {
        match (rain.get(&t).copied().flatten(), flow.get(&t).copied().flatten()) {
            (Some(r), Some(q)) => {
                rain_values.push(r);
                flow_values.push(q);
            }
            _ => missing.push(t),
        }
        timestamps.push(t);
        t += step;
    }
    if !missing.is_empty() {
        return Err(Error::Gap(GapReport { catchment_id: catchment_id.to_string(), missing }));
    }
    CatchmentSeries::new(catchment_id, step_hours, timestamps, rain_values, flow_values)
}

/// Reads and aligns one catchment. Discharge may be supplied at any native
/// step dividing `step_hours`; rainfall must already be areal values at the
/// model step.
pub fn load_catchment(
    catchment_id: &str,
    rain_file: &RawSeriesFile,
    discharge_file: &RawSeriesFile,
    step_hours: u32,
) -> Result<CatchmentSeries> {
    let rain = read_series(&rain_file.path)?;
    let flow = read_series(&discharge_file.path)?;

    let rain_step = match rain_file.native_step_hours {
        Some(h) => h,
        None => infer_step_hours(&rain)?,
    };
    if rain_step != step_hours {
        return Err(Error::Resample(format!(
            "rainfall must be supplied at the {step_hours} h model step, found {rain_step} h"
        )));
    }
    let flow_step = match discharge_file.native_step_hours {
        Some(h) => h,
        None => infer_step_hours(&flow)?,
    };
    let flow = resample_to_step(&flow, flow_step, step_hours)?;
    align_and_build(catchment_id, &rain, &flow, step_hours)
}

/// The three contiguous blocks of a chronological split.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitBlocks {
    pub train: CatchmentSeries,
    /// Tail of the training period used for early stopping; `None` when the
    /// validation fraction is zero.
    pub validation: Option<CatchmentSeries>,
    pub test: CatchmentSeries,
}

impl SplitBlocks {
    /// Everything before the split boundary (train followed by validation).
    pub fn calibration_len(&self) -> usize {
        self.train.len() + self.validation.as_ref().map_or(0, |v| v.len())
    }
}

/// Splits `series` into train / validation / test blocks in time order.
///
/// Every non-empty block must hold at least `min_block_len` steps.
pub fn chronological_split(
    series: &CatchmentSeries,
    spec: &SplitSpec,
    min_block_len: usize,
) -> Result<SplitBlocks> {
    spec.validate()?;
    let (n_train, n_valid, n_test) = spec.block_lengths(series.len());
    let check = |name: &str, len: usize| {
        if len < min_block_len {
            Err(Error::InsufficientData(format!(
                "catchment {}: {name} block has {len} steps, at least {min_block_len} required",
                series.id()
            )))
        } else {
            Ok(())
        }
    };
    check("training", n_train)?;
    if n_valid > 0 {
        check("validation", n_valid)?;
    }
    check("test", n_test)?;

    let boundary = n_train + n_valid;
    Ok(SplitBlocks {
        train: series.slice(0..n_train),
        validation: (n_valid > 0).then(|| series.slice(n_train..boundary)),
        test: series.slice(boundary..series.len()),
    })
}
