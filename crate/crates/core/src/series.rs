use std::ops::Range;

use chrono::{Duration, NaiveDateTime};

use crate::error::{Error, GapReport, Result};

/// Timestamp layout used in every CSV this crate reads or writes.
pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

/// Aligned rainfall (mm per step) and trailing-mean discharge (m³/s) for one
/// catchment on a fixed step.
///
/// The constructor enforces every invariant: equal lengths, strictly
/// increasing timestamps at exactly `step_hours` spacing, no missing values
/// and no negative values. Instances are immutable.
#[derive(Debug, Clone, PartialEq)]
pub struct CatchmentSeries {
    id: String,
    step_hours: u32,
    timestamps: Vec<NaiveDateTime>,
    rainfall: Vec<f64>,
    discharge: Vec<f64>,
}

impl CatchmentSeries {
    pub fn new(
        id: impl Into<String>,
        step_hours: u32,
        timestamps: Vec<NaiveDateTime>,
        rainfall: Vec<f64>,
        discharge: Vec<f64>,
    ) -> Result<Self> {
        let id = id.into();
        if step_hours == 0 {
            return Err(Error::InvalidSeries("step_hours must be positive".into()));
        }
        if rainfall.len() != timestamps.len() || discharge.len() != timestamps.len() {
            return Err(Error::InvalidSeries(format!(
                "catchment {id}: {} timestamps, {} rainfall values, {} discharge values",
                timestamps.len(),
                rainfall.len(),
                discharge.len()
            )));
        }
        let step = Duration::hours(step_hours as i64);
        for (i, pair) in timestamps.windows(2).enumerate() {
            if pair[1] - pair[0] != step {
                return Err(Error::InvalidSeries(format!(
                    "catchment {id}: spacing between index {i} ({}) and {} ({}) is not {step_hours} h",
                    pair[0],
                    i + 1,
                    pair[1]
                )));
            }
        }
        let missing: Vec<NaiveDateTime> = timestamps
            .iter()
            .zip(rainfall.iter().zip(&discharge))
            .filter(|(_, (r, q))| !r.is_finite() || !q.is_finite())
            .map(|(t, _)| *t)
            .collect();
        if !missing.is_empty() {
            return Err(Error::Gap(GapReport { catchment_id: id, missing }));
        }
        if let Some(i) = rainfall.iter().position(|&r| r < 0.0) {
            return Err(Error::InvalidSeries(format!(
                "catchment {id}: negative rainfall {} at {}",
                rainfall[i], timestamps[i]
            )));
        }
        if let Some(i) = discharge.iter().position(|&q| q < 0.0) {
            return Err(Error::InvalidSeries(format!(
                "catchment {id}: negative discharge {} at {}",
                discharge[i], timestamps[i]
            )));
        }
        Ok(Self { id, step_hours, timestamps, rainfall, discharge })
    }

    /// Builds a series on a regular grid starting at `start`.
    pub fn regular(
        id: impl Into<String>,
        step_hours: u32,
        start: NaiveDateTime,
        rainfall: Vec<f64>,
        discharge: Vec<f64>,
    ) -> Result<Self> {
        let timestamps = (0..rainfall.len())
            .map(|i| start + Duration::hours(step_hours as i64 * i as i64))
            .collect();
        Self::new(id, step_hours, timestamps, rainfall, discharge)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn step_hours(&self) -> u32 {
        self.step_hours
    }

    pub fn timestamps(&self) -> &[NaiveDateTime] {
        &self.timestamps
    }

    pub fn rainfall(&self) -> &[f64] {
        &self.rainfall
    }

    pub fn discharge(&self) -> &[f64] {
        &self.discharge
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    /// Contiguous sub-block; panics if `range` is out of bounds.
    pub fn slice(&self, range: Range<usize>) -> CatchmentSeries {
        CatchmentSeries {
            id: self.id.clone(),
            step_hours: self.step_hours,
            timestamps: self.timestamps[range.clone()].to_vec(),
            rainfall: self.rainfall[range.clone()].to_vec(),
            discharge: self.discharge[range].to_vec(),
        }
    }

    /// Copy with replaced values, re-validated.
    pub fn with_values(&self, rainfall: Vec<f64>, discharge: Vec<f64>) -> Result<CatchmentSeries> {
        Self::new(self.id.clone(), self.step_hours, self.timestamps.clone(), rainfall, discharge)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn t0() -> NaiveDateTime {
        NaiveDate::from_ymd_opt(2000, 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap()
    }

    #[test]
    fn rejects_irregular_spacing() {
        let ts = vec![t0(), t0() + Duration::hours(6), t0() + Duration::hours(18)];
        let err = CatchmentSeries::new("a", 6, ts, vec![0.0; 3], vec![1.0; 3]).unwrap_err();
        assert!(matches!(err, Error::InvalidSeries(_)));
    }

    #[test]
    fn missing_value_is_a_gap_not_a_zero() {
        let err = CatchmentSeries::regular("a", 6, t0(), vec![0.0, f64::NAN, 0.0], vec![1.0; 3])
            .unwrap_err();
        match err {
            Error::Gap(report) => assert_eq!(report.missing, vec![t0() + Duration::hours(6)]),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn rejects_negative_discharge_and_length_mismatch() {
        assert!(CatchmentSeries::regular("a", 6, t0(), vec![0.0; 2], vec![1.0, -1.0]).is_err());
        assert!(CatchmentSeries::regular("a", 6, t0(), vec![0.0; 2], vec![1.0]).is_err());
    }

    #[test]
    fn slice_keeps_alignment() {
        let s = CatchmentSeries::regular("a", 6, t0(), vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0])
            .unwrap();
        let b = s.slice(1..3);
        assert_eq!(b.rainfall(), &[2.0, 3.0]);
        assert_eq!(b.discharge(), &[5.0, 6.0]);
        assert_eq!(b.timestamps()[0], t0() + Duration::hours(6));
    }
}
