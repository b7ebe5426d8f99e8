//! Exceedance thresholds, peak magnitudes and peak events.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Empirical quantile with linear interpolation between order statistics at
/// rank `(n - 1) * q`.
pub fn compute_threshold(train_discharge: &[f64], q: f64) -> Result<f64> {
    if train_discharge.is_empty() {
        return Err(Error::InsufficientData("threshold needs at least one discharge value".into()));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::InvalidArgument { name: "quantile", reason: format!("{q} is outside [0, 1]") });
    }
    if train_discharge.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("threshold input".into()));
    }
    let mut sorted = train_discharge.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = (sorted.len() - 1) as f64 * q;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    Ok(sorted[lo] + frac * (sorted[hi] - sorted[lo]))
}

/// Exceedance above the threshold, zero otherwise.
pub fn peak_magnitude(q6h: f64, threshold: f64) -> f64 {
    if q6h > threshold {
        q6h - threshold
    } else {
        0.0
    }
}

pub fn exceedance_flags(discharge: &[f64], threshold: f64) -> Vec<bool> {
    discharge.iter().map(|&q| q > threshold).collect()
}

/// A maximal run of consecutive flagged steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakEvent {
    pub start: usize,
    pub end: usize,
    /// Index of the largest discharge in `[start, end]`, earliest on ties.
    pub apex: usize,
    pub apex_value: f64,
}

pub fn extract_events(flags: &[bool], discharge: &[f64]) -> Result<Vec<PeakEvent>> {
    if flags.len() != discharge.len() {
        return Err(Error::LengthMismatch { left: flags.len(), right: discharge.len() });
    }
    let mut events = Vec::new();
    let mut t = 0;
    while t < flags.len() {
        if !flags[t] {
            t += 1;
            continue;
        }
        let start = t;
        let mut apex = t;
        while t < flags.len() && flags[t] {
            if discharge[t] > discharge[apex] {
                apex = t;
            }
            t += 1;
        }
        events.push(PeakEvent { start, end: t - 1, apex, apex_value: discharge[apex] });
    }
    Ok(events)
}

/// Threshold, per-step flags, magnitudes and events of one discharge series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakSet {
    pub threshold: f64,
    pub flags: Vec<bool>,
    pub magnitudes: Vec<f64>,
    pub events: Vec<PeakEvent>,
}

impl PeakSet {
    pub fn new(discharge: &[f64], threshold: f64) -> Self {
        let flags = exceedance_flags(discharge, threshold);
        let magnitudes = discharge.iter().map(|&q| peak_magnitude(q, threshold)).collect();
        let events = extract_events(&flags, discharge).expect("flags built from the same series");
        Self { threshold, flags, magnitudes, events }
    }
}

/// One observed/forecast event association. `offset` is forecast apex minus
/// observed apex, in steps; positive means the forecast peak is late.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventPair {
    pub observed: usize,
    pub forecast: usize,
    pub offset: i64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventMatching {
    /// Pairs sorted by observed event index.
    pub pairs: Vec<EventPair>,
    pub unmatched_observed: Vec<usize>,
    pub unmatched_forecast: Vec<usize>,
}

/// Greedy one-to-one matching by ascending apex distance, within
/// `max_offset` steps. Ties go to the earlier forecast event, then the
/// earlier observed event.
pub fn match_events(observed: &[PeakEvent], forecast: &[PeakEvent], max_offset: usize) -> EventMatching {
    let mut candidates: Vec<(u64, usize, usize, i64)> = Vec::new();
    for (oi, o) in observed.iter().enumerate() {
        for (fi, f) in forecast.iter().enumerate() {
            let offset = f.apex as i64 - o.apex as i64;
            if offset.unsigned_abs() <= max_offset as u64 {
                candidates.push((offset.unsigned_abs(), fi, oi, offset));
            }
        }
    }
    // Event lists are in time order, so index order is apex order.
    candidates.sort_by_key(|&(dist, fi, oi, _)| (dist, fi, oi));

    let mut used_obs = vec![false; observed.len()];
    let mut used_fc = vec![false; forecast.len()];
    let mut pairs = Vec::new();
    for (_, fi, oi, offset) in candidates {
        if !used_obs[oi] && !used_fc[fi] {
            used_obs[oi] = true;
            used_fc[fi] = true;
            pairs.push(EventPair { observed: oi, forecast: fi, offset });
        }
    }
    pairs.sort_by_key(|p| p.observed);
    EventMatching {
        pairs,
        unmatched_observed: (0..observed.len()).filter(|&i| !used_obs[i]).collect(),
        unmatched_forecast: (0..forecast.len()).filter(|&i| !used_fc[i]).collect(),
    }
}

/// Writes `start,end,apex,apex_value`.
pub fn write_events_csv(path: impl AsRef<Path>, events: &[PeakEvent]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["start", "end", "apex", "apex_value"])?;
    for e in events {
        w.write_record([e.start.to_string(), e.end.to_string(), e.apex.to_string(), e.apex_value.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Order-statistic interpolation written out independently.
    fn quantile_oracle(values: &[f64], q: f64) -> f64 {
        let mut v = values.to_vec();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let h = (v.len() as f64 - 1.0) * q;
        let below = h as usize;
        if below + 1 >= v.len() {
            return v[below];
        }
        v[below] * (1.0 - (h - below as f64)) + v[below + 1] * (h - below as f64)
    }

    #[test]
    fn threshold_of_constant_series() {
        assert_eq!(compute_threshold(&[3.3; 50], 0.999).unwrap(), 3.3);
    }

    #[test]
    fn threshold_interpolates_order_statistics() {
        let v: Vec<f64> = (1..=1000).map(f64::from).collect();
        let t = compute_threshold(&v, 0.999).unwrap();
        assert!((t - 999.001).abs() < 1e-9);
        assert!((t - quantile_oracle(&v, 0.999)).abs() < 1e-9);

        let v: Vec<f64> = (1..=10).rev().map(f64::from).collect();
        assert_eq!(compute_threshold(&v, 0.5).unwrap(), 5.5);
        assert!(compute_threshold(&[], 0.5).is_err());
    }

    #[test]
    fn magnitude_follows_exceedance_rule() {
        assert_eq!(peak_magnitude(468.0, 468.0), 0.0);
        assert_eq!(peak_magnitude(500.0, 468.0), 32.0);
        assert_eq!(peak_magnitude(100.0, 468.0), 0.0);
    }

    #[test]
    fn events_from_flag_runs() {
        assert!(extract_events(&[false; 4], &[1.0; 4]).unwrap().is_empty());
        let ev = extract_events(&[false, true, true, false], &[1.0, 5.0, 7.0, 1.0]).unwrap();
        assert_eq!(ev, vec![PeakEvent { start: 1, end: 2, apex: 2, apex_value: 7.0 }]);
        let ev = extract_events(&[true, true, false, true], &[3.0, 3.0, 0.0, 2.0]).unwrap();
        assert_eq!(ev.len(), 2);
        assert_eq!(ev[0].apex, 0, "earliest apex on ties");
        assert_eq!((ev[1].start, ev[1].end), (3, 3));
        assert!(extract_events(&[true], &[1.0, 2.0]).is_err());
    }

    fn ev(apex: usize) -> PeakEvent {
        PeakEvent { start: apex, end: apex, apex, apex_value: 1.0 }
    }

    #[test]
    fn identical_events_pair_perfectly() {
        let e = vec![ev(3), ev(20), ev(41)];
        let m = match_events(&e, &e, 4);
        assert_eq!(m.pairs.len(), 3);
        assert!(m.pairs.iter().all(|p| p.offset == 0 && p.observed == p.forecast));
    }

    #[test]
    fn late_forecast_has_positive_offset() {
        let m = match_events(&[ev(10)], &[ev(11)], 4);
        assert_eq!(m.pairs, vec![EventPair { observed: 0, forecast: 0, offset: 1 }]);
    }

    #[test]
    fn distant_events_stay_unmatched() {
        let m = match_events(&[ev(10)], &[ev(15)], 4);
        assert!(m.pairs.is_empty());
        assert_eq!(m.unmatched_observed, vec![0]);
        assert_eq!(m.unmatched_forecast, vec![0]);
    }

    #[test]
    fn ties_prefer_earlier_forecast() {
        let m = match_events(&[ev(10)], &[ev(8), ev(12)], 4);
        assert_eq!(m.pairs, vec![EventPair { observed: 0, forecast: 0, offset: -2 }]);
        assert_eq!(m.unmatched_forecast, vec![1]);
    }

    proptest! {
        #[test]
        fn magnitudes_and_flags_agree(q in proptest::collection::vec(0.0f64..50.0, 1..200), qq in 0.5f64..0.999) {
            let thr = compute_threshold(&q, qq).unwrap();
            let set = PeakSet::new(&q, thr);
            for t in 0..q.len() {
                prop_assert_eq!(set.magnitudes[t] > 0.0, set.flags[t]);
            }
            prop_assert_eq!(set.magnitudes.iter().sum::<f64>() > 0.0, set.flags.iter().any(|&f| f));
            // re-flagging the same series with the same threshold gives the same events
            let again = extract_events(&exceedance_flags(&q, thr), &q).unwrap();
            prop_assert_eq!(again, set.events);
        }

        #[test]
        fn threshold_matches_oracle(v in proptest::collection::vec(-100.0f64..100.0, 1..300), q in 0.0f64..1.0) {
            let t = compute_threshold(&v, q).unwrap();
            prop_assert!((t - quantile_oracle(&v, q)).abs() < 1e-9);
        }
    }
}
