//! Verification scores: hydrological efficiencies, continuous error
//! measures, peak errors and 2×2 contingency-table skill scores.
//!
//! Scores that are undefined for a given input (zero variance, empty
//! contingency margins) are reported as `None` and serialize as `null`.

use std::iter::Sum;
use std::ops::Add;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::peaks::{self, EventMatching, PeakEvent};

fn check_pair(sim: &[f64], obs: &[f64], min_len: usize) -> Result<()> {
    if sim.len() != obs.len() {
        return Err(Error::LengthMismatch { left: sim.len(), right: obs.len() });
    }
    if sim.len() < min_len {
        return Err(Error::InsufficientData(format!("need at least {min_len} paired values, got {}", sim.len())));
    }
    if sim.iter().chain(obs).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("verification input".into()));
    }
    Ok(())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Population standard deviation.
fn std_dev(v: &[f64], mu: f64) -> f64 {
    (v.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
}

/// Pearson correlation; `None` when either series is constant.
pub fn pearson(sim: &[f64], obs: &[f64]) -> Option<f64> {
    let (ms, mo) = (mean(sim), mean(obs));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (s, o) in sim.iter().zip(obs) {
        let (ds, d_o) = (s - ms, o - mo);
        sxy += ds * d_o;
        sxx += ds * ds;
        syy += d_o * d_o;
    }
    (sxx > 0.0 && syy > 0.0).then(|| (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Nash-Sutcliffe efficiency.
pub fn nse(sim: &[f64], obs: &[f64]) -> Result<f64> {
    check_pair(sim, obs, 1)?;
    let mo = mean(obs);
    let denom: f64 = obs.iter().map(|o| (o - mo).powi(2)).sum();
    if denom == 0.0 {
        return Err(Error::Degenerate("observations have zero variance".into()));
    }
    let num: f64 = sim.iter().zip(obs).map(|(s, o)| (s - o).powi(2)).sum();
    Ok(1.0 - num / denom)
}

/// KGE value with its correlation, bias-ratio and variability-ratio terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KgeComponents {
    pub value: f64,
    pub r: f64,
    pub beta: f64,
    /// CV ratio for KGE, standard-deviation ratio for KGE′.
    pub gamma: f64,
}

fn kge_parts(sim: &[f64], obs: &[f64]) -> Result<(f64, f64, f64, f64, f64, f64)> {
    check_pair(sim, obs, 2)?;
    let (ms, mo) = (mean(sim), mean(obs));
    let (ss, so) = (std_dev(sim, ms), std_dev(obs, mo));
    if so == 0.0 {
        return Err(Error::Degenerate("observations have zero standard deviation".into()));
    }
    if mo == 0.0 {
        return Err(Error::Degenerate("observations have zero mean".into()));
    }
    let r = pearson(sim, obs).ok_or_else(|| Error::Degenerate("simulation has zero standard deviation".into()))?;
    Ok((r, ms, mo, ss, so, ms / mo))
}

fn euclid(r: f64, beta: f64, gamma: f64) -> f64 {
    1.0 - ((r - 1.0).powi(2) + (beta - 1.0).powi(2) + (gamma - 1.0).powi(2)).sqrt()
}

/// Kling-Gupta efficiency with the coefficient-of-variation ratio.
pub fn kge(sim: &[f64], obs: &[f64]) -> Result<KgeComponents> {
    let (r, ms, mo, ss, so, beta) = kge_parts(sim, obs)?;
    if ms == 0.0 {
        return Err(Error::Degenerate("simulation has zero mean".into()));
    }
    let gamma = (ss / ms) / (so / mo);
    Ok(KgeComponents { value: euclid(r, beta, gamma), r, beta, gamma })
}

/// Modified KGE (KGE′) with the standard-deviation ratio.
pub fn kge_mod(sim: &[f64], obs: &[f64]) -> Result<KgeComponents> {
    let (r, _, _, ss, so, beta) = kge_parts(sim, obs)?;
    let gamma = ss / so;
    Ok(KgeComponents { value: euclid(r, beta, gamma), r, beta, gamma })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelativePeakError {
    pub signed: f64,
    pub absolute: f64,
}

/// Relative error of a simulated peak against the observed peak.
pub fn rpe(sim_peak: f64, obs_peak: f64) -> Result<RelativePeakError> {
    if obs_peak <= 0.0 || !sim_peak.is_finite() || !obs_peak.is_finite() {
        return Err(Error::Degenerate(format!("observed peak {obs_peak} must be positive and finite")));
    }
    let signed = (sim_peak - obs_peak) / obs_peak;
    Ok(RelativePeakError { signed, absolute: signed.abs() })
}

/// Forecast apex minus observed apex for every matched pair, in steps.
pub fn peak_timing_errors(matching: &EventMatching) -> Vec<i64> {
    matching.pairs.iter().map(|p| p.offset).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuousMetrics {
    pub mae: f64,
    pub mse: f64,
    pub rmse: f64,
    /// Mean error (bias), `mean(sim - obs)`.
    pub me: f64,
    pub r: Option<f64>,
    /// Population variance of the error.
    pub error_variance: f64,
    pub error_sd: f64,
    /// `(mean(sim) - mean(obs))^2`
    pub mse_mean_bias_sq: f64,
    /// `(sd(sim) - sd(obs))^2`
    pub mse_second_order_bias: f64,
    /// `2 sd(sim) sd(obs) (1 - r)`; with the two bias terms it sums to MSE.
    pub mse_correlation_term: Option<f64>,
}

pub fn continuous_metrics(sim: &[f64], obs: &[f64]) -> Result<ContinuousMetrics> {
    check_pair(sim, obs, 2)?;
    let n = sim.len() as f64;
    let errors: Vec<f64> = sim.iter().zip(obs).map(|(s, o)| s - o).collect();
    let me = errors.iter().sum::<f64>() / n;
    let mae = errors.iter().map(|e| e.abs()).sum::<f64>() / n;
    let mse = errors.iter().map(|e| e * e).sum::<f64>() / n;
    let error_variance = errors.iter().map(|e| (e - me).powi(2)).sum::<f64>() / n;
    let (ms, mo) = (mean(sim), mean(obs));
    let (ss, so) = (std_dev(sim, ms), std_dev(obs, mo));
    let r = pearson(sim, obs);
    Ok(ContinuousMetrics {
        mae,
        mse,
        rmse: mse.sqrt(),
        me,
        r,
        error_variance,
        error_sd: error_variance.sqrt(),
        mse_mean_bias_sq: me * me,
        mse_second_order_bias: (ss - so).powi(2),
        mse_correlation_term: r.map(|r| 2.0 * ss * so * (1.0 - r)),
    })
}

/// Per-step 2×2 counts of threshold exceedance.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ContingencyTable {
    pub hits: u64,
    pub false_alarms: u64,
    pub misses: u64,
    pub true_negatives: u64,
}

impl ContingencyTable {
    pub fn new(hits: u64, false_alarms: u64, misses: u64, true_negatives: u64) -> Self {
        Self { hits, false_alarms, misses, true_negatives }
    }

    pub fn total(&self) -> u64 {
        self.hits + self.false_alarms + self.misses + self.true_negatives
    }

    /// CSV in the usual layout: forecast rows, observed columns, margins.
    pub fn to_csv_string(&self) -> String {
        let (h, fa, m, tn) = (self.hits, self.false_alarms, self.misses, self.true_negatives);
        format!(
            "forecast,observed_yes,observed_no,total\nyes,{h},{fa},{}\nno,{m},{tn},{}\ntotal,{},{},{}\n",
            h + fa,
            m + tn,
            h + m,
            fa + tn,
            self.total()
        )
    }
}

impl Add for ContingencyTable {
    type Output = ContingencyTable;
    fn add(self, o: Self) -> Self {
        ContingencyTable {
            hits: self.hits + o.hits,
            false_alarms: self.false_alarms + o.false_alarms,
            misses: self.misses + o.misses,
            true_negatives: self.true_negatives + o.true_negatives,
        }
    }
}

impl Sum for ContingencyTable {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(ContingencyTable::default(), Add::add)
    }
}

pub fn build_contingency(obs_flags: &[bool], fc_flags: &[bool]) -> Result<ContingencyTable> {
    if obs_flags.len() != fc_flags.len() {
        return Err(Error::LengthMismatch { left: obs_flags.len(), right: fc_flags.len() });
    }
    let mut t = ContingencyTable::default();
    for (&o, &f) in obs_flags.iter().zip(fc_flags) {
        match (f, o) {
            (true, true) => t.hits += 1,
            (true, false) => t.false_alarms += 1,
            (false, true) => t.misses += 1,
            (false, false) => t.true_negatives += 1,
        }
    }
    Ok(t)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinaryMetrics {
    /// Probability of detection.
    pub pod: Option<f64>,
    /// Success ratio.
    pub sr: Option<f64>,
    /// False alarm ratio.
    pub far: Option<f64>,
    /// Probability of false detection.
    pub pofd: Option<f64>,
    /// Frequency bias.
    pub fb: Option<f64>,
    /// Fraction correct.
    pub fc: Option<f64>,
    /// Critical success index.
    pub csi: Option<f64>,
    /// Equitable threat score.
    pub ets: Option<f64>,
    /// Peirce skill score.
    pub pss: Option<f64>,
}

fn ratio(num: f64, den: f64) -> Option<f64> {
    (den != 0.0).then(|| num / den)
}

pub fn binary_metrics(t: &ContingencyTable) -> BinaryMetrics {
    let (h, fa, m, tn) = (t.hits as f64, t.false_alarms as f64, t.misses as f64, t.true_negatives as f64);
    let n = h + fa + m + tn;
    let pod = ratio(h, h + m);
    let pofd = ratio(fa, fa + tn);
    let ets = if n > 0.0 {
        let random_hits = (h + m) * (h + fa) / n;
        ratio(h - random_hits, h + m + fa - random_hits)
    } else {
        None
    };
    BinaryMetrics {
        pod,
        sr: ratio(h, h + fa),
        far: ratio(fa, h + fa),
        pofd,
        fb: ratio(h + fa, h + m),
        fc: ratio(h + tn, n),
        csi: ratio(h, h + m + fa),
        ets,
        pss: pod.zip(pofd).map(|(a, b)| a - b),
    }
}

/// Event-level detection scores from an observed/forecast matching.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventScores {
    pub observed_events: usize,
    pub forecast_events: usize,
    pub matched: usize,
    /// Matched observed events over observed events.
    pub pod: Option<f64>,
    /// Unmatched forecast events over forecast events.
    pub far: Option<f64>,
}

impl EventScores {
    pub fn from_counts(observed_events: usize, forecast_events: usize, matched: usize) -> Self {
        Self {
            observed_events,
            forecast_events,
            matched,
            pod: ratio(matched as f64, observed_events as f64),
            far: ratio((forecast_events - matched) as f64, forecast_events as f64),
        }
    }

    pub fn from_matching(m: &EventMatching) -> Self {
        let matched = m.pairs.len();
        Self::from_counts(matched + m.unmatched_observed.len(), matched + m.unmatched_forecast.len(), matched)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakVerification {
    pub events: EventScores,
    pub observed: Vec<PeakEvent>,
    pub forecast: Vec<PeakEvent>,
    pub matching: EventMatching,
    pub signed_rpe: Vec<f64>,
    pub abs_rpe: Vec<f64>,
    pub timing_errors: Vec<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub n_steps: usize,
    pub threshold: f64,
    pub nse: Option<f64>,
    pub kge: Option<KgeComponents>,
    pub kge_mod: Option<KgeComponents>,
    pub continuous: Option<ContinuousMetrics>,
    pub peaks: PeakVerification,
    pub contingency: ContingencyTable,
    pub binary: BinaryMetrics,
}

impl VerificationReport {
    /// Scores `sim` against `obs`; exceedances are taken against `threshold`
    /// and events are matched within `max_offset` steps.
    pub fn compute(sim: &[f64], obs: &[f64], threshold: f64, max_offset: usize) -> Result<Self> {
        check_pair(sim, obs, 1)?;
        let obs_flags = peaks::exceedance_flags(obs, threshold);
        let fc_flags = peaks::exceedance_flags(sim, threshold);
        let contingency = build_contingency(&obs_flags, &fc_flags)?;
        let observed = peaks::extract_events(&obs_flags, obs)?;
        let forecast = peaks::extract_events(&fc_flags, sim)?;
        let matching = peaks::match_events(&observed, &forecast, max_offset);

        let mut signed_rpe = Vec::with_capacity(matching.pairs.len());
        let mut abs_rpe = Vec::with_capacity(matching.pairs.len());
        for p in &matching.pairs {
            if let Ok(e) = rpe(forecast[p.forecast].apex_value, observed[p.observed].apex_value) {
                signed_rpe.push(e.signed);
                abs_rpe.push(e.absolute);
            }
        }
        Ok(Self {
            n_steps: sim.len(),
            threshold,
            nse: nse(sim, obs).ok(),
            kge: kge(sim, obs).ok(),
            kge_mod: kge_mod(sim, obs).ok(),
            continuous: continuous_metrics(sim, obs).ok(),
            peaks: PeakVerification {
                events: EventScores::from_matching(&matching),
                timing_errors: peak_timing_errors(&matching),
                observed,
                forecast,
                matching,
                signed_rpe,
                abs_rpe,
            },
            contingency,
            binary: binary_metrics(&contingency),
        })
    }
}
