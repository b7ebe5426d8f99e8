//! Lag features, rolling statistics and the one-step-ahead design matrix.

use std::path::Path;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::{CatchmentSeries, TIMESTAMP_FORMAT};

/// Window lengths, in steps, for every engineered column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureWindows {
    pub rain_lags: usize,
    pub q_lags: usize,
    pub q_rollmean_w: usize,
    pub q_rollstd_w: usize,
    pub rain_rollmean_w: usize,
    pub rain_rollstd_w: usize,
}

impl Default for FeatureWindows {
    fn default() -> Self {
        Self {
            rain_lags: 4,
            q_lags: 3,
            q_rollmean_w: 4,
            q_rollstd_w: 5,
            rain_rollmean_w: 2,
            rain_rollstd_w: 5,
        }
    }
}

impl FeatureWindows {
    /// Leading rows of a block excluded for lack of history.
    pub fn max_history(&self) -> usize {
        [
            self.rain_lags,
            self.q_lags,
            self.q_rollmean_w,
            self.q_rollstd_w,
            self.rain_rollmean_w,
            self.rain_rollstd_w,
        ]
        .into_iter()
        .max()
        .unwrap_or(0)
    }

    /// Shortest block that still yields one supervised row.
    pub fn min_block_len(&self) -> usize {
        self.max_history() + 2
    }

    pub fn column_names(&self) -> Vec<String> {
        let mut names = vec!["rain".to_string()];
        names.extend((1..=self.rain_lags).map(|l| format!("rain_lag{l}")));
        names.extend((1..=self.q_lags).map(|l| format!("q_lag{l}")));
        names.push(format!("q_rollmean{}", self.q_rollmean_w));
        names.push(format!("q_rollstd{}", self.q_rollstd_w));
        names.push(format!("rain_rollmean{}", self.rain_rollmean_w));
        names.push(format!("rain_rollstd{}", self.rain_rollstd_w));
        names
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RollingStat {
    Mean,
    /// Sample standard deviation, divisor `w - 1`.
    Std,
}

/// `out[t] = values[t - l]`; the first `l` entries are unavailable.
pub fn lag(values: &[f64], l: usize) -> Result<Vec<Option<f64>>> {
    if l == 0 {
        return Err(Error::InvalidArgument { name: "lag", reason: "order must be >= 1".into() });
    }
    if l >= values.len() {
        return Err(Error::InsufficientData(format!(
            "lag {l} needs more than {} values",
            values.len()
        )));
    }
    Ok((0..values.len()).map(|t| t.checked_sub(l).map(|s| values[s])).collect())
}

/// Statistic over the trailing window `values[t - w + 1 ..= t]`; the first
/// `w - 1` entries are unavailable.
pub fn rolling_stat(values: &[f64], w: usize, stat: RollingStat) -> Result<Vec<Option<f64>>> {
    let min_w = match stat {
        RollingStat::Mean => 1,
        RollingStat::Std => 2,
    };
    if w < min_w {
        return Err(Error::InvalidArgument {
            name: "window",
            reason: format!("{stat:?} needs a window of at least {min_w}"),
        });
    }
    if w > values.len() {
        return Err(Error::InsufficientData(format!(
            "window {w} is longer than the series ({})",
            values.len()
        )));
    }
    let mut out = vec![None; w - 1];
    out.extend(values.windows(w).map(|win| Some(window_stat(win, stat))));
    Ok(out)
}

fn window_stat(win: &[f64], stat: RollingStat) -> f64 {
    // Shift by the first element so constant windows give exact results.
    let origin = win[0];
    let n = win.len() as f64;
    let shifted_mean = win.iter().map(|v| v - origin).sum::<f64>() / n;
    match stat {
        RollingStat::Mean => origin + shifted_mean,
        RollingStat::Std => {
            let ss: f64 = win.iter().map(|v| (v - origin - shifted_mean).powi(2)).sum();
            (ss / (n - 1.0)).sqrt()
        }
    }
}

/// Supervised one-step-ahead design matrix.
///
/// Row `i` holds the features observed at issue time `t` and the target is the
/// discharge at `t + 1`. Matrices built from synthetic rows (see
/// [`FeatureMatrix::from_rows`]) carry no timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    columns: Vec<String>,
    values: Vec<f64>,
    targets: Vec<f64>,
    issue_times: Vec<NaiveDateTime>,
    target_times: Vec<NaiveDateTime>,
}

impl FeatureMatrix {
    pub fn from_rows(columns: Vec<String>, rows: Vec<Vec<f64>>, targets: Vec<f64>) -> Result<Self> {
        if rows.len() != targets.len() {
            return Err(Error::LengthMismatch { left: rows.len(), right: targets.len() });
        }
        let mut values = Vec::with_capacity(rows.len() * columns.len());
        for row in &rows {
            if row.len() != columns.len() {
                return Err(Error::LengthMismatch { left: row.len(), right: columns.len() });
            }
            values.extend_from_slice(row);
        }
        Ok(Self { columns, values, targets, issue_times: Vec::new(), target_times: Vec::new() })
    }

    /// Same rows, generic column names `x0, x1, ...`.
    pub fn from_unnamed_rows(rows: Vec<Vec<f64>>, targets: Vec<f64>) -> Result<Self> {
        let width = rows.first().map_or(0, |r| r.len());
        Self::from_rows((0..width).map(|i| format!("x{i}")).collect(), rows, targets)
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn n_rows(&self) -> usize {
        self.targets.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.columns.len();
        &self.values[i * w..(i + 1) * w]
    }

    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.columns.len() + col]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.n_rows()).map(move |i| self.row(i))
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn issue_times(&self) -> &[NaiveDateTime] {
        &self.issue_times
    }

    pub fn target_times(&self) -> &[NaiveDateTime] {
        &self.target_times
    }

    /// Subset of rows, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> FeatureMatrix {
        let mut values = Vec::with_capacity(indices.len() * self.n_cols());
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        let pick = |v: &[NaiveDateTime]| {
            if v.is_empty() {
                Vec::new()
            } else {
                indices.iter().map(|&i| v[i]).collect()
            }
        };
        FeatureMatrix {
            columns: self.columns.clone(),
            values,
            targets: indices.iter().map(|&i| self.targets[i]).collect(),
            issue_times: pick(&self.issue_times),
            target_times: pick(&self.target_times),
        }
    }

    /// Same features with a replacement target vector.
    pub fn with_targets(&self, targets: Vec<f64>) -> Result<FeatureMatrix> {
        if targets.len() != self.n_rows() {
            return Err(Error::LengthMismatch { left: targets.len(), right: self.n_rows() });
        }
        Ok(FeatureMatrix { targets, ..self.clone() })
    }

    /// Rows of `other` appended below these rows.
    pub fn concat(&self, other: &FeatureMatrix) -> Result<FeatureMatrix> {
        if self.columns != other.columns {
            return Err(Error::ColumnMismatch {
                expected: self.columns.clone(),
                found: other.columns.clone(),
            });
        }
        let mut out = self.clone();
        out.values.extend_from_slice(&other.values);
        out.targets.extend_from_slice(&other.targets);
        if self.issue_times.is_empty() == other.issue_times.is_empty() {
            out.issue_times.extend_from_slice(&other.issue_times);
            out.target_times.extend_from_slice(&other.target_times);
        } else {
            out.issue_times.clear();
            out.target_times.clear();
        }
        Ok(out)
    }

    /// Checks that every cell and target is finite.
    pub fn ensure_finite(&self, what: &str) -> Result<()> {
        if let Some(i) = self.values.iter().position(|v| !v.is_finite()) {
            let w = self.n_cols().max(1);
            return Err(Error::NonFinite(format!(
                "{what}: row {} column {}",
                i / w,
                self.columns.get(i % w).map_or("?", |s| s.as_str())
            )));
        }
        if let Some(i) = self.targets.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("{what}: target of row {i}")));
        }
        Ok(())
    }

    /// Writes `issue_time,target_time,<columns...>,target` with a header.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["issue_time".to_string(), "target_time".to_string()];
        header.extend(self.columns.iter().cloned());
        header.push("target".into());
        w.write_record(&header)?;
        for i in 0..self.n_rows() {
            let mut rec = Vec::with_capacity(header.len());
            rec.push(self.issue_times.get(i).map_or(String::new(), |t| t.format(TIMESTAMP_FORMAT).to_string()));
            rec.push(self.target_times.get(i).map_or(String::new(), |t| t.format(TIMESTAMP_FORMAT).to_string()));
            rec.extend(self.row(i).iter().map(|v| v.to_string()));
            rec.push(self.targets[i].to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Assembles lag and rolling-statistic columns for one contiguous block.
///
/// Rows run from `t = max_history` to `t = L - 2`, so a block of length `L`
/// yields `L - max_history - 1` rows. Row `t` reads only indices `<= t`.
pub fn build_matrix(block: &CatchmentSeries, windows: &FeatureWindows) -> Result<FeatureMatrix> {
    let len = block.len();
    let history = windows.max_history();
    if len < history + 2 {
        return Err(Error::InsufficientData(format!(
            "catchment {}: block of {len} steps yields no rows (history {history})",
            block.id()
        )));
    }
    let rain = block.rainfall();
    let flow = block.discharge();

    let mut cols: Vec<Vec<Option<f64>>> = vec![rain.iter().copied().map(Some).collect()];
    for l in 1..=windows.rain_lags {
        cols.push(lag(rain, l)?);
    }
    for l in 1..=windows.q_lags {
        cols.push(lag(flow, l)?);
    }
    cols.push(rolling_stat(flow, windows.q_rollmean_w, RollingStat::Mean)?);
    cols.push(rolling_stat(flow, windows.q_rollstd_w, RollingStat::Std)?);
    cols.push(rolling_stat(rain, windows.rain_rollmean_w, RollingStat::Mean)?);
    cols.push(rolling_stat(rain, windows.rain_rollstd_w, RollingStat::Std)?);

    let columns = windows.column_names();
    debug_assert_eq!(columns.len(), cols.len());
    let n_rows = len - history - 1;
    let mut values = Vec::with_capacity(n_rows * cols.len());
    let mut targets = Vec::with_capacity(n_rows);
    let mut issue_times = Vec::with_capacity(n_rows);
    let mut target_times = Vec::with_capacity(n_rows);
    let ts = block.timestamps();
    for t in history..len - 1 {
        for col in &cols {
            values.push(col[t].expect("history covers every window"));
        }
        targets.push(flow[t + 1]);
        issue_times.push(ts[t]);
        target_times.push(ts[t + 1]);
    }
    Ok(FeatureMatrix { columns, values, targets, issue_times, target_times })
}
