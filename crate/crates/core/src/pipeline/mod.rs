//! Per-catchment workflow and the batch runner around it.
//!
//! Every catchment runs ingest → split → features → threshold → boosted
//! baseline → peak forest → fusion → verification → persistence with one
//! shared configuration. Tasks share no mutable state; the batch runner only
//! aggregates after all tasks have finished.

pub mod energy;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::combine::{self, CombinedForecast, PeakIdentification};
use crate::config::{FrameworkConfig, LoadedConfig};
use crate::error::{Error, Result};
use crate::features::{build_matrix, FeatureMatrix};
use crate::forest::{fit_rf, RfModel};
use crate::gbt::{fit_gbt, GbtMeta, GbtModel};
use crate::ingest::{chronological_split, load_catchment, RawSeriesFile};
use crate::peaks::{compute_threshold, peak_magnitude, write_events_csv};
use crate::series::TIMESTAMP_FORMAT;
use crate::verify::{binary_metrics, BinaryMetrics, ContingencyTable, EventScores, VerificationReport};

use self::energy::{estimate_energy, EnergyEstimate, EnergyModel};

pub const FORECAST_FILE: &str = "forecast.csv";
pub const GBT_MODEL_FILE: &str = "gbt_model.json";
pub const RF_MODEL_FILE: &str = "rf_model.json";
pub const REPORT_FILE: &str = "report.json";
pub const OBSERVED_EVENTS_FILE: &str = "observed_events.csv";
pub const FORECAST_EVENTS_FILE: &str = "forecast_events.csv";

/// One manifest row: `catchment_id,rain_path,q_path`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub catchment_id: String,
    pub rain_path: PathBuf,
    pub q_path: PathBuf,
}

/// Reads a manifest; relative paths are resolved against its directory.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    let path = path.as_ref();
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let mut entries = Vec::new();
    for row in reader.deserialize() {
        let mut e: ManifestEntry = row?;
        if e.rain_path.is_relative() {
            e.rain_path = base.join(&e.rain_path);
        }
        if e.q_path.is_relative() {
            e.q_path = base.join(&e.q_path);
        }
        entries.push(e);
    }
    validate_manifest(&entries)?;
    Ok(entries)
}

fn validate_manifest(entries: &[ManifestEntry]) -> Result<()> {
    if entries.is_empty() {
        return Err(Error::EmptyManifest);
    }
    let mut seen = BTreeSet::new();
    for e in entries {
        let id = e.catchment_id.as_str();
        if id.is_empty() || id == "." || id == ".." || id.contains(['/', '\\']) {
            return Err(Error::InvalidArgument {
                name: "catchment_id",
                reason: format!("`{id}` cannot be used as an output directory name"),
            });
        }
        if !seen.insert(id) {
            return Err(Error::InvalidArgument { name: "catchment_id", reason: format!("`{id}` appears twice") });
        }
    }
    Ok(())
}

/// Keeps only the listed catchments, in manifest order.
pub fn select_pilot(entries: &[ManifestEntry], ids: &[String]) -> Result<Vec<ManifestEntry>> {
    for id in ids {
        if !entries.iter().any(|e| &e.catchment_id == id) {
            return Err(Error::InvalidArgument { name: "pilot", reason: format!("`{id}` is not in the manifest") });
        }
    }
    let picked: Vec<ManifestEntry> = entries.iter().filter(|e| ids.contains(&e.catchment_id)).cloned().collect();
    if picked.is_empty() {
        return Err(Error::EmptyManifest);
    }
    Ok(picked)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Ingest,
    Split,
    Features,
    Threshold,
    Baseline,
    PeakModel,
    Fusion,
    Verify,
    Persist,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Ingest => "ingest",
            Stage::Split => "split",
            Stage::Features => "features",
            Stage::Threshold => "threshold",
            Stage::Baseline => "baseline",
            Stage::PeakModel => "peak_model",
            Stage::Fusion => "fusion",
            Stage::Verify => "verify",
            Stage::Persist => "persist",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum TaskStatus {
    Ok,
    /// Too few peak rows for the forest; the baseline is reported unchanged.
    PeakModelFallback { reason: String },
    Failed { stage: Stage, reason: String },
}

impl TaskStatus {
    pub fn label(&self) -> &'static str {
        match self {
            TaskStatus::Ok => "ok",
            TaskStatus::PeakModelFallback { .. } => "peak-model-fallback",
            TaskStatus::Failed { .. } => "failed",
        }
    }

    pub fn is_failed(&self) -> bool {
        matches!(self, TaskStatus::Failed { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifacts {
    pub forecast: PathBuf,
    pub gbt_model: PathBuf,
    /// Absent on peak-model fallback.
    pub rf_model: Option<PathBuf>,
    pub report: PathBuf,
    pub observed_events: PathBuf,
    pub forecast_events: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockLengths {
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

/// Contents of `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatchmentReport {
    pub catchment_id: String,
    pub status: TaskStatus,
    pub n_steps: usize,
    pub blocks: BlockLengths,
    pub threshold: f64,
    pub n_peak_rows: usize,
    pub baseline_model: GbtMeta,
    pub peak_model_trees: Option<usize>,
    pub n_adjusted: usize,
    pub fused: VerificationReport,
    pub baseline: VerificationReport,
    pub config: FrameworkConfig,
    pub overrides: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskResult {
    pub catchment_id: String,
    pub status: TaskStatus,
    pub wall_seconds: f64,
    pub artifacts: Option<Artifacts>,
    #[serde(skip)]
    pub report: Option<CatchmentReport>,
}

#[derive(Debug, Clone, Default)]
pub struct TaskOptions {
    /// Directory for `<id>_{train,validation,test}_features.csv` dumps.
    pub dump_features: Option<PathBuf>,
}

struct StageError {
    stage: Stage,
    error: Error,
}

trait AtStage<T> {
    fn at(self, stage: Stage) -> std::result::Result<T, StageError>;
}

impl<T> AtStage<T> for Result<T> {
    fn at(self, stage: Stage) -> std::result::Result<T, StageError> {
        self.map_err(|error| StageError { stage, error })
    }
}

/// Runs the full chain for one catchment, writing into `<out_dir>/<id>/`.
pub fn run_catchment(
    entry: &ManifestEntry,
    config: &LoadedConfig,
    out_dir: &Path,
    options: &TaskOptions,
) -> TaskResult {
    let started = Instant::now();
    let outcome = run_stages(entry, config, out_dir, options);
    let wall_seconds = started.elapsed().as_secs_f64();
    match outcome {
        Ok((report, artifacts)) => {
            log::info!("{}: {} in {:.1} s", entry.catchment_id, report.status.label(), wall_seconds);
            TaskResult {
                catchment_id: entry.catchment_id.clone(),
                status: report.status.clone(),
                wall_seconds,
                artifacts: Some(artifacts),
                report: Some(report),
            }
        }
        Err(StageError { stage, error }) => {
            log::warn!("{}: failed at {stage}: {error}", entry.catchment_id);
            TaskResult {
                catchment_id: entry.catchment_id.clone(),
                status: TaskStatus::Failed { stage, reason: error.to_string() },
                wall_seconds,
                artifacts: None,
                report: None,
            }
        }
    }
}

fn run_stages(
    entry: &ManifestEntry,
    loaded: &LoadedConfig,
    out_dir: &Path,
    options: &TaskOptions,
) -> std::result::Result<(CatchmentReport, Artifacts), StageError> {
    let cfg = &loaded.config;
    let id = entry.catchment_id.as_str();
    let windows = cfg.feature_windows();

    let series = load_catchment(
        id,
        &RawSeriesFile::new(&entry.rain_path),
        &RawSeriesFile::new(&entry.q_path),
        cfg.step_hours,
    )
    .at(Stage::Ingest)?;

    let blocks = chronological_split(&series, &cfg.split_spec(), windows.min_block_len()).at(Stage::Split)?;

    let train_m = build_matrix(&blocks.train, &windows).at(Stage::Features)?;
    let valid_m = blocks.validation.as_ref().map(|v| build_matrix(v, &windows)).transpose().at(Stage::Features)?;
    let test_m = build_matrix(&blocks.test, &windows).at(Stage::Features)?;
    if let Some(dir) = &options.dump_features {
        dump_features(dir, id, &train_m, valid_m.as_ref(), &test_m).at(Stage::Features)?;
    }

    let mut calibration_q = blocks.train.discharge().to_vec();
    if let Some(v) = &blocks.validation {
        calibration_q.extend_from_slice(v.discharge());
    }
    let threshold = compute_threshold(&calibration_q, cfg.peak_quantile).at(Stage::Threshold)?;

    let gbt = fit_gbt(&train_m, valid_m.as_ref(), &cfg.gbt_params()).at(Stage::Baseline)?;
    let baseline = gbt.predict(&test_m).at(Stage::Baseline)?;

    let calibration_m = match &valid_m {
        Some(v) => train_m.concat(v).at(Stage::PeakModel)?,
        None => train_m.clone(),
    };
    let peak_rows: Vec<usize> = (0..calibration_m.n_rows())
        .filter(|&i| calibration_m.targets()[i] > threshold)
        .collect();
    let magnitudes: Vec<f64> = peak_rows.iter().map(|&i| peak_magnitude(calibration_m.targets()[i], threshold)).collect();
    let peak_m = calibration_m.select_rows(&peak_rows).with_targets(magnitudes).at(Stage::PeakModel)?;
    let (rf, status) = match fit_rf(&peak_m, &cfg.rf_params()) {
        Ok(model) => (Some(model), TaskStatus::Ok),
        Err(e @ Error::PeakModelUnavailable { .. }) => (None, TaskStatus::PeakModelFallback { reason: e.to_string() }),
        Err(e) => return Err(StageError { stage: Stage::PeakModel, error: e }),
    };

    let observed = test_m.targets();
    let combined = match &rf {
        Some(rf) => {
            let indices = match cfg.peak_identification {
                PeakIdentification::Forecast => combine::identify_peak_indices(&baseline, threshold),
                PeakIdentification::Observed => combine::identify_peak_indices(observed, threshold),
            };
            let peak_preds = rf.predict(&test_m.select_rows(&indices)).at(Stage::Fusion)?;
            combine::fuse(&baseline, &indices, &peak_preds, cfg.fusion_weight).at(Stage::Fusion)?
        }
        None => CombinedForecast::baseline_only(baseline.clone()),
    };

    let fused_report =
        VerificationReport::compute(&combined.fused, observed, threshold, cfg.match_max_offset).at(Stage::Verify)?;
    let baseline_report =
        VerificationReport::compute(&combined.baseline, observed, threshold, cfg.match_max_offset).at(Stage::Verify)?;

    let report = CatchmentReport {
        catchment_id: id.to_string(),
        status,
        n_steps: series.len(),
        blocks: BlockLengths {
            train: blocks.train.len(),
            validation: blocks.validation.as_ref().map_or(0, |v| v.len()),
            test: blocks.test.len(),
        },
        threshold,
        n_peak_rows: peak_rows.len(),
        baseline_model: gbt.meta.clone(),
        peak_model_trees: rf.as_ref().map(|m| m.trees.len()),
        n_adjusted: combined.adjusted_indices.len(),
        fused: fused_report,
        baseline: baseline_report,
        config: cfg.clone(),
        overrides: loaded.overrides.clone(),
    };
    let artifacts = persist(&out_dir.join(id), &test_m, &combined, &gbt, rf.as_ref(), &report).at(Stage::Persist)?;
    Ok((report, artifacts))
}

fn dump_features(
    dir: &Path,
    id: &str,
    train: &FeatureMatrix,
    valid: Option<&FeatureMatrix>,
    test: &FeatureMatrix,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    train.write_csv(dir.join(format!("{id}_train_features.csv")))?;
    if let Some(v) = valid {
        v.write_csv(dir.join(format!("{id}_validation_features.csv")))?;
    }
    test.write_csv(dir.join(format!("{id}_test_features.csv")))
}

fn persist(
    dir: &Path,
    test_m: &FeatureMatrix,
    combined: &CombinedForecast,
    gbt: &GbtModel,
    rf: Option<&RfModel>,
    report: &CatchmentReport,
) -> Result<Artifacts> {
    std::fs::create_dir_all(dir)?;
    let artifacts = Artifacts {
        forecast: dir.join(FORECAST_FILE),
        gbt_model: dir.join(GBT_MODEL_FILE),
        rf_model: rf.map(|_| dir.join(RF_MODEL_FILE)),
        report: dir.join(REPORT_FILE),
        observed_events: dir.join(OBSERVED_EVENTS_FILE),
        forecast_events: dir.join(FORECAST_EVENTS_FILE),
    };
    if rf.is_none() {
        // a stale forest from an earlier run would contradict the report
        match std::fs::remove_file(dir.join(RF_MODEL_FILE)) {
            Err(e) if e.kind() != std::io::ErrorKind::NotFound => return Err(e.into()),
            _ => {}
        }
    }

    let adjusted = combined.is_adjusted();
    let mut w = csv::Writer::from_path(&artifacts.forecast)?;
    w.write_record(["timestamp", "observed", "baseline", "fused", "is_adjusted"])?;
    for i in 0..combined.fused.len() {
        w.write_record([
            test_m.target_times()[i].format(TIMESTAMP_FORMAT).to_string(),
            test_m.targets()[i].to_string(),
            combined.baseline[i].to_string(),
            combined.fused[i].to_string(),
            adjusted[i].to_string(),
        ])?;
    }
    w.flush()?;

    gbt.save(&artifacts.gbt_model)?;
    if let (Some(rf), Some(path)) = (rf, &artifacts.rf_model) {
        rf.save(path)?;
    }
    std::fs::write(&artifacts.report, serde_json::to_string_pretty(report)?)?;
    write_events_csv(&artifacts.observed_events, &report.fused.peaks.observed)?;
    write_events_csv(&artifacts.forecast_events, &report.fused.peaks.forecast)?;
    Ok(artifacts)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
}

impl MetricSummary {
    pub fn from_values(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let median = if n % 2 == 1 { sorted[n / 2] } else { 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]) };
        Some(Self {
            count: n,
            mean: sorted.iter().sum::<f64>() / n as f64,
            median,
            min: sorted[0],
            max: sorted[n - 1],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatchmentSummary {
    pub catchment_id: String,
    pub status: TaskStatus,
    pub nse: Option<f64>,
    pub kge: Option<f64>,
    pub kge_mod: Option<f64>,
    pub events: Option<EventScores>,
}

/// Contents of `aggregate.json`; independent of worker count and timing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub n_tasks: usize,
    pub n_ok: usize,
    pub n_fallback: usize,
    pub n_failed: usize,
    /// Summed over every task that produced a forecast.
    pub contingency: ContingencyTable,
    pub binary: BinaryMetrics,
    /// Event counts pooled over the same tasks.
    pub events: EventScores,
    pub metrics: BTreeMap<String, MetricSummary>,
    pub catchments: Vec<CatchmentSummary>,
}

impl AggregateReport {
    pub fn from_results(results: &[TaskResult]) -> Self {
        let reports: Vec<&CatchmentReport> = results.iter().filter_map(|r| r.report.as_ref()).collect();
        let contingency: ContingencyTable = reports.iter().map(|r| r.fused.contingency).sum();
        let (obs, fc, matched) = reports.iter().fold((0, 0, 0), |(o, f, m), r| {
            let e = &r.fused.peaks.events;
            (o + e.observed_events, f + e.forecast_events, m + e.matched)
        });

        let mut metrics = BTreeMap::new();
        let mut put = |name: &str, values: Vec<f64>| {
            if let Some(s) = MetricSummary::from_values(&values) {
                metrics.insert(name.to_string(), s);
            }
        };
        put("nse", reports.iter().filter_map(|r| r.fused.nse).collect());
        put("kge", reports.iter().filter_map(|r| r.fused.kge.map(|k| k.value)).collect());
        put("kge_mod", reports.iter().filter_map(|r| r.fused.kge_mod.map(|k| k.value)).collect());
        put("rmse", reports.iter().filter_map(|r| r.fused.continuous.map(|c| c.rmse)).collect());
        put("abs_rpe", reports.iter().flat_map(|r| r.fused.peaks.abs_rpe.iter().copied()).collect());
        put(
            "peak_timing_error",
            reports.iter().flat_map(|r| r.fused.peaks.timing_errors.iter().map(|&t| t as f64)).collect(),
        );

        let catchments = results
            .iter()
            .map(|t| CatchmentSummary {
                catchment_id: t.catchment_id.clone(),
                status: t.status.clone(),
                nse: t.report.as_ref().and_then(|r| r.fused.nse),
                kge: t.report.as_ref().and_then(|r| r.fused.kge.map(|k| k.value)),
                kge_mod: t.report.as_ref().and_then(|r| r.fused.kge_mod.map(|k| k.value)),
                events: t.report.as_ref().map(|r| r.fused.peaks.events),
            })
            .collect();

        Self {
            n_tasks: results.len(),
            n_ok: results.iter().filter(|r| r.status == TaskStatus::Ok).count(),
            n_fallback: results.iter().filter(|r| matches!(r.status, TaskStatus::PeakModelFallback { .. })).count(),
            n_failed: results.iter().filter(|r| r.status.is_failed()).count(),
            binary: binary_metrics(&contingency),
            contingency,
            events: EventScores::from_counts(obs, fc, matched),
            metrics,
            catchments,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchEnergy {
    pub model: EnergyModel,
    pub total_wall_seconds: f64,
    pub mean_task_seconds: f64,
    pub estimate: EnergyEstimate,
}

#[derive(Debug, Clone)]
pub struct BatchOptions {
    pub workers: usize,
    pub out_dir: PathBuf,
    pub task: TaskOptions,
}

#[derive(Debug, Clone)]
pub struct BatchOutcome {
    pub results: Vec<TaskResult>,
    pub aggregate: AggregateReport,
    pub energy: BatchEnergy,
}

impl BatchOutcome {
    pub fn any_failed(&self) -> bool {
        self.results.iter().any(|r| r.status.is_failed())
    }
}

/// Runs every manifest entry on a pool of `workers` threads, then writes
/// `aggregate.json`, `contingency.csv`, `tasks.csv` and `energy.json`.
pub fn run_batch(manifest: &[ManifestEntry], config: &LoadedConfig, options: &BatchOptions) -> Result<BatchOutcome> {
    validate_manifest(manifest)?;
    if options.workers == 0 {
        return Err(Error::InvalidArgument { name: "workers", reason: "must be >= 1".into() });
    }
    let energy_model = config.config.energy_model()?;
    std::fs::create_dir_all(&options.out_dir)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.workers)
        .build()
        .map_err(|e| Error::InvalidArgument { name: "workers", reason: e.to_string() })?;
    let results: Vec<TaskResult> = pool.install(|| {
        manifest.par_iter().map(|e| run_catchment(e, config, &options.out_dir, &options.task)).collect()
    });

    let aggregate = AggregateReport::from_results(&results);
    let total_wall_seconds: f64 = results.iter().map(|r| r.wall_seconds).sum();
    let mean_task_seconds = total_wall_seconds / results.len() as f64;
    let estimate = estimate_energy(&energy_model, mean_task_seconds.max(f64::MIN_POSITIVE), results.len() as u64)?;
    let energy = BatchEnergy { model: energy_model, total_wall_seconds, mean_task_seconds, estimate };

    let out = &options.out_dir;
    std::fs::write(out.join("aggregate.json"), serde_json::to_string_pretty(&aggregate)?)?;
    std::fs::write(out.join("contingency.csv"), aggregate.contingency.to_csv_string())?;
    std::fs::write(out.join("energy.json"), serde_json::to_string_pretty(&energy)?)?;
    write_tasks_csv(&out.join("tasks.csv"), &results, &energy_model)?;
    Ok(BatchOutcome { results, aggregate, energy })
}

fn write_tasks_csv(path: &Path, results: &[TaskResult], model: &EnergyModel) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["catchment_id", "status", "stage", "reason", "wall_seconds", "energy_kwh"])?;
    for r in results {
        let (stage, reason) = match &r.status {
            TaskStatus::Ok => (String::new(), String::new()),
            TaskStatus::PeakModelFallback { reason } => (String::new(), reason.clone()),
            TaskStatus::Failed { stage, reason } => (stage.to_string(), reason.clone()),
        };
        let kwh = model.mean_power() * r.wall_seconds / 3.6e6;
        w.write_record([
            r.catchment_id.clone(),
            r.status.label().to_string(),
            stage,
            reason,
            format!("{:.3}", r.wall_seconds),
            format!("{kwh:.8}"),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Columns of a `forecast.csv` needed for re-verification.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastTable {
    pub observed: Vec<f64>,
    pub baseline: Vec<f64>,
    pub fused: Vec<f64>,
}

pub fn read_forecast_csv(path: impl AsRef<Path>) -> Result<ForecastTable> {
    #[derive(Deserialize)]
    struct Row {
        observed: f64,
        baseline: f64,
        fused: f64,
    }
    let mut reader = csv::Reader::from_path(path)?;
    let mut table = ForecastTable { observed: Vec::new(), baseline: Vec::new(), fused: Vec::new() };
    for row in reader.deserialize() {
        let row: Row = row?;
        table.observed.push(row.observed);
        table.baseline.push(row.baseline);
        table.fused.push(row.fused);
    }
    if table.observed.is_empty() {
        return Err(Error::InsufficientData("forecast file has no rows".into()));
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(id: &str) -> ManifestEntry {
        ManifestEntry { catchment_id: id.into(), rain_path: "r.csv".into(), q_path: "q.csv".into() }
    }

    #[test]
    fn manifest_validation() {
        assert!(matches!(validate_manifest(&[]), Err(Error::EmptyManifest)));
        assert!(validate_manifest(&[entry("a"), entry("a")]).is_err());
        assert!(validate_manifest(&[entry("../x")]).is_err());
        assert!(validate_manifest(&[entry("a"), entry("b")]).is_ok());
    }

    #[test]
    fn manifest_paths_resolve_against_its_directory() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        std::fs::write(&path, "catchment_id,rain_path,q_path\nc1,data/c1_rain.csv,/abs/c1_q.csv\n").unwrap();
        let m = read_manifest(&path).unwrap();
        assert_eq!(m[0].rain_path, dir.path().join("data/c1_rain.csv"));
        assert_eq!(m[0].q_path, PathBuf::from("/abs/c1_q.csv"));
        std::fs::write(&path, "catchment_id,rain_path,q_path\n").unwrap();
        assert!(matches!(read_manifest(&path), Err(Error::EmptyManifest)));
    }

    #[test]
    fn pilot_selection() {
        let m = vec![entry("a"), entry("b"), entry("c")];
        let p = select_pilot(&m, &["c".into(), "a".into()]).unwrap();
        assert_eq!(p.iter().map(|e| e.catchment_id.as_str()).collect::<Vec<_>>(), ["a", "c"]);
        assert!(select_pilot(&m, &["z".into()]).is_err());
    }

    #[test]
    fn summary_statistics() {
        let s = MetricSummary::from_values(&[3.0, 1.0, 2.0, 10.0]).unwrap();
        assert_eq!((s.count, s.mean, s.median, s.min, s.max), (4, 4.0, 2.5, 1.0, 10.0));
        assert!(MetricSummary::from_values(&[]).is_none());
    }

    #[test]
    fn status_serialization() {
        let s = TaskStatus::Failed { stage: Stage::Ingest, reason: "missing".into() };
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(json, r#"{"status":"failed","stage":"ingest","reason":"missing"}"#);
        assert_eq!(serde_json::to_string(&TaskStatus::Ok).unwrap(), r#"{"status":"ok"}"#);
    }
}
