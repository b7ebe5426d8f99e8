use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use hydrofuse::config::{FrameworkConfig, LoadedConfig};
use hydrofuse::pipeline::energy::{estimate_energy, EnergyModel};
use hydrofuse::pipeline::{self, BatchOptions, TaskOptions, TaskStatus};
use hydrofuse::synth::{self, SynthSpec};
use hydrofuse::verify::VerificationReport;
use hydrofuse::{peaks, Result};

#[derive(Parser)]
#[command(name = "hydrofuse", version, about = "Boosted-tree streamflow forecasts with peak-forest fusion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train, forecast and verify every catchment in a manifest.
    Run {
        #[arg(long)]
        manifest: PathBuf,
        /// Flat TOML configuration; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
        /// Overrides `rng_seed` from the configuration.
        #[arg(long)]
        seed: Option<u64>,
        /// Comma-separated catchment ids to run instead of the whole manifest.
        #[arg(long, value_delimiter = ',')]
        pilot: Option<Vec<String>>,
        /// Directory for per-block feature matrices.
        #[arg(long)]
        dump_features: Option<PathBuf>,
    },
    /// Score a forecast.csv written by `run`.
    Verify {
        #[arg(long)]
        forecast: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Exceedance threshold; defaults to the 0.999 quantile of the observed column.
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long, default_value_t = 4)]
        max_offset: usize,
    },
    /// Per-task and cumulative energy from phase-weighted wall power.
    Energy {
        #[arg(long)]
        p_high: f64,
        #[arg(long)]
        p_low: f64,
        #[arg(long)]
        w_high: f64,
        #[arg(long)]
        seconds: f64,
        #[arg(long)]
        tasks: u64,
    },
    /// Write synthetic catchments and a manifest listing them.
    Synth {
        /// TOML generator spec; defaults apply when omitted.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Number of catchments, with seeds rng_seed, rng_seed + 1, ...
        #[arg(long, default_value_t = 1)]
        count: u64,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse().command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(command: Command) -> Result<bool> {
    match command {
        Command::Run { manifest, config, out, workers, seed, pilot, dump_features } => {
            let mut loaded = match config {
                Some(path) => FrameworkConfig::load(path)?,
                None => LoadedConfig { config: FrameworkConfig::default(), overrides: Vec::new() },
            };
            if let Some(seed) = seed {
                loaded.config.rng_seed = seed;
                if !loaded.overrides.iter().any(|o| o == "rng_seed") {
                    loaded.overrides.push("rng_seed".into());
                }
            }
            let mut entries = pipeline::read_manifest(&manifest)?;
            if let Some(ids) = &pilot {
                entries = pipeline::select_pilot(&entries, ids)?;
            }
            let workers = workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
            let options = BatchOptions { workers, out_dir: out, task: TaskOptions { dump_features } };
            let outcome = pipeline::run_batch(&entries, &loaded, &options)?;
            for r in &outcome.results {
                let detail = match &r.status {
                    TaskStatus::Failed { stage, reason } => format!("{stage}: {reason}"),
                    _ => {
                        let kge = r.report.as_ref().and_then(|rep| rep.fused.kge).map(|k| k.value);
                        let nse = r.report.as_ref().and_then(|rep| rep.fused.nse);
                        format!("KGE {} NSE {}", fmt_opt(kge), fmt_opt(nse))
                    }
                };
                println!("{:<20} {:<20} {:>8.1} s  {detail}", r.catchment_id, r.status.label(), r.wall_seconds);
            }
            let a = &outcome.aggregate;
            println!(
                "{} tasks: {} ok, {} fallback, {} failed; cumulative energy {:.4} kWh",
                a.n_tasks, a.n_ok, a.n_fallback, a.n_failed, outcome.energy.estimate.cumulative_kwh
            );
            Ok(!outcome.any_failed())
        }
        Command::Verify { forecast, out, threshold, max_offset } => {
            let table = pipeline::read_forecast_csv(&forecast)?;
            let threshold = match threshold {
                Some(t) => t,
                None => peaks::compute_threshold(&table.observed, 0.999)?,
            };
            let fused = VerificationReport::compute(&table.fused, &table.observed, threshold, max_offset)?;
            let baseline = VerificationReport::compute(&table.baseline, &table.observed, threshold, max_offset)?;
            let doc = serde_json::json!({ "fused": fused, "baseline": baseline });
            std::fs::write(&out, serde_json::to_string_pretty(&doc)?)?;
            Ok(true)
        }
        Command::Energy { p_high, p_low, w_high, seconds, tasks } => {
            let model = EnergyModel::new(p_high, p_low, w_high)?;
            let e = estimate_energy(&model, seconds, tasks)?;
            println!("{}", serde_json::to_string_pretty(&e)?);
            Ok(true)
        }
        Command::Synth { spec, out, count } => {
            let spec = match spec {
                Some(path) => SynthSpec::load(path)?,
                None => SynthSpec::default(),
            };
            std::fs::create_dir_all(&out)?;
            let mut manifest = csv::Writer::from_path(out.join("manifest.csv"))?;
            manifest.write_record(["catchment_id", "rain_path", "q_path"])?;
            for i in 0..count {
                let s = SynthSpec { rng_seed: spec.rng_seed.wrapping_add(i), ..spec.clone() };
                let id = format!("synth{:03}", s.rng_seed);
                let series = synth::generate(&s, &id)?;
                let (rain, q) = synth::write_catchment_csv(&series, &out)?;
                let name = |p: &PathBuf| p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
                manifest.write_record([id, name(&rain), name(&q)])?;
            }
            manifest.flush()?;
            Ok(true)
        }
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |v| format!("{v:.3}"))
}
