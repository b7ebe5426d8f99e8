//! Acceptance criteria AC1-AC9. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::OnceLock;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use hydrofuse::combine::fuse;
use hydrofuse::config::{FrameworkConfig, LoadedConfig};
use hydrofuse::features::FeatureMatrix;
use hydrofuse::forest::{fit_rf, RfParams};
use hydrofuse::gbt::{fit_gbt, fit_gbt_traced, GbtParams, TreeNode};
use hydrofuse::pipeline::energy::{estimate_energy, EnergyModel};
use hydrofuse::pipeline::{
    run_batch, run_catchment, BatchOptions, BatchOutcome, ManifestEntry, TaskOptions, TaskStatus,
};
use hydrofuse::synth::{self, SynthSpec};
use hydrofuse::verify::{binary_metrics, kge, kge_mod, nse, BinaryMetrics, ContingencyTable};
use hydrofuse::CatchmentSeries;

type Check = std::result::Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn main() {
    let criteria: [(&str, &str, fn() -> Check); 9] = [
        ("AC1", "binary metrics on reference contingency tables", ac1_metric_tables),
        ("AC2", "energy estimate at 84 W", ac2_energy),
        ("AC3", "efficiency-metric identities", ac3_identities),
        ("AC4", "boosting correctness", ac4_boosting),
        ("AC5", "forest correctness", ac5_forest),
        ("AC6", "leakage suite", ac6_leakage),
        ("AC7", "desk-scale skill", ac7_skill),
        ("AC8", "fusion contract", ac8_fusion),
        ("AC9", "determinism and batch isolation", ac9_determinism),
    ];
    let mut failed = 0;
    for (id, title, f) in criteria {
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into()))
        });
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) if detail.is_empty() => println!("{id} PASS {title} ({secs:.2} s)"),
            Ok(detail) => println!("{id} PASS {title}: {detail} ({secs:.2} s)"),
            Err(reason) => {
                failed += 1;
                println!("{id} FAIL {title}: {reason} ({secs:.2} s)");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}

// AC1

fn within(name: &str, got: Option<f64>, want: f64, tol: f64) -> std::result::Result<(), String> {
    let g = got.ok_or_else(|| format!("{name} undefined"))?;
    ensure((g - want).abs() <= tol, || format!("{name} = {g:.5}, expected {want} ± {tol}"))
}

fn check_table(label: &str, b: &BinaryMetrics, want: [f64; 9]) -> std::result::Result<(), String> {
    let got = [b.pod, b.sr, b.far, b.pofd, b.fb, b.fc, b.csi, b.ets, b.pss];
    let names = ["POD", "SR", "FAR", "POFD", "FB", "FC", "CSI", "ETS", "PSS"];
    for ((name, g), w) in names.iter().zip(got).zip(want) {
        within(&format!("{label} {name}"), g, w, 0.005)?;
    }
    Ok(())
}

fn ac1_metric_tables() -> Check {
    let hybrid = binary_metrics(&ContingencyTable::new(399_497, 61_716, 62_154, 8_692_729));
    check_table("hybrid", &hybrid, [0.87, 0.87, 0.13, 0.007, 1.0, 0.99, 0.76, 0.75, 0.86])?;
    let efas = binary_metrics(&ContingencyTable::new(189_175, 419_965, 272_476, 8_334_480));
    check_table("EFAS", &efas, [0.41, 0.31, 0.69, 0.05, 1.32, 0.92, 0.21, 0.19, 0.36])?;
    Ok(String::new())
}

// AC2

fn ac2_energy() -> Check {
    let model = EnergyModel::constant(84.0).map_err(|e| e.to_string())?;
    for (secs, per_task, total) in [(30.0, 0.0007, 0.6), (240.0, 0.0056, 4.9)] {
        let e = estimate_energy(&model, secs, 857).map_err(|e| e.to_string())?;
        ensure((e.per_task_kwh - per_task).abs() <= 0.05 * per_task, || {
            format!("{secs} s: {:.6} kWh per task, expected {per_task}", e.per_task_kwh)
        })?;
        ensure((e.cumulative_kwh - total).abs() <= 0.05 * total, || {
            format!("{secs} s: {:.4} kWh cumulative, expected {total}", e.cumulative_kwh)
        })?;
    }
    Ok(String::new())
}

// AC3

fn ac3_identities() -> Check {
    const EXACT: f64 = 1e-9;
    const PEARSON: f64 = 1e-7;
    let close = |a: f64, b: f64, tol: f64| (a - b).abs() <= tol;

    let obs = [3.0, 7.0, 1.0, 9.0, 4.0];
    let mean = obs.iter().sum::<f64>() / obs.len() as f64;
    let e = |r: hydrofuse::Result<f64>| r.map_err(|e| e.to_string());
    ensure(close(e(nse(&obs, &obs))?, 1.0, EXACT), || "NSE identity".into())?;
    ensure(close(e(nse(&[mean; 5], &obs))?, 0.0, EXACT), || "NSE of mean forecast".into())?;
    let doubled: Vec<f64> = obs.iter().map(|v| 2.0 * v).collect();
    let k = kge(&doubled, &obs).map_err(|e| e.to_string())?;
    ensure(close(k.value, 0.0, EXACT) && close(k.gamma, 1.0, EXACT) && close(k.beta, 2.0, EXACT), || {
        format!("KGE on doubling: {k:?}")
    })?;
    let kp = kge_mod(&doubled, &obs).map_err(|e| e.to_string())?;
    ensure(close(kp.gamma, 2.0, EXACT), || format!("KGE' gamma on doubling: {}", kp.gamma))?;

    let mut rng = ChaCha8Rng::seed_from_u64(20_240_601);
    for trial in 0..10_000 {
        let n = rng.random_range(3..60);
        let obs: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..500.0)).collect();
        let mean = obs.iter().sum::<f64>() / n as f64;
        let fail = |what: &str| format!("trial {trial}: {what}");

        ensure(close(e(nse(&obs, &obs))?, 1.0, EXACT), || fail("NSE identity"))?;
        ensure(close(e(nse(&vec![mean; n], &obs))?, 0.0, EXACT), || fail("NSE of mean forecast"))?;
        let k = kge(&obs, &obs).map_err(|e| e.to_string())?;
        ensure(close(k.value, 1.0, PEARSON), || fail("KGE identity"))?;
        let kp = kge_mod(&obs, &obs).map_err(|e| e.to_string())?;
        ensure(close(kp.value, 1.0, PEARSON), || fail("KGE' identity"))?;

        let doubled: Vec<f64> = obs.iter().map(|v| 2.0 * v).collect();
        let k = kge(&doubled, &obs).map_err(|e| e.to_string())?;
        ensure(close(k.beta, 2.0, EXACT) && close(k.gamma, 1.0, EXACT), || fail("KGE ratios on doubling"))?;
        ensure(close(k.r, 1.0, PEARSON) && close(k.value, 0.0, PEARSON), || fail("KGE on doubling"))?;
        let kp = kge_mod(&doubled, &obs).map_err(|e| e.to_string())?;
        ensure(close(kp.gamma, 2.0, EXACT), || fail("KGE' gamma on doubling"))?;

        let t = ContingencyTable::new(
            rng.random_range(0..10_000),
            rng.random_range(0..10_000),
            rng.random_range(0..10_000),
            rng.random_range(0..10_000),
        );
        let b = binary_metrics(&t);
        if let (Some(far), Some(sr)) = (b.far, b.sr) {
            ensure(close(far + sr, 1.0, EXACT), || fail("FAR + SR"))?;
        }
    }
    Ok(String::new())
}

// AC4

fn ac4_boosting() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let rows: Vec<Vec<f64>> = (0..500).map(|_| (0..4).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
    let y: Vec<f64> = rows.iter().map(|r| 3.0 * r[0] - r[1] * r[2] + (2.0 * r[3]).sin()).collect();
    let train = FeatureMatrix::from_unnamed_rows(rows, y).map_err(|e| e.to_string())?;
    let params = GbtParams {
        subsample: 1.0,
        colsample: 1.0,
        l1_penalty: 0.0,
        n_rounds: 150,
        ..GbtParams::default()
    };
    let (model, trace) = fit_gbt_traced(&train, None, &params).map_err(|e| e.to_string())?;
    for (i, w) in trace.train_mse.windows(2).enumerate() {
        ensure(w[1] <= w[0], || format!("training MSE rose at round {}: {} -> {}", i + 1, w[0], w[1]))?;
    }

    let mut checked = 0;
    for tree in &model.trees {
        let mut bad = None;
        tree.walk(&mut |node| {
            if let TreeNode::Split { gain, left, right, .. } = node {
                let (gl, hl, gr, hr) = (left.grad_sum(), left.hess_sum(), right.grad_sum(), right.hess_sum());
                let lambda = params.l2_penalty;
                let recomputed = 0.5
                    * (gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - (gl + gr).powi(2) / (hl + hr + lambda))
                    - params.min_split_loss;
                checked += 1;
                if (recomputed - gain).abs() > 1e-9 * gain.abs().max(1e-300) {
                    bad = Some(format!("stored gain {gain} vs recomputed {recomputed}"));
                }
            }
        });
        if let Some(b) = bad {
            return Err(b);
        }
    }
    ensure(checked > 0, || "no splits to check".into())?;

    let two = FeatureMatrix::from_unnamed_rows(vec![vec![1.0], vec![3.0]], vec![-4.0, 6.0]).map_err(|e| e.to_string())?;
    let p = GbtParams {
        max_depth: 1,
        l2_penalty: 0.0,
        min_split_loss: 0.0,
        subsample: 1.0,
        colsample: 1.0,
        n_rounds: 400,
        ..GbtParams::default()
    };
    let m = fit_gbt(&two, None, &p).map_err(|e| e.to_string())?;
    let pred = m.predict(&two).map_err(|e| e.to_string())?;
    ensure((pred[0] + 4.0).abs() < 1e-6 && (pred[1] - 6.0).abs() < 1e-6, || format!("two-point predictions {pred:?}"))?;
    Ok(String::new())
}

// AC5

fn ac5_forest() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let rows: Vec<Vec<f64>> = (0..300).map(|_| (0..6).map(|_| rng.random_range(0.0..10.0)).collect()).collect();
    let y: Vec<f64> = rows.iter().map(|r| r[0] * r[1] - 4.0 * r[2] + rng.random_range(-1.0..1.0)).collect();
    let (lo, hi) = y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let train = FeatureMatrix::from_unnamed_rows(rows, y).map_err(|e| e.to_string())?;
    let params = RfParams {
        n_trees: 200,
        max_depth: 8,
        min_samples_leaf: 5,
        feature_fraction: 0.8,
        min_peak_rows: 10,
        seed: 77,
    };

    let fit_with = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| fit_rf(&train, &params)).map_err(|e| e.to_string())
    };
    let one = fit_with(1)?;
    let eight = fit_with(8)?;
    ensure(one.to_json().unwrap() == eight.to_json().unwrap(), || "forest differs between 1 and 8 workers".into())?;

    for tree in &one.trees {
        if let Some((_, n)) = tree.root.leaves().into_iter().find(|&(_, n)| n < 5) {
            return Err(format!("leaf with {n} samples"));
        }
    }
    let queries: Vec<Vec<f64>> = (0..2000).map(|_| (0..6).map(|_| rng.random_range(-50.0..60.0)).collect()).collect();
    for q in &queries {
        let p = one.predict_row(q);
        ensure(p >= lo && p <= hi, || format!("prediction {p} outside [{lo}, {hi}]"))?;
    }
    Ok(String::new())
}

// AC6

fn small_config() -> LoadedConfig {
    let config = FrameworkConfig { n_rounds: 60, rf_n_trees: 60, peak_quantile: 0.99, ..FrameworkConfig::default() };
    LoadedConfig { config, overrides: Vec::new() }
}

fn write_series(series: &CatchmentSeries, dir: &Path) -> ManifestEntry {
    let (rain, q) = synth::write_catchment_csv(series, dir).unwrap();
    ManifestEntry { catchment_id: series.id().to_string(), rain_path: rain, q_path: q }
}

fn digest(path: &Path) -> String {
    let bytes = std::fs::read(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn ac6_leakage() -> Check {
    let spec = SynthSpec { n_steps: 6000, rng_seed: 61, noise_std: 0.05, ..SynthSpec::default() };
    let series = synth::generate(&spec, "leak").map_err(|e| e.to_string())?;
    let boundary = small_config().config.split_spec().boundary_index(series.len());

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut rain = series.rainfall().to_vec();
    let mut flow = series.discharge().to_vec();
    for t in boundary..series.len() {
        rain[t] = rain[t] * rng.random_range(0.0..5.0) + rng.random_range(0.0..3.0);
        flow[t] = flow[t] * rng.random_range(0.5..4.0) + 10.0;
    }
    let perturbed = series.with_values(rain, flow).map_err(|e| e.to_string())?;

    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let run = |s: &CatchmentSeries, name: &str| {
        let data = tmp.path().join(name).join("data");
        let out = tmp.path().join(name).join("out");
        let features = tmp.path().join(name).join("features");
        let entry = write_series(s, &data);
        let r = run_catchment(&entry, &small_config(), &out, &TaskOptions { dump_features: Some(features.clone()) });
        let report = r.report.clone().ok_or_else(|| format!("{name}: task failed: {:?}", r.status))?;
        let a = r.artifacts.clone().unwrap();
        let rf = a.rf_model.as_ref().ok_or_else(|| format!("{name}: no peak model"))?;
        Ok::<_, String>((
            report.threshold.to_bits(),
            digest(&features.join("leak_train_features.csv")),
            digest(&features.join("leak_validation_features.csv")),
            digest(&a.gbt_model),
            digest(rf),
            digest(&features.join("leak_test_features.csv")),
        ))
    };
    let base = run(&series, "base")?;
    let pert = run(&perturbed, "perturbed")?;
    ensure(base.0 == pert.0, || "peak threshold changed".into())?;
    ensure(base.1 == pert.1 && base.2 == pert.2, || "a training feature row changed".into())?;
    ensure(base.3 == pert.3, || "boosted model changed".into())?;
    ensure(base.4 == pert.4, || "peak forest changed".into())?;
    // sanity: the perturbation did reach the test block
    ensure(base.5 != pert.5, || "perturbation did not reach the test features".into())?;
    Ok(String::new())
}

// AC7 + AC9

const ARTIFACTS: [&str; 6] =
    ["forecast.csv", "gbt_model.json", "rf_model.json", "report.json", "observed_events.csv", "forecast_events.csv"];

fn desk_scale_entries(dir: &Path) -> std::result::Result<Vec<ManifestEntry>, String> {
    let mut entries = Vec::new();
    for seed in 1..=5u64 {
        let mut spec = SynthSpec { n_steps: 20_000, rng_seed: seed, ..SynthSpec::default() };
        let clean = synth::route(&spec, &synth::storm_rainfall(&spec));
        let mean_q = clean.iter().sum::<f64>() / clean.len() as f64;
        spec.noise_std = 0.02 * mean_q;
        let series = synth::generate(&spec, &format!("synth{seed}")).map_err(|e| e.to_string())?;
        entries.push(write_series(&series, dir));
    }
    Ok(entries)
}

struct BatchFixture {
    dir: tempfile::TempDir,
    entries: Vec<ManifestEntry>,
    config: LoadedConfig,
    serial: std::result::Result<BatchOutcome, String>,
}

/// Five desk-scale catchments run once on a single worker; shared by AC7 and
/// AC9.
fn batch_fixture() -> &'static BatchFixture {
    static FIXTURE: OnceLock<BatchFixture> = OnceLock::new();
    FIXTURE.get_or_init(|| {
        let dir = tempfile::tempdir().expect("temp dir");
        let entries = desk_scale_entries(&dir.path().join("data")).expect("synthetic catchments");
        let config = LoadedConfig { config: FrameworkConfig::default(), overrides: Vec::new() };
        let options = BatchOptions { workers: 1, out_dir: dir.path().join("w1"), task: TaskOptions::default() };
        let serial = run_batch(&entries, &config, &options).map_err(|e| e.to_string());
        BatchFixture { dir, entries, config, serial }
    })
}

fn ac7_skill() -> Check {
    let serial = batch_fixture().serial.as_ref()?;
    let mut detail = Vec::new();
    for r in &serial.results {
        ensure(r.status == TaskStatus::Ok, || format!("{}: status {:?}", r.catchment_id, r.status))?;
        let k = r.report.as_ref().and_then(|rep| rep.fused.kge).map(|k| k.value);
        let k = k.ok_or_else(|| format!("{}: KGE undefined", r.catchment_id))?;
        ensure(k >= 0.85, || format!("{}: test KGE {k:.3} < 0.85", r.catchment_id))?;
        ensure(r.wall_seconds <= 240.0, || format!("{}: {:.1} s > 4 min", r.catchment_id, r.wall_seconds))?;
        detail.push(format!("{} KGE {k:.3} in {:.1} s", r.catchment_id, r.wall_seconds));
    }
    let ev = serial.aggregate.events;
    let pod = ev.pod.ok_or("no observed events")?;
    let far = ev.far.ok_or("no forecast events")?;
    ensure(pod >= 0.8, || format!("event POD {pod:.3} < 0.8"))?;
    ensure(far <= 0.3, || format!("event FAR {far:.3} > 0.3"))?;
    Ok(format!(
        "{}; events obs {} fc {} matched {}, POD {pod:.3} FAR {far:.3}",
        detail.join(", "),
        ev.observed_events,
        ev.forecast_events,
        ev.matched
    ))
}

fn ac9_determinism() -> Check {
    let fx = batch_fixture();
    let serial = fx.serial.as_ref()?;
    let data = fx.dir.path().join("data");
    let bad = data.join("corrupt_q.csv");
    std::fs::write(&bad, "timestamp,discharge\n1990-01-01T00:00:00,1.0\nnot a date,2.0\n").map_err(|e| e.to_string())?;
    let mut with_corrupt = fx.entries.clone();
    with_corrupt.insert(
        2,
        ManifestEntry { catchment_id: "corrupt".into(), rain_path: fx.entries[0].rain_path.clone(), q_path: bad },
    );
    let out1 = fx.dir.path().join("w1");
    let out4 = fx.dir.path().join("w4");
    let options = BatchOptions { workers: 4, out_dir: out4.clone(), task: TaskOptions::default() };
    let parallel = run_batch(&with_corrupt, &fx.config, &options).map_err(|e| e.to_string())?;

    let failed: Vec<&str> =
        parallel.results.iter().filter(|r| r.status.is_failed()).map(|r| r.catchment_id.as_str()).collect();
    ensure(failed == ["corrupt"], || format!("failed tasks {failed:?}"))?;
    ensure(parallel.aggregate.n_ok + parallel.aggregate.n_fallback == 5, || "healthy tasks did not all finish".into())?;
    ensure(parallel.aggregate.contingency == serial.aggregate.contingency, || {
        "aggregate over the healthy tasks differs from the clean run".into()
    })?;

    let mut compared = 0;
    for e in &fx.entries {
        for name in ARTIFACTS {
            let a = out1.join(&e.catchment_id).join(name);
            if !a.exists() {
                continue;
            }
            let b = out4.join(&e.catchment_id).join(name);
            ensure(digest(&a) == digest(&b), || format!("{} differs between 1 and 4 workers", a.display()))?;
            compared += 1;
        }
    }
    ensure(compared >= 5 * (ARTIFACTS.len() - 1), || format!("only {compared} artifacts found"))?;
    Ok(format!("{compared} artifacts byte-identical across 1 and 4 workers; only `corrupt` failed"))
}

// AC8

fn ac8_fusion() -> Check {
    let f = fuse(&[400.0], &[0], &[40.0], 0.95).map_err(|e| e.to_string())?;
    ensure(f.fused[0] == 438.0, || format!("400 + 0.95 * 40 gave {}", f.fused[0]))?;

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let baseline: Vec<f64> = (0..1000).map(|_| rng.random_range(0.0..900.0)).collect();
    let indices: Vec<usize> = (0..1000).filter(|i| i % 7 == 3).collect();
    let peaks: Vec<f64> = indices.iter().map(|_| rng.random_range(0.0..200.0)).collect();

    let zero = fuse(&baseline, &indices, &peaks, 0.0).map_err(|e| e.to_string())?;
    ensure(zero.fused.iter().zip(&baseline).all(|(a, b)| a.to_bits() == b.to_bits()), || {
        "weight 0 changed the baseline".into()
    })?;

    let full = fuse(&baseline, &indices, &peaks, 0.95).map_err(|e| e.to_string())?;
    for i in 0..baseline.len() {
        if !indices.contains(&i) {
            ensure(full.fused[i].to_bits() == baseline[i].to_bits(), || format!("index {i} changed"))?;
        }
    }
    Ok(String::new())
}
