//! Acceptance suite. Every criterion prints one PASS or FAIL line; the process
//! fails if any criterion does.

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use nalgebra::{Matrix2, Matrix2x4, Matrix4, Vector2, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use rfs_track::commands::{evaluate_sets, run_variant};
use rfs_track::config::{FixedRates, RunConfig, ScenarioSpec, Variant};
use rfs_track::formats::{estimate_track_set, truth_track_set};
use rfs_track_core::bootstrap::{run_estimator, run_tracker, BootstrapConfig, BootstrapFilter, OracleRates};
use rfs_track_core::cardinality::CardinalityDistribution;
use rfs_track_core::cphd::{CphdConfig, CphdFilter, CphdState, GaussianComponent};
use rfs_track_core::lambda_cphd::LambdaCphdFilter;
use rfs_track_core::metrics::ospa;
use rfs_track_core::models::{
    BirthModel, ClutterModel, MeasurementModel, ModelBundle, ModelSet, MotionModel, Point, Region,
    SurvivalDetectionParams,
};
use rfs_track_core::numerics::{esf, GaussianDensity};
use rfs_track_core::simulator::{preset, simulate, Simulation, PRESET_NAMES};

/// Outcome of one criterion: pass flag and a one-line summary.
type Verdict = (bool, String);
type Criterion = (&'static str, fn() -> Verdict);

fn preset_config(name: &str, seed: u64) -> RunConfig {
    RunConfig {
        scenario: Some(ScenarioSpec::Preset(name.into())),
        seed: Some(seed),
        ..RunConfig::default()
    }
}

fn simulated(config: &RunConfig) -> Simulation {
    simulate(&config.scenario().unwrap()).unwrap()
}

fn criterion_esf() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let inputs: Vec<Vec<f64>> = (0..500)
        .map(|i| {
            let n = i % 13;
            (0..n)
                .map(|_| if rng.random::<f64>() < 0.05 { 0.0 } else { rng.random_range(0.0..5.0) })
                .collect()
        })
        .collect();
    let started = Instant::now();
    let fast: Vec<Vec<f64>> = inputs.iter().map(|v| esf(v).unwrap()).collect();
    let elapsed = started.elapsed();

    let mut worst: f64 = 0.0;
    for (values, got) in inputs.iter().zip(&fast) {
        let n = values.len();
        let mut want = vec![0.0; n + 1];
        for mask in 0u32..(1 << n) {
            let product: f64 = (0..n).filter(|b| mask & (1 << b) != 0).map(|b| values[b]).product();
            want[mask.count_ones() as usize] += product;
        }
        if got.len() != want.len() {
            return (false, format!("length {} for {} inputs", got.len(), n));
        }
        for (g, w) in got.iter().zip(&want) {
            let rel = if *w == 0.0 { g.abs() } else { (g - w).abs() / w.abs() };
            worst = worst.max(rel);
        }
    }
    (
        worst <= 1e-9 && elapsed.as_secs_f64() < 1.0,
        format!("500 inputs of size 0-12, max relative error {worst:.2e}, {:.1} ms", elapsed.as_secs_f64() * 1e3),
    )
}

fn brute_ospa(x: &[Point], y: &[Point], c: f64, p: f64) -> f64 {
    let (x, y) = if x.len() <= y.len() { (x, y) } else { (y, x) };
    let (m, n) = (x.len(), y.len());
    if n == 0 {
        return 0.0;
    }
    fn best(x: &[Point], y: &[Point], used: &mut Vec<bool>, i: usize, c: f64, p: f64) -> f64 {
        if i == x.len() {
            return 0.0;
        }
        let mut min = f64::INFINITY;
        for j in 0..y.len() {
            if !used[j] {
                used[j] = true;
                let d = ((x[i].x - y[j].x).powi(2) + (x[i].y - y[j].y).powi(2)).sqrt().min(c);
                min = min.min(d.powf(p) + best(x, y, used, i + 1, c, p));
                used[j] = false;
            }
        }
        min
    }
    let assigned = best(x, y, &mut vec![false; n], 0, c, p);
    ((assigned + c.powf(p) * (n - m) as f64) / n as f64).powf(1.0 / p)
}

fn criterion_ospa() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut worst: f64 = 0.0;
    let mut asymmetric = 0;
    let mut over_c = 0;
    for _ in 0..500 {
        let set = |rng: &mut ChaCha8Rng| -> Vec<Point> {
            let n = rng.random_range(0..=7);
            (0..n)
                .map(|_| Point::new(rng.random_range(0.0..30.0), rng.random_range(0.0..30.0)))
                .collect()
        };
        let x = set(&mut rng);
        let y = set(&mut rng);
        let c = rng.random_range(1.0..30.0);
        let p = rng.random_range(1.0..3.0);
        let xy = ospa(&x, &y, c, p).unwrap();
        let yx = ospa(&y, &x, c, p).unwrap();
        worst = worst.max((xy.total - brute_ospa(&x, &y, c, p)).abs());
        if xy.total != yx.total || xy.location != yx.location || xy.cardinality != yx.cardinality {
            asymmetric += 1;
        }
        if xy.total > c + 1e-12 {
            over_c += 1;
        }
    }
    (
        worst <= 1e-9 && asymmetric == 0 && over_c == 0,
        format!("500 instances, max error {worst:.2e}, {asymmetric} asymmetric, {over_c} above c"),
    )
}

fn criterion_kalman() -> Verdict {
    let motion = MotionModel::constant_velocity(0.5);
    let measurement = MeasurementModel::position(1.5);
    let region = Region::square(1000.0);
    let bundle = ModelBundle {
        motion: ModelSet::single(motion.clone()),
        measurement: measurement.clone(),
        birth: BirthModel::none(),
        clutter: ClutterModel { region, lambda: 0.0 },
        rates: SurvivalDetectionParams { p_s: 1.0, p_d: 1.0 },
    };
    let filter = CphdFilter::new(bundle, CphdConfig { n_max: 5, ..CphdConfig::default() }).unwrap();

    let f = Matrix4::from_iterator(motion.f.iter().copied());
    let q = Matrix4::from_iterator(motion.q.iter().copied());
    let h = Matrix2x4::from_iterator(measurement.h.iter().copied());
    let r = Matrix2::from_iterator(measurement.r.iter().copied());

    let mut m = Vector4::new(400.0, 300.0, 1.0, -0.5);
    let mut p = Matrix4::from_diagonal(&Vector4::new(4.0, 4.0, 1.0, 1.0));
    let prior = GaussianComponent {
        weight: 1.0,
        density: GaussianDensity::new(
            nalgebra::DVector::from_column_slice(m.as_slice()),
            nalgebra::DMatrix::from_column_slice(4, 4, p.as_slice()),
        )
        .unwrap(),
        model: 0,
        tag: 1,
    };
    let mut state = CphdState::new(vec![prior], CardinalityDistribution::delta(1, 5), 0);

    let mut worst: f64 = 0.0;
    let mut bad_count = 0;
    let mut truth = Vector4::new(400.0, 300.0, 1.2, -0.4);
    for k in 1..=50 {
        truth = f * truth;
        let z = Vector2::new(truth[0] + 1.1 * (1.3 * k as f64).sin(), truth[1] + 0.9 * (2.1 * k as f64).cos());

        m = f * m;
        p = f * p * f.transpose() + q;
        let s = h * p * h.transpose() + r;
        let gain = p * h.transpose() * s.try_inverse().unwrap();
        m += gain * (z - h * m);
        p = (Matrix4::identity() - gain * h) * p;

        let (next, tracks) = filter.step(&state, &[Point::new(z[0], z[1])], 0.0, 1.0).unwrap();
        if tracks.len() != 1 || (next.cardinality.probs()[1] - 1.0).abs() > 1e-9 {
            bad_count += 1;
        }
        if let Some(t) = tracks.first() {
            for i in 0..4 {
                worst = worst.max((t.state[i] - m[i]).abs());
            }
        }
        state = next;
    }
    (
        worst <= 1e-6 && bad_count == 0,
        format!("50 frames, max mean deviation {worst:.2e}, {bad_count} frames with N != 1"),
    )
}

fn criterion_cardinality() -> Verdict {
    let config = preset_config("high-clutter", 4);
    let sim = simulated(&config);
    let models = config.filter_models().unwrap();
    let plain = CphdFilter::new(models.clone(), config.filter.tracker.clone()).unwrap();
    let hybrid = LambdaCphdFilter::new(models, config.filter.estimator.clone()).unwrap();

    let mut worst: f64 = 0.0;
    let mut low_mass = 0;
    let mut low_nonzero = 0;
    let mut s = plain.initial_state();
    let mut h = hybrid.initial_state();
    for (k, frame) in sim.frames.iter().enumerate() {
        let z = &frame.measurements;
        let predicted = plain.predict(&s).unwrap();
        worst = worst.max((predicted.cardinality.sum() - 1.0).abs());
        let updated = plain.update(&predicted, z, sim.lambda_true[k], sim.p_d_true[k]).unwrap();
        worst = worst.max((updated.cardinality.sum() - 1.0).abs());
        s = plain.reduce(updated);
        plain.extract(&mut s);

        let predicted = hybrid.predict_hybrid(&h).unwrap();
        worst = worst.max((predicted.cardinality.sum() - 1.0).abs());
        let updated = hybrid.update_hybrid(&predicted, z).unwrap();
        worst = worst.max((updated.cardinality.sum() - 1.0).abs());
        let probs = updated.cardinality.probs();
        let below = &probs[..z.len().min(probs.len())];
        low_mass += below.iter().filter(|&&v| v != 0.0).count();
        low_nonzero += usize::from(below.iter().any(|&v| v != 0.0));
        h = hybrid.reduce(updated);
    }
    (
        worst <= 1e-9 && low_mass == 0,
        format!(
            "60 frames, max |sum - 1| {worst:.2e}, {low_nonzero} hybrid updates with mass below |Z|"
        ),
    )
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn criterion_rates() -> Verdict {
    let started = Instant::now();
    let mut early = Vec::new();
    let mut late = Vec::new();
    let mut p_d = Vec::new();
    for seed in 0..20 {
        let config = preset_config("step-clutter", seed);
        let sim = simulated(&config);
        let est = LambdaCphdFilter::new(config.filter_models().unwrap(), config.filter.estimator.clone()).unwrap();
        let out = run_estimator(&est, &sim.frames).unwrap();
        let series = |from: usize, to: usize, f: &dyn Fn(usize) -> f64| mean(&(from..=to).map(f).collect::<Vec<_>>());
        early.push(series(10, 29, &|k| out[k - 1].lambda_hat));
        late.push(series(40, 60, &|k| out[k - 1].lambda_hat));
        p_d.push(series(20, 60, &|k| out[k - 1].p_d_hat));
    }
    let elapsed = started.elapsed().as_secs_f64();
    let (a, b, c) = (mean(&early), mean(&late), mean(&p_d));
    let inside = |v: &[f64], lo: f64, hi: f64| v.iter().filter(|x| (lo..=hi).contains(*x)).count();
    let pass = (16.0..=24.0).contains(&a) && (64.0..=96.0).contains(&b) && (0.8..=1.0).contains(&c) && elapsed < 60.0;
    (
        pass,
        format!(
            "20 seeds, mean lambda {a:.2} (frames 10-29, {}/20 seeds in band), {b:.2} (frames 40-60, {}/20), \
             mean p_D {c:.3} (frames 20-60, {}/20), {elapsed:.1} s",
            inside(&early, 16.0, 24.0),
            inside(&late, 64.0, 96.0),
            inside(&p_d, 0.8, 1.0),
        ),
    )
}

fn criterion_bootstrap_advantage() -> Verdict {
    let mut wins = 0;
    let mut boot = Vec::new();
    let mut fixed = Vec::new();
    for seed in 0..10 {
        let config = RunConfig {
            fixed_rates: Some(FixedRates { lambda: 10.0, p_d: 0.88 }),
            ..preset_config("ramp-clutter", seed)
        };
        let sim = simulated(&config);
        let models = config.filter_models().unwrap();
        let truth = truth_track_set(&sim.truth, sim.frames.len()).unwrap();
        let score = |variant| {
            let est = run_variant(&config, variant, &models, &sim.frames).unwrap().unwrap();
            evaluate_sets(&truth, &estimate_track_set(&est).unwrap(), &config.metrics)
                .unwrap()
                .ospa_mean
                .cardinality
        };
        let b = score(Variant::Bootstrap);
        let f = score(Variant::MmCphd);
        wins += usize::from(b < f);
        boot.push(b);
        fixed.push(f);
    }
    (
        wins >= 8 && mean(&boot) < mean(&fixed),
        format!(
            "cardinality error bootstrap {:.3} vs fixed-rate {:.3}, bootstrap better on {wins}/10 seeds",
            mean(&boot),
            mean(&fixed)
        ),
    )
}

fn criterion_oracle_identity() -> Verdict {
    let mut identical = 0;
    for (i, name) in PRESET_NAMES.iter().enumerate() {
        let config = RunConfig {
            filter: BootstrapConfig { window: 1, ..BootstrapConfig::default() },
            ..preset_config(name, 100 + i as u64)
        };
        let sim = simulated(&config);
        let models = config.filter_models().unwrap();
        let oracle = OracleRates {
            lambda: sim.lambda_true.clone(),
            p_d: sim.p_d_true.clone(),
        };
        let composed = BootstrapFilter::with_estimator(models.clone(), config.filter.clone(), oracle)
            .unwrap()
            .run_sequence(&sim.frames)
            .unwrap();
        let tracker = CphdFilter::new(models, config.filter.tracker.clone()).unwrap();
        let direct = run_tracker(&tracker, &sim.frames, |k| (sim.lambda_true[k - 1], sim.p_d_true[k - 1])).unwrap();
        identical += usize::from(composed == direct);
    }
    (
        identical == PRESET_NAMES.len(),
        format!("{identical}/{} presets bit-identical over 60 frames", PRESET_NAMES.len()),
    )
}

fn checksums(dir: &Path, skip: &[&str]) -> Vec<(String, String)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            let rel = path.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
            if path.is_dir() {
                stack.push(path);
            } else if !skip.contains(&rel.as_str()) {
                out.push((rel, hex::encode(Sha256::digest(fs::read(&path).unwrap()))));
            }
        }
    }
    out.sort();
    out
}

/// The manifest with its wall-clock fields removed.
fn manifest_without_timings(dir: &Path) -> serde_json::Value {
    let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    for run in v["runs"].as_array_mut().unwrap() {
        run.as_object_mut().unwrap().remove("ms_per_frame");
    }
    v
}

fn criterion_determinism() -> Verdict {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let config = root.join("config.json");
    fs::write(
        &config,
        r#"{"schema_version": 1, "scenario": "step-clutter", "seed": 7, "fixed_rates": {"lambda": 20.0, "p_d": 0.9}}"#,
    )
    .unwrap();
    let small = root.join("small.json");
    fs::write(
        &small,
        r#"{"schema_version": 1, "scenario": {"frames": 10, "initial_targets": 5}, "seed": 3, "runs": 3,
            "fixed_rates": {"lambda": 10.0, "p_d": 0.9}}"#,
    )
    .unwrap();
    let cfg = config.to_str().unwrap();
    let run = |args: &[&str]| {
        let o = Command::new(env!("CARGO_BIN_EXE_rfs-track")).args(args).output().unwrap();
        assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    };
    let mut mismatched = Vec::new();
    let mut files = 0;
    let mut pass = |name: &str, a: &Path, b: &Path, skip: &[&str]| {
        let (x, y) = (checksums(a, skip), checksums(b, skip));
        files += x.len();
        if x != y || x.is_empty() {
            mismatched.push(name.to_string());
        }
    };
    for i in 0..2 {
        let out = root.join(format!("sim{i}"));
        run(&["simulate", "--config", cfg, "--out", out.to_str().unwrap()]);
    }
    pass("simulate", &root.join("sim0"), &root.join("sim1"), &[]);
    let detections = root.join("sim0/detections.csv");
    let truth = root.join("sim0/ground_truth.csv");
    for variant in ["bootstrap", "mm-cphd", "mm-lambda-cphd"] {
        for i in 0..2 {
            let out = root.join(format!("{variant}{i}"));
            run(&[
                "track",
                "--config",
                cfg,
                "--variant",
                variant,
                "--detections",
                detections.to_str().unwrap(),
                "--out",
                out.to_str().unwrap(),
            ]);
        }
        pass(&format!("track {variant}"), &root.join(format!("{variant}0")), &root.join(format!("{variant}1")), &[]);
    }
    for i in 0..2 {
        let out = root.join(format!("eval{i}"));
        let tracks = root.join("bootstrap0/tracks.csv");
        run(&[
            "evaluate",
            "--truth",
            truth.to_str().unwrap(),
            "--tracks",
            tracks.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
    }
    pass("evaluate", &root.join("eval0"), &root.join("eval1"), &[]);
    for i in 0..2 {
        let out = root.join(format!("exp{i}"));
        run(&["experiment", "--config", small.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    }
    pass("experiment", &root.join("exp0"), &root.join("exp1"), &["timings.csv", "manifest.json"]);
    if manifest_without_timings(&root.join("exp0")) != manifest_without_timings(&root.join("exp1")) {
        mismatched.push("experiment manifest".into());
    }
    (
        mismatched.is_empty(),
        if mismatched.is_empty() {
            format!("simulate, track (3 variants), evaluate and experiment: {files} files identical across two runs")
        } else {
            format!("outputs differ for {}", mismatched.join(", "))
        },
    )
}

fn criterion_performance() -> Verdict {
    let config = preset_config("moderate-clutter", 9);
    let scenario = config.scenario().unwrap();
    let sim = simulate(&scenario).unwrap();
    let lambda_bar = scenario.lambda_schedule.time_average(scenario.frames);
    let filter = BootstrapFilter::new(config.filter_models().unwrap(), config.filter.clone()).unwrap();
    let started = Instant::now();
    let out = filter.run_sequence(&sim.frames).unwrap();
    let elapsed = started.elapsed().as_secs_f64();
    let targets = preset("moderate-clutter").unwrap().initial_targets;
    (
        elapsed < 10.0 && out.len() == 60,
        format!(
            "{} frames, {targets} targets, mean clutter {lambda_bar}: {elapsed:.2} s ({:.1} ms/frame)",
            out.len(),
            elapsed * 1e3 / out.len() as f64
        ),
    )
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("ESF oracle equivalence", criterion_esf),
        ("OSPA oracle equivalence", criterion_ospa),
        ("Kalman degenerate equivalence", criterion_kalman),
        ("cardinality normalization", criterion_cardinality),
        ("rate-estimation accuracy", criterion_rates),
        ("bootstrap advantage", criterion_bootstrap_advantage),
        ("oracle-composition identity", criterion_oracle_identity),
        ("determinism", criterion_determinism),
        ("performance sanity", criterion_performance),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let (ok, detail) = match catch_unwind(AssertUnwindSafe(check)) {
            Ok(v) => v,
            Err(e) => {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                (false, format!("panicked: {msg}"))
            }
        };
        failed += usize::from(!ok);
        println!("{} {}. {name}: {detail}", if ok { "PASS" } else { "FAIL" }, i + 1);
    }
    if failed > 0 {
        println!("{failed} of {} criteria failed", criteria.len());
        std::process::exit(1);
    }
}
