//! Subcommand implementations.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use rfs_track_core::bootstrap::{run_estimator, run_tracker, BootstrapFilter, FrameEstimate, SequenceError};
use rfs_track_core::cphd::CphdFilter;
use rfs_track_core::lambda_cphd::LambdaCphdFilter;
use rfs_track_core::metrics::{ospa, ospa_t, summarize, LabeledTrackSet, OspaResult};
use rfs_track_core::models::{ModelBundle, Point};
use rfs_track_core::simulator::{simulate as run_scenario, DetectionFrame, ScenarioConfig, Simulation};
use serde::Serialize;

use crate::config::{MetricParams, Overrides, RunConfig, Variant};
use crate::formats;
use crate::{CliError, Common};

/// Environment variable bounding the experiment worker pool.
pub const THREADS_ENV: &str = "RFS_TRACK_THREADS";

pub fn load_config(common: &Common) -> Result<RunConfig, CliError> {
    let mut config = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    config.apply(&Overrides {
        seed: common.seed,
        runs: common.runs,
        variant: common.variant,
        c: common.c,
        p: common.p,
        ell: common.ell,
    });
    config.validate()?;
    Ok(config)
}

fn create_dir(out: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(out).map_err(|e| CliError::Io(format!("{}: {e}", out.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn simulate_checked(scenario: &ScenarioConfig) -> Result<Simulation, CliError> {
    run_scenario(scenario).map_err(|e| CliError::Config(e.to_string()))
}

#[derive(Serialize)]
struct TrueRateRow {
    frame: usize,
    lambda: f64,
    p_d: f64,
}

fn write_true_rates(path: &Path, sim: &Simulation) -> Result<(), CliError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    for (i, (l, p)) in sim.lambda_true.iter().zip(&sim.p_d_true).enumerate() {
        w.serialize(TrueRateRow { frame: i + 1, lambda: *l, p_d: *p })
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    }
    w.flush().map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Writes `ground_truth.csv`, `detections.csv` and `true_rates.csv`.
pub fn simulate(config: &RunConfig, out: &Path) -> Result<(), CliError> {
    let scenario = config.scenario()?;
    let sim = simulate_checked(&scenario)?;
    create_dir(out)?;
    formats::write_truth(&out.join("ground_truth.csv"), &sim.truth, scenario.frames)?;
    formats::write_detections(&out.join("detections.csv"), &sim.frames)?;
    write_true_rates(&out.join("true_rates.csv"), &sim)
}

fn filter_error(e: impl std::fmt::Display) -> CliError {
    CliError::Filter(e.to_string())
}

/// Runs one variant over a detection stream.
pub fn run_variant(
    config: &RunConfig,
    variant: Variant,
    models: &ModelBundle,
    frames: &[DetectionFrame],
) -> Result<Result<Vec<FrameEstimate>, SequenceError>, CliError> {
    Ok(match variant {
        Variant::Bootstrap => {
            let filter = BootstrapFilter::new(models.clone(), config.filter.clone()).map_err(filter_error)?;
            filter.run_sequence(frames)
        }
        Variant::MmCphd => {
            let rates = config.fixed_rates()?;
            let filter = CphdFilter::new(models.clone(), config.filter.tracker.clone()).map_err(filter_error)?;
            run_tracker(&filter, frames, |_| (rates.lambda, rates.p_d))
        }
        Variant::MmLambdaCphd => {
            let filter = LambdaCphdFilter::new(models.clone(), config.filter.estimator.clone()).map_err(filter_error)?;
            run_estimator(&filter, frames)
        }
    })
}

/// Writes `tracks.csv` and `rates.csv`. On a filter failure the frames
/// completed before it are still written.
pub fn track(config: &RunConfig, detections: &Path, out: &Path) -> Result<(), CliError> {
    if config.variant == Variant::MmCphd {
        config.fixed_rates()?;
    }
    let frames = formats::read_detections(detections)?;
    let models = config.filter_models()?;
    let truth_rates = match &config.scenario {
        Some(_) => {
            let s = config.scenario()?;
            Some((s.lambda_schedule.values(s.frames), s.p_d_schedule.values(s.frames)))
        }
        None => None,
    };
    let result = run_variant(config, config.variant, &models, &frames)?;
    let (estimates, failure) = match result {
        Ok(e) => (e, None),
        Err(SequenceError { partial, source }) => (partial, Some(source)),
    };
    create_dir(out)?;
    formats::write_tracks(&out.join("tracks.csv"), &estimates)?;
    formats::write_rates(
        &out.join("rates.csv"),
        &estimates,
        truth_rates.as_ref().map(|(l, p)| (l.as_slice(), p.as_slice())),
    )?;
    match failure {
        Some(e) => Err(filter_error(e)),
        None => Ok(()),
    }
}

/// Per-frame OSPA on positions and per-frame OSPA-T, each with its mean.
pub struct Evaluation {
    pub ospa: Vec<OspaResult>,
    pub ospa_mean: OspaResult,
    pub ospa_t: Vec<OspaResult>,
    pub ospa_t_mean: OspaResult,
}

pub fn evaluate_sets(truth: &LabeledTrackSet, est: &LabeledTrackSet, m: &MetricParams) -> Result<Evaluation, CliError> {
    let positions = |f: &[(u64, Point)]| f.iter().map(|e| e.1).collect::<Vec<_>>();
    let per_frame = truth
        .frames()
        .iter()
        .zip(est.frames())
        .map(|(x, y)| ospa(&positions(x), &positions(y), m.c, m.p))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::Config(e.to_string()))?;
    let (labeled, labeled_mean) = ospa_t(truth, est, m.c, m.p, m.ell()).map_err(|e| CliError::Config(e.to_string()))?;
    let mean = if per_frame.is_empty() {
        OspaResult::default()
    } else {
        summarize(&per_frame).map_err(|e| CliError::Config(e.to_string()))?
    };
    Ok(Evaluation {
        ospa: per_frame,
        ospa_mean: mean,
        ospa_t: labeled,
        ospa_t_mean: labeled_mean,
    })
}

fn write_evaluation(out: &Path, e: &Evaluation) -> Result<(), CliError> {
    formats::write_metrics(&out.join("ospa.csv"), &e.ospa, &e.ospa_mean)?;
    formats::write_metrics(&out.join("ospa_t.csv"), &e.ospa_t, &e.ospa_t_mean)
}

/// Writes `ospa.csv` and `ospa_t.csv`: per-frame rows and a final mean row.
pub fn evaluate(metrics: &MetricParams, truth: &Path, tracks: &Path, out: &Path) -> Result<(), CliError> {
    let (gt, gt_frames) = formats::read_truth(truth)?;
    let (est, est_frames) = formats::read_tracks(tracks)?;
    if gt_frames != est_frames {
        return Err(CliError::Config(format!(
            "frame range mismatch: ground truth covers frames 1..={gt_frames}, tracks cover frames 1..={est_frames}"
        )));
    }
    let gt_set = formats::truth_track_set(&gt, gt_frames)?;
    let est_set = LabeledTrackSet::new(est).map_err(|e| CliError::Config(e.to_string()))?;
    let evaluation = evaluate_sets(&gt_set, &est_set, metrics)?;
    create_dir(out)?;
    write_evaluation(out, &evaluation)
}

#[derive(Debug, Serialize)]
struct RunEntry {
    variant: Variant,
    seed: u64,
    ok: bool,
    error: Option<String>,
    files: Vec<PathBuf>,
    ms_per_frame: Option<f64>,
}

#[derive(Debug, Serialize)]
struct Manifest {
    config_hash: String,
    seeds: Vec<u64>,
    runs: Vec<RunEntry>,
}

struct RunOutcome {
    entry: RunEntry,
    scores: Option<(OspaResult, OspaResult)>,
}

fn run_one(
    config: &RunConfig,
    variant: Variant,
    sim: &Simulation,
    seed: u64,
    models: &ModelBundle,
    out: &Path,
) -> RunOutcome {
    let rel = PathBuf::from("runs").join(variant.name()).join(format!("seed_{seed}"));
    let dir = out.join(&rel);
    let mut entry = RunEntry {
        variant,
        seed,
        ok: false,
        error: None,
        files: Vec::new(),
        ms_per_frame: None,
    };
    let started = Instant::now();
    let result = run_variant(config, variant, models, &sim.frames);
    let elapsed = started.elapsed();
    let estimates = match result {
        Ok(Ok(e)) => e,
        Ok(Err(e)) => {
            entry.error = Some(e.to_string());
            return RunOutcome { entry, scores: None };
        }
        Err(e) => {
            entry.error = Some(e.to_string());
            return RunOutcome { entry, scores: None };
        }
    };
    let written = (|| -> Result<(OspaResult, OspaResult), CliError> {
        create_dir(&dir)?;
        formats::write_tracks(&dir.join("tracks.csv"), &estimates)?;
        formats::write_rates(&dir.join("rates.csv"), &estimates, Some((&sim.lambda_true, &sim.p_d_true)))?;
        let gt = formats::truth_track_set(&sim.truth, sim.frames.len())?;
        let est = formats::estimate_track_set(&estimates)?;
        let evaluation = evaluate_sets(&gt, &est, &config.metrics)?;
        write_evaluation(&dir, &evaluation)?;
        Ok((evaluation.ospa_mean, evaluation.ospa_t_mean))
    })();
    match written {
        Ok(scores) => {
            entry.ok = true;
            entry.files = ["tracks.csv", "rates.csv", "ospa.csv", "ospa_t.csv"]
                .iter()
                .map(|f| rel.join(f))
                .collect();
            entry.ms_per_frame = Some(elapsed.as_secs_f64() * 1e3 / sim.frames.len().max(1) as f64);
            RunOutcome {
                entry,
                scores: Some(scores),
            }
        }
        Err(e) => {
            entry.error = Some(e.to_string());
            RunOutcome { entry, scores: None }
        }
    }
}

fn worker_pool() -> Result<rayon::ThreadPool, CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .parse()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| CliError::Config(format!("{THREADS_ENV} must be a positive integer, got {v:?}")))?;
        builder = builder.num_threads(n);
    }
    builder.build().map_err(|e| CliError::Io(e.to_string()))
}

/// Runs `config.runs` seeded replicates of each configured variant.
///
/// Writes `config.json` (effective configuration), `manifest.json`,
/// `summary.csv` (per variant, means over successful runs), per-run traces
/// under `runs/`, and `timings.csv` with wall-clock milliseconds per frame
/// for each run plus a mean row per variant.
/// Everything except the timings in `timings.csv` and `manifest.json` is a
/// deterministic function of the configuration.
pub fn experiment(config: &RunConfig, out: &Path) -> Result<(), CliError> {
    let base = config.scenario()?;
    if config.variants.contains(&Variant::MmCphd) {
        config.fixed_rates()?;
    }
    if config.variants.is_empty() {
        return Err(CliError::Config("experiment needs at least one variant".into()));
    }
    let models = config.filter_models()?;
    let seeds: Vec<u64> = (0..config.runs as u64).map(|i| base.seed.wrapping_add(i)).collect();
    let pool = worker_pool()?;
    create_dir(out)?;

    let sims: Vec<Simulation> = pool.install(|| {
        seeds
            .par_iter()
            .map(|&seed| simulate_checked(&ScenarioConfig { seed, ..base.clone() }))
            .collect::<Result<Vec<_>, _>>()
    })?;
    for (seed, sim) in seeds.iter().zip(&sims) {
        let dir = out.join("runs").join("scenario").join(format!("seed_{seed}"));
        create_dir(&dir)?;
        formats::write_truth(&dir.join("ground_truth.csv"), &sim.truth, base.frames)?;
        formats::write_detections(&dir.join("detections.csv"), &sim.frames)?;
    }

    let jobs: Vec<(Variant, usize)> = config
        .variants
        .iter()
        .flat_map(|&v| (0..seeds.len()).map(move |i| (v, i)))
        .collect();
    let outcomes: Vec<RunOutcome> = pool.install(|| {
        jobs.par_iter()
            .map(|&(v, i)| run_one(config, v, &sims[i], seeds[i], &models, out))
            .collect()
    });

    let mut summary = String::from("variant,runs,location,cardinality,ospa,ospa_t\n");
    let mut timings = String::from("variant,seed,ms_per_frame\n");
    for &v in &config.variants {
        let mine: Vec<&RunOutcome> = outcomes.iter().filter(|o| o.entry.variant == v).collect();
        let scores: Vec<(OspaResult, OspaResult)> = mine.iter().filter_map(|o| o.scores).collect();
        if scores.is_empty() {
            summary.push_str(&format!("{},0,,,,\n", v.name()));
        } else {
            let n = scores.len() as f64;
            let mean = |f: &dyn Fn(&(OspaResult, OspaResult)) -> f64| scores.iter().map(f).sum::<f64>() / n;
            summary.push_str(&format!(
                "{},{},{},{},{},{}\n",
                v.name(),
                scores.len(),
                mean(&|s| s.0.location),
                mean(&|s| s.0.cardinality),
                mean(&|s| s.0.total),
                mean(&|s| s.1.total),
            ));
        }
        let ms: Vec<(u64, f64)> = mine.iter().filter_map(|o| Some((o.entry.seed, o.entry.ms_per_frame?))).collect();
        for (seed, t) in &ms {
            timings.push_str(&format!("{},{seed},{t:.3}\n", v.name()));
        }
        if !ms.is_empty() {
            let mean = ms.iter().map(|m| m.1).sum::<f64>() / ms.len() as f64;
            timings.push_str(&format!("{},mean,{mean:.3}\n", v.name()));
        }
    }

    let failures = outcomes.iter().filter(|o| !o.entry.ok).count();
    let manifest = Manifest {
        config_hash: config.hash(),
        seeds: seeds.clone(),
        runs: outcomes.into_iter().map(|o| o.entry).collect(),
    };
    let effective = serde_json::to_string_pretty(config).expect("config serializes");
    write_text(&out.join("config.json"), &(effective + "\n"))?;
    write_text(
        &out.join("manifest.json"),
        &(serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n"),
    )?;
    write_text(&out.join("summary.csv"), &summary)?;
    write_text(&out.join("timings.csv"), &timings)?;

    if failures == manifest.runs.len() {
        return Err(CliError::Filter("every run failed; see manifest.json".into()));
    }
    if failures > 0 {
        log::warn!("{failures} of {} runs failed; see manifest.json", manifest.runs.len());
    }
    Ok(())
}
