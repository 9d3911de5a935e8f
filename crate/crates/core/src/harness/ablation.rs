use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};

use super::aggregate::{linear_fit, LinearFit};
use super::config::ExperimentConfig;
use super::output::{
    eval_rows, finish_report, summarize, write_csv, write_outputs, OutputFiles, RunSeries,
};
use super::train::{run_jobs, RunLog};

/// Wall time of the runs at one K.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KTiming {
    pub k: usize,
    pub runs: usize,
    pub mean_wall_secs: f64,
    pub min_wall_secs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationReport {
    /// Logs per K in the order the K values were given.
    pub runs: Vec<(usize, Vec<RunLog>)>,
    pub timing: Vec<KTiming>,
    /// Mean wall time against K; `None` with fewer than two distinct K.
    pub fit: Option<LinearFit>,
}

/// Runs the full multi-seed experiment once per K.
pub fn run_ablation_k(config: &ExperimentConfig, k_values: &[usize]) -> Result<AblationReport> {
    if !config.strategy.selects_actor_batch() {
        return Err(Error::Config(format!(
            "K ablation needs dper or dper-uniform, not {}",
            config.strategy
        )));
    }
    if k_values.is_empty() {
        return Err(Error::Config("no K values given".into()));
    }
    let mut jobs = Vec::new();
    for &k in k_values {
        let cfg = ExperimentConfig {
            k: Some(k),
            ..config.clone()
        };
        cfg.validate()?;
        jobs.extend(cfg.seeds.iter().map(|&s| (cfg.clone(), s)));
    }
    let workers = if config.timing_exclusive {
        1
    } else {
        config.workers
    };
    let mut logs = run_jobs(&jobs, workers)?.into_iter();
    let runs: Vec<(usize, Vec<RunLog>)> = k_values
        .iter()
        .map(|&k| (k, logs.by_ref().take(config.seeds.len()).collect()))
        .collect();

    let timing: Vec<KTiming> = runs
        .iter()
        .map(|(k, logs)| {
            let walls: Vec<f64> = logs.iter().map(|l| l.timing.wall.as_secs_f64()).collect();
            KTiming {
                k: *k,
                runs: walls.len(),
                mean_wall_secs: walls.iter().sum::<f64>() / walls.len() as f64,
                min_wall_secs: walls.iter().copied().fold(f64::INFINITY, f64::min),
            }
        })
        .collect();
    let xs: Vec<f64> = timing.iter().map(|t| t.k as f64).collect();
    let ys: Vec<f64> = timing.iter().map(|t| t.mean_wall_secs).collect();
    let fit = linear_fit(&xs, &ys).ok();
    Ok(AblationReport { runs, timing, fit })
}

#[derive(Serialize)]
struct JointEvalRow {
    k: usize,
    strategy: super::config::Strategy,
    env: crate::envs::EnvName,
    seed: u64,
    step: usize,
    mean_return: f64,
    std_return: f64,
}

/// Per-K output directories plus joint files written by [`write_ablation`].
#[derive(Debug, Clone, PartialEq)]
pub struct AblationFiles {
    pub per_k: Vec<(usize, OutputFiles)>,
    pub joint_evals: PathBuf,
    pub timing: PathBuf,
    pub overview: OutputFiles,
}

/// Writes `k<K>/` with the usual outputs for each K, a joint
/// `ablation_evals.csv`, `ablation_timing.csv` with the wall-time fit, and
/// a summary over all K.
pub fn write_ablation(report: &AblationReport, window: usize, dir: &Path) -> Result<AblationFiles> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut per_k = Vec::new();
    let mut all_series = Vec::new();
    let mut joint = Vec::new();
    for (k, logs) in &report.runs {
        let series: Vec<RunSeries> = logs.iter().map(RunSeries::from_log).collect();
        let summary = summarize(&series, window)?;
        let sub = dir.join(format!("k{k}"));
        per_k.push((*k, write_outputs(logs, &summary, &sub)?));
        all_series.extend(series);
        joint.extend(eval_rows(logs).into_iter().map(|row| JointEvalRow {
            k: *k,
            strategy: row.strategy,
            env: row.env,
            seed: row.seed,
            step: row.step,
            mean_return: row.mean_return,
            std_return: row.std_return,
        }));
    }
    let joint_evals = dir.join("ablation_evals.csv");
    let mut header = vec!["k"];
    header.extend(super::output::EVALS_HEADER);
    write_csv(&joint_evals, &header, &joint)?;

    let timing = dir.join("ablation_timing.csv");
    write_csv(
        &timing,
        &["k", "runs", "mean_wall_secs", "min_wall_secs"],
        &report.timing,
    )?;

    let summary = summarize(&all_series, window)?;
    let mut overview = finish_report(&summary, dir, OutputFiles::default())?;
    let mut text =
        std::fs::read_to_string(&overview.summary).map_err(|e| Error::io(&overview.summary, e))?;
    text.push_str(&format_fit(report));
    std::fs::write(&overview.summary, text).map_err(|e| Error::io(&overview.summary, e))?;
    overview.timing = timing.clone();
    Ok(AblationFiles {
        per_k,
        joint_evals,
        timing,
        overview,
    })
}

pub fn format_fit(report: &AblationReport) -> String {
    let mut out = String::from("\nwall time per K\n");
    for t in &report.timing {
        out.push_str(&format!(
            "  K={:<3} runs={:<3} mean={:.3}s min={:.3}s\n",
            t.k, t.runs, t.mean_wall_secs, t.min_wall_secs
        ));
    }
    match report.fit {
        Some(f) => out.push_str(&format!(
            "least-squares fit: wall = {:.4} + {:.4}*K seconds (R^2 = {:.4})\n",
            f.intercept, f.slope, f.r_squared
        )),
        None => out.push_str("least-squares fit: needs two or more distinct K\n"),
    }
    out
}
