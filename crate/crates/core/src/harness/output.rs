use std::collections::BTreeMap;
use std::fs::File;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::envs::EnvName;
use crate::error::{Error, Result};

use super::aggregate::{aggregate_series, AggregatedCurve};
use super::config::Strategy;
use super::train::{EvalRecord, RunLog};

pub const EVALS_CSV: &str = "evals.csv";
pub const DIAG_CSV: &str = "diag.csv";
pub const TIMING_CSV: &str = "timing.csv";
pub const SUMMARY_TXT: &str = "summary.txt";

/// One line of `evals.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub strategy: Strategy,
    pub env: EnvName,
    pub seed: u64,
    pub step: usize,
    pub mean_return: f64,
    pub std_return: f64,
}

/// One line of `diag.csv`. Actor columns are empty on critic-only steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagRow {
    pub strategy: Strategy,
    pub env: EnvName,
    pub seed: u64,
    pub k: usize,
    pub step: usize,
    pub critic_loss1: f64,
    pub critic_loss2: f64,
    pub mean_abs_td: f64,
    pub actor_loss: Option<f64>,
    pub chosen_eta: Option<f64>,
    pub min_eta: Option<f64>,
    pub mean_eta: Option<f64>,
    pub max_eta: Option<f64>,
    pub chosen_mean_sq_deviation: Option<f64>,
}

/// One line of `timing.csv`: phase totals of a run in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub strategy: Strategy,
    pub env: EnvName,
    pub seed: u64,
    pub k: usize,
    pub status: String,
    pub steps: usize,
    pub wall_secs: f64,
    pub env_secs: f64,
    pub sampling_secs: f64,
    pub forward_backward_secs: f64,
    pub eta_scoring_secs: f64,
    pub eval_secs: f64,
    pub coverage: f64,
}

impl TimingRow {
    pub fn from_log(log: &RunLog) -> Self {
        let t = &log.timing;
        TimingRow {
            strategy: log.strategy,
            env: log.env,
            seed: log.seed,
            k: log.k,
            status: match &log.failure {
                None => "ok".into(),
                Some(f) => format!("failed:{}@{}", f.kind, f.step),
            },
            steps: log.steps_done,
            wall_secs: t.wall.as_secs_f64(),
            env_secs: t.env.as_secs_f64(),
            sampling_secs: t.sampling.as_secs_f64(),
            forward_backward_secs: t.forward_backward.as_secs_f64(),
            eta_scoring_secs: t.eta_scoring.as_secs_f64(),
            eval_secs: t.eval.as_secs_f64(),
            coverage: t.coverage(),
        }
    }

    pub fn failed(&self) -> bool {
        self.status != "ok"
    }
}

pub fn eval_rows(logs: &[RunLog]) -> Vec<EvalRow> {
    logs.iter()
        .flat_map(|log| {
            log.evals.iter().map(move |e| EvalRow {
                strategy: log.strategy,
                env: log.env,
                seed: e.seed,
                step: e.step,
                mean_return: e.mean_return,
                std_return: e.std_return,
            })
        })
        .collect()
}

pub fn diag_rows(logs: &[RunLog]) -> Vec<DiagRow> {
    let mut rows = Vec::new();
    for log in logs {
        for u in &log.updates {
            let actor = u.actor.as_ref();
            let etas = actor.map(|a| a.candidate_etas.as_slice()).unwrap_or(&[]);
            let (min_eta, mean_eta, max_eta) = if etas.is_empty() {
                (None, None, None)
            } else {
                (
                    Some(etas.iter().copied().fold(f64::INFINITY, f64::min)),
                    Some(etas.iter().sum::<f64>() / etas.len() as f64),
                    Some(etas.iter().copied().fold(f64::NEG_INFINITY, f64::max)),
                )
            };
            rows.push(DiagRow {
                strategy: log.strategy,
                env: log.env,
                seed: log.seed,
                k: log.k,
                step: u.step,
                critic_loss1: u.critic_loss1,
                critic_loss2: u.critic_loss2,
                mean_abs_td: u.mean_abs_td,
                actor_loss: actor.map(|a| a.loss),
                chosen_eta: actor.and_then(|a| a.chosen_eta),
                min_eta,
                mean_eta,
                max_eta,
                chosen_mean_sq_deviation: actor.and_then(|a| a.chosen_mean_sq_deviation),
            });
        }
    }
    rows
}

/// Writes rows with a header line, even when `rows` is empty.
pub fn write_csv<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(file);
    let csv_err = |e: csv::Error| Error::Format(format!("{}: {e}", path.display()));
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.serialize(row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    csv::Reader::from_reader(file)
        .deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

pub const EVALS_HEADER: [&str; 6] = [
    "strategy",
    "env",
    "seed",
    "step",
    "mean_return",
    "std_return",
];

pub const DIAG_HEADER: [&str; 14] = [
    "strategy",
    "env",
    "seed",
    "k",
    "step",
    "critic_loss1",
    "critic_loss2",
    "mean_abs_td",
    "actor_loss",
    "chosen_eta",
    "min_eta",
    "mean_eta",
    "max_eta",
    "chosen_mean_sq_deviation",
];

pub const TIMING_HEADER: [&str; 13] = [
    "strategy",
    "env",
    "seed",
    "k",
    "status",
    "steps",
    "wall_secs",
    "env_secs",
    "sampling_secs",
    "forward_backward_secs",
    "eta_scoring_secs",
    "eval_secs",
    "coverage",
];

pub fn read_evals_csv(path: &Path) -> Result<Vec<EvalRow>> {
    read_csv(path)
}

pub fn read_timing_csv(path: &Path) -> Result<Vec<TimingRow>> {
    read_csv(path)
}

/// Evaluation curve of one run, detached from the rest of its log.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSeries {
    pub strategy: Strategy,
    pub env: EnvName,
    pub seed: u64,
    pub k: usize,
    pub failed: bool,
    pub evals: Vec<EvalRecord>,
}

impl RunSeries {
    pub fn from_log(log: &RunLog) -> Self {
        RunSeries {
            strategy: log.strategy,
            env: log.env,
            seed: log.seed,
            k: log.k,
            failed: log.failed(),
            evals: log.evals.clone(),
        }
    }
}

/// Rebuilds per-run series from CSV rows. `timing` supplies K and the
/// failure status; runs absent from it get `default_k` and count as ok.
pub fn series_from_rows(
    evals: &[EvalRow],
    timing: &[TimingRow],
    default_k: usize,
) -> Vec<RunSeries> {
    let mut map: BTreeMap<(EnvName, Strategy, u64), RunSeries> = BTreeMap::new();
    for row in evals {
        let entry = map
            .entry((row.env, row.strategy, row.seed))
            .or_insert_with(|| {
                let t = timing
                    .iter()
                    .find(|t| t.env == row.env && t.strategy == row.strategy && t.seed == row.seed);
                RunSeries {
                    strategy: row.strategy,
                    env: row.env,
                    seed: row.seed,
                    k: t.map_or(default_k, |t| t.k),
                    failed: t.is_some_and(TimingRow::failed),
                    evals: Vec::new(),
                }
            });
        entry.evals.push(EvalRecord {
            step: row.step,
            mean_return: row.mean_return,
            std_return: row.std_return,
            seed: row.seed,
        });
    }
    map.into_values().collect()
}

/// One row of the summary table.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub env: EnvName,
    pub strategy: Strategy,
    pub k: usize,
    pub seeds: usize,
    pub failed: usize,
    pub final_mean: Option<f64>,
    pub final_half_std: Option<f64>,
    /// Highest final mean among the K values of this (env, strategy).
    pub best_k: bool,
    pub curve: Option<AggregatedCurve>,
}

/// Groups runs by (env, strategy, K), aggregates the successful ones and
/// marks the best K per (env, strategy). Rows come out sorted.
pub fn summarize(series: &[RunSeries], window: usize) -> Result<Vec<SummaryRow>> {
    let mut groups: BTreeMap<(EnvName, Strategy, usize), Vec<&RunSeries>> = BTreeMap::new();
    for s in series {
        groups.entry((s.env, s.strategy, s.k)).or_default().push(s);
    }
    let mut rows = Vec::with_capacity(groups.len());
    for ((env, strategy, k), runs) in groups {
        let ok: Vec<&[EvalRecord]> = runs
            .iter()
            .filter(|r| !r.failed)
            .map(|r| r.evals.as_slice())
            .collect();
        let curve = if ok.is_empty() {
            None
        } else {
            Some(aggregate_series(&ok, window)?)
        };
        rows.push(SummaryRow {
            env,
            strategy,
            k,
            seeds: runs.len(),
            failed: runs.len() - ok.len(),
            final_mean: curve.as_ref().and_then(AggregatedCurve::final_mean),
            final_half_std: curve.as_ref().and_then(AggregatedCurve::final_half_std),
            best_k: false,
            curve,
        });
    }
    let mut best: BTreeMap<(EnvName, Strategy), (usize, f64)> = BTreeMap::new();
    for (i, r) in rows.iter().enumerate() {
        if !r.strategy.selects_actor_batch() {
            continue;
        }
        if let Some(m) = r.final_mean {
            let slot = best.entry((r.env, r.strategy)).or_insert((i, m));
            if m > slot.1 {
                *slot = (i, m);
            }
        }
    }
    for (i, _) in best.into_values() {
        rows[i].best_k = true;
    }
    Ok(rows)
}

pub fn format_summary(rows: &[SummaryRow]) -> String {
    let fmt_opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.3}"));
    let mut out = format!(
        "{:<10} {:<13} {:>3} {:>6} {:>7} {:>14} {:>10} {:>7}\n",
        "env", "strategy", "K", "seeds", "failed", "final_mean", "half_std", "best_k"
    );
    for r in rows {
        out.push_str(&format!(
            "{:<10} {:<13} {:>3} {:>6} {:>7} {:>14} {:>10} {:>7}\n",
            r.env.as_str(),
            r.strategy.as_str(),
            r.k,
            r.seeds,
            r.failed,
            fmt_opt(r.final_mean),
            fmt_opt(r.final_half_std),
            if r.best_k { "*" } else { "" },
        ));
    }
    out.push_str(&format!("\ninitializer: {}\n", crate::nn::INITIALIZER));
    out
}

/// Files produced by [`write_outputs`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OutputFiles {
    pub evals: PathBuf,
    pub diag: PathBuf,
    pub timing: PathBuf,
    pub summary: PathBuf,
    pub plots: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

/// Writes the CSVs, the summary table and one plot per environment into
/// `dir`. Plot failures become warnings.
pub fn write_outputs(logs: &[RunLog], summary: &[SummaryRow], dir: &Path) -> Result<OutputFiles> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = write_tables(logs, dir)?;
    finish_report(summary, dir, files)
}

fn write_tables(logs: &[RunLog], dir: &Path) -> Result<OutputFiles> {
    let files = OutputFiles {
        evals: dir.join(EVALS_CSV),
        diag: dir.join(DIAG_CSV),
        timing: dir.join(TIMING_CSV),
        summary: dir.join(SUMMARY_TXT),
        ..Default::default()
    };
    write_csv(&files.evals, &EVALS_HEADER, &eval_rows(logs))?;
    write_csv(&files.diag, &DIAG_HEADER, &diag_rows(logs))?;
    let timing: Vec<TimingRow> = logs.iter().map(TimingRow::from_log).collect();
    write_csv(&files.timing, &TIMING_HEADER, &timing)?;
    Ok(files)
}

/// Writes `summary.txt` and plots for an already summarized experiment.
pub fn finish_report(
    summary: &[SummaryRow],
    dir: &Path,
    mut files: OutputFiles,
) -> Result<OutputFiles> {
    files.summary = dir.join(SUMMARY_TXT);
    std::fs::write(&files.summary, format_summary(summary))
        .map_err(|e| Error::io(&files.summary, e))?;
    let mut envs: Vec<EnvName> = summary.iter().map(|r| r.env).collect();
    envs.dedup();
    for env in envs {
        let path = dir.join(format!("returns_{env}.svg"));
        let rows: Vec<&SummaryRow> = summary.iter().filter(|r| r.env == env).collect();
        match super::plot::render(&path, env, &rows) {
            Ok(()) => files.plots.push(path),
            Err(msg) => files
                .warnings
                .push(format!("plot {} skipped: {msg}", path.display())),
        }
    }
    Ok(files)
}
