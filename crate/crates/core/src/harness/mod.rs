//! Experiment driver: training loop, evaluation, aggregation, K ablation
//! and report files.

mod ablation;
mod aggregate;
mod config;
mod eval;
mod output;
mod plot;
mod train;

pub use ablation::{
    format_fit, run_ablation_k, write_ablation, AblationFiles, AblationReport, KTiming,
};
pub use aggregate::{
    aggregate, aggregate_series, linear_fit, sample_mean_std, trailing_mean, AggregatedCurve,
    LinearFit,
};
pub use config::{
    parse_k_values, parse_seeds, ConfigOverrides, ExperimentConfig, SeedSpec, Strategy, DEFAULT_K,
};
pub use eval::{episode_returns, episode_seeds, evaluate};
pub use output::{
    diag_rows, eval_rows, finish_report, format_summary, read_csv, read_evals_csv, read_timing_csv,
    series_from_rows, summarize, write_csv, write_outputs, DiagRow, EvalRow, OutputFiles,
    RunSeries, SummaryRow, TimingRow, DIAG_CSV, DIAG_HEADER, EVALS_CSV, EVALS_HEADER, SUMMARY_TXT,
    TIMING_CSV, TIMING_HEADER,
};
pub use train::{
    run_experiment, run_jobs, run_training, ActorDiag, EvalRecord, PhaseTimes, RunFailure, RunLog,
    Trainer, UpdateDiag,
};
