use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dper_core::dper::KlMode;
use dper_core::envs::EnvName;
use dper_core::harness::{
    finish_report, parse_k_values, parse_seeds, read_evals_csv, read_timing_csv, run_ablation_k,
    run_experiment, series_from_rows, summarize, write_ablation, write_outputs, ConfigOverrides,
    ExperimentConfig, OutputFiles, RunSeries, SeedSpec, Strategy, EVALS_CSV, TIMING_CSV,
};
use dper_core::td3::PrioritySource;
use dper_core::{Error, Result};

#[derive(Parser)]
#[command(
    name = "dper",
    version,
    about = "TD3 with uniform, prioritized and KL-selected replay"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one strategy over a set of seeds.
    Train(ExperimentArgs),
    /// Repeat a DPER experiment for several candidate counts.
    AblateK {
        /// Comma-separated candidate counts.
        #[arg(long, value_parser = parse_ks)]
        k_values: Option<List<usize>>,
        #[command(flatten)]
        experiment: ExperimentArgs,
    },
    /// Re-aggregate the CSV files of a finished experiment.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        /// Smoothing window in evaluation records.
        #[arg(long, default_value_t = ExperimentConfig::default().window)]
        window: usize,
    },
}

#[derive(Args, Default)]
struct ExperimentArgs {
    /// TOML file with default values; flags given here win.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = parse_env)]
    env: Option<EnvName>,
    #[arg(long, value_parser = parse_strategy)]
    strategy: Option<Strategy>,
    #[arg(long)]
    k: Option<usize>,
    /// A seed count (`10`) or an explicit list (`0,4,7`).
    #[arg(long, value_parser = parse_seed_list)]
    seeds: Option<List<u64>>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    warmup: Option<usize>,
    #[arg(long)]
    capacity: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, value_parser = parse_kl_mode)]
    kl_mode: Option<KlMode>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    policy_delay: Option<usize>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    sigma_smooth: Option<f64>,
    #[arg(long)]
    smooth_clip: Option<f64>,
    #[arg(long)]
    sigma_explore: Option<f64>,
    #[arg(long, value_parser = parse_priority_source)]
    priority_source: Option<PrioritySource>,
    #[arg(long)]
    eval_interval: Option<usize>,
    #[arg(long)]
    eval_episodes: Option<usize>,
    #[arg(long)]
    window: Option<usize>,
    /// Maximum number of seeds trained at the same time.
    #[arg(long)]
    workers: Option<usize>,
    /// Run one job at a time so wall-time measurements do not interfere.
    #[arg(long)]
    timing_exclusive: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_env(s: &str) -> Result<EnvName, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_strategy(s: &str) -> Result<Strategy, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_kl_mode(s: &str) -> Result<KlMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_priority_source(s: &str) -> Result<PrioritySource, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Comma-separated flag value parsed as one argument.
#[derive(Clone, Debug)]
struct List<T>(Vec<T>);

fn parse_seed_list(s: &str) -> Result<List<u64>, String> {
    parse_seeds(s).map(List).map_err(|e| e.to_string())
}

fn parse_ks(s: &str) -> Result<List<usize>, String> {
    parse_k_values(s).map(List).map_err(|e| e.to_string())
}

impl ExperimentArgs {
    fn overrides(&self) -> ConfigOverrides {
        ConfigOverrides {
            env: self.env,
            strategy: self.strategy,
            k: self.k,
            seeds: self.seeds.clone().map(|l| SeedSpec::List(l.0)),
            steps: self.steps,
            warmup: self.warmup,
            eval_interval: self.eval_interval,
            eval_episodes: self.eval_episodes,
            capacity: self.capacity,
            alpha: self.alpha,
            kl_mode: self.kl_mode,
            window: self.window,
            workers: self.workers,
            timing_exclusive: self.timing_exclusive.then_some(true),
            out: self.out.clone(),
            batch: self.batch,
            hidden: self.hidden,
            policy_delay: self.policy_delay,
            tau: self.tau,
            gamma: self.gamma,
            sigma_smooth: self.sigma_smooth,
            smooth_clip: self.smooth_clip,
            sigma_explore: self.sigma_explore,
            priority_source: self.priority_source,
            lr: self.lr,
            ..Default::default()
        }
    }

    /// Defaults, then the config file, then flags. Also returns the K
    /// values named in the file, if any.
    fn resolve(&self) -> Result<(ExperimentConfig, Option<Vec<usize>>)> {
        let mut cfg = ExperimentConfig::default();
        let mut file_ks = None;
        if let Some(path) = &self.config {
            let file = ConfigOverrides::from_file(path)?;
            file_ks = file.k_values.clone();
            cfg.apply(&file)?;
        }
        cfg.apply(&self.overrides())?;
        cfg.validate()?;
        Ok((cfg, file_ks))
    }
}

fn print_outputs(files: &OutputFiles) {
    for w in &files.warnings {
        eprintln!("warning: {w}");
    }
    if let Ok(text) = std::fs::read_to_string(&files.summary) {
        print!("{text}");
    }
}

fn train(args: &ExperimentArgs) -> Result<()> {
    let (cfg, _) = args.resolve()?;
    let logs = run_experiment(&cfg)?;
    for log in &logs {
        if let Some(f) = &log.failure {
            eprintln!(
                "warning: seed {} failed at step {}: {}",
                log.seed, f.step, f.message
            );
        }
    }
    let series: Vec<RunSeries> = logs.iter().map(RunSeries::from_log).collect();
    let summary = summarize(&series, cfg.window)?;
    let files = write_outputs(&logs, &summary, &cfg.out_dir)?;
    print_outputs(&files);
    println!("outputs written to {}", cfg.out_dir.display());
    Ok(())
}

fn ablate(k_values: Option<&[usize]>, args: &ExperimentArgs) -> Result<()> {
    let (cfg, file_ks) = args.resolve()?;
    let ks = k_values
        .map(<[usize]>::to_vec)
        .or(file_ks)
        .unwrap_or_else(|| vec![2, 3, 4, 5]);
    let report = run_ablation_k(&cfg, &ks)?;
    let files = write_ablation(&report, cfg.window, &cfg.out_dir)?;
    for (_, f) in &files.per_k {
        for w in &f.warnings {
            eprintln!("warning: {w}");
        }
    }
    print_outputs(&files.overview);
    println!("outputs written to {}", cfg.out_dir.display());
    Ok(())
}

/// Directories under `dir` (itself included) holding an `evals.csv`.
fn experiment_dirs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut dirs = Vec::new();
    if dir.join(EVALS_CSV).is_file() {
        dirs.push(dir.to_path_buf());
    }
    let entries = std::fs::read_dir(dir).map_err(|e| io_error(dir, e))?;
    let mut subs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(EVALS_CSV).is_file())
        .collect();
    subs.sort();
    dirs.extend(subs);
    if dirs.is_empty() {
        return Err(Error::Config(format!(
            "no {EVALS_CSV} in {} or its subdirectories",
            dir.display()
        )));
    }
    Ok(dirs)
}

fn io_error(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn report(input: &Path, window: usize) -> Result<()> {
    if window == 0 {
        return Err(Error::Config("window must be at least 1".into()));
    }
    let mut series = Vec::new();
    for dir in experiment_dirs(input)? {
        let evals = read_evals_csv(&dir.join(EVALS_CSV))?;
        let timing_path = dir.join(TIMING_CSV);
        let timing = if timing_path.is_file() {
            read_timing_csv(&timing_path)?
        } else {
            Vec::new()
        };
        series.extend(series_from_rows(&evals, &timing, 0));
    }
    let summary = summarize(&series, window)?;
    let files = finish_report(&summary, input, OutputFiles::default())?;
    print_outputs(&files);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(args) => train(&args),
        Command::AblateK {
            k_values,
            experiment,
        } => ablate(k_values.as_ref().map(|l| l.0.as_slice()), &experiment),
        Command::Report { input, window } => report(&input, window),
    }
}

fn error_line(kind: &str, message: &str) -> String {
    serde_json::json!({ "status": "error", "kind": kind, "message": message }).to_string()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            eprintln!("{}", error_line("usage", e.to_string().trim()));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_line(e.kind(), &e.to_string()));
            ExitCode::FAILURE
        }
    }
}
