//! Commands behind the `rpt` binary.
//!
//! Every command returns `Result<(), CliError>`; the error carries the exit
//! code (2 for usage, configuration and checkpoint problems, 3 for runtime
//! failures) and a message for standard error.

mod config;
mod csv;

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

pub use config::{OutputSection, RunConfigFile};
pub use csv::{format_g, g9, parse_metrics, render_metrics, METRICS_HEADER};

use crate::agent::AnyLearner;
use crate::envs::Environment;
use crate::error::Error;
use crate::tensorfile::{load_classifier, load_learner, save_classifier, save_learner};
use crate::trainer::{evaluate_policy, normalized_ratio, run_training, EpisodeRecord, Strategy, Streams};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

pub const METRICS_FILE: &str = "metrics.csv";
pub const LEARNER_FILE: &str = "learner.tensors";
pub const CLASSIFIER_FILE: &str = "classifier.tensors";
pub const RESOLVED_CONFIG_FILE: &str = "config.resolved.toml";
pub const AGGREGATE_FILE: &str = "aggregate.csv";
pub const RATIO_FILE: &str = "ratio.csv";
pub const FAILURES_FILE: &str = "failures.txt";

/// Name of the environment variable that sets log verbosity.
pub const LOG_ENV: &str = "RPT_LOG";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_RUNTIME,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

/// Library errors raised while reading inputs are the caller's fault.
fn input_error(e: Error) -> CliError {
    match e {
        Error::Config { .. } | Error::Usage(_) | Error::Checkpoint { .. } | Error::Io { .. } => {
            CliError::usage(e.to_string())
        }
        other => CliError::runtime(other.to_string()),
    }
}

fn runtime_error(e: Error) -> CliError {
    match e {
        Error::Config { .. } | Error::Usage(_) => CliError::usage(e.to_string()),
        other => CliError::runtime(other.to_string()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum LogLevel {
    Quiet,
    Info,
    Debug,
}

impl LogLevel {
    /// Reads `RPT_LOG`: `quiet`, `info` or `debug`; anything else is quiet.
    pub fn from_env() -> Self {
        match std::env::var(LOG_ENV).as_deref().map(str::trim) {
            Ok("info") => LogLevel::Info,
            Ok("debug") => LogLevel::Debug,
            _ => LogLevel::Quiet,
        }
    }

    fn progress_every(self) -> usize {
        match self {
            LogLevel::Quiet => 0,
            LogLevel::Info => 100,
            LogLevel::Debug => 1,
        }
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| CliError::runtime(format!("cannot write {}: {e}", path.display())))
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::runtime(format!("cannot create {}: {e}", dir.display())))
}

fn prepare(cfg: &mut RunConfigFile, seed: Option<u64>, log: LogLevel) {
    if let Some(seed) = seed {
        cfg.training.seed = seed;
    }
    if cfg.training.progress_every == 0 {
        cfg.training.progress_every = log.progress_every();
    }
}

/// Trains once and writes the metrics table, both checkpoints and the
/// resolved configuration into `out`.
pub fn cmd_train(config: &Path, seed: Option<u64>, out: &Path) -> Result<(), CliError> {
    let mut cfg = RunConfigFile::load(config).map_err(input_error)?;
    prepare(&mut cfg, seed, LogLevel::from_env());
    train_into(&cfg, out).map(|_| ())
}

fn train_into(cfg: &RunConfigFile, out: &Path) -> Result<Vec<EpisodeRecord>, CliError> {
    create_dir(out)?;
    let run = run_training(&cfg.training_config()).map_err(runtime_error)?;
    write_file(&out.join(METRICS_FILE), &render_metrics(&run.metrics.records))?;
    let save = |r: crate::Result<()>, name: &str| r.map_err(|e| CliError::runtime(format!("cannot write {name}: {e}")));
    save(save_learner(&out.join(LEARNER_FILE), &run.learner), LEARNER_FILE)?;
    save(
        save_classifier(&out.join(CLASSIFIER_FILE), &run.classifier, &run.classifier_optimizer),
        CLASSIFIER_FILE,
    )?;
    let mut echo = cfg.clone();
    echo.training.progress_every = 0;
    write_file(&out.join(RESOLVED_CONFIG_FILE), &echo.to_toml().map_err(runtime_error)?)?;
    Ok(run.metrics.records)
}

/// Greedy evaluation of a training output directory. Returns the CSV line
/// `mean_return,violations`.
pub fn cmd_eval(dir: &Path, episodes: usize, seed: u64) -> Result<String, CliError> {
    if episodes == 0 {
        return Err(CliError::usage("episodes must be positive"));
    }
    let cfg = RunConfigFile::load(&dir.join(RESOLVED_CONFIG_FILE)).map_err(input_error)?;
    let training = cfg.training_config();
    let mut env = training.environment.build().map_err(input_error)?;
    let mut streams = Streams::new(training.training.seed);
    let mut learner = AnyLearner::build(&training.agent, &env, &mut streams.init).map_err(input_error)?;
    load_learner(&dir.join(LEARNER_FILE), &mut learner).map_err(input_error)?;
    let (clf, _) = load_classifier(&dir.join(CLASSIFIER_FILE)).map_err(input_error)?;
    if clf.input_dim() != env.feature_dim() {
        return Err(CliError::usage(format!(
            "{CLASSIFIER_FILE}: input size {} does not match the environment's {}",
            clf.input_dim(),
            env.feature_dim()
        )));
    }
    let ev = evaluate_policy(&mut env, &learner, episodes, seed).map_err(runtime_error)?;
    Ok(format!("{},{}", g9(ev.mean_return), ev.violations))
}

pub fn parse_list<T, F>(raw: &str, what: &str, parse: F) -> Result<Vec<T>, CliError>
where
    F: Fn(&str) -> Option<T>,
{
    let items: Vec<T> = raw
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(s).ok_or_else(|| CliError::usage(format!("unknown {what} `{s}`"))))
        .collect::<Result<_, _>>()?;
    if items.is_empty() {
        return Err(CliError::usage(format!("at least one {what} is required")));
    }
    Ok(items)
}

pub fn cell_name(strategy: Strategy, seed: u64) -> String {
    format!("{}-seed{seed}", strategy.as_str())
}

/// One row of the aggregate table.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub strategy: String,
    pub violations: u64,
    pub runs: usize,
    pub mean_return: f64,
    pub std_return: f64,
}

/// Aligns runs on cumulative violations and averages their returns.
///
/// The levels are the union of violation counts seen in any run. A run's
/// value at level `v` is the return of its last episode whose cumulative
/// violation count is at most `v`; runs with no such episode are left out of
/// that level. The standard deviation is the population one.
pub fn aggregate_by_violations(strategy: &str, runs: &[Vec<EpisodeRecord>]) -> Vec<AggregateRow> {
    let levels: BTreeSet<u64> = runs.iter().flatten().map(|r| r.cumulative_violations).collect();
    levels
        .into_iter()
        .map(|v| {
            let values: Vec<f64> = runs
                .iter()
                .filter_map(|run| run.iter().take_while(|r| r.cumulative_violations <= v).last().map(|r| r.ret))
                .collect();
            let n = values.len() as f64;
            let mean = values.iter().sum::<f64>() / n;
            let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
            AggregateRow {
                strategy: strategy.to_string(),
                violations: v,
                runs: values.len(),
                mean_return: mean,
                std_return: var.sqrt(),
            }
        })
        .filter(|row| row.runs > 0)
        .collect()
}

pub fn render_aggregate(rows: &[AggregateRow]) -> String {
    let mut out = String::from("strategy,violations,runs,mean_return,std_return\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.strategy,
            r.violations,
            r.runs,
            g9(r.mean_return),
            g9(r.std_return)
        ));
    }
    out
}

/// Summary of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub cells: usize,
    pub failed: Vec<String>,
}

/// Trains every strategy and seed combination. Each cell writes
/// `<strategy>-seed<seed>.csv` plus its checkpoints under
/// `<strategy>-seed<seed>/`. Failed cells are listed in `failures.txt` and
/// the remaining cells still run.
pub fn cmd_sweep(config: &Path, strategies: &[Strategy], seeds: &[u64], out: &Path) -> Result<SweepReport, CliError> {
    let log = LogLevel::from_env();
    let base = RunConfigFile::load(config).map_err(input_error)?;
    create_dir(out)?;
    let cells: Vec<(Strategy, u64)> = strategies
        .iter()
        .flat_map(|&s| seeds.iter().map(move |&seed| (s, seed)))
        .collect();
    type Slot = Mutex<Option<Result<Vec<EpisodeRecord>, CliError>>>;
    let results: Vec<Slot> = cells.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(cells.len());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(strategy, seed)) = cells.get(i) else { break };
                let mut cfg = base.clone();
                cfg.training.strategy = strategy;
                prepare(&mut cfg, Some(seed), log);
                let name = cell_name(strategy, seed);
                let result = train_into(&cfg, &out.join(&name)).and_then(|records| {
                    write_file(&out.join(format!("{name}.csv")), &render_metrics(&records))?;
                    Ok(records)
                });
                if log >= LogLevel::Info {
                    match &result {
                        Ok(r) => eprintln!("{name}: {} episodes, {} violations", r.len(), r.last().map_or(0, |x| x.cumulative_violations)),
                        Err(e) => eprintln!("{name}: failed: {e}"),
                    }
                }
                *results[i].lock().unwrap() = Some(result);
            });
        }
    });

    let mut failed = Vec::new();
    let mut aggregate = Vec::new();
    let mut ratio = String::from("strategy,seed,env_steps,ratio\n");
    for &strategy in strategies {
        let mut runs = Vec::new();
        for (i, &(s, seed)) in cells.iter().enumerate() {
            if s != strategy {
                continue;
            }
            match results[i].lock().unwrap().take() {
                Some(Ok(records)) => {
                    if let Some(m) = base.output.max_return {
                        for r in &records {
                            ratio.push_str(&format!(
                                "{},{seed},{},{}\n",
                                strategy.as_str(),
                                r.env_steps,
                                g9(normalized_ratio(r.ret, r.cumulative_violations, m))
                            ));
                        }
                    }
                    runs.push(records);
                }
                Some(Err(e)) => failed.push(format!("{}: {e}", cell_name(s, seed))),
                None => failed.push(format!("{}: did not run", cell_name(s, seed))),
            }
        }
        aggregate.extend(aggregate_by_violations(strategy.as_str(), &runs));
    }
    write_file(&out.join(AGGREGATE_FILE), &render_aggregate(&aggregate))?;
    if base.output.max_return.is_some() {
        write_file(&out.join(RATIO_FILE), &ratio)?;
    } else if log >= LogLevel::Info {
        eprintln!("output.max_return is not set; skipping {RATIO_FILE}");
    }
    if !failed.is_empty() {
        write_file(&out.join(FAILURES_FILE), &(failed.join("\n") + "\n"))?;
    }
    Ok(SweepReport {
        cells: cells.len(),
        failed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotX {
    Violations,
    Steps,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotY {
    Return,
    Ratio,
}

/// Reads every metrics CSV in `dir` (other CSV files are skipped), sorted by
/// file name, and returns the `series,x,y` table.
pub fn cmd_export_plot(dir: &Path, x: PlotX, y: PlotY, config: Option<&Path>) -> Result<String, CliError> {
    let max_return = match y {
        PlotY::Return => None,
        PlotY::Ratio => {
            let cfg = match config {
                Some(path) => RunConfigFile::load(path).map_err(input_error)?,
                None => RunConfigFile::default(),
            };
            Some(cfg.output.max_return.ok_or_else(|| {
                CliError::usage("--y ratio needs output.max_return in the config (key `output.max_return`)")
            })?)
        }
    };
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| CliError::usage(format!("cannot read {}: {e}", dir.display())))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == "csv"))
        .collect();
    paths.sort();
    let mut out = String::from("series,x,y\n");
    let mut found = 0;
    for path in paths {
        let text = std::fs::read_to_string(&path)
            .map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))?;
        let Some(records) = parse_metrics(&text).map_err(|m| CliError::usage(format!("{}: {m}", path.display())))?
        else {
            continue;
        };
        found += 1;
        let series = path.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned());
        for r in &records {
            let xv = match x {
                PlotX::Violations => r.cumulative_violations,
                PlotX::Steps => r.env_steps,
            };
            let yv = match max_return {
                None => r.ret,
                Some(m) => normalized_ratio(r.ret, r.cumulative_violations, m),
            };
            out.push_str(&format!("{series},{xv},{}\n", g9(yv)));
        }
    }
    if found == 0 {
        return Err(CliError::usage(format!("no metrics CSV files in {}", dir.display())));
    }
    Ok(out)
}
