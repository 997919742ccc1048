use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rpt::cli::{self, CliError, PlotX, PlotY};
use rpt::trainer::Strategy;

/// Risk preventive training on small safety benchmarks.
///
/// Set RPT_LOG=info (or debug) for progress on standard error.
#[derive(Parser)]
#[command(name = "rpt", version)]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum XAxis {
    Violations,
    Steps,
}

#[derive(Clone, Copy, ValueEnum)]
enum YAxis {
    Return,
    Ratio,
}

#[derive(Subcommand)]
enum Command {
    /// Train once and write metrics, checkpoints and the resolved config.
    Train {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Greedy evaluation of a training output directory.
    Eval {
        dir: PathBuf,
        #[arg(long, default_value_t = 10)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train every strategy and seed combination and aggregate the results.
    Sweep {
        config: PathBuf,
        /// Comma separated, e.g. rpt,unshaped
        #[arg(long, default_value = "rpt,unshaped,fixed-penalty,additive-lagrangian")]
        strategies: String,
        /// Comma separated, e.g. 1,2,3
        #[arg(long, default_value = "1,2,3")]
        seeds: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Turn metrics CSV files into a series,x,y table.
    ExportPlot {
        dir: PathBuf,
        #[arg(long, value_enum, default_value = "violations")]
        x: XAxis,
        #[arg(long, value_enum, default_value = "return")]
        y: YAxis,
        /// Config holding output.max_return, needed for --y ratio.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output file; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn emit(text: &str, out: Option<&PathBuf>) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| CliError::runtime(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(args: Args) -> Result<(), CliError> {
    match args.command {
        Command::Train { config, seed, out } => cli::cmd_train(&config, seed, &out),
        Command::Eval { dir, episodes, seed } => {
            println!("{}", cli::cmd_eval(&dir, episodes, seed)?);
            Ok(())
        }
        Command::Sweep {
            config,
            strategies,
            seeds,
            out,
        } => {
            let strategies = cli::parse_list(&strategies, "strategy", Strategy::parse)?;
            let seeds = cli::parse_list(&seeds, "seed", |s| s.parse().ok())?;
            let report = cli::cmd_sweep(&config, &strategies, &seeds, &out)?;
            if report.failed.is_empty() {
                Ok(())
            } else {
                Err(CliError::runtime(format!(
                    "{} of {} cells failed:\n{}",
                    report.failed.len(),
                    report.cells,
                    report.failed.join("\n")
                )))
            }
        }
        Command::ExportPlot { dir, x, y, config, out } => {
            let x = match x {
                XAxis::Violations => PlotX::Violations,
                XAxis::Steps => PlotX::Steps,
            };
            let y = match y {
                YAxis::Return => PlotY::Return,
                YAxis::Ratio => PlotY::Ratio,
            };
            let table = cli::cmd_export_plot(&dir, x, y, config.as_deref())?;
            emit(&table, out.as_ref())
        }
    }
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("rpt: {e}");
            ExitCode::from(e.code as u8)
        }
    }
}
