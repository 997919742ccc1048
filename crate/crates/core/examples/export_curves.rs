//! Writes the per-episode metrics table and the normalized return over
//! violations curve of one run, in the same formats the command line uses.
//!
//! `cargo run --release --example export_curves -- [out_dir]`

use std::fs;
use std::path::PathBuf;

use rpt::cli::{g9, render_metrics};
use rpt::trainer::{normalized_ratio_series, run_training, TrainingConfig};

fn main() -> rpt::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "curves".into()));
    fs::create_dir_all(&out).map_err(|e| rpt::Error::io(&out, e))?;

    let mut cfg = TrainingConfig::default();
    cfg.training.episodes = 1000;
    cfg.training.seed = 2;
    let run = run_training(&cfg)?;

    let metrics = out.join("metrics.csv");
    fs::write(&metrics, render_metrics(&run.metrics.records)).map_err(|e| rpt::Error::io(&metrics, e))?;

    let mut ratio = String::from("env_steps,ratio\n");
    for (steps, value) in normalized_ratio_series(&run.metrics, 88.0)? {
        ratio.push_str(&format!("{steps},{}\n", g9(value)));
    }
    let ratio_path = out.join("ratio.csv");
    fs::write(&ratio_path, ratio).map_err(|e| rpt::Error::io(&ratio_path, e))?;

    println!("wrote {} and {}", metrics.display(), ratio_path.display());
    Ok(())
}
