//! One RPT training run on the cliff grid with progress lines and a final
//! greedy evaluation.
//!
//! `cargo run --release --example cliff_rpt -- [episodes] [seed]`

use rpt::trainer::{run_training, TrainingConfig};

fn main() -> rpt::Result<()> {
    let mut args = std::env::args().skip(1);
    let mut cfg = TrainingConfig::default();
    cfg.training.episodes = args.next().map_or(3000, |a| a.parse().expect("episodes"));
    cfg.training.seed = args.next().map_or(1, |a| a.parse().expect("seed"));

    let run = run_training(&cfg)?;
    let step = (cfg.training.episodes / 10).max(1);
    println!("episode  env_steps  return  lambda  violations  truncations");
    for r in run.metrics.records.iter().filter(|r| (r.episode + 1) % step == 0) {
        println!(
            "{:>7}  {:>9}  {:>6}  {:>6.2}  {:>10}  {:>11}",
            r.episode + 1,
            r.env_steps,
            r.ret,
            r.lambda,
            r.cumulative_violations,
            r.risk_truncations
        );
    }
    println!("multiplier updates: {}", run.lambda_updates);
    println!("distinct unsafe pairs: {}", run.unsafe_pairs.len());
    if let Some(eval) = run.evaluation {
        println!("greedy return {:.1}, violations {}", eval.mean_return, eval.violations);
    }
    Ok(())
}
