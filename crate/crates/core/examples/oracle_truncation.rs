//! Risk truncation with the exact cliff geometry in place of the learned
//! classifier. After the first fall the multiplier is set and truncation
//! keeps every later episode out of the cliff.
//!
//! A truncated pair is never executed, so its optimistic table entry never
//! moves and the explorer keeps choosing it. `penalize_blocked` feeds the
//! learner a penalty for that pair, which lets the greedy path form.
//!
//! `cargo run --release --example oracle_truncation -- [episodes]`

use rpt::trainer::{run_training, RiskSourceKind, TrainingConfig};

fn main() -> rpt::Result<()> {
    let episodes = std::env::args().nth(1).map_or(2000, |a| a.parse().expect("episodes"));
    println!("source   penalize_blocked  seed  violations  truncations  greedy_return");
    for source in [RiskSourceKind::Oracle, RiskSourceKind::Learned] {
        for penalize in [false, true] {
            for seed in 1..=2 {
                let mut cfg = TrainingConfig::default();
                cfg.classifier.source = source;
                cfg.shaping.penalize_blocked = penalize;
                cfg.training.episodes = episodes;
                cfg.training.seed = seed;
                let run = run_training(&cfg)?;
                let last = run.metrics.records.last().expect("at least one episode");
                let eval = run.evaluation.map_or(f64::NAN, |e| e.mean_return);
                println!(
                    "{:<8} {penalize:>16}  {seed:>4}  {:>10}  {:>11}  {eval:>13.1}",
                    format!("{source:?}").to_lowercase(),
                    last.cumulative_violations,
                    last.risk_truncations
                );
            }
        }
    }
    Ok(())
}
