//! Actor-critic on the two continuous environments, RPT against the
//! unshaped baseline.
//!
//! `cargo run --release --example continuous_envs -- [episodes]`

use rpt::agent::LearnerKind;
use rpt::envs::EnvId;
use rpt::trainer::{run_training, Strategy, TrainingConfig};

fn main() -> rpt::Result<()> {
    let episodes = std::env::args().nth(1).map_or(300, |a| a.parse().expect("episodes"));
    println!("environment    strategy  violations  final_lambda  greedy_return");
    for id in [EnvId::PuddlePoint, EnvId::LineHopper] {
        for strategy in [Strategy::Rpt, Strategy::Unshaped] {
            let mut cfg = TrainingConfig::default();
            cfg.environment.id = id;
            cfg.agent.learner = LearnerKind::ActorCritic;
            cfg.training.strategy = strategy;
            cfg.training.episodes = episodes;
            cfg.training.seed = 1;
            let run = run_training(&cfg)?;
            let lambda = run.metrics.records.last().map_or(0.0, |r| r.lambda);
            let eval = run.evaluation.map_or(f64::NAN, |e| e.mean_return);
            println!(
                "{:<14} {:<9} {:>10}  {lambda:>12.3}  {eval:>13.2}",
                cfg.environment.build()?.name(),
                strategy.as_str(),
                run.metrics.violations()
            );
        }
    }
    Ok(())
}
