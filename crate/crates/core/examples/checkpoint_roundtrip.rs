//! Saves a trained learner and classifier, restores them into fresh
//! instances and checks that greedy evaluation and risk estimates agree.
//!
//! `cargo run --release --example checkpoint_roundtrip`

use rpt::agent::AnyLearner;
use rpt::cmdp::Action;
use rpt::envs::Environment;
use rpt::tensorfile::{load_classifier, load_learner, save_classifier, save_learner};
use rpt::trainer::{evaluate_policy, run_training, Streams, TrainingConfig};

fn main() -> rpt::Result<()> {
    let mut cfg = TrainingConfig::default();
    cfg.training.episodes = 800;
    cfg.training.seed = 9;
    let run = run_training(&cfg)?;

    let dir = std::env::temp_dir().join("rpt-checkpoint-example");
    std::fs::create_dir_all(&dir).map_err(|e| rpt::Error::io(&dir, e))?;
    save_learner(&dir.join("learner.tensors"), &run.learner)?;
    save_classifier(&dir.join("classifier.tensors"), &run.classifier, &run.classifier_optimizer)?;

    let mut env = cfg.environment.build()?;
    let mut restored = AnyLearner::build(&cfg.agent, &env, &mut Streams::new(0).init)?;
    load_learner(&dir.join("learner.tensors"), &mut restored)?;
    let (clf, _) = load_classifier(&dir.join("classifier.tensors"))?;

    let before = evaluate_policy(&mut env, &run.learner, 5, 0)?;
    let after = evaluate_policy(&mut env, &restored, 5, 0)?;
    println!("greedy return: trained {:.1}, restored {:.1}", before.mean_return, after.mean_return);

    let state = env.reset(0);
    let features = env.feature_vector(&state, &Action::Discrete(0))?;
    println!(
        "risk at the start state: trained {:.6}, restored {:.6}",
        run.classifier.risk(&features)?,
        clf.risk(&features)?
    );
    Ok(())
}
