//! Fits the contrastive risk classifier on cliff-grid pairs labelled by the
//! true geometry, then compares learned and true risk along the cliff edge.
//! Moving down from x = 0 or x = 11 is safe, yet it lands close to the
//! unsafe pairs in feature space and gets a high risk estimate too.
//!
//! `cargo run --release --example risk_classifier`

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rpt::cmdp::Action;
use rpt::envs::{CliffGrid, CliffGridConfig, Environment};
use rpt::riskmodel::{contrastive_loss, train_step, ClassifierBatch, OptimizerState, RiskClassifier};

fn main() -> rpt::Result<()> {
    let env = CliffGrid::new(CliffGridConfig::default())?;
    let enc = env.encoding();
    let (w, h) = (env.config().width, env.config().height);

    let mut unsafe_pairs = Vec::new();
    let mut all_pairs = Vec::new();
    for x in 0..w {
        for y in 0..h {
            if env.is_cliff((x, y)) {
                continue;
            }
            let state = enc.encode((x, y));
            for a in 0..4 {
                let action = Action::Discrete(a);
                let features = env.feature_vector(&state, &action)?;
                if env.true_risk(&state, &action)? > 0.0 {
                    unsafe_pairs.push(features.clone());
                }
                all_pairs.push(features);
            }
        }
    }
    println!("{} pairs, {} lead into the cliff", all_pairs.len(), unsafe_pairs.len());

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut clf = RiskClassifier::new(env.feature_dim(), 64, &mut rng);
    let mut opt = OptimizerState::new(&clf, 1e-3);
    for step in 0..=3000 {
        let batch = ClassifierBatch {
            positives: unsafe_pairs.choose_multiple(&mut rng, 16).cloned().collect(),
            negatives: all_pairs.choose_multiple(&mut rng, 64).cloned().collect(),
        };
        if step % 1000 == 0 {
            println!("step {step:>4}: loss {:.4}", contrastive_loss(&clf, &batch)?);
        }
        (clf, opt) = train_step(&clf, &opt, &batch)?;
    }

    println!("\n x  action  true  learned p");
    for x in [0, 3, 6, 9, 11] {
        let state = enc.encode((x, 1));
        for a in 0..4 {
            let action = Action::Discrete(a);
            let p = clf.risk(&env.feature_vector(&state, &action)?)?;
            println!("{x:>2}  {a:>6}  {:>4}  {p:.3}", env.true_risk(&state, &action)?);
        }
    }
    Ok(())
}
