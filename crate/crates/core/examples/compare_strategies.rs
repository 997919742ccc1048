//! Trains every strategy on the cliff grid over several seeds and prints the
//! median violation count, final greedy return and normalized ratio.
//!
//! `cargo run --release --example compare_strategies -- [episodes] [seeds]`

use std::thread;

use rpt::trainer::{normalized_ratio, run_training, Strategy, TrainingConfig};

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn main() {
    let mut args = std::env::args().skip(1);
    let episodes: usize = args.next().map_or(3000, |a| a.parse().expect("episodes"));
    let seeds: u64 = args.next().map_or(5, |a| a.parse().expect("seeds"));
    let max_return = 88.0;

    let results: Vec<(Strategy, u64, u64, f64)> = thread::scope(|scope| {
        let handles: Vec<_> = Strategy::ALL
            .iter()
            .flat_map(|&strategy| (1..=seeds).map(move |seed| (strategy, seed)))
            .map(|(strategy, seed)| {
                scope.spawn(move || {
                    let mut cfg = TrainingConfig::default();
                    cfg.training.strategy = strategy;
                    cfg.training.episodes = episodes;
                    cfg.training.seed = seed;
                    let run = run_training(&cfg).expect("training run");
                    let eval = run.evaluation.expect("evaluation enabled");
                    (strategy, seed, run.metrics.violations(), eval.mean_return)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker")).collect()
    });

    println!("strategy,median_violations,median_eval_return,median_ratio");
    for strategy in Strategy::ALL {
        let cells: Vec<_> = results.iter().filter(|r| r.0 == strategy).collect();
        for c in &cells {
            eprintln!("{} seed {}: violations {} eval {}", strategy.as_str(), c.1, c.2, c.3);
        }
        let v = median(cells.iter().map(|c| c.2 as f64).collect());
        let r = median(cells.iter().map(|c| c.3).collect());
        let q = median(cells.iter().map(|c| normalized_ratio(c.3, c.2, max_return)).collect());
        println!("{},{v},{r},{q:.6}", strategy.as_str());
    }
}
