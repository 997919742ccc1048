use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn rpt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rpt"))
        .args(args)
        .env_remove("RPT_LOG")
        .output()
        .expect("binary runs")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &TempDir, body: &str) -> PathBuf {
    let path = dir.path().join("run.toml");
    std::fs::write(&path, body).unwrap();
    path
}

fn short_config(dir: &TempDir) -> PathBuf {
    write_config(dir, "[training]\nepisodes = 40\neval_episodes = 2\n")
}

fn train(dir: &TempDir, config: &Path, name: &str) -> PathBuf {
    let out = dir.path().join(name);
    let o = rpt(&["train", path_str(config), "--seed", "3", "--out", path_str(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    out
}

/// Numeric rows of a CSV file, header dropped.
fn rows(text: &str) -> Vec<Vec<String>> {
    text.lines().skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

#[test]
fn train_writes_all_outputs() {
    let dir = TempDir::new().unwrap();
    let out = train(&dir, &short_config(&dir), "run");
    for f in ["metrics.csv", "learner.tensors", "classifier.tensors", "config.resolved.toml"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let metrics = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert_eq!(rows(&metrics).len(), 40);
    let resolved = std::fs::read_to_string(out.join("config.resolved.toml")).unwrap();
    assert!(resolved.contains("seed = 3"), "{resolved}");
}

#[test]
fn nonzero_cost_threshold_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let config = write_config(&dir, "[environment]\ncost_threshold = 1.0\n");
    let o = rpt(&["train", path_str(&config), "--out", path_str(&dir.path().join("x"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("cost_threshold"), "{}", stderr(&o));
}

#[test]
fn unknown_key_is_named() {
    let dir = TempDir::new().unwrap();
    let config = write_config(&dir, "[shaping]\netaa = 0.5\n");
    let o = rpt(&["train", path_str(&config), "--out", path_str(&dir.path().join("x"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("shaping.etaa"), "{}", stderr(&o));
}

#[test]
fn unwritable_output_is_a_runtime_error() {
    let dir = TempDir::new().unwrap();
    let config = short_config(&dir);
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "not a directory").unwrap();
    let o = rpt(&["train", path_str(&config), "--out", path_str(&blocker.join("sub"))]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn eval_prints_one_line() {
    let dir = TempDir::new().unwrap();
    let out = train(&dir, &short_config(&dir), "run");
    let o = rpt(&["eval", path_str(&out), "--episodes", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 1);
    let fields: Vec<&str> = lines[0].split(',').collect();
    assert_eq!(fields.len(), 2);
    fields[0].parse::<f64>().unwrap();
    fields[1].parse::<u64>().unwrap();
}

#[test]
fn eval_is_repeatable() {
    let dir = TempDir::new().unwrap();
    let out = train(&dir, &short_config(&dir), "run");
    let a = rpt(&["eval", path_str(&out), "--seed", "5"]);
    let b = rpt(&["eval", path_str(&out), "--seed", "5"]);
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn corrupt_checkpoint_is_named() {
    let dir = TempDir::new().unwrap();
    let out = train(&dir, &short_config(&dir), "run");
    std::fs::write(out.join("learner.tensors"), "rpt-tensors 1\nkind tabular\ngarbage\n").unwrap();
    let o = rpt(&["eval", path_str(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("learner.tensors"), "{}", stderr(&o));
}

#[test]
fn eval_rejects_zero_episodes() {
    let dir = TempDir::new().unwrap();
    let out = train(&dir, &short_config(&dir), "run");
    let o = rpt(&["eval", path_str(&out), "--episodes", "0"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn eval_of_missing_directory_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let o = rpt(&["eval", path_str(&dir.path().join("nothing"))]);
    assert_eq!(o.status.code(), Some(2));
}

/// Last-observation-carried-forward average over cumulative violation levels,
/// computed directly from the CSV text.
fn expected_aggregate(csvs: &[String]) -> Vec<(u64, usize, f64, f64)> {
    let runs: Vec<Vec<(u64, f64)>> = csvs
        .iter()
        .map(|t| rows(t).iter().map(|r| (r[5].parse().unwrap(), r[2].parse().unwrap())).collect())
        .collect();
    let levels: BTreeSet<u64> = runs.iter().flatten().map(|&(v, _)| v).collect();
    let mut out = Vec::new();
    for v in levels {
        let mut values = Vec::new();
        for run in &runs {
            if let Some(&(_, ret)) = run.iter().rev().find(|&&(c, _)| c <= v) {
                values.push(ret);
            }
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = (values.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt();
        out.push((v, values.len(), mean, std));
    }
    out
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-6 * (1.0 + b.abs())
}

#[test]
fn sweep_writes_cells_and_a_consistent_aggregate() {
    let dir = TempDir::new().unwrap();
    let config = write_config(&dir, "[training]\nepisodes = 60\neval_episodes = 1\n[output]\nmax_return = 88.0\n");
    let out = dir.path().join("sweep");
    let o = rpt(&[
        "sweep",
        path_str(&config),
        "--strategies",
        "rpt,unshaped",
        "--seeds",
        "1,2,3",
        "--out",
        path_str(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));

    let aggregate = std::fs::read_to_string(out.join("aggregate.csv")).unwrap();
    assert!(aggregate.starts_with("strategy,violations,runs,mean_return,std_return\n"));
    let table = rows(&aggregate);
    for strategy in ["rpt", "unshaped"] {
        let csvs: Vec<String> = (1..=3)
            .map(|seed| {
                let cell = format!("{strategy}-seed{seed}");
                assert!(out.join(&cell).join("learner.tensors").is_file());
                std::fs::read_to_string(out.join(format!("{cell}.csv"))).unwrap()
            })
            .collect();
        let got: Vec<&Vec<String>> = table.iter().filter(|r| r[0] == strategy).collect();
        let want = expected_aggregate(&csvs);
        assert_eq!(got.len(), want.len(), "{strategy}");
        for (g, (v, n, mean, std)) in got.iter().zip(want) {
            assert_eq!(g[1].parse::<u64>().unwrap(), v);
            assert_eq!(g[2].parse::<usize>().unwrap(), n);
            assert!(close(g[3].parse().unwrap(), mean), "{g:?} vs {mean}");
            assert!(close(g[4].parse().unwrap(), std), "{g:?} vs {std}");
        }
    }
    let ratio = std::fs::read_to_string(out.join("ratio.csv")).unwrap();
    assert_eq!(rows(&ratio).len(), 6 * 60);
    assert!(!out.join("failures.txt").exists());
}

#[test]
fn single_cell_sweep_has_zero_spread() {
    let dir = TempDir::new().unwrap();
    let config = short_config(&dir);
    let out = dir.path().join("sweep");
    let o = rpt(&["sweep", path_str(&config), "--strategies", "unshaped", "--seeds", "4", "--out", path_str(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let aggregate = std::fs::read_to_string(out.join("aggregate.csv")).unwrap();
    for row in rows(&aggregate) {
        assert_eq!(row[2], "1");
        assert_eq!(row[4], "0");
    }
    assert!(!out.join("ratio.csv").exists());
}

#[test]
fn sweep_rejects_unknown_strategy() {
    let dir = TempDir::new().unwrap();
    let config = short_config(&dir);
    let o = rpt(&["sweep", path_str(&config), "--strategies", "greedy", "--out", path_str(&dir.path().join("s"))]);
    assert_eq!(o.status.code(), Some(2));
}

fn sweep_fixture(dir: &TempDir) -> PathBuf {
    let config = short_config(dir);
    let out = dir.path().join("sweep");
    let o = rpt(&["sweep", path_str(&config), "--strategies", "rpt,unshaped", "--seeds", "1", "--out", path_str(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    out
}

#[test]
fn export_plot_is_monotone_per_series() {
    let dir = TempDir::new().unwrap();
    let sweep = sweep_fixture(&dir);
    for axis in ["violations", "steps"] {
        let o = rpt(&["export-plot", path_str(&sweep), "--x", axis]);
        assert!(o.status.success(), "{}", stderr(&o));
        let text = String::from_utf8(o.stdout).unwrap();
        assert!(text.starts_with("series,x,y\n"));
        let table = rows(&text);
        assert_eq!(table.len(), 2 * 40);
        let series: BTreeSet<&str> = table.iter().map(|r| r[0].as_str()).collect();
        assert_eq!(series.into_iter().collect::<Vec<_>>(), ["rpt-seed1", "unshaped-seed1"]);
        for pair in table.windows(2).filter(|w| w[0][0] == w[1][0]) {
            assert!(pair[0][1].parse::<u64>().unwrap() <= pair[1][1].parse::<u64>().unwrap());
        }
    }
}

#[test]
fn export_plot_writes_to_file() {
    let dir = TempDir::new().unwrap();
    let sweep = sweep_fixture(&dir);
    let target = dir.path().join("plot.csv");
    let o = rpt(&["export-plot", path_str(&sweep), "--out", path_str(&target)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(o.stdout.is_empty());
    assert_eq!(rows(&std::fs::read_to_string(&target).unwrap()).len(), 80);
}

#[test]
fn ratio_needs_max_return() {
    let dir = TempDir::new().unwrap();
    let sweep = sweep_fixture(&dir);
    let o = rpt(&["export-plot", path_str(&sweep), "--y", "ratio"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("output.max_return"), "{}", stderr(&o));

    let with_max = dir.path().join("max.toml");
    std::fs::write(&with_max, "[output]\nmax_return = 88.0\n").unwrap();
    let o = rpt(&["export-plot", path_str(&sweep), "--y", "ratio", "--config", path_str(&with_max)]);
    assert!(o.status.success(), "{}", stderr(&o));
    for row in rows(&String::from_utf8(o.stdout).unwrap()) {
        let y: f64 = row[2].parse().unwrap();
        assert!(y.abs() <= 100.0 / 88.0 + 1e-9);
    }
}

#[test]
fn export_plot_of_empty_directory_fails() {
    let dir = TempDir::new().unwrap();
    let o = rpt(&["export-plot", path_str(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
}
