//! Plain-text tensor files used for classifier and learner checkpoints.
//!
//! ```text
//! rpt-tensors 1
//! kind risk-classifier
//! meta hidden_dim 64
//! tensor params 513
//! 1.2345e-2
//! ...
//! end
//! ```
//!
//! The first line is the magic word and the format version. `kind` names the
//! payload. `meta` lines carry `key value` pairs (no spaces in either) in
//! sorted key order. Each `tensor name len` line is followed by exactly `len`
//! lines with one value each, written in the shortest exponent form that
//! parses back to the same `f64`. The file ends with `end` and a newline.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::agent::AnyLearner;
use crate::error::{Error, Result};
use crate::nn::Mlp;
use crate::riskmodel::{OptimizerState, RiskClassifier};

pub const MAGIC: &str = "rpt-tensors";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct TensorFile {
    pub kind: String,
    pub meta: BTreeMap<String, String>,
    pub tensors: Vec<(String, Vec<f64>)>,
}

fn is_token(s: &str) -> bool {
    !s.is_empty() && !s.chars().any(char::is_whitespace)
}

impl TensorFile {
    pub fn new(kind: impl Into<String>) -> Self {
        Self {
            kind: kind.into(),
            meta: BTreeMap::new(),
            tensors: Vec::new(),
        }
    }

    pub fn with_meta(mut self, key: &str, value: impl ToString) -> Self {
        self.meta.insert(key.to_string(), value.to_string());
        self
    }

    pub fn with_tensor(mut self, name: &str, values: Vec<f64>) -> Self {
        self.tensors.push((name.to_string(), values));
        self
    }

    pub fn tensor(&self, name: &str) -> Option<&[f64]> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }

    pub fn render(&self) -> Result<String> {
        let mut out = format!("{MAGIC} {VERSION}\n");
        let tokens = std::iter::once(self.kind.as_str())
            .chain(self.meta.iter().flat_map(|(k, v)| [k.as_str(), v.as_str()]))
            .chain(self.tensors.iter().map(|(n, _)| n.as_str()));
        if let Some(bad) = tokens.into_iter().find(|t| !is_token(t)) {
            return Err(Error::domain(format!("tensor file token `{bad}` is empty or has whitespace")));
        }
        writeln!(out, "kind {}", self.kind).unwrap();
        for (k, v) in &self.meta {
            writeln!(out, "meta {k} {v}").unwrap();
        }
        for (name, values) in &self.tensors {
            if let Some(v) = values.iter().find(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    param: format!("{name} ({v})"),
                });
            }
            writeln!(out, "tensor {name} {}", values.len()).unwrap();
            for v in values {
                writeln!(out, "{v:e}").unwrap();
            }
        }
        out.push_str("end\n");
        Ok(out)
    }

    /// Parses a rendered file; the error message gives the offending line.
    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        let mut lines = text.split('\n').enumerate().map(|(i, l)| (i + 1, l));
        let mut next = |what: &str| lines.next().ok_or_else(|| format!("unexpected end of file, expected {what}"));

        let (_, header) = next("header")?;
        match header.split(' ').collect::<Vec<_>>()[..] {
            [MAGIC, v] if v == VERSION.to_string() => {}
            [MAGIC, v] => return Err(format!("unsupported version {v}")),
            _ => return Err("missing rpt-tensors header".to_string()),
        }
        let (n, kind_line) = next("kind")?;
        let kind = kind_line
            .strip_prefix("kind ")
            .filter(|k| is_token(k))
            .ok_or_else(|| format!("line {n}: expected `kind <name>`"))?;
        let mut file = TensorFile::new(kind);
        loop {
            let (n, line) = next("`end`")?;
            let parts: Vec<&str> = line.split(' ').collect();
            match parts[..] {
                ["end"] => break,
                ["meta", k, v] if is_token(k) && is_token(v) => {
                    if file.meta.insert(k.to_string(), v.to_string()).is_some() {
                        return Err(format!("line {n}: duplicate meta key {k}"));
                    }
                }
                ["tensor", name, len] if is_token(name) => {
                    let len: usize = len.parse().map_err(|_| format!("line {n}: bad tensor length {len:?}"))?;
                    if file.tensor(name).is_some() {
                        return Err(format!("line {n}: duplicate tensor {name}"));
                    }
                    let mut values = Vec::with_capacity(len.min(1 << 20));
                    for _ in 0..len {
                        let (n, v) = next("tensor value")?;
                        let v: f64 = v.parse().map_err(|_| format!("line {n}: bad value {v:?}"))?;
                        if !v.is_finite() {
                            return Err(format!("line {n}: non-finite value"));
                        }
                        values.push(v);
                    }
                    file.tensors.push((name.to_string(), values));
                }
                _ => return Err(format!("line {n}: unrecognized line {line:?}")),
            }
        }
        match lines.next() {
            Some((_, "")) if lines.next().is_none() => Ok(file),
            None => Err("missing final newline".to_string()),
            Some((n, _)) => Err(format!("line {n}: content after `end`")),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.render()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let text = String::from_utf8(bytes).map_err(|_| corrupt(path, "not UTF-8 text"))?;
        Self::parse(&text).map_err(|m| corrupt(path, m))
    }
}

fn corrupt(path: &Path, message: impl Into<String>) -> Error {
    Error::Checkpoint {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

struct Reader<'a> {
    file: &'a TensorFile,
    path: &'a Path,
}

impl Reader<'_> {
    fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.file.kind == kind {
            Ok(())
        } else {
            Err(corrupt(self.path, format!("expected kind {kind}, found {}", self.file.kind)))
        }
    }

    fn meta<T: FromStr>(&self, key: &str) -> Result<T> {
        let raw = self
            .file
            .meta
            .get(key)
            .ok_or_else(|| corrupt(self.path, format!("missing meta {key}")))?;
        raw.parse()
            .map_err(|_| corrupt(self.path, format!("bad meta {key} = {raw}")))
    }

    fn tensor(&self, name: &str, len: usize) -> Result<Vec<f64>> {
        let values = self
            .file
            .tensor(name)
            .ok_or_else(|| corrupt(self.path, format!("missing tensor {name}")))?;
        if values.len() != len {
            return Err(corrupt(
                self.path,
                format!("tensor {name} has {} values, expected {len}", values.len()),
            ));
        }
        Ok(values.to_vec())
    }

    fn counts(&self, name: &str, len: usize) -> Result<Vec<u64>> {
        self.tensor(name, len)?
            .into_iter()
            .map(|v| {
                if v >= 0.0 && v.fract() == 0.0 && v < 2f64.powi(53) {
                    Ok(v as u64)
                } else {
                    Err(corrupt(self.path, format!("tensor {name} holds a non-count {v}")))
                }
            })
            .collect()
    }
}

pub fn classifier_file(clf: &RiskClassifier, opt: &OptimizerState) -> TensorFile {
    let net = clf.network();
    let adam = opt.adam();
    TensorFile::new("risk-classifier")
        .with_meta("input_dim", net.input_dim())
        .with_meta("hidden_dim", net.hidden_dim())
        .with_meta("updates", clf.updates())
        .with_meta("learning_rate", format!("{:e}", opt.learning_rate()))
        .with_meta("adam_steps", adam.steps())
        .with_tensor("params", net.params().to_vec())
        .with_tensor("adam_m", adam.first_moment().to_vec())
        .with_tensor("adam_v", adam.second_moment().to_vec())
}

pub fn save_classifier(path: &Path, clf: &RiskClassifier, opt: &OptimizerState) -> Result<()> {
    classifier_file(clf, opt).save(path)
}

pub fn load_classifier(path: &Path) -> Result<(RiskClassifier, OptimizerState)> {
    let file = TensorFile::load(path)?;
    let r = Reader { file: &file, path };
    r.expect_kind("risk-classifier")?;
    let input: usize = r.meta("input_dim")?;
    let hidden: usize = r.meta("hidden_dim")?;
    if input == 0 || hidden == 0 || input.saturating_mul(hidden) > 1 << 24 {
        return Err(corrupt(path, "implausible layer sizes"));
    }
    let n = Mlp::param_count(input, hidden, 1);
    let net = Mlp::from_params(input, hidden, 1, r.tensor("params", n)?).map_err(|e| corrupt(path, e.to_string()))?;
    let clf = RiskClassifier::from_network(net, r.meta("updates")?).map_err(|e| corrupt(path, e.to_string()))?;
    let lr: f64 = r.meta("learning_rate")?;
    if !(lr.is_finite() && lr >= 0.0) {
        return Err(corrupt(path, "learning rate must be finite and non-negative"));
    }
    let mut opt = OptimizerState::new(&clf, lr);
    opt.adam_mut()
        .restore(r.tensor("adam_m", n)?, r.tensor("adam_v", n)?, r.meta("adam_steps")?)
        .map_err(|e| corrupt(path, e.to_string()))?;
    Ok((clf, opt))
}

pub fn learner_file(learner: &AnyLearner) -> TensorFile {
    let file = TensorFile::new(learner.kind().as_str());
    match learner {
        AnyLearner::Tabular(q) => {
            let enc = q.encoding();
            file.with_meta("width", enc.width)
                .with_meta("height", enc.height)
                .with_meta("n_actions", q.n_actions())
                .with_meta("epsilon", format!("{:e}", q.epsilon()))
                .with_tensor("q", q.table().to_vec())
                .with_tensor("visits", q.visits().iter().map(|&v| v as f64).collect())
        }
        AnyLearner::ActorCritic(ac) => file
            .with_meta("hidden", ac.params().hidden)
            .with_tensor("actor", ac.actor().params().to_vec())
            .with_tensor("critic", ac.critic().params().to_vec()),
        AnyLearner::Random(_) => file,
    }
}

pub fn save_learner(path: &Path, learner: &AnyLearner) -> Result<()> {
    learner_file(learner).save(path)
}

/// Loads parameters into `learner`, which must have been built from the same
/// configuration and environment as the saved one.
pub fn load_learner(path: &Path, learner: &mut AnyLearner) -> Result<()> {
    let file = TensorFile::load(path)?;
    let r = Reader { file: &file, path };
    r.expect_kind(learner.kind().as_str())?;
    let restored = match learner {
        AnyLearner::Tabular(q) => {
            let enc = q.encoding();
            let shape: (usize, usize, usize) = (r.meta("width")?, r.meta("height")?, r.meta("n_actions")?);
            if shape != (enc.width, enc.height, q.n_actions()) {
                return Err(corrupt(path, format!("table shape {shape:?} does not match the environment")));
            }
            let n = q.table().len();
            q.restore(r.tensor("q", n)?, r.counts("visits", n)?, r.meta("epsilon")?)
        }
        AnyLearner::ActorCritic(ac) => {
            if r.meta::<usize>("hidden")? != ac.params().hidden {
                return Err(corrupt(path, "hidden size does not match the configuration"));
            }
            let (na, nc) = (ac.actor().params().len(), ac.critic().params().len());
            ac.restore(r.tensor("actor", na)?, r.tensor("critic", nc)?)
        }
        AnyLearner::Random(_) => Ok(()),
    };
    restored.map_err(|e| corrupt(path, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn render_parse_round_trip_is_exact() {
        let values = vec![0.1, -1.0 / 3.0, 1e-300, 6.02e23, 0.0, -0.0, f64::MIN_POSITIVE, f64::MAX];
        let file = TensorFile::new("demo").with_meta("a", 3).with_tensor("x", values.clone());
        let text = file.render().unwrap();
        let back = TensorFile::parse(&text).unwrap();
        assert_eq!(back, file);
        for (a, b) in back.tensor("x").unwrap().iter().zip(&values) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(back.render().unwrap(), text);
    }

    #[test]
    fn rejects_damage() {
        let text = TensorFile::new("demo").with_tensor("x", vec![1.0, 2.0]).render().unwrap();
        let cases = [
            text.replace("rpt-tensors 1", "rpt-tensors 2"),
            text.replace("tensor x 2", "tensor x 3"),
            text.replace("2e0", "two"),
            text.replace("end\n", ""),
            text.replace("end\n", "end"),
            format!("{text}junk\n"),
            String::new(),
        ];
        for bad in cases {
            assert!(TensorFile::parse(&bad).is_err(), "{bad:?}");
        }
    }

    #[test]
    fn refuses_to_render_non_finite() {
        let file = TensorFile::new("demo").with_tensor("x", vec![f64::NAN]);
        assert!(matches!(file.render(), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn classifier_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let clf = RiskClassifier::new(6, 8, &mut rng);
        let opt = OptimizerState::new(&clf, 1e-3);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("clf.tensors");
        save_classifier(&path, &clf, &opt).unwrap();
        let (c2, o2) = load_classifier(&path).unwrap();
        assert_eq!(c2, clf);
        assert_eq!(o2, opt);
    }

    #[test]
    fn corrupt_file_names_path() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("clf.tensors");
        std::fs::write(&path, "rpt-tensors 1\nkind risk-classifier\nend\n").unwrap();
        let err = load_classifier(&path).unwrap_err();
        assert!(matches!(err, Error::Checkpoint { .. }));
        assert!(err.to_string().contains("clf.tensors"));
    }
}
