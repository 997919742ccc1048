//! Contrastive risk classifier.
//!
//! The classifier `F` discriminates state-action pairs that led to an unsafe
//! state (positives) from pairs drawn from the overall experience (negatives).
//! Its output is squashed into `(0, 0.5)` by `0.5 * logistic(z)`, which makes
//! the Bayes transform `p = F / (1 - F)` land in `(0, 1)` by construction.
//!
//! Training maximizes
//! `mean_pos log F + mean_neg log(1 - F)`; this module exposes the negated
//! value as a loss together with its exact gradient.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Adam, Mlp};

pub const DEFAULT_HIDDEN: usize = 64;
pub const DEFAULT_LEARNING_RATE: f64 = 1e-3;

/// Which pairs of an unsafe trajectory become classifier positives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PositivePolicy {
    /// Only the pair whose transition incurred the cost.
    #[default]
    TerminalOnly,
    /// The last `k` pairs of the unsafe trajectory.
    LastK(usize),
}

fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln logistic(z)`, stable for large `|z|`.
fn log_logistic(z: f64) -> f64 {
    -((-z).max(0.0) + (-z.abs()).exp().ln_1p())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiskClassifier {
    net: Mlp,
    updates: u64,
}

impl RiskClassifier {
    /// Randomly initialized classifier with a small output layer, so the
    /// initial output is close to 0.25 everywhere.
    pub fn new<R: Rng + ?Sized>(input_dim: usize, hidden_dim: usize, rng: &mut R) -> Self {
        Self {
            net: Mlp::random(input_dim, hidden_dim, 1, 0.1, rng),
            updates: 0,
        }
    }

    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        Self {
            net: Mlp::zeros(input_dim, hidden_dim, 1),
            updates: 0,
        }
    }

    pub fn from_network(net: Mlp, updates: u64) -> Result<Self> {
        if net.output_dim() != 1 {
            return Err(Error::domain("risk classifier needs a single output"));
        }
        Ok(Self { net, updates })
    }

    pub fn network(&self) -> &Mlp {
        &self.net
    }

    pub fn network_mut(&mut self) -> &mut Mlp {
        &mut self.net
    }

    pub fn input_dim(&self) -> usize {
        self.net.input_dim()
    }

    /// Number of completed training steps.
    pub fn updates(&self) -> u64 {
        self.updates
    }

    fn logit(&self, features: &[f64]) -> Result<f64> {
        Ok(self.net.forward(features)?.output[0])
    }

    /// Rescaled classifier output `0.5 * logistic(net(x))`.
    pub fn forward(&self, features: &[f64]) -> Result<f64> {
        Ok(0.5 * logistic(self.logit(features)?))
    }

    /// Probability that the pair leads to an unsafe state.
    pub fn risk(&self, features: &[f64]) -> Result<f64> {
        risk_probability(self.forward(features)?)
    }
}

/// Bayes transform `F / (1 - F)` from classifier output to risk probability.
pub fn risk_probability(f: f64) -> Result<f64> {
    if !(0.0..=0.5).contains(&f) {
        return Err(Error::domain(format!("classifier output {f} outside [0, 0.5]")));
    }
    Ok(f / (1.0 - f))
}

/// Positives and negatives for one classifier step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ClassifierBatch {
    pub positives: Vec<Vec<f64>>,
    pub negatives: Vec<Vec<f64>>,
}

impl ClassifierBatch {
    fn check(&self) -> Result<()> {
        if self.positives.is_empty() || self.negatives.is_empty() {
            return Err(Error::domain(format!(
                "classifier batch needs both sides non-empty ({} positives, {} negatives)",
                self.positives.len(),
                self.negatives.len()
            )));
        }
        Ok(())
    }
}

/// Negative log-likelihood `-(mean_pos ln F + mean_neg ln(1 - F))`.
pub fn contrastive_loss(clf: &RiskClassifier, batch: &ClassifierBatch) -> Result<f64> {
    batch.check()?;
    let mut pos = 0.0;
    for x in &batch.positives {
        pos += std::f64::consts::LN_2 - log_logistic(clf.logit(x)?);
    }
    let mut neg = 0.0;
    for x in &batch.negatives {
        neg -= (-0.5 * logistic(clf.logit(x)?)).ln_1p();
    }
    Ok(pos / batch.positives.len() as f64 + neg / batch.negatives.len() as f64)
}

/// Gradient of [`contrastive_loss`], aligned with `clf.network().params()`.
pub fn loss_gradient(clf: &RiskClassifier, batch: &ClassifierBatch) -> Result<Vec<f64>> {
    batch.check()?;
    let net = &clf.net;
    let mut grad = vec![0.0; net.params().len()];
    let n_pos = batch.positives.len() as f64;
    for x in &batch.positives {
        let act = net.forward(x)?;
        let s = logistic(act.output[0]);
        net.backward(x, &act, &[-(1.0 - s) / n_pos], &mut grad);
    }
    let n_neg = batch.negatives.len() as f64;
    for x in &batch.negatives {
        let act = net.forward(x)?;
        let s = logistic(act.output[0]);
        let d = 0.5 * s * (1.0 - s) / (1.0 - 0.5 * s);
        net.backward(x, &act, &[d / n_neg], &mut grad);
    }
    Ok(grad)
}

/// Adam state for the classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    adam: Adam,
}

impl OptimizerState {
    pub fn new(clf: &RiskClassifier, learning_rate: f64) -> Self {
        Self {
            adam: Adam::new(learning_rate, clf.net.params().len()),
        }
    }

    pub fn learning_rate(&self) -> f64 {
        self.adam.learning_rate
    }

    pub fn steps(&self) -> u64 {
        self.adam.steps()
    }

    pub fn adam(&self) -> &Adam {
        &self.adam
    }

    pub(crate) fn adam_mut(&mut self) -> &mut Adam {
        &mut self.adam
    }
}

/// One optimizer step on the contrastive loss. The inputs are left untouched.
pub fn train_step(
    clf: &RiskClassifier,
    opt: &OptimizerState,
    batch: &ClassifierBatch,
) -> Result<(RiskClassifier, OptimizerState)> {
    let grad = loss_gradient(clf, batch)?;
    let mut next = clf.clone();
    let mut next_opt = opt.clone();
    let net = &clf.net;
    next_opt
        .adam
        .step(next.net.params_mut(), &grad, |i| net.param_name(i))?;
    if let Some(i) = next.net.params().iter().position(|p| !p.is_finite()) {
        return Err(Error::NonFinite {
            param: net.param_name(i),
        });
    }
    next.updates += 1;
    Ok((next, next_opt))
}
