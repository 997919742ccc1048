use rand::Rng;
use rand_distr::StandardNormal;

use crate::cmdp::{Action, ShapedTransition};
use crate::error::{Error, Result};
use crate::nn::{Adam, Mlp};

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActorCriticParams {
    pub hidden: usize,
    pub actor_learning_rate: f64,
    pub critic_learning_rate: f64,
    pub entropy_coef: f64,
    pub initial_log_std: f64,
}

/// Gaussian policy whose mean is squashed into the action box, with a state
/// value critic trained on one-step TD targets.
///
/// The actor network maps a state to `2 * action_dim` outputs: the raw means
/// followed by the raw log standard deviations. Mean `i` is
/// `center_i + half_width_i * tanh(raw_i)`. Samples are clipped to the box.
#[derive(Debug, Clone, PartialEq)]
pub struct ActorCritic {
    actor: Mlp,
    critic: Mlp,
    actor_opt: Adam,
    critic_opt: Adam,
    lower: Vec<f64>,
    upper: Vec<f64>,
    params: ActorCriticParams,
}

/// Mean and log standard deviation of the policy at one state.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyHead {
    pub mean: Vec<f64>,
    pub log_std: Vec<f64>,
}

impl ActorCritic {
    pub fn new<R: Rng + ?Sized>(
        state_dim: usize,
        lower: Vec<f64>,
        upper: Vec<f64>,
        params: ActorCriticParams,
        rng: &mut R,
    ) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() || lower.iter().zip(&upper).any(|(l, u)| !(l < u)) {
            return Err(Error::domain("actor-critic needs a non-degenerate action box"));
        }
        if params.hidden == 0 {
            return Err(Error::config("agent.hidden", "must be positive"));
        }
        for (key, lr) in [
            ("agent.actor_learning_rate", params.actor_learning_rate),
            ("agent.critic_learning_rate", params.critic_learning_rate),
        ] {
            if !(lr >= 0.0) || !lr.is_finite() {
                return Err(Error::config(key, "must be finite and non-negative"));
            }
        }
        if !(LOG_STD_MIN..=LOG_STD_MAX).contains(&params.initial_log_std) {
            return Err(Error::config(
                "agent.initial_log_std",
                format!("must lie in [{LOG_STD_MIN}, {LOG_STD_MAX}]"),
            ));
        }
        let d = lower.len();
        let mut actor = Mlp::random(state_dim, params.hidden, 2 * d, 0.1, rng);
        let critic = Mlp::random(state_dim, params.hidden, 1, 0.1, rng);
        let bias_start = actor.params().len() - 2 * d;
        for b in &mut actor.params_mut()[bias_start + d..] {
            *b = params.initial_log_std;
        }
        let actor_opt = Adam::new(params.actor_learning_rate, actor.params().len());
        let critic_opt = Adam::new(params.critic_learning_rate, critic.params().len());
        Ok(Self {
            actor,
            critic,
            actor_opt,
            critic_opt,
            lower,
            upper,
            params,
        })
    }

    pub fn actor(&self) -> &Mlp {
        &self.actor
    }
    pub fn critic(&self) -> &Mlp {
        &self.critic
    }
    pub fn params(&self) -> &ActorCriticParams {
        &self.params
    }

    pub(crate) fn restore(&mut self, actor: Vec<f64>, critic: Vec<f64>) -> Result<()> {
        if actor.len() != self.actor.params().len() || critic.len() != self.critic.params().len() {
            return Err(Error::domain("network sizes do not match the configuration"));
        }
        self.actor.params_mut().copy_from_slice(&actor);
        self.critic.params_mut().copy_from_slice(&critic);
        Ok(())
    }

    fn dim(&self) -> usize {
        self.lower.len()
    }

    fn half_width(&self, i: usize) -> f64 {
        0.5 * (self.upper[i] - self.lower[i])
    }

    fn center(&self, i: usize) -> f64 {
        0.5 * (self.upper[i] + self.lower[i])
    }

    pub fn head(&self, state: &[f64]) -> Result<PolicyHead> {
        let out = self.actor.forward(state)?.output;
        Ok(self.head_from(&out))
    }

    fn head_from(&self, out: &[f64]) -> PolicyHead {
        let d = self.dim();
        PolicyHead {
            mean: (0..d).map(|i| self.center(i) + self.half_width(i) * out[i].tanh()).collect(),
            log_std: out[d..].iter().map(|s| s.clamp(LOG_STD_MIN, LOG_STD_MAX)).collect(),
        }
    }

    pub fn value(&self, state: &[f64]) -> Result<f64> {
        Ok(self.critic.forward(state)?.output[0])
    }

    pub fn act<R: Rng + ?Sized>(&self, state: &[f64], explore: bool, rng: &mut R) -> Result<Action> {
        let head = self.head(state)?;
        let action = (0..self.dim())
            .map(|i| {
                let a = if explore {
                    let z: f64 = rng.sample(StandardNormal);
                    head.mean[i] + head.log_std[i].exp() * z
                } else {
                    head.mean[i]
                };
                a.clamp(self.lower[i], self.upper[i])
            })
            .collect();
        Ok(Action::Continuous(action))
    }

    /// One critic regression step and one advantage-weighted policy-gradient
    /// step, both averaged over the batch. Advantages use the critic before
    /// its update.
    pub fn update(&mut self, batch: &[&ShapedTransition], gamma: f64) -> Result<()> {
        if batch.is_empty() {
            return Ok(());
        }
        let d = self.dim();
        let n = batch.len() as f64;
        let mut critic_grad = vec![0.0; self.critic.params().len()];
        let mut actor_grad = vec![0.0; self.actor.params().len()];
        for entry in batch {
            let t = &entry.transition;
            let a = t
                .action
                .as_continuous()
                .filter(|a| a.len() == d)
                .ok_or_else(|| Error::domain(format!("invalid continuous action {:?}", t.action)))?;
            let critic_act = self.critic.forward(&t.state)?;
            let v = critic_act.output[0];
            let next_v = if t.terminal {
                0.0
            } else {
                self.critic.forward(&t.next_state)?.output[0]
            };
            let delta = entry.shaped_reward + gamma * next_v - v;
            self.critic.backward(&t.state, &critic_act, &[-delta / n], &mut critic_grad);

            let actor_act = self.actor.forward(&t.state)?;
            let raw = &actor_act.output;
            let mut d_out = vec![0.0; 2 * d];
            for i in 0..d {
                let th = raw[i].tanh();
                let mean = self.center(i) + self.half_width(i) * th;
                let log_std = raw[d + i].clamp(LOG_STD_MIN, LOG_STD_MAX);
                let var = (2.0 * log_std).exp();
                let diff = a[i] - mean;
                d_out[i] = -delta * diff / var * self.half_width(i) * (1.0 - th * th) / n;
                if raw[d + i] > LOG_STD_MIN && raw[d + i] < LOG_STD_MAX {
                    d_out[d + i] = (-delta * (diff * diff / var - 1.0) - self.params.entropy_coef) / n;
                }
            }
            self.actor.backward(&t.state, &actor_act, &d_out, &mut actor_grad);
        }
        let critic_names = |i| format!("critic.{}", self.critic.param_name(i));
        let actor_names = |i| format!("actor.{}", self.actor.param_name(i));
        if let Some(i) = critic_grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite { param: critic_names(i) });
        }
        if let Some(i) = actor_grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite { param: actor_names(i) });
        }
        self.critic_opt.step(self.critic.params_mut(), &critic_grad, |i| format!("critic[{i}]"))?;
        self.actor_opt.step(self.actor.params_mut(), &actor_grad, |i| format!("actor[{i}]"))?;
        Ok(())
    }
}
