//! Policy learners that consume shaped rewards, and the baseline shaping
//! strategies used for comparison.

mod actor_critic;
mod tabular;

pub use actor_critic::{ActorCritic, ActorCriticParams, PolicyHead, LOG_STD_MAX, LOG_STD_MIN};
pub use tabular::{EpsilonSchedule, TabularQ};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cmdp::{Action, ActionSpace, ShapedTransition, Transition};
use crate::envs::{AnyEnv, Environment};
use crate::error::{Error, Result};
use crate::shaping::shape_reward;

/// Common interface of the learners.
///
/// `act` with `explore = false` is deterministic given the parameters and
/// never draws from `rng`.
pub trait PolicyLearner {
    fn act<R: Rng + ?Sized>(&self, state: &[f64], explore: bool, rng: &mut R) -> Result<Action>;

    fn update(&mut self, batch: &[&ShapedTransition], gamma: f64) -> Result<()>;

    /// Advances per-episode schedules such as exploration decay.
    fn end_episode(&mut self) {}
}

impl PolicyLearner for TabularQ {
    fn act<R: Rng + ?Sized>(&self, state: &[f64], explore: bool, rng: &mut R) -> Result<Action> {
        TabularQ::act(self, state, explore, rng)
    }
    fn update(&mut self, batch: &[&ShapedTransition], gamma: f64) -> Result<()> {
        TabularQ::update(self, batch, gamma)
    }
    fn end_episode(&mut self) {
        TabularQ::end_episode(self)
    }
}

impl PolicyLearner for ActorCritic {
    fn act<R: Rng + ?Sized>(&self, state: &[f64], explore: bool, rng: &mut R) -> Result<Action> {
        ActorCritic::act(self, state, explore, rng)
    }
    fn update(&mut self, batch: &[&ShapedTransition], gamma: f64) -> Result<()> {
        ActorCritic::update(self, batch, gamma)
    }
}

/// Uniformly random actions; with `explore = false` it returns the first
/// action (discrete) or the box center (continuous). Updates are ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomPolicy {
    space: ActionSpace,
}

impl RandomPolicy {
    pub fn new(space: ActionSpace) -> Self {
        Self { space }
    }
}

impl PolicyLearner for RandomPolicy {
    fn act<R: Rng + ?Sized>(&self, _state: &[f64], explore: bool, rng: &mut R) -> Result<Action> {
        Ok(match (&self.space, explore) {
            (ActionSpace::Discrete(n), true) => Action::Discrete(rng.random_range(0..*n)),
            (ActionSpace::Discrete(_), false) => Action::Discrete(0),
            (ActionSpace::ContinuousBox { lower, upper }, true) => Action::Continuous(
                lower.iter().zip(upper).map(|(l, u)| rng.random_range(*l..=*u)).collect(),
            ),
            (ActionSpace::ContinuousBox { lower, upper }, false) => {
                Action::Continuous(lower.iter().zip(upper).map(|(l, u)| 0.5 * (l + u)).collect())
            }
        })
    }

    fn update(&mut self, _batch: &[&ShapedTransition], _gamma: f64) -> Result<()> {
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LearnerKind {
    TabularQ,
    ActorCritic,
    Random,
}

impl LearnerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LearnerKind::TabularQ => "tabular-q",
            LearnerKind::ActorCritic => "actor-critic",
            LearnerKind::Random => "random",
        }
    }
}

/// The `[agent]` section of a run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentConfig {
    pub learner: LearnerKind,
    /// Tabular step size.
    pub alpha: f64,
    /// Initial table entry; defaults to the environment's largest reward.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_value: Option<f64>,
    pub epsilon_start: f64,
    pub epsilon_min: f64,
    /// Multiplied into epsilon after every episode.
    pub epsilon_decay: f64,
    pub hidden: usize,
    pub actor_learning_rate: f64,
    pub critic_learning_rate: f64,
    pub entropy_coef: f64,
    pub initial_log_std: f64,
    /// Minibatches drawn from replay after each episode.
    pub updates_per_episode: usize,
    pub batch_size: usize,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            learner: LearnerKind::TabularQ,
            alpha: 0.1,
            initial_value: None,
            epsilon_start: 1.0,
            epsilon_min: 0.05,
            epsilon_decay: 0.998,
            hidden: 64,
            actor_learning_rate: 3e-4,
            critic_learning_rate: 1e-3,
            entropy_coef: 1e-3,
            initial_log_std: -0.5,
            updates_per_episode: 4,
            batch_size: 64,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.updates_per_episode == 0 {
            return Err(Error::config("agent.updates_per_episode", "must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("agent.batch_size", "must be at least 1"));
        }
        self.schedule().validate()
    }

    pub fn schedule(&self) -> EpsilonSchedule {
        EpsilonSchedule {
            start: self.epsilon_start,
            min: self.epsilon_min,
            decay: self.epsilon_decay,
        }
    }

    pub fn actor_critic_params(&self) -> ActorCriticParams {
        ActorCriticParams {
            hidden: self.hidden,
            actor_learning_rate: self.actor_learning_rate,
            critic_learning_rate: self.critic_learning_rate,
            entropy_coef: self.entropy_coef,
            initial_log_std: self.initial_log_std,
        }
    }
}

/// Closed set of learners, selected by configuration.
#[derive(Debug, Clone, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum AnyLearner {
    Tabular(TabularQ),
    ActorCritic(ActorCritic),
    Random(RandomPolicy),
}

impl AnyLearner {
    pub fn build<R: Rng + ?Sized>(cfg: &AgentConfig, env: &AnyEnv, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let spec = env.spec();
        match (cfg.learner, spec.action_space()) {
            (LearnerKind::Random, space) => Ok(AnyLearner::Random(RandomPolicy::new(space.clone()))),
            (LearnerKind::TabularQ, ActionSpace::Discrete(n)) => {
                let AnyEnv::Cliff(grid) = env else {
                    return Err(Error::config("agent.learner", "tabular-q needs a grid environment"));
                };
                let q0 = cfg.initial_value.unwrap_or(spec.reward_max());
                Ok(AnyLearner::Tabular(TabularQ::with_initial_value(
                    grid.encoding(),
                    *n,
                    cfg.alpha,
                    cfg.schedule(),
                    q0,
                )?))
            }
            (LearnerKind::ActorCritic, ActionSpace::ContinuousBox { lower, upper }) => Ok(AnyLearner::ActorCritic(
                ActorCritic::new(spec.state_dim(), lower.clone(), upper.clone(), cfg.actor_critic_params(), rng)?,
            )),
            (kind, _) => Err(Error::config(
                "agent.learner",
                format!("{} does not support the action space of {}", kind.as_str(), env.name()),
            )),
        }
    }

    pub fn kind(&self) -> LearnerKind {
        match self {
            AnyLearner::Tabular(_) => LearnerKind::TabularQ,
            AnyLearner::ActorCritic(_) => LearnerKind::ActorCritic,
            AnyLearner::Random(_) => LearnerKind::Random,
        }
    }
}

impl PolicyLearner for AnyLearner {
    fn act<R: Rng + ?Sized>(&self, state: &[f64], explore: bool, rng: &mut R) -> Result<Action> {
        match self {
            AnyLearner::Tabular(l) => l.act(state, explore, rng),
            AnyLearner::ActorCritic(l) => l.act(state, explore, rng),
            AnyLearner::Random(l) => l.act(state, explore, rng),
        }
    }

    fn update(&mut self, batch: &[&ShapedTransition], gamma: f64) -> Result<()> {
        match self {
            AnyLearner::Tabular(l) => PolicyLearner::update(l, batch, gamma),
            AnyLearner::ActorCritic(l) => PolicyLearner::update(l, batch, gamma),
            AnyLearner::Random(l) => l.update(batch, gamma),
        }
    }

    fn end_episode(&mut self) {
        if let AnyLearner::Tabular(l) = self {
            l.end_episode();
        }
    }
}

/// Reward shaping used by the comparison runs. None of them truncates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BaselineStrategy {
    Unshaped,
    FixedPenalty { lambda: f64 },
    /// Dual ascent on the discounted risk cost with threshold 0:
    /// `lambda <- max(0, lambda + step_size * J_c)` after every episode.
    AdditiveLagrangian { lambda: f64, step_size: f64 },
}

impl BaselineStrategy {
    pub fn lambda(&self) -> f64 {
        match *self {
            BaselineStrategy::Unshaped => 0.0,
            BaselineStrategy::FixedPenalty { lambda } | BaselineStrategy::AdditiveLagrangian { lambda, .. } => lambda,
        }
    }

    /// Applies the deferred multiplier update given the episode's discounted
    /// risk cost.
    pub fn end_episode(&mut self, discounted_risk_cost: f64) {
        if let BaselineStrategy::AdditiveLagrangian { lambda, step_size } = self {
            *lambda = (*lambda + *step_size * discounted_risk_cost).max(0.0);
        }
    }
}

pub fn apply_baseline(strategy: &BaselineStrategy, transition: Transition, risk_p: f64) -> Result<ShapedTransition> {
    let shaped_reward = match strategy {
        BaselineStrategy::Unshaped => transition.reward,
        _ => shape_reward(transition.reward, risk_p, strategy.lambda())?,
    };
    Ok(ShapedTransition {
        transition,
        shaped_reward,
    })
}
