//! Deterministic desk-scale environments with binary safety costs.
//!
//! Every environment follows the same contract: a step that enters an unsafe
//! state has cost 1 and ends the episode; all other steps have cost 0. The
//! only randomness is the seeded initial state.

mod cliff;
mod hopper;
mod puddle;

pub use cliff::{CliffGrid, CliffGridConfig, GridEncoding, DOWN, LEFT, RIGHT, UP};
pub use hopper::{LineHopper, LineHopperConfig};
pub use puddle::{PuddlePoint, PuddlePointConfig};

use serde::{Deserialize, Serialize};

use crate::cmdp::{Action, CmdpSpec, State};
use crate::error::{Error, Result};

/// Result of a single environment step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub next_state: State,
    pub reward: f64,
    pub cost: u8,
    pub terminal: bool,
}

pub trait Environment {
    fn spec(&self) -> &CmdpSpec;

    fn max_episode_steps(&self) -> usize;

    /// Starts a new episode. The initial state depends only on `seed` and is
    /// never unsafe.
    fn reset(&mut self, seed: u64) -> State;

    /// Advances the current episode by one action.
    fn step(&mut self, action: &Action) -> Result<StepResult>;

    /// Classifier input for a state-action pair; components lie in [-1, 1].
    fn feature_vector(&self, state: &[f64], action: &Action) -> Result<Vec<f64>>;

    fn feature_dim(&self) -> usize;
}

/// Closed set of the built-in environments, used by config-driven runs.
#[derive(Debug, Clone)]
pub enum AnyEnv {
    Cliff(CliffGrid),
    Puddle(PuddlePoint),
    Hopper(LineHopper),
}

impl AnyEnv {
    pub fn name(&self) -> &'static str {
        match self {
            AnyEnv::Cliff(_) => "cliff-grid",
            AnyEnv::Puddle(_) => "puddle-point",
            AnyEnv::Hopper(_) => "line-hopper",
        }
    }

    fn inner(&self) -> &dyn Environment {
        match self {
            AnyEnv::Cliff(e) => e,
            AnyEnv::Puddle(e) => e,
            AnyEnv::Hopper(e) => e,
        }
    }

    fn inner_mut(&mut self) -> &mut dyn Environment {
        match self {
            AnyEnv::Cliff(e) => e,
            AnyEnv::Puddle(e) => e,
            AnyEnv::Hopper(e) => e,
        }
    }
}

impl Environment for AnyEnv {
    fn spec(&self) -> &CmdpSpec {
        self.inner().spec()
    }
    fn max_episode_steps(&self) -> usize {
        self.inner().max_episode_steps()
    }
    fn reset(&mut self, seed: u64) -> State {
        self.inner_mut().reset(seed)
    }
    fn step(&mut self, action: &Action) -> Result<StepResult> {
        self.inner_mut().step(action)
    }
    fn feature_vector(&self, state: &[f64], action: &Action) -> Result<Vec<f64>> {
        self.inner().feature_vector(state, action)
    }
    fn feature_dim(&self) -> usize {
        self.inner().feature_dim()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnvId {
    CliffGrid,
    PuddlePoint,
    LineHopper,
}

/// The `[environment]` section of a run configuration. Only the table that
/// matches `id` is used; the others keep their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvironmentConfig {
    pub id: EnvId,
    pub cost_threshold: f64,
    pub cliff: CliffGridConfig,
    pub puddle: PuddlePointConfig,
    pub hopper: LineHopperConfig,
}

impl Default for EnvironmentConfig {
    fn default() -> Self {
        Self {
            id: EnvId::CliffGrid,
            cost_threshold: 0.0,
            cliff: CliffGridConfig::default(),
            puddle: PuddlePointConfig::default(),
            hopper: LineHopperConfig::default(),
        }
    }
}

impl EnvironmentConfig {
    pub fn build(&self) -> Result<AnyEnv> {
        if self.cost_threshold != 0.0 {
            return Err(Error::config(
                "environment.cost_threshold",
                format!("cost_threshold must be 0, got {}", self.cost_threshold),
            ));
        }
        Ok(match self.id {
            EnvId::CliffGrid => AnyEnv::Cliff(CliffGrid::new(self.cliff.clone())?),
            EnvId::PuddlePoint => AnyEnv::Puddle(PuddlePoint::new(self.puddle.clone())?),
            EnvId::LineHopper => AnyEnv::Hopper(LineHopper::new(self.hopper.clone())?),
        })
    }
}

pub(crate) fn check_state(state: &[f64], dim: usize) -> Result<()> {
    if state.len() != dim || state.iter().any(|x| !x.is_finite()) {
        return Err(Error::domain(format!(
            "state must be {dim} finite values, got {state:?}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn all_envs() -> Vec<AnyEnv> {
        vec![
            AnyEnv::Cliff(CliffGrid::new(CliffGridConfig::default()).unwrap()),
            AnyEnv::Puddle(PuddlePoint::new(PuddlePointConfig::default()).unwrap()),
            AnyEnv::Hopper(LineHopper::new(LineHopperConfig::default()).unwrap()),
        ]
    }

    fn random_action(env: &AnyEnv, rng: &mut ChaCha8Rng) -> Action {
        match env.spec().action_space() {
            crate::cmdp::ActionSpace::Discrete(n) => Action::Discrete(rng.random_range(0..*n)),
            crate::cmdp::ActionSpace::ContinuousBox { lower, upper } => Action::Continuous(
                lower
                    .iter()
                    .zip(upper)
                    .map(|(lo, hi)| rng.random_range(*lo..=*hi))
                    .collect(),
            ),
        }
    }

    fn rollout(env: &mut AnyEnv, seed: u64, actions_seed: u64) -> Vec<StepResult> {
        let mut rng = ChaCha8Rng::seed_from_u64(actions_seed);
        env.reset(seed);
        let mut out = Vec::new();
        for _ in 0..env.max_episode_steps() {
            let a = random_action(env, &mut rng);
            let s = env.step(&a).unwrap();
            let done = s.terminal;
            out.push(s);
            if done {
                break;
            }
        }
        out
    }

    #[test]
    fn at_most_one_cost_and_it_is_last() {
        for mut env in all_envs() {
            for seed in 0..200 {
                let steps = rollout(&mut env, seed, seed + 1000);
                let costs: usize = steps.iter().map(|s| s.cost as usize).sum();
                assert!(costs <= 1, "{}", env.name());
                if costs == 1 {
                    assert_eq!(steps.last().unwrap().cost, 1);
                    assert!(steps.last().unwrap().terminal);
                }
            }
        }
    }

    #[test]
    fn equal_seeds_give_bit_identical_rollouts() {
        for mut env in all_envs() {
            let a = rollout(&mut env, 7, 11);
            let b = rollout(&mut env, 7, 11);
            assert_eq!(a, b);
        }
    }

    #[test]
    fn rewards_stay_within_declared_bounds() {
        for mut env in all_envs() {
            let (lo, hi) = (env.spec().reward_min(), env.spec().reward_max());
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            let mut steps = 0usize;
            let mut episode = 0u64;
            'outer: loop {
                env.reset(episode);
                episode += 1;
                for _ in 0..env.max_episode_steps() {
                    let a = random_action(&env, &mut rng);
                    let s = env.step(&a).unwrap();
                    assert!(s.reward >= lo && s.reward <= hi, "{} reward {}", env.name(), s.reward);
                    assert!(s.cost <= 1);
                    assert!(s.cost == 0 || s.terminal);
                    steps += 1;
                    if steps >= 100_000 {
                        break 'outer;
                    }
                    if s.terminal {
                        break;
                    }
                }
            }
        }
    }

    #[test]
    fn features_are_normalized_and_deterministic() {
        for mut env in all_envs() {
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            let mut state = env.reset(3);
            for _ in 0..50 {
                let a = random_action(&env, &mut rng);
                let f = env.feature_vector(&state, &a).unwrap();
                assert_eq!(f.len(), env.feature_dim());
                assert_eq!(f, env.feature_vector(&state, &a).unwrap());
                assert!(f.iter().all(|x| (-1.0..=1.0).contains(x)), "{} {f:?}", env.name());
                let s = env.step(&a).unwrap();
                if s.terminal {
                    state = env.reset(4);
                } else {
                    state = s.next_state;
                }
            }
        }
    }

    #[test]
    fn step_after_terminal_is_usage_error() {
        let mut env = CliffGrid::new(CliffGridConfig::default()).unwrap();
        env.reset(0);
        let s = env.step(&Action::Discrete(RIGHT)).unwrap();
        assert!(s.terminal);
        assert!(matches!(
            env.step(&Action::Discrete(UP)),
            Err(crate::error::Error::Usage(_))
        ));
    }
}
