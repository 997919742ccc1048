use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_state, Environment, StepResult};
use crate::cmdp::{Action, ActionSpace, CmdpSpec, State};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LineHopperConfig {
    pub gravity: f64,
    /// Upward acceleration at full thrust.
    pub thrust_gain: f64,
    /// Falling below this height is a violation.
    pub min_height: f64,
    pub max_height: f64,
    pub max_speed: f64,
    pub start_height: f64,
    pub start_spread: f64,
    pub dt: f64,
    pub gamma: f64,
    pub max_episode_steps: usize,
}

impl Default for LineHopperConfig {
    fn default() -> Self {
        Self {
            gravity: 1.0,
            thrust_gain: 2.0,
            min_height: 0.3,
            max_height: 2.0,
            max_speed: 2.0,
            start_height: 1.0,
            start_spread: 0.2,
            dt: 0.1,
            gamma: 0.99,
            max_episode_steps: 200,
        }
    }
}

/// One-dimensional hopper: state `[height, vertical_velocity]`, action a
/// thrust in `[0, 1]`.
///
/// Forward progress is paid for every unit of thrust not spent on staying
/// up, so the reward is `1 - thrust`. Hovering needs `gravity / thrust_gain`.
#[derive(Debug, Clone)]
pub struct LineHopper {
    config: LineHopperConfig,
    spec: CmdpSpec,
    state: [f64; 2],
    done: bool,
}

impl LineHopper {
    pub fn new(config: LineHopperConfig) -> Result<Self> {
        if !(config.min_height < config.start_height - config.start_spread) {
            return Err(Error::config(
                "environment.start_height",
                "start heights must lie above min_height",
            ));
        }
        if !(config.start_height + config.start_spread <= config.max_height) {
            return Err(Error::config("environment.max_height", "start heights exceed max_height"));
        }
        if !(config.dt > 0.0 && config.max_speed > 0.0 && config.thrust_gain > 0.0) {
            return Err(Error::config("environment.dt", "dt, max_speed and thrust_gain must be positive"));
        }
        if config.max_episode_steps == 0 {
            return Err(Error::config("environment.max_episode_steps", "must be positive"));
        }
        let spec = CmdpSpec::new(
            2,
            ActionSpace::ContinuousBox {
                lower: vec![0.0],
                upper: vec![1.0],
            },
            config.gamma,
            0.0,
            1.0,
            0.0,
        )?;
        Ok(Self {
            config,
            spec,
            state: [0.0; 2],
            done: false,
        })
    }

    pub fn config(&self) -> &LineHopperConfig {
        &self.config
    }
}

impl Environment for LineHopper {
    fn spec(&self) -> &CmdpSpec {
        &self.spec
    }

    fn max_episode_steps(&self) -> usize {
        self.config.max_episode_steps
    }

    fn reset(&mut self, seed: u64) -> State {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = self.config.start_spread;
        let h = self.config.start_height + if s > 0.0 { rng.random_range(-s..=s) } else { 0.0 };
        self.state = [h, 0.0];
        self.done = false;
        self.state.to_vec()
    }

    fn step(&mut self, action: &Action) -> Result<StepResult> {
        if !self.spec.action_space().contains(action) {
            return Err(Error::domain(format!("thrust {action:?} outside [0, 1]")));
        }
        if self.done {
            return Err(Error::Usage("step called on a finished episode".into()));
        }
        let u = action.as_continuous().expect("checked above")[0];
        let c = &self.config;
        let [mut h, mut v] = self.state;
        v = (v + (c.thrust_gain * u - c.gravity) * c.dt).clamp(-c.max_speed, c.max_speed);
        h += v * c.dt;
        if h >= c.max_height {
            h = c.max_height;
            v = v.min(0.0);
        }
        let fell = h < c.min_height;
        self.state = [h, v];
        self.done = fell;
        Ok(StepResult {
            next_state: self.state.to_vec(),
            reward: 1.0 - u,
            cost: fell as u8,
            terminal: fell,
        })
    }

    fn feature_vector(&self, state: &[f64], action: &Action) -> Result<Vec<f64>> {
        check_state(state, 2)?;
        let u = action
            .as_continuous()
            .filter(|a| a.len() == 1)
            .ok_or_else(|| Error::domain(format!("invalid hopper action {action:?}")))?[0];
        let c = &self.config;
        Ok(vec![
            (2.0 * state[0] / c.max_height - 1.0).clamp(-1.0, 1.0),
            (state[1] / c.max_speed).clamp(-1.0, 1.0),
            (2.0 * u - 1.0).clamp(-1.0, 1.0),
        ])
    }

    fn feature_dim(&self) -> usize {
        3
    }
}
