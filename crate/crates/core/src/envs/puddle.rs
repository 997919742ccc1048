use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_state, Environment, StepResult};
use crate::cmdp::{Action, ActionSpace, CmdpSpec, State};
use crate::error::{Error, Result};

/// Point mass in the unit square with an unsafe disc ("puddle").
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PuddlePointConfig {
    pub puddle_center: [f64; 2],
    pub puddle_radius: f64,
    pub goal_center: [f64; 2],
    pub goal_radius: f64,
    pub start_center: [f64; 2],
    /// Half-width of the square the start position is drawn from.
    pub start_spread: f64,
    pub dt: f64,
    pub max_speed: f64,
    pub gamma: f64,
    pub max_episode_steps: usize,
}

impl Default for PuddlePointConfig {
    fn default() -> Self {
        Self {
            puddle_center: [0.5, 0.5],
            puddle_radius: 0.2,
            goal_center: [0.9, 0.9],
            goal_radius: 0.1,
            start_center: [0.1, 0.1],
            start_spread: 0.05,
            dt: 0.1,
            max_speed: 1.0,
            gamma: 0.99,
            max_episode_steps: 200,
        }
    }
}

/// State is `[x, y, vx, vy]`; actions are accelerations in `[-1, 1]^2`.
///
/// Reward is 1 inside the goal disc and `1 - dist(goal) / sqrt(2)` elsewhere,
/// so it always lies in `[0, 1]`. Entering the puddle costs 1 and ends the
/// episode.
#[derive(Debug, Clone)]
pub struct PuddlePoint {
    config: PuddlePointConfig,
    spec: CmdpSpec,
    state: [f64; 4],
    done: bool,
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

impl PuddlePoint {
    pub fn new(config: PuddlePointConfig) -> Result<Self> {
        if !(config.dt > 0.0) || !(config.max_speed > 0.0) {
            return Err(Error::config("environment.dt", "dt and max_speed must be positive"));
        }
        if config.max_episode_steps == 0 {
            return Err(Error::config("environment.max_episode_steps", "must be positive"));
        }
        let c = config.start_center;
        let s = config.start_spread;
        // The start square must be clear of the puddle.
        let closest = [
            config.puddle_center[0].clamp(c[0] - s, c[0] + s),
            config.puddle_center[1].clamp(c[1] - s, c[1] + s),
        ];
        if dist(closest, config.puddle_center) <= config.puddle_radius {
            return Err(Error::config("environment.start_center", "start region overlaps the puddle"));
        }
        let spec = CmdpSpec::new(
            4,
            ActionSpace::ContinuousBox {
                lower: vec![-1.0, -1.0],
                upper: vec![1.0, 1.0],
            },
            config.gamma,
            0.0,
            1.0,
            0.0,
        )?;
        Ok(Self {
            config,
            spec,
            state: [0.0; 4],
            done: false,
        })
    }

    pub fn config(&self) -> &PuddlePointConfig {
        &self.config
    }

    pub fn in_puddle(&self, pos: [f64; 2]) -> bool {
        dist(pos, self.config.puddle_center) < self.config.puddle_radius
    }

    fn reward_at(&self, pos: [f64; 2]) -> f64 {
        let d = dist(pos, self.config.goal_center);
        if d <= self.config.goal_radius {
            1.0
        } else {
            (1.0 - d / std::f64::consts::SQRT_2).clamp(0.0, 1.0)
        }
    }
}

impl Environment for PuddlePoint {
    fn spec(&self) -> &CmdpSpec {
        &self.spec
    }

    fn max_episode_steps(&self) -> usize {
        self.config.max_episode_steps
    }

    fn reset(&mut self, seed: u64) -> State {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = self.config.start_spread;
        let c = self.config.start_center;
        let x = (c[0] + rng.random_range(-s..=s)).clamp(0.0, 1.0);
        let y = (c[1] + rng.random_range(-s..=s)).clamp(0.0, 1.0);
        self.state = [x, y, 0.0, 0.0];
        self.done = false;
        self.state.to_vec()
    }

    fn step(&mut self, action: &Action) -> Result<StepResult> {
        if !self.spec.action_space().contains(action) {
            return Err(Error::domain(format!("action {action:?} outside [-1, 1]^2")));
        }
        if self.done {
            return Err(Error::Usage("step called on a finished episode".into()));
        }
        let acc = action.as_continuous().expect("checked above");
        let dt = self.config.dt;
        let vmax = self.config.max_speed;
        let [mut x, mut y, mut vx, mut vy] = self.state;
        x += vx * dt;
        y += vy * dt;
        vx = (vx + acc[0] * dt).clamp(-vmax, vmax);
        vy = (vy + acc[1] * dt).clamp(-vmax, vmax);
        if !(0.0..=1.0).contains(&x) {
            x = x.clamp(0.0, 1.0);
            vx = 0.0;
        }
        if !(0.0..=1.0).contains(&y) {
            y = y.clamp(0.0, 1.0);
            vy = 0.0;
        }
        self.state = [x, y, vx, vy];
        let fell = self.in_puddle([x, y]);
        self.done = fell;
        Ok(StepResult {
            next_state: self.state.to_vec(),
            reward: self.reward_at([x, y]),
            cost: fell as u8,
            terminal: fell,
        })
    }

    fn feature_vector(&self, state: &[f64], action: &Action) -> Result<Vec<f64>> {
        check_state(state, 4)?;
        let a = action
            .as_continuous()
            .filter(|a| a.len() == 2)
            .ok_or_else(|| Error::domain(format!("invalid puddle action {action:?}")))?;
        let vmax = self.config.max_speed;
        Ok(vec![
            (2.0 * state[0] - 1.0).clamp(-1.0, 1.0),
            (2.0 * state[1] - 1.0).clamp(-1.0, 1.0),
            (state[2] / vmax).clamp(-1.0, 1.0),
            (state[3] / vmax).clamp(-1.0, 1.0),
            a[0].clamp(-1.0, 1.0),
            a[1].clamp(-1.0, 1.0),
        ])
    }

    fn feature_dim(&self) -> usize {
        6
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reset_is_deterministic_and_safe() {
        let mut env = PuddlePoint::new(PuddlePointConfig::default()).unwrap();
        let a = env.reset(7);
        let b = env.reset(7);
        assert_eq!(a, b);
        for seed in 0..500 {
            let s = env.reset(seed);
            assert!(!env.in_puddle([s[0], s[1]]));
        }
    }

    #[test]
    fn zero_action_far_from_puddle_is_safe() {
        let mut env = PuddlePoint::new(PuddlePointConfig::default()).unwrap();
        env.reset(1);
        let s = env.step(&Action::Continuous(vec![0.0, 0.0])).unwrap();
        assert_eq!(s.cost, 0);
        assert!(!s.terminal);
    }

    #[test]
    fn driving_into_puddle_violates() {
        let mut env = PuddlePoint::new(PuddlePointConfig::default()).unwrap();
        env.reset(1);
        let mut hit = false;
        for _ in 0..200 {
            let s = env.step(&Action::Continuous(vec![1.0, 1.0])).unwrap();
            if s.terminal {
                hit = s.cost == 1;
                break;
            }
        }
        assert!(hit);
    }

    #[test]
    fn feature_layout_and_bounds() {
        let env = PuddlePoint::new(PuddlePointConfig::default()).unwrap();
        let f = env
            .feature_vector(&[0.5, 0.25, -1.0, 0.5], &Action::Continuous(vec![0.3, -0.2]))
            .unwrap();
        assert_eq!(f, vec![0.0, -0.5, -1.0, 0.5, 0.3, -0.2]);
        assert!(env.feature_vector(&[0.0; 3], &Action::Continuous(vec![0.0, 0.0])).is_err());
    }

    #[test]
    fn out_of_box_action_rejected() {
        let mut env = PuddlePoint::new(PuddlePointConfig::default()).unwrap();
        env.reset(0);
        assert!(env.step(&Action::Continuous(vec![1.5, 0.0])).is_err());
        assert!(env.step(&Action::Discrete(0)).is_err());
    }
}
