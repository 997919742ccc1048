use serde::{Deserialize, Serialize};

use super::{check_state, Environment, StepResult};
use crate::cmdp::{Action, ActionSpace, CmdpSpec, State};
use crate::error::{Error, Result};

pub const UP: usize = 0;
pub const RIGHT: usize = 1;
pub const DOWN: usize = 2;
pub const LEFT: usize = 3;

/// Grid geometry and rewards. Cells are `(x, y)` with `y = 0` the bottom row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CliffGridConfig {
    pub width: usize,
    pub height: usize,
    pub start: (usize, usize),
    pub goal: (usize, usize),
    /// Cliff cells; `None` means the classic bottom row between start and goal.
    pub cliff: Option<Vec<(usize, usize)>>,
    pub step_reward: f64,
    pub goal_reward: f64,
    pub gamma: f64,
    pub max_episode_steps: usize,
}

impl Default for CliffGridConfig {
    fn default() -> Self {
        Self {
            width: 12,
            height: 4,
            start: (0, 0),
            goal: (11, 0),
            cliff: None,
            step_reward: -1.0,
            goal_reward: 100.0,
            gamma: 0.99,
            max_episode_steps: 100,
        }
    }
}

/// Maps grid states (normalized coordinates) to table indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridEncoding {
    pub width: usize,
    pub height: usize,
}

impl GridEncoding {
    pub fn num_states(&self) -> usize {
        self.width * self.height
    }

    fn norm(v: usize, extent: usize) -> f64 {
        if extent <= 1 {
            0.0
        } else {
            2.0 * v as f64 / (extent - 1) as f64 - 1.0
        }
    }

    fn denorm(v: f64, extent: usize) -> Option<usize> {
        if extent <= 1 {
            return Some(0);
        }
        let raw = ((v + 1.0) / 2.0 * (extent - 1) as f64).round();
        (raw >= 0.0 && raw <= (extent - 1) as f64).then_some(raw as usize)
    }

    pub fn encode(&self, cell: (usize, usize)) -> State {
        vec![Self::norm(cell.0, self.width), Self::norm(cell.1, self.height)]
    }

    pub fn decode(&self, state: &[f64]) -> Option<(usize, usize)> {
        if state.len() != 2 {
            return None;
        }
        Some((
            Self::denorm(state[0], self.width)?,
            Self::denorm(state[1], self.height)?,
        ))
    }

    pub fn index(&self, state: &[f64]) -> Option<usize> {
        self.decode(state).map(|(x, y)| y * self.width + x)
    }
}

#[derive(Debug, Clone)]
pub struct CliffGrid {
    config: CliffGridConfig,
    cliff: Vec<(usize, usize)>,
    spec: CmdpSpec,
    position: (usize, usize),
    done: bool,
}

impl CliffGrid {
    pub fn new(config: CliffGridConfig) -> Result<Self> {
        let in_grid = |c: (usize, usize)| c.0 < config.width && c.1 < config.height;
        if config.width == 0 || config.height == 0 {
            return Err(Error::config("environment.width", "grid must be non-empty"));
        }
        if !in_grid(config.start) {
            return Err(Error::config("environment.start", "start lies outside the grid"));
        }
        if !in_grid(config.goal) {
            return Err(Error::config("environment.goal", "goal lies outside the grid"));
        }
        if config.start == config.goal {
            return Err(Error::config("environment.goal", "goal coincides with start"));
        }
        if config.max_episode_steps == 0 {
            return Err(Error::config("environment.max_episode_steps", "must be positive"));
        }
        let cliff = match &config.cliff {
            Some(cells) => cells.clone(),
            None => {
                let (lo, hi) = if config.start.0 <= config.goal.0 {
                    (config.start.0, config.goal.0)
                } else {
                    (config.goal.0, config.start.0)
                };
                (lo + 1..hi).map(|x| (x, 0)).collect()
            }
        };
        if let Some(c) = cliff.iter().find(|c| !in_grid(**c)) {
            return Err(Error::config("environment.cliff", format!("cell {c:?} outside the grid")));
        }
        if cliff.contains(&config.start) || cliff.contains(&config.goal) {
            return Err(Error::config("environment.cliff", "start and goal must not be cliff cells"));
        }
        let reward_min = config.step_reward.min(config.goal_reward);
        let reward_max = config.step_reward.max(config.goal_reward);
        let spec = CmdpSpec::new(2, ActionSpace::Discrete(4), config.gamma, reward_min, reward_max, 0.0)?;
        let position = config.start;
        Ok(Self {
            config,
            cliff,
            spec,
            position,
            done: false,
        })
    }

    pub fn config(&self) -> &CliffGridConfig {
        &self.config
    }

    pub fn encoding(&self) -> GridEncoding {
        GridEncoding {
            width: self.config.width,
            height: self.config.height,
        }
    }

    pub fn is_cliff(&self, cell: (usize, usize)) -> bool {
        self.cliff.contains(&cell)
    }

    pub fn cliff_cells(&self) -> &[(usize, usize)] {
        &self.cliff
    }

    /// Cell reached by `action` from `cell`; moves into walls stay in place.
    pub fn neighbor(&self, cell: (usize, usize), action: usize) -> (usize, usize) {
        let (x, y) = cell;
        match action {
            UP => (x, (y + 1).min(self.config.height - 1)),
            RIGHT => ((x + 1).min(self.config.width - 1), y),
            DOWN => (x, y.saturating_sub(1)),
            _ => (x.saturating_sub(1), y),
        }
    }

    /// Exact geometric risk: 1 when the action enters a cliff cell.
    pub fn true_risk(&self, state: &[f64], action: &Action) -> Result<f64> {
        let cell = self
            .encoding()
            .decode(state)
            .ok_or_else(|| Error::domain(format!("not a grid state: {state:?}")))?;
        let a = self.discrete(action)?;
        Ok(if self.is_cliff(self.neighbor(cell, a)) { 1.0 } else { 0.0 })
    }

    fn discrete(&self, action: &Action) -> Result<usize> {
        match action {
            Action::Discrete(a) if *a < 4 => Ok(*a),
            other => Err(Error::domain(format!("invalid grid action {other:?}"))),
        }
    }
}

impl Environment for CliffGrid {
    fn spec(&self) -> &CmdpSpec {
        &self.spec
    }

    fn max_episode_steps(&self) -> usize {
        self.config.max_episode_steps
    }

    fn reset(&mut self, _seed: u64) -> State {
        self.position = self.config.start;
        self.done = false;
        self.encoding().encode(self.position)
    }

    fn step(&mut self, action: &Action) -> Result<StepResult> {
        let a = self.discrete(action)?;
        if self.done {
            return Err(Error::Usage("step called on a finished episode".into()));
        }
        let next = self.neighbor(self.position, a);
        self.position = next;
        let next_state = self.encoding().encode(next);
        let result = if self.is_cliff(next) {
            StepResult {
                next_state,
                reward: self.config.step_reward,
                cost: 1,
                terminal: true,
            }
        } else if next == self.config.goal {
            StepResult {
                next_state,
                reward: self.config.goal_reward,
                cost: 0,
                terminal: true,
            }
        } else {
            StepResult {
                next_state,
                reward: self.config.step_reward,
                cost: 0,
                terminal: false,
            }
        };
        self.done = result.terminal;
        Ok(result)
    }

    fn feature_vector(&self, state: &[f64], action: &Action) -> Result<Vec<f64>> {
        check_state(state, 2)?;
        let a = self.discrete(action)?;
        let mut f = Vec::with_capacity(6);
        f.extend_from_slice(state);
        f.extend((0..4).map(|i| if i == a { 1.0 } else { 0.0 }));
        Ok(f)
    }

    fn feature_dim(&self) -> usize {
        6
    }
}
