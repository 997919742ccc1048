use rand::Rng;

use crate::cmdp::{Action, ShapedTransition};
use crate::envs::GridEncoding;
use crate::error::{Error, Result};

/// Epsilon-greedy exploration with multiplicative per-episode decay.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub min: f64,
    pub decay: f64,
}

impl EpsilonSchedule {
    pub fn constant(epsilon: f64) -> Self {
        Self {
            start: epsilon,
            min: epsilon,
            decay: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if unit(self.start) && unit(self.min) && unit(self.decay) && self.min <= self.start {
            Ok(())
        } else {
            Err(Error::config(
                "agent.epsilon_start",
                "epsilon_start, epsilon_min and epsilon_decay must lie in [0, 1] with min <= start",
            ))
        }
    }
}

/// Tabular Q-learning over a grid of states.
///
/// Every entry starts at the same, usually optimistic, value. While exploring,
/// the non-random choice is the argmax over all entries, so untried actions
/// get tried. Greedy evaluation and TD bootstrapping only consider actions
/// that have been updated at least once in that state (all actions when none
/// has, with the state then valued at 0). Ties go to the lowest action index.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularQ {
    encoding: GridEncoding,
    n_actions: usize,
    q: Vec<f64>,
    visits: Vec<u64>,
    alpha: f64,
    schedule: EpsilonSchedule,
    epsilon: f64,
}

impl TabularQ {
    pub fn new(encoding: GridEncoding, n_actions: usize, alpha: f64, schedule: EpsilonSchedule) -> Result<Self> {
        Self::with_initial_value(encoding, n_actions, alpha, schedule, 0.0)
    }

    pub fn with_initial_value(
        encoding: GridEncoding,
        n_actions: usize,
        alpha: f64,
        schedule: EpsilonSchedule,
        initial_value: f64,
    ) -> Result<Self> {
        if n_actions == 0 {
            return Err(Error::domain("tabular learner needs at least one action"));
        }
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::config("agent.alpha", format!("alpha must lie in [0, 1], got {alpha}")));
        }
        schedule.validate()?;
        if !initial_value.is_finite() {
            return Err(Error::config("agent.initial_value", "must be finite"));
        }
        let n = encoding.num_states() * n_actions;
        Ok(Self {
            encoding,
            n_actions,
            q: vec![initial_value; n],
            visits: vec![0; n],
            alpha,
            schedule,
            epsilon: schedule.start,
        })
    }

    pub fn encoding(&self) -> GridEncoding {
        self.encoding
    }
    pub fn n_actions(&self) -> usize {
        self.n_actions
    }
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn table(&self) -> &[f64] {
        &self.q
    }
    pub fn visits(&self) -> &[u64] {
        &self.visits
    }

    pub(crate) fn restore(&mut self, q: Vec<f64>, visits: Vec<u64>, epsilon: f64) -> Result<()> {
        if q.len() != self.q.len() || visits.len() != self.visits.len() {
            return Err(Error::domain("table size does not match the grid"));
        }
        if q.iter().any(|v| !v.is_finite()) || !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::domain("table entries must be finite and epsilon in [0, 1]"));
        }
        self.q = q;
        self.visits = visits;
        self.epsilon = epsilon;
        Ok(())
    }

    fn state_index(&self, state: &[f64]) -> Result<usize> {
        self.encoding
            .index(state)
            .ok_or_else(|| Error::domain(format!("state {state:?} is not a grid cell")))
    }

    pub fn value(&self, state: &[f64], action: usize) -> Result<f64> {
        Ok(self.q[self.state_index(state)? * self.n_actions + action])
    }

    /// Sets a table entry and marks it visited; meant for tests and scripted setups.
    pub fn set_value(&mut self, state: &[f64], action: usize, value: f64) -> Result<()> {
        let i = self.state_index(state)? * self.n_actions + action;
        self.q[i] = value;
        self.visits[i] = self.visits[i].max(1);
        Ok(())
    }

    /// Best action over all entries, or over experienced entries only when
    /// `experienced` is set and the state has any. An unexperienced state is
    /// then valued at 0.
    fn greedy_index(&self, s: usize, experienced: bool) -> (usize, f64) {
        let row = s * self.n_actions;
        let restrict = experienced && self.visits[row..row + self.n_actions].iter().any(|&v| v > 0);
        let mut best: Option<(usize, f64)> = None;
        for a in 0..self.n_actions {
            if restrict && self.visits[row + a] == 0 {
                continue;
            }
            let v = self.q[row + a];
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((a, v));
            }
        }
        let (a, v) = best.expect("at least one action");
        (a, if experienced && !restrict { 0.0 } else { v })
    }

    pub fn act<R: Rng + ?Sized>(&self, state: &[f64], explore: bool, rng: &mut R) -> Result<Action> {
        let s = self.state_index(state)?;
        if explore && self.epsilon > 0.0 && rng.random::<f64>() < self.epsilon {
            return Ok(Action::Discrete(rng.random_range(0..self.n_actions)));
        }
        Ok(Action::Discrete(self.greedy_index(s, !explore).0))
    }

    /// One-step TD updates applied in batch order.
    pub fn update(&mut self, batch: &[&ShapedTransition], gamma: f64) -> Result<()> {
        for entry in batch {
            let t = &entry.transition;
            let s = self.state_index(&t.state)?;
            let a = t
                .action
                .as_discrete()
                .filter(|&a| a < self.n_actions)
                .ok_or_else(|| Error::domain(format!("invalid discrete action {:?}", t.action)))?;
            let bootstrap = if t.terminal {
                0.0
            } else {
                gamma * self.greedy_index(self.state_index(&t.next_state)?, true).1
            };
            let i = s * self.n_actions + a;
            let target = entry.shaped_reward + bootstrap;
            let updated = self.q[i] + self.alpha * (target - self.q[i]);
            if !updated.is_finite() {
                return Err(Error::NonFinite {
                    param: format!("q[{s},{a}]"),
                });
            }
            self.q[i] = updated;
            self.visits[i] += 1;
        }
        Ok(())
    }

    pub fn end_episode(&mut self) {
        self.epsilon = (self.epsilon * self.schedule.decay).max(self.schedule.min);
    }
}
