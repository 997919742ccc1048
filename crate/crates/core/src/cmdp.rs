//! Shared domain types: the constrained MDP record, transitions, trajectories,
//! replay storage, and the per-trajectory return/cost metrics.

use std::collections::VecDeque;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Observations are fixed-length real vectors chosen by each environment.
pub type State = Vec<f64>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ActionSpace {
    Discrete(usize),
    ContinuousBox { lower: Vec<f64>, upper: Vec<f64> },
}

impl ActionSpace {
    /// Width of the action part of a feature vector.
    pub fn feature_width(&self) -> usize {
        match self {
            ActionSpace::Discrete(n) => *n,
            ActionSpace::ContinuousBox { lower, .. } => lower.len(),
        }
    }

    pub fn contains(&self, action: &Action) -> bool {
        match (self, action) {
            (ActionSpace::Discrete(n), Action::Discrete(a)) => a < n,
            (ActionSpace::ContinuousBox { lower, upper }, Action::Continuous(v)) => {
                v.len() == lower.len()
                    && v.iter()
                        .zip(lower.iter().zip(upper))
                        .all(|(x, (lo, hi))| x.is_finite() && *x >= *lo && *x <= *hi)
            }
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Action {
    Discrete(usize),
    Continuous(Vec<f64>),
}

impl Action {
    pub fn as_discrete(&self) -> Option<usize> {
        match self {
            Action::Discrete(a) => Some(*a),
            Action::Continuous(_) => None,
        }
    }

    pub fn as_continuous(&self) -> Option<&[f64]> {
        match self {
            Action::Discrete(_) => None,
            Action::Continuous(v) => Some(v),
        }
    }
}

/// The constrained MDP record. The cost threshold is always zero: any unsafe
/// state is a violation.
#[derive(Debug, Clone, PartialEq)]
pub struct CmdpSpec {
    state_dim: usize,
    action_space: ActionSpace,
    gamma: f64,
    reward_min: f64,
    reward_max: f64,
    cost_threshold: f64,
}

impl CmdpSpec {
    pub fn new(
        state_dim: usize,
        action_space: ActionSpace,
        gamma: f64,
        reward_min: f64,
        reward_max: f64,
        cost_threshold: f64,
    ) -> Result<Self> {
        if state_dim == 0 {
            return Err(Error::domain("state_dim must be positive"));
        }
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::domain(format!("gamma must lie in (0, 1), got {gamma}")));
        }
        if !(reward_min.is_finite() && reward_max.is_finite() && reward_min <= reward_max) {
            return Err(Error::domain(format!(
                "reward bounds must be finite with reward_min <= reward_max, got [{reward_min}, {reward_max}]"
            )));
        }
        if cost_threshold != 0.0 {
            return Err(Error::config(
                "cost_threshold",
                format!("cost_threshold must be 0, got {cost_threshold}"),
            ));
        }
        match &action_space {
            ActionSpace::Discrete(0) => return Err(Error::domain("discrete action space is empty")),
            ActionSpace::ContinuousBox { lower, upper } => {
                if lower.is_empty() || lower.len() != upper.len() {
                    return Err(Error::domain("continuous action bounds must be non-empty and paired"));
                }
                if lower.iter().zip(upper).any(|(lo, hi)| !(lo < hi)) {
                    return Err(Error::domain("continuous action bounds need lower < upper"));
                }
            }
            _ => {}
        }
        Ok(Self {
            state_dim,
            action_space,
            gamma,
            reward_min,
            reward_max,
            cost_threshold,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }
    pub fn action_space(&self) -> &ActionSpace {
        &self.action_space
    }
    pub fn gamma(&self) -> f64 {
        self.gamma
    }
    pub fn reward_min(&self) -> f64 {
        self.reward_min
    }
    pub fn reward_max(&self) -> f64 {
        self.reward_max
    }
    pub fn cost_threshold(&self) -> f64 {
        self.cost_threshold
    }
}

/// One environment step.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: State,
    pub action: Action,
    pub reward: f64,
    pub cost: u8,
    pub next_state: State,
    pub terminal: bool,
    pub truncated_by_risk: bool,
}

impl Transition {
    pub fn validate(&self) -> Result<()> {
        if self.cost > 1 {
            return Err(Error::domain(format!("cost must be 0 or 1, got {}", self.cost)));
        }
        if self.cost == 1 && !self.terminal {
            return Err(Error::domain("a cost-1 transition must be terminal"));
        }
        if self.cost == 1 && self.truncated_by_risk {
            return Err(Error::domain("a cost-1 transition cannot also be risk truncated"));
        }
        Ok(())
    }
}

/// A transition together with the reward the learner trains on.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapedTransition {
    pub transition: Transition,
    pub shaped_reward: f64,
}

impl ShapedTransition {
    /// Wraps a transition without shaping.
    pub fn unshaped(transition: Transition) -> Self {
        let shaped_reward = transition.reward;
        Self {
            transition,
            shaped_reward,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    ReachedUnsafe,
    RiskTruncated,
    HorizonEnd,
    GoalTerminal,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::ReachedUnsafe => "reached_unsafe",
            Outcome::RiskTruncated => "risk_truncated",
            Outcome::HorizonEnd => "horizon_end",
            Outcome::GoalTerminal => "goal_terminal",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "reached_unsafe" => Some(Outcome::ReachedUnsafe),
            "risk_truncated" => Some(Outcome::RiskTruncated),
            "horizon_end" => Some(Outcome::HorizonEnd),
            "goal_terminal" => Some(Outcome::GoalTerminal),
            _ => None,
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// An ordered, non-empty sequence of shaped transitions with its outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    steps: Vec<ShapedTransition>,
    outcome: Outcome,
}

impl Trajectory {
    pub fn new(steps: Vec<ShapedTransition>, outcome: Outcome) -> Result<Self> {
        let Some(last) = steps.last() else {
            return Err(Error::domain("trajectory must contain at least one transition"));
        };
        for step in &steps {
            step.transition.validate()?;
        }
        if steps[..steps.len() - 1].iter().any(|s| s.transition.terminal) {
            return Err(Error::domain("only the final transition may be terminal"));
        }
        let last = &last.transition;
        if (outcome == Outcome::ReachedUnsafe) != (last.cost == 1) {
            return Err(Error::domain(
                "outcome ReachedUnsafe must coincide with a cost-1 final transition",
            ));
        }
        if outcome == Outcome::GoalTerminal && !last.terminal {
            return Err(Error::domain("goal outcome requires a terminal final transition"));
        }
        if (outcome == Outcome::RiskTruncated) != last.truncated_by_risk {
            return Err(Error::domain(
                "outcome RiskTruncated must coincide with a risk-truncated final transition",
            ));
        }
        Ok(Self { steps, outcome })
    }

    pub fn steps(&self) -> &[ShapedTransition] {
        &self.steps
    }

    pub fn outcome(&self) -> Outcome {
        self.outcome
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn discounted_return(&self, gamma: f64, shaped: bool) -> Result<f64> {
        discounted_return(&self.steps, gamma, shaped)
    }

    pub fn undiscounted_return(&self) -> Result<f64> {
        undiscounted_return(&self.steps)
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma < 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("gamma must lie in (0, 1), got {gamma}")))
    }
}

/// `Σ_t γ^t r_t`, using the shaped reward when `shaped` is set.
pub fn discounted_return(steps: &[ShapedTransition], gamma: f64, shaped: bool) -> Result<f64> {
    check_gamma(gamma)?;
    if steps.is_empty() {
        return Err(Error::domain("discounted return of an empty trajectory"));
    }
    let mut discount = 1.0;
    let mut total = 0.0;
    for step in steps {
        let r = if shaped {
            step.shaped_reward
        } else {
            step.transition.reward
        };
        total += discount * r;
        discount *= gamma;
    }
    Ok(total)
}

/// Plain sum of raw rewards.
pub fn undiscounted_return(steps: &[ShapedTransition]) -> Result<f64> {
    if steps.is_empty() {
        return Err(Error::domain("undiscounted return of an empty trajectory"));
    }
    Ok(steps.iter().map(|s| s.transition.reward).sum())
}

/// Discounted sum of predicted risks, the per-trajectory cost estimate used by
/// the shaped objective.
pub fn discounted_risk_cost(steps: &[ShapedTransition], risks: &[f64], gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    if steps.len() != risks.len() {
        return Err(Error::domain(format!(
            "risk sequence has length {} but trajectory has {}",
            risks.len(),
            steps.len()
        )));
    }
    let mut discount = 1.0;
    let mut total = 0.0;
    for &p in risks {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::domain(format!("risk {p} outside [0, 1]")));
        }
        total += discount * p;
        discount *= gamma;
    }
    Ok(total)
}

/// Bounded FIFO store of shaped transitions.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    entries: VecDeque<ShapedTransition>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::domain("replay capacity must be positive"));
        }
        Ok(Self {
            capacity,
            entries: VecDeque::with_capacity(capacity.min(1 << 16)),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Appends an entry, evicting the oldest one when full.
    pub fn push(&mut self, entry: ShapedTransition) {
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(entry);
    }

    pub fn iter(&self) -> impl Iterator<Item = &ShapedTransition> {
        self.entries.iter()
    }

    pub fn get(&self, index: usize) -> Option<&ShapedTransition> {
        self.entries.get(index)
    }

    /// Uniform sampling with replacement. Returns an empty vector when the
    /// buffer is empty.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<&ShapedTransition> {
        if self.entries.is_empty() {
            return Vec::new();
        }
        (0..n)
            .map(|_| &self.entries[rng.random_range(0..self.entries.len())])
            .collect()
    }
}

/// A state-action pair that directly led to an unsafe state.
#[derive(Debug, Clone, PartialEq)]
pub struct UnsafePair {
    pub state: State,
    pub action: Action,
    pub features: Vec<f64>,
}

/// Multiset of unsafe pairs, optionally bounded with oldest-first eviction.
#[derive(Debug, Clone, Default)]
pub struct UnsafePairSet {
    pairs: VecDeque<UnsafePair>,
    max_size: Option<usize>,
}

impl UnsafePairSet {
    pub fn new(max_size: Option<usize>) -> Result<Self> {
        if max_size == Some(0) {
            return Err(Error::domain("unsafe pair set bound must be positive"));
        }
        Ok(Self {
            pairs: VecDeque::new(),
            max_size,
        })
    }

    pub fn add(&mut self, pair: UnsafePair) {
        if let Some(max) = self.max_size {
            if self.pairs.len() == max {
                self.pairs.pop_front();
            }
        }
        self.pairs.push_back(pair);
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn max_size(&self) -> Option<usize> {
        self.max_size
    }

    pub fn iter(&self) -> impl Iterator<Item = &UnsafePair> {
        self.pairs.iter()
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<&UnsafePair> {
        if self.pairs.is_empty() {
            return Vec::new();
        }
        (0..n)
            .map(|_| &self.pairs[rng.random_range(0..self.pairs.len())])
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn step(reward: f64) -> ShapedTransition {
        ShapedTransition::unshaped(Transition {
            state: vec![0.0],
            action: Action::Discrete(0),
            reward,
            cost: 0,
            next_state: vec![0.0],
            terminal: false,
            truncated_by_risk: false,
        })
    }

    #[test]
    fn discounted_return_examples() {
        assert_eq!(discounted_return(&[step(1.0)], 0.9, false).unwrap(), 1.0);
        let three = [step(1.0), step(1.0), step(1.0)];
        assert!((discounted_return(&three, 0.5, false).unwrap() - 1.75).abs() < 1e-15);
        assert_eq!(discounted_return(&[step(0.0), step(0.0)], 0.9, false).unwrap(), 0.0);
        assert!(discounted_return(&[], 0.9, false).is_err());
        assert!(discounted_return(&three, 1.0, false).is_err());
    }

    #[test]
    fn undiscounted_return_examples() {
        assert_eq!(undiscounted_return(&[step(1.0), step(2.0), step(3.0)]).unwrap(), 6.0);
        assert_eq!(undiscounted_return(&[step(0.0)]).unwrap(), 0.0);
        assert_eq!(undiscounted_return(&[step(-1.0), step(-1.0), step(10.0)]).unwrap(), 8.0);
        assert!(undiscounted_return(&[]).is_err());
    }

    #[test]
    fn discounted_risk_cost_examples() {
        let two = [step(0.0), step(0.0)];
        assert_eq!(discounted_risk_cost(&two, &[0.0, 0.0], 0.9).unwrap(), 0.0);
        assert_eq!(discounted_risk_cost(&two[..1], &[1.0], 0.3).unwrap(), 1.0);
        assert!((discounted_risk_cost(&two, &[0.5, 0.5], 0.5).unwrap() - 0.75).abs() < 1e-15);
        assert!(discounted_risk_cost(&two, &[0.5], 0.5).is_err());
        assert!(discounted_risk_cost(&two[..1], &[1.5], 0.5).is_err());
    }

    #[test]
    fn cost_threshold_must_be_zero() {
        let err = CmdpSpec::new(2, ActionSpace::Discrete(4), 0.9, -1.0, 1.0, 1.0).unwrap_err();
        assert!(err.to_string().contains("cost_threshold must be 0"));
        assert!(CmdpSpec::new(2, ActionSpace::Discrete(4), 1.0, -1.0, 1.0, 0.0).is_err());
        assert!(CmdpSpec::new(2, ActionSpace::Discrete(4), 0.9, 2.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn trajectory_invariants() {
        let mut unsafe_last = step(-1.0);
        unsafe_last.transition.cost = 1;
        unsafe_last.transition.terminal = true;
        assert!(Trajectory::new(vec![step(0.0), unsafe_last.clone()], Outcome::ReachedUnsafe).is_ok());
        assert!(Trajectory::new(vec![step(0.0), unsafe_last.clone()], Outcome::HorizonEnd).is_err());
        assert!(Trajectory::new(vec![unsafe_last.clone(), step(0.0)], Outcome::HorizonEnd).is_err());
        assert!(Trajectory::new(vec![], Outcome::HorizonEnd).is_err());
        let mut bad = unsafe_last;
        bad.transition.terminal = false;
        assert!(bad.transition.validate().is_err());
    }

    #[test]
    fn unsafe_set_fifo_and_multiset() {
        let pair = |x: f64| UnsafePair {
            state: vec![x],
            action: Action::Discrete(0),
            features: vec![x],
        };
        let mut set = UnsafePairSet::new(None).unwrap();
        set.add(pair(1.0));
        assert_eq!(set.len(), 1);
        set.add(pair(1.0));
        assert_eq!(set.len(), 2);

        let mut bounded = UnsafePairSet::new(Some(2)).unwrap();
        bounded.add(pair(1.0));
        bounded.add(pair(2.0));
        bounded.add(pair(3.0));
        assert_eq!(bounded.len(), 2);
        let kept: Vec<f64> = bounded.iter().map(|p| p.state[0]).collect();
        assert_eq!(kept, vec![2.0, 3.0]);
    }

    #[test]
    fn replay_sampling_is_reproducible() {
        let mut buf = ReplayBuffer::new(10).unwrap();
        for i in 0..10 {
            buf.push(step(i as f64));
        }
        let a: Vec<f64> = buf
            .sample(20, &mut ChaCha8Rng::seed_from_u64(3))
            .iter()
            .map(|s| s.transition.reward)
            .collect();
        let b: Vec<f64> = buf
            .sample(20, &mut ChaCha8Rng::seed_from_u64(3))
            .iter()
            .map(|s| s.transition.reward)
            .collect();
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn replay_evicts_oldest_first(capacity in 1usize..20, extra in 0usize..20) {
            let mut buf = ReplayBuffer::new(capacity).unwrap();
            for i in 0..capacity + extra {
                buf.push(step(i as f64));
            }
            prop_assert_eq!(buf.len(), capacity);
            let kept: Vec<f64> = buf.iter().map(|s| s.transition.reward).collect();
            let expected: Vec<f64> = (extra..capacity + extra).map(|i| i as f64).collect();
            prop_assert_eq!(kept, expected);
        }

        #[test]
        fn single_step_return_is_reward(r in -10.0f64..10.0, gamma in 0.01f64..0.99) {
            prop_assert_eq!(discounted_return(&[step(r)], gamma, false).unwrap(), r);
        }

        #[test]
        fn shaping_never_raises_return(
            rewards in proptest::collection::vec(-1.0f64..1.0, 1..30),
            risks in proptest::collection::vec(0.0f64..1.0, 30),
            lambda in 0.0f64..100.0,
            gamma in 0.01f64..0.99,
        ) {
            let steps: Vec<ShapedTransition> = rewards
                .iter()
                .zip(&risks)
                .map(|(&r, &p)| {
                    let mut s = step(r);
                    s.shaped_reward = r - lambda * p;
                    s
                })
                .collect();
            let shaped = discounted_return(&steps, gamma, true).unwrap();
            let raw = discounted_return(&steps, gamma, false).unwrap();
            prop_assert!(shaped <= raw + 1e-12);
        }
    }
}
