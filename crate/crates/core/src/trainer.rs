//! The training loop: trajectory collection with risk truncation, unsafe-set
//! bookkeeping, penalty updates, and the per-episode classifier and policy
//! updates.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{AgentConfig, AnyLearner, BaselineStrategy, PolicyLearner};
use crate::cmdp::{
    discounted_risk_cost, Action, Outcome, ReplayBuffer, ShapedTransition, State, Trajectory, Transition, UnsafePair,
    UnsafePairSet,
};
use crate::envs::{AnyEnv, CliffGrid, EnvironmentConfig, Environment};
use crate::error::{Error, Result};
use crate::riskmodel::{
    train_step, ClassifierBatch, OptimizerState, PositivePolicy, RiskClassifier, DEFAULT_HIDDEN,
    DEFAULT_LEARNING_RATE,
};
use crate::shaping::{
    in_unsafe_region, shape_reward, LambdaHPolicy, LambdaState, P0Policy, ShapingConfig, DEFAULT_ETA,
    DEFAULT_MARGIN,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    Rpt,
    Unshaped,
    FixedPenalty,
    AdditiveLagrangian,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::Rpt,
        Strategy::Unshaped,
        Strategy::FixedPenalty,
        Strategy::AdditiveLagrangian,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Rpt => "rpt",
            Strategy::Unshaped => "unshaped",
            Strategy::FixedPenalty => "fixed-penalty",
            Strategy::AdditiveLagrangian => "additive-lagrangian",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }
}

/// Where per-pair risk comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum RiskSourceKind {
    /// The contrastive classifier trained during the run.
    #[default]
    Learned,
    /// Risk 0 everywhere.
    Zero,
    /// Exact cliff geometry (grid environment only).
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierConfig {
    pub source: RiskSourceKind,
    pub hidden: usize,
    pub learning_rate: f64,
    /// Positives per step; the same number of negatives is drawn from replay.
    pub batch_size: usize,
    pub updates_per_episode: usize,
    pub positive_policy: PositivePolicy,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_unsafe_pairs: Option<usize>,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            source: RiskSourceKind::Learned,
            hidden: DEFAULT_HIDDEN,
            learning_rate: DEFAULT_LEARNING_RATE,
            batch_size: 32,
            updates_per_episode: 8,
            positive_policy: PositivePolicy::TerminalOnly,
            max_unsafe_pairs: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShapingSection {
    pub eta: f64,
    pub margin: f64,
    pub initial_lambda: f64,
    pub p0_policy: P0Policy,
    pub lambda_h_policy: LambdaHPolicy,
    /// When false the multiplier stays at `initial_lambda`.
    pub adapt_lambda: bool,
    /// Multiplier of the fixed-penalty strategy.
    pub fixed_lambda: f64,
    /// Dual step size of the additive-lagrangian strategy.
    pub lagrangian_step_size: f64,
    /// Episodes at the start of a run that learn from unshaped rewards with
    /// truncation off. The classifier and the multiplier still train.
    pub warmup_episodes: usize,
    /// Reshape replayed rewards with the current risk source and multiplier
    /// at update time instead of using the values stored at collection.
    pub relabel: bool,
    /// Give the learner one terminal update for the pair that triggered a
    /// risk truncation, rewarded `reward_min` shaped by that pair's risk.
    /// The pair is never executed and never enters the replay buffer.
    pub penalize_blocked: bool,
    /// Reward range used by the bound; defaults to the environment's range.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reward_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reward_max: Option<f64>,
}

impl Default for ShapingSection {
    fn default() -> Self {
        Self {
            eta: DEFAULT_ETA,
            margin: DEFAULT_MARGIN,
            initial_lambda: 0.0,
            p0_policy: P0Policy::ConservativeZero,
            lambda_h_policy: LambdaHPolicy::MaxObserved,
            adapt_lambda: true,
            fixed_lambda: 10.0,
            lagrangian_step_size: 0.01,
            warmup_episodes: 0,
            relabel: false,
            penalize_blocked: false,
            reward_min: None,
            reward_max: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingSection {
    pub strategy: Strategy,
    pub episodes: usize,
    pub seed: u64,
    /// Overrides the environment's episode limit.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_episode_steps: Option<usize>,
    pub replay_capacity: usize,
    /// Greedy evaluation episodes after training (0 disables).
    pub eval_episodes: usize,
    /// Record a per-step trace in the metrics.
    pub trace: bool,
    /// Progress line to stderr every this many episodes (0 disables).
    pub progress_every: usize,
}

impl Default for TrainingSection {
    fn default() -> Self {
        Self {
            strategy: Strategy::Rpt,
            episodes: 3000,
            seed: 0,
            max_episode_steps: None,
            replay_capacity: 50_000,
            eval_episodes: 10,
            trace: false,
            progress_every: 0,
        }
    }
}

/// Everything a training run needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    pub environment: EnvironmentConfig,
    pub classifier: ClassifierConfig,
    pub shaping: ShapingSection,
    pub agent: AgentConfig,
    pub training: TrainingSection,
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let c = &self.classifier;
        if c.hidden == 0 {
            return Err(Error::config("classifier.hidden", "must be at least 1"));
        }
        if !(c.learning_rate >= 0.0) || !c.learning_rate.is_finite() {
            return Err(Error::config("classifier.learning_rate", "must be finite and non-negative"));
        }
        if c.batch_size == 0 {
            return Err(Error::config("classifier.batch_size", "must be at least 1"));
        }
        if c.updates_per_episode == 0 {
            return Err(Error::config("classifier.updates_per_episode", "must be at least 1"));
        }
        if c.max_unsafe_pairs == Some(0) {
            return Err(Error::config("classifier.max_unsafe_pairs", "must be positive when set"));
        }
        if c.positive_policy == PositivePolicy::LastK(0) {
            return Err(Error::config("classifier.positive_policy", "last-k needs k >= 1"));
        }
        let s = &self.shaping;
        if !(s.eta > 0.0 && s.eta < 1.0) {
            return Err(Error::config("shaping.eta", format!("eta must lie in (0, 1), got {}", s.eta)));
        }
        if !(s.margin > 1.0) || !s.margin.is_finite() {
            return Err(Error::config("shaping.margin", "margin must exceed 1"));
        }
        for (key, v) in [
            ("shaping.initial_lambda", s.initial_lambda),
            ("shaping.fixed_lambda", s.fixed_lambda),
            ("shaping.lagrangian_step_size", s.lagrangian_step_size),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::config(key, "must be finite and non-negative"));
            }
        }
        let t = &self.training;
        if t.max_episode_steps == Some(0) {
            return Err(Error::config("training.max_episode_steps", "must be positive"));
        }
        if t.replay_capacity == 0 {
            return Err(Error::config("training.replay_capacity", "must be positive"));
        }
        self.agent.validate()
    }

    pub fn shaping_config(&self, env: &AnyEnv) -> Result<ShapingConfig> {
        let spec = env.spec();
        let r_min = self.shaping.reward_min.unwrap_or(spec.reward_min());
        let r_max = self.shaping.reward_max.unwrap_or(spec.reward_max());
        if !(r_min <= r_max) {
            return Err(Error::config("shaping.reward_min", "reward_min exceeds reward_max"));
        }
        ShapingConfig::new(self.shaping.eta, spec.gamma(), r_min, r_max, self.shaping.initial_lambda)
    }
}

/// Per-pair risk used for shaping and truncation.
pub trait RiskFn {
    fn risk(&self, env: &AnyEnv, state: &[f64], action: &Action) -> Result<f64>;

    /// Whether truncation may act on this source's output.
    fn ready(&self) -> bool {
        true
    }
}

/// Risk 0 everywhere.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroRisk;

impl RiskFn for ZeroRisk {
    fn risk(&self, _env: &AnyEnv, _state: &[f64], _action: &Action) -> Result<f64> {
        Ok(0.0)
    }
}

/// Exact cliff geometry.
#[derive(Debug, Clone)]
pub struct CliffOracle(pub CliffGrid);

impl RiskFn for CliffOracle {
    fn risk(&self, _env: &AnyEnv, state: &[f64], action: &Action) -> Result<f64> {
        self.0.true_risk(state, action)
    }
}

impl RiskFn for RiskClassifier {
    fn risk(&self, env: &AnyEnv, state: &[f64], action: &Action) -> Result<f64> {
        RiskClassifier::risk(self, &env.feature_vector(state, action)?)
    }

    /// The untrained classifier is not trusted to truncate.
    fn ready(&self) -> bool {
        self.updates() > 0
    }
}

/// How rewards are shaped during collection.
#[derive(Debug, Clone, PartialEq)]
pub enum Shaper {
    Rpt { lambda: LambdaState, config: ShapingConfig },
    Baseline(BaselineStrategy),
}

impl Shaper {
    pub fn lambda(&self) -> f64 {
        match self {
            Shaper::Rpt { lambda, .. } => lambda.lambda(),
            Shaper::Baseline(b) => b.lambda(),
        }
    }

    fn truncates(&self) -> bool {
        matches!(self, Shaper::Rpt { .. })
    }

    pub fn shape(&self, reward: f64, risk: f64) -> Result<f64> {
        match self {
            Shaper::Baseline(BaselineStrategy::Unshaped) => Ok(reward),
            _ => shape_reward(reward, risk, self.lambda()),
        }
    }
}

/// Mutable state shared across the episodes of one run.
#[derive(Debug, Clone)]
pub struct RunState {
    pub shaper: Shaper,
    pub unsafe_pairs: UnsafePairSet,
    pub replay: ReplayBuffer,
    pub positive_policy: PositivePolicy,
    pub max_steps: usize,
    pub eta: f64,
    pub gamma: f64,
    /// Cleared during the truncation warm-up.
    pub shaping_active: bool,
}

/// What one episode produced.
#[derive(Debug, Clone)]
pub struct Episode {
    /// `None` only when the very first pair was already in the unsafe region.
    pub trajectory: Option<Trajectory>,
    pub outcome: Outcome,
    /// Risk of each executed pair, aligned with the trajectory.
    pub risks: Vec<f64>,
    /// Length of the unsafe trajectory when the episode hit a cost.
    pub unsafe_length: Option<usize>,
    pub lambda_before: f64,
    pub lambda_after: f64,
    /// The pre-sampled pair that ended a risk-truncated episode, with its risk.
    pub blocked: Option<(State, Action, f64)>,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.trajectory.as_ref().map_or(0, Trajectory::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn undiscounted_return(&self) -> f64 {
        self.trajectory
            .as_ref()
            .map_or(0.0, |t| t.steps().iter().map(|s| s.transition.reward).sum())
    }
}

/// Runs one episode from `env.reset(env_seed)`.
///
/// The next action is drawn before the current step is stored so that its
/// risk can decide truncation: when `(s_{t+1}, a_{t+1})` is in the unsafe
/// region the episode stops and the stored transition is marked
/// `truncated_by_risk`. A cost ends the episode, records the unsafe pairs and
/// its length, and raises the multiplier before the final transition is
/// shaped. Every executed transition, the final one included, goes into the
/// replay buffer.
pub fn collect_trajectory<L, F, R>(
    env: &mut AnyEnv,
    learner: &L,
    risk: &F,
    run: &mut RunState,
    env_seed: u64,
    rng: &mut R,
) -> Result<Episode>
where
    L: PolicyLearner + ?Sized,
    F: RiskFn + ?Sized,
    R: rand::Rng + ?Sized,
{
    let truncating = run.shaping_active && run.shaper.truncates() && risk.ready();
    let lambda_before = run.shaper.lambda();
    let mut state = env.reset(env_seed);
    let mut action = learner.act(&state, true, rng)?;
    let mut p = checked_risk(risk, env, &state, &action)?;
    let initial_risk = p;
    let mut steps: Vec<ShapedTransition> = Vec::new();
    let mut risks = Vec::new();
    let mut unsafe_length = None;

    if truncating && in_unsafe_region(p, run.eta)? {
        return Ok(Episode {
            trajectory: None,
            outcome: Outcome::RiskTruncated,
            risks,
            unsafe_length,
            lambda_before,
            lambda_after: lambda_before,
            blocked: Some((state, action, p)),
        });
    }

    let mut blocked = None;
    let outcome = loop {
        let result = env.step(&action)?;
        let t = steps.len() + 1;
        let mut transition = Transition {
            state: std::mem::take(&mut state),
            action: action.clone(),
            reward: result.reward,
            cost: result.cost,
            next_state: result.next_state,
            terminal: result.terminal,
            truncated_by_risk: false,
        };
        risks.push(p);

        if result.cost > 0 {
            record_positives(env, run, &steps, &transition)?;
            unsafe_length = Some(t);
            if let Shaper::Rpt { lambda, config } = &mut run.shaper {
                lambda.update(t, config, Some(initial_risk))?;
            }
            transition.terminal = true;
            push(run, &mut steps, transition, p)?;
            break Outcome::ReachedUnsafe;
        }
        if result.terminal {
            push(run, &mut steps, transition, p)?;
            break Outcome::GoalTerminal;
        }
        if t >= run.max_steps {
            push(run, &mut steps, transition, p)?;
            break Outcome::HorizonEnd;
        }
        let next_action = learner.act(&transition.next_state, true, rng)?;
        let next_p = checked_risk(risk, env, &transition.next_state, &next_action)?;
        let cut = truncating && in_unsafe_region(next_p, run.eta)?;
        transition.truncated_by_risk = cut;
        state = transition.next_state.clone();
        push(run, &mut steps, transition, p)?;
        if cut {
            blocked = Some((state, next_action, next_p));
            break Outcome::RiskTruncated;
        }
        action = next_action;
        p = next_p;
    };

    Ok(Episode {
        trajectory: Some(Trajectory::new(steps, outcome)?),
        outcome,
        risks,
        unsafe_length,
        lambda_before,
        lambda_after: run.shaper.lambda(),
        blocked,
    })
}

fn checked_risk<F: RiskFn + ?Sized>(risk: &F, env: &AnyEnv, state: &[f64], action: &Action) -> Result<f64> {
    let p = risk.risk(env, state, action)?;
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::domain(format!("risk source returned {p} for {state:?}, {action:?}")));
    }
    Ok(p)
}

fn push(run: &mut RunState, steps: &mut Vec<ShapedTransition>, transition: Transition, p: f64) -> Result<()> {
    let shaped = ShapedTransition {
        shaped_reward: if run.shaping_active {
            run.shaper.shape(transition.reward, p)?
        } else {
            transition.reward
        },
        transition,
    };
    run.replay.push(shaped.clone());
    steps.push(shaped);
    Ok(())
}

fn record_positives(env: &AnyEnv, run: &mut RunState, earlier: &[ShapedTransition], last: &Transition) -> Result<()> {
    let k = match run.positive_policy {
        PositivePolicy::TerminalOnly => 1,
        PositivePolicy::LastK(k) => k,
    };
    let from = earlier.len().saturating_sub(k - 1);
    let pairs = earlier[from..]
        .iter()
        .map(|s| &s.transition)
        .chain(std::iter::once(last));
    for t in pairs {
        run.unsafe_pairs.add(UnsafePair {
            features: env.feature_vector(&t.state, &t.action)?,
            state: t.state.clone(),
            action: t.action.clone(),
        });
    }
    Ok(())
}

/// One row of the metrics table.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub episode: usize,
    /// Environment steps taken so far in the run, this episode included.
    pub env_steps: u64,
    /// Undiscounted environment return of the episode.
    pub ret: f64,
    pub outcome: Outcome,
    /// Multiplier in force at the end of the episode.
    pub lambda: f64,
    pub cumulative_violations: u64,
    pub risk_truncations: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub episode: usize,
    pub step: usize,
    pub reward: f64,
    pub shaped_reward: f64,
    pub risk: f64,
    pub cost: u8,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunMetrics {
    pub records: Vec<EpisodeRecord>,
    pub trace: Vec<StepRecord>,
}

impl RunMetrics {
    pub fn violations(&self) -> u64 {
        self.records.last().map_or(0, |r| r.cumulative_violations)
    }
}

/// Result of [`run_training`].
#[derive(Debug, Clone)]
pub struct TrainingRun {
    pub metrics: RunMetrics,
    pub learner: AnyLearner,
    pub classifier: RiskClassifier,
    pub classifier_optimizer: OptimizerState,
    pub shaper: Shaper,
    pub unsafe_pairs: UnsafePairSet,
    pub replay: ReplayBuffer,
    /// Number of episodes that triggered a multiplier update.
    pub lambda_updates: u64,
    /// Greedy evaluation after training, when enabled.
    pub evaluation: Option<Evaluation>,
}

impl TrainingRun {
    /// Lengths of all unsafe trajectories seen (the set the bound ranges over).
    pub fn unsafe_lengths(&self) -> &[usize] {
        match &self.shaper {
            Shaper::Rpt { lambda, .. } => lambda.unsafe_lengths(),
            Shaper::Baseline(_) => &[],
        }
    }
}

/// Independent random streams derived from one seed.
pub struct Streams {
    pub env: ChaCha8Rng,
    pub agent: ChaCha8Rng,
    pub replay: ChaCha8Rng,
    pub classifier: ChaCha8Rng,
    pub init: ChaCha8Rng,
}

impl Streams {
    pub fn new(seed: u64) -> Self {
        let stream = |k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k);
            rng
        };
        Self {
            env: stream(1),
            agent: stream(2),
            replay: stream(3),
            classifier: stream(4),
            init: stream(5),
        }
    }
}

fn initial_shaper(cfg: &TrainingConfig, shaping: ShapingConfig) -> Result<Shaper> {
    let s = &cfg.shaping;
    Ok(match cfg.training.strategy {
        Strategy::Rpt => {
            let mut lambda = LambdaState::new(&shaping, s.margin, s.p0_policy, s.lambda_h_policy)?;
            if !s.adapt_lambda {
                lambda = lambda.frozen();
            }
            Shaper::Rpt {
                lambda,
                config: shaping,
            }
        }
        Strategy::Unshaped => Shaper::Baseline(BaselineStrategy::Unshaped),
        Strategy::FixedPenalty => Shaper::Baseline(BaselineStrategy::FixedPenalty { lambda: s.fixed_lambda }),
        Strategy::AdditiveLagrangian => Shaper::Baseline(BaselineStrategy::AdditiveLagrangian {
            lambda: s.initial_lambda,
            step_size: s.lagrangian_step_size,
        }),
    })
}

#[allow(clippy::large_enum_variant)]
enum Source {
    Learned,
    Zero(ZeroRisk),
    Oracle(CliffOracle),
}

impl Source {
    fn risk(&self, classifier: &RiskClassifier, env: &AnyEnv, state: &[f64], action: &Action) -> Result<f64> {
        match self {
            Source::Learned => checked_risk(classifier, env, state, action),
            Source::Zero(z) => checked_risk(z, env, state, action),
            Source::Oracle(o) => checked_risk(o, env, state, action),
        }
    }
}

/// Executes a full run. Deterministic given the configuration.
pub fn run_training(cfg: &TrainingConfig) -> Result<TrainingRun> {
    cfg.validate()?;
    let mut env = cfg.environment.build()?;
    let shaping = cfg.shaping_config(&env)?;
    let mut streams = Streams::new(cfg.training.seed);
    let mut learner = AnyLearner::build(&cfg.agent, &env, &mut streams.init)?;
    let mut classifier = RiskClassifier::new(env.feature_dim(), cfg.classifier.hidden, &mut streams.init);
    let mut optimizer = OptimizerState::new(&classifier, cfg.classifier.learning_rate);
    let source = match cfg.classifier.source {
        RiskSourceKind::Learned => Source::Learned,
        RiskSourceKind::Zero => Source::Zero(ZeroRisk),
        RiskSourceKind::Oracle => match &env {
            AnyEnv::Cliff(grid) => Source::Oracle(CliffOracle(grid.clone())),
            _ => {
                return Err(Error::config(
                    "classifier.source",
                    "the oracle risk source needs the cliff-grid environment",
                ))
            }
        },
    };
    let mut run = RunState {
        shaper: initial_shaper(cfg, shaping)?,
        unsafe_pairs: UnsafePairSet::new(cfg.classifier.max_unsafe_pairs)?,
        replay: ReplayBuffer::new(cfg.training.replay_capacity)?,
        positive_policy: cfg.classifier.positive_policy,
        max_steps: cfg.training.max_episode_steps.unwrap_or(env.max_episode_steps()),
        eta: cfg.shaping.eta,
        gamma: shaping.gamma,
        shaping_active: true,
    };

    let mut metrics = RunMetrics::default();
    let mut env_steps = 0u64;
    let mut violations = 0u64;
    let mut truncations = 0u64;
    let mut lambda_updates = 0u64;

    for episode in 0..cfg.training.episodes {
        let env_seed = streams.env.next_u64();
        run.shaping_active = episode >= cfg.shaping.warmup_episodes;
        let ep = match &source {
            Source::Learned => collect_trajectory(&mut env, &learner, &classifier, &mut run, env_seed, &mut streams.agent),
            Source::Zero(z) => collect_trajectory(&mut env, &learner, z, &mut run, env_seed, &mut streams.agent),
            Source::Oracle(o) => collect_trajectory(&mut env, &learner, o, &mut run, env_seed, &mut streams.agent),
        }
        .map_err(|e| Error::Internal(format!("episode {episode}: {e}")))?;

        env_steps += ep.len() as u64;
        match ep.outcome {
            Outcome::ReachedUnsafe => {
                violations += 1;
                if matches!(run.shaper, Shaper::Rpt { .. }) {
                    lambda_updates += 1;
                }
            }
            Outcome::RiskTruncated => truncations += 1,
            _ => {}
        }
        if let (Shaper::Baseline(b), Some(t)) = (&mut run.shaper, &ep.trajectory) {
            b.end_episode(discounted_risk_cost(t.steps(), &ep.risks, run.gamma)?);
        }
        if cfg.training.trace {
            if let Some(t) = &ep.trajectory {
                for (i, (s, &p)) in t.steps().iter().zip(&ep.risks).enumerate() {
                    metrics.trace.push(StepRecord {
                        episode,
                        step: i,
                        reward: s.transition.reward,
                        shaped_reward: s.shaped_reward,
                        risk: p,
                        cost: s.transition.cost,
                    });
                }
            }
        }
        let record = EpisodeRecord {
            episode,
            env_steps,
            ret: ep.undiscounted_return(),
            outcome: ep.outcome,
            lambda: run.shaper.lambda(),
            cumulative_violations: violations,
            risk_truncations: truncations,
        };
        if cfg.training.progress_every > 0 && (episode + 1) % cfg.training.progress_every == 0 {
            eprintln!(
                "[{}] episode {} steps {} return {:.3} lambda {:.4} violations {} truncations {}",
                cfg.training.strategy.as_str(),
                episode + 1,
                env_steps,
                record.ret,
                record.lambda,
                violations,
                truncations
            );
        }
        metrics.records.push(record);

        if matches!(source, Source::Learned) && !run.unsafe_pairs.is_empty() && !run.replay.is_empty() {
            for _ in 0..cfg.classifier.updates_per_episode {
                let batch = classifier_batch(&env, &run, cfg.classifier.batch_size, &mut streams.classifier)?;
                (classifier, optimizer) = train_step(&classifier, &optimizer, &batch)?;
            }
        }
        if let (true, Some((state, action, p))) = (cfg.shaping.penalize_blocked, &ep.blocked) {
            let transition = Transition {
                state: state.clone(),
                action: action.clone(),
                reward: shaping.reward_min,
                cost: 0,
                next_state: state.clone(),
                terminal: true,
                truncated_by_risk: true,
            };
            let penalty = ShapedTransition {
                shaped_reward: run.shaper.shape(shaping.reward_min, *p)?,
                transition,
            };
            learner.update(&[&penalty], run.gamma)?;
        }
        if !run.replay.is_empty() {
            for _ in 0..cfg.agent.updates_per_episode {
                let batch = run.replay.sample(cfg.agent.batch_size, &mut streams.replay);
                if !run.shaping_active {
                    let unshaped = batch.iter().map(|s| ShapedTransition::unshaped(s.transition.clone())).collect::<Vec<_>>();
                    learner.update(&unshaped.iter().collect::<Vec<_>>(), run.gamma)?;
                } else if cfg.shaping.relabel && !matches!(run.shaper, Shaper::Baseline(BaselineStrategy::Unshaped)) {
                    let relabeled = batch
                        .iter()
                        .map(|s| {
                            let t = &s.transition;
                            let p = source.risk(&classifier, &env, &t.state, &t.action)?;
                            Ok(ShapedTransition {
                                shaped_reward: run.shaper.shape(t.reward, p)?,
                                transition: t.clone(),
                            })
                        })
                        .collect::<Result<Vec<_>>>()?;
                    learner.update(&relabeled.iter().collect::<Vec<_>>(), run.gamma)?;
                } else {
                    learner.update(&batch, run.gamma)?;
                }
            }
        }
        learner.end_episode();
    }

    let evaluation = if cfg.training.eval_episodes > 0 {
        Some(evaluate_policy(&mut env, &learner, cfg.training.eval_episodes, cfg.training.seed)?)
    } else {
        None
    };

    Ok(TrainingRun {
        metrics,
        learner,
        classifier,
        classifier_optimizer: optimizer,
        shaper: run.shaper,
        unsafe_pairs: run.unsafe_pairs,
        replay: run.replay,
        lambda_updates,
        evaluation,
    })
}

fn classifier_batch(env: &AnyEnv, run: &RunState, n: usize, rng: &mut ChaCha8Rng) -> Result<ClassifierBatch> {
    let positives = run.unsafe_pairs.sample(n, rng).into_iter().map(|p| p.features.clone()).collect();
    let negatives = run
        .replay
        .sample(n, rng)
        .into_iter()
        .map(|s| env.feature_vector(&s.transition.state, &s.transition.action))
        .collect::<Result<_>>()?;
    Ok(ClassifierBatch { positives, negatives })
}

/// Greedy evaluation summary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub mean_return: f64,
    pub violations: u64,
}

/// Greedy episodes without shaping, truncation or learning. Episode start
/// states are drawn from `seed`.
pub fn evaluate_policy<L: PolicyLearner + ?Sized>(
    env: &mut AnyEnv,
    learner: &L,
    episodes: usize,
    seed: u64,
) -> Result<Evaluation> {
    if episodes == 0 {
        return Err(Error::Usage("episodes must be positive".into()));
    }
    let mut seeds = ChaCha8Rng::seed_from_u64(seed);
    seeds.set_stream(6);
    let mut unused = ChaCha8Rng::seed_from_u64(0);
    let mut total = 0.0;
    let mut violations = 0;
    for _ in 0..episodes {
        let mut state = env.reset(seeds.next_u64());
        for _ in 0..env.max_episode_steps() {
            let action = learner.act(&state, false, &mut unused)?;
            let step = env.step(&action)?;
            total += step.reward;
            if step.cost > 0 {
                violations += 1;
            }
            if step.terminal {
                break;
            }
            state = step.next_state;
        }
    }
    Ok(Evaluation {
        mean_return: total / episodes as f64,
        violations,
    })
}

/// `(return / max_return) / max(1, cumulative violations)` for each episode,
/// keyed by the cumulative environment step count.
pub fn normalized_ratio_series(metrics: &RunMetrics, max_return: f64) -> Result<Vec<(u64, f64)>> {
    if !(max_return > 0.0) || !max_return.is_finite() {
        return Err(Error::domain(format!("max_return must be positive, got {max_return}")));
    }
    Ok(metrics
        .records
        .iter()
        .map(|r| (r.env_steps, normalized_ratio(r.ret, r.cumulative_violations, max_return)))
        .collect())
}

pub fn normalized_ratio(ret: f64, violations: u64, max_return: f64) -> f64 {
    (ret / max_return) / violations.max(1) as f64
}
