//! Unsafe-region decisions, the safe-step estimate under a linear risk
//! schedule, the penalty lower bound, and reward shaping.
//!
//! For an unsafe trajectory of length `H` whose risk rises linearly from `p0`
//! to 1, the risk first exceeds `eta` after roughly
//! `T = floor((eta - p0) / (1 - p0) * H)` steps. Any multiplier
//!
//! ```text
//! lambda > (1 - γ^H)(r_max - r_min) / (eta γ^T (1 - γ^(H-T)))
//! ```
//!
//! makes the best penalized return of such a trajectory worse than the worst
//! unpenalized return of a safe trajectory of the same length.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_ETA: f64 = 0.9;
pub const DEFAULT_MARGIN: f64 = 1.05;

/// `p > eta`, strictly.
pub fn in_unsafe_region(p: f64, eta: f64) -> Result<bool> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::domain(format!("risk {p} outside [0, 1]")));
    }
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::domain(format!("eta must lie in (0, 1), got {eta}")));
    }
    Ok(p > eta)
}

/// The shortest decimal that round-trips to `x`, as an exact rational, so
/// that `0.7` means seven tenths rather than the binary value just below it.
fn exact(x: f64) -> BigRational {
    let text = format!("{x:e}");
    let (mantissa, exp) = text.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    let (whole, frac) = mantissa.split_once('.').unwrap_or((mantissa, ""));
    let digits: BigInt = format!("{whole}{frac}").parse().expect("decimal digits");
    let shift = exp - frac.len() as i32;
    let scale = BigInt::from(10u8).pow(shift.unsigned_abs());
    if shift >= 0 {
        BigRational::from_integer(digits * scale)
    } else {
        BigRational::new(digits, scale)
    }
}

/// `floor((eta - p0) / (1 - p0) * H)`, evaluated exactly on the decimal
/// values of `eta` and `p0`.
pub fn estimate_safe_steps(eta: f64, p0: f64, horizon: usize) -> Result<usize> {
    if !(eta.is_finite() && p0.is_finite()) || !(eta < 1.0) || p0 < 0.0 {
        return Err(Error::domain(format!(
            "need 0 <= p0 <= eta < 1, got p0 = {p0}, eta = {eta}"
        )));
    }
    if p0 > eta {
        return Err(Error::domain(format!("p0 = {p0} exceeds eta = {eta}")));
    }
    if horizon == 0 {
        return Err(Error::domain("unsafe trajectory length must be at least 1"));
    }
    let one = exact(1.0);
    let ratio = (exact(eta) - exact(p0)) / (one - exact(p0));
    let t = (ratio * BigRational::from_integer(BigInt::from(horizon))).floor();
    debug_assert!(!(t < BigRational::zero()));
    t.to_integer()
        .to_usize()
        .ok_or_else(|| Error::Internal("safe step count does not fit in usize".into()))
}

fn pow(gamma: f64, n: usize) -> f64 {
    match i32::try_from(n) {
        Ok(k) => gamma.powi(k),
        Err(_) => gamma.powf(n as f64),
    }
}

/// Smallest penalty multiplier that separates unsafe from safe trajectories
/// of length `horizon` (the bound itself; the strict inequality needs more).
pub fn lambda_lower_bound(
    gamma: f64,
    horizon: usize,
    eta: f64,
    p0: f64,
    r_min: f64,
    r_max: f64,
) -> Result<f64> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::domain(format!("gamma must lie in (0, 1), got {gamma}")));
    }
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::domain(format!("eta must lie in (0, 1), got {eta}")));
    }
    if !(r_min.is_finite() && r_max.is_finite() && r_min <= r_max) {
        return Err(Error::domain(format!("invalid reward bounds [{r_min}, {r_max}]")));
    }
    let t = estimate_safe_steps(eta, p0, horizon)?;
    if t >= horizon {
        return Err(Error::Internal(format!(
            "safe steps {t} reached the unsafe length {horizon}"
        )));
    }
    if r_max == r_min {
        return Ok(0.0);
    }
    let gamma_t = pow(gamma, t);
    if gamma_t == 0.0 {
        return Err(Error::Overflow(format!(
            "gamma^T underflows for gamma = {gamma}, T = {t} (H = {horizon}, eta = {eta}, p0 = {p0})"
        )));
    }
    let ln_gamma = gamma.ln();
    let head = -(horizon as f64 * ln_gamma).exp_m1();
    let tail = -((horizon - t) as f64 * ln_gamma).exp_m1();
    let bound = head * (r_max - r_min) / (eta * gamma_t * tail);
    if !bound.is_finite() {
        return Err(Error::Overflow(format!(
            "penalty bound overflows for gamma = {gamma}, H = {horizon}, T = {t}"
        )));
    }
    Ok(bound)
}

/// `r - lambda * p`.
pub fn shape_reward(r: f64, p: f64, lambda: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::domain(format!("risk {p} outside [0, 1]")));
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::domain(format!("lambda must be finite and non-negative, got {lambda}")));
    }
    Ok(r - lambda * p)
}

/// Brute-force check of the separation inequality for a given multiplier.
///
/// Builds the extremal unsafe trajectory (reward `r_max` throughout, risk 0
/// before `T` and exactly `eta` from `T` on) and the extremal safe one (reward
/// `r_min` throughout), sums both term by term and reports whether the
/// penalized unsafe return is strictly below the safe return.
pub fn verify_separation(
    gamma: f64,
    horizon: usize,
    eta: f64,
    p0: f64,
    r_min: f64,
    r_max: f64,
    lambda: f64,
) -> bool {
    let Ok(t) = estimate_safe_steps(eta, p0, horizon) else {
        return false;
    };
    let mut unsafe_return = 0.0;
    let mut safe_return = 0.0;
    let mut discount = 1.0;
    for step in 0..horizon {
        let p = if step < t { 0.0 } else { eta };
        unsafe_return += discount * (r_max - lambda * p);
        safe_return += discount * r_min;
        discount *= gamma;
    }
    unsafe_return < safe_return
}

/// Where `p0` in the bound comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum P0Policy {
    /// `p0 = 0`, which maximizes `T` and therefore the bound.
    #[default]
    ConservativeZero,
    /// The live classifier's risk at the episode's first pair, capped at eta.
    ClassifierInitial,
}

/// Which unsafe lengths feed the bound on each update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum LambdaHPolicy {
    #[default]
    MaxObserved,
    Latest,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapingConfig {
    pub eta: f64,
    pub gamma: f64,
    pub reward_min: f64,
    pub reward_max: f64,
    pub initial_lambda: f64,
}

impl ShapingConfig {
    pub fn new(eta: f64, gamma: f64, reward_min: f64, reward_max: f64, initial_lambda: f64) -> Result<Self> {
        if !(eta > 0.0 && eta < 1.0) {
            return Err(Error::config("shaping.eta", format!("eta must lie in (0, 1), got {eta}")));
        }
        if !(initial_lambda >= 0.0) || !initial_lambda.is_finite() {
            return Err(Error::config("shaping.initial_lambda", "must be finite and non-negative"));
        }
        if !(gamma > 0.0 && gamma < 1.0) || !(reward_min <= reward_max) {
            return Err(Error::domain("invalid gamma or reward bounds"));
        }
        Ok(Self {
            eta,
            gamma,
            reward_min,
            reward_max,
            initial_lambda,
        })
    }

    pub fn bound(&self, horizon: usize, p0: f64) -> Result<f64> {
        lambda_lower_bound(self.gamma, horizon, self.eta, p0, self.reward_min, self.reward_max)
    }
}

/// The adaptive penalty multiplier and the unsafe lengths seen so far.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaState {
    lambda: f64,
    margin: f64,
    unsafe_lengths: Vec<usize>,
    p0_policy: P0Policy,
    h_policy: LambdaHPolicy,
    frozen: bool,
}

impl LambdaState {
    pub fn new(cfg: &ShapingConfig, margin: f64, p0_policy: P0Policy, h_policy: LambdaHPolicy) -> Result<Self> {
        if !(margin > 1.0) || !margin.is_finite() {
            return Err(Error::config("shaping.margin", format!("margin must exceed 1, got {margin}")));
        }
        Ok(Self {
            lambda: cfg.initial_lambda,
            margin,
            unsafe_lengths: Vec::new(),
            p0_policy,
            h_policy,
            frozen: false,
        })
    }

    /// A state whose multiplier never moves; lengths are still recorded.
    pub fn frozen(mut self) -> Self {
        self.frozen = true;
        self
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
    pub fn margin(&self) -> f64 {
        self.margin
    }
    pub fn unsafe_lengths(&self) -> &[usize] {
        &self.unsafe_lengths
    }
    pub fn p0_policy(&self) -> P0Policy {
        self.p0_policy
    }
    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    /// Resolves `p0` for the bound. `live_p0` is the classifier's risk at the
    /// episode's first pair, used only under [`P0Policy::ClassifierInitial`].
    pub fn resolve_p0(&self, live_p0: Option<f64>, eta: f64) -> f64 {
        match (self.p0_policy, live_p0) {
            (P0Policy::ClassifierInitial, Some(p)) => p.clamp(0.0, eta),
            _ => 0.0,
        }
    }

    /// Records a new unsafe trajectory length and raises lambda if the bound
    /// grew. Lambda never decreases.
    pub fn update(&mut self, new_horizon: usize, cfg: &ShapingConfig, live_p0: Option<f64>) -> Result<()> {
        if new_horizon == 0 {
            return Err(Error::domain("unsafe trajectory length must be at least 1"));
        }
        self.unsafe_lengths.push(new_horizon);
        if self.frozen {
            return Ok(());
        }
        let p0 = self.resolve_p0(live_p0, cfg.eta);
        let bound = match self.h_policy {
            LambdaHPolicy::Latest => cfg.bound(new_horizon, p0)?,
            LambdaHPolicy::MaxObserved => {
                let mut distinct = self.unsafe_lengths.clone();
                distinct.sort_unstable();
                distinct.dedup();
                let mut best = 0.0f64;
                for h in distinct {
                    best = best.max(cfg.bound(h, p0)?);
                }
                best
            }
        };
        self.lambda = self.lambda.max(self.margin * bound);
        Ok(())
    }
}

/// Functional form of [`LambdaState::update`].
pub fn update_lambda(
    ls: &LambdaState,
    new_horizon: usize,
    cfg: &ShapingConfig,
    live_p0: Option<f64>,
) -> Result<LambdaState> {
    let mut next = ls.clone();
    next.update(new_horizon, cfg, live_p0)?;
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> ShapingConfig {
        ShapingConfig::new(0.9, 0.99, 0.0, 1.0, 0.0).unwrap()
    }

    fn state() -> LambdaState {
        LambdaState::new(&cfg(), DEFAULT_MARGIN, P0Policy::default(), LambdaHPolicy::default()).unwrap()
    }

    #[test]
    fn unsafe_region_is_strict() {
        assert!(in_unsafe_region(0.95, 0.9).unwrap());
        assert!(!in_unsafe_region(0.9, 0.9).unwrap());
        assert!(!in_unsafe_region(0.0, 0.9).unwrap());
        assert!(in_unsafe_region(1.2, 0.9).is_err());
        assert!(in_unsafe_region(0.5, 1.0).is_err());
    }

    #[test]
    fn safe_step_examples() {
        assert_eq!(estimate_safe_steps(0.9, 0.0, 10).unwrap(), 9);
        assert_eq!(estimate_safe_steps(0.9, 0.9, 37).unwrap(), 0);
        assert_eq!(estimate_safe_steps(0.9, 0.5, 10).unwrap(), 8);
        assert!(estimate_safe_steps(0.5, 0.6, 10).is_err());
        assert!(estimate_safe_steps(0.9, 0.0, 0).is_err());
    }

    #[test]
    fn decimal_inputs_hit_integer_products() {
        assert_eq!(estimate_safe_steps(0.7, 0.0, 10).unwrap(), 7);
        assert_eq!(estimate_safe_steps(0.7, 0.6, 4).unwrap(), 1);
        assert_eq!(estimate_safe_steps(0.7, 0.3, 7).unwrap(), 4);
    }

    #[test]
    fn zero_reward_range_gives_zero_bound() {
        assert_eq!(lambda_lower_bound(0.9, 10, 0.9, 0.0, 2.0, 2.0).unwrap(), 0.0);
        assert!(lambda_lower_bound(0.9, 10, 0.9, 0.0, 0.0, 1.0).unwrap() > 0.0);
    }

    #[test]
    fn short_horizon_bound_by_hand() {
        // T = floor(0.9 * 2) = 1.
        let expected = (1.0 - 0.25) * 3.0 / (0.9 * 0.5 * 0.5);
        let got = lambda_lower_bound(0.5, 2, 0.9, 0.0, -1.0, 2.0).unwrap();
        assert!((got - expected).abs() < 1e-12 * expected);
        assert!(verify_separation(0.5, 2, 0.9, 0.0, -1.0, 2.0, 1.001 * got));
    }

    #[test]
    fn underflow_is_reported() {
        let err = lambda_lower_bound(1e-5, 200, 0.9, 0.0, 0.0, 1.0).unwrap_err();
        assert!(matches!(err, Error::Overflow(_)), "{err}");
    }

    #[test]
    fn separation_examples() {
        let b = lambda_lower_bound(0.9, 12, 0.9, 0.0, 0.0, 1.0).unwrap();
        assert!(verify_separation(0.9, 12, 0.9, 0.0, 0.0, 1.0, 1.001 * b));
        assert!(!verify_separation(0.9, 12, 0.9, 0.0, 0.0, 1.0, 0.0));
    }

    #[test]
    fn shape_reward_examples() {
        assert_eq!(shape_reward(3.0, 0.0, 10.0).unwrap(), 3.0);
        assert_eq!(shape_reward(1.0, 0.5, 10.0).unwrap(), -4.0);
        assert_eq!(shape_reward(-2.0, 0.7, 0.0).unwrap(), -2.0);
        assert!(shape_reward(1.0, 1.5, 1.0).is_err());
        assert!(shape_reward(1.0, 0.5, -1.0).is_err());
    }

    #[test]
    fn first_update_jumps_to_margin_times_bound() {
        let mut ls = state();
        ls.update(10, &cfg(), None).unwrap();
        let b = cfg().bound(10, 0.0).unwrap();
        assert_eq!(ls.lambda(), DEFAULT_MARGIN * b);
    }

    #[test]
    fn smaller_bound_leaves_lambda() {
        let mut ls = state();
        ls.update(30, &cfg(), None).unwrap();
        let before = ls.lambda();
        ls.update(2, &cfg(), None).unwrap();
        assert!(cfg().bound(2, 0.0).unwrap() < cfg().bound(30, 0.0).unwrap());
        assert_eq!(ls.lambda(), before);
        assert_eq!(ls.unsafe_lengths(), &[30, 2]);
    }

    #[test]
    fn sequence_reaches_margin_times_max() {
        let c = cfg();
        let mut ls = state();
        for h in [5, 20, 10] {
            ls = update_lambda(&ls, h, &c, None).unwrap();
        }
        let max = [5, 20, 10]
            .iter()
            .map(|&h| c.bound(h, 0.0).unwrap())
            .fold(0.0, f64::max);
        assert_eq!(ls.lambda(), DEFAULT_MARGIN * max);
    }

    #[test]
    fn update_is_idempotent_for_repeated_length() {
        let mut ls = state();
        ls.update(17, &cfg(), None).unwrap();
        let once = ls.lambda();
        ls.update(17, &cfg(), None).unwrap();
        assert_eq!(ls.lambda(), once);
    }

    #[test]
    fn frozen_state_records_lengths_only() {
        let mut ls = state().frozen();
        ls.update(8, &cfg(), None).unwrap();
        assert_eq!(ls.lambda(), 0.0);
        assert_eq!(ls.unsafe_lengths(), &[8]);
    }

    #[test]
    fn classifier_initial_p0_lowers_the_bound() {
        let c = cfg();
        let mut conservative = state();
        let mut live = LambdaState::new(&c, DEFAULT_MARGIN, P0Policy::ClassifierInitial, LambdaHPolicy::Latest).unwrap();
        conservative.update(20, &c, Some(0.5)).unwrap();
        live.update(20, &c, Some(0.5)).unwrap();
        assert!(live.lambda() < conservative.lambda());
        // A live p0 above eta is capped at eta.
        assert_eq!(live.resolve_p0(Some(0.99), c.eta), c.eta);
    }

    #[test]
    fn invalid_margin_rejected() {
        assert!(LambdaState::new(&cfg(), 1.0, P0Policy::default(), LambdaHPolicy::default()).is_err());
    }
}
