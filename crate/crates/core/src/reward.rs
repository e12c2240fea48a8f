//! Closed-form reward expectations and gap measurement.
//!
//! The expected Brier reward for a report `y` against truth `q` is a
//! downward parabola with vertex at `y = q/2`:
//!
//! ```text
//! E[R](y) = [ -2 ((y - q/2) / 2^D)^2 + 3/2 + 2 (q / 2^(D+1))^2 ] / divisor
//! ```
//!
//! An exhaustive path-and-coin enumeration provides the independent
//! oracle for that formula, and Monte-Carlo machinery measures the
//! reward gap between rational and adversarial strategies.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::Circuit;
use crate::client::{brier_reward, ProtocolError, SparseParams};
use crate::pathsum::{eval_g, PathAssignment, PathError};
use crate::rng::SeedTree;

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("{name} = {value} outside its domain")]
    DomainViolation { name: &'static str, value: f64 },
    #[error(transparent)]
    Path(#[from] PathError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("lists of length {left} and {right} cannot be scored together")]
    ShapeMismatch { left: usize, right: usize },
    #[error("precondition `{name}` violated")]
    PreconditionViolated { name: &'static str },
}

/// Scale factor `2^-D` used throughout; flushes to zero past the f64
/// exponent range, which only matters far beyond desk scale.
fn scale(d_exponent: u32) -> f64 {
    (-(d_exponent as f64)).exp2()
}

/// `E[R](y)` as above.
pub fn expected_reward_closed_form(
    q: f64,
    y: f64,
    d_exponent: u32,
    divisor: u64,
) -> Result<f64, AnalysisError> {
    if !(0.0..=1.0).contains(&q) {
        return Err(AnalysisError::DomainViolation { name: "q", value: q });
    }
    if !(0.0..=0.5).contains(&y) {
        return Err(AnalysisError::DomainViolation { name: "y", value: y });
    }
    let v = (y - q / 2.0) * scale(d_exponent);
    let w = q * scale(d_exponent + 1);
    Ok((1.5 - 2.0 * v * v + 2.0 * w * w) / divisor as f64)
}

/// The expected-reward parabola for one outcome.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardCurve {
    pub d_exponent: u32,
    pub divisor: u64,
    pub q: f64,
}

impl RewardCurve {
    pub fn expected(&self, y: f64) -> Result<f64, AnalysisError> {
        expected_reward_closed_form(self.q, y, self.d_exponent, self.divisor)
    }

    /// The unique maximizer, `q/2`.
    pub fn vertex(&self) -> f64 {
        self.q / 2.0
    }

    /// Value at the vertex, `(3/2 + 2 q^2 / 2^(2(D+1))) / divisor`.
    pub fn max_value(&self) -> f64 {
        let w = self.q * scale(self.d_exponent + 1);
        (1.5 + 2.0 * w * w) / self.divisor as f64
    }

    /// Sampled points for plotting or persistence.
    pub fn table(&self, step: f64) -> Vec<(f64, f64)> {
        let mut rows = Vec::new();
        let mut y = 0.0;
        while y <= 0.5 + step / 2.0 {
            let clamped = y.min(0.5);
            rows.push((clamped, self.expected(clamped).unwrap()));
            y += step;
        }
        rows
    }
}

/// Independent oracle for the closed form: enumerate every path and both
/// coin outcomes with exact bias weights,
/// `sum_s 2^-D [ bias(s) R(y,1) + (1-bias(s)) R(y,0) ]`.
pub fn exhaustive_expected_reward(
    c: &Circuit,
    z: u64,
    y: f64,
    k: u32,
) -> Result<f64, AnalysisError> {
    let mut path = PathAssignment::zeroed(c.n, c.depth(), k);
    let d_exponent = path.total_bits();
    if d_exponent > 20 {
        return Err(AnalysisError::Path(PathError::EnumerationCapExceeded {
            bits: d_exponent,
            cap: 20,
        }));
    }
    let divisor = 1u64 << k;
    let reward_heads = brier_reward(y, 1, d_exponent, divisor)?;
    let reward_tails = brier_reward(y, 0, d_exponent, divisor)?;
    let weight = scale(d_exponent);
    let mut acc = 0.0;
    for packed in 0..(1u64 << d_exponent) {
        path.set_packed(packed);
        let bias = eval_g(c, z, &path)?.bias;
        acc += weight * (bias * reward_heads + (1.0 - bias) * reward_tails);
    }
    Ok(acc)
}

/// Grid argmax of the expected reward over `[0, 1/2]`.
///
/// Comparisons run on the scaled vertex form `-(y - q/2)^2`, which
/// orders identically to `E[R]` but never underflows, so the scan stays
/// meaningful at exponents where the `2^-2D` differences drop below f64
/// resolution. Ties break toward smaller `y`.
pub fn argmax_scan(q: f64, step: f64) -> Result<f64, AnalysisError> {
    if !(0.0..=1.0).contains(&q) {
        return Err(AnalysisError::DomainViolation { name: "q", value: q });
    }
    if !(step > 0.0 && step <= 0.5) {
        return Err(AnalysisError::DomainViolation {
            name: "step",
            value: step,
        });
    }
    let mut best_y = 0.0;
    let mut best = objective(q, 0.0);
    let steps = (0.5 / step).ceil() as u64;
    for i in 1..=steps {
        let y = (i as f64 * step).min(0.5);
        let value = objective(q, y);
        if value > best {
            best = value;
            best_y = y;
        }
    }
    Ok(best_y)
}

/// Scale-free objective sharing the closed form's ordering in `y`.
pub fn objective(q: f64, y: f64) -> f64 {
    let v = y - q / 2.0;
    -v * v
}

/// Closed form under a coin-bias error `delta`: the truth shifts to
/// `q + 2^(D+1) delta` in both the vertex and the maximum term, so the
/// maximizer moves to `q/2 + 2^D delta`.
pub fn expected_reward_with_delta(
    q: f64,
    y: f64,
    d_exponent: u32,
    divisor: u64,
    delta: f64,
) -> Result<f64, AnalysisError> {
    if !delta.is_finite() || delta.abs() > 1.0 {
        return Err(AnalysisError::DomainViolation {
            name: "delta",
            value: delta,
        });
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(AnalysisError::DomainViolation { name: "q", value: q });
    }
    if !(0.0..=0.5).contains(&y) {
        return Err(AnalysisError::DomainViolation { name: "y", value: y });
    }
    let q_eff = q + (d_exponent as f64 + 1.0).exp2() * delta;
    let v = (y - q_eff / 2.0) * scale(d_exponent);
    let w = q_eff * scale(d_exponent + 1);
    Ok((1.5 - 2.0 * v * v + 2.0 * w * w) / divisor as f64)
}

/// Expected total reward of the sparse protocol for per-entry truths and
/// reports: the sum of per-entry parabolas with divisor `l`.
pub fn sparse_expected_total(
    q_list: &[f64],
    y_list: &[f64],
    d_exponent: u32,
    list_size: u64,
) -> Result<f64, AnalysisError> {
    if q_list.len() != y_list.len() {
        return Err(AnalysisError::ShapeMismatch {
            left: q_list.len(),
            right: y_list.len(),
        });
    }
    let mut total = 0.0;
    for (&q, &y) in q_list.iter().zip(y_list) {
        total += expected_reward_closed_form(q, y, d_exponent, list_size)?;
    }
    Ok(total)
}

/// Threshold on the estimator accuracy below which swapping a heavy
/// outcome into the list strictly pays:
/// `eps^2 (3t^2 + eps^2 - 4 t eps) / (2 t^2 (2t - eps)^2)`.
pub fn swap_threshold(sp: &SparseParams) -> f64 {
    let t = sp.t as f64;
    let e = sp.eps;
    e * e * (3.0 * t * t + e * e - 4.0 * t * e) / (2.0 * t * t * (2.0 * t - e) * (2.0 * t - e))
}

/// Guaranteed expected-reward loss from listing a light outcome `q2`
/// instead of a heavy one `q1`, accounting for estimation error:
/// `(2 / (l 2^(2(D+1)))) [ eps^2(3t^2+eps^2-4teps)/(t^2(2t-eps)^2) - 2 eps' ]`.
pub fn swap_gap_bound(
    q1: f64,
    q2: f64,
    sp: &SparseParams,
    eps_prime: f64,
    delta: f64,
    d_exponent: u32,
) -> Result<f64, AnalysisError> {
    let threshold = swap_threshold(sp);
    if q1 < sp.eps / sp.t as f64 {
        return Err(AnalysisError::PreconditionViolated {
            name: "q1 >= eps/t",
        });
    }
    if q2 > 1.0 / sp.list_size as f64 {
        return Err(AnalysisError::PreconditionViolated { name: "q2 <= 1/l" });
    }
    if eps_prime > threshold {
        return Err(AnalysisError::PreconditionViolated {
            name: "eps' below the swap threshold",
        });
    }
    if eps_prime < delta {
        return Err(AnalysisError::PreconditionViolated { name: "eps' >= delta" });
    }
    let front = 2.0 * scale(2 * (d_exponent + 1)) / sp.list_size as f64;
    Ok(front * (2.0 * threshold - 2.0 * eps_prime))
}

/// One protocol run's settlement, for gap measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialOutcome {
    pub reward: f64,
    pub correct: bool,
}

pub type TrialRunner<'a> = Box<dyn FnMut(&mut ChaCha8Rng) -> TrialOutcome + 'a>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyStats {
    pub name: String,
    pub mean_reward: f64,
    pub incorrect_fraction: f64,
    /// Whether the strategy made the client answer incorrectly in the
    /// majority of trials, qualifying it for the gap.
    pub flipped: bool,
}

/// Monte-Carlo reward-gap measurement across a strategy set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub rational_expectation: f64,
    pub best_incorrect_expectation: Option<f64>,
    pub gap: Option<f64>,
    pub trials: u64,
    /// 3-sigma half-width on the gap estimate.
    pub confidence: f64,
    pub strategies: Vec<StrategyStats>,
}

struct RunningStats {
    mean_reward: f64,
    var_reward: f64,
    incorrect: u64,
}

fn run_trials(runner: &mut TrialRunner, trials: u64, tree: &SeedTree) -> RunningStats {
    let mut rewards = Vec::with_capacity(trials as usize);
    let mut incorrect = 0u64;
    for i in 0..trials {
        let mut rng = tree.child_idx(i).rng();
        let outcome = runner(&mut rng);
        rewards.push(outcome.reward);
        if !outcome.correct {
            incorrect += 1;
        }
    }
    let mean = rewards.iter().sum::<f64>() / trials as f64;
    let var = rewards.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>()
        / (trials.max(2) - 1) as f64;
    RunningStats {
        mean_reward: mean,
        var_reward: var,
        incorrect,
    }
}

/// Estimate the reward gap: the rational strategy's expected reward
/// minus the best expected reward over the supplied strategies that flip
/// the client's answer. With no flipping strategy the gap is undefined
/// and reported as absent.
pub fn measure_reward_gap(
    mut rational: TrialRunner,
    adversaries: Vec<(String, TrialRunner)>,
    trials: u64,
    tree: &SeedTree,
) -> GapReport {
    assert!(trials >= 2, "need at least two trials");
    let rational_stats = run_trials(&mut rational, trials, &tree.child("rational"));
    let mut strategies = Vec::new();
    let mut best: Option<(f64, f64)> = None; // (mean, var)
    for (name, mut runner) in adversaries {
        let stats = run_trials(&mut runner, trials, &tree.child("adversary").child(&name));
        let incorrect_fraction = stats.incorrect as f64 / trials as f64;
        let flipped = incorrect_fraction > 0.5;
        if flipped && best.map_or(true, |(m, _)| stats.mean_reward > m) {
            best = Some((stats.mean_reward, stats.var_reward));
        }
        strategies.push(StrategyStats {
            name,
            mean_reward: stats.mean_reward,
            incorrect_fraction,
            flipped,
        });
    }
    let confidence = match best {
        Some((_, var)) => {
            3.0 * ((rational_stats.var_reward + var) / trials as f64).sqrt()
        }
        None => 3.0 * (rational_stats.var_reward / trials as f64).sqrt(),
    };
    GapReport {
        rational_expectation: rational_stats.mean_reward,
        best_incorrect_expectation: best.map(|(m, _)| m),
        gap: best.map(|(m, _)| rational_stats.mean_reward - m),
        trials,
        confidence,
        strategies,
    }
}
