//! Server behaviors: the honest Chernoff-sampling estimator, the
//! exact-rational oracle server, adversarial reporters for reward-gap
//! measurement, and the sparse-list builder.
//!
//! Desk-scale substitution: the quantum heavy-output search behind the
//! sparse list is replaced by the exact statevector oracle, which makes
//! the list property deterministic instead of holding with probability
//! `1 - eps*delta/(2t+eps)`.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::{exact_output_dist, Circuit, OutcomeSampler, SimError};
use crate::client::SparseParams;

/// Default ceiling on measurement draws per operation.
pub const DEFAULT_DRAW_BUDGET: u64 = 100_000_000;

#[derive(Debug, Error, PartialEq)]
pub enum StrategyError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("requested {draws} draws, budget is {budget}")]
    DrawBudgetExceeded { draws: u128, budget: u64 },
    #[error("list size {l} exceeds the {space} distinct n-bit strings")]
    ListTooLarge { l: u64, space: u64 },
    #[error("invalid strategy configuration: {detail}")]
    InvalidConfig { detail: String },
}

/// How the server generates its messages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    /// Estimate probabilities by measurement sampling, report half of each.
    HonestSampling,
    /// Report `q_z / 2` from the exact oracle.
    ExactRational,
    /// Report a constant regardless of the circuit.
    FixedReport(f64),
    /// Shift each exact-rational report by a constant, clamped to [0, 1/2].
    Perturbed(f64),
    /// Sparse mode only: drop the heaviest list entry for a padder.
    OmitHeavy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrategyConfig {
    pub kind: StrategyKind,
    /// Explicit sample count for honest sampling without a schedule.
    pub samples: Option<u64>,
    /// Accuracy/confidence pair `(f, h)` deriving the sample schedule.
    pub schedule: Option<(f64, f64)>,
}

impl StrategyConfig {
    pub fn exact_rational() -> Self {
        StrategyConfig {
            kind: StrategyKind::ExactRational,
            samples: None,
            schedule: None,
        }
    }

    pub fn honest(f: f64, h: f64) -> Self {
        StrategyConfig {
            kind: StrategyKind::HonestSampling,
            samples: None,
            schedule: Some((f, h)),
        }
    }

    pub fn honest_with_samples(t: u64) -> Self {
        StrategyConfig {
            kind: StrategyKind::HonestSampling,
            samples: Some(t),
            schedule: None,
        }
    }

    pub fn fixed(value: f64) -> Self {
        StrategyConfig {
            kind: StrategyKind::FixedReport(value),
            samples: None,
            schedule: None,
        }
    }

    pub fn perturbed(delta: f64) -> Self {
        StrategyConfig {
            kind: StrategyKind::Perturbed(delta),
            samples: None,
            schedule: None,
        }
    }

    pub fn omit_heavy() -> Self {
        StrategyConfig {
            kind: StrategyKind::OmitHeavy,
            samples: None,
            schedule: None,
        }
    }
}

/// A fixed-size list of distinct n-bit strings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseList {
    pub n: u32,
    pub entries: Vec<u64>,
}

/// Accuracy and sample count from the estimation schedule:
/// `eps' = 1 / ((2^k + 1) f + 1) / 2^k` and `T = (k + 1 + h) / (2 eps'^2)`,
/// which make the per-outcome Chernoff failure at most `e^-h` overall.
pub fn estimation_schedule(k: u32, f: f64, h: f64) -> Result<(f64, u64), StrategyError> {
    estimation_schedule_capped(k, f, h, DEFAULT_DRAW_BUDGET)
}

pub fn estimation_schedule_capped(
    k: u32,
    f: f64,
    h: f64,
    budget: u64,
) -> Result<(f64, u64), StrategyError> {
    if !(f >= 1.0 && h >= 1.0) {
        return Err(StrategyError::InvalidConfig {
            detail: format!("schedule needs f >= 1 and h >= 1, got ({f}, {h})"),
        });
    }
    let pow_k = (1u64 << k) as f64;
    // Work through the denominator so integer-valued schedules stay
    // exact under ceil.
    let denom = ((pow_k + 1.0) * f + 1.0) * pow_k;
    let eps = 1.0 / denom;
    let t = ((k as f64 + 1.0 + h) * denom * denom / 2.0).ceil();
    let total = (t as u128) << k;
    if total > budget as u128 {
        return Err(StrategyError::DrawBudgetExceeded {
            draws: total,
            budget,
        });
    }
    Ok((eps, t as u64))
}

/// Estimate `q_z` for each requested outcome by `T` measurement draws
/// apiece: `eta_z` is the fraction of draws that hit `z`, satisfying
/// `Pr[|eta_z - q_z| >= eps'] <= 2 exp(-2 T eps'^2)`.
pub fn estimate_qz(
    c: &Circuit,
    k: u32,
    zs: &[u64],
    samples: u64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>, StrategyError> {
    estimate_qz_capped(c, k, zs, samples, DEFAULT_DRAW_BUDGET, rng)
}

pub fn estimate_qz_capped(
    c: &Circuit,
    k: u32,
    zs: &[u64],
    samples: u64,
    budget: u64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>, StrategyError> {
    if samples == 0 {
        return Err(StrategyError::InvalidConfig {
            detail: "sample count must be at least 1".into(),
        });
    }
    let total = samples as u128 * zs.len() as u128;
    if total > budget as u128 {
        return Err(StrategyError::DrawBudgetExceeded {
            draws: total,
            budget,
        });
    }
    let sampler = OutcomeSampler::new(&exact_output_dist(c, k)?);
    let mut etas = Vec::with_capacity(zs.len());
    for &z in zs {
        let mut hits = 0u64;
        for _ in 0..samples {
            if sampler.draw(rng) == z {
                hits += 1;
            }
        }
        etas.push(hits as f64 / samples as f64);
    }
    Ok(etas)
}

// Float noise in the oracle can push q a few ulps past 1; an honest
// report never exceeds 1/2.
fn half(values: Vec<f64>) -> Vec<f64> {
    values.into_iter().map(|q| (q / 2.0).clamp(0.0, 0.5)).collect()
}

fn oracle_q(c: &Circuit, k: u32) -> Result<Vec<f64>, StrategyError> {
    Ok(exact_output_dist(c, k)?.probs)
}

/// The server's report vector for the dense protocol: one `y_z` per
/// outcome in `{0,1}^k`, generated per the configured kind.
pub fn server_message(
    c: &Circuit,
    k: u32,
    config: &StrategyConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>, StrategyError> {
    let zs: Vec<u64> = (0..1u64 << k).collect();
    server_message_for(c, k, &zs, config, rng)
}

/// Reports restricted to the requested outcomes, in their order. The
/// decision wrapper runs the round for a single outcome only.
pub fn server_message_for(
    c: &Circuit,
    k: u32,
    zs: &[u64],
    config: &StrategyConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>, StrategyError> {
    let pick = |q: Vec<f64>| -> Vec<f64> { zs.iter().map(|&z| q[z as usize]).collect() };
    match config.kind {
        StrategyKind::HonestSampling => {
            let samples = honest_sample_count(k, config)?;
            Ok(half(estimate_qz(c, k, zs, samples, rng)?))
        }
        StrategyKind::ExactRational => Ok(half(pick(oracle_q(c, k)?))),
        StrategyKind::FixedReport(v) => Ok(vec![v; zs.len()]),
        StrategyKind::Perturbed(_) => adversarial_message(config.kind, &half(pick(oracle_q(c, k)?))),
        StrategyKind::OmitHeavy => Err(StrategyError::InvalidConfig {
            detail: "omit_heavy only applies to the sparse protocol".into(),
        }),
    }
}

fn honest_sample_count(k: u32, config: &StrategyConfig) -> Result<u64, StrategyError> {
    if let Some((f, h)) = config.schedule {
        return Ok(estimation_schedule(k, f, h)?.1);
    }
    config.samples.ok_or_else(|| StrategyError::InvalidConfig {
        detail: "honest sampling needs either a schedule or a sample count".into(),
    })
}

/// Pure report transform realizing the adversarial kinds over given
/// truthful reports.
pub fn adversarial_message(
    kind: StrategyKind,
    truth: &[f64],
) -> Result<Vec<f64>, StrategyError> {
    match kind {
        StrategyKind::Perturbed(delta) => {
            if !delta.is_finite() {
                return Err(StrategyError::InvalidConfig {
                    detail: "perturbation must be finite".into(),
                });
            }
            Ok(truth.iter().map(|y| (y + delta).clamp(0.0, 0.5)).collect())
        }
        StrategyKind::FixedReport(v) => Ok(vec![v; truth.len()]),
        other => Err(StrategyError::InvalidConfig {
            detail: format!("{other:?} is not a report transform"),
        }),
    }
}

/// Build the fixed-size list: every `z` with `q_z >= eps/t` (from the
/// exact oracle), padded with the lexicographically smallest unused
/// strings up to exactly `l` entries.
pub fn build_sparse_list(c: &Circuit, sp: &SparseParams) -> Result<SparseList, StrategyError> {
    let n = c.n;
    let space = 1u64 << n;
    if sp.list_size > space {
        return Err(StrategyError::ListTooLarge {
            l: sp.list_size,
            space,
        });
    }
    let q = oracle_q(c, n)?;
    let threshold = sp.eps / sp.t as f64;
    let mut entries: Vec<u64> = (0..space)
        .filter(|&z| q[z as usize] >= threshold - 1e-12)
        .collect();
    assert!(
        entries.len() as u64 <= sp.list_size,
        "more heavy outcomes than list slots"
    );
    let mut in_list = vec![false; space as usize];
    for &z in &entries {
        in_list[z as usize] = true;
    }
    for z in 0..space {
        if entries.len() as u64 == sp.list_size {
            break;
        }
        if !in_list[z as usize] {
            in_list[z as usize] = true;
            entries.push(z);
        }
    }
    Ok(SparseList { n, entries })
}

/// Estimates for every listed outcome at the sparse-recovery schedule:
/// `eps' = eps/l`, `T = ln(2(2t+eps)/(eps delta)) / (2 eps'^2)`. With
/// probability at least `1 - delta` the estimates are within `3 eps` of
/// the true distribution in l1 distance.
pub fn sparse_eta(
    c: &Circuit,
    list: &SparseList,
    sp: &SparseParams,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>, StrategyError> {
    sparse_eta_capped(c, list, sp, DEFAULT_DRAW_BUDGET, rng)
}

pub fn sparse_eta_capped(
    c: &Circuit,
    list: &SparseList,
    sp: &SparseParams,
    budget: u64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>, StrategyError> {
    let (_, samples) = sparse_schedule(sp);
    estimate_qz_capped(c, c.n, &list.entries, samples, budget, rng)
}

/// `(eps', T)` for the sparse estimation step.
pub fn sparse_schedule(sp: &SparseParams) -> (f64, u64) {
    let eps_prime = sp.eps / sp.list_size as f64;
    let t = 2.0 * sp.t as f64;
    let samples =
        ((2.0 * (t + sp.eps) / (sp.eps * sp.delta)).ln() / (2.0 * eps_prime * eps_prime)).ceil();
    (eps_prime, samples as u64)
}

/// The server's sparse-protocol message: a list of exactly `l` distinct
/// strings plus one report per listed entry.
pub fn sparse_message(
    c: &Circuit,
    sp: &SparseParams,
    config: &StrategyConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(SparseList, Vec<f64>), StrategyError> {
    let mut list = build_sparse_list(c, sp)?;
    match config.kind {
        StrategyKind::HonestSampling => {
            let y = half(sparse_eta(c, &list, sp, rng)?);
            Ok((list, y))
        }
        StrategyKind::ExactRational => {
            let q = oracle_q(c, c.n)?;
            let y = half(list.entries.iter().map(|&z| q[z as usize]).collect());
            Ok((list, y))
        }
        StrategyKind::FixedReport(v) => {
            let y = vec![v; list.entries.len()];
            Ok((list, y))
        }
        StrategyKind::Perturbed(delta) => {
            let q = oracle_q(c, c.n)?;
            let truth: Vec<f64> = list.entries.iter().map(|&z| q[z as usize] / 2.0).collect();
            Ok((list, adversarial_message(StrategyKind::Perturbed(delta), &truth)?))
        }
        StrategyKind::OmitHeavy => {
            let q = oracle_q(c, c.n)?;
            let heaviest = list
                .entries
                .iter()
                .enumerate()
                .max_by(|(_, &a), (_, &b)| q[a as usize].partial_cmp(&q[b as usize]).unwrap())
                .map(|(i, _)| i)
                .unwrap();
            let space = 1u64 << c.n;
            let padder = (0..space)
                .find(|z| !list.entries.contains(z))
                .ok_or(StrategyError::ListTooLarge {
                    l: sp.list_size,
                    space,
                })?;
            list.entries[heaviest] = padder;
            let y = half(list.entries.iter().map(|&z| q[z as usize]).collect());
            Ok((list, y))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::parse_circuit;
    use crate::rng::SeedTree;

    fn bell() -> Circuit {
        parse_circuit("qubits 2\ngate H 0\ngate CNOT 0 1").unwrap()
    }

    /// Bell pair on qubits 0 and 1 of a five-qubit register, so sparse
    /// parameters with l = 24 fit in the outcome space.
    fn bell5() -> Circuit {
        parse_circuit("qubits 5\ngate H 0\ngate CNOT 0 1").unwrap()
    }

    fn sp_default() -> SparseParams {
        SparseParams::from_fraction(2, 1, 6, 0.001).unwrap()
    }

    #[test]
    fn schedule_matches_reference_values() {
        let (eps, t) = estimation_schedule(1, 10.0, 5.0).unwrap();
        assert!((eps - 1.0 / 62.0).abs() < 1e-15);
        assert_eq!(t, 13_454);

        let (eps, t) = estimation_schedule(1, 1.0, 1.0).unwrap();
        assert!((eps - 0.125).abs() < 1e-15);
        assert_eq!(t, 96);

        let (eps, t) = estimation_schedule(3, 2.0, 2.0).unwrap();
        assert!((eps - 1.0 / 152.0).abs() < 1e-15);
        assert_eq!(t, 69_312);
    }

    #[test]
    fn schedule_budget_overflows_loudly() {
        let err = estimation_schedule(10, 100.0, 50.0).unwrap_err();
        assert!(matches!(err, StrategyError::DrawBudgetExceeded { .. }));
    }

    #[test]
    fn deterministic_outcome_estimates_exactly() {
        let c = parse_circuit("qubits 1\ngate H 0\ngate H 0").unwrap();
        let mut rng = SeedTree::new(1).rng();
        let etas = estimate_qz(&c, 1, &[0, 1], 200, &mut rng).unwrap();
        assert_eq!(etas, vec![1.0, 0.0]);
    }

    #[test]
    fn bell_estimate_concentrates() {
        let c = bell();
        let mut failures = 0;
        for seed in 0..300u64 {
            let mut rng = SeedTree::new(seed).child("chernoff").rng();
            let eta = estimate_qz(&c, 1, &[0], 10_000, &mut rng).unwrap()[0];
            if !(0.485..=0.515).contains(&eta) {
                failures += 1;
            }
        }
        assert!(failures <= 3, "{failures} of 300 seeds out of band");
    }

    #[test]
    fn chernoff_envelope_holds_empirically() {
        let c = bell();
        let samples = 500u64;
        let eps = 0.05;
        let bound = 2.0 * (-2.0 * samples as f64 * eps * eps).exp();
        let seeds = 1000;
        let mut failures = 0;
        for seed in 0..seeds as u64 {
            let mut rng = SeedTree::new(seed).child("envelope").rng();
            let eta = estimate_qz(&c, 1, &[0], samples, &mut rng).unwrap()[0];
            if (eta - 0.5).abs() >= eps {
                failures += 1;
            }
        }
        let rate = failures as f64 / seeds as f64;
        let sigma = (bound * (1.0 - bound) / seeds as f64).sqrt();
        assert!(rate <= bound + 3.0 * sigma, "rate {rate} vs bound {bound}");
    }

    #[test]
    fn exact_rational_reports_half_probabilities() {
        let y = server_message(
            &bell(),
            1,
            &StrategyConfig::exact_rational(),
            &mut SeedTree::new(0).rng(),
        )
        .unwrap();
        assert!((y[0] - 0.25).abs() < 1e-12);
        assert!((y[1] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn honest_sampling_on_deterministic_circuit() {
        let c = parse_circuit("qubits 1\ngate H 0\ngate H 0").unwrap();
        let cfg = StrategyConfig::honest_with_samples(50);
        let y = server_message(&c, 1, &cfg, &mut SeedTree::new(0).rng()).unwrap();
        assert_eq!(y, vec![0.5, 0.0]);
    }

    #[test]
    fn perturbation_shifts_and_clamps() {
        let shifted = adversarial_message(StrategyKind::Perturbed(0.1), &[0.25, 0.25]).unwrap();
        assert!((shifted[0] - 0.35).abs() < 1e-12);
        let clamped = adversarial_message(StrategyKind::Perturbed(-1.0), &[0.25, 0.25]).unwrap();
        assert_eq!(clamped, vec![0.0, 0.0]);
    }

    #[test]
    fn sparse_list_contains_heavy_strings() {
        let list = build_sparse_list(&bell5(), &sp_default()).unwrap();
        assert_eq!(list.entries.len(), 24);
        assert!(list.entries.contains(&0b00000));
        assert!(list.entries.contains(&0b11000));
        let distinct: std::collections::BTreeSet<_> = list.entries.iter().collect();
        assert_eq!(distinct.len(), 24);
    }

    #[test]
    fn sparse_list_on_deterministic_circuit() {
        let c = parse_circuit("qubits 5\ngate X 0").unwrap();
        let list = build_sparse_list(&c, &sp_default()).unwrap();
        assert!(list.entries.contains(&0b10000));
    }

    #[test]
    fn sparse_list_rejects_oversized_parameters() {
        let c = bell();
        let sp = SparseParams::from_fraction(1, 1, 6, 0.001).unwrap();
        assert_eq!(sp.list_size, 12);
        assert_eq!(
            build_sparse_list(&c, &sp).unwrap_err(),
            StrategyError::ListTooLarge { l: 12, space: 4 }
        );
    }

    #[test]
    fn omit_heavy_swaps_one_mass_carrier() {
        let sp = sp_default();
        let (list, y) = sparse_message(
            &bell5(),
            &sp,
            &StrategyConfig::omit_heavy(),
            &mut SeedTree::new(0).rng(),
        )
        .unwrap();
        let heavy_count = list
            .entries
            .iter()
            .zip(&y)
            .filter(|(_, &v)| v > 0.2)
            .count();
        assert_eq!(heavy_count, 1, "one of the two heavy strings dropped");
        assert_eq!(list.entries.len(), 24);
    }

    #[test]
    fn uniform_support_is_fully_listed() {
        // Uniform over four outcomes on six qubits: every carrier of
        // mass 1/4 >= eps/t must appear in the list of 48.
        let c = parse_circuit("qubits 6\ngate H 0\ngate H 1").unwrap();
        let sp = SparseParams::from_fraction(4, 1, 6, 0.001).unwrap();
        assert_eq!(sp.list_size, 48);
        let list = build_sparse_list(&c, &sp).unwrap();
        for z in [0b000000u64, 0b010000, 0b100000, 0b110000] {
            assert!(list.entries.contains(&z), "missing {z:06b}");
        }
    }

    #[test]
    fn omitting_a_heavy_entry_lowers_the_expected_total() {
        // The closed-form vertex total of the omit-heavy list is
        // strictly below the faithful list's.
        let c = bell5();
        let sp = sp_default();
        let q = exact_output_dist(&c, 5).unwrap().probs;
        let d_exponent = 2 * (c.depth() as u32 - 1) * c.n;
        let total_of = |entries: &[u64]| -> f64 {
            let qs: Vec<f64> = entries.iter().map(|&z| q[z as usize]).collect();
            let ys: Vec<f64> = qs.iter().map(|v| v / 2.0).collect();
            crate::reward::sparse_expected_total(&qs, &ys, d_exponent, sp.list_size).unwrap()
        };
        let honest = build_sparse_list(&c, &sp).unwrap();
        let (omitted, _) = sparse_message(
            &c,
            &sp,
            &StrategyConfig::omit_heavy(),
            &mut SeedTree::new(0).rng(),
        )
        .unwrap();
        assert!(
            total_of(&omitted.entries) < total_of(&honest.entries),
            "dropping a heavy outcome must cost expected reward"
        );
    }

    #[test]
    fn off_list_mass_is_small_for_sparse_circuits() {
        // A Bell pair with 1% leakage onto qubit 4 is 0.01-approximately
        // 2-sparse; everything outside the list carries at most 2 eps.
        let a = 0.99f64.sqrt();
        let b = 0.01f64.sqrt();
        let c = parse_circuit(&format!(
            "qubits 5\ngate H 0\ngate CNOT 0 1\nmatgate 2 4 {a} 0 {nb} 0 {b} 0 {a} 0",
            nb = -b
        ))
        .unwrap();
        let sp = sp_default();
        let list = build_sparse_list(&c, &sp).unwrap();
        let q = exact_output_dist(&c, 5).unwrap().probs;
        let off_list: f64 = (0..q.len() as u64)
            .filter(|z| !list.entries.contains(z))
            .map(|z| q[z as usize])
            .sum();
        assert!(off_list <= 2.0 * sp.eps, "off-list mass {off_list}");
    }

    #[test]
    fn sparse_eta_concentrates_on_deterministic_circuit() {
        let c = parse_circuit("qubits 5\ngate X 0").unwrap();
        let sp = sp_default();
        let list = build_sparse_list(&c, &sp).unwrap();
        let mut rng = SeedTree::new(7).rng();
        let etas = sparse_eta(&c, &list, &sp, &mut rng).unwrap();
        let q = exact_output_dist(&c, 5).unwrap().probs;
        let l1: f64 = list
            .entries
            .iter()
            .zip(&etas)
            .map(|(&z, &e)| (e - q[z as usize]).abs())
            .sum();
        assert_eq!(l1, 0.0, "indicator distribution estimates exactly");
    }
}
