//! The verifier side of the delegation protocols.
//!
//! One round per outcome: the server reports a value `y_z`, the client
//! samples a path, flips a coin whose bias encodes the path summand, and
//! settles a scaled Brier reward. Truthful reporting of `q_z / 2` is the
//! unique maximizer of the expected reward, so normalizing the reports
//! yields the output-distribution estimate. A decision wrapper answers
//! promise problems from the single outcome `z = 1`, and a sparse
//! variant scores a server-chosen outcome list instead of all of
//! `{0,1}^k`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::{Circuit, SimError};
use crate::pathsum::{eval_g, PathAssignment, PathError};
use crate::rng::SeedTree;
use crate::sampler::{default_coin_precision, flip_biased_coin, SamplerError};
use crate::server::{
    server_message, server_message_for, sparse_message, SparseList, StrategyConfig, StrategyError,
};

/// Cap on measured qubits for the dense protocol; the outcome loop is
/// `2^k` long, so `k` stays logarithmic.
pub const K_CAP: u32 = 10;

#[derive(Debug, Error, PartialEq)]
pub enum ProtocolError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Path(#[from] PathError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Strategy(#[from] StrategyError),
    #[error("measured-qubit count {k} exceeds the cap of {cap}")]
    KCapExceeded { k: u32, cap: u32 },
    #[error("measured-qubit count {k} invalid for {n} qubits")]
    BadMeasuredCount { k: u32, n: u32 },
    #[error("server sent {got} reports, expected {expected}")]
    WrongReportCount { expected: usize, got: usize },
    #[error("report for outcome {z} is negative ({y})")]
    NegativeReport { z: u64, y: f64 },
    #[error("report for outcome {z} exceeds 1/2 ({y})")]
    ReportTooLarge { z: u64, y: f64 },
    #[error("reward argument y = {y} puts the normalized report outside [0, 1]")]
    RewardArgumentOutOfRange { y: f64 },
    #[error("all reports are zero; the normalized estimate is undefined")]
    DegenerateAggregation,
    #[error("decision thresholds overlap: need f > 6, got {f}")]
    ThresholdOverlap { f: f64 },
    #[error("server list has {got} entries, expected {expected}")]
    WrongListSize { expected: u64, got: usize },
    #[error("duplicate list entry {z}")]
    DuplicateListEntry { z: u64 },
    #[error("list entry {z} does not fit in {n} bits")]
    ListEntryOutOfRange { z: u64, n: u32 },
    #[error("invalid sparse parameters: {detail}")]
    BadSparseParams { detail: String },
}

/// Sparsity/accuracy parameters for the sparse protocol. The accuracy
/// is kept as an exact fraction so the list size `l = floor(2t/eps)`
/// is computed without float drift.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SparseParams {
    pub t: u64,
    pub eps_num: u64,
    pub eps_den: u64,
    pub eps: f64,
    pub delta: f64,
    pub list_size: u64,
}

impl SparseParams {
    /// `eps = eps_num / eps_den`, constrained to `(0, 1/6]`.
    pub fn from_fraction(
        t: u64,
        eps_num: u64,
        eps_den: u64,
        delta: f64,
    ) -> Result<Self, ProtocolError> {
        if t == 0 {
            return Err(ProtocolError::BadSparseParams {
                detail: "sparsity t must be at least 1".into(),
            });
        }
        if eps_num == 0 || eps_den == 0 || 6 * eps_num > eps_den {
            return Err(ProtocolError::BadSparseParams {
                detail: format!("eps = {eps_num}/{eps_den} must lie in (0, 1/6]"),
            });
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(ProtocolError::BadSparseParams {
                detail: format!("delta = {delta} must lie in (0, 1)"),
            });
        }
        let list_size = (2u128 * t as u128 * eps_den as u128 / eps_num as u128) as u64;
        Ok(SparseParams {
            t,
            eps_num,
            eps_den,
            eps: eps_num as f64 / eps_den as f64,
            delta,
            list_size,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Decision {
    Yes,
    No,
}

/// Settlement of one outcome's round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardRecord {
    pub z: u64,
    pub y: f64,
    pub b: u8,
    pub reward: f64,
    pub y_normalized: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub z: u64,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolParams {
    pub n: u32,
    pub depth: usize,
    pub k: u32,
    pub d_exponent: u32,
    pub divisor: u64,
    pub m_coin: u32,
    pub seed: u64,
    pub f: Option<f64>,
    pub h: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolReport {
    pub records: Vec<RewardRecord>,
    pub estimates: Vec<Estimate>,
    pub total_reward: f64,
    pub decision: Option<Decision>,
    pub params: ProtocolParams,
    pub transcript_ref: Option<String>,
}

/// Reports travel as nonnegative rationals with at most 64 fractional
/// bits; excess float precision is rounded away on receipt.
fn quantize_report(y: f64) -> f64 {
    (y * 64f64.exp2()).round() * (-64f64).exp2()
}

fn validate_report(z: u64, y: f64) -> Result<f64, ProtocolError> {
    if !y.is_finite() || y < 0.0 {
        return Err(ProtocolError::NegativeReport { z, y });
    }
    if y > 0.5 {
        return Err(ProtocolError::ReportTooLarge { z, y });
    }
    Ok(quantize_report(y))
}

/// The scaled Brier reward for a report `y` against coin outcome `b`:
/// `R = [2Yb + 2(1-Y)(1-b) - Y^2 - (1-Y)^2 + 1] / divisor` with the
/// normalized report `Y = (y + 2^(D-1)) / 2^D`.
///
/// `Y` sits near `1/2`, so everything is computed through the offset
/// `u = Y - 1/2 = y / 2^D`, giving `R = (3/2 + (2b-1) 2u - 2u^2) / divisor`
/// without cancellation.
pub fn brier_reward(y: f64, b: u8, d_exponent: u32, divisor: u64) -> Result<f64, ProtocolError> {
    if !y.is_finite() || y < 0.0 {
        return Err(ProtocolError::RewardArgumentOutOfRange { y });
    }
    let u = y * (-(d_exponent as f64)).exp2();
    if u > 0.5 {
        return Err(ProtocolError::RewardArgumentOutOfRange { y });
    }
    let sign = if b == 1 { 1.0 } else { -1.0 };
    Ok((1.5 + sign * 2.0 * u - 2.0 * u * u) / divisor as f64)
}

/// Normalize reports into a probability vector, `p_z = y_z / sum(y)`.
pub fn aggregate(y: &[f64]) -> Result<Vec<f64>, ProtocolError> {
    if let Some((z, &bad)) = y.iter().enumerate().find(|(_, &v)| v < 0.0) {
        return Err(ProtocolError::NegativeReport { z: z as u64, y: bad });
    }
    let total: f64 = y.iter().sum();
    if total <= 0.0 {
        return Err(ProtocolError::DegenerateAggregation);
    }
    Ok(y.iter().map(|v| v / total).collect())
}

fn dense_exponent(c: &Circuit, k: u32) -> u32 {
    (2 * c.depth() as u32 - 1) * c.n - k
}

fn sparse_exponent(c: &Circuit) -> u32 {
    2 * (c.depth() as u32 - 1) * c.n
}

/// One scored round for outcome `z`: sample a path, flip the coin with
/// bias `(1 + Re g(z, s)) / 2`, settle the reward.
fn play_round(
    c: &Circuit,
    z: u64,
    y: f64,
    k: u32,
    d_exponent: u32,
    divisor: u64,
    m_coin: u32,
    tree: &SeedTree,
) -> Result<RewardRecord, ProtocolError> {
    let mut path_rng = tree.child("path").child_idx(z).rng();
    let s = PathAssignment::sample_uniform(c.n, c.depth(), k, &mut path_rng);
    let bias = eval_g(c, z, &s)?.bias;
    let mut coin_rng = tree.child("coin").child_idx(z).rng();
    let b = flip_biased_coin(bias, m_coin, &mut coin_rng)?;
    let reward = brier_reward(y, b, d_exponent, divisor)?;
    Ok(RewardRecord {
        z,
        y,
        b,
        reward,
        y_normalized: 0.5 + y * (-(d_exponent as f64)).exp2(),
    })
}

/// The dense estimation protocol: one parallel round per outcome of the
/// first `k` qubits, then normalization of the reports.
pub fn run_protocol1(
    c: &Circuit,
    k: u32,
    strategy: &StrategyConfig,
    m_coin: Option<u32>,
    tree: &SeedTree,
) -> Result<ProtocolReport, ProtocolError> {
    if k == 0 || k > c.n {
        return Err(ProtocolError::BadMeasuredCount { k, n: c.n });
    }
    if k > K_CAP {
        return Err(ProtocolError::KCapExceeded { k, cap: K_CAP });
    }
    let d_exponent = dense_exponent(c, k);
    let divisor = 1u64 << k;
    let m_coin = m_coin.unwrap_or_else(|| default_coin_precision(d_exponent));

    let mut server_rng = tree.child("server").rng();
    let raw = server_message(c, k, strategy, &mut server_rng)?;
    if raw.len() != divisor as usize {
        return Err(ProtocolError::WrongReportCount {
            expected: divisor as usize,
            got: raw.len(),
        });
    }
    let mut reports = Vec::with_capacity(raw.len());
    for (z, &y) in raw.iter().enumerate() {
        reports.push(validate_report(z as u64, y)?);
    }

    let mut records = Vec::with_capacity(reports.len());
    for (z, &y) in reports.iter().enumerate() {
        records.push(play_round(c, z as u64, y, k, d_exponent, divisor, m_coin, tree)?);
    }

    let p = aggregate(&reports)?;
    let estimates = p
        .iter()
        .enumerate()
        .map(|(z, &p)| Estimate { z: z as u64, p })
        .collect();
    let total_reward = records.iter().map(|r| r.reward).sum();
    Ok(ProtocolReport {
        records,
        estimates,
        total_reward,
        decision: None,
        params: ProtocolParams {
            n: c.n,
            depth: c.depth(),
            k,
            d_exponent,
            divisor,
            m_coin,
            seed: tree.master(),
            f: strategy.schedule.map(|(f, _)| f),
            h: strategy.schedule.map(|(_, h)| h),
        },
        transcript_ref: None,
    })
}

/// Threshold decision on an estimate of `q_1`: YES at or above
/// `2/3 - 1/f`, NO at or below `1/3 + 1/f`, a fair coin in between.
pub fn decide_qcircuit(
    eta: f64,
    f: f64,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Result<Decision, ProtocolError> {
    if f <= 6.0 {
        return Err(ProtocolError::ThresholdOverlap { f });
    }
    if eta >= 2.0 / 3.0 - 1.0 / f {
        Ok(Decision::Yes)
    } else if eta <= 1.0 / 3.0 + 1.0 / f {
        Ok(Decision::No)
    } else if rand::Rng::gen::<bool>(rng) {
        Ok(Decision::Yes)
    } else {
        Ok(Decision::No)
    }
}

/// Decision wrapper for the promise problem on the first output qubit:
/// play the round for `z = 1` only, read `eta = 2 y_1`, and decide by
/// thresholds. The same `f` drives the server's schedule and the
/// decision margins.
pub fn run_decision(
    c: &Circuit,
    strategy: &StrategyConfig,
    f: f64,
    m_coin: Option<u32>,
    tree: &SeedTree,
) -> Result<ProtocolReport, ProtocolError> {
    let k = 1;
    let d_exponent = dense_exponent(c, k);
    let divisor = 2u64;
    let m_coin = m_coin.unwrap_or_else(|| default_coin_precision(d_exponent));

    let mut server_rng = tree.child("server").rng();
    let raw = server_message_for(c, k, &[1], strategy, &mut server_rng)?;
    if raw.len() != 1 {
        return Err(ProtocolError::WrongReportCount {
            expected: 1,
            got: raw.len(),
        });
    }
    let y = validate_report(1, raw[0])?;
    let record = play_round(c, 1, y, k, d_exponent, divisor, m_coin, tree)?;
    let eta = 2.0 * y;
    let decision = decide_qcircuit(eta, f, &mut tree.child("decision").rng())?;
    let total_reward = record.reward;
    Ok(ProtocolReport {
        records: vec![record],
        estimates: Vec::new(),
        total_reward,
        decision: Some(decision),
        params: ProtocolParams {
            n: c.n,
            depth: c.depth(),
            k,
            d_exponent,
            divisor,
            m_coin,
            seed: tree.master(),
            f: Some(f),
            h: strategy.schedule.map(|(_, h)| h),
        },
        transcript_ref: None,
    })
}

/// Normalize sparse estimates on a list into an l-sparse distribution,
/// `p_z = eta_z / sum(eta)`. When the estimates are within `3 eps` of
/// the true distribution in l1, the result is within `12 eps`.
pub fn recover_sparse_dist(
    list: &SparseList,
    eta: &[f64],
    _sp: &SparseParams,
) -> Result<Vec<f64>, ProtocolError> {
    if eta.len() != list.entries.len() {
        return Err(ProtocolError::WrongReportCount {
            expected: list.entries.len(),
            got: eta.len(),
        });
    }
    aggregate(eta)
}

/// The sparse estimation protocol: the server commits to a list of
/// `l = floor(2t/eps)` outcomes and is scored on each with divisor `l`
/// and path exponent `2(L-1)n`.
pub fn run_protocol_sparse(
    c: &Circuit,
    sp: &SparseParams,
    strategy: &StrategyConfig,
    m_coin: Option<u32>,
    tree: &SeedTree,
) -> Result<ProtocolReport, ProtocolError> {
    let k = c.n;
    let d_exponent = sparse_exponent(c);
    let divisor = sp.list_size;
    let m_coin = m_coin.unwrap_or_else(|| default_coin_precision(d_exponent));

    let mut server_rng = tree.child("server").rng();
    let (list, raw) = sparse_message(c, sp, strategy, &mut server_rng)?;
    if list.entries.len() as u64 != sp.list_size {
        return Err(ProtocolError::WrongListSize {
            expected: sp.list_size,
            got: list.entries.len(),
        });
    }
    let mut seen = std::collections::BTreeSet::new();
    for &z in &list.entries {
        if k < 64 && z >> k != 0 {
            return Err(ProtocolError::ListEntryOutOfRange { z, n: k });
        }
        if !seen.insert(z) {
            return Err(ProtocolError::DuplicateListEntry { z });
        }
    }
    if raw.len() != list.entries.len() {
        return Err(ProtocolError::WrongReportCount {
            expected: list.entries.len(),
            got: raw.len(),
        });
    }
    let mut reports = Vec::with_capacity(raw.len());
    for (&z, &y) in list.entries.iter().zip(&raw) {
        reports.push(validate_report(z, y)?);
    }

    let mut records = Vec::with_capacity(reports.len());
    for (&z, &y) in list.entries.iter().zip(&reports) {
        records.push(play_round(c, z, y, k, d_exponent, divisor, m_coin, tree)?);
    }

    let etas: Vec<f64> = reports.iter().map(|y| 2.0 * y).collect();
    let p = recover_sparse_dist(&list, &etas, sp)?;
    let estimates = list
        .entries
        .iter()
        .zip(&p)
        .map(|(&z, &p)| Estimate { z, p })
        .collect();
    let total_reward = records.iter().map(|r| r.reward).sum();
    Ok(ProtocolReport {
        records,
        estimates,
        total_reward,
        decision: None,
        params: ProtocolParams {
            n: c.n,
            depth: c.depth(),
            k,
            d_exponent,
            divisor,
            m_coin,
            seed: tree.master(),
            f: strategy.schedule.map(|(f, _)| f),
            h: strategy.schedule.map(|(_, h)| h),
        },
        transcript_ref: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{exact_output_dist, parse_circuit};
    use proptest::prelude::*;

    fn hh() -> Circuit {
        parse_circuit("qubits 1\ngate H 0\ngate H 0").unwrap()
    }

    fn bell() -> Circuit {
        parse_circuit("qubits 2\ngate H 0\ngate CNOT 0 1").unwrap()
    }

    fn bell5() -> Circuit {
        parse_circuit("qubits 5\ngate H 0\ngate CNOT 0 1").unwrap()
    }

    #[test]
    fn brier_midpoint_is_three_quarters() {
        for d in [1u32, 2, 5, 20] {
            assert!((brier_reward(0.0, 1, d, 2).unwrap() - 0.75).abs() < 1e-15);
            assert!((brier_reward(0.0, 0, d, 2).unwrap() - 0.75).abs() < 1e-15);
        }
    }

    #[test]
    fn brier_reference_value() {
        let r = brier_reward(0.5, 1, 2, 2).unwrap();
        assert!((r - 0.859375).abs() < 1e-15);
    }

    #[test]
    fn brier_rejects_out_of_range_reports() {
        assert!(matches!(
            brier_reward(-0.1, 1, 2, 2),
            Err(ProtocolError::RewardArgumentOutOfRange { .. })
        ));
        assert!(matches!(
            brier_reward(1.0, 1, 0, 2),
            Err(ProtocolError::RewardArgumentOutOfRange { .. })
        ));
    }

    #[test]
    fn aggregate_normalizes() {
        let p = aggregate(&[0.3, 0.1]).unwrap();
        assert!((p[0] - 0.75).abs() < 1e-15);
        assert!((p[1] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn aggregate_is_scale_invariant_on_half_probabilities() {
        let q = [0.125, 0.5, 0.25, 0.125];
        let y: Vec<f64> = q.iter().map(|v| v / 2.0).collect();
        let p = aggregate(&y).unwrap();
        for (a, b) in p.iter().zip(&q) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn aggregate_rejects_all_zero() {
        assert_eq!(
            aggregate(&[0.0, 0.0]).unwrap_err(),
            ProtocolError::DegenerateAggregation
        );
    }

    #[test]
    fn protocol1_exact_rational_on_hh() {
        let tree = SeedTree::new(11);
        let report = run_protocol1(
            &hh(),
            1,
            &StrategyConfig::exact_rational(),
            None,
            &tree,
        )
        .unwrap();
        assert!((report.estimates[0].p - 1.0).abs() < 1e-12);
        assert!(report.estimates[1].p.abs() < 1e-12);
        assert_eq!(report.params.d_exponent, 2);
    }

    #[test]
    fn protocol1_rejects_zero_reports() {
        let tree = SeedTree::new(11);
        let err =
            run_protocol1(&hh(), 1, &StrategyConfig::fixed(0.0), None, &tree).unwrap_err();
        assert_eq!(err, ProtocolError::DegenerateAggregation);
    }

    #[test]
    fn protocol1_rejects_oversized_reports() {
        let tree = SeedTree::new(11);
        let err =
            run_protocol1(&hh(), 1, &StrategyConfig::fixed(0.9), None, &tree).unwrap_err();
        assert!(matches!(err, ProtocolError::ReportTooLarge { .. }));
    }

    #[test]
    fn protocol1_enforces_k_cap() {
        let c = parse_circuit("qubits 12\ngate H 0").unwrap();
        let tree = SeedTree::new(0);
        let err = run_protocol1(&c, 11, &StrategyConfig::exact_rational(), None, &tree)
            .unwrap_err();
        assert_eq!(err, ProtocolError::KCapExceeded { k: 11, cap: K_CAP });
    }

    #[test]
    fn protocol1_is_deterministic_per_seed() {
        let run = |seed: u64| {
            run_protocol1(
                &bell(),
                1,
                &StrategyConfig::honest_with_samples(500),
                None,
                &SeedTree::new(seed),
            )
            .unwrap()
        };
        assert_eq!(run(3), run(3));
        assert_ne!(run(3).records, run(4).records);
    }

    #[test]
    fn decision_thresholds() {
        let mut rng = SeedTree::new(1).rng();
        assert_eq!(decide_qcircuit(0.7, 10.0, &mut rng).unwrap(), Decision::Yes);
        assert_eq!(decide_qcircuit(0.3, 10.0, &mut rng).unwrap(), Decision::No);
        assert!(matches!(
            decide_qcircuit(0.5, 6.0, &mut rng),
            Err(ProtocolError::ThresholdOverlap { .. })
        ));
    }

    #[test]
    fn decision_middle_zone_is_uniform() {
        let mut yes = 0;
        for seed in 0..2000u64 {
            let mut rng = SeedTree::new(seed).child("mid").rng();
            if decide_qcircuit(0.5, 10.0, &mut rng).unwrap() == Decision::Yes {
                yes += 1;
            }
        }
        // 3 sigma around 1000 is about 67.
        assert!((933..=1067).contains(&yes), "yes count {yes}");
    }

    #[test]
    fn decision_wrapper_on_constructed_instances() {
        let yes_instance = parse_circuit("qubits 1\ngate X 0\ngate X 0\ngate X 0").unwrap();
        let report = run_decision(
            &yes_instance,
            &StrategyConfig::exact_rational(),
            10.0,
            None,
            &SeedTree::new(5),
        )
        .unwrap();
        assert_eq!(report.decision, Some(Decision::Yes));

        let no_instance = parse_circuit("qubits 1\ngate X 0\ngate X 0").unwrap();
        let report = run_decision(
            &no_instance,
            &StrategyConfig::exact_rational(),
            10.0,
            None,
            &SeedTree::new(5),
        )
        .unwrap();
        assert_eq!(report.decision, Some(Decision::No));
    }

    #[test]
    fn sparse_params_validate() {
        let sp = SparseParams::from_fraction(2, 1, 6, 0.001).unwrap();
        assert_eq!(sp.list_size, 24);
        assert!(SparseParams::from_fraction(2, 1, 5, 0.001).is_err());
        assert!(SparseParams::from_fraction(0, 1, 6, 0.001).is_err());
        assert!(SparseParams::from_fraction(2, 1, 6, 1.0).is_err());
    }

    #[test]
    fn sparse_protocol_recovers_bell_distribution() {
        let sp = SparseParams::from_fraction(2, 1, 6, 0.001).unwrap();
        let report = run_protocol_sparse(
            &bell5(),
            &sp,
            &StrategyConfig::exact_rational(),
            None,
            &SeedTree::new(9),
        )
        .unwrap();
        assert_eq!(report.records.len(), 24);
        assert_eq!(report.params.divisor, 24);
        assert_eq!(report.params.d_exponent, 2 * (2 - 1) * 5);
        let q = exact_output_dist(&bell5(), 5).unwrap().probs;
        let l1: f64 = report
            .estimates
            .iter()
            .map(|e| (e.p - q[e.z as usize]).abs())
            .sum();
        assert!(l1 < 1e-12, "exact reports recover exactly, l1 = {l1}");
        for r in &report.records {
            assert!(r.reward >= 0.0 && r.reward <= 2.0 / 24.0);
        }
    }

    #[test]
    fn recover_is_normalization_invariant() {
        let sp = SparseParams::from_fraction(2, 1, 6, 0.001).unwrap();
        let list = SparseList {
            n: 5,
            entries: (0..24).collect(),
        };
        let mut eta = vec![0.0; 24];
        eta[0] = 0.5;
        eta[3] = 0.5;
        let p = recover_sparse_dist(&list, &eta, &sp).unwrap();
        let scaled: Vec<f64> = eta.iter().map(|v| v * 1.01).collect();
        let p2 = recover_sparse_dist(&list, &scaled, &sp).unwrap();
        for (a, b) in p.iter().zip(&p2) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn recover_meets_twelve_eps_bound_under_noise() {
        let sp = SparseParams::from_fraction(2, 1, 6, 0.001).unwrap();
        let q = exact_output_dist(&bell5(), 5).unwrap().probs;
        let list = crate::server::build_sparse_list(&bell5(), &sp).unwrap();
        let mut rng = SeedTree::new(4).rng();
        let noise_cap = sp.eps / sp.list_size as f64;
        let eta: Vec<f64> = list
            .entries
            .iter()
            .map(|&z| {
                (q[z as usize] + rand::Rng::gen_range(&mut rng, -noise_cap..noise_cap)).max(0.0)
            })
            .collect();
        let l1_eta: f64 = q
            .iter()
            .enumerate()
            .map(|(z, &qz)| {
                let est = list
                    .entries
                    .iter()
                    .position(|&e| e == z as u64)
                    .map_or(0.0, |i| eta[i]);
                (est - qz).abs()
            })
            .sum();
        assert!(l1_eta <= 3.0 * sp.eps, "precondition of the bound");
        let p = recover_sparse_dist(&list, &eta, &sp).unwrap();
        let l1_p: f64 = q
            .iter()
            .enumerate()
            .map(|(z, &qz)| {
                let est = list
                    .entries
                    .iter()
                    .position(|&e| e == z as u64)
                    .map_or(0.0, |i| p[i]);
                (est - qz).abs()
            })
            .sum();
        assert!(l1_p <= 12.0 * sp.eps, "l1 {l1_p} vs {}", 12.0 * sp.eps);
    }

    #[test]
    fn quantized_reports_keep_precision() {
        assert_eq!(quantize_report(0.25), 0.25);
        assert_eq!(quantize_report(1.0 / 3.0), 1.0 / 3.0);
        let tiny = (-100f64).exp2();
        assert_eq!(quantize_report(tiny), 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(500))]

        #[test]
        fn reward_stays_in_band(y in 0.0f64..=0.5, b in 0u8..=1, d in 0u32..=24, k in 1u32..=6) {
            let divisor = 1u64 << k;
            let r = brier_reward(y, b, d, divisor).unwrap();
            prop_assert!(r >= 0.0);
            prop_assert!(r <= 2.0 / divisor as f64 + 1e-15);
        }

        #[test]
        fn total_reward_envelope(seed in 0u64..1_000_000, d in 1u32..=20, k in 1u32..=3) {
            // For any reports in [0, 1/2] and any coin outcomes the total
            // sits within 3/2 +- 4/2^D.
            let mut rng = SeedTree::new(seed).child("envelope").rng();
            let divisor = 1u64 << k;
            let mut total = 0.0;
            for _ in 0..divisor {
                let y = rand::Rng::gen_range(&mut rng, 0.0..=0.5);
                let b = u8::from(rand::Rng::gen::<bool>(&mut rng));
                total += brier_reward(y, b, d, divisor).unwrap();
            }
            let slack = 4.0 * (-(d as f64)).exp2();
            prop_assert!(total >= 1.5 - slack - 1e-12);
            prop_assert!(total <= 1.5 + slack + 1e-12);
        }

        #[test]
        fn aggregation_yields_distribution(values in proptest::collection::vec(0.0f64..0.5, 2..16)) {
            prop_assume!(values.iter().sum::<f64>() > 0.0);
            let p = aggregate(&values).unwrap();
            let total: f64 = p.iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
            prop_assert!(p.iter().all(|&v| v >= 0.0));
        }

        #[test]
        fn recovery_bound_on_random_sparse_vectors(seed in 0u64..1_000_000) {
            // Whenever the estimates sit within 3 eps of the truth in l1,
            // normalization lands within 12 eps.
            let sp = SparseParams::from_fraction(2, 1, 6, 0.001).unwrap();
            let mut rng = SeedTree::new(seed).child("recover").rng();
            let l = sp.list_size as usize;
            let support = rand::Rng::gen_range(&mut rng, 1..=4usize);
            let mut q = vec![0.0f64; l];
            for slot in 0..support {
                q[slot] = rand::Rng::gen_range(&mut rng, 0.0..1.0);
            }
            let total: f64 = q.iter().sum();
            for v in &mut q {
                *v /= total;
            }
            // Per-entry noise budget eps/l keeps the l1 error below eps.
            let noise = sp.eps / l as f64;
            let eta: Vec<f64> = q
                .iter()
                .map(|&v| (v + rand::Rng::gen_range(&mut rng, -noise..noise)).max(0.0))
                .collect();
            let l1_eta: f64 = q.iter().zip(&eta).map(|(a, b)| (a - b).abs()).sum();
            prop_assume!(l1_eta <= 3.0 * sp.eps && eta.iter().sum::<f64>() > 0.0);
            let list = SparseList { n: 5, entries: (0..l as u64).collect() };
            let p = recover_sparse_dist(&list, &eta, &sp).unwrap();
            let l1_p: f64 = q.iter().zip(&p).map(|(a, b)| (a - b).abs()).sum();
            prop_assert!(l1_p <= 12.0 * sp.eps);
        }
    }
}
