//! Meta-protocols over a parameterized interactive-proof acceptance
//! oracle.
//!
//! The wrapped proof systems are abstracted to their declared acceptance
//! probabilities: `completeness` on YES instances under honest provers
//! and `soundness` on NO instances under the best malicious strategy.
//! The wrappers then transfer the completeness-soundness gap into a
//! reward gap (claim a bit, simulate the branch, pay on acceptance), and
//! conversions between reward-based and acceptance-based protocols plus
//! majority-vote amplification are built on the same engine.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::client::Decision;

#[derive(Debug, Error, PartialEq)]
pub enum MetaError {
    #[error("invalid oracle: {detail}")]
    InvalidOracle { detail: String },
    #[error("settled reward {reward} exceeds the declared bound {bound}")]
    RewardBoundViolated { reward: f64, bound: f64 },
    #[error("incorrectness-margin witness {witness} is not positive")]
    MarginViolated { witness: f64 },
    #[error("amplification needs an odd repetition count, got {reps}")]
    RepetitionsMustBeOdd { reps: u64 },
    #[error("this wrapper needs a single-prover oracle, got {provers} provers")]
    NeedSingleProver { provers: usize },
}

/// Declared acceptance behavior of an interactive proof or argument
/// system for some language.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IpOracle {
    /// Acceptance probability on YES instances with honest provers.
    pub completeness: f64,
    /// Best acceptance probability on NO instances.
    pub soundness: f64,
    pub provers: usize,
    pub rounds: usize,
}

impl IpOracle {
    pub fn new(
        completeness: f64,
        soundness: f64,
        provers: usize,
        rounds: usize,
    ) -> Result<IpOracle, MetaError> {
        if !(0.0..=1.0).contains(&completeness)
            || !(0.0..=1.0).contains(&soundness)
            || completeness < soundness
        {
            return Err(MetaError::InvalidOracle {
                detail: format!("(c', s') = ({completeness}, {soundness})"),
            });
        }
        if provers == 0 {
            return Err(MetaError::InvalidOracle {
                detail: "at least one prover required".into(),
            });
        }
        Ok(IpOracle {
            completeness,
            soundness,
            provers,
            rounds,
        })
    }

    /// Acceptance probability when the provers play their best strategy
    /// for getting accepted: honest on YES instances, malicious on NO.
    pub fn accept_prob(&self, yes_instance: bool) -> f64 {
        if yes_instance {
            self.completeness
        } else {
            self.soundness
        }
    }

    pub fn simulate(&self, yes_instance: bool, rng: &mut ChaCha8Rng) -> bool {
        rng.gen::<f64>() < self.accept_prob(yes_instance)
    }
}

/// How the server picks its claim bit before the branch simulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BitPolicy {
    /// Compare the declared expected rewards of the two branches and take
    /// the argmax, but err with the given rate; models a polynomially
    /// bounded server's imperfect branch choice.
    Rational { error_rate: f64 },
    Forced(bool),
}

impl BitPolicy {
    pub fn rational() -> BitPolicy {
        BitPolicy::Rational { error_rate: 0.0 }
    }

    fn choose(&self, value_if_one: f64, value_if_zero: f64, rng: &mut ChaCha8Rng) -> bool {
        match *self {
            BitPolicy::Forced(bit) => bit,
            BitPolicy::Rational { error_rate } => {
                let best = value_if_one >= value_if_zero;
                if error_rate > 0.0 && rng.gen::<f64>() < error_rate {
                    !best
                } else {
                    best
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Language,
    Complement,
}

/// One run of a claim-then-simulate wrapper.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaTranscript {
    pub claim_bit: u8,
    pub branch: Branch,
    pub accepted: bool,
    /// One entry per server; each is `1/M` on acceptance, else `0`.
    pub rewards: Vec<f64>,
    pub conclusion: Decision,
}

impl MetaTranscript {
    pub fn total_reward(&self) -> f64 {
        self.rewards.iter().sum()
    }
}

fn run_branch_wrapper(
    oracle_l: &IpOracle,
    oracle_lbar: &IpOracle,
    truth: Decision,
    policy: &BitPolicy,
    rng: &mut ChaCha8Rng,
) -> MetaTranscript {
    let truth_yes = truth == Decision::Yes;
    let value_if_one = oracle_l.accept_prob(truth_yes);
    let value_if_zero = oracle_lbar.accept_prob(!truth_yes);
    let claim = policy.choose(value_if_one, value_if_zero, rng);
    let (branch, oracle, yes_instance) = if claim {
        (Branch::Language, oracle_l, truth_yes)
    } else {
        (Branch::Complement, oracle_lbar, !truth_yes)
    };
    let accepted = oracle.simulate(yes_instance, rng);
    let per_server = if accepted {
        1.0 / oracle.provers as f64
    } else {
        0.0
    };
    MetaTranscript {
        claim_bit: u8::from(claim),
        branch,
        accepted,
        rewards: vec![per_server; oracle.provers],
        conclusion: if claim { Decision::Yes } else { Decision::No },
    }
}

/// Multi-server wrapper: a server claims `b`, the parties simulate the
/// proof system for the language (`b = 1`) or its complement (`b = 0`),
/// each of the `M` servers is paid `1/M` on acceptance, and the client
/// concludes YES iff `b = 1`.
pub fn run_protocol2(
    oracle_l: &IpOracle,
    oracle_lbar: &IpOracle,
    truth: Decision,
    policy: &BitPolicy,
    rng: &mut ChaCha8Rng,
) -> MetaTranscript {
    run_branch_wrapper(oracle_l, oracle_lbar, truth, policy, rng)
}

/// Single-server wrapper over an argument system: the same construction
/// with one prover and reward 1. The complement system shares the
/// declared constants.
pub fn run_protocol3(
    oracle: &IpOracle,
    truth: Decision,
    policy: &BitPolicy,
    rng: &mut ChaCha8Rng,
) -> Result<MetaTranscript, MetaError> {
    if oracle.provers != 1 {
        return Err(MetaError::NeedSingleProver {
            provers: oracle.provers,
        });
    }
    Ok(run_branch_wrapper(oracle, oracle, truth, policy, rng))
}

/// A reward-settling delegation protocol that the conversion machinery
/// can wrap: one run yields a claim bit and a settled reward, and the
/// declared expectations witness the incorrectness margin.
pub trait RdqcProtocol {
    fn run(&self, truth: Decision, policy: &BitPolicy, rng: &mut ChaCha8Rng) -> RdqcOutcome;
    /// Reward upper bound `c`.
    fn reward_bound(&self) -> f64;
    /// Declared expected reward of the rational strategy on YES
    /// instances (a lower bound the strategy actually meets).
    fn yes_expectation(&self) -> f64;
    /// Declared best expected reward among answer-flipping strategies.
    fn incorrect_expectation(&self) -> f64;
    /// The policy that attains [`yes_expectation`](Self::yes_expectation).
    fn rational_policy(&self) -> BitPolicy {
        BitPolicy::rational()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RdqcOutcome {
    pub claim_bit: u8,
    pub reward: f64,
}

/// The margin `c_YES - max_incorrect E[R]` the conversions rely on.
pub fn incorrectness_margin(protocol: &dyn RdqcProtocol) -> f64 {
    protocol.yes_expectation() - protocol.incorrect_expectation()
}

/// Reward-based protocol built from single-prover proof oracles: claim a
/// bit, simulate the branch, reward 1 on acceptance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IpBackedRdqc {
    pub oracle_l: IpOracle,
    pub oracle_lbar: IpOracle,
    pub error_rate: f64,
}

impl IpBackedRdqc {
    /// Fails when the declared constants cannot witness a positive
    /// margin, e.g. a degenerate oracle with `c' = s'`.
    pub fn new(
        oracle_l: IpOracle,
        oracle_lbar: IpOracle,
        error_rate: f64,
    ) -> Result<IpBackedRdqc, MetaError> {
        for oracle in [&oracle_l, &oracle_lbar] {
            if oracle.provers != 1 {
                return Err(MetaError::NeedSingleProver {
                    provers: oracle.provers,
                });
            }
        }
        let protocol = IpBackedRdqc {
            oracle_l,
            oracle_lbar,
            error_rate,
        };
        let witness = incorrectness_margin(&protocol);
        if witness <= 0.0 {
            return Err(MetaError::MarginViolated { witness });
        }
        Ok(protocol)
    }

    pub fn run_once(
        &self,
        truth: Decision,
        policy: &BitPolicy,
        rng: &mut ChaCha8Rng,
    ) -> MetaTranscript {
        run_branch_wrapper(&self.oracle_l, &self.oracle_lbar, truth, policy, rng)
    }
}

impl RdqcProtocol for IpBackedRdqc {
    fn run(&self, truth: Decision, policy: &BitPolicy, rng: &mut ChaCha8Rng) -> RdqcOutcome {
        let transcript = self.run_once(truth, policy, rng);
        RdqcOutcome {
            claim_bit: transcript.claim_bit,
            reward: transcript.total_reward(),
        }
    }

    fn reward_bound(&self) -> f64 {
        1.0
    }

    fn yes_expectation(&self) -> f64 {
        self.oracle_l.completeness * (1.0 - self.error_rate)
    }

    fn incorrect_expectation(&self) -> f64 {
        self.oracle_l.soundness.max(self.oracle_lbar.soundness)
    }

    fn rational_policy(&self) -> BitPolicy {
        BitPolicy::Rational {
            error_rate: self.error_rate,
        }
    }
}

/// Conversion from proof oracles to a reward-based run: structurally the
/// multi-server wrapper with one prover and reward 1.
pub fn ip_to_rdqc(
    oracle_l: &IpOracle,
    oracle_lbar: &IpOracle,
    truth: Decision,
    policy: &BitPolicy,
    rng: &mut ChaCha8Rng,
) -> Result<MetaTranscript, MetaError> {
    let protocol = IpBackedRdqc::new(*oracle_l, *oracle_lbar, 0.0)?;
    Ok(protocol.run_once(truth, policy, rng))
}

/// Conversion from a reward-based protocol to an acceptance decision:
/// simulate a run, then accept with probability `R/c` when the claim is
/// 1 and reject otherwise.
pub fn rdqc_to_ip(
    base: &dyn RdqcProtocol,
    truth: Decision,
    policy: &BitPolicy,
    rng: &mut ChaCha8Rng,
) -> Result<bool, MetaError> {
    let outcome = base.run(truth, policy, rng);
    let bound = base.reward_bound();
    if outcome.reward > bound * (1.0 + 1e-12) {
        return Err(MetaError::RewardBoundViolated {
            reward: outcome.reward,
            bound,
        });
    }
    if outcome.claim_bit == 1 {
        Ok(rng.gen::<f64>() < outcome.reward / bound)
    } else {
        Ok(false)
    }
}

/// Exact upper binomial tail `P[Bin(n, p) >= k0]`.
pub fn binomial_tail_ge(n: u64, p: f64, k0: u64) -> f64 {
    assert!((0.0..=1.0).contains(&p));
    if k0 == 0 {
        return 1.0;
    }
    if k0 > n {
        return 0.0;
    }
    if p == 0.0 {
        return 0.0;
    }
    if p == 1.0 {
        return 1.0;
    }
    let mut pmf = (1.0 - p).powi(n as i32);
    let mut tail = if k0 == 0 { pmf } else { 0.0 };
    for j in 0..n {
        pmf *= (n - j) as f64 / (j + 1) as f64 * (p / (1.0 - p));
        if j + 1 >= k0 {
            tail += pmf;
        }
    }
    tail.min(1.0)
}

/// `P[majority of reps accepts]` for per-run acceptance `p`.
pub fn majority_accept_probability(reps: u64, p: f64) -> f64 {
    binomial_tail_ge(reps, p, reps / 2 + 1)
}

/// Repetition-and-majority amplification of a reward-based protocol:
/// convert to acceptance runs, take the majority of `reps` independent
/// runs, and convert back with reward 1 on majority acceptance.
#[derive(Clone, Copy)]
pub struct AmplifiedRdqc<'a> {
    base: &'a dyn RdqcProtocol,
    reps: u64,
    amplified_yes: f64,
    amplified_incorrect: f64,
}

impl<'a> AmplifiedRdqc<'a> {
    pub fn reps(&self) -> u64 {
        self.reps
    }
}

pub fn amplify_gap(base: &dyn RdqcProtocol, reps: u64) -> Result<AmplifiedRdqc<'_>, MetaError> {
    if reps % 2 == 0 || reps == 0 {
        return Err(MetaError::RepetitionsMustBeOdd { reps });
    }
    let witness = incorrectness_margin(base);
    if witness <= 0.0 {
        return Err(MetaError::MarginViolated { witness });
    }
    let c = base.reward_bound();
    let p_yes = base.yes_expectation() / c;
    let p_no = base.incorrect_expectation() / c;
    Ok(AmplifiedRdqc {
        base,
        reps,
        amplified_yes: majority_accept_probability(reps, p_yes),
        amplified_incorrect: majority_accept_probability(reps, p_no),
    })
}

impl RdqcProtocol for AmplifiedRdqc<'_> {
    fn run(&self, truth: Decision, policy: &BitPolicy, rng: &mut ChaCha8Rng) -> RdqcOutcome {
        let truth_yes = truth == Decision::Yes;
        let value_if_one = if truth_yes {
            self.amplified_yes
        } else {
            self.amplified_incorrect
        };
        let value_if_zero = if truth_yes {
            self.amplified_incorrect
        } else {
            self.amplified_yes
        };
        let claim = policy.choose(value_if_one, value_if_zero, rng);
        // Branch instance is YES for the simulated language exactly when
        // the claim matches the truth; honest provers play the base's
        // rational policy there, acceptance-maximizing ones force b = 1.
        let yes_instance = claim == truth_yes;
        let (inner_truth, inner_policy) = if yes_instance {
            (Decision::Yes, self.base.rational_policy())
        } else {
            (Decision::No, BitPolicy::Forced(true))
        };
        let mut accepts = 0u64;
        for _ in 0..self.reps {
            if rdqc_to_ip(self.base, inner_truth, &inner_policy, rng)
                .expect("base protocol honors its reward bound")
            {
                accepts += 1;
            }
        }
        let accepted = accepts >= self.reps / 2 + 1;
        RdqcOutcome {
            claim_bit: u8::from(claim),
            reward: if accepted { 1.0 } else { 0.0 },
        }
    }

    fn reward_bound(&self) -> f64 {
        1.0
    }

    fn yes_expectation(&self) -> f64 {
        self.amplified_yes
    }

    fn incorrect_expectation(&self) -> f64 {
        self.amplified_incorrect
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedTree;

    fn standard_oracle(provers: usize) -> IpOracle {
        IpOracle::new(2.0 / 3.0, 1.0 / 3.0, provers, 1).unwrap()
    }

    #[test]
    fn oracle_validation() {
        assert!(IpOracle::new(0.5, 0.7, 1, 1).is_err());
        assert!(IpOracle::new(1.1, 0.1, 1, 1).is_err());
        assert!(IpOracle::new(0.5, 0.5, 1, 1).is_ok(), "degenerate allowed");
        assert!(IpOracle::new(0.7, 0.1, 0, 1).is_err());
    }

    #[test]
    fn rational_policy_tracks_truth() {
        let oracle = standard_oracle(2);
        let mut rng = SeedTree::new(1).rng();
        for truth in [Decision::Yes, Decision::No] {
            let t = run_protocol2(&oracle, &oracle, truth, &BitPolicy::rational(), &mut rng);
            assert_eq!(t.conclusion, truth);
            assert_eq!(t.claim_bit == 1, truth == Decision::Yes);
        }
    }

    #[test]
    fn protocol2_pays_each_server_a_share() {
        let oracle = standard_oracle(2);
        let mut rng = SeedTree::new(2).rng();
        for _ in 0..200 {
            let t = run_protocol2(
                &oracle,
                &oracle,
                Decision::Yes,
                &BitPolicy::rational(),
                &mut rng,
            );
            assert_eq!(t.rewards.len(), 2);
            if t.accepted {
                assert_eq!(t.rewards, vec![0.5, 0.5]);
                assert!((t.total_reward() - 1.0).abs() < 1e-15);
            } else {
                assert_eq!(t.total_reward(), 0.0);
            }
        }
    }

    #[test]
    fn protocol2_acceptance_rates_transfer() {
        let oracle = standard_oracle(2);
        let trials = 10_000;
        let mut accept_rational = 0u64;
        let mut accept_forced_wrong = 0u64;
        for i in 0..trials {
            let mut rng = SeedTree::new(7).child_idx(i).rng();
            if run_protocol2(
                &oracle,
                &oracle,
                Decision::Yes,
                &BitPolicy::rational(),
                &mut rng,
            )
            .accepted
            {
                accept_rational += 1;
            }
            let mut rng = SeedTree::new(8).child_idx(i).rng();
            if run_protocol2(
                &oracle,
                &oracle,
                Decision::Yes,
                &BitPolicy::Forced(false),
                &mut rng,
            )
            .accepted
            {
                accept_forced_wrong += 1;
            }
        }
        let rational = accept_rational as f64 / trials as f64;
        let wrong = accept_forced_wrong as f64 / trials as f64;
        assert!((rational - 2.0 / 3.0).abs() <= 0.02, "rational {rational}");
        assert!(wrong <= 1.0 / 3.0 + 0.02, "forced-wrong {wrong}");
    }

    #[test]
    fn gap_transfer_band_with_branch_errors() {
        // With branch-error rate rho the measured gap sits within
        // [c' - s' - rho, c' - s'] up to sampling noise.
        let oracle = standard_oracle(2);
        let rho = 0.1;
        let trials = 20_000u64;
        let mut rational_total = 0.0;
        let mut adversary_total = 0.0;
        for i in 0..trials {
            let mut rng = SeedTree::new(40).child_idx(i).rng();
            rational_total += run_protocol2(
                &oracle,
                &oracle,
                Decision::Yes,
                &BitPolicy::Rational { error_rate: rho },
                &mut rng,
            )
            .total_reward();
            let mut rng = SeedTree::new(41).child_idx(i).rng();
            adversary_total += run_protocol2(
                &oracle,
                &oracle,
                Decision::Yes,
                &BitPolicy::Forced(false),
                &mut rng,
            )
            .total_reward();
        }
        let gap = (rational_total - adversary_total) / trials as f64;
        let cs_gap = 1.0 / 3.0;
        assert!(
            gap >= cs_gap - rho - 0.02 && gap <= cs_gap + 0.02,
            "gap {gap} outside [{}, {}]",
            cs_gap - rho,
            cs_gap
        );
    }

    #[test]
    fn protocol3_needs_single_prover() {
        let oracle = standard_oracle(2);
        let mut rng = SeedTree::new(0).rng();
        assert!(matches!(
            run_protocol3(&oracle, Decision::Yes, &BitPolicy::rational(), &mut rng),
            Err(MetaError::NeedSingleProver { provers: 2 })
        ));
    }

    #[test]
    fn protocol3_symmetric_on_no_instances() {
        let oracle = IpOracle::new(1.0 - 1e-6, 1.0 / 3.0, 1, 1).unwrap();
        let mut rng = SeedTree::new(3).rng();
        let t = run_protocol3(&oracle, Decision::No, &BitPolicy::rational(), &mut rng).unwrap();
        assert_eq!(t.claim_bit, 0);
        assert_eq!(t.conclusion, Decision::No);
        assert_eq!(t.branch, Branch::Complement);
    }

    struct DeterministicRdqc {
        reward_on_yes: f64,
        bound: f64,
    }

    impl RdqcProtocol for DeterministicRdqc {
        fn run(&self, truth: Decision, policy: &BitPolicy, rng: &mut ChaCha8Rng) -> RdqcOutcome {
            let claim = policy.choose(
                f64::from(truth == Decision::Yes),
                f64::from(truth == Decision::No),
                rng,
            );
            RdqcOutcome {
                claim_bit: u8::from(claim),
                reward: if claim { self.reward_on_yes } else { 0.0 },
            }
        }
        fn reward_bound(&self) -> f64 {
            self.bound
        }
        fn yes_expectation(&self) -> f64 {
            self.reward_on_yes
        }
        fn incorrect_expectation(&self) -> f64 {
            0.0
        }
    }

    #[test]
    fn conversion_accepts_full_reward_deterministically() {
        let base = DeterministicRdqc {
            reward_on_yes: 0.8,
            bound: 0.8,
        };
        let mut rng = SeedTree::new(4).rng();
        for _ in 0..100 {
            assert!(rdqc_to_ip(&base, Decision::Yes, &BitPolicy::rational(), &mut rng).unwrap());
        }
    }

    #[test]
    fn conversion_rejects_claim_zero() {
        let base = DeterministicRdqc {
            reward_on_yes: 0.8,
            bound: 0.8,
        };
        let mut rng = SeedTree::new(4).rng();
        for _ in 0..100 {
            assert!(!rdqc_to_ip(&base, Decision::Yes, &BitPolicy::Forced(false), &mut rng)
                .unwrap());
        }
    }

    #[test]
    fn conversion_acceptance_tracks_reward_ratio() {
        let oracle = IpOracle::new(0.9, 0.2, 1, 1).unwrap();
        let base = IpBackedRdqc::new(oracle, oracle, 0.0).unwrap();
        let trials = 10_000u64;
        let mut accepts = 0u64;
        for i in 0..trials {
            let mut rng = SeedTree::new(5).child_idx(i).rng();
            if rdqc_to_ip(&base, Decision::Yes, &BitPolicy::rational(), &mut rng).unwrap() {
                accepts += 1;
            }
        }
        let rate = accepts as f64 / trials as f64;
        let expected = base.yes_expectation() / base.reward_bound();
        assert!((rate - expected).abs() <= 0.02, "rate {rate} vs {expected}");
    }

    #[test]
    fn conversion_flags_reward_bound_violations() {
        let base = DeterministicRdqc {
            reward_on_yes: 1.2,
            bound: 1.0,
        };
        let mut rng = SeedTree::new(4).rng();
        assert!(matches!(
            rdqc_to_ip(&base, Decision::Yes, &BitPolicy::rational(), &mut rng),
            Err(MetaError::RewardBoundViolated { .. })
        ));
    }

    #[test]
    fn degenerate_oracle_fails_the_margin_check() {
        let degenerate = IpOracle::new(0.5, 0.5, 1, 1).unwrap();
        assert!(matches!(
            IpBackedRdqc::new(degenerate, degenerate, 0.0),
            Err(MetaError::MarginViolated { .. })
        ));
    }

    #[test]
    fn margin_witness_formula() {
        let oracle = IpOracle::new(0.9, 0.2, 1, 1).unwrap();
        let base = IpBackedRdqc::new(oracle, oracle, 0.05).unwrap();
        let witness = incorrectness_margin(&base);
        assert!((witness - (0.9 * 0.95 - 0.2)).abs() < 1e-15);
    }

    #[test]
    fn binomial_tail_matches_hand_values() {
        assert!((binomial_tail_ge(3, 0.5, 2) - 0.5).abs() < 1e-12);
        assert!((binomial_tail_ge(2, 0.5, 1) - 0.75).abs() < 1e-12);
        assert_eq!(binomial_tail_ge(10, 0.0, 1), 0.0);
        assert_eq!(binomial_tail_ge(10, 1.0, 10), 1.0);
        assert_eq!(binomial_tail_ge(10, 0.3, 0), 1.0);
        // Complement identity.
        let p = 0.37;
        let n = 25;
        let k = 11;
        let lower: f64 = 1.0 - binomial_tail_ge(n, p, k);
        let upper_complement = binomial_tail_ge(n, 1.0 - p, n - k + 1);
        assert!((lower - upper_complement).abs() < 1e-12);
    }

    #[test]
    fn amplification_validates_inputs() {
        let oracle = IpOracle::new(0.6, 0.4, 1, 1).unwrap();
        let base = IpBackedRdqc::new(oracle, oracle, 0.0).unwrap();
        assert!(matches!(
            amplify_gap(&base, 60),
            Err(MetaError::RepetitionsMustBeOdd { reps: 60 })
        ));
        assert!(amplify_gap(&base, 1).is_ok());
    }

    #[test]
    fn single_rep_amplification_is_identity_up_to_conversions() {
        let oracle = IpOracle::new(0.6, 0.4, 1, 1).unwrap();
        let base = IpBackedRdqc::new(oracle, oracle, 0.0).unwrap();
        let amp = amplify_gap(&base, 1).unwrap();
        assert!((amp.yes_expectation() - 0.6).abs() < 1e-12);
        assert!((amp.incorrect_expectation() - 0.4).abs() < 1e-12);
    }

    #[test]
    fn majority_amplification_matches_binomial_tail() {
        let oracle = IpOracle::new(0.6, 0.4, 1, 1).unwrap();
        let base = IpBackedRdqc::new(oracle, oracle, 0.0).unwrap();
        let amp = amplify_gap(&base, 61).unwrap();
        let declared = amp.yes_expectation();
        assert!((declared - majority_accept_probability(61, 0.6)).abs() < 1e-12);
        assert!(declared > 0.9, "majority boost, got {declared}");

        let trials = 2_000u64;
        let mut accepted = 0u64;
        for i in 0..trials {
            let mut rng = SeedTree::new(6).child_idx(i).rng();
            let outcome = amp.run(Decision::Yes, &BitPolicy::rational(), &mut rng);
            if outcome.reward == 1.0 {
                accepted += 1;
            }
        }
        let rate = accepted as f64 / trials as f64;
        let sigma = (declared * (1.0 - declared) / trials as f64).sqrt();
        assert!(
            (rate - declared).abs() <= 3.0 * sigma + 0.01,
            "rate {rate} vs declared {declared}"
        );
    }
}
