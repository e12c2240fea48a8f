//! Approximate sampling from a known distribution by m-bit binary
//! truncation.
//!
//! Every outcome probability except one is truncated down to `m`
//! fractional bits; the most likely outcome absorbs the truncation mass
//! so the approximation sums to one exactly. All arithmetic on the
//! approximated values is integer arithmetic on numerators over `2^m`,
//! so the invariants hold exactly rather than up to float error.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Largest supported precision; numerators live in `u128`.
pub const MAX_PRECISION_BITS: u32 = 120;

/// Coin precision used by the protocol client: the path-bit exponent
/// plus 64 excess bits, which pushes the optimal-report shift below
/// `2^-64`.
pub fn default_coin_precision(d_exponent: u32) -> u32 {
    (d_exponent + 64).min(MAX_PRECISION_BITS)
}

#[derive(Debug, Error, PartialEq)]
pub enum SamplerError {
    #[error("input is not a probability vector: {detail}")]
    NotADistribution { detail: String },
    #[error("precision m={m} outside [{min}, {max}]")]
    PrecisionOutOfRange { m: u32, min: u32, max: u32 },
    #[error("outcome count {len} is not a power of two >= 2")]
    BadOutcomeCount { len: usize },
}

/// A distribution on `2^k` outcomes with dyadic entries `num_s / 2^m`.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryApproxDist {
    pub k: u32,
    pub m: u32,
    pub numerators: Vec<u128>,
    pub s_max: usize,
}

impl BinaryApproxDist {
    /// The approximated probability of outcome `s` as a float.
    pub fn value(&self, s: usize) -> f64 {
        scale_down(self.numerators[s], self.m)
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.numerators.len()).map(|s| self.value(s)).collect()
    }

    /// Outcome selected by an `m`-bit uniform word via cumulative
    /// inversion: the `s` with `sum_{y<s} num_y <= w < sum_{y<=s} num_y`.
    pub fn outcome_for_word(&self, w: u128) -> u64 {
        let mut acc = 0u128;
        for (s, &num) in self.numerators.iter().enumerate() {
            acc += num;
            if w < acc {
                return s as u64;
            }
        }
        // w >= 2^m cannot happen for a masked word; the sum is exactly 2^m.
        (self.numerators.len() - 1) as u64
    }
}

fn scale_down(num: u128, m: u32) -> f64 {
    (num as f64) * (-(m as f64)).exp2()
}

/// Exact `floor(x * 2^m)` for `x` in `[0, 1]`. Scaling a float by a
/// power of two is exact, and any scaled value at or above `2^53` is
/// already an integer.
fn dyadic_floor(x: f64, m: u32) -> u128 {
    debug_assert!((0.0..=1.0).contains(&x));
    (x * (m as f64).exp2()).floor() as u128
}

fn dyadic_ceil(x: f64, m: u32) -> u128 {
    debug_assert!((0.0..=1.0).contains(&x));
    (x * (m as f64).exp2()).ceil() as u128
}

fn validate(t: &[f64], m: u32) -> Result<u32, SamplerError> {
    if t.len() < 2 || !t.len().is_power_of_two() || t.len() > 1 << 20 {
        return Err(SamplerError::BadOutcomeCount { len: t.len() });
    }
    let k = t.len().trailing_zeros();
    if m < 2 * k || m > MAX_PRECISION_BITS {
        return Err(SamplerError::PrecisionOutOfRange {
            m,
            min: 2 * k,
            max: MAX_PRECISION_BITS,
        });
    }
    if let Some(bad) = t.iter().find(|&&p| !(0.0..=1.0).contains(&p)) {
        return Err(SamplerError::NotADistribution {
            detail: format!("entry {bad} outside [0, 1]"),
        });
    }
    let total: f64 = t.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(SamplerError::NotADistribution {
            detail: format!("entries sum to {total}"),
        });
    }
    Ok(k)
}

/// Truncate `t` to `m` fractional bits, correcting the argmax outcome so
/// the result sums to one exactly. Argmax ties break toward the smaller
/// index.
pub fn build_approx(t: &[f64], m: u32) -> Result<BinaryApproxDist, SamplerError> {
    let k = validate(t, m)?;
    let s_max = t
        .iter()
        .enumerate()
        .max_by(|(ia, a), (ib, b)| a.partial_cmp(b).unwrap().then(ib.cmp(ia)))
        .map(|(i, _)| i)
        .unwrap();
    let mut numerators: Vec<u128> = t.iter().map(|&p| dyadic_floor(p, m)).collect();
    let rest: u128 = numerators
        .iter()
        .enumerate()
        .filter(|(s, _)| *s != s_max)
        .map(|(_, &n)| n)
        .sum();
    numerators[s_max] = (1u128 << m) - rest;
    Ok(BinaryApproxDist {
        k,
        m,
        numerators,
        s_max,
    })
}

/// One draw via an `m`-bit uniform word.
pub fn draw(d: &BinaryApproxDist, rng: &mut ChaCha8Rng) -> u64 {
    let w = rng.gen::<u128>() & ((1u128 << d.m) - 1);
    d.outcome_for_word(w)
}

/// Heads (`1`) with probability within `2^-m` of `bias`.
///
/// The heads numerator is computed directly from `bias` instead of going
/// through the float complement `1 - bias`, which keeps the error bound
/// exact for every precision.
pub fn flip_biased_coin(bias: f64, m: u32, rng: &mut ChaCha8Rng) -> Result<u8, SamplerError> {
    if !(0.0..=1.0).contains(&bias) {
        return Err(SamplerError::NotADistribution {
            detail: format!("coin bias {bias} outside [0, 1]"),
        });
    }
    if m < 2 || m > MAX_PRECISION_BITS {
        return Err(SamplerError::PrecisionOutOfRange {
            m,
            min: 2,
            max: MAX_PRECISION_BITS,
        });
    }
    // s_max = 0 when heads dominates: tails is truncated down, which is
    // the same as rounding the heads numerator up.
    let heads_num = if bias >= 0.5 {
        dyadic_ceil(bias, m)
    } else {
        dyadic_floor(bias, m)
    };
    let w = rng.gen::<u128>() & ((1u128 << m) - 1);
    Ok(u8::from(w < heads_num))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedTree;
    use proptest::prelude::*;

    #[test]
    fn third_two_thirds_at_four_bits() {
        let d = build_approx(&[1.0 / 3.0, 2.0 / 3.0], 4).unwrap();
        assert_eq!(d.numerators, vec![5, 11]);
        assert_eq!(d.s_max, 1);
        assert!((d.value(0) - 5.0 / 16.0).abs() < 1e-15);
    }

    #[test]
    fn dyadic_distribution_is_a_fixed_point() {
        let d = build_approx(&[0.5, 0.5], 4).unwrap();
        assert_eq!(d.numerators, vec![8, 8]);
        assert_eq!(d.s_max, 0, "tie breaks to the smaller index");
    }

    #[test]
    fn degenerate_distribution_unchanged() {
        for m in [2u32, 7, 40, 120] {
            let d = build_approx(&[1.0, 0.0], m).unwrap();
            assert_eq!(d.numerators, vec![1u128 << m, 0]);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(
            build_approx(&[0.7, 0.7], 4),
            Err(SamplerError::NotADistribution { .. })
        ));
        assert!(matches!(
            build_approx(&[0.25; 4], 3),
            Err(SamplerError::PrecisionOutOfRange { m: 3, min: 4, .. })
        ));
        assert!(matches!(
            build_approx(&[0.5, 0.25, 0.25], 8),
            Err(SamplerError::BadOutcomeCount { len: 3 })
        ));
    }

    #[test]
    fn cumulative_thresholds_select_outcomes() {
        let d = build_approx(&[1.0 / 3.0, 2.0 / 3.0], 4).unwrap();
        assert_eq!(d.outcome_for_word(0), 0);
        assert_eq!(d.outcome_for_word(4), 0);
        assert_eq!(d.outcome_for_word(5), 1);
        assert_eq!(d.outcome_for_word(15), 1);
    }

    #[test]
    fn degenerate_draw_is_constant() {
        let d = build_approx(&[1.0, 0.0], 4).unwrap();
        let mut rng = SeedTree::new(1).rng();
        for _ in 0..50 {
            assert_eq!(draw(&d, &mut rng), 0);
        }
    }

    #[test]
    fn draw_frequency_matches_approximation() {
        let d = build_approx(&[1.0 / 3.0, 2.0 / 3.0], 4).unwrap();
        let mut rng = SeedTree::new(8).child("freq").rng();
        let trials = 100_000;
        let zeros = (0..trials).filter(|_| draw(&d, &mut rng) == 0).count();
        let p = 5.0 / 16.0;
        let sigma = (p * (1.0 - p) / trials as f64).sqrt();
        let freq = zeros as f64 / trials as f64;
        assert!((freq - p).abs() <= 3.0 * sigma, "freq {freq}");
    }

    #[test]
    fn draws_are_reproducible() {
        let d = build_approx(&[0.2, 0.3, 0.4, 0.1], 10).unwrap();
        let seq = |seed: u64| -> Vec<u64> {
            let mut rng = SeedTree::new(seed).rng();
            (0..256).map(|_| draw(&d, &mut rng)).collect()
        };
        assert_eq!(seq(5), seq(5));
        assert_ne!(seq(5), seq(6));
    }

    #[test]
    fn fair_coin_is_exact() {
        let mut rng = SeedTree::new(2).rng();
        let trials = 100_000;
        let heads = (0..trials)
            .filter(|_| flip_biased_coin(0.5, 4, &mut rng).unwrap() == 1)
            .count();
        let sigma = (0.25f64 / trials as f64).sqrt();
        assert!((heads as f64 / trials as f64 - 0.5).abs() <= 3.0 * sigma);
    }

    #[test]
    fn hh_coin_bias_is_dyadic_at_three_bits() {
        // bias 5/8 needs only three fractional bits, so the coin is exact.
        let mut rng = SeedTree::new(3).rng();
        let trials = 200_000;
        let heads = (0..trials)
            .filter(|_| flip_biased_coin(0.625, 3, &mut rng).unwrap() == 1)
            .count();
        let p = 0.625;
        let sigma = (p * (1.0 - p) / trials as f64).sqrt();
        assert!((heads as f64 / trials as f64 - p).abs() <= 3.0 * sigma);
    }

    #[test]
    fn boundary_biases_are_deterministic() {
        let mut rng = SeedTree::new(9).rng();
        for _ in 0..100 {
            assert_eq!(flip_biased_coin(0.0, 8, &mut rng).unwrap(), 0);
            assert_eq!(flip_biased_coin(1.0, 8, &mut rng).unwrap(), 1);
        }
        assert!(flip_biased_coin(1.1, 8, &mut rng).is_err());
    }

    #[test]
    fn high_precision_coin_tracks_bias() {
        let mut rng = SeedTree::new(4).rng();
        let trials = 100_000;
        let bias = 1.0 / 3.0;
        let heads = (0..trials)
            .filter(|_| flip_biased_coin(bias, 40, &mut rng).unwrap() == 1)
            .count();
        let sigma = (bias * (1.0 - bias) / trials as f64).sqrt();
        // Truncation error 2^-39 is invisible next to sampling error.
        assert!((heads as f64 / trials as f64 - bias).abs() <= 3.0 * sigma + (-39f64).exp2());
    }

    /// Exact-arithmetic l1-bound oracle: distributions are generated with
    /// denominator 2^52 so every quantity is integer-checkable.
    fn exact_l1_check(raw: &[u64], m: u32) {
        const SRC_BITS: u32 = 52;
        let total: u64 = 1 << SRC_BITS;
        assert_eq!(raw.iter().sum::<u64>(), total);
        let t: Vec<f64> = raw
            .iter()
            .map(|&a| a as f64 * (-(SRC_BITS as f64)).exp2())
            .collect();
        let d = build_approx(&t, m).unwrap();
        assert_eq!(d.numerators.iter().sum::<u128>(), 1u128 << m);

        // |t~_s - t_s| in units of 2^-(52+m): exact integers throughout.
        let unit = |s: usize| -> i128 {
            let approx = (d.numerators[s] as i128) << SRC_BITS;
            let source = (raw[s] as i128) << m;
            (approx - source).abs()
        };
        let l1: i128 = (0..raw.len()).map(unit).sum();
        let bound = ((raw.len() as i128 - 1) * 2) << SRC_BITS;
        assert!(l1 <= bound, "l1 {l1} > bound {bound} at m={m}");
        for (s, &num) in d.numerators.iter().enumerate() {
            if s != d.s_max {
                assert!(unit(s) <= 1i128 << SRC_BITS, "per-outcome bound at {s}");
            }
            let _ = num;
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn l1_bound_holds_exactly(seed in 0u64..1_000_000, k in 1u32..=6, m_extra in 0u32..=32) {
            let mut rng = SeedTree::new(seed).child("l1").rng();
            let len = 1usize << k;
            let total = 1u64 << 52;
            let mut raw: Vec<u64> = (0..len - 1)
                .map(|_| rand::Rng::gen_range(&mut rng, 0..=total / len as u64))
                .collect();
            let used: u64 = raw.iter().sum();
            raw.push(total - used);
            exact_l1_check(&raw, 2 * k + m_extra);
        }

        #[test]
        fn approximation_is_a_distribution(seed in 0u64..1_000_000, k in 1u32..=5) {
            let mut rng = SeedTree::new(seed).child("dist").rng();
            let len = 1usize << k;
            let raw: Vec<f64> = (0..len).map(|_| rand::Rng::gen_range(&mut rng, 0.0..1.0)).collect();
            let total: f64 = raw.iter().sum();
            let t: Vec<f64> = raw.iter().map(|x| x / total).collect();
            let d = build_approx(&t, 2 * k + 8).unwrap();
            prop_assert_eq!(d.numerators.iter().sum::<u128>(), 1u128 << d.m);
        }
    }
}
