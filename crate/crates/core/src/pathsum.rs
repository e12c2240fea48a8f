//! Feynman path evaluation for output probabilities.
//!
//! A path assigns a computational-basis state to every slot between
//! consecutive gates, once for the bra chain and once for the ket chain.
//! The summand `g(z, s)` is a product of `2L` single-gate matrix
//! elements, so it is evaluated in `O(nL)` time; summing it over all
//! paths recovers `q_z` and serves as the brute-force oracle here.

use num_complex::Complex64;
use thiserror::Error;

use crate::circuit::{Circuit, Gate};

/// Ceiling on total path bits for the enumeration oracle (16M paths).
pub const ENUMERATION_CAP_BITS: u32 = 24;

#[derive(Debug, Error, PartialEq)]
pub enum PathError {
    #[error("path shape (n={path_n}, L={path_depth}, k={path_k}) does not match circuit (n={n}, L={depth})")]
    ShapeMismatch {
        path_n: u32,
        path_depth: usize,
        path_k: u32,
        n: u32,
        depth: usize,
    },
    #[error("outcome {z} does not fit in {k} bits")]
    OutcomeOutOfRange { z: u64, k: u32 },
    #[error("{bits} path bits exceed the enumeration cap of {cap}")]
    EnumerationCapExceeded { bits: u32, cap: u32 },
}

/// Basis-state assignment for the `2L-1` inter-gate slots.
///
/// Layer `j` (1-based) holds `n` bits except layer `L`, which holds the
/// `n-k` unmeasured bits; the measured outcome `z` fills the rest there.
#[derive(Debug, Clone, PartialEq)]
pub struct PathAssignment {
    pub n: u32,
    pub depth: usize,
    pub k: u32,
    pub layers: Vec<u64>,
}

impl PathAssignment {
    pub fn zeroed(n: u32, depth: usize, k: u32) -> PathAssignment {
        PathAssignment {
            n,
            depth,
            k,
            layers: vec![0; 2 * depth - 1],
        }
    }

    /// Bit width of layer `j` (1-based).
    pub fn layer_width(&self, j: usize) -> u32 {
        if j == self.depth {
            self.n - self.k
        } else {
            self.n
        }
    }

    /// Total bit length, `(2L-1)n - k`.
    pub fn total_bits(&self) -> u32 {
        (2 * self.depth as u32 - 1) * self.n - self.k
    }

    /// Pack into an integer with layer 1 as the most significant block.
    pub fn to_packed(&self) -> u64 {
        let mut packed = 0u64;
        for j in 1..=self.layers.len() {
            packed = (packed << self.layer_width(j)) | self.layers[j - 1];
        }
        packed
    }

    /// Inverse of [`to_packed`](Self::to_packed), reusing the allocation.
    pub fn set_packed(&mut self, mut packed: u64) {
        for j in (1..=self.layers.len()).rev() {
            let w = self.layer_width(j);
            let mask = if w == 0 { 0 } else { (1u64 << w) - 1 };
            self.layers[j - 1] = packed & mask;
            packed >>= w;
        }
    }

    pub fn from_packed(n: u32, depth: usize, k: u32, packed: u64) -> PathAssignment {
        let mut path = PathAssignment::zeroed(n, depth, k);
        path.set_packed(packed);
        path
    }

    /// Sample every layer uniformly.
    pub fn sample_uniform(
        n: u32,
        depth: usize,
        k: u32,
        rng: &mut rand_chacha::ChaCha8Rng,
    ) -> PathAssignment {
        use rand::Rng;
        let mut path = PathAssignment::zeroed(n, depth, k);
        for j in 1..=path.layers.len() {
            let w = path.layer_width(j);
            let mask = if w == 0 { 0 } else { (1u64 << w) - 1 };
            path.layers[j - 1] = rng.gen::<u64>() & mask;
        }
        path
    }
}

/// The summand value together with the client's coin bias.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathValue {
    pub g: Complex64,
    pub bias: f64,
}

/// `<out| u |in>` for full `n`-bit basis states.
///
/// Zero whenever `out` and `in` differ outside the gate support;
/// otherwise a single dense-matrix entry, so `O(n)` per call.
pub fn matrix_element(gate: &Gate, out: u64, input: u64, n: u32) -> Complex64 {
    let mut support_mask = 0u64;
    for &q in &gate.support {
        support_mask |= 1 << (n as usize - 1 - q);
    }
    if (out ^ input) & !support_mask != 0 {
        return Complex64::new(0.0, 0.0);
    }
    let w = gate.support.len();
    let mut row = 0usize;
    let mut col = 0usize;
    for (i, &q) in gate.support.iter().enumerate() {
        let bit = n as usize - 1 - q;
        row |= (((out >> bit) & 1) as usize) << (w - 1 - i);
        col |= (((input >> bit) & 1) as usize) << (w - 1 - i);
    }
    gate.entry(row, col)
}

fn check_shape(c: &Circuit, z: u64, s: &PathAssignment) -> Result<(), PathError> {
    if s.n != c.n || s.depth != c.depth() || s.k > c.n || s.layers.len() != 2 * c.depth() - 1 {
        return Err(PathError::ShapeMismatch {
            path_n: s.n,
            path_depth: s.depth,
            path_k: s.k,
            n: c.n,
            depth: c.depth(),
        });
    }
    if s.k < 64 && z >> s.k != 0 {
        return Err(PathError::OutcomeOutOfRange { z, k: s.k });
    }
    Ok(())
}

/// Evaluate `g(z, s)` as `conj(B) * K`, where `B` and `K` are the bra-
/// and ket-chain products of single-gate matrix elements. Short-circuits
/// to zero as soon as a factor vanishes.
pub fn eval_g(c: &Circuit, z: u64, s: &PathAssignment) -> Result<PathValue, PathError> {
    check_shape(c, z, s)?;
    let g = eval_g_unchecked(c, z, s);
    Ok(PathValue {
        g,
        bias: bias_of(g),
    })
}

fn bias_of(g: Complex64) -> f64 {
    ((1.0 + g.re) / 2.0).clamp(0.0, 1.0)
}

fn eval_g_unchecked(c: &Circuit, z: u64, s: &PathAssignment) -> Complex64 {
    let depth = s.depth;
    let measured_state = (z << (s.n - s.k)) | s.layers[depth - 1];
    let chain = |offset: usize| -> Complex64 {
        let mut product = Complex64::new(1.0, 0.0);
        for (i, gate) in c.gates.iter().enumerate() {
            let input = if i == 0 {
                0
            } else {
                s.layers[offset + i - 1]
            };
            let out = if i == depth - 1 {
                measured_state
            } else {
                s.layers[offset + i]
            };
            product *= matrix_element(gate, out, input, s.n);
            if product == Complex64::new(0.0, 0.0) {
                return product;
            }
        }
        product
    };
    // Bra chain walks layers 1..=L, ket chain walks layers L+1..=2L-1.
    let bra = chain(0);
    if bra == Complex64::new(0.0, 0.0) {
        return bra;
    }
    let ket = chain(depth);
    bra.conj() * ket
}

/// The client's coin bias `(1 + Re g(z, s)) / 2`.
pub fn coin_bias(c: &Circuit, z: u64, s: &PathAssignment) -> Result<f64, PathError> {
    Ok(eval_g(c, z, s)?.bias)
}

/// Brute-force `q_z = sum_s g(z, s)` by enumerating every path.
///
/// Only usable up to [`ENUMERATION_CAP_BITS`]; fixed enumeration order
/// keeps repeated runs bit-identical.
pub fn brute_force_qz(c: &Circuit, z: u64, k: u32) -> Result<f64, PathError> {
    let mut path = PathAssignment::zeroed(c.n, c.depth(), k);
    check_shape(c, z, &path)?;
    let bits = path.total_bits();
    if bits > ENUMERATION_CAP_BITS {
        return Err(PathError::EnumerationCapExceeded {
            bits,
            cap: ENUMERATION_CAP_BITS,
        });
    }
    let mut total = Complex64::new(0.0, 0.0);
    for packed in 0..(1u64 << bits) {
        path.set_packed(packed);
        total += eval_g_unchecked(c, z, &path);
    }
    assert!(
        total.im.abs() <= 1e-9,
        "path sum should be real, got imaginary part {}",
        total.im
    );
    Ok(total.re)
}
