//! Circuit representation, a small textual format, and an exact
//! statevector simulator.
//!
//! The simulator is the ground-truth oracle for output probabilities and
//! doubles as the honest server's sampling device. Convention used
//! throughout the crate: qubit 0 is the most significant bit of a basis
//! state index, and the measured register is qubits `0..k`, so a measured
//! outcome `z` occupies the high-order `k` bits of an index.

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Hard ceiling on statevector size. The protocol logic itself is
/// cap-independent; only the oracle enumerates amplitudes.
pub const DEFAULT_QUBIT_CAP: u32 = 20;

/// Default per-gate locality cap (CCX). May be raised per parse call.
pub const DEFAULT_MAX_LOCALITY: usize = 3;

const UNITARITY_TOL: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum ParseError {
    #[error("line {line}: syntax error: {detail}")]
    Syntax { line: usize, detail: String },
    #[error("line {line}: unknown gate `{name}`")]
    UnknownGate { line: usize, name: String },
    #[error("line {line}: matrix is not unitary (max deviation {deviation:.3e})")]
    NonUnitary { line: usize, deviation: f64 },
    #[error("line {line}: qubit index {index} out of range for {n} qubits")]
    QubitOutOfRange { line: usize, index: usize, n: u32 },
    #[error("line {line}: duplicate qubit index {index}")]
    DuplicateQubit { line: usize, index: usize },
    #[error("line {line}: gate acts on {arity} qubits, locality cap is {cap}")]
    LocalityExceeded {
        line: usize,
        arity: usize,
        cap: usize,
    },
    #[error("line {line}: expected `qubits <n>` header")]
    MissingHeader { line: usize },
    #[error("circuit has no gates")]
    EmptyCircuit,
}

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("{n} qubits exceeds the statevector cap of {cap}")]
    QubitCapExceeded { n: u32, cap: u32 },
    #[error("measured-qubit count {k} invalid for {n} qubits")]
    BadMeasuredCount { k: u32, n: u32 },
}

/// One elementary gate: an ordered support and a dense unitary on it.
///
/// The matrix is row-major of dimension `2^|support| x 2^|support|`; the
/// first listed support qubit is the most significant bit of a row or
/// column index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    pub name: String,
    pub support: Vec<usize>,
    pub matrix: Vec<Complex64>,
}

impl Gate {
    pub fn arity(&self) -> usize {
        self.support.len()
    }

    pub fn dim(&self) -> usize {
        1 << self.support.len()
    }

    pub fn entry(&self, row: usize, col: usize) -> Complex64 {
        self.matrix[row * self.dim() + col]
    }

    /// Max-norm deviation of `M† M` from the identity.
    pub fn unitarity_deviation(&self) -> f64 {
        let d = self.dim();
        let mut worst = 0.0f64;
        for i in 0..d {
            for j in 0..d {
                let mut acc = Complex64::new(0.0, 0.0);
                for r in 0..d {
                    acc += self.entry(r, i).conj() * self.entry(r, j);
                }
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((acc - target).norm());
            }
        }
        worst
    }
}

/// A gate sequence `u_1 ... u_L` applied to `|0^n>`, `u_1` first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Circuit {
    pub n: u32,
    pub gates: Vec<Gate>,
    pub source_text: String,
}

impl Circuit {
    /// Number of elementary gates, `L`.
    pub fn depth(&self) -> usize {
        self.gates.len()
    }

    /// Render the circuit back into the textual format. Named gates keep
    /// their names; anything else becomes a `matgate` line.
    pub fn to_source(&self) -> String {
        let mut out = format!("qubits {}\n", self.n);
        for g in &self.gates {
            if registry_matrix(&g.name, g.arity()).is_some() {
                out.push_str("gate ");
                out.push_str(&g.name);
                for q in &g.support {
                    out.push_str(&format!(" {q}"));
                }
            } else {
                out.push_str(&format!("matgate {}", g.dim()));
                for q in &g.support {
                    out.push_str(&format!(" {q}"));
                }
                for e in &g.matrix {
                    out.push_str(&format!(" {} {}", e.re, e.im));
                }
            }
            out.push('\n');
        }
        out
    }
}

/// State of `n` qubits as `2^n` complex amplitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    pub n: u32,
    pub amplitudes: Vec<Complex64>,
}

impl StateVector {
    pub fn zero_state(n: u32) -> StateVector {
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); 1 << n];
        amplitudes[0] = Complex64::new(1.0, 0.0);
        StateVector { n, amplitudes }
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes
            .iter()
            .map(|a| a.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// Apply one gate in place.
    pub fn apply(&mut self, gate: &Gate) {
        let n = self.n as usize;
        let w = gate.arity();
        let d = gate.dim();
        // Bit position of each support qubit (qubit 0 = MSB).
        let bits: Vec<usize> = gate.support.iter().map(|&q| n - 1 - q).collect();
        let support_mask: usize = bits.iter().map(|&b| 1usize << b).sum();

        let mut gathered = vec![Complex64::new(0.0, 0.0); d];
        for base in 0..self.amplitudes.len() {
            if base & support_mask != 0 {
                continue;
            }
            for (pat, slot) in gathered.iter_mut().enumerate() {
                *slot = self.amplitudes[base | spread(pat, &bits, w)];
            }
            for (row, _) in gathered.iter().enumerate() {
                let mut acc = Complex64::new(0.0, 0.0);
                for (col, &amp) in gathered.iter().enumerate() {
                    acc += gate.entry(row, col) * amp;
                }
                self.amplitudes[base | spread(row, &bits, w)] = acc;
            }
        }
    }
}

/// Scatter the `w` low bits of `pattern` onto the given bit positions;
/// the first position receives the most significant pattern bit.
fn spread(pattern: usize, bits: &[usize], w: usize) -> usize {
    let mut out = 0usize;
    for (i, &b) in bits.iter().enumerate() {
        if pattern >> (w - 1 - i) & 1 == 1 {
            out |= 1 << b;
        }
    }
    out
}

/// Marginal distribution over the first `k` qubits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputDistribution {
    pub k: u32,
    pub probs: Vec<f64>,
}

impl OutputDistribution {
    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }
}

/// Run the circuit on `|0^n>` and return the final state.
pub fn simulate_statevector(c: &Circuit) -> Result<StateVector, SimError> {
    simulate_statevector_capped(c, DEFAULT_QUBIT_CAP)
}

pub fn simulate_statevector_capped(c: &Circuit, cap: u32) -> Result<StateVector, SimError> {
    if c.n > cap {
        return Err(SimError::QubitCapExceeded { n: c.n, cap });
    }
    let mut state = StateVector::zero_state(c.n);
    for gate in &c.gates {
        state.apply(gate);
        debug_assert!((state.norm() - 1.0).abs() <= 1e-10);
    }
    Ok(state)
}

/// Exact output distribution of the first `k` qubits,
/// `q_z = sum over unmeasured qubits of |amplitude|^2`.
pub fn exact_output_dist(c: &Circuit, k: u32) -> Result<OutputDistribution, SimError> {
    if k == 0 || k > c.n {
        return Err(SimError::BadMeasuredCount { k, n: c.n });
    }
    let state = simulate_statevector(c)?;
    let shift = (c.n - k) as usize;
    let mut probs = vec![0.0f64; 1 << k];
    for (idx, amp) in state.amplitudes.iter().enumerate() {
        probs[idx >> shift] += amp.norm_sqr();
    }
    Ok(OutputDistribution { k, probs })
}

/// Cumulative-inversion sampler over a fixed output distribution.
///
/// Precomputes the cumulative sums once so repeated draws are cheap.
#[derive(Debug, Clone)]
pub struct OutcomeSampler {
    cumulative: Vec<f64>,
}

impl OutcomeSampler {
    pub fn new(dist: &OutputDistribution) -> OutcomeSampler {
        let mut cumulative = Vec::with_capacity(dist.probs.len());
        let mut acc = 0.0;
        for &p in &dist.probs {
            acc += p;
            cumulative.push(acc);
        }
        OutcomeSampler { cumulative }
    }

    pub fn draw(&self, rng: &mut ChaCha8Rng) -> u64 {
        let u: f64 = rng.gen();
        let idx = self.cumulative.partition_point(|&c| c <= u);
        idx.min(self.cumulative.len() - 1) as u64
    }
}

/// One measurement of the first `k` qubits.
pub fn sample_output(c: &Circuit, k: u32, rng: &mut ChaCha8Rng) -> Result<u64, SimError> {
    let dist = exact_output_dist(c, k)?;
    Ok(OutcomeSampler::new(&dist).draw(rng))
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Matrix of a named gate, if `name` with the given arity is registered.
pub fn registry_matrix(name: &str, arity: usize) -> Option<Vec<Complex64>> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let t = std::f64::consts::FRAC_PI_4;
    match (name, arity) {
        ("H", 1) => Some(vec![c(s, 0.0), c(s, 0.0), c(s, 0.0), c(-s, 0.0)]),
        ("X", 1) => Some(vec![c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]),
        ("Y", 1) => Some(vec![c(0.0, 0.0), c(0.0, -1.0), c(0.0, 1.0), c(0.0, 0.0)]),
        ("Z", 1) => Some(vec![c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)]),
        ("S", 1) => Some(vec![c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 1.0)]),
        ("T", 1) => Some(vec![
            c(1.0, 0.0),
            c(0.0, 0.0),
            c(0.0, 0.0),
            c(t.cos(), t.sin()),
        ]),
        ("CNOT", 2) => Some(permutation_matrix(&[0, 1, 3, 2])),
        ("CZ", 2) => {
            let mut m = vec![c(0.0, 0.0); 16];
            for i in 0..4 {
                m[i * 4 + i] = c(1.0, 0.0);
            }
            m[15] = c(-1.0, 0.0);
            Some(m)
        }
        ("CCX", 3) => Some(permutation_matrix(&[0, 1, 2, 3, 4, 5, 7, 6])),
        _ => None,
    }
}

fn permutation_matrix(image: &[usize]) -> Vec<Complex64> {
    let d = image.len();
    let mut m = vec![c(0.0, 0.0); d * d];
    for (input, &output) in image.iter().enumerate() {
        m[output * d + input] = c(1.0, 0.0);
    }
    m
}

/// Names accepted by `gate` lines, in registry order.
pub const NAMED_GATES: [&str; 9] = ["H", "T", "S", "X", "Y", "Z", "CNOT", "CZ", "CCX"];

fn named_arity(name: &str) -> Option<usize> {
    match name {
        "H" | "T" | "S" | "X" | "Y" | "Z" => Some(1),
        "CNOT" | "CZ" => Some(2),
        "CCX" => Some(3),
        _ => None,
    }
}

/// Parse the textual format:
///
/// ```text
/// qubits <n>
/// gate <NAME> <q...>
/// matgate <dim> <q...> <re im re im ...>   # row-major
/// ```
///
/// Comments start with `#`; blank lines are ignored.
pub fn parse_circuit(text: &str) -> Result<Circuit, ParseError> {
    parse_circuit_with_locality(text, DEFAULT_MAX_LOCALITY)
}

pub fn parse_circuit_with_locality(text: &str, max_locality: usize) -> Result<Circuit, ParseError> {
    let mut n: Option<u32> = None;
    let mut gates = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut fields = content.split_whitespace();
        let keyword = fields.next().unwrap();

        if n.is_none() {
            if keyword != "qubits" {
                return Err(ParseError::MissingHeader { line });
            }
            let count: u32 = fields
                .next()
                .and_then(|f| f.parse().ok())
                .filter(|&v| v >= 1)
                .ok_or_else(|| ParseError::Syntax {
                    line,
                    detail: "expected a positive qubit count".into(),
                })?;
            if fields.next().is_some() {
                return Err(ParseError::Syntax {
                    line,
                    detail: "trailing tokens after qubit count".into(),
                });
            }
            n = Some(count);
            continue;
        }
        let n = n.unwrap();

        match keyword {
            "gate" => {
                let name = fields
                    .next()
                    .ok_or_else(|| ParseError::Syntax {
                        line,
                        detail: "missing gate name".into(),
                    })?
                    .to_string();
                let arity = named_arity(&name).ok_or_else(|| ParseError::UnknownGate {
                    line,
                    name: name.clone(),
                })?;
                let support = parse_support(&mut fields, arity, line, n, max_locality)?;
                if fields.next().is_some() {
                    return Err(ParseError::Syntax {
                        line,
                        detail: "trailing tokens after qubit list".into(),
                    });
                }
                let matrix = registry_matrix(&name, arity).unwrap();
                gates.push(Gate {
                    name,
                    support,
                    matrix,
                });
            }
            "matgate" => {
                let dim: usize = fields
                    .next()
                    .and_then(|f| f.parse().ok())
                    .filter(|d: &usize| d.is_power_of_two() && *d >= 2)
                    .ok_or_else(|| ParseError::Syntax {
                        line,
                        detail: "matgate dimension must be a power of two >= 2".into(),
                    })?;
                let arity = dim.trailing_zeros() as usize;
                let support = parse_support(&mut fields, arity, line, n, max_locality)?;
                let mut matrix = Vec::with_capacity(dim * dim);
                for _ in 0..dim * dim {
                    let re: f64 = next_number(&mut fields, line)?;
                    let im: f64 = next_number(&mut fields, line)?;
                    matrix.push(c(re, im));
                }
                if fields.next().is_some() {
                    return Err(ParseError::Syntax {
                        line,
                        detail: "trailing tokens after matrix entries".into(),
                    });
                }
                let gate = Gate {
                    name: format!("matgate{dim}"),
                    support,
                    matrix,
                };
                let deviation = gate.unitarity_deviation();
                if deviation > UNITARITY_TOL {
                    return Err(ParseError::NonUnitary { line, deviation });
                }
                gates.push(gate);
            }
            other => {
                return Err(ParseError::Syntax {
                    line,
                    detail: format!("unknown directive `{other}`"),
                })
            }
        }
    }

    let n = n.ok_or(ParseError::MissingHeader { line: 1 })?;
    if gates.is_empty() {
        return Err(ParseError::EmptyCircuit);
    }
    Ok(Circuit {
        n,
        gates,
        source_text: text.to_string(),
    })
}

fn parse_support<'a>(
    fields: &mut impl Iterator<Item = &'a str>,
    arity: usize,
    line: usize,
    n: u32,
    max_locality: usize,
) -> Result<Vec<usize>, ParseError> {
    if arity > max_locality {
        return Err(ParseError::LocalityExceeded {
            line,
            arity,
            cap: max_locality,
        });
    }
    let mut support = Vec::with_capacity(arity);
    for _ in 0..arity {
        let index: usize = fields
            .next()
            .and_then(|f| f.parse().ok())
            .ok_or_else(|| ParseError::Syntax {
                line,
                detail: format!("expected {arity} qubit indices"),
            })?;
        if index >= n as usize {
            return Err(ParseError::QubitOutOfRange { line, index, n });
        }
        if support.contains(&index) {
            return Err(ParseError::DuplicateQubit { line, index });
        }
        support.push(index);
    }
    Ok(support)
}

fn next_number<'a>(
    fields: &mut impl Iterator<Item = &'a str>,
    line: usize,
) -> Result<f64, ParseError> {
    fields
        .next()
        .and_then(|f| f.parse().ok())
        .ok_or_else(|| ParseError::Syntax {
            line,
            detail: "expected a numeric matrix entry".into(),
        })
}

/// Uniformly random circuit over the named-gate set, for tests and the
/// self-test suite. Gates whose arity exceeds `n` are excluded.
pub fn random_circuit(n: u32, depth: usize, gate_names: &[&str], rng: &mut ChaCha8Rng) -> Circuit {
    let usable: Vec<&str> = gate_names
        .iter()
        .copied()
        .filter(|g| named_arity(g).expect("named gate") <= n as usize)
        .collect();
    assert!(!usable.is_empty(), "no gate fits on {n} qubits");
    let mut gates = Vec::with_capacity(depth);
    for _ in 0..depth {
        let name = usable[rng.gen_range(0..usable.len())];
        let arity = named_arity(name).unwrap();
        let mut support = Vec::with_capacity(arity);
        while support.len() < arity {
            let q = rng.gen_range(0..n as usize);
            if !support.contains(&q) {
                support.push(q);
            }
        }
        gates.push(Gate {
            name: name.to_string(),
            support,
            matrix: registry_matrix(name, arity).unwrap(),
        });
    }
    let mut circuit = Circuit {
        n,
        gates,
        source_text: String::new(),
    };
    circuit.source_text = circuit.to_source();
    circuit
}
