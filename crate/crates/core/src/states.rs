//! Generator spectra and phaseless probe states.
//!
//! A probe is stored as the probability weights `ω_p` it places on the
//! eigenbasis of the collective generator `h = Σ_k Z^(k)`. Local phases never
//! change the variance of `h` nor any of the entanglement measures used here,
//! so they are not part of the data model.
//!
//! Index convention (shared by every module): the joint index `p` of the
//! local eigenstate tuple `(i_0, i_1, …, i_{N-1})` is
//! `p = Σ_k i_k · d^(N-1-k)`, i.e. party 0 is the most significant digit.

use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use crate::error::{out_of_range, QmetrixError, Result};

/// Tolerance on `Σ ω_p = 1` below which a weight vector is accepted as is.
pub const NORMALIZATION_TOL: f64 = 1e-12;
/// Largest normalization drift that is silently renormalized.
pub const RENORMALIZE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeneratorKind {
    /// Pauli-Z on every qubit, local eigenvalues (−1, +1).
    PauliZ,
    /// Spin-`s` z operator rescaled by `1/s`, spectrum uniformly spaced over [−1, 1].
    SpinRescaled,
    /// Caller-supplied local spectrum.
    Custom,
}

impl std::str::FromStr for GeneratorKind {
    type Err = QmetrixError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "pauli-z" | "pauliz" | "z" => Ok(GeneratorKind::PauliZ),
            "spin-rescaled" | "spin" => Ok(GeneratorKind::SpinRescaled),
            "custom" => Ok(GeneratorKind::Custom),
            other => Err(QmetrixError::Parse(format!("unknown generator kind '{other}'"))),
        }
    }
}

impl std::fmt::Display for GeneratorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            GeneratorKind::PauliZ => "pauli-z",
            GeneratorKind::SpinRescaled => "spin-rescaled",
            GeneratorKind::Custom => "custom",
        };
        f.write_str(s)
    }
}

/// Collective generator `h_{N,d} = Σ_k Z_d^(k)` described by its local spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    parties: usize,
    local_dim: usize,
    local_eigenvalues: Vec<f64>,
    kind: GeneratorKind,
}

impl Generator {
    /// Builds and validates a generator.
    ///
    /// `custom_eigenvalues` must be given exactly when `kind` is
    /// [`GeneratorKind::Custom`] and must then hold `local_dim` finite,
    /// nondecreasing entries.
    pub fn new(
        parties: usize,
        local_dim: usize,
        kind: GeneratorKind,
        custom_eigenvalues: Option<&[f64]>,
    ) -> Result<Self> {
        if parties < 1 {
            return Err(QmetrixError::InvalidGenerator("parties must be at least 1".into()));
        }
        if local_dim < 2 {
            return Err(QmetrixError::InvalidGenerator("local_dim must be at least 2".into()));
        }
        if local_dim.checked_pow(parties as u32).is_none() {
            return Err(QmetrixError::InvalidGenerator("d^N overflows".into()));
        }
        let local_eigenvalues = match (kind, custom_eigenvalues) {
            (GeneratorKind::Custom, Some(values)) => values.to_vec(),
            (GeneratorKind::Custom, None) => {
                return Err(QmetrixError::InvalidGenerator(
                    "custom generator requires eigenvalues".into(),
                ))
            }
            (_, Some(_)) => {
                return Err(QmetrixError::InvalidGenerator(format!(
                    "eigenvalues may only be supplied for a custom generator, not {kind}"
                )))
            }
            (GeneratorKind::PauliZ, None) => {
                if local_dim != 2 {
                    return Err(QmetrixError::InvalidGenerator(format!(
                        "pauli-z requires local_dim = 2, got {local_dim}"
                    )));
                }
                vec![-1.0, 1.0]
            }
            (GeneratorKind::SpinRescaled, None) => spin_rescaled_spectrum(local_dim),
        };
        Self::from_parts(parties, local_dim, kind, local_eigenvalues)
    }

    fn from_parts(parties: usize, local_dim: usize, kind: GeneratorKind, local_eigenvalues: Vec<f64>) -> Result<Self> {
        if local_eigenvalues.len() != local_dim {
            return Err(QmetrixError::DimensionMismatch(format!(
                "{} local eigenvalues for local_dim {local_dim}",
                local_eigenvalues.len()
            )));
        }
        if local_eigenvalues.iter().any(|v| !v.is_finite()) {
            return Err(QmetrixError::NonFinite("local eigenvalues"));
        }
        if local_eigenvalues.windows(2).any(|w| w[1] < w[0]) {
            return Err(QmetrixError::InvalidGenerator(
                "local eigenvalues must be nondecreasing".into(),
            ));
        }
        if kind == GeneratorKind::PauliZ && (local_dim != 2 || local_eigenvalues != [-1.0, 1.0]) {
            return Err(QmetrixError::InvalidGenerator(
                "pauli-z requires local_dim = 2 with eigenvalues (-1, 1)".into(),
            ));
        }
        Ok(Generator {
            parties,
            local_dim,
            local_eigenvalues,
            kind,
        })
    }

    pub fn pauli_z(parties: usize) -> Result<Self> {
        Self::new(parties, 2, GeneratorKind::PauliZ, None)
    }

    pub fn spin_rescaled(parties: usize, local_dim: usize) -> Result<Self> {
        Self::new(parties, local_dim, GeneratorKind::SpinRescaled, None)
    }

    pub fn custom(parties: usize, eigenvalues: &[f64]) -> Result<Self> {
        Self::new(parties, eigenvalues.len(), GeneratorKind::Custom, Some(eigenvalues))
    }

    pub fn parties(&self) -> usize {
        self.parties
    }

    pub fn local_dim(&self) -> usize {
        self.local_dim
    }

    pub fn kind(&self) -> GeneratorKind {
        self.kind
    }

    pub fn local_eigenvalues(&self) -> &[f64] {
        &self.local_eigenvalues
    }

    /// Size `d^N` of the joint space.
    pub fn dimension(&self) -> usize {
        self.local_dim.pow(self.parties as u32)
    }

    /// Eigenvalues `E_p` of the collective generator in lexicographic order.
    pub fn collective_spectrum(&self) -> CollectiveSpectrum {
        let d = self.local_dim;
        let mut values = vec![0.0; self.dimension()];
        for (p, e) in values.iter_mut().enumerate() {
            let mut rest = p;
            let mut sum = 0.0;
            for _ in 0..self.parties {
                sum += self.local_eigenvalues[rest % d];
                rest /= d;
            }
            *e = sum;
        }
        CollectiveSpectrum { values }
    }

    /// Variance of the generator in `state`.
    pub fn variance(&self, state: &ProbeState) -> Result<f64> {
        variance(state, self)
    }

    pub fn qfi(&self, state: &ProbeState) -> Result<f64> {
        qfi(state, self)
    }
}

/// Spin-`(d−1)/2` eigenvalues `−s, …, s` divided by `s`.
fn spin_rescaled_spectrum(d: usize) -> Vec<f64> {
    let s = (d as f64 - 1.0) / 2.0;
    (0..d).map(|j| (j as f64 - s) / s).collect()
}

/// Eigenvalues `E_p` of the collective generator.
#[derive(Debug, Clone, PartialEq)]
pub struct CollectiveSpectrum {
    pub values: Vec<f64>,
}

impl CollectiveSpectrum {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Variance of the spectrum under the distribution `weights`.
    ///
    /// Two-pass form `Σ ω (E − ⟨E⟩)²`, algebraically identical to
    /// `Σ ω E² − (Σ ω E)²` but never negative.
    pub fn variance_of(&self, weights: &[f64]) -> f64 {
        let mean: f64 = weights.iter().zip(&self.values).map(|(w, e)| w * e).sum();
        weights
            .iter()
            .zip(&self.values)
            .map(|(w, e)| w * (e - mean) * (e - mean))
            .sum()
    }
}

/// A phaseless pure probe `|ψ⟩ = Σ_p √ω_p |p⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeState {
    parties: usize,
    local_dim: usize,
    weights: Vec<f64>,
}

impl ProbeState {
    /// Validates `weights` as a probability vector over `d^N` outcomes.
    ///
    /// A normalization drift up to [`RENORMALIZE_TOL`] is absorbed by
    /// rescaling; anything larger is rejected.
    pub fn new(parties: usize, local_dim: usize, weights: Vec<f64>) -> Result<Self> {
        check_shape(parties, local_dim, weights.len())?;
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(QmetrixError::NonFinite("weights"));
        }
        if let Some(w) = weights.iter().find(|&&w| !(0.0..=1.0 + RENORMALIZE_TOL).contains(&w)) {
            return Err(QmetrixError::InvalidWeights(format!("weight {w} outside [0, 1]")));
        }
        let sum: f64 = weights.iter().sum();
        let drift = (sum - 1.0).abs();
        if drift > RENORMALIZE_TOL {
            return Err(QmetrixError::InvalidWeights(format!(
                "weights sum to {sum}, deviation {drift:e} exceeds {RENORMALIZE_TOL:e}"
            )));
        }
        let weights = if drift > NORMALIZATION_TOL {
            weights.into_iter().map(|w| (w / sum).min(1.0)).collect()
        } else {
            weights
        };
        Ok(ProbeState {
            parties,
            local_dim,
            weights,
        })
    }

    /// Normalizes an arbitrary nonnegative vector to unit sum.
    pub fn from_unnormalized(parties: usize, local_dim: usize, raw: &[f64]) -> Result<Self> {
        check_shape(parties, local_dim, raw.len())?;
        if raw.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(QmetrixError::InvalidWeights(
                "raw weights must be finite and nonnegative".into(),
            ));
        }
        let sum: f64 = raw.iter().sum();
        if sum <= 0.0 {
            return Err(QmetrixError::InvalidWeights("raw weights sum to zero".into()));
        }
        Ok(ProbeState {
            parties,
            local_dim,
            weights: raw.iter().map(|w| w / sum).collect(),
        })
    }

    /// State from real amplitudes; weights are their normalized squares.
    pub fn from_amplitudes(parties: usize, local_dim: usize, amplitudes: &[f64]) -> Result<Self> {
        let squares: Vec<f64> = amplitudes.iter().map(|a| a * a).collect();
        Self::from_unnormalized(parties, local_dim, &squares)
    }

    /// Computational-basis state `|p⟩`.
    pub fn basis(parties: usize, local_dim: usize, index: usize) -> Result<Self> {
        let len = local_dim
            .checked_pow(parties as u32)
            .ok_or_else(|| QmetrixError::DimensionMismatch("d^N overflows".into()))?;
        if index >= len {
            return Err(QmetrixError::DimensionMismatch(format!("basis index {index} >= {len}")));
        }
        let mut weights = vec![0.0; len];
        weights[index] = 1.0;
        Self::new(parties, local_dim, weights)
    }

    pub fn parties(&self) -> usize {
        self.parties
    }

    pub fn local_dim(&self) -> usize {
        self.local_dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn dimension(&self) -> usize {
        self.weights.len()
    }

    /// Nonnegative amplitudes `√ω_p`.
    pub fn amplitudes(&self) -> Vec<f64> {
        self.weights.iter().map(|w| w.sqrt()).collect()
    }

    /// Weight at the local index tuple `digits` (party 0 first).
    pub fn weight_at(&self, digits: &[usize]) -> f64 {
        self.weights[joint_index(digits, self.local_dim)]
    }
}

fn check_shape(parties: usize, local_dim: usize, len: usize) -> Result<usize> {
    if parties < 1 || local_dim < 2 {
        return Err(QmetrixError::DimensionMismatch(format!(
            "need parties >= 1 and local_dim >= 2, got N={parties}, d={local_dim}"
        )));
    }
    let expected = local_dim
        .checked_pow(parties as u32)
        .ok_or_else(|| QmetrixError::DimensionMismatch("d^N overflows".into()))?;
    if len != expected {
        return Err(QmetrixError::DimensionMismatch(format!(
            "{len} weights for d^N = {expected}"
        )));
    }
    Ok(expected)
}

/// Lexicographic joint index of a local index tuple.
pub fn joint_index(digits: &[usize], local_dim: usize) -> usize {
    digits.iter().fold(0, |acc, &i| acc * local_dim + i)
}

/// Local index tuple of a joint index (party 0 first).
pub fn local_digits(index: usize, parties: usize, local_dim: usize) -> Vec<usize> {
    let mut digits = vec![0; parties];
    let mut rest = index;
    for slot in digits.iter_mut().rev() {
        *slot = rest % local_dim;
        rest /= local_dim;
    }
    digits
}

fn check_match(state: &ProbeState, g: &Generator) -> Result<()> {
    if state.parties != g.parties || state.local_dim != g.local_dim {
        return Err(QmetrixError::DimensionMismatch(format!(
            "state is (N={}, d={}) but generator is (N={}, d={})",
            state.parties, state.local_dim, g.parties, g.local_dim
        )));
    }
    Ok(())
}

/// `Δ²h = Σ ω_p E_p² − (Σ ω_p E_p)²`.
pub fn variance(state: &ProbeState, g: &Generator) -> Result<f64> {
    check_match(state, g)?;
    Ok(g.collective_spectrum().variance_of(&state.weights))
}

/// Quantum Fisher information `4 Δ²h` of the encoded pure state.
pub fn qfi(state: &ProbeState, g: &Generator) -> Result<f64> {
    Ok(4.0 * variance(state, g)?)
}

/// Single-shot Cramér–Rao standard deviation `Q^(−1/2)`.
pub fn cramer_rao_stddev(q: f64) -> Result<f64> {
    if !q.is_finite() || q <= 0.0 {
        return Err(out_of_range("qfi", q, "(0, inf)"));
    }
    Ok(q.powf(-0.5))
}

/// JSON representation shared by the CLI and file formats:
/// `{parties, local_dim, kind, local_eigenvalues, weights}`.
#[derive(Debug, Serialize, Deserialize)]
struct ProbeRecordIn {
    parties: usize,
    local_dim: usize,
    kind: GeneratorKind,
    local_eigenvalues: Vec<f64>,
    weights: Vec<f64>,
}

#[derive(Serialize)]
struct ProbeRecordOut<'a> {
    parties: usize,
    local_dim: usize,
    kind: GeneratorKind,
    local_eigenvalues: &'a [f64],
    weights: Box<RawValue>,
}

/// Formats `x` with 17 significant digits.
pub fn format_sig17(x: f64) -> String {
    format!("{x:.16e}")
}

/// Serializes a probe together with its generator; weights use 17 significant digits.
pub fn probe_to_json(state: &ProbeState, g: &Generator) -> Result<String> {
    check_match(state, g)?;
    let weights = format!(
        "[{}]",
        state
            .weights
            .iter()
            .map(|w| format_sig17(*w))
            .collect::<Vec<_>>()
            .join(",")
    );
    let record = ProbeRecordOut {
        parties: g.parties,
        local_dim: g.local_dim,
        kind: g.kind,
        local_eigenvalues: &g.local_eigenvalues,
        weights: RawValue::from_string(weights)?,
    };
    Ok(serde_json::to_string(&record)?)
}

/// Parses the record written by [`probe_to_json`].
pub fn probe_from_json(text: &str) -> Result<(ProbeState, Generator)> {
    let rec: ProbeRecordIn = serde_json::from_str(text)?;
    let g = Generator::from_parts(rec.parties, rec.local_dim, rec.kind, rec.local_eigenvalues)?;
    if g.kind == GeneratorKind::SpinRescaled {
        let expected = spin_rescaled_spectrum(g.local_dim);
        if expected
            .iter()
            .zip(g.local_eigenvalues())
            .any(|(a, b)| (a - b).abs() > 1e-12)
        {
            return Err(QmetrixError::InvalidGenerator(
                "spin-rescaled eigenvalues do not match the uniform spectrum".into(),
            ));
        }
    }
    let state = ProbeState::new(rec.parties, rec.local_dim, rec.weights)?;
    Ok((state, g))
}
