//! Closed-form optimal QFI curves, their optimal probes, and the boundary
//! families that the interior optimum dominates.

use serde::{Deserialize, Serialize};

use crate::error::{out_of_range, QmetrixError, Result};
use crate::measures::{binary_entropy, EntanglementValue, Measure};
use crate::states::{cramer_rao_stddev, joint_index, ProbeState};

/// Bisection stops once the bracket is narrower than this.
const ENTROPY_INVERSION_TOL: f64 = 1e-12;
const ENTROPY_INVERSION_MAX_ITER: usize = 60;

fn check_ggm(g: f64) -> Result<()> {
    if !(0.0..=0.5).contains(&g) {
        return Err(out_of_range("G", g, "[0, 0.5]"));
    }
    Ok(())
}

fn check_dim(d: usize) -> Result<()> {
    if !(2..=5).contains(&d) {
        return Err(QmetrixError::Unsupported(format!("local_dim {d} outside 2..=5")));
    }
    Ok(())
}

/// `√(1 − (1 − 2G)²)`.
fn root_term(g: f64) -> f64 {
    let t = 1.0 - 2.0 * g;
    (1.0 - t * t).max(0.0).sqrt()
}

/// Corner weight `ω0 = (1 + √(1 − (1 − 2G)²)) / 4` of the optimal family.
pub fn omega0_for_ggm(g: f64) -> Result<f64> {
    check_ggm(g)?;
    Ok((1.0 + root_term(g)) / 4.0)
}

/// Optimal two-qubit QFI at fixed GGM: `8(1 + √(1 − (1 − 2G)²))`.
pub fn q_opt_ggm(g: f64) -> Result<f64> {
    check_ggm(g)?;
    Ok(8.0 * (1.0 + root_term(g)))
}

/// Solves `binary_entropy(λ) = S` for `λ ∈ [0, ½]`.
pub fn entropy_to_lambda(s: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&s) {
        return Err(out_of_range("S", s, "[0, 1]"));
    }
    if s == 0.0 {
        return Ok(0.0);
    }
    if s == 1.0 {
        return Ok(0.5);
    }
    let (mut lo, mut hi) = (0.0f64, 0.5f64);
    for _ in 0..ENTROPY_INVERSION_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        if binary_entropy(mid)? < s {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < ENTROPY_INVERSION_TOL {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Optimal two-qubit QFI at fixed entanglement entropy.
///
/// The entropy fixes the smaller Schmidt weight `λ`, and the optimum is then
/// the same family as for GGM with `G = λ`.
pub fn q_opt_entropy(s: f64) -> Result<f64> {
    let lambda = entropy_to_lambda(s)?;
    Ok(32.0 * omega0_for_ggm(lambda)?)
}

fn corner_state(omega0: f64, d: usize) -> Result<ProbeState> {
    check_dim(d)?;
    let omega1 = 0.5 - omega0;
    let mut w = vec![0.0; d * d];
    let top = d - 1;
    w[joint_index(&[0, 0], d)] = omega0;
    w[joint_index(&[0, top], d)] = omega1;
    w[joint_index(&[top, 0], d)] = omega1;
    w[joint_index(&[top, top], d)] = omega0;
    ProbeState::new(2, d, w)
}

/// Optimal probe at fixed GGM: weight only on the corners `(0,0), (0,d−1), (d−1,0), (d−1,d−1)`.
pub fn optimal_state_ggm(g: f64, d: usize) -> Result<ProbeState> {
    corner_state(omega0_for_ggm(g)?, d)
}

/// Optimal probe at fixed entanglement entropy.
pub fn optimal_state_entropy(s: f64, d: usize) -> Result<ProbeState> {
    let lambda = entropy_to_lambda(s)?;
    corner_state(omega0_for_ggm(lambda)?, d)
}

/// Optimal QFI for the unequally spaced qutrit spectrum (0, 2, 3): `4.5(1 + √(1 − (1 − 2G)²))`.
pub fn q_opt_unequal_d3(g: f64) -> Result<f64> {
    check_ggm(g)?;
    Ok(4.5 * (1.0 + root_term(g)))
}

/// Standard quantum limit `4N` for Pauli-Z qubits.
pub fn sql(n: usize) -> Result<f64> {
    if n < 1 {
        return Err(out_of_range("N", n as f64, ">= 1"));
    }
    Ok(4.0 * n as f64)
}

/// Heisenberg limit `4N²` for Pauli-Z qubits.
pub fn hl(n: usize) -> Result<f64> {
    if n < 1 {
        return Err(out_of_range("N", n as f64, ">= 1"));
    }
    Ok(4.0 * (n * n) as f64)
}

/// Boundary families of the two-qubit weight simplex.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryCase {
    /// One of ω0, ω3 vanishes and ω1 = ω2: `16(u − u²)`.
    CornerMissing,
    /// One of ω1, ω2 vanishes with ω3 = ½ − ω0: `8 − 4(1 − 4ω0)²`; parametrized by ω0.
    HalfSum,
    /// One of ω1, ω2 vanishes with ω3 = ω0: `16u`.
    EqualOuter,
    /// ω1 = ω2 = 0: `16u²`.
    OuterOnly,
}

impl BoundaryCase {
    pub const ALL: [BoundaryCase; 4] = [
        BoundaryCase::CornerMissing,
        BoundaryCase::HalfSum,
        BoundaryCase::EqualOuter,
        BoundaryCase::OuterOnly,
    ];
}

/// QFI along a boundary family, with `u = √(1 − (1 − 2G)²)`.
///
/// `param` is `G ∈ (0, ½)` for every case except [`BoundaryCase::HalfSum`],
/// where it is `ω0 ∈ [0, ½]`.
pub fn boundary_qfi(param: f64, case: BoundaryCase) -> Result<f64> {
    if case == BoundaryCase::HalfSum {
        if !(0.0..=0.5).contains(&param) {
            return Err(out_of_range("omega0", param, "[0, 0.5]"));
        }
        let t = 1.0 - 4.0 * param;
        return Ok(8.0 - 4.0 * t * t);
    }
    if !(param > 0.0 && param < 0.5) {
        return Err(out_of_range("G", param, "(0, 0.5)"));
    }
    let u = root_term(param);
    Ok(match case {
        BoundaryCase::CornerMissing => 16.0 * (u - u * u),
        BoundaryCase::EqualOuter => 16.0 * u,
        BoundaryCase::OuterOnly => 16.0 * u * u,
        BoundaryCase::HalfSum => unreachable!(),
    })
}

/// One row of a tabulated law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LawCurvePoint {
    pub entanglement: EntanglementValue,
    pub q_opt: f64,
    pub stddev: f64,
}

/// Which spectrum a tabulated curve refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LawSpectrum {
    Standard,
    UnequalD3,
}

/// Evaluates one law point. GM shares the GGM curve since the two coincide for two parties.
pub fn law_point(measure: Measure, value: f64, spectrum: LawSpectrum) -> Result<LawCurvePoint> {
    let q = match (measure, spectrum) {
        (Measure::Ggm, LawSpectrum::Standard) => q_opt_ggm(value)?,
        (Measure::Ggm, LawSpectrum::UnequalD3) => q_opt_unequal_d3(value)?,
        (Measure::Entropy, LawSpectrum::Standard) => q_opt_entropy(value)?,
        (Measure::Entropy, LawSpectrum::UnequalD3) => q_opt_entropy(value)? * 0.5625,
        (Measure::Gm, LawSpectrum::Standard) => q_opt_ggm(value)?,
        (Measure::Gm, LawSpectrum::UnequalD3) => q_opt_unequal_d3(value)?,
    };
    Ok(LawCurvePoint {
        entanglement: EntanglementValue { measure, value },
        q_opt: q,
        stddev: cramer_rao_stddev(q)?,
    })
}
