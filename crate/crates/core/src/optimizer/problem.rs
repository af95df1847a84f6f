use serde::{Deserialize, Serialize};

use crate::error::{out_of_range, QmetrixError, Result};
use crate::measures::{entropy_of_spectrum, spectrum, CutLayout, GgmEvaluator, Measure};
use crate::states::{local_digits, Generator, ProbeState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SearchSpace {
    /// Every weight of the `d^N` simplex is free.
    FullSimplex,
    /// Only the `2^N` basis states built from local indices `{0, d−1}` carry weight.
    CornerSimplex,
}

impl std::str::FromStr for SearchSpace {
    type Err = QmetrixError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "full" | "full-simplex" => Ok(SearchSpace::FullSimplex),
            "corner" | "corner-simplex" => Ok(SearchSpace::CornerSimplex),
            other => Err(QmetrixError::Parse(format!("unknown search space '{other}'"))),
        }
    }
}

impl std::fmt::Display for SearchSpace {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SearchSpace::FullSimplex => "full-simplex",
            SearchSpace::CornerSimplex => "corner-simplex",
        })
    }
}

/// Maximize QFI subject to `|measure(ω) − target| ≤ constraint_tol`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstrainedProblem {
    pub generator: Generator,
    pub measure: Measure,
    pub target: f64,
    pub constraint_tol: f64,
    pub search_space: SearchSpace,
}

impl ConstrainedProblem {
    pub fn new(
        generator: Generator,
        measure: Measure,
        target: f64,
        constraint_tol: f64,
        search_space: SearchSpace,
    ) -> Result<Self> {
        let p = ConstrainedProblem {
            generator,
            measure,
            target,
            constraint_tol,
            search_space,
        };
        p.validate()?;
        Ok(p)
    }

    /// Same problem at another target.
    pub fn with_target(&self, target: f64) -> Result<Self> {
        let mut p = self.clone();
        p.target = target;
        p.validate()?;
        Ok(p)
    }

    /// Closed range of the measure for this `(N, d)`.
    pub fn measure_range(&self) -> (f64, f64) {
        let d = self.generator.local_dim() as f64;
        match self.measure {
            Measure::Ggm | Measure::Gm => (0.0, (d - 1.0) / d),
            Measure::Entropy => (0.0, d.log2()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.generator.parties();
        if n < 2 {
            return Err(QmetrixError::Unsupported(
                "constrained optimization needs at least two parties".into(),
            ));
        }
        if !(self.constraint_tol > 0.0 && self.constraint_tol.is_finite()) {
            return Err(out_of_range("constraint_tol", self.constraint_tol, "(0, inf)"));
        }
        match self.measure {
            Measure::Entropy if n != 2 => {
                return Err(QmetrixError::Unsupported(format!(
                    "entropy constraint needs N = 2, got {n}"
                )))
            }
            Measure::Gm if n != 2 => {
                return Err(QmetrixError::Unsupported(
                    "GM constraints with N >= 3 are handled by the sampler (`sample-gm`)".into(),
                ))
            }
            _ => {}
        }
        if !self.target.is_finite() {
            return Err(QmetrixError::NonFinite("target"));
        }
        let (lo, hi) = self.measure_range();
        if self.target < lo || self.target > hi + 1e-15 {
            return Err(QmetrixError::Infeasible(format!(
                "{} target {} outside [{lo}, {hi}] for N={n}, d={}",
                self.measure,
                self.target,
                self.generator.local_dim()
            )));
        }
        Ok(())
    }

    /// Joint indices of the searched coordinates.
    pub(crate) fn coordinates(&self) -> Vec<usize> {
        let n = self.generator.parties();
        let d = self.generator.local_dim();
        let len = self.generator.dimension();
        match self.search_space {
            SearchSpace::FullSimplex => (0..len).collect(),
            SearchSpace::CornerSimplex => (0..len)
                .filter(|&p| local_digits(p, n, d).iter().all(|&i| i == 0 || i == d - 1))
                .collect(),
        }
    }
}

/// Measure and objective evaluation on reduced coordinates.
#[derive(Debug, Clone)]
pub(crate) struct Objective {
    pub parties: usize,
    pub local_dim: usize,
    pub coords: Vec<usize>,
    pub energies: Vec<f64>,
    pub measure: Measure,
    pub target: f64,
    pub tol: f64,
    /// Cut layouts over the full joint space.
    ggm: GgmEvaluator,
    full_len: usize,
    /// Local levels with the smallest and largest generator eigenvalue.
    pub extreme_levels: (usize, usize),
}

impl Objective {
    pub fn new(problem: &ConstrainedProblem) -> Self {
        let spec = problem.generator.collective_spectrum();
        let coords = problem.coordinates();
        let energies = coords.iter().map(|&p| spec.values[p]).collect();
        let n = problem.generator.parties();
        let d = problem.generator.local_dim();
        let local = problem.generator.local_eigenvalues();
        let lo = (0..d).min_by(|&a, &b| local[a].total_cmp(&local[b])).unwrap_or(0);
        let hi = (0..d).rev().max_by(|&a, &b| local[a].total_cmp(&local[b])).unwrap_or(0);
        Objective {
            extreme_levels: (lo, hi),
            parties: n,
            local_dim: d,
            energies,
            measure: problem.measure,
            target: problem.target,
            tol: problem.constraint_tol,
            ggm: GgmEvaluator::new(n, d),
            full_len: problem.generator.dimension(),
            coords,
        }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn embed(&self, reduced: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.full_len];
        for (&p, &x) in self.coords.iter().zip(reduced) {
            full[p] = x;
        }
        full
    }

    pub fn cuts(&self) -> &[CutLayout] {
        &self.ggm.cuts
    }

    /// Measure of a unit-norm reduced amplitude vector.
    pub fn measure_of(&self, amps: &[f64]) -> f64 {
        let full = self.embed(amps);
        match self.measure {
            Measure::Ggm | Measure::Gm => self.ggm.ggm(&full),
            Measure::Entropy => {
                let (k, g) = self.ggm.cuts[0].gram(&full);
                entropy_of_spectrum(&spectrum(&g, k))
            }
        }
    }

    /// Index of the cut with the largest Schmidt coefficient.
    pub fn dominant_cut(&self, amps: &[f64]) -> usize {
        match self.measure {
            Measure::Entropy => 0,
            _ => self.ggm.max_schmidt(&self.embed(amps)).1,
        }
    }

    /// QFI of the weights `amps²`.
    pub fn qfi_of(&self, amps: &[f64]) -> f64 {
        let norm: f64 = amps.iter().map(|a| a * a).sum();
        let mean: f64 = amps.iter().zip(&self.energies).map(|(a, e)| a * a * e).sum::<f64>() / norm;
        let var: f64 = amps
            .iter()
            .zip(&self.energies)
            .map(|(a, e)| a * a * (e - mean) * (e - mean))
            .sum::<f64>()
            / norm;
        4.0 * var
    }

    pub fn violation(&self, m: f64) -> f64 {
        ((m - self.target).abs() - self.tol).max(0.0)
    }

    pub fn to_state(&self, amps: &[f64]) -> Result<ProbeState> {
        let squares: Vec<f64> = self.embed(amps).iter().map(|a| a * a).collect();
        ProbeState::from_unnormalized(self.parties, self.local_dim, &squares)
    }
}
