//! Entanglement-constrained QFI maximization.
//!
//! [`maximize_qfi`] runs independent restarts of a stochastic-ranking
//! evolution strategy in parallel and keeps the best feasible point.
//! [`grid_oracle`] is an independent brute-force verifier for four-coordinate
//! problems and [`sweep`] walks a list of targets with warm starts.

mod grid;
mod isres;
mod problem;
mod repair;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{out_of_range, QmetrixError, Result};
use crate::states::ProbeState;

pub use grid::{grid_oracle, GridOracleResult};
pub(crate) use problem::Objective;
pub use problem::{ConstrainedProblem, SearchSpace};

/// Hyperparameters of the evolution strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EsConfig {
    /// Offspring per generation; `None` means `20·(n+1)` for `n` search coordinates.
    pub population: Option<usize>,
    pub generations: usize,
    /// Probability `p_f` of comparing by objective regardless of feasibility.
    pub ranking_pressure: f64,
    /// Initial per-coordinate step sizes; `None` means `1/√n` everywhere.
    pub mutation_scales: Option<Vec<f64>>,
    pub restarts: usize,
    pub seed: u64,
    /// Parents kept per generation as a fraction of the population.
    pub parent_fraction: f64,
    /// Differential-variation step `γ`.
    pub gamma: f64,
    /// Exponential smoothing `α` of the adapted step sizes.
    pub smoothing: f64,
    /// A restart ends after this many generations without improvement.
    pub stall_generations: usize,
    pub polish_iterations: usize,
    pub polish_step: f64,
    /// Project candidates onto the constraint surface before ranking.
    pub repair: bool,
    /// Probability that a candidate is repaired when `repair` is on.
    pub repair_rate: f64,
}

impl Default for EsConfig {
    fn default() -> Self {
        EsConfig {
            population: None,
            generations: 300,
            ranking_pressure: 0.45,
            mutation_scales: None,
            restarts: 8,
            seed: 0,
            parent_fraction: 1.0 / 7.0,
            gamma: 0.85,
            smoothing: 0.2,
            stall_generations: 40,
            polish_iterations: 1500,
            polish_step: 0.02,
            repair: true,
            repair_rate: 1.0,
        }
    }
}

impl EsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.ranking_pressure > 0.0 && self.ranking_pressure < 0.5) {
            return Err(out_of_range("ranking_pressure", self.ranking_pressure, "(0, 0.5)"));
        }
        if let Some(p) = self.population {
            if p < 8 {
                return Err(out_of_range("population", p as f64, ">= 8"));
            }
        }
        if self.restarts < 1 {
            return Err(out_of_range("restarts", self.restarts as f64, ">= 1"));
        }
        if !(self.parent_fraction > 0.0 && self.parent_fraction <= 1.0) {
            return Err(out_of_range("parent_fraction", self.parent_fraction, "(0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.repair_rate) {
            return Err(out_of_range("repair_rate", self.repair_rate, "[0, 1]"));
        }
        if let Some(s) = &self.mutation_scales {
            if s.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(QmetrixError::InvalidConfig(
                    "mutation scales must be positive and finite".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn population_for(&self, n: usize) -> usize {
        self.population.unwrap_or(20 * (n + 1))
    }

    pub(crate) fn parents_for(&self, lambda: usize) -> usize {
        ((lambda as f64 * self.parent_fraction).round() as usize).clamp(2, lambda)
    }

    pub(crate) fn initial_sigma(&self, n: usize) -> Vec<f64> {
        match &self.mutation_scales {
            Some(s) if s.len() == n => s.clone(),
            Some(s) if s.len() == 1 => vec![s[0]; n],
            _ => vec![1.0 / (n as f64).sqrt(); n],
        }
    }
}

/// Outcome of one constrained maximization.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationResult {
    pub best_weights: ProbeState,
    pub q_best: f64,
    /// `|measure(best_weights) − target|`.
    pub constraint_residual: f64,
    pub achieved: f64,
    /// Generations run by the restart that produced the best point.
    pub generations: usize,
    /// Share of all evaluated candidates that satisfied the constraint band.
    pub feasible_fraction: f64,
    pub evaluations: u64,
    pub seed: u64,
    /// False when no candidate met the constraint band.
    pub converged: bool,
}

/// RNG stream of a restart: target index in the high half, restart index in the low half.
fn stream_id(target_index: usize, restart: usize) -> u64 {
    ((target_index as u64) << 32) | restart as u64
}

pub(crate) fn maximize_with_seeds(
    problem: &ConstrainedProblem,
    cfg: &EsConfig,
    target_index: usize,
    warm: Option<&[f64]>,
) -> Result<OptimizationResult> {
    problem.validate()?;
    cfg.validate()?;
    let obj = Objective::new(problem);
    let outcomes: Vec<isres::RestartOutcome> = (0..cfg.restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(stream_id(target_index, r));
            let seeds: Vec<Vec<f64>> = match (r, warm) {
                (0, Some(w)) => vec![w.to_vec()],
                _ => Vec::new(),
            };
            isres::run_restart(&obj, cfg, &seeds, &mut rng)
        })
        .collect();

    let mut evaluations = 0;
    let mut feasible = 0;
    let mut best_idx = 0;
    for (i, o) in outcomes.iter().enumerate() {
        evaluations += o.counters.evaluations;
        feasible += o.counters.feasible;
        if o.best.better_than(&outcomes[best_idx].best) {
            best_idx = i;
        }
    }
    let best = &outcomes[best_idx];
    let state = obj.to_state(&best.best.amps)?;
    Ok(OptimizationResult {
        best_weights: state,
        q_best: best.best.f,
        constraint_residual: (best.best.measure - problem.target).abs(),
        achieved: best.best.measure,
        generations: best.generations,
        feasible_fraction: feasible as f64 / evaluations.max(1) as f64,
        evaluations,
        seed: cfg.seed,
        converged: best.best.phi == 0.0,
    })
}

/// Maximizes QFI under the equality constraint of `problem`.
///
/// When no candidate meets the constraint band, the least-violating point is
/// returned with `converged = false`.
pub fn maximize_qfi(problem: &ConstrainedProblem, cfg: &EsConfig) -> Result<OptimizationResult> {
    maximize_with_seeds(problem, cfg, 0, None)
}

/// Runs `maximize_qfi` over `targets` in order, seeding each search with the
/// previous target's optimum.
///
/// Per-target errors are returned in place without stopping the sweep.
pub fn sweep(
    template: &ConstrainedProblem,
    targets: &[f64],
    cfg: &EsConfig,
) -> Result<Vec<(f64, Result<OptimizationResult>)>> {
    cfg.validate()?;
    let increasing = targets.windows(2).all(|w| w[1] >= w[0]);
    let decreasing = targets.windows(2).all(|w| w[1] <= w[0]);
    if !(increasing || decreasing) {
        return Err(QmetrixError::InvalidConfig("sweep targets must be monotone".into()));
    }
    let coords = template.coordinates();
    let mut warm: Option<Vec<f64>> = None;
    let mut out = Vec::with_capacity(targets.len());
    for (i, &t) in targets.iter().enumerate() {
        let result = template
            .with_target(t)
            .and_then(|p| maximize_with_seeds(&p, cfg, i, warm.as_deref()));
        if let Ok(r) = &result {
            warm = Some(coords.iter().map(|&p| r.best_weights.weights()[p].sqrt()).collect());
        }
        out.push((t, result));
    }
    Ok(out)
}

/// Evenly spaced grid `from, from + step, …` up to and including `to`.
pub fn target_grid(from: f64, to: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && step.is_finite()) || !from.is_finite() || !to.is_finite() || to < from {
        return Err(QmetrixError::InvalidConfig(format!("bad grid {from}:{step}:{to}")));
    }
    let count = ((to - from) / step + 1e-9).floor() as usize;
    let mut v: Vec<f64> = (0..=count).map(|i| from + i as f64 * step).collect();
    if let Some(last) = v.last_mut() {
        if (*last - to).abs() < 1e-9 * step.max(1.0) {
            *last = to;
        }
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laws::q_opt_ggm;
    use crate::measures::Measure;
    use crate::states::Generator;

    fn quick() -> EsConfig {
        EsConfig {
            restarts: 2,
            generations: 120,
            seed: 11,
            ..EsConfig::default()
        }
    }

    #[test]
    fn grid_includes_endpoint() {
        let g = target_grid(0.0, 0.5, 0.05).unwrap();
        assert_eq!(g.len(), 11);
        assert_eq!(g[10], 0.5);
        assert!(target_grid(0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(EsConfig {
            ranking_pressure: 0.5,
            ..EsConfig::default()
        }
        .validate()
        .is_err());
        assert!(EsConfig {
            population: Some(4),
            ..EsConfig::default()
        }
        .validate()
        .is_err());
        assert!(EsConfig::default().validate().is_ok());
    }

    #[test]
    fn rejects_out_of_range_targets() {
        let g = Generator::pauli_z(2).unwrap();
        assert!(matches!(
            ConstrainedProblem::new(g.clone(), Measure::Ggm, 0.6, 1e-6, SearchSpace::FullSimplex),
            Err(QmetrixError::Infeasible(_))
        ));
        assert!(ConstrainedProblem::new(g.clone(), Measure::Entropy, 1.1, 1e-6, SearchSpace::FullSimplex).is_err());
        assert!(ConstrainedProblem::new(g, Measure::Ggm, 0.2, 0.0, SearchSpace::FullSimplex).is_err());
        let g3 = Generator::pauli_z(3).unwrap();
        assert!(matches!(
            ConstrainedProblem::new(g3, Measure::Gm, 0.2, 1e-6, SearchSpace::FullSimplex),
            Err(QmetrixError::Unsupported(_))
        ));
    }

    #[test]
    fn two_qubit_quarter_ggm() {
        let p = ConstrainedProblem::new(
            Generator::pauli_z(2).unwrap(),
            Measure::Ggm,
            0.25,
            1e-6,
            SearchSpace::FullSimplex,
        )
        .unwrap();
        let r = maximize_qfi(&p, &quick()).unwrap();
        assert!(r.converged);
        assert!(r.constraint_residual <= 1e-6);
        assert!((r.q_best - q_opt_ggm(0.25).unwrap()).abs() < 1e-3, "{}", r.q_best);
    }

    #[test]
    fn replay_is_bit_identical() {
        let p = ConstrainedProblem::new(
            Generator::spin_rescaled(2, 3).unwrap(),
            Measure::Ggm,
            0.3,
            1e-6,
            SearchSpace::FullSimplex,
        )
        .unwrap();
        let cfg = EsConfig {
            generations: 30,
            ..quick()
        };
        assert_eq!(maximize_qfi(&p, &cfg).unwrap(), maximize_qfi(&p, &cfg).unwrap());
    }

    #[test]
    fn sweep_reports_per_target() {
        let p = ConstrainedProblem::new(
            Generator::pauli_z(2).unwrap(),
            Measure::Ggm,
            0.0,
            1e-6,
            SearchSpace::FullSimplex,
        )
        .unwrap();
        let out = sweep(&p, &[0.1, 0.3, 0.7], &quick()).unwrap();
        assert_eq!(out.len(), 3);
        assert!(out[0].1.is_ok() && out[1].1.is_ok());
        assert!(out[2].1.is_err());
        assert!(sweep(&p, &[0.3, 0.1, 0.2], &quick()).is_err());
    }
}
