//! Stochastic-ranking evolution strategy over the squared-coordinate encoding.
//!
//! The generation loop follows the improved stochastic ranking evolution
//! strategy of Runarsson and Yao: a (μ, λ) selection after stochastic
//! bubble-sort ranking, differential variation for the top parents and
//! log-normally self-adapted Gaussian mutation for the rest. Every
//! candidate is passed through [`repair`] first, and the best point of each
//! restart is refined by a (1+1) strategy with the one-fifth success rule.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::problem::Objective;
use super::repair::repair;
use super::EsConfig;

/// Coordinate bounds of the genotype.
const LOWER: f64 = 0.0;
const UPPER: f64 = 1.0;
const MAX_RESAMPLES: usize = 10;
/// Relative improvements below this do not reset the stall counter.
const STALL_REL: f64 = 1e-10;
/// Coordinates carrying less weight than this are candidates for pruning.
const PRUNE_WEIGHT: f64 = 1e-2;
const PRUNE_ROUNDS: usize = 3;

#[derive(Debug, Clone)]
pub(crate) struct Individual {
    pub x: Vec<f64>,
    pub sigma: Vec<f64>,
    pub f: f64,
    pub phi: f64,
    pub measure: f64,
    /// Unit-norm amplitudes the objective was evaluated at.
    pub amps: Vec<f64>,
}

impl Individual {
    /// Strict improvement order: feasible beats infeasible, then larger QFI,
    /// then smaller violation.
    pub fn better_than(&self, other: &Individual) -> bool {
        match (self.phi == 0.0, other.phi == 0.0) {
            (true, false) => true,
            (false, true) => false,
            (true, true) => self.f > other.f,
            (false, false) => self.phi < other.phi,
        }
    }
}

pub(crate) struct Counters {
    pub evaluations: u64,
    pub feasible: u64,
}

pub(crate) struct RestartOutcome {
    pub best: Individual,
    pub generations: usize,
    pub counters: Counters,
}

fn amplitudes(x: &[f64]) -> Vec<f64> {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        x.iter().map(|v| v / norm).collect()
    } else {
        vec![1.0 / (x.len() as f64).sqrt(); x.len()]
    }
}

pub(crate) fn evaluate(
    obj: &Objective,
    cfg: &EsConfig,
    mut x: Vec<f64>,
    sigma: Vec<f64>,
    rng: &mut ChaCha8Rng,
    counters: &mut Counters,
) -> Individual {
    let mut amps = amplitudes(&x);
    let mut measure = None;
    if cfg.repair && rng.random::<f64>() < cfg.repair_rate {
        if let Some(r) = repair(obj, &amps) {
            amps = r.amps;
            measure = Some(r.measure);
            x.clone_from(&amps);
        }
    }
    let measure = measure.unwrap_or_else(|| obj.measure_of(&amps));
    let phi = obj.violation(measure);
    let f = obj.qfi_of(&amps);
    counters.evaluations += 1;
    if phi == 0.0 {
        counters.feasible += 1;
    }
    Individual {
        x,
        sigma,
        f,
        phi,
        measure,
        amps,
    }
}

/// Stochastic bubble-sort ranking (best first).
pub(crate) fn stochastic_rank(pop: &mut [Individual], pf: f64, rng: &mut ChaCha8Rng) {
    let n = pop.len();
    for _ in 0..n {
        let mut swapped = false;
        for j in 0..n.saturating_sub(1) {
            let u: f64 = rng.random();
            let by_objective = (pop[j].phi == 0.0 && pop[j + 1].phi == 0.0) || u < pf;
            let swap = if by_objective {
                pop[j].f < pop[j + 1].f
            } else {
                pop[j].phi > pop[j + 1].phi
            };
            if swap {
                pop.swap(j, j + 1);
                swapped = true;
            }
        }
        if !swapped {
            break;
        }
    }
}

fn random_point(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(LOWER..UPPER)).collect()
}

pub(crate) fn run_restart(obj: &Objective, cfg: &EsConfig, seeds: &[Vec<f64>], rng: &mut ChaCha8Rng) -> RestartOutcome {
    let n = obj.dim();
    let lambda = cfg.population_for(n);
    let mu = cfg.parents_for(lambda);
    let sigma0 = cfg.initial_sigma(n);
    let tau = 1.0 / (2.0 * (n as f64).sqrt()).sqrt();
    let tau_prime = 1.0 / (2.0 * n as f64).sqrt();
    let mut counters = Counters {
        evaluations: 0,
        feasible: 0,
    };

    let mut pop: Vec<Individual> = (0..lambda)
        .map(|i| {
            let x = seeds
                .get(i)
                .map(|s| s.iter().map(|v| v.clamp(LOWER, UPPER)).collect())
                .unwrap_or_else(|| random_point(n, rng));
            evaluate(obj, cfg, x, sigma0.clone(), rng, &mut counters)
        })
        .collect();

    let mut best = pop[0].clone();
    for ind in &pop[1..] {
        if ind.better_than(&best) {
            best = ind.clone();
        }
    }
    let mut stall = 0;
    let mut generations = 0;
    for _ in 0..cfg.generations {
        generations += 1;
        stochastic_rank(&mut pop, cfg.ranking_pressure, rng);
        pop.truncate(mu);
        let parents = pop;
        let mut offspring = Vec::with_capacity(lambda);
        for k in 0..lambda {
            let i = k % mu;
            let parent = &parents[i];
            let child = if k + 1 < mu {
                let x: Vec<f64> = (0..n)
                    .map(|j| {
                        let v = parent.x[j] + cfg.gamma * (parents[0].x[j] - parents[i + 1].x[j]);
                        if (LOWER..=UPPER).contains(&v) {
                            v
                        } else {
                            parent.x[j]
                        }
                    })
                    .collect();
                evaluate(obj, cfg, x, parent.sigma.clone(), rng, &mut counters)
            } else {
                let global: f64 = StandardNormal.sample(rng);
                let mut sigma = Vec::with_capacity(n);
                let mut x = Vec::with_capacity(n);
                for j in 0..n {
                    let local: f64 = StandardNormal.sample(rng);
                    let s = (parent.sigma[j] * (tau_prime * global + tau * local).exp()).min(UPPER - LOWER);
                    let mut v = parent.x[j];
                    for _ in 0..MAX_RESAMPLES {
                        let z: f64 = StandardNormal.sample(rng);
                        let trial = parent.x[j] + s * z;
                        if (LOWER..=UPPER).contains(&trial) {
                            v = trial;
                            break;
                        }
                    }
                    x.push(v);
                    sigma.push(parent.sigma[j] + cfg.smoothing * (s - parent.sigma[j]));
                }
                evaluate(obj, cfg, x, sigma, rng, &mut counters)
            };
            offspring.push(child);
        }
        pop = offspring;
        let prev = best.clone();
        for ind in &pop {
            if ind.better_than(&best) {
                best = ind.clone();
            }
        }
        let improved = (best.phi == 0.0 && prev.phi > 0.0)
            || (best.phi == 0.0 && best.f > prev.f + STALL_REL * prev.f.abs().max(1.0))
            || (best.phi > 0.0 && best.phi < prev.phi * (1.0 - STALL_REL));
        if improved {
            stall = 0;
        } else {
            stall += 1;
            if stall >= cfg.stall_generations {
                break;
            }
        }
    }

    let best = polish(obj, cfg, best, rng, &mut counters);
    RestartOutcome {
        best,
        generations,
        counters,
    }
}

/// (1+1) refinement with the one-fifth success rule.
fn polish(
    obj: &Objective,
    cfg: &EsConfig,
    mut best: Individual,
    rng: &mut ChaCha8Rng,
    counters: &mut Counters,
) -> Individual {
    let n = best.x.len();
    let mut step = cfg.polish_step;
    let up = 1.5f64;
    let down = up.powf(-0.25);
    for _ in 0..cfg.polish_iterations {
        if step < 1e-12 {
            break;
        }
        let x: Vec<f64> = (0..n)
            .map(|j| {
                let z: f64 = StandardNormal.sample(rng);
                (best.x[j] + step * z).clamp(LOWER, UPPER)
            })
            .collect();
        let trial = evaluate(obj, cfg, x, best.sigma.clone(), rng, counters);
        if trial.better_than(&best) {
            best = trial;
            step *= up;
        } else {
            step *= down;
        }
    }
    prune(obj, cfg, best, rng, counters)
}

/// Tries zeroing small coordinates one at a time, smallest first.
fn prune(
    obj: &Objective,
    cfg: &EsConfig,
    mut best: Individual,
    rng: &mut ChaCha8Rng,
    counters: &mut Counters,
) -> Individual {
    for _ in 0..PRUNE_ROUNDS {
        let mut order: Vec<usize> = (0..best.x.len()).filter(|&j| best.x[j] > 0.0).collect();
        order.sort_by(|&a, &b| best.x[a].total_cmp(&best.x[b]));
        let mut improved = false;
        for j in order {
            if best.amps[j] * best.amps[j] > PRUNE_WEIGHT {
                break;
            }
            let mut x = best.x.clone();
            x[j] = 0.0;
            let trial = evaluate(obj, cfg, x, best.sigma.clone(), rng, counters);
            if trial.better_than(&best) {
                best = trial;
                improved = true;
            }
        }
        if !improved {
            break;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn ind(f: f64, phi: f64) -> Individual {
        Individual {
            x: vec![],
            sigma: vec![],
            f,
            phi,
            measure: 0.0,
            amps: vec![],
        }
    }

    #[test]
    fn ranking_with_zero_pressure_orders_by_feasibility_then_objective() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut pop = vec![ind(5.0, 0.3), ind(1.0, 0.0), ind(9.0, 0.1), ind(3.0, 0.0)];
        stochastic_rank(&mut pop, 0.0, &mut rng);
        let order: Vec<(f64, f64)> = pop.iter().map(|i| (i.f, i.phi)).collect();
        assert_eq!(order, vec![(3.0, 0.0), (1.0, 0.0), (9.0, 0.1), (5.0, 0.3)]);
    }

    #[test]
    fn ranking_with_full_pressure_orders_by_objective() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut pop = vec![ind(5.0, 0.3), ind(1.0, 0.0), ind(9.0, 0.1), ind(3.0, 0.0)];
        stochastic_rank(&mut pop, 1.0, &mut rng);
        let fs: Vec<f64> = pop.iter().map(|i| i.f).collect();
        assert_eq!(fs, vec![9.0, 5.0, 3.0, 1.0]);
    }

    #[test]
    fn feasible_dominates_in_comparison() {
        assert!(ind(1.0, 0.0).better_than(&ind(100.0, 1e-9)));
        assert!(ind(2.0, 0.0).better_than(&ind(1.0, 0.0)));
        assert!(ind(0.0, 0.1).better_than(&ind(100.0, 0.2)));
    }
}
