//! Acceptance checks: each criterion runs the relevant pipeline end to end
//! and reports a pass flag together with the worst observed deviation.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::fitting::{fit, FitFamily};
use crate::laws::{boundary_qfi, hl, optimal_state_ggm, q_opt_entropy, q_opt_ggm, q_opt_unequal_d3, sql, BoundaryCase};
use crate::measures::{binary_entropy, entropy_bipartite, ggm, ggm_two_qubit_closed, gm, GmSearchConfig, Measure};
use crate::optimizer::{
    grid_oracle, sweep, target_grid, ConstrainedProblem, EsConfig, OptimizationResult, SearchSpace,
};
use crate::sampler::{compare_runs, run_sampler, SamplerConfig};
use crate::states::{cramer_rao_stddev, joint_index, Generator, ProbeState};

const CONSTRAINT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionOutcome {
    pub id: u32,
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CriterionOutcome {
    pub fn line(&self) -> String {
        format!(
            "{} criterion {:>2} {}: {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.detail
        )
    }
}

/// Budgets shared by the criteria; tolerances are fixed by the criteria themselves.
#[derive(Debug, Clone, PartialEq)]
pub struct AcceptanceConfig {
    pub es: EsConfig,
    /// ES settings for the larger qudit problems of criterion 3.
    pub es_large: EsConfig,
    pub grid_resolution: usize,
    pub sampler_small: u64,
    pub sampler_large: u64,
    pub sampler_seed: u64,
    pub random_states: usize,
    pub seed: u64,
}

impl Default for AcceptanceConfig {
    fn default() -> Self {
        let es = EsConfig {
            restarts: 4,
            seed: 2024,
            ..EsConfig::default()
        };
        AcceptanceConfig {
            es_large: EsConfig {
                restarts: 2,
                ..es.clone()
            },
            es,
            grid_resolution: 400,
            sampler_small: 100_000,
            sampler_large: 1_000_000,
            sampler_seed: 7,
            random_states: 10_000,
            seed: 2024,
        }
    }
}

fn run_sweep(
    generator: Generator,
    measure: Measure,
    targets: &[f64],
    cfg: &EsConfig,
) -> Result<Vec<(f64, OptimizationResult)>> {
    let template = ConstrainedProblem::new(generator, measure, targets[0], CONSTRAINT_TOL, SearchSpace::FullSimplex)?;
    sweep(&template, targets, cfg)?
        .into_iter()
        .map(|(t, r)| r.map(|r| (t, r)))
        .collect()
}

fn ggm_grid() -> Vec<f64> {
    target_grid(0.0, 0.5, 0.05).expect("static grid")
}

/// Largest deviation from a reference curve, with the target where it occurs.
fn worst(rows: &[(f64, OptimizationResult)], law: impl Fn(f64) -> Result<f64>) -> Result<(f64, f64)> {
    let mut w = (0.0, f64::NAN);
    for (t, r) in rows {
        let diff = (r.q_best - law(*t)?).abs();
        if diff > w.0 || diff.is_nan() || w.1.is_nan() {
            w = (diff, *t);
        }
    }
    Ok(w)
}

pub fn criterion_1(cfg: &AcceptanceConfig) -> Result<CriterionOutcome> {
    let rows = run_sweep(Generator::pauli_z(2)?, Measure::Ggm, &ggm_grid(), &cfg.es)?;
    let (max_diff, at) = worst(&rows, q_opt_ggm)?;
    let q0 = rows[0].1.q_best;
    let q5 = rows[rows.len() - 1].1.q_best;
    let ends = (q0 - 8.0).abs() <= 1e-6 && (q5 - 16.0).abs() <= 1e-6;
    Ok(CriterionOutcome {
        id: 1,
        name: "GGM law, two qubits".into(),
        passed: max_diff <= 1e-3 && ends && rows.iter().all(|r| r.1.converged),
        detail: format!("max |q - law| = {max_diff:.2e} at G = {at:.2}; q(0) = {q0:.9}, q(0.5) = {q5:.9}"),
    })
}

pub fn criterion_2(cfg: &AcceptanceConfig) -> Result<CriterionOutcome> {
    let grid = target_grid(0.0, 1.0, 0.1)?;
    let rows = run_sweep(Generator::pauli_z(2)?, Measure::Entropy, &grid, &cfg.es)?;
    let (max_diff, at) = worst(&rows, q_opt_entropy)?;
    Ok(CriterionOutcome {
        id: 2,
        name: "entropy law, two qubits".into(),
        passed: max_diff <= 1e-3 && rows.iter().all(|r| r.1.converged),
        detail: format!("max |q - law| = {max_diff:.2e} at S = {at:.1}"),
    })
}

/// Weight outside the four corner basis states of a two-qudit probe.
pub fn off_corner_weight(state: &ProbeState) -> f64 {
    let d = state.local_dim();
    let top = d - 1;
    let w = state.weights();
    let corner: f64 = [[0, 0], [0, top], [top, 0], [top, top]]
        .iter()
        .map(|c| w[joint_index(c, d)])
        .sum();
    (1.0 - corner).max(0.0)
}

pub fn criterion_3(cfg: &AcceptanceConfig) -> Result<CriterionOutcome> {
    let mut passed = true;
    let mut detail = String::new();
    for d in 3..=5 {
        let es = if d == 3 { &cfg.es } else { &cfg.es_large };
        let rows = run_sweep(Generator::spin_rescaled(2, d)?, Measure::Ggm, &ggm_grid(), es)?;
        let (max_diff, at) = worst(&rows, q_opt_ggm)?;
        let off = rows
            .iter()
            .map(|(_, r)| off_corner_weight(&r.best_weights))
            .fold(0.0, f64::max);
        passed &= max_diff <= 1e-3 && off < 1e-3 && rows.iter().all(|r| r.1.converged);
        let _ = write!(
            detail,
            "{}d={d}: max |q - law| = {max_diff:.2e} (G = {at:.2}), max off-corner = {off:.2e}",
            if d > 3 { "; " } else { "" }
        );
    }
    Ok(CriterionOutcome {
        id: 3,
        name: "qudit curves equal the qubit curve".into(),
        passed,
        detail,
    })
}

pub fn criterion_4(cfg: &AcceptanceConfig) -> Result<CriterionOutcome> {
    let rows = run_sweep(
        Generator::custom(2, &[0.0, 2.0, 3.0])?,
        Measure::Ggm,
        &ggm_grid(),
        &cfg.es,
    )?;
    let (max_diff, at) = worst(&rows, q_opt_unequal_d3)?;
    let mut ratio_dev: f64 = 0.0;
    for g in ggm_grid() {
        ratio_dev = ratio_dev.max((q_opt_unequal_d3(g)? - 0.5625 * q_opt_ggm(g)?).abs());
    }
    let mid = &rows[5];
    Ok(CriterionOutcome {
        id: 4,
        name: "unequal (0,2,3) spectrum".into(),
        passed: max_diff <= 1e-3 && ratio_dev <= 1e-12,
        detail: format!(
            "max |q - 4.5(1+u)| = {max_diff:.3e} at G = {at:.2} (q({:.2}) = {:.6} vs {:.6}); analytic 0.5625 ratio deviation = {ratio_dev:.1e}",
            mid.0,
            mid.1.q_best,
            q_opt_unequal_d3(mid.0)?
        ),
    })
}

/// Grid error bound at `g`: the law's change over one grid step plus round-off.
fn grid_error_bound(g: f64, resolution: usize) -> Result<f64> {
    let step = 1.0 / resolution as f64;
    Ok(q_opt_ggm((g + step).min(0.5))? - q_opt_ggm(g)? + 1e-9)
}

pub fn criterion_5(cfg: &AcceptanceConfig) -> Result<CriterionOutcome> {
    let mut boundary_ok = true;
    let mut min_gap = f64::INFINITY;
    let half_sum_max = (0..=1000)
        .map(|k| boundary_qfi(k as f64 / 2000.0, BoundaryCase::HalfSum))
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max);
    let mut oracle_ok = true;
    let mut max_excess = f64::NEG_INFINITY;
    for k in 1..=99 {
        let g = k as f64 * 0.005;
        let law = q_opt_ggm(g)?;
        for case in BoundaryCase::ALL {
            let q = if case == BoundaryCase::HalfSum {
                half_sum_max
            } else {
                boundary_qfi(g, case)?
            };
            min_gap = min_gap.min(law - q);
            boundary_ok &= q < law;
        }
        let p = ConstrainedProblem::new(
            Generator::pauli_z(2)?,
            Measure::Ggm,
            g,
            CONSTRAINT_TOL,
            SearchSpace::FullSimplex,
        )?;
        let r = grid_oracle(&p, cfg.grid_resolution)?;
        let q = r.q_max.unwrap_or(f64::NEG_INFINITY);
        max_excess = max_excess.max(q - law);
        oracle_ok &= r.q_max.is_some() && q - law <= grid_error_bound(g, cfg.grid_resolution)?;
    }
    Ok(CriterionOutcome {
        id: 5,
        name: "boundary families are dominated".into(),
        passed: boundary_ok && oracle_ok,
        detail: format!(
            "min (law - boundary) = {min_gap:.3e}; max (grid - law) = {max_excess:.3e} at resolution {}",
            cfg.grid_resolution
        ),
    })
}

pub fn criterion_6(cfg: &AcceptanceConfig) -> Result<CriterionOutcome> {
    let mut passed = true;
    let mut detail = String::new();
    for n in 3..=5 {
        let rows = run_sweep(Generator::pauli_z(n)?, Measure::Ggm, &[0.0, 0.5], &cfg.es)?;
        let (q0, q5) = (rows[0].1.q_best, rows[1].1.q_best);
        let (s, h) = (sql(n)?, hl(n)?);
        passed &= (q0 - s).abs() <= 1e-2 && (q5 - h).abs() <= 1e-2;
        let _ = write!(
            detail,
            "{}N={n}: q(0) = {q0:.6} vs {s}, q(0.5) = {q5:.6} vs {h}",
            if n > 3 { "; " } else { "" }
        );
    }
    Ok(CriterionOutcome {
        id: 6,
        name: "multipartite endpoints".into(),
        passed,
        detail,
    })
}

pub fn criterion_7(cfg: &AcceptanceConfig) -> Result<CriterionOutcome> {
    let rows = run_sweep(Generator::pauli_z(3)?, Measure::Ggm, &ggm_grid(), &cfg.es)?;
    let points = rows
        .iter()
        .map(|(g, r)| Ok((*g, cramer_rao_stddev(r.q_best)?)))
        .collect::<Result<Vec<(f64, f64)>>>()?;
    let decreasing = points.windows(2).all(|w| w[1].1 < w[0].1);
    let f = fit(&points, FitFamily::RationalInvSqrt)?;
    let rel = f.max_relative_residual(&points);
    Ok(CriterionOutcome {
        id: 7,
        name: "three-qubit curve shape".into(),
        passed: decreasing && rel < 0.02,
        detail: format!(
            "stddev strictly decreasing: {decreasing}; rational fit max relative residual = {:.3}% with (a, b, c, d) = ({:.3}, {:.3}, {:.3}, {:.4})",
            rel * 100.0,
            f.params[0],
            f.params[1],
            f.params[2],
            f.params[3]
        ),
    })
}

pub fn criterion_8(cfg: &AcceptanceConfig) -> Result<CriterionOutcome> {
    let small = run_sampler(&SamplerConfig::new(cfg.sampler_small, 3, 2, cfg.sampler_seed))?;
    let large = run_sampler(&SamplerConfig::new(cfg.sampler_large, 3, 2, cfg.sampler_seed + 1))?;
    let report = compare_runs(&small, &large, 0.05)?;
    let converged = report.converged_through(6);
    let worst_rel = report
        .bins
        .iter()
        .take(7)
        .map(|b| b.rel_diff.unwrap_or(f64::INFINITY))
        .fold(0.0, f64::max);
    let q: Vec<Option<f64>> = large.bins.iter().take(7).map(|b| b.q_max).collect();
    let monotone = q
        .windows(2)
        .all(|w| matches!((w[0], w[1]), (Some(a), Some(b)) if b >= a));
    let q0 = q[0].unwrap_or(f64::NAN);
    let near_sql = ((q0 - 12.0) / 12.0).abs() < 0.05;
    let fmt_q: Vec<String> = q.iter().map(|v| v.map_or("-".into(), |x| format!("{x:.2}"))).collect();
    Ok(CriterionOutcome {
        id: 8,
        name: "GM sampler convergence".into(),
        passed: converged && monotone && near_sql,
        detail: format!(
            "max rel diff k<=6 = {:.2}%; nondecreasing k<=6: {monotone}; bin-0 q_max = {q0:.3} vs 12; q_max(k<=6) = [{}]",
            worst_rel * 100.0,
            fmt_q.join(", ")
        ),
    })
}

/// Tabulated reference fits, compared at ±30%.
const QUADRATIC_D3: [f64; 3] = [0.028, -0.051, 0.274];
const RATIONAL_N3: [f64; 4] = [4.51, 36.48, 1.4, 0.07];

fn within_30(found: &[f64], reference: &[f64]) -> bool {
    found.iter().zip(reference).all(|(f, r)| ((f - r) / r).abs() <= 0.3)
}

pub fn criterion_9(cfg: &AcceptanceConfig) -> Result<CriterionOutcome> {
    let s_max = 3f64.log2();
    let mut grid = target_grid(1.05, 1.55, 0.05)?;
    grid.push(s_max);
    let rows = run_sweep(Generator::spin_rescaled(2, 3)?, Measure::Entropy, &grid, &cfg.es)?;
    let q: Vec<f64> = rows.iter().map(|r| r.1.q_best).collect();
    let monotone = q.windows(2).all(|w| w[1] <= w[0] + 1e-9);
    let q_end = q[q.len() - 1];
    let end_ok = (q_end - 32.0 / 3.0).abs() <= 1e-2;

    let mut beyond = vec![(1.0, cramer_rao_stddev(q_opt_entropy(1.0)?)?)];
    for (s, r) in &rows {
        beyond.push((*s, cramer_rao_stddev(r.q_best)?));
    }
    let quad = fit(&beyond, FitFamily::QuadraticDirect)?;
    let table1 = within_30(&quad.params, &QUADRATIC_D3);

    let n3 = run_sweep(Generator::pauli_z(3)?, Measure::Ggm, &ggm_grid(), &cfg.es)?;
    let pts = n3
        .iter()
        .map(|(g, r)| Ok((*g, cramer_rao_stddev(r.q_best)?)))
        .collect::<Result<Vec<(f64, f64)>>>()?;
    let rational = fit(&pts, FitFamily::RationalInvSqrt)?;
    let table2 = within_30(&rational.params, &RATIONAL_N3);

    Ok(CriterionOutcome {
        id: 9,
        name: "beyond the qubit range, d = 3".into(),
        // The tabulated fits are a regression report only; the two property checks decide.
        passed: monotone && end_ok,
        detail: format!(
            "nonincreasing: {monotone}; q(log2 3) = {q_end:.6} vs {:.6}; guard: quadratic fit {:?} within 30% of (0.028, -0.051, 0.274): {table1}, rational fit {:?} within 30% of (4.51, 36.48, 1.4, 0.07): {table2}",
            32.0 / 3.0,
            rounded(&quad.params),
            rounded(&rational.params)
        ),
    })
}

fn rounded(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| (x * 1e4).round() / 1e4).collect()
}

pub fn criterion_10(cfg: &AcceptanceConfig) -> Result<CriterionOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let gm_cfg = GmSearchConfig {
        seed: cfg.seed,
        ..GmSearchConfig::default()
    };
    let (mut closed_dev, mut gm_dev): (f64, f64) = (0.0, 0.0);
    for _ in 0..cfg.random_states {
        let raw: Vec<f64> = (0..4).map(|_| rng.random::<f64>()).collect();
        let state = ProbeState::from_unnormalized(2, 2, &raw)?;
        let g = ggm(&state)?.value;
        let w = state.weights();
        let closed = ggm_two_qubit_closed(&[w[0], w[1], w[2], w[3]])?;
        closed_dev = closed_dev.max((g - closed).abs());
        gm_dev = gm_dev.max((gm(&state, &gm_cfg)?.value - g).abs());
    }
    let mut entropy_dev: f64 = 0.0;
    for k in 0..=50 {
        let g = k as f64 * 0.01;
        let state = optimal_state_ggm(g, 2)?;
        let s = entropy_bipartite(&state)?.value;
        entropy_dev = entropy_dev.max((s - binary_entropy(ggm(&state)?.value)?).abs());
        entropy_dev = entropy_dev.max((s - binary_entropy(g)?).abs());
    }
    Ok(CriterionOutcome {
        id: 10,
        name: "measure cross-validation".into(),
        passed: closed_dev <= 1e-12 && gm_dev <= 1e-6 && entropy_dev <= 1e-9,
        detail: format!(
            "{} states: max |ggm - closed| = {closed_dev:.1e}, max |gm - ggm| = {gm_dev:.1e}; optimal family max |S - h(G)| = {entropy_dev:.1e}",
            cfg.random_states
        ),
    })
}

/// Criteria whose stated target is not the true optimum, with the reason.
pub const EXPECTED_FAILURES: [(u32, &str); 3] = [
    (
        4,
        "the true optimum for the (0,2,3) spectrum is 18(1+u), four times the stated curve",
    ),
    (
        6,
        "at G = 0 the optimum is 4((N-1)^2 + 1), reached by a GHZ state on N-1 qubits times |+>, not 4N",
    ),
    (
        8,
        "bin 0 holds near-product states with QFI well above 12 under uniform weight sampling, \
         and bins 5 and 6 receive too few states for their maxima to settle at 10^5 and 10^6 samples",
    ),
];

/// Reason a criterion is listed as an expected failure.
pub fn expected_failure(id: u32) -> Option<&'static str> {
    EXPECTED_FAILURES.iter().find(|e| e.0 == id).map(|e| e.1)
}

pub type Criterion = fn(&AcceptanceConfig) -> Result<CriterionOutcome>;

pub const CRITERIA: [Criterion; 10] = [
    criterion_1,
    criterion_2,
    criterion_3,
    criterion_4,
    criterion_5,
    criterion_6,
    criterion_7,
    criterion_8,
    criterion_9,
    criterion_10,
];

/// Runs the selected criteria (all when `ids` is empty) in order.
pub fn run_criteria(ids: &[u32], cfg: &AcceptanceConfig) -> Vec<(u32, Result<CriterionOutcome>)> {
    (1..=CRITERIA.len() as u32)
        .filter(|id| ids.is_empty() || ids.contains(id))
        .map(|id| (id, CRITERIA[id as usize - 1](cfg)))
        .collect()
}
