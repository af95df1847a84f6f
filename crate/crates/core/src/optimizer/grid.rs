//! Brute-force verifier for problems with four free weights.
//!
//! The simplex is sliced so that every reported point satisfies the
//! constraint to root-finding precision instead of a tolerance band. The
//! grid runs over the differences `δ03 = ω0 − ω3` and `δ12 = ω1 − ω2` in
//! steps of `1/resolution`; along the remaining direction, the outer mass
//! `t = ω0 + ω3`, the roots of `measure(t) − target` are located by a scan
//! followed by bisection or, for touching roots, a golden-section search.
//! The symmetric point `δ03 = δ12 = 0` is always on the grid.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::problem::{ConstrainedProblem, Objective};
use crate::error::{QmetrixError, Result};
use crate::measures::{shannon_bits, Measure};

/// A touching root is accepted when the minimized `|measure − target|` is below this.
const TOUCH_TOL: f64 = 1e-10;
const BISECT_ITERS: usize = 80;
const GOLDEN_ITERS: usize = 80;
const SCAN_POINTS: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridOracleResult {
    /// Largest QFI over constraint-satisfying points, `None` if none was found.
    pub q_max: Option<f64>,
    /// Largest `|measure − target|` among the accepted points.
    pub max_residual: f64,
    pub feasible_points: usize,
    pub resolution: usize,
    /// Corner weights `(ω0, ω1, ω2, ω3)` of the maximizer.
    pub argmax: Option<[f64; 4]>,
}

struct Corner {
    measure: Measure,
    energies: [f64; 4],
}

impl Corner {
    fn top_schmidt(w: &[f64; 4]) -> f64 {
        let a = w.map(|x| x.max(0.0).sqrt());
        let g00 = a[0] * a[0] + a[1] * a[1];
        let g11 = a[2] * a[2] + a[3] * a[3];
        let g01 = a[0] * a[2] + a[1] * a[3];
        0.5 * (g00 + g11) + (0.25 * (g00 - g11) * (g00 - g11) + g01 * g01).sqrt()
    }

    fn measure(&self, w: &[f64; 4]) -> f64 {
        let top = Self::top_schmidt(w).min(1.0);
        match self.measure {
            Measure::Entropy => shannon_bits(&[top, 1.0 - top]),
            _ => (1.0 - top).max(0.0),
        }
    }

    fn qfi(&self, w: &[f64; 4]) -> f64 {
        let mean: f64 = w.iter().zip(&self.energies).map(|(x, e)| x * e).sum();
        4.0 * w
            .iter()
            .zip(&self.energies)
            .map(|(x, e)| x * (e - mean) * (e - mean))
            .sum::<f64>()
    }
}

fn weights(d03: f64, d12: f64, t: f64) -> [f64; 4] {
    [
        0.5 * (t + d03),
        0.5 * (1.0 - t + d12),
        0.5 * (1.0 - t - d12),
        0.5 * (t - d03),
    ]
}

/// Exhaustive scan of the constrained slice at step `1/resolution`.
///
/// Requires two parties and four searched coordinates: two qubits, or the
/// corner simplex of two qudits.
pub fn grid_oracle(problem: &ConstrainedProblem, resolution: usize) -> Result<GridOracleResult> {
    problem.validate()?;
    let obj = Objective::new(problem);
    if obj.parties != 2 || obj.dim() != 4 {
        return Err(QmetrixError::Unsupported(format!(
            "grid oracle needs exactly 4 free weights, problem has {}",
            obj.dim()
        )));
    }
    if resolution < 2 {
        return Err(QmetrixError::InvalidConfig("resolution must be at least 2".into()));
    }
    let corner = Corner {
        measure: problem.measure,
        energies: [obj.energies[0], obj.energies[1], obj.energies[2], obj.energies[3]],
    };
    let target = problem.target;
    let scan = SCAN_POINTS;
    let accept = |w: [f64; 4], out: &mut GridOracleResult| {
        let res = (corner.measure(&w) - target).abs();
        if res > TOUCH_TOL {
            return;
        }
        let q = corner.qfi(&w);
        out.feasible_points += 1;
        out.max_residual = out.max_residual.max(res);
        if out.q_max.is_none_or(|m| q > m) {
            out.q_max = Some(q);
            out.argmax = Some(w);
        }
    };
    let h = 1.0 / resolution as f64;
    let r = resolution as i64;
    let grid: Vec<f64> = (0..=scan).map(|k| k as f64 / scan as f64).collect();
    let rows: Vec<GridOracleResult> = (-r..=r)
        .into_par_iter()
        .map(|i| {
            let mut out = GridOracleResult {
                q_max: None,
                max_residual: 0.0,
                feasible_points: 0,
                resolution,
                argmax: None,
            };
            for j in -(r - i.abs())..=(r - i.abs()) {
                let (d03, d12) = (i as f64 * h, j as f64 * h);
                scan_line(&corner, target, d03, d12, &grid, &mut |w| accept(w, &mut out));
            }
            out
        })
        .collect();
    // Row order keeps the argmax independent of scheduling.
    let mut out = GridOracleResult {
        q_max: None,
        max_residual: 0.0,
        feasible_points: 0,
        resolution,
        argmax: None,
    };
    for row in rows {
        out.feasible_points += row.feasible_points;
        out.max_residual = out.max_residual.max(row.max_residual);
        if let Some(q) = row.q_max {
            if out.q_max.is_none_or(|m| q > m) {
                out.q_max = Some(q);
                out.argmax = row.argmax;
            }
        }
    }
    Ok(out)
}

/// Accepts every root of `measure − target` along the outer-mass direction.
fn scan_line(corner: &Corner, target: f64, d03: f64, d12: f64, grid: &[f64], accept: &mut impl FnMut([f64; 4])) {
    let scan = grid.len() - 1;
    let (t_lo, t_hi) = (d03.abs(), 1.0 - d12.abs());
    if t_hi - t_lo <= 0.0 {
        accept(weights(d03, d12, t_lo));
        return;
    }
    let f = |t: f64| corner.measure(&weights(d03, d12, t)) - target;
    let ts: Vec<f64> = grid.iter().map(|&u| t_lo + u * (t_hi - t_lo)).collect();
    let fs: Vec<f64> = ts.iter().map(|&t| f(t)).collect();
    for k in 0..scan {
        let (a, b) = (fs[k], fs[k + 1]);
        if a == 0.0 {
            accept(weights(d03, d12, ts[k]));
        } else if a.signum() != b.signum() && b != 0.0 {
            let root = bisect(&f, ts[k], ts[k + 1], a);
            accept(weights(d03, d12, root));
        }
    }
    if fs[scan] == 0.0 {
        accept(weights(d03, d12, t_hi));
    }
    for k in 1..scan {
        let (l, m, r) = (fs[k - 1].abs(), fs[k].abs(), fs[k + 1].abs());
        let same_sign = fs[k - 1].signum() == fs[k].signum() && fs[k].signum() == fs[k + 1].signum();
        if m > 0.0 && m <= l && m <= r && same_sign {
            let t = golden_min(&|t| f(t).abs(), ts[k - 1], ts[k + 1]);
            accept(weights(d03, d12, t));
        }
    }
    for (k, nb) in [(0usize, 1usize), (scan, scan - 1)] {
        if fs[k] != 0.0 && fs[k].abs() < fs[nb].abs() {
            let (lo, hi) = if k == 0 {
                (ts[0], ts[1])
            } else {
                (ts[scan - 1], ts[scan])
            };
            let t = golden_min(&|t| f(t).abs(), lo, hi);
            accept(weights(d03, d12, t));
        }
    }
}

fn bisect(f: &impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, flo: f64) -> f64 {
    let sign_lo = flo.signum();
    for _ in 0..BISECT_ITERS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if fm.signum() == sign_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn golden_min(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..GOLDEN_ITERS {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = f(d);
        }
    }
    let candidates = [(a, f(a)), (b, f(b)), (c, fc), (d, fd)];
    candidates
        .iter()
        .min_by(|x, y| x.1.total_cmp(&y.1))
        .map(|x| x.0)
        .unwrap_or(0.5 * (a + b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizer::SearchSpace;
    use crate::states::Generator;

    fn problem(measure: Measure, target: f64) -> ConstrainedProblem {
        ConstrainedProblem::new(
            Generator::pauli_z(2).unwrap(),
            measure,
            target,
            1e-6,
            SearchSpace::FullSimplex,
        )
        .unwrap()
    }

    #[test]
    fn examples() {
        let r = grid_oracle(&problem(Measure::Ggm, 0.25), 400).unwrap();
        assert!((r.q_max.unwrap() - 14.928).abs() < 0.01, "{:?}", r);
        let r = grid_oracle(&problem(Measure::Ggm, 0.0), 400).unwrap();
        assert!((r.q_max.unwrap() - 8.0).abs() < 0.01, "{:?}", r);
        let r = grid_oracle(&problem(Measure::Entropy, 1.0), 400).unwrap();
        assert!((r.q_max.unwrap() - 16.0).abs() < 0.01, "{:?}", r);
    }

    #[test]
    fn corner_simplex_for_qutrits() {
        let p = ConstrainedProblem::new(
            Generator::spin_rescaled(2, 3).unwrap(),
            Measure::Ggm,
            0.25,
            1e-6,
            SearchSpace::CornerSimplex,
        )
        .unwrap();
        let r = grid_oracle(&p, 200).unwrap();
        assert!((r.q_max.unwrap() - 14.928).abs() < 0.02);
    }

    #[test]
    fn rejects_large_problems() {
        let p = ConstrainedProblem::new(
            Generator::spin_rescaled(2, 3).unwrap(),
            Measure::Ggm,
            0.25,
            1e-6,
            SearchSpace::FullSimplex,
        )
        .unwrap();
        assert!(matches!(grid_oracle(&p, 100), Err(QmetrixError::Unsupported(_))));
    }
}
