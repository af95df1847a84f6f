//! Least-squares fits of precision curves.
//!
//! Both families are fitted in the transformed ordinate `y = stddev⁻²`, where
//! the quadratic family is linear in its parameters and the rational family
//! is linear once the pole position `d` is fixed. The rational fit scans `d`,
//! refines it by golden-section search on the projected residual, and polishes
//! all four parameters with Levenberg–Marquardt.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{QmetrixError, Result};

/// Relative singular-value cutoff for the linear subproblems.
const RANK_TOL: f64 = 1e-12;
const SCAN_DECADES: (i32, i32) = (-6, 3);
const SCAN_PER_DECADE: usize = 40;
const GOLDEN_ITERS: usize = 200;
const LM_MAX_ITERS: usize = 200;
const LM_STEP_TOL: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitFamily {
    /// `stddev = (a x² + b x + c)^(-1/2)`.
    QuadraticInvSqrt,
    /// `stddev = a x² + b x + c`, the alternative reading of the tabulated quadratic fits.
    QuadraticDirect,
    /// `stddev = ((a x² + b x + c) / (x + d))^(-1/2)`.
    RationalInvSqrt,
}

impl FitFamily {
    pub fn min_points(self) -> usize {
        match self {
            FitFamily::QuadraticInvSqrt | FitFamily::QuadraticDirect => 3,
            FitFamily::RationalInvSqrt => 4,
        }
    }
}

impl fmt::Display for FitFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FitFamily::QuadraticInvSqrt => "quadratic-inv-sqrt",
            FitFamily::QuadraticDirect => "quadratic-direct",
            FitFamily::RationalInvSqrt => "rational-inv-sqrt",
        })
    }
}

impl FromStr for FitFamily {
    type Err = QmetrixError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "quadratic-inv-sqrt" | "quadratic" => Ok(FitFamily::QuadraticInvSqrt),
            "quadratic-direct" => Ok(FitFamily::QuadraticDirect),
            "rational-inv-sqrt" | "rational" => Ok(FitFamily::RationalInvSqrt),
            other => Err(QmetrixError::Parse(format!("unknown fit family `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub family: FitFamily,
    /// `(a, b, c)` or `(a, b, c, d)`.
    pub params: Vec<f64>,
    /// Euclidean residual in the space the fit minimizes.
    pub residual_norm: f64,
    /// Euclidean residual of the stddev values.
    pub residual_original: f64,
    pub points_used: usize,
    pub converged: bool,
}

impl FitResult {
    /// Model stddev at `x`; NaN where the model has no real value.
    pub fn predict(&self, x: f64) -> f64 {
        let p = &self.params;
        let poly = p[0] * x * x + p[1] * x + p[2];
        match self.family {
            FitFamily::QuadraticDirect => poly,
            FitFamily::QuadraticInvSqrt => inv_sqrt(poly),
            FitFamily::RationalInvSqrt => inv_sqrt(poly / (x + p[3])),
        }
    }

    /// Largest `|model − stddev| / stddev` over `points`.
    pub fn max_relative_residual(&self, points: &[(f64, f64)]) -> f64 {
        points
            .iter()
            .map(|&(x, s)| ((self.predict(x) - s) / s).abs())
            .fold(0.0, |m, r| if r.is_nan() { f64::INFINITY } else { m.max(r) })
    }
}

fn inv_sqrt(y: f64) -> f64 {
    if y > 0.0 {
        1.0 / y.sqrt()
    } else {
        f64::NAN
    }
}

/// Sorts by abscissa and checks the input.
fn prepare(points: &[(f64, f64)], family: FitFamily) -> Result<Vec<(f64, f64)>> {
    if points.iter().any(|&(x, s)| !x.is_finite() || !s.is_finite()) {
        return Err(QmetrixError::NonFinite("fit points"));
    }
    if points.iter().any(|&(_, s)| s <= 0.0) {
        return Err(QmetrixError::DegenerateFit("stddev values must be positive".into()));
    }
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    if pts.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(QmetrixError::DegenerateFit("abscissae must be distinct".into()));
    }
    if pts.len() < family.min_points() {
        return Err(QmetrixError::DegenerateFit(format!(
            "{family} needs at least {} points, got {}",
            family.min_points(),
            pts.len()
        )));
    }
    Ok(pts)
}

/// Least squares via SVD; `None` when the design is rank deficient.
fn linear_lsq(design: &DMatrix<f64>, y: &DVector<f64>) -> Option<(DVector<f64>, f64)> {
    let svd = design.clone().svd(true, true);
    let smax = svd.singular_values.max();
    if smax.is_nan() || smax <= 0.0 || svd.singular_values.min() <= RANK_TOL * smax {
        return None;
    }
    let coef = svd.solve(y, 0.0).ok()?;
    let res = (design * &coef - y).norm();
    Some((coef, res))
}

fn original_residual(fit: &FitResult, pts: &[(f64, f64)]) -> f64 {
    pts.iter()
        .map(|&(x, s)| {
            let r = fit.predict(x) - s;
            r * r
        })
        .sum::<f64>()
        .sqrt()
}

/// Quadratic fit in either reading.
pub fn fit_quadratic_family(points: &[(f64, f64)], family: FitFamily) -> Result<FitResult> {
    if family == FitFamily::RationalInvSqrt {
        return fit_rational(points);
    }
    let pts = prepare(points, family)?;
    let design = DMatrix::from_fn(pts.len(), 3, |i, j| pts[i].0.powi(2 - j as i32));
    let y = DVector::from_iterator(
        pts.len(),
        pts.iter().map(|&(_, s)| match family {
            FitFamily::QuadraticDirect => s,
            _ => s.powi(-2),
        }),
    );
    let (coef, res) =
        linear_lsq(&design, &y).ok_or_else(|| QmetrixError::DegenerateFit("rank-deficient design matrix".into()))?;
    let mut fit = FitResult {
        family,
        params: coef.iter().copied().collect(),
        residual_norm: res,
        residual_original: 0.0,
        points_used: pts.len(),
        converged: true,
    };
    fit.residual_original = original_residual(&fit, &pts);
    Ok(fit)
}

/// `stddev⁻² = a x² + b x + c`.
pub fn fit_quadratic(points: &[(f64, f64)]) -> Result<FitResult> {
    fit_quadratic_family(points, FitFamily::QuadraticInvSqrt)
}

struct Rational<'a> {
    x: &'a [f64],
    y: DVector<f64>,
}

impl Rational<'_> {
    /// Best `(a, b, c)` and residual for a fixed pole offset.
    fn project(&self, d: f64) -> Option<(DVector<f64>, f64)> {
        let design = DMatrix::from_fn(self.x.len(), 3, |i, j| self.x[i].powi(2 - j as i32) / (self.x[i] + d));
        linear_lsq(&design, &self.y)
    }

    fn residuals(&self, p: &[f64; 4]) -> DVector<f64> {
        DVector::from_iterator(
            self.x.len(),
            self.x
                .iter()
                .zip(self.y.iter())
                .map(|(&x, &y)| (p[0] * x * x + p[1] * x + p[2]) / (x + p[3]) - y),
        )
    }

    fn jacobian(&self, p: &[f64; 4]) -> DMatrix<f64> {
        DMatrix::from_fn(self.x.len(), 4, |i, j| {
            let x = self.x[i];
            let den = x + p[3];
            match j {
                0 => x * x / den,
                1 => x / den,
                2 => 1.0 / den,
                _ => -(p[0] * x * x + p[1] * x + p[2]) / (den * den),
            }
        })
    }
}

/// `stddev⁻² = (a x² + b x + c) / (x + d)` with `x + d > 0` on the data.
pub fn fit_rational(points: &[(f64, f64)]) -> Result<FitResult> {
    let family = FitFamily::RationalInvSqrt;
    let pts = prepare(points, family)?;
    let x: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let model = Rational {
        x: &x,
        y: DVector::from_iterator(pts.len(), pts.iter().map(|p| p.1.powi(-2))),
    };
    let (y_lo, y_hi) = model
        .y
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    if y_hi - y_lo <= 1e-12 * y_hi.abs() {
        // Any pole offset fits constant data with a = 0, b = y, c = y·d.
        return Err(QmetrixError::DegenerateFit(
            "constant ordinate leaves the pole offset undetermined".into(),
        ));
    }
    let x_min = x[0];
    let scale = (x[x.len() - 1] - x_min).max(1.0);
    // The pole offset is parametrized as d = −x_min + scale·10^u.
    let pole = |u: f64| -x_min + scale * 10f64.powf(u);
    let objective = |u: f64| model.project(pole(u)).map_or(f64::INFINITY, |r| r.1);

    let steps = (SCAN_DECADES.1 - SCAN_DECADES.0) as usize * SCAN_PER_DECADE;
    let us: Vec<f64> = (0..=steps)
        .map(|k| SCAN_DECADES.0 as f64 + k as f64 / SCAN_PER_DECADE as f64)
        .collect();
    let rs: Vec<f64> = us.iter().map(|&u| objective(u)).collect();
    let (best_k, best_r) = rs
        .iter()
        .copied()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("scan is non-empty");
    if !best_r.is_finite() {
        return Err(QmetrixError::DegenerateFit(
            "no pole offset gives a solvable problem".into(),
        ));
    }
    let worst = rs.iter().copied().filter(|r| r.is_finite()).fold(0.0, f64::max);
    if worst - best_r <= 1e-12 * (1.0 + model.y.norm()) {
        return Err(QmetrixError::DegenerateFit(
            "residual does not depend on the pole offset".into(),
        ));
    }

    let lo = us[best_k.saturating_sub(1)];
    let hi = us[(best_k + 1).min(steps)];
    let u = golden_min(&objective, lo, hi);
    let u = if objective(u) <= best_r { u } else { us[best_k] };
    let d0 = pole(u);
    let (coef, _) = model.project(d0).expect("refined offset is solvable");
    let start = [coef[0], coef[1], coef[2], d0];

    let (params, converged) = levenberg_marquardt(&model, start, x_min);
    let residual_norm = model.residuals(&params).norm();
    let mut fit = FitResult {
        family,
        params: params.to_vec(),
        residual_norm,
        residual_original: 0.0,
        points_used: pts.len(),
        converged,
    };
    fit.residual_original = original_residual(&fit, &pts);
    Ok(fit)
}

fn levenberg_marquardt(model: &Rational, start: [f64; 4], x_min: f64) -> ([f64; 4], bool) {
    let mut p = start;
    let mut cost = model.residuals(&p).norm_squared();
    let mut lambda = 1e-3;
    for _ in 0..LM_MAX_ITERS {
        let j = model.jacobian(&p);
        let r = model.residuals(&p);
        let jtj = j.transpose() * &j;
        let g = j.transpose() * &r;
        if g.amax() <= 1e-300 {
            return (p, true);
        }
        let mut accepted = false;
        for _ in 0..30 {
            let mut a = jtj.clone();
            for k in 0..4 {
                a[(k, k)] += lambda * jtj[(k, k)].max(1e-300);
            }
            let Some(step) = a.cholesky().map(|c| c.solve(&(-&g))) else {
                lambda *= 10.0;
                continue;
            };
            let trial = [p[0] + step[0], p[1] + step[1], p[2] + step[2], p[3] + step[3]];
            if trial[3] + x_min <= 0.0 || trial.iter().any(|v| !v.is_finite()) {
                lambda *= 10.0;
                continue;
            }
            let tc = model.residuals(&trial).norm_squared();
            if tc <= cost {
                let small = step
                    .iter()
                    .zip(&p)
                    .all(|(s, v)| s.abs() <= LM_STEP_TOL * (1.0 + v.abs()));
                p = trial;
                cost = tc;
                lambda = (lambda * 0.1).max(1e-12);
                accepted = true;
                if small {
                    return (p, true);
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            // No descent direction left at machine precision.
            return (p, true);
        }
    }
    (p, false)
}

fn golden_min(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..GOLDEN_ITERS {
        if (b - a).abs() <= 1e-15 * (1.0 + a.abs()) {
            break;
        }
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
    if fc < fd {
        c
    } else {
        d
    }
}

/// Dispatches on the family.
pub fn fit(points: &[(f64, f64)], family: FitFamily) -> Result<FitResult> {
    match family {
        FitFamily::RationalInvSqrt => fit_rational(points),
        _ => fit_quadratic_family(points, family),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn quad_points(a: f64, b: f64, c: f64, xs: &[f64]) -> Vec<(f64, f64)> {
        xs.iter().map(|&x| (x, (a * x * x + b * x + c).powf(-0.5))).collect()
    }

    fn rational_points(p: [f64; 4], xs: &[f64]) -> Vec<(f64, f64)> {
        xs.iter()
            .map(|&x| (x, ((p[0] * x * x + p[1] * x + p[2]) / (x + p[3])).powf(-0.5)))
            .collect()
    }

    fn grid() -> Vec<f64> {
        (0..=10).map(|i| i as f64 * 0.05).collect()
    }

    #[test]
    fn quadratic_recovers_exact_parameters() {
        let pts = quad_points(1.0, 2.0, 3.0, &[0.0, 0.3, 0.7, 1.0, 1.4]);
        let f = fit_quadratic(&pts).unwrap();
        for (p, e) in f.params.iter().zip([1.0, 2.0, 3.0]) {
            assert!((p - e).abs() < 1e-10, "{:?}", f.params);
        }
        assert!(f.residual_norm < 1e-10);
        assert_eq!(f.points_used, 5);
    }

    #[test]
    fn quadratic_needs_three_points() {
        let pts = quad_points(1.0, 2.0, 3.0, &[0.0, 1.0]);
        assert!(matches!(fit_quadratic(&pts), Err(QmetrixError::DegenerateFit(_))));
    }

    #[test]
    fn repeated_abscissae_are_rejected() {
        let pts = vec![(0.0, 1.0), (0.0, 1.1), (0.5, 0.5), (1.0, 0.4)];
        assert!(fit_quadratic(&pts).is_err());
    }

    #[test]
    fn direct_reading_fits_stddev_itself() {
        let pts: Vec<(f64, f64)> = [1.0, 1.2, 1.4, 1.5849]
            .iter()
            .map(|&s| (s, 0.028 * s * s - 0.051 * s + 0.274))
            .collect();
        let f = fit(&pts, FitFamily::QuadraticDirect).unwrap();
        assert!((f.params[0] - 0.028).abs() < 1e-10);
        assert!((f.residual_norm - f.residual_original).abs() < 1e-15);
    }

    #[test]
    fn rational_recovers_synthetic_parameters() {
        let truth = [4.51, 36.48, 1.4, 0.07];
        let f = fit_rational(&rational_points(truth, &grid())).unwrap();
        for (p, e) in f.params.iter().zip(truth) {
            assert!((p - e).abs() < 1e-6, "{:?}", f.params);
        }
        assert!(f.residual_norm <= 1e-8);
        assert!(f.converged);
    }

    #[test]
    fn rational_rejects_constant_data() {
        let pts: Vec<(f64, f64)> = grid().into_iter().map(|x| (x, 0.3)).collect();
        assert!(matches!(fit_rational(&pts), Err(QmetrixError::DegenerateFit(_))));
    }

    #[test]
    fn rational_needs_four_points() {
        let pts = rational_points([4.51, 36.48, 1.4, 0.07], &[0.0, 0.1, 0.2]);
        assert!(fit_rational(&pts).is_err());
    }

    #[test]
    fn fit_minimizes_transformed_residual() {
        let mut pts = quad_points(1.0, 2.0, 3.0, &[0.0, 0.25, 0.5, 0.75, 1.0]);
        pts[2].1 *= 1.01;
        let f = fit_quadratic(&pts).unwrap();
        let y = |x: f64, p: &[f64]| p[0] * x * x + p[1] * x + p[2];
        let res = |p: &[f64]| {
            pts.iter()
                .map(|&(x, s)| (y(x, p) - s.powi(-2)).powi(2))
                .sum::<f64>()
                .sqrt()
        };
        assert!((res(&f.params) - f.residual_norm).abs() < 1e-12);
        for k in 0..3 {
            for h in [-1e-4, 1e-4] {
                let mut q = f.params.clone();
                q[k] += h;
                assert!(res(&q) > f.residual_norm);
            }
        }
    }

    proptest! {
        #[test]
        fn quadratic_is_exact_on_its_family(a in 0.0f64..5.0, b in 0.0f64..5.0, c in 0.5f64..5.0) {
            let f = fit_quadratic(&quad_points(a, b, c, &grid())).unwrap();
            prop_assert!(f.residual_norm <= 1e-8);
        }

        #[test]
        fn rational_is_exact_on_its_family(
            a in 0.5f64..8.0,
            b in 5.0f64..40.0,
            c in 0.5f64..3.0,
            d in 0.02f64..0.5,
        ) {
            let f = fit_rational(&rational_points([a, b, c, d], &grid())).unwrap();
            prop_assert!(f.residual_norm <= 1e-8, "{:?}", f);
        }

        #[test]
        fn fits_ignore_point_order(seed in 0u64..1000) {
            let pts = rational_points([4.51, 36.48, 1.4, 0.07], &grid());
            let noisy: Vec<(f64, f64)> = pts
                .iter()
                .enumerate()
                .map(|(i, &(x, s))| (x, s * (1.0 + 0.01 * (((i as u64 * 7919 + seed) % 13) as f64 - 6.0) / 6.0)))
                .collect();
            let mut shuffled = noisy.clone();
            let k = (seed as usize) % shuffled.len();
            shuffled.rotate_left(k);
            shuffled.reverse();
            prop_assert_eq!(fit_rational(&noisy).unwrap(), fit_rational(&shuffled).unwrap());
            prop_assert_eq!(fit_quadratic(&noisy).unwrap(), fit_quadratic(&shuffled).unwrap());
        }
    }
}
