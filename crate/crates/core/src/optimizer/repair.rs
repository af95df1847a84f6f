//! Projection of a candidate onto the constraint surface.
//!
//! A candidate `a` whose measure misses the target is moved along the
//! normalized segment towards a reference state `b` that lies on the other
//! side of the target: the dominant Schmidt term of `a` (measure 0) when `a`
//! is too entangled, or a cat state on the diagonal (high measure) when it
//! is not entangled enough. The crossing point is located by a safeguarded
//! Illinois iteration.

use super::problem::Objective;
use crate::measures::top_eigenpair;
use crate::states::local_digits;

/// Accepted distance between the repaired measure and the target.
pub(crate) const REPAIR_TOL: f64 = 1e-15;
const MAX_ITER: usize = 100;

pub(crate) struct Repaired {
    pub amps: Vec<f64>,
    pub measure: f64,
}

fn normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

/// Rank-one truncation of `amps` across its dominant cut.
fn schmidt_reference(obj: &Objective, amps: &[f64]) -> Vec<f64> {
    let cut = &obj.cuts()[obj.dominant_cut(amps)];
    let full = obj.embed(amps);
    let m = cut.matrix(&full);
    let (r, c) = (cut.rows, cut.cols);
    let mut g = vec![0.0; r * r];
    for i in 0..r {
        for j in i..r {
            let s: f64 = (0..c).map(|k| m[i * c + k] * m[j * c + k]).sum();
            g[i * r + j] = s;
            g[j * r + i] = s;
        }
    }
    let (_, mut u) = top_eigenpair(&g, r);
    u.iter_mut().for_each(|x| *x = x.max(0.0));
    let mut v: Vec<f64> = (0..c).map(|k| (0..r).map(|i| u[i] * m[i * c + k]).sum()).collect();
    normalize(&mut u);
    normalize(&mut v);
    let mut b: Vec<f64> = obj
        .coords
        .iter()
        .map(|&p| u[cut.row_of[p]] * v[cut.col_of[p]])
        .collect();
    normalize(&mut b);
    b
}

fn diagonal_superposition(obj: &Objective, keep: impl Fn(usize) -> bool) -> Vec<f64> {
    let mut b: Vec<f64> = obj
        .coords
        .iter()
        .map(|&p| {
            let digits = local_digits(p, obj.parties, obj.local_dim);
            if digits.iter().all(|&i| i == digits[0]) && keep(digits[0]) {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    normalize(&mut b);
    b
}

/// Highly entangled reference on the upper side of the target.
///
/// The two-level cat state on the extreme generator levels is preferred
/// because it carries the largest QFI; when it is not entangled enough, or
/// is not in the search space, the uniform superposition of all `|i…i⟩`
/// states is used.
fn ghz_reference(obj: &Objective) -> (Vec<f64>, f64) {
    let (lo, hi) = obj.extreme_levels;
    if lo != hi {
        let cat = diagonal_superposition(obj, |i| i == lo || i == hi);
        if cat.iter().filter(|&&x| x > 0.0).count() == 2 {
            let m = obj.measure_of(&cat);
            if m >= obj.target {
                return (cat, m);
            }
        }
    }
    let b = diagonal_superposition(obj, |_| true);
    let m = obj.measure_of(&b);
    (b, m)
}

fn blend(a: &[f64], b: &[f64], t: f64) -> Vec<f64> {
    let mut c: Vec<f64> = a.iter().zip(b).map(|(x, y)| (1.0 - t) * x + t * y).collect();
    normalize(&mut c);
    c
}

/// Moves the unit-norm amplitude vector `a` onto the target level set, if a
/// crossing exists on the segment to the reference state.
pub(crate) fn repair(obj: &Objective, a: &[f64]) -> Option<Repaired> {
    if obj.target == 0.0 {
        // Zero-measure states are exactly product across a cut; snapping to the
        // rank-one truncation avoids the square-root sensitivity of QFI near it.
        let b = schmidt_reference(obj, a);
        let mb = obj.measure_of(&b);
        return Some(Repaired { amps: b, measure: mb });
    }
    let ma = obj.measure_of(a);
    let fa = ma - obj.target;
    if fa.abs() <= REPAIR_TOL {
        return Some(Repaired {
            amps: a.to_vec(),
            measure: ma,
        });
    }
    let (b, mb) = if fa > 0.0 {
        let b = schmidt_reference(obj, a);
        let m = obj.measure_of(&b);
        (b, m)
    } else {
        ghz_reference(obj)
    };
    let fb = mb - obj.target;
    if fb.abs() <= REPAIR_TOL {
        return Some(Repaired { amps: b, measure: mb });
    }
    if fa.signum() == fb.signum() {
        return None;
    }
    let (mut t0, mut f0) = (0.0f64, fa);
    let (mut t1, mut f1) = (1.0f64, fb);
    let mut best = (f64::INFINITY, a.to_vec(), ma);
    let mut side = 0i8;
    for _ in 0..MAX_ITER {
        let mut t = t1 - f1 * (t1 - t0) / (f1 - f0);
        if !(t > t0.min(t1) && t < t0.max(t1)) {
            t = 0.5 * (t0 + t1);
        }
        let c = blend(a, &b, t);
        let mc = obj.measure_of(&c);
        let fc = mc - obj.target;
        if fc.abs() < best.0 {
            best = (fc.abs(), c, mc);
        }
        if fc.abs() <= REPAIR_TOL || (t1 - t0).abs() < 1e-16 {
            break;
        }
        if fc.signum() == f1.signum() {
            t1 = t;
            f1 = fc;
            if side == 1 {
                f0 *= 0.5;
            }
            side = 1;
        } else {
            t0 = t;
            f0 = fc;
            if side == -1 {
                f1 *= 0.5;
            }
            side = -1;
        }
    }
    if best.0 <= 1e3 * REPAIR_TOL {
        Some(Repaired {
            amps: best.1,
            measure: best.2,
        })
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::Measure;
    use crate::optimizer::{ConstrainedProblem, SearchSpace};
    use crate::states::Generator;
    use proptest::prelude::*;

    fn objective(n: usize, d: usize, measure: Measure, target: f64, space: SearchSpace) -> Objective {
        let g = if d == 2 {
            Generator::pauli_z(n).unwrap()
        } else {
            Generator::spin_rescaled(n, d).unwrap()
        };
        Objective::new(&ConstrainedProblem::new(g, measure, target, 1e-6, space).unwrap())
    }

    #[test]
    fn zero_target_lands_on_product_across_a_cut() {
        let obj = objective(3, 2, Measure::Ggm, 0.0, SearchSpace::FullSimplex);
        let mut a = vec![0.3, 0.1, 0.2, 0.5, 0.4, 0.6, 0.2, 0.7];
        normalize(&mut a);
        let r = repair(&obj, &a).unwrap();
        assert_eq!(r.measure, obj.measure_of(&r.amps));
        assert!(r.measure.abs() <= 1e-14);
    }

    #[test]
    fn max_target_lands_on_ghz() {
        let obj = objective(2, 3, Measure::Entropy, 3f64.log2(), SearchSpace::FullSimplex);
        let mut a: Vec<f64> = (1..=9).map(|i| i as f64).collect();
        normalize(&mut a);
        let r = repair(&obj, &a).unwrap();
        assert!((r.measure - 3f64.log2()).abs() < 1e-12);
        let w: Vec<f64> = r.amps.iter().map(|x| x * x).collect();
        assert!((w[0] - 1.0 / 3.0).abs() < 1e-12 && (w[4] - 1.0 / 3.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn repaired_states_meet_the_target(
            raw in proptest::collection::vec(0.01f64..1.0, 9),
            target in 0.0f64..0.66,
        ) {
            let obj = objective(2, 3, Measure::Ggm, target, SearchSpace::FullSimplex);
            let mut a = raw.clone();
            normalize(&mut a);
            let r = repair(&obj, &a).unwrap();
            prop_assert!((obj.measure_of(&r.amps) - target).abs() <= 1e-10);
            prop_assert!(r.amps.iter().all(|&x| x >= 0.0));
        }

        #[test]
        fn repaired_entropy_meets_target(
            raw in proptest::collection::vec(0.01f64..1.0, 4),
            target in 0.0f64..=1.0,
        ) {
            let obj = objective(2, 2, Measure::Entropy, target, SearchSpace::FullSimplex);
            let mut a = raw.clone();
            normalize(&mut a);
            let r = repair(&obj, &a).unwrap();
            prop_assert!((obj.measure_of(&r.amps) - target).abs() <= 1e-10);
        }
    }
}
