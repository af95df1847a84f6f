//! Entanglement measures of phaseless pure states.
//!
//! For a state with nonnegative amplitudes `a_p = √ω_p`, every reduced
//! density matrix across a cut is the real Gram matrix `M Mᵀ` of the
//! amplitude matrix reshaped along that cut, so all spectra here come from
//! small real symmetric eigenproblems.

use nalgebra::{DMatrix, Matrix3, Matrix4, Matrix5, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{out_of_range, QmetrixError, Result};
use crate::states::{local_digits, ProbeState};

/// Ties between bipartitions are resolved within this gap.
const CUT_TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Measure {
    Ggm,
    Entropy,
    Gm,
}

impl std::str::FromStr for Measure {
    type Err = QmetrixError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ggm" | "g" => Ok(Measure::Ggm),
            "entropy" | "s" => Ok(Measure::Entropy),
            "gm" => Ok(Measure::Gm),
            other => Err(QmetrixError::Parse(format!("unknown measure '{other}'"))),
        }
    }
}

impl std::fmt::Display for Measure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Measure::Ggm => "ggm",
            Measure::Entropy => "entropy",
            Measure::Gm => "gm",
        })
    }
}

/// A measure tag together with its value (e-bits for entropy, dimensionless otherwise).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntanglementValue {
    pub measure: Measure,
    pub value: f64,
}

/// The cut attaining the largest Schmidt coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BipartitionReport {
    /// Parties on the side containing party 0, ascending.
    pub partition: Vec<usize>,
    /// Largest eigenvalue of the reduced state across the cut.
    pub max_schmidt_sq: f64,
}

/// Index layout of one bipartition: where each joint index lands in the
/// reshaped amplitude matrix.
#[derive(Debug, Clone)]
pub(crate) struct CutLayout {
    pub side_a: Vec<usize>,
    pub rows: usize,
    pub cols: usize,
    pub row_of: Vec<usize>,
    pub col_of: Vec<usize>,
}

impl CutLayout {
    pub(crate) fn new(parties: usize, local_dim: usize, side_a: Vec<usize>) -> Self {
        let len = local_dim.pow(parties as u32);
        let side_b: Vec<usize> = (0..parties).filter(|k| !side_a.contains(k)).collect();
        let mut row_of = Vec::with_capacity(len);
        let mut col_of = Vec::with_capacity(len);
        for p in 0..len {
            let digits = local_digits(p, parties, local_dim);
            row_of.push(side_a.iter().fold(0, |acc, &k| acc * local_dim + digits[k]));
            col_of.push(side_b.iter().fold(0, |acc, &k| acc * local_dim + digits[k]));
        }
        CutLayout {
            rows: local_dim.pow(side_a.len() as u32),
            cols: local_dim.pow(side_b.len() as u32),
            side_a,
            row_of,
            col_of,
        }
    }

    /// Row-major `rows × cols` amplitude matrix.
    pub fn matrix(&self, amps: &[f64]) -> Vec<f64> {
        let mut m = vec![0.0; self.rows * self.cols];
        for (p, &a) in amps.iter().enumerate() {
            m[self.row_of[p] * self.cols + self.col_of[p]] = a;
        }
        m
    }

    /// Gram matrix on the smaller side (`M Mᵀ` or `Mᵀ M`), row-major.
    pub fn gram(&self, amps: &[f64]) -> (usize, Vec<f64>) {
        let m = self.matrix(amps);
        let (r, c) = (self.rows, self.cols);
        if r <= c {
            let mut g = vec![0.0; r * r];
            for i in 0..r {
                for j in i..r {
                    let s: f64 = (0..c).map(|k| m[i * c + k] * m[j * c + k]).sum();
                    g[i * r + j] = s;
                    g[j * r + i] = s;
                }
            }
            (r, g)
        } else {
            let mut g = vec![0.0; c * c];
            for i in 0..c {
                for j in i..c {
                    let s: f64 = (0..r).map(|k| m[k * c + i] * m[k * c + j]).sum();
                    g[i * c + j] = s;
                    g[j * c + i] = s;
                }
            }
            (c, g)
        }
    }
}

/// All `2^(N−1) − 1` bipartitions, each given by the side containing party 0,
/// sorted lexicographically.
pub fn bipartitions(parties: usize) -> Vec<Vec<usize>> {
    let mut cuts: Vec<Vec<usize>> = (0..(1usize << (parties - 1)) - 1)
        .map(|mask| {
            let mut side = vec![0];
            side.extend((1..parties).filter(|k| mask & (1 << (k - 1)) != 0));
            side
        })
        .collect();
    cuts.sort();
    cuts
}

/// Precomputed cut layouts for repeated GGM evaluation at fixed `(N, d)`.
#[derive(Debug, Clone)]
pub(crate) struct GgmEvaluator {
    pub cuts: Vec<CutLayout>,
}

impl GgmEvaluator {
    pub fn new(parties: usize, local_dim: usize) -> Self {
        let cuts = bipartitions(parties)
            .into_iter()
            .map(|side| CutLayout::new(parties, local_dim, side))
            .collect();
        GgmEvaluator { cuts }
    }

    /// Largest reduced eigenvalue over all cuts and the first cut attaining it.
    pub fn max_schmidt(&self, amps: &[f64]) -> (f64, usize) {
        let mut best = f64::NEG_INFINITY;
        let mut best_cut = 0;
        for (i, cut) in self.cuts.iter().enumerate() {
            let (k, g) = cut.gram(amps);
            let top = top_eigenvalue(&g, k);
            if top > best + CUT_TIE_TOL {
                best = top;
                best_cut = i;
            }
        }
        (best, best_cut)
    }

    pub fn ggm(&self, amps: &[f64]) -> f64 {
        (1.0 - self.max_schmidt(amps).0).max(0.0)
    }
}

macro_rules! static_eigenvalues {
    ($m:ty, $g:expr) => {
        <$m>::from_row_slice($g)
            .symmetric_eigenvalues()
            .iter()
            .cloned()
            .collect()
    };
}

/// Eigenvalues of a small symmetric matrix, unordered.
fn eigenvalues(g: &[f64], k: usize) -> Vec<f64> {
    match k {
        1 => vec![g[0]],
        2 => {
            let (a, b, c) = (g[0], g[1], g[3]);
            let r = (0.25 * (a - c) * (a - c) + b * b).sqrt();
            vec![0.5 * (a + c) + r, 0.5 * (a + c) - r]
        }
        3 => static_eigenvalues!(Matrix3<f64>, g),
        4 => static_eigenvalues!(Matrix4<f64>, g),
        5 => static_eigenvalues!(Matrix5<f64>, g),
        _ => DMatrix::from_row_slice(k, k, g)
            .symmetric_eigenvalues()
            .iter()
            .cloned()
            .collect(),
    }
}

/// Largest eigenvalue of a small symmetric matrix.
pub(crate) fn top_eigenvalue(g: &[f64], k: usize) -> f64 {
    eigenvalues(g, k).into_iter().fold(f64::NEG_INFINITY, f64::max)
}

/// Largest eigenpair of a small symmetric matrix, eigenvector oriented to a
/// nonnegative sum.
pub(crate) fn top_eigenpair(g: &[f64], k: usize) -> (f64, Vec<f64>) {
    let (lambda, mut v) = if k == 1 {
        (g[0], vec![1.0])
    } else {
        let eig = SymmetricEigen::new(DMatrix::from_row_slice(k, k, g));
        let (i, &lambda) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .expect("nonempty spectrum");
        (lambda, eig.eigenvectors.column(i).iter().cloned().collect())
    };
    if v.iter().sum::<f64>() < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    (lambda, v)
}

/// Full spectrum of a small symmetric matrix, descending.
pub(crate) fn spectrum(g: &[f64], k: usize) -> Vec<f64> {
    let mut values = eigenvalues(g, k);
    values.sort_by(|a, b| b.total_cmp(a));
    values
}

fn require_multipartite(state: &ProbeState) -> Result<()> {
    if state.parties() < 2 {
        return Err(QmetrixError::Unsupported(
            "entanglement measures need at least two parties".into(),
        ));
    }
    Ok(())
}

/// Generalized geometric measure `1 − max_{A:B} λ²_{A:B}`.
pub fn ggm(state: &ProbeState) -> Result<EntanglementValue> {
    Ok(ggm_with_report(state)?.0)
}

/// GGM together with the lexicographically first cut attaining the maximum.
pub fn ggm_with_report(state: &ProbeState) -> Result<(EntanglementValue, BipartitionReport)> {
    require_multipartite(state)?;
    let eval = GgmEvaluator::new(state.parties(), state.local_dim());
    let (top, cut) = eval.max_schmidt(&state.amplitudes());
    let value = EntanglementValue {
        measure: Measure::Ggm,
        value: (1.0 - top).max(0.0),
    };
    let report = BipartitionReport {
        partition: eval.cuts[cut].side_a.clone(),
        max_schmidt_sq: top.min(1.0),
    };
    Ok((value, report))
}

/// Closed-form two-qubit GGM `½[1 − √(1 − 4(√(ω1ω2) − √(ω0ω3))²)]`.
pub fn ggm_two_qubit_closed(w: &[f64; 4]) -> Result<f64> {
    if w.iter().any(|x| !x.is_finite()) {
        return Err(QmetrixError::NonFinite("weights"));
    }
    if w.iter().any(|&x| x < 0.0) {
        return Err(QmetrixError::InvalidWeights("negative weight".into()));
    }
    let sum: f64 = w.iter().sum();
    if (sum - 1.0).abs() > crate::states::RENORMALIZE_TOL {
        return Err(QmetrixError::InvalidWeights(format!("weights sum to {sum}")));
    }
    let det = (w[1] * w[2]).sqrt() - (w[0] * w[3]).sqrt();
    let disc = (1.0 - 4.0 * det * det).max(0.0);
    Ok(0.5 * (1.0 - disc.sqrt()))
}

/// Eigenvalues of the reduced state of party 0 for a two-party state, descending.
pub fn reduced_spectrum_bipartite(state: &ProbeState) -> Result<Vec<f64>> {
    if state.parties() != 2 {
        return Err(QmetrixError::Unsupported(format!(
            "entanglement entropy is defined here for two parties, got {}",
            state.parties()
        )));
    }
    let cut = CutLayout::new(2, state.local_dim(), vec![0]);
    let (k, g) = cut.gram(&state.amplitudes());
    Ok(spectrum(&g, k))
}

pub(crate) fn shannon_bits(p: &[f64]) -> f64 {
    p.iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| -x * x.log2())
        .sum::<f64>()
        .max(0.0)
}

/// Entanglement entropy (base 2) of a two-party state.
pub fn entropy_bipartite(state: &ProbeState) -> Result<EntanglementValue> {
    let spec = reduced_spectrum_bipartite(state)?;
    Ok(EntanglementValue {
        measure: Measure::Entropy,
        value: entropy_of_spectrum(&spec),
    })
}

pub(crate) fn entropy_of_spectrum(spec: &[f64]) -> f64 {
    let clipped: Vec<f64> = spec.iter().map(|&x| x.max(0.0)).collect();
    let total: f64 = clipped.iter().sum();
    let p: Vec<f64> = clipped.iter().map(|x| x / total).collect();
    shannon_bits(&p)
}

/// Binary entropy `−p log2 p − (1−p) log2(1−p)`.
pub fn binary_entropy(p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(out_of_range("p", p, "[0, 1]"));
    }
    Ok(shannon_bits(&[p, 1.0 - p]))
}

/// Settings for the alternating product-state search behind [`gm`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GmSearchConfig {
    pub restarts: usize,
    pub max_sweeps: usize,
    /// A restart stops once a full sweep improves the squared overlap by less than this.
    pub tol: f64,
    pub seed: u64,
}

impl Default for GmSearchConfig {
    fn default() -> Self {
        GmSearchConfig {
            restarts: 32,
            max_sweeps: 500,
            tol: 1e-12,
            seed: 0,
        }
    }
}

impl GmSearchConfig {
    /// Reduced budget used per sampled state.
    pub fn cheap(seed: u64) -> Self {
        GmSearchConfig {
            restarts: 4,
            max_sweeps: 100,
            tol: 1e-12,
            seed,
        }
    }
}

/// Result of the GM search.
#[derive(Debug, Clone, PartialEq)]
pub struct GmOutcome {
    pub value: f64,
    /// Best squared overlap with a product state.
    pub overlap: f64,
    /// Whether the best restart met the tolerance before the sweep limit.
    pub converged: bool,
    /// Unit local vectors of the closest product state found.
    pub factors: Vec<Vec<f64>>,
}

impl GmOutcome {
    pub fn as_value(&self) -> EntanglementValue {
        EntanglementValue {
            measure: Measure::Gm,
            value: self.value,
        }
    }
}

/// Reusable workspace for the alternating search at fixed `(N, d)`.
#[derive(Debug, Clone)]
pub(crate) struct GmSearcher {
    parties: usize,
    local_dim: usize,
    digits: Vec<usize>,
    single_cuts: Vec<CutLayout>,
}

pub(crate) struct SearchTrace {
    pub overlap: f64,
    pub factors: Vec<Vec<f64>>,
    pub converged: bool,
    #[cfg_attr(not(test), allow(dead_code))]
    pub history: Vec<f64>,
}

impl GmSearcher {
    pub fn new(parties: usize, local_dim: usize) -> Self {
        let len = local_dim.pow(parties as u32);
        let mut digits = Vec::with_capacity(len * parties);
        for p in 0..len {
            digits.extend(local_digits(p, parties, local_dim));
        }
        let single_cuts = (0..parties)
            .map(|k| CutLayout::new(parties, local_dim, vec![k]))
            .collect();
        GmSearcher {
            parties,
            local_dim,
            digits,
            single_cuts,
        }
    }

    /// Partial contraction of `amps` with every factor except party `k`.
    fn contract(&self, amps: &[f64], factors: &[Vec<f64>], k: usize, out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        let n = self.parties;
        for (p, &a) in amps.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            let row = &self.digits[p * n..(p + 1) * n];
            let mut prod = a;
            for (j, &i) in row.iter().enumerate() {
                if j != k {
                    prod *= factors[j][i];
                }
            }
            out[row[k]] += prod;
        }
    }

    /// Alternating maximization of `|⟨ψ|φ_1 ⊗ … ⊗ φ_N⟩|²` from `factors`.
    pub fn run(
        &self,
        amps: &[f64],
        mut factors: Vec<Vec<f64>>,
        max_sweeps: usize,
        tol: f64,
        keep_history: bool,
    ) -> SearchTrace {
        let d = self.local_dim;
        let mut v = vec![0.0; d];
        let mut history = Vec::new();
        let mut prev = -1.0;
        let mut overlap = 0.0;
        let mut converged = false;
        for _ in 0..max_sweeps {
            for k in 0..self.parties {
                self.contract(amps, &factors, k, &mut v);
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm > 0.0 {
                    factors[k].iter_mut().zip(&v).for_each(|(f, x)| *f = x / norm);
                }
                overlap = norm * norm;
                if keep_history {
                    history.push(overlap);
                }
            }
            if overlap - prev < tol {
                converged = true;
                break;
            }
            prev = overlap;
        }
        SearchTrace {
            overlap,
            factors,
            converged,
            history,
        }
    }

    /// Dominant eigenvectors of the single-party reduced states.
    fn spectral_start(&self, amps: &[f64]) -> Vec<Vec<f64>> {
        self.single_cuts
            .iter()
            .map(|cut| {
                let m = cut.matrix(amps);
                let (r, c) = (cut.rows, cut.cols);
                let mut g = vec![0.0; r * r];
                for i in 0..r {
                    for j in 0..r {
                        g[i * r + j] = (0..c).map(|l| m[i * c + l] * m[j * c + l]).sum();
                    }
                }
                top_eigenpair(&g, r).1
            })
            .collect()
    }

    fn random_start(&self, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
        (0..self.parties)
            .map(|_| {
                let mut v: Vec<f64> = (0..self.local_dim).map(|_| StandardNormal.sample(rng)).collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm > 0.0 {
                    v.iter_mut().for_each(|x| *x /= norm);
                } else {
                    v[0] = 1.0;
                }
                v
            })
            .collect()
    }

    /// Best of one spectral start and `restarts − 1` random starts.
    pub fn search(&self, amps: &[f64], cfg: &GmSearchConfig) -> GmOutcome {
        let mut best: Option<SearchTrace> = None;
        let restarts = cfg.restarts.max(1);
        for r in 0..restarts {
            let start = if r == 0 {
                self.spectral_start(amps)
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                rng.set_stream(r as u64);
                self.random_start(&mut rng)
            };
            let trace = self.run(amps, start, cfg.max_sweeps, cfg.tol, false);
            if best.as_ref().is_none_or(|b| trace.overlap > b.overlap) {
                best = Some(trace);
            }
        }
        let best = best.expect("at least one restart");
        let overlap = best.overlap.min(1.0);
        GmOutcome {
            value: (1.0 - overlap).max(0.0),
            overlap,
            converged: best.converged,
            factors: best.factors,
        }
    }
}

/// Geometric measure `1 − max_φ |⟨ψ|φ⟩|²` over fully separable `φ`.
pub fn gm(state: &ProbeState, cfg: &GmSearchConfig) -> Result<GmOutcome> {
    require_multipartite(state)?;
    let searcher = GmSearcher::new(state.parties(), state.local_dim());
    Ok(searcher.search(&state.amplitudes(), cfg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn st(n: usize, d: usize, w: Vec<f64>) -> ProbeState {
        ProbeState::new(n, d, w).unwrap()
    }

    fn ghz3() -> ProbeState {
        let mut w = vec![0.0; 8];
        w[0] = 0.5;
        w[7] = 0.5;
        st(3, 2, w)
    }

    #[test]
    fn bipartition_count_and_order() {
        assert_eq!(bipartitions(2), vec![vec![0]]);
        assert_eq!(bipartitions(3), vec![vec![0], vec![0, 1], vec![0, 2]]);
        for n in 2..=6 {
            assert_eq!(bipartitions(n).len(), (1 << (n - 1)) - 1);
        }
    }

    #[test]
    fn ggm_examples() {
        assert!((ggm(&st(2, 2, vec![0.5, 0.0, 0.0, 0.5])).unwrap().value - 0.5).abs() < 1e-15);
        assert!(ggm(&st(2, 2, vec![0.25; 4])).unwrap().value.abs() < 1e-15);
        assert!((ggm(&ghz3()).unwrap().value - 0.5).abs() < 1e-15);
        assert!(ggm(&ProbeState::basis(1, 2, 0).unwrap()).is_err());
    }

    #[test]
    fn ggm_report_tie_breaks_to_first_cut() {
        let (_, report) = ggm_with_report(&ghz3()).unwrap();
        assert_eq!(report.partition, vec![0]);
        assert!((report.max_schmidt_sq - 0.5).abs() < 1e-15);
    }

    #[test]
    fn ggm_report_finds_product_cut() {
        // Bell pair on parties 0,1 times |0> on party 2: the cut {0,1}|{2} is product.
        let mut w = vec![0.0; 8];
        w[0] = 0.5;
        w[6] = 0.5;
        let (v, report) = ggm_with_report(&st(3, 2, w)).unwrap();
        assert!(v.value.abs() < 1e-15);
        assert_eq!(report.partition, vec![0, 1]);
    }

    #[test]
    fn closed_form_examples() {
        assert!((ggm_two_qubit_closed(&[0.5, 0.0, 0.0, 0.5]).unwrap() - 0.5).abs() < 1e-15);
        assert!(ggm_two_qubit_closed(&[0.25; 4]).unwrap().abs() < 1e-15);
        assert!((ggm_two_qubit_closed(&[0.4, 0.1, 0.1, 0.4]).unwrap() - 0.1).abs() < 1e-12);
        assert!(ggm_two_qubit_closed(&[0.5, 0.5, 0.5, -0.5]).is_err());
        assert!(ggm_two_qubit_closed(&[0.5, 0.5, 0.5, 0.5]).is_err());
    }

    #[test]
    fn entropy_examples() {
        let e = entropy_bipartite(&st(2, 2, vec![0.5, 0.0, 0.0, 0.5])).unwrap();
        assert!((e.value - 1.0).abs() < 1e-15);
        assert!(entropy_bipartite(&st(2, 2, vec![0.25; 4])).unwrap().value.abs() < 1e-12);
        let mut w = vec![0.0; 9];
        w[0] = 1.0 / 3.0;
        w[4] = 1.0 / 3.0;
        w[8] = 1.0 / 3.0;
        let e = entropy_bipartite(&st(2, 3, w)).unwrap();
        assert!((e.value - 3f64.log2()).abs() < 1e-12);
        assert!(entropy_bipartite(&ghz3()).is_err());
    }

    #[test]
    fn binary_entropy_examples() {
        assert_eq!(binary_entropy(0.5).unwrap(), 1.0);
        assert_eq!(binary_entropy(0.0).unwrap(), 0.0);
        assert_eq!(binary_entropy(1.0).unwrap(), 0.0);
        assert!((binary_entropy(0.1).unwrap() - 0.46900).abs() < 1e-5);
        assert!(binary_entropy(1.5).is_err());
        assert!(binary_entropy(-0.1).is_err());
    }

    #[test]
    fn gm_examples() {
        let cfg = GmSearchConfig::default();
        let product = ProbeState::from_unnormalized(3, 2, &[1.0, 2.0, 3.0, 6.0, 2.0, 4.0, 6.0, 12.0]).unwrap();
        assert!(gm(&product, &cfg).unwrap().value < 1e-9);
        let bell = st(2, 2, vec![0.5, 0.0, 0.0, 0.5]);
        assert!((gm(&bell, &cfg).unwrap().value - 0.5).abs() < 1e-12);
        assert!((gm(&ghz3(), &cfg).unwrap().value - 0.5).abs() < 1e-12);
    }

    #[test]
    fn gm_of_w_state_exceeds_half() {
        let mut w = vec![0.0; 8];
        w[1] = 1.0 / 3.0;
        w[2] = 1.0 / 3.0;
        w[4] = 1.0 / 3.0;
        let out = gm(&st(3, 2, w), &GmSearchConfig::default()).unwrap();
        assert!((out.value - 5.0 / 9.0).abs() < 1e-9);
    }

    #[test]
    fn gm_is_seed_deterministic() {
        let s = ProbeState::from_unnormalized(3, 2, &[0.3, 0.1, 0.9, 0.2, 0.5, 0.7, 0.05, 0.4]).unwrap();
        let cfg = GmSearchConfig {
            seed: 99,
            ..GmSearchConfig::default()
        };
        assert_eq!(gm(&s, &cfg).unwrap(), gm(&s, &cfg).unwrap());
    }

    fn weights(len: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(0.0f64..1.0, len).prop_filter("nonzero", |v| v.iter().sum::<f64>() > 1e-3)
    }

    proptest! {
        #[test]
        fn closed_form_matches_gram(raw in weights(4)) {
            let s = ProbeState::from_unnormalized(2, 2, &raw).unwrap();
            let w: [f64; 4] = s.weights().try_into().unwrap();
            let a = ggm(&s).unwrap().value;
            let b = ggm_two_qubit_closed(&w).unwrap();
            prop_assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
        }

        #[test]
        fn two_qubit_gm_equals_ggm(raw in weights(4), seed in 0u64..1000) {
            let s = ProbeState::from_unnormalized(2, 2, &raw).unwrap();
            let cfg = GmSearchConfig { seed, ..GmSearchConfig::default() };
            let g = ggm(&s).unwrap().value;
            let m = gm(&s, &cfg).unwrap().value;
            prop_assert!((g - m).abs() <= 1e-6, "gm {m} ggm {g}");
        }

        #[test]
        fn gm_dominates_ggm(raw in weights(8), seed in 0u64..1000) {
            let s = ProbeState::from_unnormalized(3, 2, &raw).unwrap();
            let cfg = GmSearchConfig { seed, ..GmSearchConfig::default() };
            prop_assert!(gm(&s, &cfg).unwrap().value >= ggm(&s).unwrap().value - 1e-6);
        }

        #[test]
        fn measures_invariant_under_party_swap(raw in weights(9)) {
            let s = ProbeState::from_unnormalized(2, 3, &raw).unwrap();
            let w = s.weights();
            let swapped: Vec<f64> = (0..9).map(|p| w[(p % 3) * 3 + p / 3]).collect();
            let t = ProbeState::new(2, 3, swapped).unwrap();
            prop_assert!((ggm(&s).unwrap().value - ggm(&t).unwrap().value).abs() < 1e-12);
            prop_assert!((entropy_bipartite(&s).unwrap().value - entropy_bipartite(&t).unwrap().value).abs() < 1e-10);
        }

        #[test]
        fn alternating_search_is_monotone(raw in weights(27), seed in 0u64..1000) {
            let s = ProbeState::from_unnormalized(3, 3, &raw).unwrap();
            let searcher = GmSearcher::new(3, 3);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let start = searcher.random_start(&mut rng);
            let trace = searcher.run(&s.amplitudes(), start, 200, 0.0, true);
            for w in trace.history.windows(2) {
                prop_assert!(w[1] >= w[0] - 1e-15, "{} then {}", w[0], w[1]);
            }
        }
    }
}
