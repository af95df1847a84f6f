//! Random-sampling estimate of the GM-constrained optimal QFI.
//!
//! Weights are drawn uniformly from `[0, 1]` and normalized, the GM of each
//! state is estimated, and the state is folded into every closed bin
//! `[k·w, (k+1)·w]` containing it. Only per-bin counts and the per-bin
//! maximizer are retained, so memory is independent of the sample count.
//!
//! The stream is cut into fixed-size chunks, each with its own RNG stream, so
//! the result does not depend on the number of worker threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{out_of_range, QmetrixError, Result};
use crate::measures::{GmSearchConfig, GmSearcher};
use crate::states::{Generator, ProbeState};

/// States per chunk; fixed so results are independent of the thread count.
pub const CHUNK_SIZE: u64 = 4096;
/// Upper end of the binned GM range.
pub const GM_RANGE_MAX: f64 = 0.5;
/// Values this close to a bin edge count as lying on it.
const EDGE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    /// Number of sampled states `ν`.
    pub samples: u64,
    pub parties: usize,
    pub local_dim: usize,
    pub bin_width: f64,
    pub seed: u64,
}

impl SamplerConfig {
    pub fn new(samples: u64, parties: usize, local_dim: usize, seed: u64) -> Self {
        SamplerConfig {
            samples,
            parties,
            local_dim,
            bin_width: 0.05,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples < 1 {
            return Err(out_of_range("samples", self.samples as f64, ">= 1"));
        }
        if self.parties < 2 {
            return Err(out_of_range("parties", self.parties as f64, ">= 2"));
        }
        if self.local_dim < 2 {
            return Err(out_of_range("local_dim", self.local_dim as f64, ">= 2"));
        }
        self.bin_count().map(|_| ())
    }

    /// Number of bins covering `[0, ½]`.
    pub fn bin_count(&self) -> Result<usize> {
        let w = self.bin_width;
        if !(w > 0.0 && w <= GM_RANGE_MAX) {
            return Err(out_of_range("bin_width", w, "(0, 0.5]"));
        }
        let n = GM_RANGE_MAX / w;
        if (n - n.round()).abs() > 1e-9 {
            return Err(QmetrixError::InvalidConfig(format!(
                "bin width {w} does not divide [0, {GM_RANGE_MAX}] into whole bins"
            )));
        }
        Ok(n.round() as usize)
    }

    pub fn generator(&self) -> Result<Generator> {
        if self.local_dim == 2 {
            Generator::pauli_z(self.parties)
        } else {
            Generator::spin_rescaled(self.parties, self.local_dim)
        }
    }

    fn dimension(&self) -> usize {
        self.local_dim.pow(self.parties as u32)
    }

    fn chunks(&self) -> u64 {
        self.samples.div_ceil(CHUNK_SIZE)
    }
}

/// Per-bin summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinReport {
    pub bin_index: usize,
    pub gm_lo: f64,
    pub gm_hi: f64,
    pub count: u64,
    pub q_max: Option<f64>,
    #[serde(skip)]
    pub argmax_weights: Option<ProbeState>,
    pub argmax_gm: Option<f64>,
}

/// Bins of one sampler run plus bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplerRun {
    pub config: SamplerConfig,
    pub bins: Vec<BinReport>,
    /// States whose GM exceeded the binned range.
    pub overflow: u64,
    /// States that received the full GM budget because they became a bin maximizer.
    pub escalations: u64,
}

fn mix_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn chunk_rng(seed: u64, chunk: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk);
    rng
}

fn draw(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    loop {
        let raw: Vec<f64> = (0..len).map(|_| rng.random::<f64>()).collect();
        let sum: f64 = raw.iter().sum();
        if sum > 0.0 {
            return raw.into_iter().map(|x| x / sum).collect();
        }
    }
}

/// Deterministic stream of `ν` random phaseless states.
pub fn sample_states(cfg: &SamplerConfig) -> Result<impl Iterator<Item = ProbeState> + '_> {
    cfg.validate()?;
    let len = cfg.dimension();
    Ok((0..cfg.chunks()).flat_map(move |c| {
        let mut rng = chunk_rng(cfg.seed, c);
        let n = CHUNK_SIZE.min(cfg.samples - c * CHUNK_SIZE);
        (0..n).map(move |_| ProbeState::new(cfg.parties, cfg.local_dim, draw(&mut rng, len)).expect("normalized draw"))
    }))
}

/// Bins whose closed interval contains `gm`; empty when `gm` exceeds the range.
pub fn bins_for(gm: f64, width: f64, bins: usize) -> Vec<usize> {
    if gm > GM_RANGE_MAX + EDGE_TOL {
        return Vec::new();
    }
    let x = gm.max(0.0) / width;
    let k = x.floor() as usize;
    let on_edge = (x - x.round()).abs() * width <= EDGE_TOL;
    let mut out = Vec::with_capacity(2);
    if on_edge {
        let e = x.round() as usize;
        if e > 0 {
            out.push(e - 1);
        }
        if e < bins {
            out.push(e);
        }
    } else {
        out.push(k.min(bins - 1));
    }
    out
}

#[derive(Debug, Clone)]
struct Best {
    q: f64,
    gm: f64,
    weights: Vec<f64>,
}

#[derive(Debug, Clone)]
struct Accumulator {
    counts: Vec<u64>,
    best: Vec<Option<Best>>,
    overflow: u64,
    escalations: u64,
}

impl Accumulator {
    fn new(bins: usize) -> Self {
        Accumulator {
            counts: vec![0; bins],
            best: vec![None; bins],
            overflow: 0,
            escalations: 0,
        }
    }

    /// Folds `other` (a later chunk) into `self`; ties keep the earlier maximizer.
    fn merge(mut self, other: Accumulator) -> Accumulator {
        for k in 0..self.counts.len() {
            self.counts[k] += other.counts[k];
            if let Some(b) = &other.best[k] {
                if self.best[k].as_ref().is_none_or(|a| b.q > a.q) {
                    self.best[k] = Some(b.clone());
                }
            }
        }
        self.overflow += other.overflow;
        self.escalations += other.escalations;
        self
    }
}

struct Worker<'a> {
    cfg: &'a SamplerConfig,
    bins: usize,
    energies: Vec<f64>,
    searcher: GmSearcher,
    full: GmSearchConfig,
}

impl<'a> Worker<'a> {
    fn new(cfg: &'a SamplerConfig) -> Result<Self> {
        let g = cfg.generator()?;
        Ok(Worker {
            cfg,
            bins: cfg.bin_count()?,
            energies: g.collective_spectrum().values,
            searcher: GmSearcher::new(cfg.parties, cfg.local_dim),
            full: GmSearchConfig::default(),
        })
    }

    fn qfi(&self, w: &[f64]) -> f64 {
        let mean: f64 = w.iter().zip(&self.energies).map(|(x, e)| x * e).sum();
        4.0 * w
            .iter()
            .zip(&self.energies)
            .map(|(x, e)| x * (e - mean) * (e - mean))
            .sum::<f64>()
    }

    fn fold(&self, acc: &mut Accumulator, weights: Vec<f64>, global_index: u64) {
        let amps: Vec<f64> = weights.iter().map(|w| w.sqrt()).collect();
        let q = self.qfi(&weights);
        let seed = mix_seed(self.cfg.seed, global_index);
        let mut gm = self.searcher.search(&amps, &GmSearchConfig::cheap(seed)).value;
        let mut targets = bins_for(gm, self.cfg.bin_width, self.bins);
        let improves = targets.iter().any(|&k| acc.best[k].as_ref().is_none_or(|b| q > b.q));
        if improves {
            let full = GmSearchConfig { seed, ..self.full };
            gm = self.searcher.search(&amps, &full).value;
            targets = bins_for(gm, self.cfg.bin_width, self.bins);
            acc.escalations += 1;
        }
        if targets.is_empty() {
            acc.overflow += 1;
            return;
        }
        for &k in &targets {
            acc.counts[k] += 1;
            if acc.best[k].as_ref().is_none_or(|b| q > b.q) {
                acc.best[k] = Some(Best {
                    q,
                    gm,
                    weights: weights.clone(),
                });
            }
        }
    }

    fn chunk(&self, c: u64) -> Accumulator {
        let mut acc = Accumulator::new(self.bins);
        let mut rng = chunk_rng(self.cfg.seed, c);
        let n = CHUNK_SIZE.min(self.cfg.samples - c * CHUNK_SIZE);
        let len = self.cfg.dimension();
        for i in 0..n {
            let w = draw(&mut rng, len);
            self.fold(&mut acc, w, c * CHUNK_SIZE + i);
        }
        acc
    }

    fn finish(&self, acc: Accumulator) -> Result<SamplerRun> {
        let w = self.cfg.bin_width;
        let mut bins = Vec::with_capacity(self.bins);
        for (k, best) in acc.best.into_iter().enumerate() {
            let argmax = match &best {
                Some(b) => Some(ProbeState::new(
                    self.cfg.parties,
                    self.cfg.local_dim,
                    b.weights.clone(),
                )?),
                None => None,
            };
            bins.push(BinReport {
                bin_index: k,
                gm_lo: k as f64 * w,
                gm_hi: (k + 1) as f64 * w,
                count: acc.counts[k],
                q_max: best.as_ref().map(|b| b.q),
                argmax_weights: argmax,
                argmax_gm: best.as_ref().map(|b| b.gm),
            });
        }
        Ok(SamplerRun {
            config: self.cfg.clone(),
            bins,
            overflow: acc.overflow,
            escalations: acc.escalations,
        })
    }
}

/// Folds an arbitrary state stream into bins, in stream order.
///
/// Given the output of [`sample_states`] this reproduces [`run_sampler`]
/// exactly.
pub fn bin_and_maximize<I>(states: I, cfg: &SamplerConfig) -> Result<SamplerRun>
where
    I: IntoIterator<Item = ProbeState>,
{
    cfg.validate()?;
    let worker = Worker::new(cfg)?;
    let mut total = Accumulator::new(worker.bins);
    let mut acc = Accumulator::new(worker.bins);
    for (i, s) in states.into_iter().enumerate() {
        if s.parties() != cfg.parties || s.local_dim() != cfg.local_dim {
            return Err(QmetrixError::DimensionMismatch(
                "state does not match sampler config".into(),
            ));
        }
        let i = i as u64;
        if i > 0 && i.is_multiple_of(CHUNK_SIZE) {
            total = total.merge(std::mem::replace(&mut acc, Accumulator::new(worker.bins)));
        }
        worker.fold(&mut acc, s.weights().to_vec(), i);
    }
    worker.finish(total.merge(acc))
}

/// Samples and bins `ν` states in parallel chunks.
pub fn run_sampler(cfg: &SamplerConfig) -> Result<SamplerRun> {
    cfg.validate()?;
    let worker = Worker::new(cfg)?;
    let parts: Vec<Accumulator> = (0..cfg.chunks()).into_par_iter().map(|c| worker.chunk(c)).collect();
    let merged = parts
        .into_iter()
        .fold(Accumulator::new(worker.bins), Accumulator::merge);
    worker.finish(merged)
}

/// Per-bin comparison of two runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinComparison {
    pub bin_index: usize,
    pub q_a: Option<f64>,
    pub q_b: Option<f64>,
    /// `|q_a − q_b| / max(q_a, q_b)`, absent when either bin is empty.
    pub rel_diff: Option<f64>,
    pub exceeds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub rel_tol: f64,
    pub bins: Vec<BinComparison>,
}

impl ConvergenceReport {
    /// True when every bin up to `k_max` is populated in both runs and within tolerance.
    pub fn converged_through(&self, k_max: usize) -> bool {
        self.bins
            .iter()
            .filter(|b| b.bin_index <= k_max)
            .all(|b| b.rel_diff.is_some() && !b.exceeds)
    }
}

/// Compares per-bin `q_max` of two runs that differ at most in `ν` and seed.
pub fn convergence_check(a: &[BinReport], b: &[BinReport], rel_tol: f64) -> Result<ConvergenceReport> {
    if a.len() != b.len() {
        return Err(QmetrixError::ConfigMismatch(format!(
            "bin counts differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    for (x, y) in a.iter().zip(b) {
        if (x.gm_lo - y.gm_lo).abs() > 1e-12 || (x.gm_hi - y.gm_hi).abs() > 1e-12 {
            return Err(QmetrixError::ConfigMismatch(format!(
                "bin {} ranges differ: [{}, {}] vs [{}, {}]",
                x.bin_index, x.gm_lo, x.gm_hi, y.gm_lo, y.gm_hi
            )));
        }
    }
    let bins = a
        .iter()
        .zip(b)
        .map(|(x, y)| {
            let rel = match (x.q_max, y.q_max) {
                (Some(p), Some(q)) => {
                    let m = p.max(q);
                    Some(if m > 0.0 { (p - q).abs() / m } else { 0.0 })
                }
                _ => None,
            };
            BinComparison {
                bin_index: x.bin_index,
                q_a: x.q_max,
                q_b: y.q_max,
                rel_diff: rel,
                exceeds: rel.is_some_and(|r| r > rel_tol),
            }
        })
        .collect();
    Ok(ConvergenceReport { rel_tol, bins })
}

/// Like [`convergence_check`] but also rejects runs with different `(N, d, bin width)`.
pub fn compare_runs(a: &SamplerRun, b: &SamplerRun, rel_tol: f64) -> Result<ConvergenceReport> {
    let (x, y) = (&a.config, &b.config);
    if x.parties != y.parties || x.local_dim != y.local_dim || (x.bin_width - y.bin_width).abs() > 1e-15 {
        return Err(QmetrixError::ConfigMismatch(format!(
            "runs differ in (N, d, bin width): ({}, {}, {}) vs ({}, {}, {})",
            x.parties, x.local_dim, x.bin_width, y.parties, y.local_dim, y.bin_width
        )));
    }
    convergence_check(&a.bins, &b.bins, rel_tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::gm;
    use crate::states::qfi;

    fn cfg(samples: u64, seed: u64) -> SamplerConfig {
        SamplerConfig::new(samples, 3, 2, seed)
    }

    #[test]
    fn bin_edges_are_closed() {
        assert_eq!(bins_for(0.0, 0.05, 10), vec![0]);
        assert_eq!(bins_for(0.03, 0.05, 10), vec![0]);
        assert_eq!(bins_for(0.05, 0.05, 10), vec![0, 1]);
        assert_eq!(bins_for(0.1, 0.05, 10), vec![1, 2]);
        assert_eq!(bins_for(0.5, 0.05, 10), vec![9]);
        assert_eq!(bins_for(0.49, 0.05, 10), vec![9]);
        assert!(bins_for(0.55, 0.05, 10).is_empty());
    }

    #[test]
    fn bin_width_must_divide_range() {
        assert_eq!(cfg(1, 0).bin_count().unwrap(), 10);
        let mut c = cfg(1, 0);
        c.bin_width = 0.03;
        assert!(c.validate().is_err());
        c.bin_width = 0.1;
        assert_eq!(c.bin_count().unwrap(), 5);
    }

    #[test]
    fn single_sample_is_reproducible() {
        let c = cfg(1, 42);
        let a: Vec<ProbeState> = sample_states(&c).unwrap().collect();
        let b: Vec<ProbeState> = sample_states(&c).unwrap().collect();
        assert_eq!(a.len(), 1);
        assert_eq!(a, b);
    }

    #[test]
    fn samples_are_normalized_and_unbiased() {
        let c = cfg(100_000, 3);
        let mut mean = [0.0; 8];
        let mut n = 0;
        for s in sample_states(&c).unwrap() {
            let sum: f64 = s.weights().iter().sum();
            assert!((sum - 1.0).abs() <= 1e-12);
            for (m, w) in mean.iter_mut().zip(s.weights()) {
                *m += w;
            }
            n += 1;
        }
        assert_eq!(n, 100_000);
        for m in mean {
            assert!((m / n as f64 - 0.125).abs() < 0.01);
        }
    }

    #[test]
    fn product_states_only_fill_bin_zero() {
        let c = cfg(3, 0);
        let states: Vec<ProbeState> = [[0.3, 0.7], [0.5, 0.5], [0.9, 0.1]]
            .iter()
            .map(|q| {
                let w: Vec<f64> = (0..8).map(|p| q[(p >> 2) & 1] * q[(p >> 1) & 1] * q[p & 1]).collect();
                ProbeState::new(3, 2, w).unwrap()
            })
            .collect();
        let run = bin_and_maximize(states, &c).unwrap();
        assert_eq!(run.bins[0].count, 3);
        assert!(run.bins[1..].iter().all(|b| b.count == 0 && b.q_max.is_none()));
    }

    #[test]
    fn ghz_lands_in_top_bin() {
        let mut w = vec![0.0; 8];
        w[0] = 0.5;
        w[7] = 0.5;
        let run = bin_and_maximize(vec![ProbeState::new(3, 2, w).unwrap()], &cfg(1, 0)).unwrap();
        assert_eq!(run.bins[9].count, 1);
        assert_eq!(run.bins[9].q_max, Some(36.0));
        assert_eq!(run.bins.iter().map(|b| b.count).sum::<u64>(), 1);
    }

    #[test]
    fn parallel_run_matches_stream_and_replays() {
        let c = cfg(10_000, 5);
        let a = run_sampler(&c).unwrap();
        let b = run_sampler(&c).unwrap();
        assert_eq!(a, b);
        let s = bin_and_maximize(sample_states(&c).unwrap(), &c).unwrap();
        assert_eq!(a, s);
    }

    #[test]
    fn counts_and_argmax_self_consistency() {
        let c = cfg(20_000, 9);
        let run = run_sampler(&c).unwrap();
        let total: u64 = run.bins.iter().map(|b| b.count).sum::<u64>() + run.overflow;
        assert!(total >= c.samples && total <= 2 * c.samples);
        let g = c.generator().unwrap();
        for b in &run.bins {
            if let (Some(q), Some(s)) = (b.q_max, &b.argmax_weights) {
                assert_eq!(qfi(s, &g).unwrap().to_bits(), q.to_bits());
                let v = gm(s, &GmSearchConfig::default()).unwrap().value;
                assert!(v >= b.gm_lo - 1e-9 && v <= b.gm_hi + 1e-9, "bin {} gm {v}", b.bin_index);
                assert!(q <= 36.0);
            }
        }
    }

    #[test]
    fn convergence_check_behaviour() {
        let a = run_sampler(&cfg(5_000, 1)).unwrap();
        let same = compare_runs(&a, &a, 0.05).unwrap();
        assert!(same.bins.iter().all(|b| b.rel_diff.is_none_or(|r| r == 0.0)));
        let other = run_sampler(&SamplerConfig::new(100, 2, 2, 1)).unwrap();
        assert!(matches!(
            compare_runs(&a, &other, 0.05),
            Err(QmetrixError::ConfigMismatch(_))
        ));
        let mut coarse = cfg(100, 1);
        coarse.bin_width = 0.1;
        let coarse = run_sampler(&coarse).unwrap();
        assert!(convergence_check(&a.bins, &coarse.bins, 0.05).is_err());
    }
}
