//! Kernel quality: numeric rank of spike-count matrices built from random
//! subsets of samples, on clean inputs (separation) and on perturbed
//! inputs (generalization).

use nalgebra::DMatrix;
use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::SpikeCountMatrix;
use crate::seed::{self, stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KernelConfig {
    /// Sampled columns per matrix.
    pub k: usize,
    pub shuffles: usize,
    /// Singular values above `tolerance * largest` count toward the rank.
    pub tolerance: f64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig { k: 500, shuffles: 1000, tolerance: 1e-8 }
    }
}

pub fn numeric_rank(m: &DMatrix<f64>, tolerance: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.singular_values();
    let max = sv.max();
    if max <= 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > tolerance * max).count()
}

/// `n_neurons x cols.len()` matrix whose columns are the chosen samples.
pub fn column_matrix(counts: &SpikeCountMatrix, cols: &[usize]) -> DMatrix<f64> {
    let n = counts.n_neurons;
    DMatrix::from_fn(n, cols.len(), |r, c| counts.row(cols[c])[r] as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RankStats {
    pub mean: f64,
    pub std: f64,
}

impl RankStats {
    pub fn of(values: &[f64]) -> Self {
        let (mean, std) = super::mean_std(values);
        RankStats { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelRanks {
    pub separation: RankStats,
    pub generalization: RankStats,
    pub k: usize,
    pub shuffles: usize,
}

/// Ranks over `cfg.shuffles` random column subsets. Clean and noisy
/// matrices use the same column indices in each shuffle.
pub fn kernel_ranks(
    clean: &SpikeCountMatrix,
    noisy: &SpikeCountMatrix,
    cfg: &KernelConfig,
    seed: u64,
) -> Result<KernelRanks> {
    if clean.n_samples() != noisy.n_samples() || clean.n_neurons != noisy.n_neurons {
        return Err(Error::Config("clean and perturbed count matrices differ in shape".into()));
    }
    if cfg.k == 0 || cfg.k > clean.n_samples() {
        return Err(Error::Config(format!(
            "kernel quality needs k in 1..={}, got {}",
            clean.n_samples(),
            cfg.k
        )));
    }
    let mut rng = seed::rng(seed, stream::KERNEL_SHUFFLE);
    let mut sep = Vec::with_capacity(cfg.shuffles);
    let mut gen = Vec::with_capacity(cfg.shuffles);
    for _ in 0..cfg.shuffles {
        let cols = index::sample(&mut rng, clean.n_samples(), cfg.k).into_vec();
        sep.push(numeric_rank(&column_matrix(clean, &cols), cfg.tolerance) as f64);
        gen.push(numeric_rank(&column_matrix(noisy, &cols), cfg.tolerance) as f64);
    }
    Ok(KernelRanks {
        separation: RankStats::of(&sep),
        generalization: RankStats::of(&gen),
        k: cfg.k,
        shuffles: cfg.shuffles,
    })
}

/// Min-max rescaling to `[0, 1]`; a constant input maps to zeros.
pub fn rescale(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return vec![0.0; values.len()];
    }
    values.iter().map(|v| (v - lo) / (hi - lo)).collect()
}

/// Combined score for each entry of a pool of models and datasets: both
/// mean ranks are rescaled over the pool, generalization is subtracted
/// from separation, and the differences are rescaled again.
pub fn kernel_quality(pool: &[KernelRanks]) -> Vec<f64> {
    let sep = rescale(&pool.iter().map(|r| r.separation.mean).collect::<Vec<_>>());
    let gen = rescale(&pool.iter().map(|r| r.generalization.mean).collect::<Vec<_>>());
    let diff: Vec<f64> = sep.iter().zip(&gen).map(|(s, g)| s - g).collect();
    rescale(&diff)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelQualityReport {
    pub ranks: KernelRanks,
    pub score: f64,
}

pub fn kernel_reports(pool: Vec<KernelRanks>) -> Vec<KernelQualityReport> {
    let scores = kernel_quality(&pool);
    pool.into_iter().zip(scores).map(|(ranks, score)| KernelQualityReport { ranks, score }).collect()
}
