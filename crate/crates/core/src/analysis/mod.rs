//! Diagnostics over rasters, weights and spike counts.

pub mod balance;
pub mod branching;
pub mod fit;
pub mod kernel;

pub use balance::{ei_rate_balance, ei_weight_balance, net_current, spike_autocorrelation, CurrentStats};
pub use branching::{branching_factor, branching_tally, BranchingConfig, BranchingTally};
pub use fit::{fit_polynomial, PolyFit};
pub use kernel::{kernel_quality, kernel_ranks, KernelConfig, KernelQualityReport, KernelRanks};

/// Sample mean and standard deviation (n - 1 denominator). Constant
/// input, including a single value, gives exactly that value and 0.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    if values.iter().all(|&v| v == values[0]) {
        return (values[0], 0.0);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Ranks starting at 1, ties sharing their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let (mx, _) = mean_std(x);
    let (my, _) = mean_std(y);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}

pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    pearson(&average_ranks(x), &average_ranks(y))
}

/// First `x` where the piecewise-linear curve through `(xs, ys)` reaches
/// `level`, interpolated between neighbouring points.
pub fn first_crossing(xs: &[f64], ys: &[f64], level: f64) -> Option<f64> {
    for i in 1..xs.len().min(ys.len()) {
        let (y0, y1) = (ys[i - 1] - level, ys[i] - level);
        if y0 == 0.0 {
            return Some(xs[i - 1]);
        }
        if y0.signum() != y1.signum() {
            return Some(xs[i - 1] + (xs[i] - xs[i - 1]) * y0 / (y0 - y1));
        }
    }
    ys.last().filter(|&&y| y == level).map(|_| xs[ys.len() - 1])
}
