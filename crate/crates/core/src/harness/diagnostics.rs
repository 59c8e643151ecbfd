//! Per-run dynamics measurements.

use serde::{Deserialize, Serialize};

use crate::analysis::{branching_tally, ei_rate_balance, BranchingConfig, BranchingTally};
use crate::astrocyte::{bf_proxy, TraceRow};
use crate::data::{EncodingConfig, InputRaster, Stimuli};
use crate::dynamics::{Connectivity, LifParams, Raster};
use crate::error::Result;
use crate::pipeline::record_sample;
use crate::seed::{self, stream};
use crate::topology::{LiquidGraph, Weights};

/// BF proxy of each full `window`-ms slice; `None` for slices without
/// input spikes.
pub fn windowed_proxy(input: &InputRaster, liquid: &Raster, window: usize) -> Vec<Option<f64>> {
    if window == 0 {
        return Vec::new();
    }
    let n = input.duration().min(liquid.duration) / window;
    let mut liq = vec![0usize; n];
    for &(t, _) in &liquid.events {
        let w = t as usize / window;
        if w < n {
            liq[w] += 1;
        }
    }
    (0..n)
        .map(|w| {
            let inp: usize = input.steps[w * window..(w + 1) * window].iter().map(Vec::len).sum();
            bf_proxy(liq[w], inp)
        })
        .collect()
}

/// Frozen-liquid measurements averaged over a handful of samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsProbe {
    pub samples: usize,
    pub sigma_bf: Option<f64>,
    /// Mean over samples and windows of the windowed BF proxy.
    pub bf_proxy: Option<f64>,
    pub ei_rate_balance: Option<f64>,
    pub liquid_rate_hz: f64,
}

/// Runs the first `n` samples through the frozen liquid.
#[allow(clippy::too_many_arguments)]
pub fn probe_dynamics(
    graph: &LiquidGraph,
    conn: &Connectivity,
    weights: &Weights,
    stimuli: &Stimuli,
    n: usize,
    lif: &LifParams,
    encoding: &EncodingConfig,
    branching: &BranchingConfig,
    seed: u64,
) -> Result<DynamicsProbe> {
    let n = n.min(stimuli.len());
    let mut tally = BranchingTally::default();
    let mut proxies = Vec::new();
    let mut balance = Vec::new();
    let mut spikes = 0usize;
    let mut steps = 0usize;
    for i in 0..n {
        let mut rng = seed::item_rng(seed, stream::DIAGNOSTICS, i as u64);
        let input = stimuli.encode(i, encoding, &mut rng)?;
        let liquid = record_sample(conn, weights, &input, lif)?;
        tally.merge(branching_tally(conn, &liquid, Some(&input), branching)?);
        proxies.extend(windowed_proxy(&input, &liquid, encoding.snapshot_ms).into_iter().flatten());
        balance.extend(ei_rate_balance(&liquid, graph));
        spikes += liquid.n_spikes();
        steps += liquid.duration;
    }
    let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    Ok(DynamicsProbe {
        samples: n,
        sigma_bf: tally.sigma(),
        bf_proxy: mean(&proxies),
        ei_rate_balance: mean(&balance),
        liquid_rate_hz: if steps == 0 { 0.0 } else { spikes as f64 * 1000.0 / (steps as f64 * graph.n_liquid() as f64) },
    })
}

/// Summary of an initialisation trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub snapshots: usize,
    pub first: Option<f64>,
    /// Statistics over the last `tail_fraction` of the stream.
    pub tail_mean: Option<f64>,
    pub tail_min: Option<f64>,
    pub tail_max: Option<f64>,
    /// Fraction of tail snapshots whose proxy lies in `band`; snapshots
    /// without input count as outside.
    pub tail_in_band: f64,
    pub band: [f64; 2],
    pub final_a_minus: Option<f64>,
}

impl TraceSummary {
    /// Every tail snapshot inside the band.
    pub fn stays_in_band(&self) -> bool {
        self.snapshots > 0 && self.tail_in_band == 1.0
    }
}

/// Snapshot proxies averaged over consecutive non-overlapping blocks of
/// `k` snapshots; missing values are skipped.
pub fn block_means(trace: &[TraceRow], k: usize) -> Vec<Option<f64>> {
    trace
        .chunks(k.max(1))
        .map(|c| {
            let v: Vec<f64> = c.iter().filter_map(|r| r.bf_proxy).collect();
            (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
        })
        .collect()
}

pub fn summarize_trace(trace: &[TraceRow], band: [f64; 2], tail_fraction: f64) -> TraceSummary {
    let n = trace.len();
    let tail_len = ((n as f64 * tail_fraction).ceil() as usize).min(n);
    let tail = &trace[n - tail_len..];
    let values: Vec<f64> = tail.iter().filter_map(|r| r.bf_proxy).collect();
    let inside = tail.iter().filter(|r| r.bf_proxy.is_some_and(|p| p >= band[0] && p <= band[1])).count();
    TraceSummary {
        snapshots: n,
        first: trace.first().and_then(|r| r.bf_proxy),
        tail_mean: (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64),
        tail_min: values.iter().copied().reduce(f64::min),
        tail_max: values.iter().copied().reduce(f64::max),
        tail_in_band: if tail_len == 0 { 0.0 } else { inside as f64 / tail_len as f64 },
        band,
        final_a_minus: trace.last().map(|r| r.a_minus),
    }
}
