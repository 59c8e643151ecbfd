//! Excitation/inhibition balance and spike-train autocorrelation.

use serde::{Deserialize, Serialize};

use crate::data::InputRaster;
use crate::dynamics::{Connectivity, Raster};
use crate::topology::LiquidGraph;

/// `(n_pos - n_neg) / n_nonzero` over all weights; `None` if every weight
/// is zero.
pub fn ei_weight_balance(weights: &[f64]) -> Option<f64> {
    let pos = weights.iter().filter(|&&w| w > 0.0).count();
    let neg = weights.iter().filter(|&&w| w < 0.0).count();
    let nz = pos + neg;
    (nz > 0).then(|| (pos as f64 - neg as f64) / nz as f64)
}

/// `|f_e - f_i| / f_l` from mean per-neuron rates; `None` for a silent
/// raster or a liquid without both populations.
pub fn ei_rate_balance(raster: &Raster, graph: &LiquidGraph) -> Option<f64> {
    let counts = raster.counts();
    let (mut se, mut ne, mut si, mut ni) = (0u64, 0usize, 0u64, 0usize);
    for (n, c) in graph.neurons.iter().zip(&counts) {
        if n.is_excitatory {
            se += *c as u64;
            ne += 1;
        } else {
            si += *c as u64;
            ni += 1;
        }
    }
    if ne == 0 || ni == 0 || se + si == 0 {
        return None;
    }
    let t = raster.duration.max(1) as f64;
    let fe = se as f64 / (ne as f64 * t);
    let fi = si as f64 / (ni as f64 * t);
    let fl = (se + si) as f64 / ((ne + ni) as f64 * t);
    Some((fe - fi).abs() / fl)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CurrentStats {
    pub mean: f64,
    pub std: f64,
    /// Number of (neuron, step) entries.
    pub n: u64,
}

/// Net weighted presynaptic input per neuron per step: active inputs at
/// `t` and liquid spikes at `t - 1`, as delivered by the simulator.
pub fn net_current(conn: &Connectivity, weights: &[f64], input: &InputRaster, liquid: &Raster) -> CurrentStats {
    let n_liq = conn.n_liquid;
    let by_step = liquid.by_step();
    let duration = liquid.duration.min(input.duration());
    let mut current = vec![0.0f64; n_liq];
    let (mut sum, mut sum_sq) = (0.0f64, 0.0f64);
    for t in 0..duration {
        current.iter_mut().for_each(|c| *c = 0.0);
        let liquid_prev = if t > 0 { by_step[t - 1].as_slice() } else { &[] };
        let sources = input.steps[t].iter().map(|&s| s as usize).chain(liquid_prev.iter().map(|&n| conn.n_input + n as usize));
        for s in sources {
            let (edges, posts) = conn.outgoing(s);
            for (&e, &p) in edges.iter().zip(posts) {
                current[p as usize] += weights[e as usize];
            }
        }
        sum += current.iter().sum::<f64>();
        sum_sq += current.iter().map(|c| c * c).sum::<f64>();
    }
    let n = (duration * n_liq) as u64;
    if n == 0 {
        return CurrentStats::default();
    }
    let mean = sum / n as f64;
    let var = if n > 1 { ((sum_sq - n as f64 * mean * mean) / (n - 1) as f64).max(0.0) } else { 0.0 };
    CurrentStats { mean, std: var.sqrt(), n }
}

/// `A(tau) = 1/(N T) sum_i sum_t s_i(t + tau) s_i(t)` for `tau` in
/// `0..=max_lag`, with the trains zero beyond their end.
pub fn spike_autocorrelation(raster: &Raster, max_lag: usize) -> Vec<f64> {
    let t_len = raster.duration;
    let n = raster.n_neurons;
    let mut trains = vec![Vec::new(); n];
    for &(t, i) in &raster.events {
        trains[i as usize].push(t as usize);
    }
    let mut out = vec![0.0; max_lag + 1];
    if t_len == 0 || n == 0 {
        return out;
    }
    let mut flags = vec![false; t_len];
    for train in &trains {
        for &t in train {
            flags[t] = true;
        }
        for &t in train {
            for (lag, o) in out.iter_mut().enumerate() {
                if t + lag < t_len && flags[t + lag] {
                    *o += 1.0;
                }
            }
        }
        for &t in train {
            flags[t] = false;
        }
    }
    let norm = (n * t_len) as f64;
    out.iter_mut().for_each(|o| *o /= norm);
    out
}
