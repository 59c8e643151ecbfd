//! Branching factor estimated from a spike raster and the wiring.
//!
//! For each liquid spike of neuron `i` at step `t`, every spike of a
//! postsynaptic target `j` at a step in `(t + phi, t + phi + delta]` is a
//! descendant. The credit is shared among all of `j`'s presynaptic units
//! that were delivered to `j` on the same step as `i`'s spike (liquid spikes
//! at `t`, and, optionally, input spikes at `t + 1`), so each descendant
//! contributes `1 / n` to each of its `n` co-ancestors. Ancestor spikes
//! whose window runs past the end of the raster are skipped.

use serde::{Deserialize, Serialize};

use crate::data::InputRaster;
use crate::dynamics::{Connectivity, Raster};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct BranchingConfig {
    pub delta: usize,
    pub phi: usize,
    /// Count active input units among the co-ancestors.
    pub include_input: bool,
}

impl Default for BranchingConfig {
    fn default() -> Self {
        BranchingConfig { delta: 4, phi: 0, include_input: true }
    }
}

/// Totals behind an estimate, so several rasters can be pooled.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BranchingTally {
    pub ancestors: usize,
    pub descendants: f64,
}

impl BranchingTally {
    pub fn merge(&mut self, other: BranchingTally) {
        self.ancestors += other.ancestors;
        self.descendants += other.descendants;
    }

    /// `None` when no ancestor spike was eligible.
    pub fn sigma(&self) -> Option<f64> {
        (self.ancestors > 0).then(|| self.descendants / self.ancestors as f64)
    }
}

/// Per-step spike flags for source units, built from the rasters.
fn source_activity(conn: &Connectivity, liquid: &Raster, input: Option<&InputRaster>) -> Vec<Vec<u32>> {
    let n_input = conn.n_input as u32;
    let mut steps = vec![Vec::new(); liquid.duration];
    if let Some(inp) = input {
        for (t, active) in inp.steps.iter().enumerate().take(liquid.duration) {
            steps[t].extend_from_slice(active);
        }
    }
    for &(t, n) in &liquid.events {
        steps[t as usize].push(n + n_input);
    }
    steps
}

pub fn branching_tally(
    conn: &Connectivity,
    liquid: &Raster,
    input: Option<&InputRaster>,
    cfg: &BranchingConfig,
) -> Result<BranchingTally> {
    if cfg.delta == 0 {
        return Err(Error::Config("branching window must be positive".into()));
    }
    let n_input = conn.n_input;
    let n_liq = conn.n_liquid;
    let duration = liquid.duration;
    let by_step = liquid.by_step();
    let mut fired = vec![vec![false; n_liq]; duration];
    for &(t, n) in &liquid.events {
        fired[t as usize][n as usize] = true;
    }
    let input = if cfg.include_input { input } else { None };
    let sources = source_activity(conn, liquid, input);

    // Delivered presynaptic units per target on each step, computed lazily.
    let mut delivered = vec![0u32; n_liq];
    let mut tally = BranchingTally::default();
    for t in 0..duration {
        let last = t + cfg.phi + cfg.delta;
        if last >= duration || by_step[t].is_empty() {
            continue;
        }
        // Co-ancestors delivered alongside liquid spikes of step t: liquid
        // units of step t and input units of step t + 1.
        delivered.iter_mut().for_each(|d| *d = 0);
        for &n in &by_step[t] {
            let (_, posts) = conn.outgoing(n_input + n as usize);
            for &p in posts {
                delivered[p as usize] += 1;
            }
        }
        if input.is_some() {
            for &s in sources[t + 1].iter().filter(|&&s| (s as usize) < n_input) {
                let (_, posts) = conn.outgoing(s as usize);
                for &p in posts {
                    delivered[p as usize] += 1;
                }
            }
        }
        for &n in &by_step[t] {
            tally.ancestors += 1;
            let (_, posts) = conn.outgoing(n_input + n as usize);
            for &j in posts {
                let j = j as usize;
                let hits = (t + cfg.phi + 1..=last).filter(|&s| fired[s][j]).count();
                if hits > 0 {
                    tally.descendants += hits as f64 / delivered[j] as f64;
                }
            }
        }
    }
    Ok(tally)
}

/// `None` for a silent raster.
pub fn branching_factor(
    conn: &Connectivity,
    liquid: &Raster,
    input: Option<&InputRaster>,
    cfg: &BranchingConfig,
) -> Result<Option<f64>> {
    Ok(branching_tally(conn, liquid, input, cfg)?.sigma())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    SubCritical,
    NearCritical,
    SuperCritical,
}

/// Classifies `sigma` with a tolerance band around 1.
pub fn classify(sigma: f64, tolerance: f64) -> Regime {
    if sigma < 1.0 - tolerance {
        Regime::SubCritical
    } else if sigma > 1.0 + tolerance {
        Regime::SuperCritical
    } else {
        Regime::NearCritical
    }
}
