//! Discrete-time LIF liquid on a 1 ms grid.
//!
//! Per step: presynaptic spikes add `w / tau_u` to their target's synaptic
//! current `u`; the membrane integrates `dv = -v / tau_v + u + b` with one
//! forward-Euler step; `u` then decays by `exp(-dt / tau_u)`. A neuron at or
//! above threshold spikes and is reset to zero. A neuron that spiked at step
//! `t` is held at rest on steps `t + 1 .. t + refractory - 1`, so spikes are
//! never closer than `refractory` ms.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::topology::{LiquidGraph, Weights};

/// Simulation resolution in ms. Every time constant in the crate is in ms.
pub const DT: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LifParams {
    pub theta: f64,
    pub tau_v: f64,
    pub tau_u: f64,
    pub bias: f64,
    pub refractory: u32,
}

impl Default for LifParams {
    fn default() -> Self {
        LifParams { theta: 20.0, tau_v: 64.0, tau_u: 1.0, bias: 0.0, refractory: 2 }
    }
}

impl LifParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.tau_v > 0.0 && self.tau_u > 0.0) {
            return Err(Error::Config(format!("invalid LIF parameters {self:?}")));
        }
        Ok(())
    }

    pub fn u_decay(&self) -> f64 {
        (-DT / self.tau_u).exp()
    }
}

/// Compressed adjacency over "source units": input units `0..n_input`
/// followed by liquid neurons `n_input..n_input + n_liquid`.
#[derive(Debug, Clone)]
pub struct Connectivity {
    pub n_input: usize,
    pub n_liquid: usize,
    out_offsets: Vec<usize>,
    out_edges: Vec<u32>,
    out_post: Vec<u32>,
    in_offsets: Vec<usize>,
    in_edges: Vec<u32>,
    in_pre: Vec<u32>,
}

impl Connectivity {
    pub fn new(graph: &LiquidGraph) -> Self {
        let n_input = graph.n_input;
        let n_liquid = graph.n_liquid();
        let n_src = n_input + n_liquid;
        let n_il = graph.il_edges.len();
        let src_of = |id: usize| -> usize {
            if id < n_il {
                graph.il_edges[id].pre as usize
            } else {
                n_input + graph.ll_edges[id - n_il].pre as usize
            }
        };
        let post_of = |id: usize| -> usize {
            if id < n_il {
                graph.il_edges[id].post as usize
            } else {
                graph.ll_edges[id - n_il].post as usize
            }
        };
        let n_edges = graph.n_edges();

        let mut out_offsets = vec![0usize; n_src + 1];
        let mut in_offsets = vec![0usize; n_liquid + 1];
        for id in 0..n_edges {
            out_offsets[src_of(id) + 1] += 1;
            in_offsets[post_of(id) + 1] += 1;
        }
        for i in 0..n_src {
            out_offsets[i + 1] += out_offsets[i];
        }
        for i in 0..n_liquid {
            in_offsets[i + 1] += in_offsets[i];
        }
        let mut out_edges = vec![0u32; n_edges];
        let mut out_post = vec![0u32; n_edges];
        let mut in_edges = vec![0u32; n_edges];
        let mut in_pre = vec![0u32; n_edges];
        let mut out_fill = out_offsets.clone();
        let mut in_fill = in_offsets.clone();
        for id in 0..n_edges {
            let (s, p) = (src_of(id), post_of(id));
            out_edges[out_fill[s]] = id as u32;
            out_post[out_fill[s]] = p as u32;
            out_fill[s] += 1;
            in_edges[in_fill[p]] = id as u32;
            in_pre[in_fill[p]] = s as u32;
            in_fill[p] += 1;
        }
        Connectivity {
            n_input,
            n_liquid,
            out_offsets,
            out_edges,
            out_post,
            in_offsets,
            in_edges,
            in_pre,
        }
    }

    pub fn n_sources(&self) -> usize {
        self.n_input + self.n_liquid
    }

    /// `(edge ids, liquid targets)` leaving a source unit.
    #[inline]
    pub fn outgoing(&self, src: usize) -> (&[u32], &[u32]) {
        let r = self.out_offsets[src]..self.out_offsets[src + 1];
        (&self.out_edges[r.clone()], &self.out_post[r])
    }

    /// `(edge ids, source units)` entering a liquid neuron.
    #[inline]
    pub fn incoming(&self, post: usize) -> (&[u32], &[u32]) {
        let r = self.in_offsets[post]..self.in_offsets[post + 1];
        (&self.in_edges[r.clone()], &self.in_pre[r])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub v: Vec<f64>,
    pub u: Vec<f64>,
    pub refrac_left: Vec<u32>,
    pub spiked: Vec<bool>,
}

impl SimState {
    pub fn new(n_liquid: usize) -> Self {
        SimState {
            v: vec![0.0; n_liquid],
            u: vec![0.0; n_liquid],
            refrac_left: vec![0; n_liquid],
            spiked: vec![false; n_liquid],
        }
    }

    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }

    pub fn reset(&mut self) {
        self.v.fill(0.0);
        self.u.fill(0.0);
        self.refrac_left.fill(0);
        self.spiked.fill(false);
    }
}

/// Adds `w / tau_u` to the filtered current of every target of every
/// spiking source unit.
pub fn inject_spikes(
    state: &mut SimState,
    conn: &Connectivity,
    weights: &Weights,
    params: &LifParams,
    presynaptic: &[u32],
) -> Result<()> {
    let gain = 1.0 / params.tau_u;
    let w = weights.as_slice();
    for &src in presynaptic {
        let src = src as usize;
        if src >= conn.n_sources() {
            return Err(Error::Structure(format!("source unit {src} out of range")));
        }
        let (edges, posts) = conn.outgoing(src);
        for (&e, &p) in edges.iter().zip(posts) {
            state.u[p as usize] += w[e as usize] * gain;
        }
    }
    Ok(())
}

/// Advances the liquid by one `DT` and appends the indices of spiking
/// neurons to `spikes` (cleared first).
pub fn step(state: &mut SimState, params: &LifParams, spikes: &mut Vec<u32>) -> Result<()> {
    spikes.clear();
    let leak = DT / params.tau_v;
    let u_decay = params.u_decay();
    for i in 0..state.v.len() {
        state.spiked[i] = false;
        let u = state.u[i];
        state.u[i] = u * u_decay;
        if state.refrac_left[i] > 0 {
            state.refrac_left[i] -= 1;
            if state.refrac_left[i] > 0 {
                state.v[i] = 0.0;
                continue;
            }
        }
        let v = state.v[i] * (1.0 - leak) + DT * (u + params.bias);
        if !v.is_finite() {
            return Err(Error::Divergence(format!("membrane potential of neuron {i} is {v}")));
        }
        if v >= params.theta {
            state.v[i] = 0.0;
            state.spiked[i] = true;
            state.refrac_left[i] = params.refractory;
            spikes.push(i as u32);
        } else {
            state.v[i] = v;
        }
    }
    Ok(())
}

/// Spike raster as `(time, neuron)` pairs, time in ms.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Raster {
    pub n_neurons: usize,
    pub duration: usize,
    pub events: Vec<(u32, u32)>,
}

impl Raster {
    pub fn new(n_neurons: usize) -> Self {
        Raster { n_neurons, duration: 0, events: Vec::new() }
    }

    pub fn push_step(&mut self, spikes: &[u32]) {
        let t = self.duration as u32;
        self.events.extend(spikes.iter().map(|&n| (t, n)));
        self.duration += 1;
    }

    pub fn n_spikes(&self) -> usize {
        self.events.len()
    }

    /// Per-step spike lists.
    pub fn by_step(&self) -> Vec<Vec<u32>> {
        let mut steps = vec![Vec::new(); self.duration];
        for &(t, n) in &self.events {
            steps[t as usize].push(n);
        }
        steps
    }

    pub fn counts(&self) -> Vec<u32> {
        let mut c = vec![0u32; self.n_neurons];
        for &(_, n) in &self.events {
            c[n as usize] += 1;
        }
        c
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["time_ms", "neuron"])?;
        for &(t, n) in &self.events {
            w.write_record(&[t.to_string(), n.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}
