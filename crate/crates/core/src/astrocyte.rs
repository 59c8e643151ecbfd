//! Leaky-integrate-and-modulate astrocyte.
//!
//! A single unit integrates the difference between liquid and input spike
//! counts over its sampled neurons and emits the STDP depression rate:
//!
//! ```text
//! tau_astro dA/dt = -A + w_astro (sum of liquid spikes - sum of input spikes) + b_astro
//! ```
//!
//! Spikes are impulses, so one step of forward Euler adds
//! `w_astro * (n_liq - n_inp) / tau_astro` and relaxes `A` toward `b_astro`
//! by a fraction `dt / tau_astro`. The output is floored at zero.

use std::io::Write;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::dynamics::DT;
use crate::error::{Error, Result};
use crate::seed::{self, stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AstrocyteParams {
    pub tau_astro: f64,
    pub w_astro: f64,
    /// Initial bias; tracks the potentiation rate.
    pub b_astro: f64,
    /// Fraction of input and liquid neurons the astrocyte listens to.
    pub density: f64,
    /// Per-ms multiplicative decay of `A+` and `b_astro` while a sample is
    /// presented during spike counting.
    pub decay_rate: f64,
}

impl Default for AstrocyteParams {
    fn default() -> Self {
        AstrocyteParams { tau_astro: 100.0, w_astro: 0.01, b_astro: 0.15, density: 1.0, decay_rate: 0.99 }
    }
}

impl AstrocyteParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau_astro > 0.0)
            || !(self.w_astro >= 0.0)
            || !(self.density > 0.0 && self.density <= 1.0)
            || !(self.decay_rate > 0.0 && self.decay_rate <= 1.0)
        {
            return Err(Error::Config(format!("invalid astrocyte parameters {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AstrocyteState {
    pub a_minus: f64,
    /// Current bias; equal to `params.b_astro` except while decaying.
    pub b_astro: f64,
    pub sampled_liquid: Vec<bool>,
    pub sampled_input: Vec<bool>,
}

impl AstrocyteState {
    /// Draws the sampled subsets once for this liquid and seed. The same
    /// fraction is taken from the input and the liquid populations.
    pub fn new(params: &AstrocyteParams, n_liquid: usize, n_input: usize, seed: u64) -> Self {
        let mut rng = seed::rng(seed, stream::ASTRO_SAMPLING);
        let mut mask = |n: usize| {
            let k = ((params.density * n as f64).round() as usize).clamp(usize::from(n > 0), n);
            let mut m = vec![false; n];
            for i in index::sample(&mut rng, n, k) {
                m[i] = true;
            }
            m
        };
        let sampled_liquid = mask(n_liquid);
        let sampled_input = mask(n_input);
        AstrocyteState { a_minus: params.b_astro, b_astro: params.b_astro, sampled_liquid, sampled_input }
    }

    pub fn reset(&mut self, params: &AstrocyteParams) {
        self.a_minus = params.b_astro;
        self.b_astro = params.b_astro;
    }

    /// Counts spikes of sampled liquid neurons.
    pub fn count_liquid(&self, spikes: &[u32]) -> usize {
        spikes.iter().filter(|&&n| self.sampled_liquid[n as usize]).count()
    }

    /// Counts spikes of sampled input units.
    pub fn count_input(&self, spikes: &[u32]) -> usize {
        spikes.iter().filter(|&&n| self.sampled_input[n as usize]).count()
    }
}

/// One forward-Euler step; returns the new `A-`.
pub fn astro_step(
    state: &mut AstrocyteState,
    params: &AstrocyteParams,
    n_liquid_spikes: usize,
    n_input_spikes: usize,
) -> f64 {
    let drive = params.w_astro * (n_liquid_spikes as f64 - n_input_spikes as f64);
    let a = state.a_minus + DT / params.tau_astro * (state.b_astro - state.a_minus) + drive / params.tau_astro;
    state.a_minus = a.max(0.0);
    state.a_minus
}

/// Liquid-to-input spike ratio; `None` when there was no input.
pub fn bf_proxy(n_liquid_spikes: usize, n_input_spikes: usize) -> Option<f64> {
    if n_input_spikes == 0 {
        None
    } else {
        Some(n_liquid_spikes as f64 / n_input_spikes as f64)
    }
}

/// `A+` and `b_astro` during per-sample spike counting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Modulation {
    pub a_plus: f64,
    pub b_astro: f64,
}

impl Modulation {
    pub fn new(initial: f64) -> Self {
        Modulation { a_plus: initial, b_astro: initial }
    }
}

/// Multiplies both rates by `rate` once per ms.
pub fn decay_modulation(m: &mut Modulation, rate: f64) {
    m.a_plus *= rate;
    m.b_astro *= rate;
}

/// Accumulates spike counts over fixed windows for the BF proxy log.
#[derive(Debug, Clone, Default)]
pub struct ProxyWindow {
    pub liquid: usize,
    pub input: usize,
}

impl ProxyWindow {
    pub fn add(&mut self, liquid: usize, input: usize) {
        self.liquid += liquid;
        self.input += input;
    }

    pub fn take(&mut self) -> Option<f64> {
        let r = bf_proxy(self.liquid, self.input);
        *self = ProxyWindow::default();
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub time_ms: u64,
    pub a_minus: f64,
    pub bf_proxy: Option<f64>,
}

pub fn write_trace_csv<W: Write>(rows: &[TraceRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["time_ms", "a_minus", "bf_proxy"])?;
    for r in rows {
        let bf = r.bf_proxy.map(|b| b.to_string()).unwrap_or_default();
        w.write_record(&[r.time_ms.to_string(), r.a_minus.to_string(), bf])?;
    }
    w.flush()?;
    Ok(())
}
