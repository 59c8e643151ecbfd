//! Per-millisecond tick combining the liquid, the plasticity rule and the
//! astrocyte.
//!
//! Order within step `t`: spikes of inputs at `t` and of liquid neurons at
//! `t - 1` are delivered, the LIF update produces this step's liquid spikes,
//! the astrocyte integrates the step's counts, and STDP runs on the spikes
//! emitted at `t`: input and liquid units as presynaptic events, liquid
//! neurons as postsynaptic events.

use crate::astrocyte::{astro_step, decay_modulation, AstrocyteParams, AstrocyteState, Modulation};
use crate::data::InputRaster;
use crate::dynamics::{inject_spikes, step, Connectivity, LifParams, Raster, SimState};
use crate::error::Result;
use crate::plasticity::{
    apply_stdp, update_rate_estimates, ApStdpParams, BandGate, Open, PlasticityState, StdpParams,
};
use crate::seed;
use crate::topology::Weights;

/// Learning rule active during a run.
#[derive(Debug, Clone)]
pub enum Rule {
    Frozen,
    Stdp(StdpParams),
    ApStdp { stdp: StdpParams, gate: ApStdpParams, rng: seed::Rng },
    /// Astrocyte-modulated STDP. With `modulation` set, `A+` and the
    /// astrocyte bias decay every step, as during per-sample counting.
    Astro { stdp: StdpParams, params: AstrocyteParams, state: AstrocyteState, modulation: Option<Modulation> },
}

impl Rule {
    pub fn is_plastic(&self) -> bool {
        !matches!(self, Rule::Frozen)
    }

    pub fn a_minus(&self) -> Option<f64> {
        match self {
            Rule::Frozen => None,
            Rule::Stdp(p) | Rule::ApStdp { stdp: p, .. } => Some(p.a_minus),
            Rule::Astro { state, .. } => Some(state.a_minus),
        }
    }

    /// Restores the per-sample starting state of the astrocyte.
    pub fn reset(&mut self) {
        if let Rule::Astro { params, state, modulation, .. } = self {
            state.reset(params);
            if let Some(m) = modulation {
                *m = Modulation::new(params.b_astro);
                state.b_astro = m.b_astro;
            }
        }
    }
}

/// Spike totals of one step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepCounts {
    pub liquid: usize,
    pub input: usize,
}

pub struct Engine<'a> {
    pub conn: &'a Connectivity,
    pub lif: LifParams,
    pub sim: SimState,
    pub traces: PlasticityState,
    spikes: Vec<u32>,
    /// Liquid spikes of the previous step, as source units.
    pending: Vec<u32>,
    delivered: Vec<u32>,
    emitted: Vec<u32>,
}

impl<'a> Engine<'a> {
    pub fn new(conn: &'a Connectivity, lif: LifParams, stdp: &StdpParams) -> Self {
        Engine {
            conn,
            lif,
            sim: SimState::new(conn.n_liquid),
            traces: PlasticityState::new(conn.n_sources(), conn.n_liquid, stdp),
            spikes: Vec::new(),
            pending: Vec::new(),
            delivered: Vec::new(),
            emitted: Vec::new(),
        }
    }

    /// Clears neuron state, traces and in-flight spikes.
    pub fn reset(&mut self) {
        self.sim.reset();
        self.traces.reset();
        self.pending.clear();
    }

    /// Liquid spikes of the last step.
    pub fn spikes(&self) -> &[u32] {
        &self.spikes
    }

    /// One 1 ms step. `input` holds active input channels, sorted.
    pub fn tick(&mut self, weights: &mut Weights, input: &[u32], rule: &mut Rule) -> Result<StepCounts> {
        self.delivered.clear();
        self.delivered.extend_from_slice(input);
        self.delivered.extend_from_slice(&self.pending);
        inject_spikes(&mut self.sim, self.conn, weights, &self.lif, &self.delivered)?;
        step(&mut self.sim, &self.lif, &mut self.spikes)?;

        let counts = StepCounts { liquid: self.spikes.len(), input: input.len() };
        let n_input = self.conn.n_input as u32;
        self.pending.clear();
        self.pending.extend(self.spikes.iter().map(|&n| n + n_input));
        self.emitted.clear();
        self.emitted.extend_from_slice(input);
        self.emitted.extend_from_slice(&self.pending);
        let (pre, post) = (&self.emitted, &self.spikes);
        match rule {
            Rule::Frozen => {}
            Rule::Stdp(p) => {
                self.traces.decay_traces();
                apply_stdp(self.conn, weights, &self.traces, pre, post, p.a_plus, p.a_minus, &mut Open);
                self.traces.bump_traces(p, pre, post);
            }
            Rule::ApStdp { stdp, gate, rng } => {
                update_rate_estimates(&mut self.traces, post, gate.tau_c);
                self.traces.decay_traces();
                let mut g = BandGate { params: *gate, rng };
                apply_stdp(self.conn, weights, &self.traces, pre, post, stdp.a_plus, stdp.a_minus, &mut g);
                self.traces.bump_traces(stdp, pre, post);
            }
            Rule::Astro { stdp, params, state, modulation } => {
                let n_liq = state.count_liquid(post);
                let n_inp = state.count_input(input);
                let a_plus = match modulation {
                    Some(m) => {
                        state.b_astro = m.b_astro;
                        m.a_plus
                    }
                    None => stdp.a_plus,
                };
                let a_minus = astro_step(state, params, n_liq, n_inp);
                self.traces.decay_traces();
                apply_stdp(self.conn, weights, &self.traces, pre, post, a_plus, a_minus, &mut Open);
                self.traces.bump_traces(stdp, pre, post);
                if let Some(m) = modulation {
                    decay_modulation(m, params.decay_rate);
                }
            }
        }
        Ok(counts)
    }

    /// Presents a whole raster; `on_step` sees each step's liquid spikes.
    pub fn run<F: FnMut(usize, &[u32], StepCounts)>(
        &mut self,
        weights: &mut Weights,
        input: &InputRaster,
        rule: &mut Rule,
        mut on_step: F,
    ) -> Result<()> {
        for (t, active) in input.steps.iter().enumerate() {
            let c = self.tick(weights, active, rule)?;
            on_step(t, &self.spikes, c);
        }
        Ok(())
    }

    /// Runs a frozen liquid and returns per-neuron spike counts.
    pub fn count(&mut self, weights: &mut Weights, input: &InputRaster, rule: &mut Rule) -> Result<Vec<u32>> {
        let mut counts = vec![0u32; self.conn.n_liquid];
        self.run(weights, input, rule, |_, spikes, _| {
            for &n in spikes {
                counts[n as usize] += 1;
            }
        })?;
        Ok(counts)
    }

    /// Runs and records the liquid raster.
    pub fn record(&mut self, weights: &mut Weights, input: &InputRaster, rule: &mut Rule) -> Result<Raster> {
        let mut raster = Raster::new(self.conn.n_liquid);
        self.run(weights, input, rule, |_, spikes, _| raster.push_step(spikes))?;
        Ok(raster)
    }
}
