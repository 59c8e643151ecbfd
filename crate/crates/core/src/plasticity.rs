//! Trace-based STDP on IL and LL edges, and the activity-gated variant
//! used by the AP-STDP baseline.
//!
//! Within one step the order is fixed: traces decay, weights change using
//! the decayed traces (so a pre and post spike in the same step do not pair
//! with each other), then the traces of this step's spikes are bumped.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::dynamics::{Connectivity, DT};
use crate::error::{Error, Result};
use crate::seed;
use crate::topology::Weights;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StdpParams {
    /// Trace increment per presynaptic spike.
    pub a_pre: f64,
    /// Trace increment per postsynaptic spike.
    pub a_post: f64,
    pub tau_pre: f64,
    pub tau_post: f64,
    /// Potentiation rate `A+`.
    pub a_plus: f64,
    /// Depression rate `A-`; replaced by the astrocyte output when one is
    /// attached.
    pub a_minus: f64,
}

impl Default for StdpParams {
    fn default() -> Self {
        StdpParams { a_pre: 0.1, a_post: 0.1, tau_pre: 10.0, tau_post: 10.0, a_plus: 0.15, a_minus: 0.15 }
    }
}

impl StdpParams {
    pub fn validate(&self) -> Result<()> {
        let all = [self.a_pre, self.a_post, self.tau_pre, self.tau_post, self.a_plus, self.a_minus];
        if all.iter().all(|&x| x > 0.0 && x.is_finite()) {
            Ok(())
        } else {
            Err(Error::Config(format!("STDP parameters must be positive: {self:?}")))
        }
    }
}

/// Activity band for gated STDP. Rates are leaky spike counts with
/// time constant `tau_c`, which makes `c_theta` read roughly in Hz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ApStdpParams {
    pub c_theta: f64,
    pub delta_c: f64,
    pub p: f64,
    pub tau_c: f64,
}

impl Default for ApStdpParams {
    fn default() -> Self {
        ApStdpParams { c_theta: 40.0, delta_c: 30.0, p: 1.0, tau_c: 1000.0 }
    }
}

impl ApStdpParams {
    pub fn validate(&self) -> Result<()> {
        if self.delta_c < 0.0 || !(0.0..=1.0).contains(&self.p) || !(self.tau_c > 0.0) {
            return Err(Error::Config(format!("invalid AP-STDP parameters {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlasticityState {
    /// One trace per source unit (inputs, then liquid neurons).
    pub t_pre: Vec<f64>,
    /// One trace per liquid neuron.
    pub t_post: Vec<f64>,
    /// Leaky spike-count estimate per liquid neuron.
    pub rate_est: Vec<f64>,
    pre_decay: f64,
    post_decay: f64,
}

impl PlasticityState {
    pub fn new(n_sources: usize, n_liquid: usize, params: &StdpParams) -> Self {
        PlasticityState {
            t_pre: vec![0.0; n_sources],
            t_post: vec![0.0; n_liquid],
            rate_est: vec![0.0; n_liquid],
            pre_decay: (-DT / params.tau_pre).exp(),
            post_decay: (-DT / params.tau_post).exp(),
        }
    }

    pub fn reset(&mut self) {
        self.t_pre.fill(0.0);
        self.t_post.fill(0.0);
        self.rate_est.fill(0.0);
    }

    pub fn decay_traces(&mut self) {
        let (dp, dq) = (self.pre_decay, self.post_decay);
        self.t_pre.iter_mut().for_each(|t| *t *= dp);
        self.t_post.iter_mut().for_each(|t| *t *= dq);
    }

    /// `pre_spikes` are source units, `post_spikes` liquid neurons.
    pub fn bump_traces(&mut self, params: &StdpParams, pre_spikes: &[u32], post_spikes: &[u32]) {
        for &s in pre_spikes {
            self.t_pre[s as usize] += params.a_pre;
        }
        for &n in post_spikes {
            self.t_post[n as usize] += params.a_post;
        }
    }
}

/// Decay every trace by one step, then add the spike increments.
pub fn decay_and_bump_traces(
    state: &mut PlasticityState,
    params: &StdpParams,
    pre_spikes: &[u32],
    post_spikes: &[u32],
) {
    state.decay_traces();
    state.bump_traces(params, pre_spikes, post_spikes);
}

/// Optional per-edge veto applied before each weight change.
pub trait Gate {
    fn allow(&mut self, post: usize, rate_est: &[f64]) -> bool;
}

/// Every update applies.
pub struct Open;

impl Gate for Open {
    #[inline]
    fn allow(&mut self, _post: usize, _rate_est: &[f64]) -> bool {
        true
    }
}

/// AP-STDP band gate on the postsynaptic rate estimate.
pub struct BandGate<'a> {
    pub params: ApStdpParams,
    pub rng: &'a mut seed::Rng,
}

impl Gate for BandGate<'_> {
    #[inline]
    fn allow(&mut self, post: usize, rate_est: &[f64]) -> bool {
        apstdp_gate(rate_est[post], &self.params, self.rng)
    }
}

/// Pair-based update in discrete form: each post spike adds `a_plus * T_pre(pre)` to
/// its incoming edges, each pre spike subtracts `a_minus * T_post(post)` from
/// its outgoing edges, with every write clamped to the edge's bounds.
#[allow(clippy::too_many_arguments)]
pub fn apply_stdp<G: Gate>(
    conn: &Connectivity,
    weights: &mut Weights,
    traces: &PlasticityState,
    pre_spikes: &[u32],
    post_spikes: &[u32],
    a_plus: f64,
    a_minus: f64,
    gate: &mut G,
) {
    if a_plus != 0.0 {
        for &post in post_spikes {
            let post = post as usize;
            let (edges, pres) = conn.incoming(post);
            for (&e, &pre) in edges.iter().zip(pres) {
                let t = traces.t_pre[pre as usize];
                if t != 0.0 && gate.allow(post, &traces.rate_est) {
                    weights.add_clamped(e as usize, a_plus * t);
                }
            }
        }
    }
    if a_minus != 0.0 {
        for &pre in pre_spikes {
            let (edges, posts) = conn.outgoing(pre as usize);
            for (&e, &post) in edges.iter().zip(posts) {
                let t = traces.t_post[post as usize];
                if t != 0.0 && gate.allow(post as usize, &traces.rate_est) {
                    weights.add_clamped(e as usize, -a_minus * t);
                }
            }
        }
    }
}

/// Leaky spike count: `C <- C exp(-dt / tau_c) + spikes`.
pub fn update_rate_estimates(state: &mut PlasticityState, spikes: &[u32], tau_c: f64) {
    let decay = (-DT / tau_c).exp();
    state.rate_est.iter_mut().for_each(|c| *c *= decay);
    for &n in spikes {
        state.rate_est[n as usize] += 1.0;
    }
}

/// True when `rate` lies in `[c_theta - delta_c, c_theta + delta_c]` and a
/// Bernoulli(`p`) draw succeeds. No draw is taken when `p` is 0 or 1.
pub fn apstdp_gate(rate: f64, params: &ApStdpParams, rng: &mut seed::Rng) -> bool {
    if (rate - params.c_theta).abs() > params.delta_c {
        return false;
    }
    if params.p >= 1.0 {
        true
    } else if params.p <= 0.0 {
        false
    } else {
        rng.random::<f64>() < params.p
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{Edge, LiquidGraph, NeuronMeta};

    /// One input unit feeding one liquid neuron, plus an E->E pair.
    fn pair_graph() -> LiquidGraph {
        let neurons = (0..2)
            .map(|i| NeuronMeta { index: i, coord: [0, 0, i], is_excitatory: true })
            .collect();
        LiquidGraph {
            neurons,
            dims: [1, 1, 2],
            n_input: 1,
            il_edges: vec![Edge { pre: 0, post: 0, sign: 1 }],
            ll_edges: vec![Edge { pre: 0, post: 1, sign: 1 }],
            clamp: Default::default(),
        }
    }

    /// Runs a spike schedule on the LL edge (liquid 0 -> liquid 1).
    fn run_pair(pre_times: &[usize], post_times: &[usize], w0: f64) -> f64 {
        let g = pair_graph();
        let conn = Connectivity::new(&g);
        let params = StdpParams::default();
        let mut w = Weights::from_values(&g, vec![1.0, w0]).unwrap();
        let mut st = PlasticityState::new(conn.n_sources(), 2, &params);
        let end = pre_times.iter().chain(post_times).max().unwrap() + 1;
        for t in 0..end {
            let pre: Vec<u32> = if pre_times.contains(&t) { vec![1] } else { vec![] };
            let post: Vec<u32> = if post_times.contains(&t) { vec![1] } else { vec![] };
            st.decay_traces();
            apply_stdp(&conn, &mut w, &st, &pre, &post, params.a_plus, params.a_minus, &mut Open);
            st.bump_traces(&params, &pre, &post);
        }
        w.get(1)
    }

    #[test]
    fn trace_closed_forms() {
        let p = StdpParams::default();
        let mut st = PlasticityState::new(1, 1, &p);
        st.t_pre[0] = 0.1;
        decay_and_bump_traces(&mut st, &p, &[], &[]);
        assert!((st.t_pre[0] - 0.1 * (-0.1f64).exp()).abs() < 1e-12);
        assert!((st.t_pre[0] - 0.09048).abs() < 1e-5);

        let mut st = PlasticityState::new(1, 1, &p);
        decay_and_bump_traces(&mut st, &p, &[0], &[0]);
        assert_eq!(st.t_pre[0], 0.1);
        assert_eq!(st.t_post[0], 0.1);

        let mut st = PlasticityState::new(1, 1, &p);
        decay_and_bump_traces(&mut st, &p, &[0], &[]);
        for _ in 0..9 {
            decay_and_bump_traces(&mut st, &p, &[], &[]);
        }
        decay_and_bump_traces(&mut st, &p, &[0], &[]);
        let expected = 0.1 * (-1.0f64).exp() + 0.1;
        assert!((st.t_pre[0] - expected).abs() < 1e-12);
        assert!((st.t_pre[0] - 0.13679).abs() < 1e-5);
    }

    #[test]
    fn pair_potentiation_and_depression() {
        let expected = 0.15 * 0.1 * (-0.5f64).exp();
        let ltp = run_pair(&[0], &[5], 1.0) - 1.0;
        assert!((ltp - expected).abs() < 1e-12, "{ltp}");
        assert!((ltp - 0.009098).abs() < 1e-6);
        let ltd = run_pair(&[5], &[0], 1.0) - 1.0;
        assert!((ltd + expected).abs() < 1e-12, "{ltd}");
    }

    #[test]
    fn same_step_pair_does_not_interact() {
        assert_eq!(run_pair(&[3], &[3], 1.0), 1.0);
    }

    #[test]
    fn saturated_excitatory_weight_stays_at_bound() {
        assert_eq!(run_pair(&[0], &[5], 3.0), 3.0);
        assert_eq!(run_pair(&[5], &[0], 0.0), 0.0);
    }

    #[test]
    fn input_units_carry_pre_traces() {
        let g = pair_graph();
        let conn = Connectivity::new(&g);
        let params = StdpParams::default();
        let mut w = Weights::from_values(&g, vec![1.0, 1.0]).unwrap();
        let mut st = PlasticityState::new(conn.n_sources(), 2, &params);
        st.bump_traces(&params, &[0], &[]);
        st.decay_traces();
        apply_stdp(&conn, &mut w, &st, &[], &[0], params.a_plus, params.a_minus, &mut Open);
        assert!((w.get(0) - (1.0 + 0.15 * 0.1 * (-0.1f64).exp())).abs() < 1e-12);
        assert_eq!(w.get(1), 1.0);
    }

    #[test]
    fn rate_estimator() {
        let p = StdpParams::default();
        let mut st = PlasticityState::new(1, 1, &p);
        st.rate_est[0] = 1.0;
        update_rate_estimates(&mut st, &[], 1000.0);
        assert!((st.rate_est[0] - (-0.001f64).exp()).abs() < 1e-15);

        let mut st = PlasticityState::new(1, 1, &p);
        for _ in 0..1000 {
            update_rate_estimates(&mut st, &[], 1000.0);
        }
        assert_eq!(st.rate_est[0], 0.0);

        // One spike every 4 ms; the value just after a spike tends to the
        // geometric-series limit 1 / (1 - q^4) with q = exp(-1/1000).
        let mut st = PlasticityState::new(1, 1, &p);
        for t in 0..40_000 {
            let spikes: &[u32] = if t % 4 == 3 { &[0] } else { &[] };
            update_rate_estimates(&mut st, spikes, 1000.0);
        }
        let q = (-0.001f64).exp();
        let limit = 1.0 / (1.0 - q.powi(4));
        assert!((st.rate_est[0] - limit).abs() / limit < 1e-9, "{} vs {limit}", st.rate_est[0]);
        assert!((limit - 250.5).abs() < 0.1);
    }

    #[test]
    fn gate_band() {
        let params = ApStdpParams { c_theta: 20.0, delta_c: 5.0, p: 1.0, tau_c: 1000.0 };
        let mut rng = seed::rng(0, 0);
        assert!(apstdp_gate(20.0, &params, &mut rng));
        assert!(apstdp_gate(25.0, &params, &mut rng));
        assert!(!apstdp_gate(30.0, &params, &mut rng));
        assert!(!apstdp_gate(14.9, &params, &mut rng));
        let closed = ApStdpParams { p: 0.0, ..params };
        assert!((0..100).all(|_| !apstdp_gate(20.0, &closed, &mut rng)));
        let half = ApStdpParams { p: 0.5, ..params };
        let hits = (0..10_000).filter(|_| apstdp_gate(20.0, &half, &mut rng)).count();
        assert!((hits as f64 - 5000.0).abs() < 4.0 * 50.0);
    }

    #[test]
    fn gated_updates_are_skipped() {
        let g = pair_graph();
        let conn = Connectivity::new(&g);
        let params = StdpParams::default();
        let mut w = Weights::from_values(&g, vec![1.0, 1.0]).unwrap();
        let mut st = PlasticityState::new(conn.n_sources(), 2, &params);
        st.t_pre.fill(0.1);
        st.t_post.fill(0.1);
        st.rate_est = vec![100.0, 100.0];
        let mut rng = seed::rng(0, 0);
        let mut gate = BandGate {
            params: ApStdpParams { c_theta: 10.0, delta_c: 5.0, p: 1.0, tau_c: 1000.0 },
            rng: &mut rng,
        };
        apply_stdp(&conn, &mut w, &st, &[1], &[1], 0.15, 0.15, &mut gate);
        assert_eq!(w.as_slice(), &[1.0, 1.0]);
    }
}
