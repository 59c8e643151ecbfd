//! Liquid architecture: neurons on a 3D lattice, distance-dependent
//! recurrent (LL) wiring and random input (IL) wiring.

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{self, stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeuronMeta {
    pub index: usize,
    pub coord: [usize; 3],
    pub is_excitatory: bool,
}

/// A directed synapse. `sign` is +1 or -1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "(u32, u32, i8)", into = "(u32, u32, i8)")]
pub struct Edge {
    pub pre: u32,
    pub post: u32,
    pub sign: i8,
}

impl From<(u32, u32, i8)> for Edge {
    fn from((pre, post, sign): (u32, u32, i8)) -> Self {
        Edge { pre, post, sign }
    }
}

impl From<Edge> for (u32, u32, i8) {
    fn from(e: Edge) -> Self {
        (e.pre, e.post, e.sign)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EdgeClass {
    /// Input to liquid.
    Input,
    /// Liquid to liquid from an excitatory neuron.
    Excitatory,
    /// Liquid to liquid from an inhibitory neuron.
    Inhibitory,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClampTable {
    pub input: [f64; 2],
    pub excitatory: [f64; 2],
    pub inhibitory: [f64; 2],
}

impl Default for ClampTable {
    fn default() -> Self {
        ClampTable {
            input: [-3.0, 3.0],
            excitatory: [0.0, 3.0],
            inhibitory: [-3.0, 0.0],
        }
    }
}

impl ClampTable {
    pub fn bounds(&self, class: EdgeClass) -> [f64; 2] {
        match class {
            EdgeClass::Input => self.input,
            EdgeClass::Excitatory => self.excitatory,
            EdgeClass::Inhibitory => self.inhibitory,
        }
    }
}

/// Amplitude `C` of the connection profile per (pre, post) E/I class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConnectionTable {
    pub ee: f64,
    pub ei: f64,
    pub ii: f64,
    pub ie: f64,
}

impl Default for ConnectionTable {
    fn default() -> Self {
        ConnectionTable { ee: 0.2, ei: 0.1, ii: 0.3, ie: 0.05 }
    }
}

impl ConnectionTable {
    pub fn amplitude(&self, pre_excitatory: bool, post_excitatory: bool) -> f64 {
        match (pre_excitatory, post_excitatory) {
            (true, true) => self.ee,
            (true, false) => self.ei,
            (false, false) => self.ii,
            (false, true) => self.ie,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TopologyConfig {
    pub n_liquid: usize,
    /// Lattice dimensions; derived from `n_liquid` when absent.
    pub dims: Option<[usize; 3]>,
    pub n_input: usize,
    pub il_density: f64,
    /// Probability that an IL edge is excitatory.
    pub il_excitatory_prob: f64,
    pub excitatory_fraction: f64,
    pub connection: ConnectionTable,
    pub lambda: f64,
    pub clamp: ClampTable,
}

impl Default for TopologyConfig {
    fn default() -> Self {
        TopologyConfig {
            n_liquid: 1000,
            dims: None,
            n_input: 784,
            il_density: 0.15,
            il_excitatory_prob: 0.5,
            excitatory_fraction: 0.8,
            connection: ConnectionTable::default(),
            lambda: 3.0,
            clamp: ClampTable::default(),
        }
    }
}

impl TopologyConfig {
    pub fn with_size(n_liquid: usize, n_input: usize) -> Self {
        TopologyConfig { n_liquid, n_input, ..Default::default() }
    }

    pub fn lattice(&self) -> [usize; 3] {
        self.dims.unwrap_or_else(|| lattice_dims(self.n_liquid))
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_liquid == 0 {
            return Err(Error::Config("n_liquid must be positive".into()));
        }
        if !(self.lambda > 0.0) {
            return Err(Error::Config(format!("lambda must be positive, got {}", self.lambda)));
        }
        for (name, p) in [
            ("il_density", self.il_density),
            ("il_excitatory_prob", self.il_excitatory_prob),
            ("excitatory_fraction", self.excitatory_fraction),
            ("C_ee", self.connection.ee),
            ("C_ei", self.connection.ei),
            ("C_ii", self.connection.ii),
            ("C_ie", self.connection.ie),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {p}")));
            }
        }
        Ok(())
    }
}

/// Lattice for `n` neurons: a cube when `n` is a perfect cube, otherwise the
/// exact factorisation `a <= b <= c` with the smallest spread as long as
/// `c <= 2a`, otherwise the smallest near-cubic box holding `n` sites.
pub fn lattice_dims(n: usize) -> [usize; 3] {
    let n = n.max(1);
    let mut best: Option<[usize; 3]> = None;
    let mut a = 1;
    while a * a * a <= n {
        if n % a == 0 {
            let rest = n / a;
            let mut b = a;
            while b * b <= rest {
                if rest % b == 0 {
                    let c = rest / b;
                    if c <= 2 * a && best.map_or(true, |d| c - a < d[2] - d[0]) {
                        best = Some([a, b, c]);
                    }
                }
                b += 1;
            }
        }
        a += 1;
    }
    if let Some(d) = best {
        return d;
    }
    let mut k = 1;
    while k * k * k < n {
        k += 1;
    }
    let mut dims = [k, k, k];
    for i in 0..2 {
        dims[i] -= 1;
        if dims.iter().product::<usize>() < n {
            dims[i] += 1;
            break;
        }
    }
    dims
}

/// Neurons on distinct lattice sites in row-major order with `round(0.8 n)`
/// excitatory labels scattered by a seeded shuffle.
pub fn place_neurons(
    n_liquid: usize,
    dims: [usize; 3],
    excitatory_fraction: f64,
    rng: &mut seed::Rng,
) -> Result<Vec<NeuronMeta>> {
    let sites: usize = dims.iter().product();
    if sites < n_liquid {
        return Err(Error::Structure(format!(
            "lattice {dims:?} has {sites} sites, fewer than {n_liquid} neurons"
        )));
    }
    let n_exc = excitatory_count(n_liquid, excitatory_fraction);
    let mut labels: Vec<bool> = (0..n_liquid).map(|i| i < n_exc).collect();
    labels.shuffle(rng);
    Ok(labels
        .into_iter()
        .enumerate()
        .map(|(index, is_excitatory)| NeuronMeta {
            index,
            coord: lattice_coord(index, dims),
            is_excitatory,
        })
        .collect())
}

/// Round-half-up of `fraction * n`.
pub fn excitatory_count(n: usize, fraction: f64) -> usize {
    ((fraction * n as f64) + 0.5).floor() as usize
}

pub fn lattice_coord(index: usize, dims: [usize; 3]) -> [usize; 3] {
    let plane = dims[1] * dims[2];
    [index / plane, (index / dims[2]) % dims[1], index % dims[2]]
}

pub fn distance(a: &NeuronMeta, b: &NeuronMeta) -> f64 {
    a.coord
        .iter()
        .zip(b.coord.iter())
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// `C * exp(-(D / lambda)^2)` with `D` the Euclidean lattice distance.
pub fn connection_probability(pre: &NeuronMeta, post: &NeuronMeta, c: f64, lambda: f64) -> f64 {
    let r = distance(pre, post) / lambda;
    c * (-r * r).exp()
}

/// Immutable network structure. Input units are indexed `0..n_input` in
/// `il_edges[*].pre`; liquid neurons are indexed `0..n_liquid` everywhere
/// else.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiquidGraph {
    pub neurons: Vec<NeuronMeta>,
    pub dims: [usize; 3],
    pub n_input: usize,
    pub il_edges: Vec<Edge>,
    pub ll_edges: Vec<Edge>,
    pub clamp: ClampTable,
}

impl LiquidGraph {
    pub fn n_liquid(&self) -> usize {
        self.neurons.len()
    }

    pub fn n_edges(&self) -> usize {
        self.il_edges.len() + self.ll_edges.len()
    }

    /// Edges are numbered IL first, then LL.
    pub fn edge(&self, id: usize) -> (EdgeClass, Edge) {
        if id < self.il_edges.len() {
            (EdgeClass::Input, self.il_edges[id])
        } else {
            let e = self.ll_edges[id - self.il_edges.len()];
            let class = if e.sign > 0 { EdgeClass::Excitatory } else { EdgeClass::Inhibitory };
            (class, e)
        }
    }

    pub fn edge_class(&self, id: usize) -> EdgeClass {
        self.edge(id).0
    }

    pub fn edge_bounds(&self, id: usize) -> [f64; 2] {
        self.clamp.bounds(self.edge_class(id))
    }

    pub fn n_excitatory(&self) -> usize {
        self.neurons.iter().filter(|n| n.is_excitatory).count()
    }

    /// Signs of every edge in edge-id order.
    pub fn signs(&self) -> impl Iterator<Item = i8> + '_ {
        self.il_edges.iter().chain(self.ll_edges.iter()).map(|e| e.sign)
    }

    /// Structural sanity checks; used after deserialisation.
    pub fn validate(&self) -> Result<()> {
        let n = self.n_liquid();
        if self.dims.iter().product::<usize>() < n {
            return Err(Error::Structure("lattice smaller than neuron count".into()));
        }
        for (i, m) in self.neurons.iter().enumerate() {
            if m.index != i || m.coord != lattice_coord(i, self.dims) {
                return Err(Error::Structure(format!("neuron {i} is not on its lattice site")));
            }
        }
        for e in &self.il_edges {
            if e.pre as usize >= self.n_input || e.post as usize >= n || e.sign.abs() != 1 {
                return Err(Error::Structure(format!("bad IL edge {e:?}")));
            }
        }
        for e in &self.ll_edges {
            if e.pre as usize >= n || e.post as usize >= n || e.pre == e.post {
                return Err(Error::Structure(format!("bad LL edge {e:?}")));
            }
            let expected = if self.neurons[e.pre as usize].is_excitatory { 1 } else { -1 };
            if e.sign != expected {
                return Err(Error::Structure(format!("LL edge {e:?} sign disagrees with its source")));
            }
        }
        Ok(())
    }
}

/// Samples a liquid. The same `(config, seed)` always yields the same graph.
pub fn build_liquid(config: &TopologyConfig, seed: u64) -> Result<LiquidGraph> {
    config.validate()?;
    let dims = config.lattice();
    let mut rng = seed::rng(seed, stream::TOPOLOGY);
    let neurons = place_neurons(config.n_liquid, dims, config.excitatory_fraction, &mut rng)?;

    let mut ll_edges = Vec::new();
    for pre in &neurons {
        let sign = if pre.is_excitatory { 1 } else { -1 };
        for post in &neurons {
            if pre.index == post.index {
                continue;
            }
            let c = config.connection.amplitude(pre.is_excitatory, post.is_excitatory);
            let p = connection_probability(pre, post, c, config.lambda);
            if rng.random::<f64>() < p {
                ll_edges.push(Edge { pre: pre.index as u32, post: post.index as u32, sign });
            }
        }
    }

    let mut il_edges = Vec::new();
    for input in 0..config.n_input {
        for post in 0..config.n_liquid {
            if rng.random::<f64>() < config.il_density {
                let sign = if rng.random::<f64>() < config.il_excitatory_prob { 1 } else { -1 };
                il_edges.push(Edge { pre: input as u32, post: post as u32, sign });
            }
        }
    }

    Ok(LiquidGraph {
        neurons,
        dims,
        n_input: config.n_input,
        il_edges,
        ll_edges,
        clamp: config.clamp,
    })
}

/// Mutable per-edge weights bound to a graph's clamp table.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    values: Vec<f64>,
    bounds: Vec<[f64; 2]>,
}

impl Weights {
    /// Every edge at `sign * magnitude`, e.g. the uniform LSM liquid.
    pub fn uniform(graph: &LiquidGraph, magnitude: f64) -> Result<Self> {
        let values: Vec<f64> = graph.signs().map(|s| s as f64 * magnitude).collect();
        Self::from_values(graph, values)
    }

    /// Every edge at its clamp extreme in the direction of its sign.
    pub fn at_extremes(graph: &LiquidGraph) -> Self {
        let bounds = Self::bounds_of(graph);
        let values = graph
            .signs()
            .zip(bounds.iter())
            .map(|(s, b)| if s > 0 { b[1] } else { b[0] })
            .collect();
        Weights { values, bounds }
    }

    pub fn from_values(graph: &LiquidGraph, values: Vec<f64>) -> Result<Self> {
        if values.len() != graph.n_edges() {
            return Err(Error::Structure(format!(
                "{} weights for {} edges",
                values.len(),
                graph.n_edges()
            )));
        }
        let bounds = Self::bounds_of(graph);
        for (edge, (&value, b)) in values.iter().zip(bounds.iter()).enumerate() {
            check_bounds(edge, value, *b)?;
        }
        Ok(Weights { values, bounds })
    }

    fn bounds_of(graph: &LiquidGraph) -> Vec<[f64; 2]> {
        (0..graph.n_edges()).map(|id| graph.edge_bounds(id)).collect()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, edge: usize) -> f64 {
        self.values[edge]
    }

    pub fn bounds(&self, edge: usize) -> [f64; 2] {
        self.bounds[edge]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    /// Checked write; values outside the edge's clamp are rejected.
    pub fn set(&mut self, edge: usize, value: f64) -> Result<()> {
        if edge >= self.values.len() {
            return Err(Error::Structure(format!("edge {edge} out of range")));
        }
        check_bounds(edge, value, self.bounds[edge])?;
        self.values[edge] = value;
        Ok(())
    }

    /// Adds `delta` and clamps into the edge's bounds.
    #[inline]
    pub fn add_clamped(&mut self, edge: usize, delta: f64) {
        let [lo, hi] = self.bounds[edge];
        let w = &mut self.values[edge];
        *w = (*w + delta).clamp(lo, hi);
    }

    pub fn copy_from(&mut self, other: &Weights) {
        self.values.copy_from_slice(&other.values);
    }

    /// Order-sensitive FNV-1a digest of the raw bit patterns.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        for v in &self.values {
            for b in v.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        }
        h
    }
}

fn check_bounds(edge: usize, value: f64, [lo, hi]: [f64; 2]) -> Result<()> {
    if value.is_finite() && value >= lo && value <= hi {
        Ok(())
    } else {
        Err(Error::OutOfBounds { edge, value, lo, hi })
    }
}
