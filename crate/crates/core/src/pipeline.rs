//! Liquid initialisation per model variant and spike-count collection.

use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::astrocyte::{AstrocyteParams, AstrocyteState, Modulation, ProxyWindow, TraceRow};
use crate::data::{EncodingConfig, InputRaster, Stimuli};
use crate::dynamics::{Connectivity, LifParams, Raster};
use crate::error::{Error, Result};
use crate::network::{Engine, Rule};
use crate::plasticity::{ApStdpParams, StdpParams};
use crate::seed::{self, stream};
use crate::topology::{LiquidGraph, Weights};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "tag", rename_all = "snake_case")]
pub enum ModelVariant {
    /// Frozen liquid with every edge at `sign * w`.
    Lsm { w: f64 },
    LsmStdp,
    LsmApStdp {
        #[serde(default)]
        gate: ApStdpParams,
    },
    Nalsm {
        #[serde(default)]
        astro: AstrocyteParams,
    },
}

impl ModelVariant {
    pub fn name(&self) -> &'static str {
        match self {
            ModelVariant::Lsm { .. } => "LSM",
            ModelVariant::LsmStdp => "LSM+STDP",
            ModelVariant::LsmApStdp { .. } => "LSM+AP-STDP",
            ModelVariant::Nalsm { .. } => "NALSM",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ModelVariant::Lsm { w } if !w.is_finite() => Err(Error::Config(format!("liquid weight {w}"))),
            ModelVariant::LsmApStdp { gate } => gate.validate(),
            ModelVariant::Nalsm { astro } => astro.validate(),
            _ => Ok(()),
        }
    }
}

/// Neuron, plasticity and encoding parameters shared by every variant.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub lif: LifParams,
    pub stdp: StdpParams,
    pub encoding: EncodingConfig,
}

/// Every edge at `sign * w`.
pub fn init_lsm(graph: &LiquidGraph, w: f64) -> Result<Weights> {
    Weights::uniform(graph, w).map_err(|e| match e {
        Error::OutOfBounds { edge, value, lo, hi } => Error::Config(format!(
            "liquid weight {w} gives {value} on edge {edge}, outside [{lo}, {hi}]"
        )),
        other => other,
    })
}

/// Training indices for `n_snapshots` presentations: successive shuffles
/// of `0..n_train`, so that each image appears once per pass.
pub fn snapshot_order(n_train: usize, n_snapshots: usize, seed: u64) -> Vec<usize> {
    let mut rng = seed::rng(seed, stream::INIT_ORDER);
    let mut order = Vec::with_capacity(n_snapshots);
    let mut pass: Vec<usize> = (0..n_train).collect();
    while order.len() < n_snapshots && n_train > 0 {
        pass.shuffle(&mut rng);
        let take = (n_snapshots - order.len()).min(n_train);
        order.extend_from_slice(&pass[..take]);
    }
    order
}

#[derive(Debug, Clone)]
pub struct InitResult {
    pub weights: Weights,
    /// One row per snapshot, stamped at the snapshot's last ms.
    pub trace: Vec<TraceRow>,
}

fn plastic_rule(variant: &ModelVariant, sim: &SimConfig, graph: &LiquidGraph, seed: u64, counting: bool) -> Rule {
    match *variant {
        ModelVariant::Lsm { .. } => Rule::Frozen,
        ModelVariant::LsmStdp => Rule::Stdp(sim.stdp),
        ModelVariant::LsmApStdp { gate } => Rule::ApStdp { stdp: sim.stdp, gate, rng: seed::rng(seed, stream::GATE) },
        ModelVariant::Nalsm { astro } => Rule::Astro {
            stdp: StdpParams { a_plus: astro.b_astro, ..sim.stdp },
            params: astro,
            state: AstrocyteState::new(&astro, graph.n_liquid(), graph.n_input, seed),
            modulation: counting.then(|| Modulation::new(astro.b_astro)),
        },
    }
}

/// Initialises the liquid for `variant`. Frozen LSMs get uniform weights.
/// LSM+STDP and NALSM start at the clamp extremes, LSM+AP-STDP at
/// `sign * 1.0`; each plastic variant then sees a continuous
/// stream of `order.len()` snapshots with state carried across snapshots.
pub fn init_liquid(
    graph: &LiquidGraph,
    conn: &Connectivity,
    variant: &ModelVariant,
    train: &Stimuli,
    order: &[usize],
    sim: &SimConfig,
    seed: u64,
) -> Result<InitResult> {
    variant.validate()?;
    if let ModelVariant::Lsm { w } = *variant {
        return Ok(InitResult { weights: init_lsm(graph, w)?, trace: Vec::new() });
    }
    let mut weights = match variant {
        ModelVariant::LsmApStdp { .. } => init_lsm(graph, 1.0)?,
        _ => Weights::at_extremes(graph),
    };
    let mut rule = plastic_rule(variant, sim, graph, seed, false);
    let mut engine = Engine::new(conn, sim.lif, &sim.stdp);
    let mut trace = Vec::with_capacity(order.len());
    let mut t = 0u64;
    for (k, &i) in order.iter().enumerate() {
        let mut rng = seed::item_rng(seed, stream::INIT_ENCODE, k as u64);
        let snap = train.snapshot(i, &sim.encoding, &mut rng)?;
        let mut window = ProxyWindow::default();
        engine.run(&mut weights, &snap, &mut rule, |_, _, c| window.add(c.liquid, c.input))?;
        t += snap.duration() as u64;
        trace.push(TraceRow {
            time_ms: t.saturating_sub(1),
            a_minus: rule.a_minus().unwrap_or(0.0),
            bf_proxy: window.take(),
        });
        if (k + 1) % 1000 == 0 {
            log::debug!("{}: {} of {} snapshots", variant.name(), k + 1, order.len());
        }
    }
    Ok(InitResult { weights, trace })
}

/// Per-sample spike counts of every liquid neuron, with labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpikeCountMatrix {
    pub n_neurons: usize,
    /// Row-major, one row per sample.
    pub counts: Vec<u16>,
    pub labels: Vec<u8>,
}

const SCM_MAGIC: &[u8; 4] = b"SCM1";

impl SpikeCountMatrix {
    pub fn new(n_neurons: usize) -> Self {
        SpikeCountMatrix { n_neurons, counts: Vec::new(), labels: Vec::new() }
    }

    pub fn n_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn row(&self, i: usize) -> &[u16] {
        &self.counts[i * self.n_neurons..(i + 1) * self.n_neurons]
    }

    pub fn push(&mut self, row: &[u32], label: u8) {
        self.counts.extend(row.iter().map(|&c| c.min(u16::MAX as u32) as u16));
        self.labels.push(label);
    }

    pub fn max_count(&self) -> u16 {
        self.counts.iter().copied().max().unwrap_or(0)
    }

    /// `SCM1`, then `n_samples` and `n_neurons` as u32, labels as u8,
    /// counts as u16; all little-endian.
    pub fn write_binary<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(SCM_MAGIC)?;
        out.write_u32::<LittleEndian>(self.n_samples() as u32)?;
        out.write_u32::<LittleEndian>(self.n_neurons as u32)?;
        out.write_all(&self.labels)?;
        for &c in &self.counts {
            out.write_u16::<LittleEndian>(c)?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut input: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic)?;
        if &magic != SCM_MAGIC {
            return Err(Error::format(0, "not a spike-count matrix"));
        }
        let n = input.read_u32::<LittleEndian>()? as usize;
        let n_neurons = input.read_u32::<LittleEndian>()? as usize;
        let mut labels = vec![0u8; n];
        input.read_exact(&mut labels)?;
        let mut counts = vec![0u16; n * n_neurons];
        input.read_u16_into::<LittleEndian>(&mut counts)?;
        Ok(SpikeCountMatrix { n_neurons, counts, labels })
    }

    /// One row per sample: label, then the counts.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["label".to_string()];
        header.extend((0..self.n_neurons).map(|i| format!("n{i}")));
        w.write_record(&header)?;
        for i in 0..self.n_samples() {
            let mut rec = vec![self.labels[i].to_string()];
            rec.extend(self.row(i).iter().map(u16::to_string));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Presents every sample for `sim.encoding.sample_ms` and counts liquid
/// spikes. Each sample starts from reset state; NALSM re-copies the
/// initialised weights per sample and keeps learning with decaying rates,
/// every other variant runs frozen. `split_tag` separates the encoding
/// streams of different splits.
#[allow(clippy::too_many_arguments)]
pub fn collect_counts(
    graph: &LiquidGraph,
    conn: &Connectivity,
    variant: &ModelVariant,
    weights: &Weights,
    stimuli: &Stimuli,
    sim: &SimConfig,
    seed: u64,
    split_tag: u64,
) -> Result<SpikeCountMatrix> {
    let template = match variant {
        ModelVariant::Nalsm { .. } => plastic_rule(variant, sim, graph, seed, true),
        _ => Rule::Frozen,
    };
    let rows: Vec<Result<Vec<u32>>> = (0..stimuli.len())
        .into_par_iter()
        .map_init(
            || (Engine::new(conn, sim.lif, &sim.stdp), weights.clone(), template.clone()),
            |(engine, w, rule), i| {
                let mut rng = seed::item_rng(seed, stream::COUNTS_ENCODE, (split_tag << 32) | i as u64);
                let input = stimuli.encode(i, &sim.encoding, &mut rng)?;
                engine.reset();
                rule.reset();
                if rule.is_plastic() {
                    w.copy_from(weights);
                }
                engine.count(w, &input, rule)
            },
        )
        .collect();
    let mut m = SpikeCountMatrix::new(graph.n_liquid());
    for (i, r) in rows.into_iter().enumerate() {
        m.push(&r?, stimuli.label(i));
    }
    Ok(m)
}

/// Runs sample `i` through a frozen copy of the liquid and returns the
/// input and liquid rasters.
pub fn record_sample(
    conn: &Connectivity,
    weights: &Weights,
    input: &InputRaster,
    lif: &LifParams,
) -> Result<Raster> {
    let mut engine = Engine::new(conn, *lif, &StdpParams::default());
    let mut w = weights.clone();
    engine.record(&mut w, input, &mut Rule::Frozen)
}
