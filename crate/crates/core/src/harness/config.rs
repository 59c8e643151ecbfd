//! Experiment configuration and the named presets.
//!
//! A config is a TOML document:
//!
//! ```toml
//! name = "desk_bench"
//! scale = "desk"
//! n_liquid = 500
//! n_networks = 5
//! seeds = [1]
//! n_snapshots = 10000
//! workers = 1
//! output_dir = "runs"
//!
//! [data]
//! dataset = "mnist"
//! path = "mnist-subset"
//! n_train = 6000
//! n_val = 2000
//! n_test = 2000
//!
//! [[models]]
//! tag = "lsm"
//! w = 1.0
//!
//! [[models]]
//! tag = "nalsm"
//!
//! [sweep]
//! axis = "liquid_weight"
//! values = [0.6, 0.8, 1.0, 1.2]
//! ```
//!
//! Tables `sim`, `topology`, `readout` and `diagnostics` override the
//! defaults of the corresponding library types. Network `k` (1-based) is
//! built from topology seed `k`; every other random stream is keyed by the
//! run seed.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::{BranchingConfig, KernelConfig};
use crate::astrocyte::AstrocyteParams;
use crate::data::{self, load_idx_dir, load_nmnist, Split, Stimuli};
use crate::error::{Error, Result};
use crate::pipeline::{ModelVariant, SimConfig};
use crate::plasticity::ApStdpParams;
use crate::readout::TrainSchedule;
use crate::topology::TopologyConfig;

/// Environment variable naming the directory that relative dataset paths
/// resolve against.
pub const DATA_ROOT_ENV: &str = "LIQUID_DATA_ROOT";

pub fn data_root() -> PathBuf {
    std::env::var_os(DATA_ROOT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("data"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetId {
    Mnist,
    Nmnist,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    pub dataset: DatasetId,
    pub path: PathBuf,
    /// Training samples used; all available when absent.
    #[serde(default)]
    pub n_train: Option<usize>,
    pub n_val: usize,
    #[serde(default)]
    pub n_test: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct LoadedData {
    pub train: Stimuli,
    pub val: Stimuli,
    pub test: Stimuli,
}

impl LoadedData {
    pub fn n_input(&self) -> usize {
        self.train.n_input()
    }
}

impl DataConfig {
    pub fn resolve(&self, root: &Path) -> PathBuf {
        if self.path.is_absolute() {
            self.path.clone()
        } else {
            root.join(&self.path)
        }
    }

    /// MNIST directories hold either the standard `train-*`/`t10k-*` pair,
    /// split by holding out the last `n_val` training images, or a single
    /// `images`/`labels` pool cut into contiguous slices. N-MNIST
    /// directories hold `Train/` and `Test/`.
    pub fn load(&self, root: &Path) -> Result<LoadedData> {
        let dir = self.resolve(root);
        let (train_pool, test_pool, split) = match self.dataset {
            DatasetId::Mnist => {
                let standard = ["train-images-idx3-ubyte", "train-images-idx3-ubyte.gz"]
                    .iter()
                    .any(|f| dir.join(f).exists());
                if standard {
                    let train = load_idx_dir(&dir, Some("train"))?;
                    let test = load_idx_dir(&dir, Some("t10k"))?;
                    let split = Split::holdout(train.len(), self.n_val, test.len())?;
                    (Stimuli::Images(train), Some(Stimuli::Images(test)), split)
                } else {
                    let pool = load_idx_dir(&dir, None)?;
                    let n_test = self.n_test.ok_or_else(|| {
                        Error::Config("a single-pool dataset needs n_test".into())
                    })?;
                    let n_train = self.n_train.unwrap_or(pool.len().saturating_sub(self.n_val + n_test));
                    let split = Split::contiguous(pool.len(), n_train, self.n_val, n_test)?;
                    (Stimuli::Images(pool), None, split)
                }
            }
            DatasetId::Nmnist => {
                let train = load_nmnist(&dir.join("Train"))?.samples;
                let test = load_nmnist(&dir.join("Test"))?.samples;
                if train.is_empty() {
                    return Err(Error::Config(format!("no N-MNIST samples under {}", dir.display())));
                }
                let split = Split::holdout(train.len(), self.n_val, test.len())?;
                (Stimuli::Events(train), Some(Stimuli::Events(test)), split)
            }
        };
        let mut train_range = split.train.clone();
        if let Some(n) = self.n_train {
            if n > train_range.len() {
                return Err(Error::Config(format!("{n} training samples requested, {} available", train_range.len())));
            }
            train_range.end = train_range.start + n;
        }
        let test_src = test_pool.as_ref().unwrap_or(&train_pool);
        let mut test_range = split.test.clone();
        if let Some(n) = self.n_test {
            if n > test_range.len() {
                return Err(Error::Config(format!("{n} test samples requested, {} available", test_range.len())));
            }
            test_range.end = test_range.start + n;
        }
        Ok(LoadedData {
            train: train_pool.slice(train_range),
            val: train_pool.slice(split.val.clone()),
            test: test_src.slice(test_range),
        })
    }

    pub fn n_input(&self) -> usize {
        match self.dataset {
            DatasetId::Mnist => data::IMAGE_CHANNELS,
            DatasetId::Nmnist => data::EVENT_CHANNELS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Uniform weight of frozen LSMs.
    LiquidWeight,
    WAstro,
    /// Neuron-astrocyte connection density.
    AstroDensity,
    LiquidSize,
}

impl SweepAxis {
    /// Applies `value` to a model, or `None` when the axis does not touch
    /// that model.
    pub fn apply(self, value: f64, model: &ModelVariant, n_liquid: usize) -> Option<(ModelVariant, usize)> {
        match (self, *model) {
            (SweepAxis::LiquidWeight, ModelVariant::Lsm { .. }) => Some((ModelVariant::Lsm { w: value }, n_liquid)),
            (SweepAxis::WAstro, ModelVariant::Nalsm { astro }) => {
                Some((ModelVariant::Nalsm { astro: AstrocyteParams { w_astro: value, ..astro } }, n_liquid))
            }
            (SweepAxis::AstroDensity, ModelVariant::Nalsm { astro }) => {
                Some((ModelVariant::Nalsm { astro: AstrocyteParams { density: value, ..astro } }, n_liquid))
            }
            (SweepAxis::LiquidSize, m) => Some((m, value as usize)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

/// Evenly spaced values from `start` to `stop` inclusive, rounded to
/// avoid accumulated drift.
pub fn linspace_step(start: f64, stop: f64, step: f64) -> Vec<f64> {
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    (0..=n).map(|i| ((start + i as f64 * step) * 1e6).round() / 1e6).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiagnosticsConfig {
    /// Test samples run through the frozen liquid for the branching
    /// factor and the windowed BF proxy.
    pub probe_samples: usize,
    pub branching: BranchingConfig,
    pub kernel_quality: bool,
    pub kernel: KernelConfig,
    /// Acceptable BF proxy band for the initialisation trace summary.
    pub band: [f64; 2],
    /// Tail of the initialisation stream the summary covers.
    pub tail_fraction: f64,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        DiagnosticsConfig {
            probe_samples: 20,
            branching: BranchingConfig::default(),
            kernel_quality: true,
            kernel: KernelConfig::default(),
            band: [0.8, 1.6],
            tail_fraction: 0.2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Full,
    /// Reduced sizes for quick validation; numbers are not comparable to
    /// full-scale runs.
    Desk,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub scale: Scale,
    pub data: DataConfig,
    pub models: Vec<ModelVariant>,
    pub n_liquid: usize,
    #[serde(default = "default_networks")]
    pub n_networks: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    pub n_snapshots: usize,
    #[serde(default)]
    pub sweep: Option<Sweep>,
    #[serde(default)]
    pub sim: SimConfig,
    #[serde(default)]
    pub topology: TopologyConfig,
    #[serde(default)]
    pub readout: TrainSchedule,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
    /// Stop after the dynamics probe: no counts, readout or kernel quality.
    #[serde(default)]
    pub dynamics_only: bool,
    /// Keep spike-count matrices and readout curves of every run.
    #[serde(default)]
    pub save_artifacts: bool,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
}

fn default_networks() -> usize {
    10
}

fn default_seeds() -> Vec<u64> {
    vec![1]
}

fn default_workers() -> usize {
    1
}

fn default_output() -> PathBuf {
    PathBuf::from("runs")
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.models.is_empty() {
            return Err(Error::Config("no models configured".into()));
        }
        if self.n_networks == 0 || self.seeds.is_empty() {
            return Err(Error::Config("need at least one network and one seed".into()));
        }
        if self.workers == 0 {
            return Err(Error::Config("workers must be positive".into()));
        }
        for m in &self.models {
            m.validate()?;
        }
        if let Some(s) = &self.sweep {
            if s.values.is_empty() {
                return Err(Error::Config("sweep without values".into()));
            }
            if s.axis == SweepAxis::LiquidSize && s.values.iter().any(|&v| v < 1.0 || v.fract() != 0.0) {
                return Err(Error::Config("liquid sizes must be positive integers".into()));
            }
        }
        self.sim.lif.validate()?;
        self.readout.validate()
    }

    pub fn preset(name: &str) -> Option<Self> {
        Some(match name {
            "full_sweep" => full_sweep(),
            "full_bench" => full_bench(),
            "full_density" => full_density(),
            "full_size" => full_size(),
            "desk_sweep" => desk_sweep(),
            "desk_bench" => desk_bench(),
            "desk_density" => desk_density(),
            "desk_selforg" => desk_selforg(),
            _ => return None,
        })
    }
}

pub const PRESETS: &[&str] = &[
    "full_sweep",
    "full_bench",
    "full_density",
    "full_size",
    "desk_sweep",
    "desk_bench",
    "desk_density",
    "desk_selforg",
];

fn full_mnist() -> DataConfig {
    DataConfig { dataset: DatasetId::Mnist, path: "mnist".into(), n_train: None, n_val: 10_000, n_test: None }
}

fn desk_mnist(n_train: usize) -> DataConfig {
    DataConfig {
        dataset: DatasetId::Mnist,
        path: "mnist-subset".into(),
        n_train: Some(n_train),
        n_val: 2000,
        n_test: Some(2000),
    }
}

fn nalsm() -> ModelVariant {
    ModelVariant::Nalsm { astro: AstrocyteParams::default() }
}

fn full_scale(name: &str, models: Vec<ModelVariant>, sweep: Option<Sweep>) -> ExperimentConfig {
    ExperimentConfig {
        name: name.into(),
        scale: Scale::Full,
        data: full_mnist(),
        models,
        n_liquid: 1000,
        n_networks: 10,
        seeds: vec![1],
        n_snapshots: 50_000,
        sweep,
        sim: SimConfig::default(),
        topology: TopologyConfig::default(),
        readout: TrainSchedule::default(),
        diagnostics: DiagnosticsConfig::default(),
        dynamics_only: false,
        save_artifacts: false,
        workers: 1,
        output_dir: default_output(),
    }
}

/// Frozen LSM over liquid weights 0.4 to 1.2 on MNIST, with accuracy and
/// dynamics at each weight, plus the plastic initialisation traces.
pub fn full_sweep() -> ExperimentConfig {
    let mut c = full_scale(
        "full_sweep",
        vec![ModelVariant::Lsm { w: 1.0 }, ModelVariant::LsmStdp, nalsm()],
        Some(Sweep { axis: SweepAxis::LiquidWeight, values: linspace_step(0.4, 1.2, 0.05) }),
    );
    c.diagnostics.kernel_quality = false;
    c
}

/// The four variants on ten networks.
pub fn full_bench() -> ExperimentConfig {
    full_scale(
        "full_bench",
        vec![
            ModelVariant::Lsm { w: 1.0 },
            ModelVariant::LsmStdp,
            ModelVariant::LsmApStdp { gate: ApStdpParams::default() },
            nalsm(),
        ],
        None,
    )
}

/// NALSM at astrocyte densities 0.1 to 1.0 over 3 networks and 3 seeds.
pub fn full_density() -> ExperimentConfig {
    let mut c = full_scale(
        "full_density",
        vec![nalsm()],
        Some(Sweep { axis: SweepAxis::AstroDensity, values: vec![0.1, 0.2, 0.4, 0.6, 0.8, 1.0] }),
    );
    c.n_networks = 3;
    c.seeds = vec![1, 2, 3];
    c.diagnostics.kernel_quality = false;
    c
}

/// NALSM from 1000 to 8000 neurons on 5 networks.
pub fn full_size() -> ExperimentConfig {
    let mut c = full_scale(
        "full_size",
        vec![nalsm()],
        Some(Sweep {
            axis: SweepAxis::LiquidSize,
            values: vec![1000.0, 2000.0, 3000.0, 4000.0, 5000.0, 6000.0, 7000.0, 8000.0],
        }),
    );
    c.n_networks = 5;
    c.diagnostics.kernel_quality = false;
    c
}

fn desk(name: &str, n_liquid: usize, models: Vec<ModelVariant>, sweep: Option<Sweep>) -> ExperimentConfig {
    ExperimentConfig {
        name: name.into(),
        scale: Scale::Desk,
        data: desk_mnist(6000),
        models,
        n_liquid,
        n_networks: 5,
        seeds: vec![1],
        n_snapshots: 10_000,
        sweep,
        sim: SimConfig::default(),
        topology: TopologyConfig::default(),
        readout: TrainSchedule::with_patience(),
        diagnostics: DiagnosticsConfig {
            kernel: KernelConfig { shuffles: 100, ..Default::default() },
            ..Default::default()
        },
        dynamics_only: false,
        save_artifacts: false,
        workers: 1,
        output_dir: default_output(),
    }
}

/// Frozen 250-neuron LSM over weights 0.4 to 3.0, dynamics only.
pub fn desk_sweep() -> ExperimentConfig {
    let mut c = desk(
        "desk_sweep",
        250,
        vec![ModelVariant::Lsm { w: 1.0 }],
        Some(Sweep { axis: SweepAxis::LiquidWeight, values: linspace_step(0.4, 3.0, 0.1) }),
    );
    c.n_networks = 1;
    c.dynamics_only = true;
    c.diagnostics.probe_samples = 50;
    c.diagnostics.kernel_quality = false;
    c
}

/// LSM at its best weight, LSM+STDP and NALSM on 500-neuron liquids.
pub fn desk_bench() -> ExperimentConfig {
    desk(
        "desk_bench",
        500,
        vec![ModelVariant::Lsm { w: 1.0 }, ModelVariant::LsmStdp, nalsm()],
        Some(Sweep { axis: SweepAxis::LiquidWeight, values: vec![0.6, 0.8, 1.0, 1.2, 1.4] }),
    )
}

/// NALSM at astrocyte densities 0.1 and 1.0, 3 networks by 3 seeds.
pub fn desk_density() -> ExperimentConfig {
    let mut c = desk(
        "desk_density",
        250,
        vec![nalsm()],
        Some(Sweep { axis: SweepAxis::AstroDensity, values: vec![0.1, 1.0] }),
    );
    c.n_networks = 3;
    c.seeds = vec![1, 2, 3];
    c.diagnostics.kernel_quality = false;
    c
}

/// NALSM initialisation on 250-neuron liquids over 10 networks; the
/// readout still runs so that every record is complete.
pub fn desk_selforg() -> ExperimentConfig {
    let mut c = desk("desk_selforg", 250, vec![nalsm()], None);
    c.n_networks = 10;
    c.diagnostics.kernel_quality = false;
    c
}
