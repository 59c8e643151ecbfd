//! Experiment execution: one record per (model, sweep value, network,
//! seed).

use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{DatasetId, ExperimentConfig, LoadedData, SweepAxis};
use super::diagnostics::{probe_dynamics, summarize_trace, DynamicsProbe, TraceSummary};
use super::report;
use crate::analysis::{kernel_ranks, KernelRanks};
use crate::astrocyte::write_trace_csv;
use crate::dynamics::Connectivity;
use crate::error::{Error, Result};
use crate::io::save_liquid;
use crate::pipeline::{collect_counts, init_liquid, snapshot_order, ModelVariant};
use crate::readout::{evaluate, train, write_metrics_csv, ReadoutModel};
use crate::topology::{build_liquid, TopologyConfig};

pub const N_CLASSES: usize = 10;

/// Split tags for the per-sample encoding streams.
pub mod split_tag {
    pub const TRAIN: u64 = 0;
    pub const VAL: u64 = 1;
    pub const TEST: u64 = 2;
    pub const TEST_PERTURBED: u64 = 3;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunPoint {
    pub index: usize,
    pub model: ModelVariant,
    pub n_liquid: usize,
    pub axis: Option<SweepAxis>,
    pub value: Option<f64>,
    /// Topology seed.
    pub network: u64,
    pub seed: u64,
}

/// Every run of a config, in a fixed order. Models the sweep axis does
/// not touch run once, without an axis value.
pub fn plan(cfg: &ExperimentConfig) -> Vec<RunPoint> {
    let mut variants: Vec<(ModelVariant, usize, Option<SweepAxis>, Option<f64>)> = Vec::new();
    for m in &cfg.models {
        let swept: Vec<_> = match &cfg.sweep {
            Some(s) => s
                .values
                .iter()
                .filter_map(|&v| s.axis.apply(v, m, cfg.n_liquid).map(|(mv, n)| (mv, n, Some(s.axis), Some(v))))
                .collect(),
            None => Vec::new(),
        };
        if swept.is_empty() {
            variants.push((*m, cfg.n_liquid, None, None));
        } else {
            variants.extend(swept);
        }
    }
    let mut points = Vec::new();
    for (model, n_liquid, axis, value) in variants {
        for network in 1..=cfg.n_networks as u64 {
            for &seed in &cfg.seeds {
                points.push(RunPoint { index: points.len(), model, n_liquid, axis, value, network, seed });
            }
        }
    }
    points
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Data,
    Build,
    Init,
    Counts,
    Readout,
    Diagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageFailure {
    pub stage: Stage,
    pub message: String,
}

fn at<T>(stage: Stage, r: Result<T>) -> std::result::Result<T, StageFailure> {
    r.map_err(|e| StageFailure { stage, message: e.to_string() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub experiment: String,
    /// Hash of everything that determines the result.
    pub fingerprint: String,
    pub point: usize,
    pub model: String,
    pub variant: ModelVariant,
    pub dataset: DatasetId,
    pub n_liquid: usize,
    pub axis: Option<SweepAxis>,
    pub value: Option<f64>,
    pub network: u64,
    pub seed: u64,
    pub n_edges: Option<usize>,
    pub test_accuracy: Option<f64>,
    pub val_accuracy: Option<f64>,
    pub best_epoch: Option<usize>,
    pub init_trace: Option<TraceSummary>,
    pub dynamics: Option<DynamicsProbe>,
    pub kernel: Option<KernelRanks>,
    pub wall_clock_s: f64,
    pub failure: Option<StageFailure>,
}

impl ResultRecord {
    fn new(cfg: &ExperimentConfig, p: &RunPoint) -> Self {
        ResultRecord {
            experiment: cfg.name.clone(),
            fingerprint: fingerprint(cfg, p),
            point: p.index,
            model: p.model.name().to_string(),
            variant: p.model,
            dataset: cfg.data.dataset,
            n_liquid: p.n_liquid,
            axis: p.axis,
            value: p.value,
            network: p.network,
            seed: p.seed,
            n_edges: None,
            test_accuracy: None,
            val_accuracy: None,
            best_epoch: None,
            init_trace: None,
            dynamics: None,
            kernel: None,
            wall_clock_s: 0.0,
            failure: None,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.failure.is_none()
    }
}

/// SHA-256 over the result-determining parts of the config and the point.
pub fn fingerprint(cfg: &ExperimentConfig, p: &RunPoint) -> String {
    #[derive(Serialize)]
    struct Key<'a> {
        data: &'a super::config::DataConfig,
        n_snapshots: usize,
        sim: &'a crate::pipeline::SimConfig,
        topology: &'a TopologyConfig,
        readout: &'a crate::readout::TrainSchedule,
        diagnostics: &'a super::config::DiagnosticsConfig,
        dynamics_only: bool,
        model: &'a ModelVariant,
        n_liquid: usize,
        network: u64,
        seed: u64,
    }
    let key = Key {
        data: &cfg.data,
        n_snapshots: cfg.n_snapshots,
        sim: &cfg.sim,
        topology: &cfg.topology,
        readout: &cfg.readout,
        diagnostics: &cfg.diagnostics,
        dynamics_only: cfg.dynamics_only,
        model: &p.model,
        n_liquid: p.n_liquid,
        network: p.network,
        seed: p.seed,
    };
    let bytes = serde_json::to_vec(&key).expect("fingerprint key serialises");
    format!("{:x}", Sha256::digest(&bytes))[..16].to_string()
}

/// Runs one point. Failures are recorded with their stage; whatever was
/// measured before the failure is kept.
pub fn run_point(cfg: &ExperimentConfig, data: &LoadedData, p: &RunPoint, artifacts: Option<&Path>) -> ResultRecord {
    let start = Instant::now();
    let mut rec = ResultRecord::new(cfg, p);
    if let Err(f) = run_stages(cfg, data, p, artifacts, &mut rec) {
        log::warn!("run {} ({}) failed in {:?}: {}", p.index, rec.model, f.stage, f.message);
        rec.failure = Some(f);
    }
    rec.wall_clock_s = start.elapsed().as_secs_f64();
    rec
}

fn run_stages(
    cfg: &ExperimentConfig,
    data: &LoadedData,
    p: &RunPoint,
    artifacts: Option<&Path>,
    rec: &mut ResultRecord,
) -> std::result::Result<(), StageFailure> {
    let dir = match artifacts {
        Some(root) => {
            let d = root.join(format!("run-{:04}", p.index));
            at(Stage::Build, fs::create_dir_all(&d).map_err(Error::from))?;
            Some(d)
        }
        None => None,
    };

    let topo = TopologyConfig { n_liquid: p.n_liquid, n_input: data.n_input(), ..cfg.topology.clone() };
    let graph = at(Stage::Build, build_liquid(&topo, p.network))?;
    let conn = Connectivity::new(&graph);
    rec.n_edges = Some(graph.n_edges());

    let order = snapshot_order(data.train.len(), cfg.n_snapshots, p.seed);
    let init = at(Stage::Init, init_liquid(&graph, &conn, &p.model, &data.train, &order, &cfg.sim, p.seed))?;
    if !init.trace.is_empty() {
        rec.init_trace = Some(summarize_trace(&init.trace, cfg.diagnostics.band, cfg.diagnostics.tail_fraction));
    }
    if let Some(d) = &dir {
        at(Stage::Init, save_liquid(&d.join("liquid.json"), &graph, Some(&init.weights)))?;
        if !init.trace.is_empty() {
            at(Stage::Init, File::create(d.join("init_trace.csv")).map_err(Error::from).and_then(|f| write_trace_csv(&init.trace, BufWriter::new(f))))?;
        }
    }

    let probe = |rec: &mut ResultRecord| -> std::result::Result<(), StageFailure> {
        rec.dynamics = Some(at(
            Stage::Diagnostics,
            probe_dynamics(
                &graph,
                &conn,
                &init.weights,
                &data.test,
                cfg.diagnostics.probe_samples,
                &cfg.sim.lif,
                &cfg.sim.encoding,
                &cfg.diagnostics.branching,
                p.seed,
            ),
        )?);
        Ok(())
    };
    if cfg.dynamics_only {
        return probe(rec);
    }

    let counts = |stim, tag| collect_counts(&graph, &conn, &p.model, &init.weights, stim, &cfg.sim, p.seed, tag);
    let tr = at(Stage::Counts, counts(&data.train, split_tag::TRAIN))?;
    let va = at(Stage::Counts, counts(&data.val, split_tag::VAL))?;
    let te = at(Stage::Counts, counts(&data.test, split_tag::TEST))?;
    if let Some(d) = &dir {
        for (m, name) in [(&tr, "train"), (&va, "val"), (&te, "test")] {
            at(Stage::Counts, File::create(d.join(format!("counts_{name}.scm"))).map_err(Error::from).and_then(|f| m.write_binary(BufWriter::new(f))))?;
        }
    }

    let model = ReadoutModel::for_schedule(graph.n_liquid(), N_CLASSES, &cfg.readout);
    let out = at(Stage::Readout, train(model, &tr, &va, &cfg.readout, p.seed))?;
    rec.best_epoch = Some(out.best_epoch);
    rec.val_accuracy = Some(out.best_val_accuracy);
    rec.test_accuracy = Some(evaluate(&out.model, &te));
    if let Some(d) = &dir {
        at(Stage::Readout, File::create(d.join("readout.json")).map_err(Error::from).and_then(|f| out.model.save(BufWriter::new(f))))?;
        at(Stage::Readout, File::create(d.join("readout_curve.csv")).map_err(Error::from).and_then(|f| write_metrics_csv(&out.curve, BufWriter::new(f))))?;
    }

    probe(rec)?;
    if cfg.diagnostics.kernel_quality {
        let kcfg = &cfg.diagnostics.kernel;
        let noisy_stim = data.test.perturbed(data.test.default_perturbation(), p.seed);
        let noisy = at(Stage::Diagnostics, counts(&noisy_stim, split_tag::TEST_PERTURBED))?;
        rec.kernel = Some(at(Stage::Diagnostics, kernel_ranks(&te, &noisy, kcfg, p.seed))?);
    }
    Ok(())
}

/// Runs every point of `cfg` on already loaded data, `cfg.workers` at a
/// time. With `dir`, each record is appended to `records.jsonl` as it
/// completes and, with `save_artifacts`, per-run artifacts go to
/// `run-NNNN/`.
pub fn run_loaded(cfg: &ExperimentConfig, data: &LoadedData, dir: Option<&Path>) -> Result<Vec<ResultRecord>> {
    cfg.validate()?;
    let points = plan(cfg);
    let sink = match dir {
        Some(d) => Some(Mutex::new(OpenOptions::new().create(true).append(true).open(d.join("records.jsonl"))?)),
        None => None,
    };
    let artifacts = dir.filter(|_| cfg.save_artifacts);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let mut records: Vec<ResultRecord> = pool.install(|| {
        points
            .par_iter()
            .map(|p| {
                log::info!("run {} of {}: {} network {} seed {}", p.index + 1, points.len(), p.model.name(), p.network, p.seed);
                let rec = run_point(cfg, data, p, artifacts);
                if let Some(s) = &sink {
                    append_record(s, &rec);
                }
                rec
            })
            .collect()
    });
    records.sort_by_key(|r| r.point);
    Ok(records)
}

fn append_record(sink: &Mutex<File>, rec: &ResultRecord) {
    let line = serde_json::to_string(rec).expect("record serialises");
    let mut f = sink.lock().unwrap_or_else(|e| e.into_inner());
    if let Err(e) = writeln!(f, "{line}") {
        log::error!("could not append record {}: {e}", rec.point);
    }
}

/// Reads a `records.jsonl` file.
pub fn read_records(path: &Path) -> Result<Vec<ResultRecord>> {
    let text = fs::read_to_string(path)?;
    text.lines().filter(|l| !l.trim().is_empty()).map(|l| Ok(serde_json::from_str(l)?)).collect()
}

pub struct RunOutcome {
    pub dir: PathBuf,
    pub records: Vec<ResultRecord>,
}

/// `<output_dir>/<name>-<unix seconds>`, suffixed if taken.
pub fn stamped_dir(output_dir: &Path, name: &str) -> PathBuf {
    let secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let base = output_dir.join(format!("{name}-{secs}"));
    let mut dir = base.clone();
    let mut k = 1;
    while dir.exists() {
        dir = PathBuf::from(format!("{}-{k}", base.display()));
        k += 1;
    }
    dir
}

/// Loads the data, runs every point and writes the config, records and
/// summaries under a fresh run-stamped directory. A data failure turns
/// into one failure record per point.
pub fn run_experiment(cfg: &ExperimentConfig, data_root: &Path) -> Result<RunOutcome> {
    cfg.validate()?;
    let dir = stamped_dir(&cfg.output_dir, &cfg.name);
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("config.toml"), cfg.to_toml()?)?;
    let records = match cfg.data.load(data_root) {
        Ok(data) => run_loaded(cfg, &data, Some(&dir))?,
        Err(e) => {
            log::error!("could not load {}: {e}", cfg.data.resolve(data_root).display());
            let mut f = OpenOptions::new().create(true).append(true).open(dir.join("records.jsonl"))?;
            plan(cfg)
                .iter()
                .map(|p| {
                    let mut rec = ResultRecord::new(cfg, p);
                    rec.failure = Some(StageFailure { stage: Stage::Data, message: e.to_string() });
                    writeln!(f, "{}", serde_json::to_string(&rec)?)?;
                    Ok(rec)
                })
                .collect::<Result<Vec<_>>>()?
        }
    };
    report::write_reports(&records, &dir)?;
    Ok(RunOutcome { dir, records })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::{desk_bench, desk_density, Sweep};

    #[test]
    fn plan_covers_every_combination() {
        let c = desk_bench();
        let pts = plan(&c);
        // 5 weights x 5 networks for the LSM, 5 networks for the others.
        assert_eq!(pts.len(), 25 + 5 + 5);
        assert!(pts.iter().enumerate().all(|(i, p)| p.index == i));
        assert_eq!(pts.iter().filter(|p| p.value.is_none()).count(), 10);
        let d = plan(&desk_density());
        assert_eq!(d.len(), 2 * 3 * 3);
    }

    #[test]
    fn untouched_models_run_once() {
        let mut c = desk_bench();
        c.sweep = Some(Sweep { axis: SweepAxis::WAstro, values: vec![0.01, 0.02] });
        c.n_networks = 1;
        let pts = plan(&c);
        assert_eq!(pts.len(), 1 + 1 + 2);
    }

    #[test]
    fn fingerprint_ignores_bookkeeping() {
        let c = desk_bench();
        let p = &plan(&c)[0];
        let mut c2 = c.clone();
        c2.workers = 4;
        c2.output_dir = "elsewhere".into();
        c2.name = "renamed".into();
        assert_eq!(fingerprint(&c, p), fingerprint(&c2, p));
        let mut c3 = c.clone();
        c3.n_snapshots += 1;
        assert_ne!(fingerprint(&c, p), fingerprint(&c3, p));
        let mut q = p.clone();
        q.seed += 1;
        assert_ne!(fingerprint(&c, p), fingerprint(&c, &q));
    }
}
