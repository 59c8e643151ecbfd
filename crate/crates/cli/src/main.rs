use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use liquid_core::astrocyte::write_trace_csv;
use liquid_core::dynamics::Connectivity;
use liquid_core::harness::report::{write_reports, write_summary_csv};
use liquid_core::harness::run::{read_records, split_tag, stamped_dir, N_CLASSES};
use liquid_core::harness::{self, probe_dynamics, summarize_trace, ExperimentConfig, LoadedData};
use liquid_core::io::{load_liquid, save_liquid};
use liquid_core::pipeline::{collect_counts, init_liquid, snapshot_order, ModelVariant, SpikeCountMatrix};
use liquid_core::readout::{evaluate, train, write_metrics_csv, ReadoutModel};
use liquid_core::topology::{build_liquid, LiquidGraph, TopologyConfig, Weights};

#[derive(Parser)]
#[command(name = "liquid", version, about = "Liquid state machine experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Named preset; see `liquid presets`.
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    /// Experiment config file (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory that relative dataset paths resolve against.
    #[arg(long, env = harness::config::DATA_ROOT_ENV, default_value = "data")]
    data_root: PathBuf,
    /// Dataset directory, overriding the config.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    n_liquid: Option<usize>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = match (&self.preset, &self.config) {
            (Some(p), _) => ExperimentConfig::preset(p).ok_or_else(|| anyhow!("unknown preset {p}"))?,
            (None, Some(path)) => ExperimentConfig::load(path).with_context(|| format!("reading {}", path.display()))?,
            (None, None) => ExperimentConfig::preset("desk_bench").expect("built-in preset"),
        };
        if let Some(d) = &self.data {
            cfg.data.path = d.clone();
        }
        if let Some(n) = self.n_liquid {
            cfg.n_liquid = n;
        }
        if let Some(o) = &self.output_dir {
            cfg.output_dir = o.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn out_dir(&self, cfg: &ExperimentConfig, out: &Option<PathBuf>, verb: &str) -> Result<PathBuf> {
        let dir = match out {
            Some(d) => d.clone(),
            None => stamped_dir(&cfg.output_dir, &format!("{}-{verb}", cfg.name)),
        };
        fs::create_dir_all(&dir)?;
        Ok(dir)
    }
}

#[derive(Args, Clone)]
struct ModelArgs {
    /// Index into the config's model list.
    #[arg(long, default_value_t = 0)]
    model: usize,
    /// Uniform liquid weight for an LSM, overriding the config.
    #[arg(long)]
    weight: Option<f64>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

impl ModelArgs {
    fn variant(&self, cfg: &ExperimentConfig) -> Result<ModelVariant> {
        let m = *cfg.models.get(self.model).ok_or_else(|| anyhow!("config has {} models", cfg.models.len()))?;
        Ok(match (m, self.weight) {
            (ModelVariant::Lsm { .. }, Some(w)) => ModelVariant::Lsm { w },
            (_, Some(_)) => bail!("--weight applies to LSM models only"),
            (m, None) => m,
        })
    }
}

#[derive(Subcommand)]
enum Command {
    /// List the built-in presets.
    Presets,
    /// Print a preset as TOML.
    ShowConfig {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Generate a liquid and write it as JSON.
    Build {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value_t = 1)]
        network: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Initialise a liquid's weights for one model variant.
    Init {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[command(flatten)]
        model: ModelArgs,
        /// Liquid written by `build`.
        #[arg(long)]
        liquid: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Collect train, validation and test spike counts.
    Counts {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[command(flatten)]
        model: ModelArgs,
        /// Liquid with weights, written by `init`.
        #[arg(long)]
        liquid: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the linear readout on saved counts.
    TrainReadout {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Directory holding counts_{train,val,test}.scm.
        #[arg(long)]
        counts: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Branching factor, BF proxy and E/I rate balance of a frozen liquid.
    Analyze {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        liquid: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Run every point of a config.
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Summarise a records.jsonl file.
    Report {
        records: PathBuf,
        /// Directory for summary.csv and summary.json; stdout otherwise.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_data(cfg: &ExperimentConfig, root: &Path) -> Result<LoadedData> {
    let data = cfg.data.load(root).with_context(|| format!("loading {}", cfg.data.resolve(root).display()))?;
    log::info!("{} train, {} val, {} test samples", data.train.len(), data.val.len(), data.test.len());
    Ok(data)
}

fn read_liquid(path: &Path) -> Result<(LiquidGraph, Option<Weights>)> {
    load_liquid(path).with_context(|| format!("reading {}", path.display()))
}

fn read_counts(path: &Path) -> Result<SpikeCountMatrix> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(SpikeCountMatrix::read_binary(BufReader::new(f))?)
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Presets => {
            for p in harness::PRESETS {
                let c = ExperimentConfig::preset(p).expect("listed preset");
                println!("{p:14} {:?} scale, {} neurons, {} runs", c.scale, c.n_liquid, harness::plan(&c).len());
            }
        }
        Command::ShowConfig { cfg } => print!("{}", cfg.load()?.to_toml()?),
        Command::Build { cfg: args, network, out } => {
            let cfg = args.load()?;
            let topo = TopologyConfig { n_liquid: cfg.n_liquid, n_input: cfg.data.n_input(), ..cfg.topology.clone() };
            let graph = build_liquid(&topo, network)?;
            let dir = args.out_dir(&cfg, &out, "build")?;
            let path = dir.join("liquid.json");
            save_liquid(&path, &graph, None)?;
            println!("{} neurons, {} edges -> {}", graph.n_liquid(), graph.n_edges(), path.display());
        }
        Command::Init { cfg: args, model, liquid, out } => {
            let cfg = args.load()?;
            let variant = model.variant(&cfg)?;
            let (graph, _) = read_liquid(&liquid)?;
            let data = load_data(&cfg, &args.data_root)?;
            let conn = Connectivity::new(&graph);
            let order = snapshot_order(data.train.len(), cfg.n_snapshots, model.seed);
            let init = init_liquid(&graph, &conn, &variant, &data.train, &order, &cfg.sim, model.seed)?;
            let dir = args.out_dir(&cfg, &out, "init")?;
            save_liquid(&dir.join("liquid.json"), &graph, Some(&init.weights))?;
            if !init.trace.is_empty() {
                write_trace_csv(&init.trace, BufWriter::new(File::create(dir.join("init_trace.csv"))?))?;
                let summary = summarize_trace(&init.trace, cfg.diagnostics.band, cfg.diagnostics.tail_fraction);
                println!("{}", serde_json::to_string_pretty(&summary)?);
            }
            println!("{} initialised -> {}", variant.name(), dir.display());
        }
        Command::Counts { cfg: args, model, liquid, out } => {
            let cfg = args.load()?;
            let variant = model.variant(&cfg)?;
            let (graph, weights) = read_liquid(&liquid)?;
            let weights = weights.ok_or_else(|| anyhow!("{} holds no weights; run init first", liquid.display()))?;
            let data = load_data(&cfg, &args.data_root)?;
            let conn = Connectivity::new(&graph);
            let dir = args.out_dir(&cfg, &out, "counts")?;
            for (stim, tag, name) in [
                (&data.train, split_tag::TRAIN, "train"),
                (&data.val, split_tag::VAL, "val"),
                (&data.test, split_tag::TEST, "test"),
            ] {
                let m = collect_counts(&graph, &conn, &variant, &weights, stim, &cfg.sim, model.seed, tag)?;
                m.write_binary(BufWriter::new(File::create(dir.join(format!("counts_{name}.scm")))?))?;
                println!("{name}: {} samples, max count {}", m.n_samples(), m.max_count());
            }
        }
        Command::TrainReadout { cfg: args, counts, seed, out } => {
            let cfg = args.load()?;
            let tr = read_counts(&counts.join("counts_train.scm"))?;
            let va = read_counts(&counts.join("counts_val.scm"))?;
            let te = read_counts(&counts.join("counts_test.scm"))?;
            let model = ReadoutModel::for_schedule(tr.n_neurons, N_CLASSES, &cfg.readout);
            let outcome = train(model, &tr, &va, &cfg.readout, seed)?;
            let dir = args.out_dir(&cfg, &out, "readout")?;
            outcome.model.save(BufWriter::new(File::create(dir.join("readout.json"))?))?;
            write_metrics_csv(&outcome.curve, BufWriter::new(File::create(dir.join("readout_curve.csv"))?))?;
            println!(
                "best epoch {}: validation {:.4}, test {:.4}",
                outcome.best_epoch,
                outcome.best_val_accuracy,
                evaluate(&outcome.model, &te)
            );
        }
        Command::Analyze { cfg: args, liquid, seed } => {
            let cfg = args.load()?;
            let (graph, weights) = read_liquid(&liquid)?;
            let weights = weights.ok_or_else(|| anyhow!("{} holds no weights", liquid.display()))?;
            let data = load_data(&cfg, &args.data_root)?;
            let conn = Connectivity::new(&graph);
            let probe = probe_dynamics(
                &graph,
                &conn,
                &weights,
                &data.test,
                cfg.diagnostics.probe_samples,
                &cfg.sim.lif,
                &cfg.sim.encoding,
                &cfg.diagnostics.branching,
                seed,
            )?;
            println!("{}", serde_json::to_string_pretty(&probe)?);
        }
        Command::Sweep { cfg: args, workers } => {
            let mut cfg = args.load()?;
            if let Some(w) = workers {
                cfg.workers = w;
            }
            let outcome = harness::run_experiment(&cfg, &args.data_root)?;
            let failed = outcome.records.iter().filter(|r| !r.is_ok()).count();
            write_summary_csv(&harness::aggregate(&outcome.records), std::io::stdout())?;
            println!("{} runs ({failed} failed) -> {}", outcome.records.len(), outcome.dir.display());
        }
        Command::Report { records, out } => {
            let recs = read_records(&records)?;
            match out {
                Some(dir) => {
                    fs::create_dir_all(&dir)?;
                    write_reports(&recs, &dir)?;
                    println!("{} records -> {}", recs.len(), dir.display());
                }
                None => write_summary_csv(&harness::aggregate(&recs), std::io::stdout())?,
            }
        }
    }
    Ok(())
}
