use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use falcon_core::nn::{load_dataset, save_dataset, Checkpoint, Dataset, NetworkSpec};
use falcon_core::oracle::{accuracy, pretrain, PretrainConfig};
use falcon_cli::bench::{bench, default_dims, PROTOCOLS};
use falcon_cli::costmodel::Dims;
use falcon_cli::infer::infer;
use falcon_cli::reference;
use falcon_cli::runner::RunConfig;
use falcon_cli::train::{train, TrainConfig};

const DEFAULT_DATASET: &str = "data/mnist-10k-images-idx3-ubyte.gz";

#[derive(Parser, Debug)]
#[command(name = "falcon", version, about = "Three-party secure neural network evaluation and training")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug, Clone)]
enum Cmd {
    #[command(flatten)]
    Job(Job),
    /// Run a command with all three parties in this process.
    RunAll {
        #[command(subcommand)]
        job: Job,
    },
}

#[derive(Args, Debug, Clone)]
struct Global {
    /// Run as party N (1..3) over TCP; omit to run all three in this process.
    #[arg(long, global = true)]
    party: Option<usize>,
    /// TOML run configuration; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// semi or malicious.
    #[arg(long, global = true)]
    threat: Option<String>,
    #[arg(long, global = true)]
    ring_bits: Option<u32>,
    #[arg(long, global = true)]
    fp_bits: Option<u32>,
    /// dealer, distributed or file:<path>.
    #[arg(long, global = true)]
    prep: Option<String>,
    /// memory or tcp.
    #[arg(long, global = true)]
    backend: Option<String>,
    /// Write preprocessing material to this file as it is produced.
    #[arg(long, global = true)]
    record_prep: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Print machine-readable JSON instead of text.
    #[arg(long, global = true)]
    json: bool,
}

#[derive(Subcommand, Debug, Clone)]
enum Job {
    /// Measure a protocol against the cost model.
    Bench {
        /// Protocol name or `all`.
        protocol: String,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        trials: usize,
    },
    /// Secure inference compared with the float network.
    Infer {
        #[arg(long, default_value = "network-a")]
        network: String,
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long, default_value_t = 9000)]
        start: usize,
        #[arg(long, default_value_t = 100)]
        count: usize,
        /// Images per secure forward pass.
        #[arg(long, default_value_t = 10)]
        batch: usize,
    },
    /// Secure SGD with periodic held-out evaluation.
    Train {
        #[arg(long, default_value = "network-a")]
        network: String,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long, default_value_t = 200)]
        iters: usize,
        #[arg(long, default_value_t = 32)]
        batch: usize,
        #[arg(long, default_value_t = 50)]
        eval_every: usize,
        /// Output checkpoint.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Convert IDX image and label files into a dataset store.
    IngestMnist {
        #[arg(long)]
        images: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train float weights in the clear for use with `infer`.
    Pretrain {
        #[arg(long, default_value = "network-a")]
        network: String,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        epochs: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run_config(g: &Global) -> Result<RunConfig> {
    let base = match &g.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    Ok(base.merge(RunConfig {
        party: g.party,
        threat: g.threat.clone(),
        ring_bits: g.ring_bits,
        fp_bits: g.fp_bits,
        prep: g.prep.clone(),
        backend: g.backend.clone(),
        seed: g.seed,
        record_prep: g.record_prep.clone(),
        ..RunConfig::default()
    }))
}

fn dataset(arg: &Option<PathBuf>, rc: &RunConfig) -> Result<Dataset> {
    let path = arg
        .clone()
        .or_else(|| rc.dataset.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_DATASET));
    load_dataset(&path).with_context(|| format!("loading dataset {}", path.display()))
}

fn network(arg: &str, rc: &RunConfig) -> Result<NetworkSpec> {
    let name = if arg == "network-a" { rc.network.as_deref().unwrap_or(arg) } else { arg };
    Ok(NetworkSpec::load(name)?)
}

fn emit<T: serde::Serialize>(json: bool, value: &T, text: impl FnOnce() -> Vec<String>) -> Result<()> {
    if json {
        println!("{}", serde_json::to_string_pretty(value)?);
    } else {
        for l in text() {
            println!("{l}");
        }
    }
    Ok(())
}

fn save(path: &Path, ck: &Checkpoint) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    ck.save(path)?;
    Ok(())
}

fn run(job: Job, rc: RunConfig, json: bool) -> Result<()> {
    match job {
        Job::Bench { protocol, n, trials } => {
            let runner = rc.runner(32)?;
            let names: Vec<&str> = if protocol == "all" { PROTOCOLS.to_vec() } else { vec![protocol.as_str()] };
            let mut rows = Vec::new();
            for name in names {
                let dims: Dims = default_dims(name, n);
                for t in 0..trials.max(1) {
                    let mut r = runner.clone();
                    r.session.seed = r.session.seed.wrapping_add(t as u64);
                    rows.push(bench(&r, name, dims)?);
                }
            }
            emit(json, &rows, || {
                let mut out: Vec<String> = rows.iter().map(|r| r.line()).collect();
                out.extend(reference::lines());
                out
            })
        }
        Job::Infer {
            network: net,
            weights,
            dataset: ds,
            start,
            count,
            batch,
        } => {
            let spec = network(&net, &rc)?;
            let data = dataset(&ds, &rc)?;
            if start + count > data.len() {
                bail!("images {start}..{} outside a dataset of {}", start + count, data.len());
            }
            let ck = Checkpoint::load(&weights).with_context(|| format!("loading {}", weights.display()))?;
            let w = ck.to_float(&spec)?;
            let idx: Vec<usize> = (start..start + count).collect();
            let report = infer(&rc.runner(32)?, &spec, &w, &data, &idx, batch)?;
            emit(json, &report, || {
                let mut out: Vec<String> = report
                    .images
                    .iter()
                    .map(|r| {
                        format!(
                            "image {:>5} label {} secure {} float {} relative error {:.5}",
                            r.index, r.label, r.secure, r.float, r.relative_error
                        )
                    })
                    .collect();
                out.push(report.summary());
                out.extend(reference::lines());
                out
            })
        }
        Job::Train {
            network: net,
            dataset: ds,
            iters,
            batch,
            eval_every,
            out,
        } => {
            let spec = network(&net, &rc)?;
            let data = dataset(&ds, &rc)?;
            let runner = rc.runner(64)?;
            let cfg = TrainConfig {
                iters,
                batch,
                eval_every,
                seed: runner.session.seed,
                ..TrainConfig::default()
            };
            if cfg.test.end > data.len() {
                bail!("dataset holds {} images; training needs {}", data.len(), cfg.test.end);
            }
            let report = train(&runner, &spec, &data, &cfg)?;
            if let Some(path) = &out {
                save(path, &Checkpoint::from_raw(&spec, &runner.session.params, &report.weights)?)?;
            }
            emit(json, &report, || {
                let mut lines: Vec<String> = report
                    .curve
                    .iter()
                    .map(|c| format!("iteration {:>5} held-out accuracy {:.2}%", c.iteration, c.accuracy * 100.0))
                    .collect();
                lines.push(report.summary());
                lines
            })
        }
        Job::IngestMnist { images, labels, out } => {
            let ds = Dataset::from_idx(&images, &labels)?;
            save_dataset(&ds, &out)?;
            let shape = [ds.len(), ds.rows, ds.cols];
            emit(json, &shape, || vec![format!("{} images of {}x{} written to {}", shape[0], shape[1], shape[2], out.display())])
        }
        Job::Pretrain {
            network: net,
            dataset: ds,
            epochs,
            out,
        } => {
            let spec = network(&net, &rc)?;
            let data = dataset(&ds, &rc)?;
            let (train_set, test_set) = (data.subset(0..8000.min(data.len())), data.subset(8000.min(data.len())..data.len()));
            let cfg = PretrainConfig {
                epochs,
                seed: rc.seed.unwrap_or(1),
                ..PretrainConfig::default()
            };
            let w = pretrain(&spec, &train_set, &cfg, |e, loss| {
                if !json {
                    println!("epoch {e} mean loss {loss:.4}");
                }
            })?;
            save(&out, &Checkpoint::from_float(&spec, &w)?)?;
            let acc = accuracy(&spec, &w, &test_set)?;
            emit(json, &acc, || vec![format!("{} float held-out accuracy {:.2}%, saved to {}", spec.name, acc * 100.0, out.display())])
        }
    }
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let rc = run_config(&cli.global)?;
    match cli.cmd {
        Cmd::Job(job) => run(job, rc, cli.global.json),
        Cmd::RunAll { job } => {
            let rc = RunConfig {
                party: None,
                backend: Some("memory".into()),
                ..rc
            };
            run(job, rc, cli.global.json)
        }
    }
}
