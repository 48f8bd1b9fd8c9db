//! Command-line front end: argument definitions and the subcommands.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::augment::{AttributeKind, StructureKind};
use crate::baseline::BaselineKind;
use crate::config::RunConfig;
use crate::error::Error;
use crate::graph::Graph;
use crate::matrix::Matrix;
use crate::metrics::{evaluate, MetricReport, NmiNorm};
use crate::synth::{stochastic_block_model, SbmSpec};
use crate::trainer::{train, Augmentation, TrainConfig, TrainOutcome};

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

/// An error with the process exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub error: Error,
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.error.fmt(f)
    }
}

impl std::error::Error for CliError {}

fn config_err(error: Error) -> CliError {
    CliError { code: EXIT_CONFIG, error }
}

fn data_err(error: Error) -> CliError {
    CliError { code: EXIT_DATA, error }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    data_err(Error::io(path, e))
}

/// Errors raised while training: invalid settings are config errors,
/// everything else is a numeric failure.
fn train_err(error: Error) -> CliError {
    let code = match error {
        Error::InvalidArgument(_) | Error::BadValue { .. } => EXIT_CONFIG,
        _ => EXIT_NUMERIC,
    };
    CliError { code, error }
}

#[derive(Debug, Parser)]
#[command(name = "augclust", version, about = "Graph node clustering with learnable augmentation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one model and write its report, embeddings and assignments.
    Train(RunArgs),
    /// Compare the full model with reduced and fixed-augmentation variants.
    Ablate {
        #[command(flatten)]
        run: RunArgs,
        /// Seeds per variant, starting at the configured seed.
        #[arg(long, default_value_t = 1)]
        seeds: u64,
    },
    /// Train once per value of one hyperparameter.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// One of alpha, tau, temp, filter_depth.
        param: String,
        #[arg(required = true)]
        values: Vec<String>,
    },
    /// Write a stochastic block model dataset.
    Synth(SynthArgs),
    /// Score predicted clusters against ground truth.
    Eval {
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long, default_value = "geometric")]
        nmi_norm: NmiNorm,
    },
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// `key=value` override; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long, default_value = "run")]
    pub out: PathBuf,
    /// Concurrent runs for ablations and sweeps.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 50)]
    pub n_per_block: usize,
    #[arg(long, default_value_t = 2)]
    pub blocks: usize,
    #[arg(long, default_value_t = 0.2)]
    pub p_in: f64,
    #[arg(long, default_value_t = 0.01)]
    pub p_out: f64,
    #[arg(long, default_value_t = 5.0)]
    pub attr_sep: f64,
    /// Attribute dimension; defaults to max(blocks, 16).
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train(args) => cmd_train(&args).map(|_| ()),
        Command::Ablate { run, seeds } => cmd_ablate(&run, seeds).map(|_| ()),
        Command::Sweep { run, param, values } => cmd_sweep(&run, &param, &values).map(|_| ()),
        Command::Synth(args) => cmd_synth(&args),
        Command::Eval { truth, pred, nmi_norm } => cmd_eval(&truth, &pred, nmi_norm),
    }
}

/// Reads the config file and applies overrides.
pub fn load_config(args: &RunArgs) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::from_file(&args.config).map_err(config_err)?;
    for o in &args.overrides {
        cfg.apply_override(o).map_err(config_err)?;
    }
    Ok(cfg)
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| io_err(path, e))
}

fn embeddings_csv(m: &Matrix) -> String {
    let mut out = String::with_capacity(m.len() * 20);
    for row in m.iter_rows() {
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            let _ = write!(out, "{v}");
        }
        out.push('\n');
    }
    out
}

fn assignments_csv(a: &[usize]) -> String {
    let mut out = String::from("node,cluster\n");
    for (i, c) in a.iter().enumerate() {
        let _ = writeln!(out, "{i},{c}");
    }
    out
}

#[derive(Serialize)]
struct Timing {
    wall_clock_seconds: f64,
}

/// Trains with a finalized config and writes every artifact into `out`.
pub fn train_into(cfg: &RunConfig, graph: &Graph, out: &Path) -> Result<TrainOutcome, CliError> {
    fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    write(&out.join("manifest.txt"), cfg.manifest(out))?;
    let outcome = train(&cfg.train, graph).map_err(train_err)?;
    let report = serde_json::to_string_pretty(&outcome.report).expect("report serializes");
    write(&out.join("report.json"), report + "\n")?;
    write(&out.join("embeddings.csv"), embeddings_csv(&outcome.embeddings))?;
    write(&out.join("assignments.csv"), assignments_csv(&outcome.assignments))?;
    let timing = Timing {
        wall_clock_seconds: outcome.report.wall_clock_seconds,
    };
    write(&out.join("timing.json"), serde_json::to_string(&timing).expect("timing serializes") + "\n")?;
    Ok(outcome)
}

fn prepare(args: &RunArgs) -> Result<(RunConfig, Graph), CliError> {
    let mut cfg = load_config(args)?;
    cfg.finalize().map_err(config_err)?;
    let graph = cfg.load_graph().map_err(|e| match e {
        Error::BadValue { .. } => config_err(e),
        other => data_err(other),
    })?;
    Ok((cfg, graph))
}

fn summary(m: Option<&MetricReport>) -> String {
    match m {
        Some(m) => format!("acc={:.4} nmi={:.4} ari={:.4} f1={:.4}", m.acc, m.nmi, m.ari, m.f1),
        None => "no labels".into(),
    }
}

pub fn cmd_train(args: &RunArgs) -> Result<TrainOutcome, CliError> {
    let (cfg, graph) = prepare(args)?;
    let outcome = train_into(&cfg, &graph, &args.out)?;
    println!("{}  ({})", summary(outcome.report.final_metrics.as_ref()), args.out.display());
    Ok(outcome)
}

/// Runs `jobs` in up to `parallel` threads, keeping input order.
fn run_all<T: Send, R: Send>(jobs: Vec<T>, parallel: usize, f: impl Fn(T) -> R + Sync) -> Vec<R> {
    let parallel = parallel.max(1);
    let mut results: Vec<Option<R>> = (0..jobs.len()).map(|_| None).collect();
    let mut queue: Vec<(usize, T)> = jobs.into_iter().enumerate().collect();
    queue.reverse();
    let queue = std::sync::Mutex::new(queue);
    let slots = std::sync::Mutex::new(&mut results);
    std::thread::scope(|s| {
        for _ in 0..parallel {
            s.spawn(|| loop {
                let Some((i, job)) = queue.lock().expect("queue lock").pop() else {
                    break;
                };
                let r = f(job);
                slots.lock().expect("results lock")[i] = Some(r);
            });
        }
    });
    results.into_iter().map(|r| r.expect("every job ran")).collect()
}

/// One row of an ablation table.
#[derive(Clone, Debug, Serialize)]
pub struct AblationRow {
    pub variant: String,
    pub metrics: Option<MetricReport>,
    /// Mean contrastive loss at the first epoch.
    pub initial_loss_c: Option<f64>,
}

/// The variants compared by `ablate`, with their config changes.
pub fn ablation_variants(base: &TrainConfig) -> Vec<(String, TrainConfig)> {
    let full = TrainConfig {
        augmentation: Augmentation::Learnable,
        ..base.clone()
    };
    let mut out = vec![
        ("full".to_string(), full.clone()),
        (
            "without_attribute_augmentor".into(),
            TrainConfig {
                attribute_augmentor: AttributeKind::Identity,
                ..full.clone()
            },
        ),
        (
            "without_structure_augmentor".into(),
            TrainConfig {
                structure_augmentor: StructureKind::Identity,
                ..full.clone()
            },
        ),
        (
            "without_both".into(),
            TrainConfig {
                structure_augmentor: StructureKind::Identity,
                attribute_augmentor: AttributeKind::Identity,
                ..full.clone()
            },
        ),
    ];
    for kind in BaselineKind::ALL {
        out.push((
            kind.to_string(),
            TrainConfig {
                augmentation: Augmentation::Baseline(kind),
                augmentation_rate: 0.2,
                ..full.clone()
            },
        ));
    }
    out
}

pub fn cmd_ablate(args: &RunArgs, seeds: u64) -> Result<Vec<AblationRow>, CliError> {
    let (cfg, graph) = prepare(args)?;
    let seeds = seeds.max(1);
    let variants = ablation_variants(&cfg.train);
    let mut jobs = Vec::new();
    for (vi, (name, train_cfg)) in variants.iter().enumerate() {
        for s in 0..seeds {
            let mut run_cfg = cfg.clone();
            run_cfg.train = TrainConfig {
                seed: train_cfg.seed.wrapping_add(s),
                ..train_cfg.clone()
            };
            let dir = if seeds == 1 {
                args.out.join(name)
            } else {
                args.out.join(name).join(format!("seed-{}", run_cfg.train.seed))
            };
            jobs.push((vi, run_cfg, dir));
        }
    }
    let results = run_all(jobs, args.jobs, |(vi, run_cfg, dir)| {
        train_into(&run_cfg, &graph, &dir).map(|o| (vi, o))
    });
    let mut per_variant: Vec<Vec<TrainOutcome>> = vec![Vec::new(); variants.len()];
    for r in results {
        let (vi, o) = r?;
        per_variant[vi].push(o);
    }
    let rows: Vec<AblationRow> = variants
        .iter()
        .zip(&per_variant)
        .map(|((name, _), outs)| {
            let metrics: Vec<MetricReport> = outs.iter().filter_map(|o| o.report.final_metrics).collect();
            let lc: Vec<f64> = outs.iter().filter_map(|o| o.report.epochs.first().map(|e| e.loss_c)).collect();
            AblationRow {
                variant: name.clone(),
                metrics: MetricReport::mean(&metrics),
                initial_loss_c: (!lc.is_empty()).then(|| lc.iter().sum::<f64>() / lc.len() as f64),
            }
        })
        .collect();

    let mut csv = String::from("variant,acc,nmi,ari,f1,initial_loss_c\n");
    for r in &rows {
        let m = |f: fn(&MetricReport) -> f64| r.metrics.as_ref().map(|m| f(m).to_string()).unwrap_or_default();
        let lc = r.initial_loss_c.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(csv, "{},{},{},{},{},{}", r.variant, m(|m| m.acc), m(|m| m.nmi), m(|m| m.ari), m(|m| m.f1), lc);
    }
    write(&args.out.join("ablation.csv"), &csv)?;
    write(
        &args.out.join("ablation.json"),
        serde_json::to_string_pretty(&rows).expect("rows serialize") + "\n",
    )?;
    for r in &rows {
        println!("{:<30} {}", r.variant, summary(r.metrics.as_ref()));
    }
    Ok(rows)
}

/// Hyperparameters `sweep` accepts.
pub const SWEEP_PARAMS: [&str; 4] = ["alpha", "tau", "temp", "filter_depth"];

#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub value: String,
    pub metrics: Option<MetricReport>,
}

pub fn cmd_sweep(args: &RunArgs, param: &str, values: &[String]) -> Result<Vec<SweepRow>, CliError> {
    if !SWEEP_PARAMS.contains(&param) {
        return Err(config_err(Error::BadValue {
            key: param.to_string(),
            msg: format!("sweep parameter must be one of {}", SWEEP_PARAMS.join(", ")),
        }));
    }
    let (base, graph) = prepare(args)?;
    let mut jobs = Vec::new();
    for v in values {
        let mut cfg = base.clone();
        cfg.set(param, v).map_err(config_err)?;
        cfg.finalize().map_err(config_err)?;
        jobs.push((v.clone(), cfg, args.out.join(format!("{param}-{v}"))));
    }
    let results = run_all(jobs, args.jobs, |(v, cfg, dir)| {
        train_into(&cfg, &graph, &dir).map(|o| SweepRow {
            value: v,
            metrics: o.report.final_metrics,
        })
    });
    let rows = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let mut csv = format!("{param},acc,nmi,ari,f1\n");
    for r in &rows {
        match &r.metrics {
            Some(m) => {
                let _ = writeln!(csv, "{},{},{},{},{}", r.value, m.acc, m.nmi, m.ari, m.f1);
            }
            None => {
                let _ = writeln!(csv, "{},,,,", r.value);
            }
        }
    }
    write(&args.out.join("sweep.csv"), &csv)?;
    for r in &rows {
        println!("{param}={:<10} {}", r.value, summary(r.metrics.as_ref()));
    }
    Ok(rows)
}

pub fn cmd_synth(args: &SynthArgs) -> Result<(), CliError> {
    let mut spec = SbmSpec::new(args.n_per_block, args.blocks, args.p_in, args.p_out, args.attr_sep, args.seed);
    if let Some(dim) = args.dim {
        spec.dim = dim;
    }
    let graph = stochastic_block_model(&spec).map_err(config_err)?;
    let out = &args.out;
    fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    let (attr, edges, labels) = (out.join("attributes.csv"), out.join("edges.txt"), out.join("labels.txt"));
    graph.save(&attr, &edges, Some(&labels)).map_err(data_err)?;
    let cfg = format!(
        "dataset.attr = attributes.csv\ndataset.edges = edges.txt\ndataset.labels = labels.txt\nk = {}\n",
        args.blocks
    );
    write(&out.join("dataset.cfg"), cfg)?;
    println!("{} nodes, {} edges -> {}", graph.n(), graph.edge_count(), out.display());
    Ok(())
}

/// Reads one label per line; a `node,cluster` CSV keeps the last column.
fn read_labels(path: &Path) -> Result<Vec<usize>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line == "node,cluster" {
            continue;
        }
        let field = line.rsplit(',').next().unwrap_or(line).trim();
        out.push(field.parse().map_err(|_| {
            data_err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                msg: format!("`{field}` is not a label"),
            })
        })?);
    }
    Ok(out)
}

pub fn cmd_eval(truth: &Path, pred: &Path, norm: NmiNorm) -> Result<(), CliError> {
    let t = read_labels(truth)?;
    let p = read_labels(pred)?;
    let report = evaluate(&t, &p, norm).map_err(data_err)?;
    println!("{}", serde_json::to_string(&report).expect("report serializes"));
    Ok(())
}
