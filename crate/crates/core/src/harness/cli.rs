//! Command-line front end: `train`, `eval`, `ablate`, `baseline`, `synth`.
//!
//! Exit codes: 0 on success, 1 for usage and validation errors, 2 when a
//! computation fails (divergence, I/O).

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::checkpoint;
use crate::data::{generate_synthetic, Dataset, Split, SyntheticSpec};
use crate::error::{Error, Result};
use crate::hierarchy::{LabelHierarchy, DEFAULT_ADAPTIVE_DIM};
use crate::model::{GraphMode, ModelConfig, Widths, DEFAULT_PROJ_DIM};
use crate::objectives::{train, LossTerms, LossWeights, TrainConfig};

use super::knn::knn_baseline;
use super::metrics::evaluate;
use super::mlp::{baseline_config, train_mlp};
use super::report::{Report, Row};
use super::{ablation_report, Variant};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "HHAR_OUT_DIR";
const DEFAULT_OUT_DIR: &str = "hhar-out";

#[derive(Debug, Parser)]
#[command(name = "hhar", version, about = "Hierarchy-aware multi-label activity classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a model and write a checkpoint, epoch log and report.
    Train(TrainCmd),
    /// Score a checkpoint on one split of its data.
    Eval(EvalCmd),
    /// Train and score every ablation variant.
    Ablate(AblateCmd),
    /// Score the k-NN and MLP baselines.
    Baseline(BaselineCmd),
    /// Generate a synthetic hierarchical dataset.
    Synth(SynthCmd),
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Directory holding features.csv and hierarchy.tsv.
    #[arg(long, value_name = "DIR", conflicts_with_all = ["features", "synthetic"])]
    data: Option<PathBuf>,
    /// Feature CSV (header f0..f{d-1},label).
    #[arg(long, value_name = "CSV", requires = "hierarchy", conflicts_with = "synthetic")]
    features: Option<PathBuf>,
    /// Hierarchy edge file, or `daliac` / `hapt` for the bundled ones.
    #[arg(long, value_name = "TSV")]
    hierarchy: Option<String>,
    /// Synthetic spec: a key=value file, or inline `depth=2,branching=3,...`.
    #[arg(long, value_name = "SPEC")]
    synthetic: Option<String>,
    /// Train/val/test fractions.
    #[arg(long, value_name = "F,F,F")]
    split: Option<String>,
}

#[derive(Debug, Args)]
struct WidthArgs {
    /// Width of label, graph and data embeddings.
    #[arg(long, default_value_t = 64)]
    width: usize,
    /// Width of the alignment projection.
    #[arg(long, default_value_t = DEFAULT_PROJ_DIM)]
    proj_width: usize,
    /// Width of the adaptive-graph node embeddings.
    #[arg(long, default_value_t = DEFAULT_ADAPTIVE_DIM)]
    adaptive_width: usize,
}

#[derive(Debug, Args)]
struct OptimArgs {
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    /// Learning rate of epoch 0; it halves every epoch.
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
}

#[derive(Debug, Args)]
struct LossArgs {
    #[arg(long, default_value_t = 1.0)]
    lambda_con: f64,
    #[arg(long, default_value_t = 1.0)]
    lambda_ce: f64,
    #[arg(long, default_value_t = 1.0)]
    margin: f64,
}

#[derive(Debug, Args)]
struct TrainCmd {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    widths: WidthArgs,
    #[command(flatten)]
    optim: OptimArgs,
    #[command(flatten)]
    loss: LossArgs,
    /// Loss terms to optimize, from align, con, ce.
    #[arg(long, default_value = "align,con,ce")]
    losses: String,
    /// Graphs used by the graph layers: none, predefined, adaptive, both.
    #[arg(long, default_value = "both")]
    graph: String,
    /// Propagate data embeddings over the label graphs (on/off).
    #[arg(long, default_value = "on")]
    propagation: String,
    #[arg(long)]
    seed: u64,
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalCmd {
    #[arg(long, value_name = "FILE")]
    checkpoint: PathBuf,
    /// Data to score; defaults to the data the checkpoint was trained on.
    #[command(flatten)]
    data: DataArgs,
    /// Split to score.
    #[arg(long, default_value = "val")]
    on: String,
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AblateCmd {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    widths: WidthArgs,
    #[command(flatten)]
    optim: OptimArgs,
    #[command(flatten)]
    loss: LossArgs,
    /// Comma-separated subset of variants; all eight by default.
    #[arg(long)]
    variants: Option<String>,
    /// Number of seeds, counting up from --seed; rows report means.
    #[arg(long, default_value_t = 1)]
    repeats: u64,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value = "test")]
    on: String,
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BaselineCmd {
    #[command(flatten)]
    data: DataArgs,
    /// knn, mlp or all.
    #[arg(long, default_value = "all")]
    kind: String,
    #[arg(long, default_value_t = super::knn::DEFAULT_K)]
    k: usize,
    #[arg(long, default_value_t = super::mlp::DEFAULT_HIDDEN)]
    hidden: usize,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    /// Initial MLP learning rate; it halves every epoch.
    #[arg(long, default_value_t = super::mlp::DEFAULT_LR)]
    lr: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "test")]
    on: String,
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SynthCmd {
    /// Start from a key=value spec file; flags below override it.
    #[arg(long, value_name = "FILE")]
    spec: Option<PathBuf>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    branching: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    per_leaf: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

/// Where a dataset comes from. Stored in checkpoints so `eval` can rebuild it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Dir(PathBuf),
    Files { features: PathBuf, hierarchy: String },
    Synthetic(SyntheticSpec),
}

impl DataSource {
    pub fn load(&self) -> Result<Dataset> {
        match self {
            DataSource::Dir(dir) => Dataset::load(dir.join("features.csv"), dir.join("hierarchy.tsv")),
            DataSource::Files { features, hierarchy } => {
                let h = load_hierarchy(hierarchy)?;
                Dataset::from_csv(h, std::fs::File::open(features)?)
            }
            DataSource::Synthetic(spec) => generate_synthetic(spec),
        }
    }
}

fn load_hierarchy(name: &str) -> Result<LabelHierarchy> {
    match name {
        "daliac" => Ok(LabelHierarchy::daliac()),
        "hapt" => Ok(LabelHierarchy::hapt()),
        path => LabelHierarchy::from_file(path),
    }
}

fn parse_spec(text: &str) -> Result<SyntheticSpec> {
    if Path::new(text).is_file() {
        return SyntheticSpec::parse(&std::fs::read_to_string(text)?);
    }
    SyntheticSpec::parse(&text.replace(',', "\n"))
}

impl DataArgs {
    fn source(&self) -> Result<Option<DataSource>> {
        Ok(match (&self.data, &self.features, &self.synthetic) {
            (Some(dir), _, _) => Some(DataSource::Dir(dir.clone())),
            (_, Some(f), _) => Some(DataSource::Files {
                features: f.clone(),
                hierarchy: self.hierarchy.clone().unwrap_or_default(),
            }),
            (_, _, Some(s)) => Some(DataSource::Synthetic(parse_spec(s)?)),
            _ => None,
        })
    }

    fn required_source(&self) -> Result<DataSource> {
        self.source()?
            .ok_or_else(|| Error::Validation("no data given: use --data, --features/--hierarchy or --synthetic".into()))
    }

    fn fractions(&self) -> Result<Option<[f64; 3]>> {
        self.split.as_deref().map(parse_fractions).transpose()
    }
}

fn parse_fractions(text: &str) -> Result<[f64; 3]> {
    let parts: Vec<f64> = text
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Validation(format!("bad split `{text}`")))?;
    <[f64; 3]>::try_from(parts).map_err(|_| Error::Validation(format!("split `{text}` needs three fractions")))
}

const DEFAULT_FRACTIONS: [f64; 3] = [0.8, 0.1, 0.1];

fn fractions_text(f: [f64; 3]) -> String {
    format!("{},{},{}", f[0], f[1], f[2])
}

fn parse_switch(text: &str) -> Result<bool> {
    match text {
        "on" => Ok(true),
        "off" => Ok(false),
        other => Err(Error::Validation(format!("expected on or off, got `{other}`"))),
    }
}

impl WidthArgs {
    fn widths(&self) -> Widths {
        Widths { adaptive: self.adaptive_width, proj: self.proj_width, ..Widths::uniform(self.width) }
    }
}

fn train_config(optim: &OptimArgs, loss: &LossArgs, terms: LossTerms, seed: u64) -> TrainConfig {
    TrainConfig {
        epochs: optim.epochs,
        batch_size: optim.batch_size,
        initial_lr: optim.lr,
        seed,
        weights: LossWeights { lambda_con: loss.lambda_con, lambda_ce: loss.lambda_ce, margin: loss.margin },
        terms,
    }
}

fn out_dir(out: &Option<PathBuf>) -> PathBuf {
    out.clone()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

/// Parses `args` (program name first) and runs the subcommand.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let result = match cli.command {
        Command::Train(c) => cmd_train(c),
        Command::Eval(c) => cmd_eval(c),
        Command::Ablate(c) => cmd_ablate(c),
        Command::Baseline(c) => cmd_baseline(c),
        Command::Synth(c) => cmd_synth(c),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                1
            } else {
                2
            }
        }
    }
}

fn finish(report: &Report, dir: &Path) -> Result<()> {
    report.write(dir)?;
    print!("{}", report.to_table(true));
    println!("wrote {}", dir.join("report.json").display());
    Ok(())
}

fn cmd_train(c: TrainCmd) -> Result<()> {
    let source = c.data.required_source()?;
    let fractions = c.data.fractions()?.unwrap_or(DEFAULT_FRACTIONS);
    let data = source.load()?.split(fractions, c.seed)?;
    let model_config = ModelConfig {
        feature_dim: data.dim(),
        widths: c.widths.widths(),
        graph: c.graph.parse::<GraphMode>()?,
        feature_propagation: parse_switch(&c.propagation)?,
    };
    let cfg = train_config(&c.optim, &c.loss, LossTerms::parse(&c.losses)?, c.seed);
    let trained = train(&data, model_config.clone(), &cfg)?;

    let dir = out_dir(&c.out);
    std::fs::create_dir_all(&dir)?;
    let mut log_file = std::io::BufWriter::new(std::fs::File::create(dir.join("train_log.jsonl"))?);
    for e in &trained.log {
        writeln!(log_file, "{}", serde_json::to_string(e)?)?;
        eprintln!(
            "epoch {:>3}  lr {:.3e}  total {:.5}  train_acc {:.4}  val_acc {}  ({:.2}s)",
            e.epoch,
            e.lr,
            e.total,
            e.train_acc,
            e.val_acc.map_or("-".into(), |v| format!("{v:.4}")),
            e.seconds
        );
    }
    log_file.flush()?;

    let mut run = BTreeMap::new();
    run.insert("seed".to_string(), c.seed.to_string());
    run.insert("split".to_string(), fractions_text(fractions));
    run.insert("data".to_string(), serde_json::to_string(&source)?);
    checkpoint::save(dir.join("model.ckpt"), &trained.model, &run)?;

    let mut rows = Vec::new();
    for split in [Split::Val, Split::Test] {
        if !data.indices(split).is_empty() {
            let mut row = Row::ok(split.name(), evaluate(&trained.model, &data, split)?);
            row.final_loss = trained.log.last().map(|e| e.total);
            row.seconds_per_epoch = mean_seconds(&trained.log);
            rows.push(row);
        }
    }
    let mut report = Report::new("train", rows);
    report.config = json!({
        "data": source,
        "split": fractions,
        "model": model_config,
        "train": cfg,
    });
    finish(&report, &dir)
}

fn mean_seconds(log: &[crate::objectives::EpochLog]) -> Option<f64> {
    (!log.is_empty()).then(|| log.iter().map(|e| e.seconds).sum::<f64>() / log.len() as f64)
}

fn cmd_eval(c: EvalCmd) -> Result<()> {
    let (model, run) = checkpoint::load(&c.checkpoint)?;
    let meta = |key: &str| {
        run.get(key).cloned().ok_or_else(|| Error::Checkpoint(format!("run metadata lacks `{key}`")))
    };
    let source = match c.data.source()? {
        Some(s) => s,
        None => serde_json::from_str(&meta("data")?).map_err(|e| Error::Checkpoint(format!("data source: {e}")))?,
    };
    let seed: u64 = meta("seed")?.parse().map_err(|_| Error::Checkpoint("bad seed".into()))?;
    let fractions = match c.data.fractions()? {
        Some(f) => f,
        None => parse_fractions(&meta("split")?)?,
    };
    let split: Split = c.on.parse()?;
    let data = source.load()?.split(fractions, seed)?;
    let mut report = Report::new("eval", vec![Row::ok(split.name(), evaluate(&model, &data, split)?)]);
    report.config = json!({
        "checkpoint": c.checkpoint,
        "data": source,
        "split": fractions,
        "seed": seed,
    });
    finish(&report, &out_dir(&c.out))
}

fn cmd_ablate(c: AblateCmd) -> Result<()> {
    let data = c.data.required_source()?.load()?;
    let fractions = c.data.fractions()?.unwrap_or(DEFAULT_FRACTIONS);
    let variants: Vec<Variant> = match &c.variants {
        Some(list) => list.split(',').map(|v| v.trim().parse()).collect::<Result<_>>()?,
        None => Variant::ALL.to_vec(),
    };
    if c.repeats == 0 {
        return Err(Error::Validation("--repeats must be at least 1".into()));
    }
    let seeds: Vec<u64> = (0..c.repeats).map(|i| c.seed.wrapping_add(i)).collect();
    let base = train_config(&c.optim, &c.loss, LossTerms::ALL, c.seed);
    let split: Split = c.on.parse()?;
    let mut report = ablation_report(&data, fractions, c.widths.widths(), &base, &variants, &seeds, split)?;
    report.config = json!({
        "data": c.data.source()?,
        "split": fractions,
        "widths": c.widths.widths(),
        "train": base,
        "seeds": seeds,
        "evaluated_on": split.name(),
    });
    finish(&report, &out_dir(&c.out))
}

fn cmd_baseline(c: BaselineCmd) -> Result<()> {
    let source = c.data.required_source()?;
    let fractions = c.data.fractions()?.unwrap_or(DEFAULT_FRACTIONS);
    let data = source.load()?.split(fractions, c.seed)?;
    let split: Split = c.on.parse()?;
    let (knn, mlp) = match c.kind.as_str() {
        "knn" => (true, false),
        "mlp" => (false, true),
        "all" => (true, true),
        other => return Err(Error::Validation(format!("unknown baseline `{other}`"))),
    };
    let cfg = TrainConfig { epochs: c.epochs, batch_size: c.batch_size, initial_lr: c.lr, ..baseline_config(c.seed) };
    let mut rows = Vec::new();
    if knn {
        rows.push(match knn_baseline(&data, c.k, split) {
            Ok(m) => Row::ok(format!("knn_k{}", c.k), m),
            Err(e) if e.is_validation() => return Err(e),
            Err(e) => Row::failed(format!("knn_k{}", c.k), e),
        });
    }
    if mlp {
        let name = format!("mlp_h{}", c.hidden);
        rows.push(match train_mlp(&data, c.hidden, &cfg).and_then(|(m, log)| Ok((evaluate(&m, &data, split)?, log))) {
            Ok((m, log)) => {
                let mut row = Row::ok(name, m);
                row.final_loss = log.last().map(|e| e.total);
                row.seconds_per_epoch = mean_seconds(&log);
                row
            }
            Err(e) if e.is_validation() => return Err(e),
            Err(e) => Row::failed(name, e),
        });
    }
    let mut report = Report::new("baseline", rows);
    report.config = json!({
        "data": source,
        "split": fractions,
        "k": c.k,
        "hidden": c.hidden,
        "train": cfg,
        "evaluated_on": split.name(),
    });
    finish(&report, &out_dir(&c.out))
}

fn cmd_synth(c: SynthCmd) -> Result<()> {
    let mut spec = match &c.spec {
        Some(path) => SyntheticSpec::parse(&std::fs::read_to_string(path)?)?,
        None => SyntheticSpec::default(),
    };
    spec.depth = c.depth.unwrap_or(spec.depth);
    spec.branching = c.branching.unwrap_or(spec.branching);
    spec.dim = c.dim.unwrap_or(spec.dim);
    spec.rho = c.rho.unwrap_or(spec.rho);
    spec.sigma = c.sigma.unwrap_or(spec.sigma);
    spec.per_leaf = c.per_leaf.unwrap_or(spec.per_leaf);
    spec.seed = c.seed.unwrap_or(spec.seed);
    spec.validate()?;
    let data = generate_synthetic(&spec)?;
    let dir = out_dir(&c.out);
    data.save(&dir)?;
    std::fs::write(dir.join("synthetic.spec"), spec.to_text())?;
    println!(
        "wrote {} examples, {} labels, d={} to {}",
        data.len(),
        data.hierarchy.len(),
        data.dim(),
        dir.display()
    );
    Ok(())
}
