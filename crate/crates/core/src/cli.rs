//! Command-line front end.
//!
//! Settings resolve as flags, then `FUSELAB_*` environment variables, then a
//! `fuselab.toml` file, then built-in defaults. The resolved settings are
//! written as `run-config.toml` into every output directory.

use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use clap::builder::BoolishValueParser;
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::checkpoint::{load_model, save_model, save_weights, WEIGHTS_FILE};
use crate::data::manifest::{load_dataset, rewrite_splits, write_dataset, CHIP_DIR};
use crate::data::{augment, class_names, split, synth_generate, DatasetSplit, SplitFractions, SplitName, SynthConfig};
use crate::error::Error;
use crate::eval::{
    compare_paradigms, emit_report, evaluate, metrics_from_cm, table_to_markdown, tables_from_csv, tables_to_csv,
    ReportFormat,
};
use crate::fusion::{build_model, derive_weights, Backbone, LateWeights, ModelSpec, NetRole, Paradigm, ParadigmKind};
use crate::train::{network_recalls, train_paradigms, train_with_progress, EpochRecord, Optimizer, TrainConfig};

pub const CONFIG_FILE: &str = "fuselab.toml";
pub const RUN_CONFIG_FILE: &str = "run-config.toml";
pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_JOBS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Numeric,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Usage => 2,
            ErrorKind::Data => 3,
            ErrorKind::Numeric => 4,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ErrorKind::Usage => "usage",
            ErrorKind::Data => "data",
            ErrorKind::Numeric => "numeric",
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        CliError {
            kind: ErrorKind::Usage,
            message: message.into(),
        }
    }

    fn data(message: impl Into<String>) -> Self {
        CliError {
            kind: ErrorKind::Data,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let one_line = self.message.lines().map(str::trim).filter(|l| !l.is_empty()).collect::<Vec<_>>().join("; ");
        write!(f, "error[{}]: {one_line}", self.kind.label())
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let kind = if e.is_numeric() {
            ErrorKind::Numeric
        } else if matches!(e, Error::InvalidArgument(_)) {
            ErrorKind::Usage
        } else {
            ErrorKind::Data
        };
        CliError {
            kind,
            message: e.to_string(),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn parse_paradigm(s: &str) -> Result<ParadigmKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_split(s: &str) -> Result<SplitName, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "fuselab", version, about = "Train and compare early, joint and late fusion CNNs on paired image chips")]
pub struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// Seed for data generation, splitting, initialisation and shuffling.
    #[arg(long, global = true, env = "FUSELAB_SEED")]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, env = "FUSELAB_OUT")]
    out: Option<PathBuf>,
    /// Suppress progress output.
    #[arg(long, global = true, env = "FUSELAB_QUIET", num_args = 0..=1, default_missing_value = "true", value_parser = BoolishValueParser::new())]
    quiet: Option<bool>,
    /// Settings file (default: ./fuselab.toml when present).
    #[arg(long, global = true, env = "FUSELAB_CONFIG")]
    config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Create or re-split a dataset directory.
    Dataset {
        #[command(subcommand)]
        command: DatasetCommand,
    },
    /// Train one paradigm and save its checkpoint(s).
    Train(TrainCmd),
    /// Evaluate a saved model on one split.
    Eval(EvalCmd),
    /// Late-fusion weight utilities.
    Weights {
        #[command(subcommand)]
        command: WeightsCommand,
    },
    /// Train and evaluate all six variants and rank them.
    Compare(CompareCmd),
}

#[derive(Debug, Subcommand)]
enum DatasetCommand {
    /// Generate a synthetic two-modality dataset.
    Synth(SynthCmd),
    /// Reassign the train/val/test split of an existing dataset.
    Split(SplitCmd),
}

#[derive(Debug, Subcommand)]
enum WeightsCommand {
    /// Derive binary per-class weights from per-class recalls.
    Derive(DeriveCmd),
}

#[derive(Debug, Args)]
struct DataArg {
    /// Dataset directory.
    #[arg(long, env = "FUSELAB_DATA")]
    data: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ShapeArgs {
    /// Samples per class.
    #[arg(long, env = "FUSELAB_PER_CLASS")]
    per_class: Option<usize>,
    /// Chip width and height.
    #[arg(long, env = "FUSELAB_SIZE")]
    size: Option<usize>,
    /// Modality-A channels.
    #[arg(long = "p", env = "FUSELAB_P")]
    p: Option<usize>,
    /// Modality-B channels.
    #[arg(long = "b", env = "FUSELAB_B")]
    b: Option<usize>,
    /// Number of classes.
    #[arg(long, env = "FUSELAB_CLASSES")]
    classes: Option<usize>,
}

#[derive(Debug, Args)]
struct SplitArgs {
    /// Validation fraction.
    #[arg(long, env = "FUSELAB_VAL_FRACTION")]
    val_fraction: Option<f64>,
    /// Test fraction.
    #[arg(long, env = "FUSELAB_TEST_FRACTION")]
    test_fraction: Option<f64>,
    /// Split each class separately.
    #[arg(long, env = "FUSELAB_STRATIFIED", num_args = 0..=1, default_missing_value = "true", value_parser = BoolishValueParser::new())]
    stratified: Option<bool>,
}

#[derive(Debug, Args)]
struct SynthCmd {
    #[command(flatten)]
    shape: ShapeArgs,
    #[command(flatten)]
    split: SplitArgs,
    /// Replace an existing dataset in the output directory.
    #[arg(long)]
    force: bool,
}

#[derive(Debug, Args)]
struct SplitCmd {
    #[command(flatten)]
    data: DataArg,
    #[command(flatten)]
    split: SplitArgs,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Passes over the training split (default 30)
    #[arg(long, env = "FUSELAB_EPOCHS")]
    epochs: Option<usize>,
    /// Samples per gradient step (default 16)
    #[arg(long, env = "FUSELAB_BATCH_SIZE")]
    batch_size: Option<usize>,
    /// Step size (default 0.001)
    #[arg(long, env = "FUSELAB_LEARNING_RATE")]
    learning_rate: Option<f64>,
    /// adam or sgd.
    #[arg(long, env = "FUSELAB_OPTIMIZER")]
    optimizer: Option<String>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Also rotate-augment the validation and test splits.
    #[arg(long, env = "FUSELAB_AUGMENT_EVAL", num_args = 0..=1, default_missing_value = "true", value_parser = BoolishValueParser::new())]
    augment_eval: Option<bool>,
    /// Split to evaluate on: val or test.
    #[arg(long, env = "FUSELAB_SPLIT", value_parser = parse_split)]
    split: Option<SplitName>,
}

#[derive(Debug, Args)]
struct TrainCmd {
    #[command(flatten)]
    data: DataArg,
    /// One of single-a, single-b, early, joint, late-mean, late-weighted.
    #[arg(long, env = "FUSELAB_PARADIGM", value_parser = parse_paradigm)]
    paradigm: Option<ParadigmKind>,
    #[command(flatten)]
    train: TrainArgs,
    #[command(flatten)]
    eval: EvalArgs,
}

#[derive(Debug, Args)]
struct EvalCmd {
    #[command(flatten)]
    data: DataArg,
    /// Model directory written by `train`.
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    eval: EvalArgs,
}

#[derive(Debug, Args)]
struct DeriveCmd {
    #[command(flatten)]
    data: DataArg,
    /// Late-fusion model directory whose two networks supply the recalls.
    #[arg(long, conflicts_with_all = ["recall_a", "recall_b"])]
    model: Option<PathBuf>,
    /// Per-class recalls of the modality-A network, comma separated.
    #[arg(long, value_delimiter = ',', requires = "recall_b")]
    recall_a: Option<Vec<f64>>,
    /// Per-class recalls of the modality-B network, comma separated.
    #[arg(long, value_delimiter = ',', requires = "recall_a")]
    recall_b: Option<Vec<f64>>,
    #[command(flatten)]
    eval: EvalArgs,
}

#[derive(Debug, Args)]
struct CompareCmd {
    #[command(flatten)]
    data: DataArg,
    #[command(flatten)]
    train: TrainArgs,
    #[command(flatten)]
    eval: EvalArgs,
    /// Networks trained concurrently.
    #[arg(long, env = "FUSELAB_JOBS")]
    jobs: Option<usize>,
    /// Rank metric tables from a CSV instead of training.
    #[arg(long)]
    from_tables: Option<PathBuf>,
}

/// Contents of a settings file; every key is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub quiet: Option<bool>,
    pub data: Option<PathBuf>,
    pub paradigm: Option<String>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub optimizer: Option<String>,
    pub per_class: Option<usize>,
    pub size: Option<usize>,
    pub p: Option<usize>,
    pub b: Option<usize>,
    pub classes: Option<usize>,
    pub val_fraction: Option<f64>,
    pub test_fraction: Option<f64>,
    pub stratified: Option<bool>,
    pub augment_eval: Option<bool>,
    pub split: Option<String>,
    pub jobs: Option<usize>,
}

/// Fully resolved settings of one invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: String,
    pub seed: u64,
    pub out: PathBuf,
    pub quiet: bool,
    pub data: PathBuf,
    pub paradigm: String,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: String,
    pub per_class: usize,
    pub size: usize,
    pub p: usize,
    pub b: usize,
    pub classes: usize,
    pub val_fraction: f64,
    pub test_fraction: f64,
    pub stratified: bool,
    pub augment_eval: bool,
    pub split: String,
    pub jobs: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub from_tables: Option<PathBuf>,
}

impl RunConfig {
    pub fn train_config(&self) -> CliResult<TrainConfig> {
        let optimizer = match self.optimizer.as_str() {
            "adam" => Optimizer::adam(),
            "sgd" => Optimizer::Sgd,
            other => return Err(CliError::usage(format!("unknown optimizer '{other}' (valid: adam, sgd)"))),
        };
        let config = TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            optimizer,
            seed: self.seed,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn paradigm(&self) -> CliResult<ParadigmKind> {
        self.paradigm.parse().map_err(|e: Error| CliError::usage(e.to_string()))
    }

    pub fn eval_split(&self) -> CliResult<SplitName> {
        match self.split.parse() {
            Ok(SplitName::Train) => Err(CliError::usage("evaluation split must be val or test")),
            Ok(s) => Ok(s),
            Err(e) => Err(CliError::usage(e.to_string())),
        }
    }

    pub fn fractions(&self) -> SplitFractions {
        SplitFractions {
            train: 1.0 - self.val_fraction - self.test_fraction,
            val: self.val_fraction,
            test: self.test_fraction,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serialises")
    }
}

fn load_file_config(explicit: Option<&Path>) -> CliResult<FileConfig> {
    let path = match explicit {
        Some(p) => p.to_path_buf(),
        None => {
            let p = PathBuf::from(CONFIG_FILE);
            if !p.exists() {
                return Ok(FileConfig::default());
            }
            p
        }
    };
    let text = fs::read_to_string(&path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::usage(format!("{}: {}", path.display(), e.message())))
}

#[derive(Default)]
struct Overrides {
    data: Option<PathBuf>,
    paradigm: Option<ParadigmKind>,
    epochs: Option<usize>,
    batch_size: Option<usize>,
    learning_rate: Option<f64>,
    optimizer: Option<String>,
    per_class: Option<usize>,
    size: Option<usize>,
    p: Option<usize>,
    b: Option<usize>,
    classes: Option<usize>,
    val_fraction: Option<f64>,
    test_fraction: Option<f64>,
    stratified: Option<bool>,
    augment_eval: Option<bool>,
    split: Option<SplitName>,
    jobs: Option<usize>,
    model: Option<PathBuf>,
    from_tables: Option<PathBuf>,
}

impl Overrides {
    fn data(mut self, a: &DataArg) -> Self {
        self.data = a.data.clone();
        self
    }

    fn shape(mut self, a: &ShapeArgs) -> Self {
        (self.per_class, self.size, self.p, self.b, self.classes) = (a.per_class, a.size, a.p, a.b, a.classes);
        self
    }

    fn split(mut self, a: &SplitArgs) -> Self {
        (self.val_fraction, self.test_fraction, self.stratified) = (a.val_fraction, a.test_fraction, a.stratified);
        self
    }

    fn train(mut self, a: &TrainArgs) -> Self {
        self.epochs = a.epochs;
        self.batch_size = a.batch_size;
        self.learning_rate = a.learning_rate;
        self.optimizer = a.optimizer.clone();
        self
    }

    fn eval(mut self, a: &EvalArgs) -> Self {
        (self.augment_eval, self.split) = (a.augment_eval, a.split);
        self
    }
}

fn resolve(command: &str, global: &GlobalArgs, o: Overrides, file: FileConfig, default_out: &dyn Fn(&RunConfig) -> PathBuf) -> RunConfig {
    let mut cfg = RunConfig {
        command: command.to_string(),
        seed: global.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
        out: PathBuf::new(),
        quiet: global.quiet.or(file.quiet).unwrap_or(false),
        data: o.data.or(file.data).unwrap_or_else(|| PathBuf::from("data")),
        paradigm: o
            .paradigm
            .map(|k| k.name().to_string())
            .or(file.paradigm)
            .unwrap_or_else(|| ParadigmKind::LateWeighted.name().to_string()),
        epochs: o.epochs.or(file.epochs).unwrap_or(30),
        batch_size: o.batch_size.or(file.batch_size).unwrap_or(16),
        learning_rate: o.learning_rate.or(file.learning_rate).unwrap_or(1e-3),
        optimizer: o.optimizer.or(file.optimizer).unwrap_or_else(|| "adam".into()),
        per_class: o.per_class.or(file.per_class).unwrap_or(100),
        size: o.size.or(file.size).unwrap_or(64),
        p: o.p.or(file.p).unwrap_or(2),
        b: o.b.or(file.b).unwrap_or(13),
        classes: o.classes.or(file.classes).unwrap_or(5),
        val_fraction: o.val_fraction.or(file.val_fraction).unwrap_or(0.10),
        test_fraction: o.test_fraction.or(file.test_fraction).unwrap_or(0.05),
        stratified: o.stratified.or(file.stratified).unwrap_or(true),
        augment_eval: o.augment_eval.or(file.augment_eval).unwrap_or(true),
        split: o
            .split
            .map(|s| s.as_str().to_string())
            .or(file.split)
            .unwrap_or_else(|| "val".into()),
        jobs: o.jobs.or(file.jobs).unwrap_or(DEFAULT_JOBS),
        model: o.model,
        from_tables: o.from_tables,
    };
    cfg.out = global.out.clone().or(file.out).unwrap_or_else(|| default_out(&cfg));
    cfg
}

struct Progress {
    quiet: bool,
    epochs: usize,
}

impl Progress {
    fn epoch(&self, net: &str, r: &EpochRecord) {
        if self.quiet {
            return;
        }
        let val = match (r.val_loss, r.val_accuracy) {
            (Some(l), Some(a)) => format!(" val_loss {l:.4} val_acc {a:.4}"),
            _ => String::new(),
        };
        eprintln!(
            "[{net}] epoch {}/{}: loss {:.4} acc {:.4}{val}",
            r.epoch, self.epochs, r.train_loss, r.train_accuracy
        );
    }

    fn note(&self, msg: &str) {
        if !self.quiet {
            eprintln!("{msg}");
        }
    }
}

fn write_file(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e).into())
}

fn create_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e).into())
}

fn write_run_config(dir: &Path, cfg: &RunConfig) -> CliResult<()> {
    write_file(&dir.join(RUN_CONFIG_FILE), &cfg.to_toml())
}

fn load_split(cfg: &RunConfig) -> CliResult<(DatasetSplit, ModelSpec)> {
    let raw = load_dataset(&cfg.data)?;
    if raw.train.is_empty() {
        return Err(CliError::data(format!("{}: dataset has no training samples", cfg.data.display())));
    }
    let (h, w, p) = raw.train[0].chip_a.image_dims()?;
    let (_, _, b) = raw.train[0].chip_b.image_dims()?;
    let spec = ModelSpec {
        width: w,
        height: h,
        p,
        b,
        classes: raw.classes(),
    };
    Ok((augment(&raw, cfg.augment_eval)?, spec))
}

fn dir_has_entries(dir: &Path) -> bool {
    fs::read_dir(dir).map(|mut d| d.next().is_some()).unwrap_or(false)
}

fn cmd_synth(cfg: &RunConfig, force: bool, progress: &Progress) -> CliResult<()> {
    if dir_has_entries(&cfg.out) {
        if !force {
            return Err(CliError::usage(format!(
                "{} is not empty (pass --force to replace the dataset in it)",
                cfg.out.display()
            )));
        }
        let chips = cfg.out.join(CHIP_DIR);
        if chips.exists() {
            fs::remove_dir_all(&chips).map_err(|e| Error::io(&chips, e))?;
        }
    }
    create_dir(&cfg.out)?;
    let synth = SynthConfig::new(cfg.per_class, cfg.size, cfg.p, cfg.b, cfg.classes, cfg.seed);
    let samples = synth_generate(&synth)?;
    let s = split(samples, cfg.fractions(), cfg.seed, cfg.stratified, class_names(cfg.classes))?;
    write_dataset(&cfg.out, &s)?;
    write_run_config(&cfg.out, cfg)?;
    let (tr, va, te) = s.sizes();
    progress.note(&format!(
        "wrote {} samples ({tr}/{va}/{te}) to {}",
        tr + va + te,
        cfg.out.display()
    ));
    Ok(())
}

fn cmd_split(cfg: &RunConfig, progress: &Progress) -> CliResult<()> {
    let raw = load_dataset(&cfg.data)?;
    let names = raw.class_names.clone();
    let mut all = raw.train;
    all.extend(raw.val);
    all.extend(raw.test);
    all.sort_by(|a, b| a.id.cmp(&b.id));
    let s = split(all, cfg.fractions(), cfg.seed, cfg.stratified, names)?;
    rewrite_splits(&cfg.data, &s)?;
    create_dir(&cfg.out)?;
    write_run_config(&cfg.out, cfg)?;
    let (tr, va, te) = s.sizes();
    progress.note(&format!("re-split {}: {tr}/{va}/{te}", cfg.data.display()));
    Ok(())
}

fn cmd_train(cfg: &RunConfig, progress: &Progress) -> CliResult<()> {
    let kind = cfg.paradigm()?;
    let tc = cfg.train_config()?;
    let (data, spec) = load_split(cfg)?;
    let mut model = build_model(Paradigm::from_kind(kind, spec.classes), spec, cfg.seed)?;
    let histories = train_with_progress(&mut model, &data, &tc, &mut |n, r| progress.epoch(n, r))?;
    create_dir(&cfg.out)?;
    save_model(&cfg.out, &model)?;
    for h in &histories {
        write_file(&cfg.out.join(format!("history-{}.csv", h.network)), &h.to_csv())?;
    }
    write_run_config(&cfg.out, cfg)?;
    progress.note(&format!(
        "saved {} model ({} parameters) to {}",
        kind,
        model.param_count(),
        cfg.out.display()
    ));
    Ok(())
}

fn cmd_eval(cfg: &RunConfig, progress: &Progress) -> CliResult<()> {
    let which = cfg.eval_split()?;
    let model_dir = cfg.model.as_deref().expect("eval has a model");
    let model = load_model(model_dir)?;
    let (data, spec) = load_split(cfg)?;
    if spec != model.spec {
        return Err(CliError::data(format!(
            "model expects {}x{} chips with {}+{} channels and {} classes, dataset has {}x{} with {}+{} and {}",
            model.spec.height, model.spec.width, model.spec.p, model.spec.b, model.spec.classes,
            spec.height, spec.width, spec.p, spec.b, spec.classes
        )));
    }
    let samples = data.get(which);
    if samples.is_empty() {
        return Err(CliError::data(format!("{} split is empty", which.as_str())));
    }
    let cm = evaluate(&model, samples, data.class_names.clone())?;
    let table = metrics_from_cm(&cm);
    create_dir(&cfg.out)?;
    let name = model.kind().name().to_string();
    write_file(&cfg.out.join("confusion.csv"), &cm.to_csv())?;
    write_file(&cfg.out.join("metrics.csv"), &tables_to_csv(&[(name.clone(), table.clone())]))?;
    write_file(&cfg.out.join("metrics.md"), &table_to_markdown(&name, &table))?;
    write_run_config(&cfg.out, cfg)?;
    println!("{name} on {}: macro-F1 {:.4}", which.as_str(), table.macro_f1());
    progress.note(&format!("wrote metrics to {}", cfg.out.display()));
    Ok(())
}

fn format_weights(w: &LateWeights) -> String {
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(",");
    format!("alpha=[{}] beta=[{}]", fmt(&w.alpha), fmt(&w.beta))
}

fn cmd_weights(cfg: &RunConfig, recalls: Option<(Vec<f64>, Vec<f64>)>, progress: &Progress) -> CliResult<()> {
    let weights = match (recalls, cfg.model.as_deref()) {
        (Some((ra, rb)), _) => {
            if ra.iter().chain(&rb).any(|r| !(0.0..=1.0).contains(r)) {
                return Err(CliError::usage("recalls must lie in [0, 1]"));
            }
            derive_weights(&ra, &rb)?
        }
        (None, Some(dir)) => {
            let mut model = load_model(dir)?;
            if !model.kind().is_late() {
                return Err(CliError::usage(format!("{} is a {} model; weights need a late-fusion model", dir.display(), model.kind())));
            }
            let which = cfg.eval_split()?;
            let (data, _) = load_split(cfg)?;
            let samples = data.get(which);
            if samples.is_empty() {
                return Err(CliError::data(format!("{} split is empty", which.as_str())));
            }
            let classes = model.spec.classes;
            let ra = network_recalls(&model.nets[0], NetRole::ModalityA, samples, classes)?;
            let rb = network_recalls(&model.nets[1], NetRole::ModalityB, samples, classes)?;
            let w = derive_weights(&ra, &rb)?;
            if let Paradigm::LateWeighted(_) = model.paradigm {
                model.paradigm = Paradigm::LateWeighted(w.clone());
                save_model(dir, &model)?;
            }
            w
        }
        (None, None) => return Err(CliError::usage("pass --model or both --recall-a and --recall-b")),
    };
    create_dir(&cfg.out)?;
    save_weights(&cfg.out.join(WEIGHTS_FILE), &weights)?;
    write_run_config(&cfg.out, cfg)?;
    println!("{}", format_weights(&weights));
    progress.note(&format!("wrote {}", cfg.out.join(WEIGHTS_FILE).display()));
    Ok(())
}

fn emit_all(report: &crate::eval::ParadigmReport, dir: &Path) -> CliResult<()> {
    for f in [ReportFormat::Csv, ReportFormat::Markdown, ReportFormat::Svg] {
        emit_report(report, f, &dir.join(format!("report.{}", f.extension())))?;
    }
    Ok(())
}

fn cmd_compare(cfg: &RunConfig, progress: &Progress) -> CliResult<()> {
    if let Some(path) = &cfg.from_tables {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let report = compare_paradigms(tables_from_csv(&text, path)?)?;
        create_dir(&cfg.out)?;
        emit_all(&report, &cfg.out)?;
        write_run_config(&cfg.out, cfg)?;
        println!("{}", report.verdict());
        return Ok(());
    }
    let which = cfg.eval_split()?;
    let tc = cfg.train_config()?;
    let (data, spec) = load_split(cfg)?;
    let samples = data.get(which);
    if samples.is_empty() {
        return Err(CliError::data(format!("{} split is empty", which.as_str())));
    }
    if cfg.jobs == 0 {
        return Err(CliError::usage("--jobs must be at least 1"));
    }
    let trained = train_paradigms(spec, &Backbone::default(), &data, &tc, cfg.jobs, &|n, r| progress.epoch(n, r))?;
    create_dir(&cfg.out)?;
    let mut tables = Vec::new();
    for (kind, model) in ParadigmKind::ALL.iter().zip(&trained.models) {
        let dir = cfg.out.join(kind.name());
        save_model(&dir, model)?;
        for h in trained.histories_of(*kind) {
            write_file(&dir.join(format!("history-{}.csv", h.network)), &h.to_csv())?;
        }
        let cm = evaluate(model, samples, data.class_names.clone())?;
        let table = metrics_from_cm(&cm);
        write_file(&dir.join("confusion.csv"), &cm.to_csv())?;
        write_file(&dir.join("metrics.csv"), &tables_to_csv(&[(kind.name().to_string(), table.clone())]))?;
        write_run_config(&dir, cfg)?;
        progress.note(&format!("{kind}: macro-F1 {:.4}", table.macro_f1()));
        tables.push((kind.name().to_string(), table));
    }
    let report = compare_paradigms(tables)?;
    emit_all(&report, &cfg.out)?;
    write_run_config(&cfg.out, cfg)?;
    println!("{}", report.verdict());
    Ok(())
}

fn dispatch(cli: Cli) -> CliResult<()> {
    let file = load_file_config(cli.global.config.as_deref())?;
    let g = &cli.global;
    let (cfg, action): (RunConfig, Box<dyn FnOnce(&RunConfig, &Progress) -> CliResult<()>>) = match cli.command {
        Command::Dataset {
            command: DatasetCommand::Synth(c),
        } => {
            let o = Overrides::default().shape(&c.shape).split(&c.split);
            let force = c.force;
            (
                resolve("dataset synth", g, o, file, &|_| PathBuf::from("data")),
                Box::new(move |cfg, p| cmd_synth(cfg, force, p)),
            )
        }
        Command::Dataset {
            command: DatasetCommand::Split(c),
        } => {
            let o = Overrides::default().data(&c.data).split(&c.split);
            (resolve("dataset split", g, o, file, &|cfg| cfg.data.clone()), Box::new(cmd_split))
        }
        Command::Train(c) => {
            let mut o = Overrides::default().data(&c.data).train(&c.train).eval(&c.eval);
            o.paradigm = c.paradigm;
            (
                resolve("train", g, o, file, &|cfg| Path::new("runs").join(&cfg.paradigm)),
                Box::new(cmd_train),
            )
        }
        Command::Eval(c) => {
            let mut o = Overrides::default().data(&c.data).eval(&c.eval);
            o.model = Some(c.model);
            (
                resolve("eval", g, o, file, &|cfg| {
                    cfg.model.clone().unwrap_or_default().join(format!("eval-{}", cfg.split))
                }),
                Box::new(cmd_eval),
            )
        }
        Command::Weights {
            command: WeightsCommand::Derive(c),
        } => {
            let mut o = Overrides::default().data(&c.data).eval(&c.eval);
            o.model = c.model;
            let recalls = c.recall_a.zip(c.recall_b);
            (
                resolve("weights derive", g, o, file, &|cfg| cfg.model.clone().unwrap_or_else(|| PathBuf::from("."))),
                Box::new(move |cfg, p| cmd_weights(cfg, recalls, p)),
            )
        }
        Command::Compare(c) => {
            let mut o = Overrides::default().data(&c.data).train(&c.train).eval(&c.eval);
            o.jobs = c.jobs;
            o.from_tables = c.from_tables;
            (
                resolve("compare", g, o, file, &|_| Path::new("runs").join("compare")),
                Box::new(cmd_compare),
            )
        }
    };
    let progress = Progress {
        quiet: cfg.quiet,
        epochs: cfg.epochs,
    };
    action(&cfg, &progress)
}

/// Runs the CLI on `args` (program name first) and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind as K;
            if matches!(e.kind(), K::DisplayHelp | K::DisplayVersion | K::DisplayHelpOnMissingArgumentOrSubcommand) {
                let _ = e.print();
                return if e.kind() == K::DisplayHelpOnMissingArgumentOrSubcommand { 2 } else { 0 };
            }
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            eprintln!("{}", CliError::usage(first));
            return ErrorKind::Usage.exit_code();
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            e.kind.exit_code()
        }
    }
}
