//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 on a runtime failure, 2 on a usage or
//! configuration error. Settings come from an optional JSON config file
//! (`--config`) and are overridden by flags. A single global seed fans out to
//! the `train` and `probes` substreams unless the config file sets
//! `train.seed` or `likelihood.seed` explicitly. Every command writes its
//! fully resolved configuration next to its primary output as
//! `<output>.config.json`.

use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::classifier::{classify_dataset, class_log_likelihoods_stream, results_to_csv};
use crate::data::{
    gen_two_gaussians, gen_two_moons, read_dataset, write_dataset, AnalyticGaussianScore,
    ClassGaussians, LabeledDataset,
};
use crate::error::Error;
use crate::likelihood::{DivergenceMode, LikelihoodConfig, ProbeDist};
use crate::metrics::evaluate;
use crate::rng::substream_seed;
use crate::score_model::{MlpConfig, MlpScoreNet, ScoreFunction};
use crate::sde::{SdeFamily, SdeSpec};
use crate::training::{train, TrainConfig};

/// A failed command: message and exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: 2,
            message: message.into(),
        }
    }

    fn runtime(message: impl Into<String>) -> Self {
        CliError {
            code: 1,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

/// Configuration errors and unreadable inputs are usage errors; anything
/// else is a runtime failure.
fn classify_error(e: Error) -> CliError {
    match &e {
        Error::InvalidConfig(_)
        | Error::LabelOutOfRange { .. }
        | Error::DimensionMismatch { .. }
        | Error::BadMagic { .. }
        | Error::UnsupportedVersion { .. }
        | Error::Truncated { .. }
        | Error::DimensionOverflow { .. }
        | Error::Format { .. }
        | Error::Io { .. }
        | Error::Json(_)
        | Error::Csv(_) => CliError::usage(e.to_string()),
        _ => CliError::runtime(e.to_string()),
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "sbgc", version, about = "Score-based generative classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic two-class dataset.
    GenToy(GenToyArgs),
    /// Train a conditional score network.
    Train(TrainArgs),
    /// Dump per-sample, per-class log-likelihoods.
    Loglik(InferArgs),
    /// Classify every sample of a dataset.
    Classify(InferArgs),
    /// Compute metrics from a classification CSV.
    Eval(EvalArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ToyKind {
    TwoGaussians,
    TwoMoons,
}

#[derive(Debug, Args)]
struct GenToyArgs {
    kind: ToyKind,
    /// Samples per class.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    n: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Distance of each Gaussian mean from the origin along the first axis.
    #[arg(long, default_value_t = 2.0)]
    offset: f64,
    /// Noise std of the two-moons arcs.
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    /// Output path (`.csv` for CSV, otherwise binary).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// JSON config file; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    sde: Option<SdeFamily>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Checkpoint path; defaults to the report path with extension `sgck`.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    val_fraction: Option<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DivergenceArg {
    Exact,
    Hutchinson,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ProbeArg {
    Rademacher,
    Gaussian,
}

#[derive(Debug, Args)]
struct InferArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, conflicts_with = "oracle")]
    checkpoint: Option<PathBuf>,
    /// Use the exact Gaussian score of a `gen-toy two-gaussians` summary file
    /// instead of a trained network.
    #[arg(long)]
    oracle: Option<PathBuf>,
    /// Number of classes to score (at least 2).
    #[arg(long, value_parser = clap::value_parser!(u64).range(2..))]
    classes: Option<u64>,
    #[arg(long, value_enum)]
    divergence: Option<DivergenceArg>,
    #[arg(long, value_enum)]
    probe_dist: Option<ProbeArg>,
    #[arg(long)]
    probes: Option<usize>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    rtol: Option<f64>,
    #[arg(long)]
    atol: Option<f64>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Classification CSV written by `classify`.
    #[arg(long)]
    predictions: PathBuf,
    /// Metrics JSON path; printed to stdout when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    positive: usize,
}

/// Fully resolved settings shared by all commands.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub sde: SdeSpec,
    pub model: MlpConfig,
    pub train: TrainConfig,
    pub likelihood: LikelihoodConfig,
    pub dataset: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub oracle: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub classes: Option<usize>,
    pub seed: u64,
}

impl RunConfig {
    /// Parses a config file. The flags report whether the file sets
    /// `train.seed` and `likelihood.seed` explicitly.
    pub fn from_json(text: &str) -> Result<(RunConfig, bool, bool), Error> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let has = |section: &str| {
            value
                .get(section)
                .and_then(|s| s.get("seed"))
                .is_some()
        };
        let (train_seed, lik_seed) = (has("train"), has("likelihood"));
        let cfg: RunConfig = serde_json::from_value(value)?;
        Ok((cfg, train_seed, lik_seed))
    }
}

fn load_config(common: &CommonArgs) -> CliResult<RunConfig> {
    let (mut cfg, train_seed_set, lik_seed_set) = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                CliError::usage(format!("cannot read config {}: {e}", path.display()))
            })?;
            RunConfig::from_json(&text).map_err(|e| {
                CliError::usage(format!("invalid config {}: {e}", path.display()))
            })?
        }
        None => (RunConfig::default(), false, false),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if !train_seed_set {
        cfg.train.seed = substream_seed(cfg.seed, "train");
    }
    if !lik_seed_set {
        cfg.likelihood.seed = substream_seed(cfg.seed, "probes");
    }
    if let Some(fam) = common.sde {
        cfg.sde.family = fam;
    }
    if let Some(p) = &common.dataset {
        cfg.dataset = Some(p.clone());
    }
    if let Some(p) = &common.output {
        cfg.output = Some(p.clone());
    }
    cfg.sde.validate().map_err(classify_error)?;
    Ok(cfg)
}

fn required<'a>(value: &'a Option<PathBuf>, what: &str) -> CliResult<&'a Path> {
    value
        .as_deref()
        .ok_or_else(|| CliError::usage(format!("missing required {what} path")))
}

fn load_dataset(path: &Path) -> CliResult<LabeledDataset> {
    if !path.exists() {
        return Err(CliError::usage(format!(
            "dataset {} does not exist",
            path.display()
        )));
    }
    read_dataset(path).map_err(classify_error)
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut s: OsString = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text)
        .map_err(|e| CliError::runtime(format!("cannot write {}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::runtime(e.to_string()))?;
    text.push('\n');
    write_text(path, &text)
}

fn echo_config(cfg: &RunConfig, output: &Path) -> CliResult<()> {
    write_json(&sidecar(output, ".config.json"), cfg)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ToySummary {
    pub kind: String,
    pub n: usize,
    pub d: usize,
    pub class_counts: Vec<usize>,
    pub seed: u64,
    pub output: PathBuf,
    /// Generating distribution, for `two-gaussians`.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub gaussian: Option<ClassGaussians>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub noise: Option<f64>,
}

fn cmd_gen_toy(args: &GenToyArgs) -> CliResult<()> {
    let n = args.n as usize;
    let (ds, kind, noise) = match args.kind {
        ToyKind::TwoGaussians => (
            gen_two_gaussians(
                n,
                [vec![-args.offset, 0.0], vec![args.offset, 0.0]],
                vec![1.0, 1.0],
                args.seed,
            ),
            "two-gaussians",
            None,
        ),
        ToyKind::TwoMoons => (
            gen_two_moons(n, args.noise, args.seed),
            "two-moons",
            Some(args.noise),
        ),
    };
    let ds = ds.map_err(classify_error)?;
    write_dataset(&ds, &args.out).map_err(classify_error)?;
    let summary = ToySummary {
        kind: kind.into(),
        n: ds.len(),
        d: ds.dim(),
        class_counts: ds.class_counts(),
        seed: args.seed,
        output: args.out.clone(),
        gaussian: ds.gaussian.clone(),
        noise,
    };
    write_json(&sidecar(&args.out, ".json"), &summary)?;
    println!(
        "{}",
        serde_json::to_string(&summary).map_err(|e| CliError::runtime(e.to_string()))?
    );
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TrainSummary {
    pub checkpoint: PathBuf,
    pub report: PathBuf,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub initial_val_loss: f64,
    pub best_val_loss: f64,
    pub stopped_early: bool,
    pub param_count: usize,
    pub warnings: Vec<String>,
}

fn cmd_train(args: &TrainArgs) -> CliResult<()> {
    let mut cfg = load_config(&args.common)?;
    if let Some(v) = args.max_epochs {
        cfg.train.max_epochs = v;
    }
    if let Some(v) = args.batch_size {
        cfg.train.batch_size = v;
    }
    if let Some(v) = args.lr {
        cfg.train.lr = v;
    }
    if let Some(v) = args.val_fraction {
        cfg.train.val_fraction = v;
    }
    if let Some(p) = &args.checkpoint {
        cfg.checkpoint = Some(p.clone());
    }
    let dataset_path = required(&cfg.dataset, "--dataset")?.to_path_buf();
    let output = required(&cfg.output, "--output")?.to_path_buf();
    let checkpoint = cfg
        .checkpoint
        .clone()
        .unwrap_or_else(|| output.with_extension("sgck"));
    cfg.checkpoint = Some(checkpoint.clone());
    cfg.train.validate().map_err(classify_error)?;
    let ds = load_dataset(&dataset_path)?;
    echo_config(&cfg, &output)?;

    let outcome = train(&ds, &cfg.sde, &cfg.model, &cfg.train)
        .map_err(|e| CliError::runtime(format!("training failed: {e}")))?;
    for w in &outcome.report.warnings {
        eprintln!("warning: {w}");
    }
    outcome
        .net
        .save(&checkpoint)
        .map_err(|e| CliError::runtime(e.to_string()))?;
    write_text(&output, &outcome.report.to_csv())?;
    let r = &outcome.report;
    let summary = TrainSummary {
        checkpoint,
        report: output,
        epochs_run: r.epochs.len(),
        best_epoch: r.best_epoch,
        initial_val_loss: r.initial_val_loss,
        best_val_loss: r.best_val_loss,
        stopped_early: r.stopped_early,
        param_count: r.param_count,
        warnings: r.warnings.clone(),
    };
    println!(
        "{}",
        serde_json::to_string(&summary).map_err(|e| CliError::runtime(e.to_string()))?
    );
    Ok(())
}

/// The score model an inference command runs on, plus the SDE it is bound to.
fn load_model(cfg: &mut RunConfig, args: &InferArgs) -> CliResult<Box<dyn ScoreFunction>> {
    if let Some(p) = &args.checkpoint {
        cfg.checkpoint = Some(p.clone());
    }
    if let Some(p) = &args.oracle {
        cfg.oracle = Some(p.clone());
        cfg.checkpoint = None;
    }
    match (&cfg.checkpoint, &cfg.oracle) {
        (Some(_), Some(_)) => Err(CliError::usage(
            "give either a checkpoint or an oracle, not both",
        )),
        (None, None) => Err(CliError::usage("missing required --checkpoint or --oracle")),
        (Some(path), None) => {
            if !path.exists() {
                return Err(CliError::usage(format!(
                    "checkpoint {} does not exist",
                    path.display()
                )));
            }
            let net = MlpScoreNet::load(path).map_err(classify_error)?;
            cfg.sde = *net.sde();
            cfg.model = *net.config();
            Ok(Box::new(net))
        }
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                CliError::usage(format!("cannot read oracle {}: {e}", path.display()))
            })?;
            let summary: ToySummary = serde_json::from_str(&text).map_err(|e| {
                CliError::usage(format!("invalid oracle file {}: {e}", path.display()))
            })?;
            let params = summary.gaussian.ok_or_else(|| {
                CliError::usage(format!(
                    "{} has no Gaussian parameters (not a two-gaussians summary)",
                    path.display()
                ))
            })?;
            let oracle = AnalyticGaussianScore::new(params, cfg.sde).map_err(classify_error)?;
            Ok(Box::new(oracle))
        }
    }
}

fn resolve_inference(args: &InferArgs) -> CliResult<(RunConfig, Box<dyn ScoreFunction>, usize)> {
    let mut cfg = load_config(&args.common)?;
    let lik = &mut cfg.likelihood;
    if let Some(d) = args.divergence {
        lik.divergence = match d {
            DivergenceArg::Exact => DivergenceMode::Exact,
            DivergenceArg::Hutchinson => DivergenceMode::Hutchinson,
        };
    }
    if let Some(p) = args.probe_dist {
        lik.probe_dist = match p {
            ProbeArg::Rademacher => ProbeDist::Rademacher,
            ProbeArg::Gaussian => ProbeDist::Gaussian,
        };
    }
    if let Some(v) = args.probes {
        lik.n_probes = v;
    }
    if let Some(v) = args.repeats {
        lik.n_repeats = v;
    }
    if let Some(v) = args.rtol {
        lik.rtol = v;
    }
    if let Some(v) = args.atol {
        lik.atol = v;
    }
    if let Some(c) = args.classes {
        cfg.classes = Some(c as usize);
    }
    cfg.likelihood.validate().map_err(classify_error)?;
    let model = load_model(&mut cfg, args)?;
    let classes = cfg.classes.unwrap_or(model.num_classes());
    if classes < 2 {
        return Err(CliError::usage(format!(
            "classification needs at least 2 classes, got {classes}"
        )));
    }
    if classes > model.num_classes() {
        return Err(CliError::usage(format!(
            "{classes} classes requested but the model has {}",
            model.num_classes()
        )));
    }
    cfg.classes = Some(classes);
    Ok((cfg, model, classes))
}

fn load_inference_data(cfg: &RunConfig, model: &dyn ScoreFunction) -> CliResult<LabeledDataset> {
    let ds = load_dataset(required(&cfg.dataset, "--dataset")?)?;
    if ds.dim() != model.input_dim() {
        return Err(CliError::usage(format!(
            "dataset dimension {} does not match the model ({})",
            ds.dim(),
            model.input_dim()
        )));
    }
    Ok(ds)
}

fn cmd_classify(args: &InferArgs) -> CliResult<()> {
    let (cfg, model, classes) = resolve_inference(args)?;
    let output = required(&cfg.output, "--output")?.to_path_buf();
    let ds = load_inference_data(&cfg, model.as_ref())?;
    echo_config(&cfg, &output)?;
    let results = classify_dataset(&cfg.sde, model.as_ref(), &ds, classes, &cfg.likelihood)
        .map_err(|e| CliError::runtime(e.to_string()))?;
    write_text(&output, &results_to_csv(&results))?;
    let correct = results
        .iter()
        .filter(|r| r.ground_truth == Some(r.predicted))
        .count();
    eprintln!(
        "classified {} samples, accuracy {:.4}",
        results.len(),
        correct as f64 / results.len().max(1) as f64
    );
    Ok(())
}

fn cmd_loglik(args: &InferArgs) -> CliResult<()> {
    use rayon::prelude::*;

    let (cfg, model, classes) = resolve_inference(args)?;
    let output = required(&cfg.output, "--output")?.to_path_buf();
    let ds = load_inference_data(&cfg, model.as_ref())?;
    echo_config(&cfg, &output)?;
    let rows: Vec<Vec<f64>> = (0..ds.len())
        .into_par_iter()
        .map(|i| {
            class_log_likelihoods_stream(
                &cfg.sde,
                model.as_ref(),
                ds.row(i),
                classes,
                &cfg.likelihood,
                i as u64,
            )
        })
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::runtime(e.to_string()))?;
    let mut out = String::from("index,ground_truth");
    for j in 0..classes {
        out.push_str(&format!(",log_like_{j}"));
    }
    out.push('\n');
    for (i, row) in rows.iter().enumerate() {
        out.push_str(&format!("{i},{}", ds.labels()[i]));
        for v in row {
            out.push_str(&format!(",{v:?}"));
        }
        out.push('\n');
    }
    write_text(&output, &out)
}

/// Parsed rows of a classification CSV.
struct Predictions {
    truths: Vec<usize>,
    preds: Vec<usize>,
    posteriors: Vec<Vec<f64>>,
}

fn read_predictions(path: &Path) -> CliResult<Predictions> {
    let bad = |m: String| CliError::usage(format!("{}: {m}", path.display()));
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))?;
    let header = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
    let col = |name: &str| header.iter().position(|h| h == name);
    let gt_col = col("ground_truth").ok_or_else(|| bad("missing ground_truth column".into()))?;
    let pred_col = col("predicted").ok_or_else(|| bad("missing predicted column".into()))?;
    let post_cols: Vec<usize> = (0..)
        .map_while(|j| col(&format!("posterior_{j}")))
        .collect();
    if post_cols.is_empty() {
        return Err(bad("missing posterior_* columns".into()));
    }
    let mut p = Predictions {
        truths: Vec::new(),
        preds: Vec::new(),
        posteriors: Vec::new(),
    };
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let parse_label = |c: usize, what: &str| -> CliResult<usize> {
            rec[c]
                .trim()
                .parse()
                .map_err(|e| bad(format!("row {i}, {what}: {e}")))
        };
        p.truths.push(parse_label(gt_col, "ground_truth")?);
        p.preds.push(parse_label(pred_col, "predicted")?);
        let post = post_cols
            .iter()
            .map(|&c| {
                rec[c]
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| bad(format!("row {i}, posterior: {e}")))
            })
            .collect::<CliResult<Vec<_>>>()?;
        p.posteriors.push(post);
    }
    Ok(p)
}

fn cmd_eval(args: &EvalArgs) -> CliResult<()> {
    if !args.predictions.exists() {
        return Err(CliError::usage(format!(
            "predictions file {} does not exist",
            args.predictions.display()
        )));
    }
    let p = read_predictions(&args.predictions)?;
    let n_classes = p.posteriors.first().map_or(0, Vec::len);
    if n_classes != 2 {
        return Err(CliError::usage(format!(
            "eval supports binary tasks only, found {n_classes} posterior columns"
        )));
    }
    if args.positive > 1 {
        return Err(CliError::usage("--positive must be 0 or 1"));
    }
    let scores: Vec<f64> = p.posteriors.iter().map(|r| r[args.positive]).collect();
    let report = evaluate(&p.preds, &p.truths, &scores, args.positive).map_err(classify_error)?;
    match &args.output {
        Some(path) => write_json(path, &report),
        None => {
            println!(
                "{}",
                serde_json::to_string_pretty(&report)
                    .map_err(|e| CliError::runtime(e.to_string()))?
            );
            Ok(())
        }
    }
}

/// Runs the CLI on `args` (including the program name) and returns the exit
/// code.
pub fn run_from<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = match &cli.command {
        Command::GenToy(a) => cmd_gen_toy(a),
        Command::Train(a) => cmd_train(a),
        Command::Loglik(a) => cmd_loglik(a),
        Command::Classify(a) => cmd_classify(a),
        Command::Eval(a) => cmd_eval(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}

pub fn run() -> ExitCode {
    ExitCode::from(run_from(std::env::args_os()))
}
