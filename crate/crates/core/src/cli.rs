//! `boostsel` command line: split, train, cv, select, evaluate, synth.
//!
//! Exit codes: 0 success, 2 usage, 3 data, 4 training, 5 empty selection.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::boosting::{load_model, save_model, BoostingError, ClassWeighting, TrainConfig};
use crate::dataset::{
    drop_missing_age, ingest_csv, stratified_split, DatasetError, DatasetMatrix, IngestOptions,
    DEFAULT_MAX_BINS,
};
use crate::evaluation::{cross_validate, evaluate, EvalError, ModelSpec, TrainedModel};
use crate::importance::{ImportanceError, ImportanceReport, DEFAULT_REPEATS};
use crate::knn::{KnnError, DEFAULT_K};
use crate::manifest::RunManifest;
use crate::metrics::{confusion_table, cv_table, metrics_table, CvSummary, MetricsError};
use crate::selection::{run_pipeline, SelectionConfig, SelectionError, SelectionReports};
use crate::synth::{planted_dataset, write_dataset_csv, PlantedSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_TRAINING: i32 = 4;
pub const EXIT_EMPTY_SELECTION: i32 = 5;

pub const THREADS_ENV: &str = "BOOSTSEL_THREADS";

#[derive(Debug, Parser)]
#[command(name = "boostsel", version, about = "Boosted oblivious trees with dual-importance feature selection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Stratified train/validation split written as index files.
    Split(SplitArgs),
    /// Train one GBDT model on a whole dataset.
    Train(TrainArgs),
    /// Stratified k-fold cross-validation of a GBDT or k-NN model.
    Cv(CvArgs),
    /// Full selection pipeline: wide model, importances, intersection, compact model.
    Select(SelectArgs),
    /// Score a saved model on a dataset.
    Evaluate(EvaluateArgs),
    /// Write a synthetic dataset with planted informative features.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct IngestArgs {
    /// Input CSV with a header row.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value = "label")]
    pub label_column: String,
    /// Label value of the positive class; the other value is negative.
    #[arg(long, default_value = "AML")]
    pub positive_label: String,
    #[arg(long, default_value = "id")]
    pub id_column: String,
    /// Numeric age column; rows with a missing age are dropped.
    #[arg(long)]
    pub age_column: Option<String>,
    /// Extra cell values meaning "age unknown" (repeatable).
    #[arg(long = "missing-age-token")]
    pub missing_age_tokens: Vec<String>,
}

impl IngestArgs {
    fn options(&self) -> IngestOptions {
        IngestOptions {
            label_column: self.label_column.clone(),
            positive_label: self.positive_label.clone(),
            id_column: self.id_column.clone(),
            age_column: self.age_column.clone(),
            missing_age_tokens: self.missing_age_tokens.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    None,
    Balanced,
}

impl From<Weighting> for ClassWeighting {
    fn from(w: Weighting) -> Self {
        match w {
            Weighting::None => ClassWeighting::None,
            Weighting::Balanced => ClassWeighting::Balanced,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GbdtArgs {
    #[arg(long, default_value_t = 100)]
    pub iterations: usize,
    #[arg(long, default_value_t = 11)]
    pub depth: usize,
    #[arg(long, default_value_t = 0.1)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 3.0)]
    pub l2_leaf_reg: f64,
    #[arg(long, value_enum, default_value_t = Weighting::Balanced)]
    pub class_weighting: Weighting,
    #[arg(long, default_value_t = DEFAULT_MAX_BINS)]
    pub max_bins: usize,
}

impl GbdtArgs {
    fn config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            iterations: self.iterations,
            depth: self.depth,
            learning_rate: self.learning_rate,
            l2_leaf_reg: self.l2_leaf_reg,
            class_weighting: self.class_weighting.into(),
            seed,
            max_bins: self.max_bins,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SplitArgs {
    #[command(flatten)]
    pub ingest: IngestArgs,
    #[arg(long, default_value_t = 0.8)]
    pub train_fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainArgs {
    #[command(flatten)]
    pub ingest: IngestArgs,
    #[command(flatten)]
    pub gbdt: GbdtArgs,
    /// Newline-delimited feature names to train on (default: all).
    #[arg(long)]
    pub features_file: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Gbdt,
    Knn,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CvArgs {
    #[command(flatten)]
    pub ingest: IngestArgs,
    #[arg(long, value_enum, default_value_t = ModelKind::Gbdt)]
    pub model: ModelKind,
    #[command(flatten)]
    pub gbdt: GbdtArgs,
    /// Neighbour count for `--model knn`.
    #[arg(long, default_value_t = DEFAULT_K)]
    pub k: usize,
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    #[arg(long)]
    pub features_file: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct WideArgs {
    #[arg(long, default_value_t = 200)]
    pub wide_iterations: usize,
    #[arg(long, default_value_t = 6)]
    pub wide_depth: usize,
    #[arg(long, default_value_t = 0.1)]
    pub wide_learning_rate: f64,
    #[arg(long, default_value_t = 3.0)]
    pub wide_l2_leaf_reg: f64,
    #[arg(long, value_enum, default_value_t = Weighting::Balanced)]
    pub wide_class_weighting: Weighting,
    #[arg(long, default_value_t = DEFAULT_MAX_BINS)]
    pub wide_max_bins: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CompactArgs {
    #[arg(long, default_value_t = 100)]
    pub compact_iterations: usize,
    #[arg(long, default_value_t = 11)]
    pub compact_depth: usize,
    #[arg(long, default_value_t = 0.1)]
    pub compact_learning_rate: f64,
    #[arg(long, default_value_t = 3.0)]
    pub compact_l2_leaf_reg: f64,
    #[arg(long, value_enum, default_value_t = Weighting::Balanced)]
    pub compact_class_weighting: Weighting,
    #[arg(long, default_value_t = DEFAULT_MAX_BINS)]
    pub compact_max_bins: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SelectArgs {
    #[command(flatten)]
    pub ingest: IngestArgs,
    #[arg(long, default_value_t = 100)]
    pub top_k: usize,
    /// Newline-delimited feature names removed after the intersection.
    #[arg(long)]
    pub exclude_file: Option<PathBuf>,
    /// Feature appended to the final set regardless of rank (repeatable).
    #[arg(long)]
    pub always_include: Vec<String>,
    #[command(flatten)]
    pub wide: WideArgs,
    #[command(flatten)]
    pub compact: CompactArgs,
    #[arg(long, default_value_t = 0.8)]
    pub train_fraction: f64,
    #[arg(long, default_value_t = DEFAULT_REPEATS)]
    pub importance_repeats: usize,
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Separate seed for the compact-model split (default: --seed).
    #[arg(long)]
    pub compact_seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model_file: PathBuf,
    #[command(flatten)]
    pub ingest: IngestArgs,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 300)]
    pub rows: usize,
    #[arg(long, default_value_t = 50)]
    pub features: usize,
    #[arg(long, default_value_t = 5)]
    pub informative: usize,
    /// Mean shift of informative features in positive rows.
    #[arg(long, default_value_t = 1.5)]
    pub shift: f64,
    #[arg(long, default_value_t = 0.5)]
    pub positive_fraction: f64,
    /// Add an `age` column with this fraction of missing cells.
    #[arg(long)]
    pub age_missing_fraction: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

/// Error carrying the process exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        CliError { code: EXIT_USAGE, message: message.into() }
    }

    fn data(message: impl Into<String>) -> Self {
        CliError { code: EXIT_DATA, message: message.into() }
    }

    fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::data(format!("{}: {e}", path.display()))
    }
}

fn dataset_code(e: &DatasetError) -> i32 {
    match e {
        DatasetError::InvalidFraction(_) | DatasetError::InvalidFoldCount(_) => EXIT_USAGE,
        _ => EXIT_DATA,
    }
}

fn boosting_code(e: &BoostingError) -> i32 {
    match e {
        BoostingError::Dataset(d) => dataset_code(d),
        BoostingError::InvalidConfig(_) | BoostingError::InvalidThreshold(_) => EXIT_USAGE,
        BoostingError::Io { .. }
        | BoostingError::SchemaVersionMismatch { .. }
        | BoostingError::CorruptModel(_) => EXIT_DATA,
        BoostingError::DimensionMismatch { .. } | BoostingError::LengthMismatch { .. } => EXIT_TRAINING,
    }
}

fn knn_code(e: &KnnError) -> i32 {
    match e {
        KnnError::ZeroK | KnnError::KTooLarge { .. } => EXIT_USAGE,
        KnnError::DimensionMismatch { .. } | KnnError::NonFinite => EXIT_DATA,
    }
}

fn metrics_code(e: &MetricsError) -> i32 {
    match e {
        MetricsError::TooFewFolds(_) => EXIT_USAGE,
        MetricsError::Empty | MetricsError::OneClassOnly => EXIT_DATA,
        _ => EXIT_TRAINING,
    }
}

fn importance_code(e: &ImportanceError) -> i32 {
    match e {
        ImportanceError::DimensionMismatch(_) | ImportanceError::MissingValues => EXIT_DATA,
        ImportanceError::NoRepeats => EXIT_USAGE,
        _ => EXIT_TRAINING,
    }
}

fn eval_code(e: &EvalError) -> i32 {
    match e {
        EvalError::Dataset(d) => dataset_code(d),
        EvalError::Boosting(b) => boosting_code(b),
        EvalError::Knn(k) => knn_code(k),
        EvalError::Metrics(m) => metrics_code(m),
        EvalError::FeatureMismatch { .. } => EXIT_DATA,
    }
}

fn selection_code(e: &SelectionError) -> i32 {
    match e {
        SelectionError::InvalidConfig(_) => EXIT_USAGE,
        SelectionError::FeatureUniverseMismatch => EXIT_TRAINING,
        SelectionError::UnknownFeature(_) => EXIT_DATA,
        SelectionError::EmptySelection { .. } => EXIT_EMPTY_SELECTION,
        SelectionError::Dataset(d) => dataset_code(d),
        SelectionError::Boosting(b) => boosting_code(b),
        SelectionError::Importance(i) => importance_code(i),
        SelectionError::Eval(v) => eval_code(v),
    }
}

macro_rules! code_from {
    ($($ty:ty => $f:ident),* $(,)?) => {$(
        impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                CliError { code: $f(&e), message: e.to_string() }
            }
        }
    )*};
}

code_from!(
    DatasetError => dataset_code,
    BoostingError => boosting_code,
    KnnError => knn_code,
    EvalError => eval_code,
    SelectionError => selection_code,
    ImportanceError => importance_code,
);

type CmdResult = Result<(), CliError>;

/// Parses `args`, runs the command inside a pool sized by `BOOSTSEL_THREADS`,
/// and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => n,
            _ => {
                eprintln!("error: {THREADS_ENV} must be a positive integer, got {v:?}");
                return EXIT_USAGE;
            }
        },
        Err(_) => 0,
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start thread pool: {e}");
            return EXIT_TRAINING;
        }
    };
    pool.install(|| dispatch(cli.command))
}

fn dispatch(command: Command) -> i32 {
    let (name, out, params) = match &command {
        Command::Split(a) => ("split", a.out.clone(), serde_json::to_value(a)),
        Command::Train(a) => ("train", a.out.clone(), serde_json::to_value(a)),
        Command::Cv(a) => ("cv", a.out.clone(), serde_json::to_value(a)),
        Command::Select(a) => ("select", a.out.clone(), serde_json::to_value(a)),
        Command::Evaluate(a) => ("evaluate", a.out.clone(), serde_json::to_value(a)),
        Command::Synth(a) => ("synth", a.out.clone(), serde_json::to_value(a)),
    };
    if let Err(e) = std::fs::create_dir_all(&out) {
        eprintln!("error: cannot create {}: {e}", out.display());
        return EXIT_DATA;
    }
    let mut manifest = RunManifest::start(name, params.unwrap_or_default());
    let result = match command {
        Command::Split(a) => cmd_split(&a, &mut manifest),
        Command::Train(a) => cmd_train(&a, &mut manifest),
        Command::Cv(a) => cmd_cv(&a, &mut manifest),
        Command::Select(a) => cmd_select(&a, &mut manifest),
        Command::Evaluate(a) => cmd_evaluate(&a, &mut manifest),
        Command::Synth(a) => cmd_synth(&a, &mut manifest),
    };
    let code = match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    };
    if let Err(e) = manifest.finish(&out, code) {
        eprintln!("error: cannot write manifest: {e}");
        return if code == EXIT_OK { EXIT_DATA } else { code };
    }
    code
}

fn load(args: &IngestArgs, manifest: &mut RunManifest) -> Result<DatasetMatrix, CliError> {
    manifest.input(&args.input).map_err(|e| CliError::io(&args.input, e))?;
    let data = ingest_csv(&args.input, &args.options())?;
    if args.age_column.is_none() {
        return Ok(data);
    }
    let kept = drop_missing_age(&data)?;
    if kept.n_rows() < data.n_rows() {
        eprintln!(
            "note: dropped {} rows with missing age ({} remain)",
            data.n_rows() - kept.n_rows(),
            kept.n_rows()
        );
    }
    Ok(kept)
}

fn read_name_list(path: &Path, manifest: &mut RunManifest) -> Result<Vec<String>, CliError> {
    manifest.input(path).map_err(|e| CliError::io(path, e))?;
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect())
}

fn restrict(
    data: DatasetMatrix,
    features_file: Option<&PathBuf>,
    manifest: &mut RunManifest,
) -> Result<DatasetMatrix, CliError> {
    let Some(path) = features_file else {
        return Ok(data);
    };
    let names = read_name_list(path, manifest)?;
    if names.is_empty() {
        return Err(CliError::data(format!("{} lists no features", path.display())));
    }
    Ok(data.project(&names)?)
}

fn write(manifest: &mut RunManifest, path: PathBuf, text: &str) -> CmdResult {
    std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
    manifest.output(&path);
    Ok(())
}

fn write_json<T: Serialize>(manifest: &mut RunManifest, path: PathBuf, value: &T) -> CmdResult {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::data(e.to_string()))?;
    text.push('\n');
    write(manifest, path, &text)
}

fn write_report(manifest: &mut RunManifest, path: PathBuf, report: &ImportanceReport) -> CmdResult {
    let mut buf = Vec::new();
    report
        .write_csv(&mut buf)
        .map_err(|e| CliError::data(e.to_string()))?;
    write(manifest, path, &String::from_utf8_lossy(&buf))
}

fn lines<T: ToString>(items: &[T]) -> String {
    items.iter().map(|i| format!("{}\n", i.to_string())).collect()
}

fn check_threshold(t: f64) -> CmdResult {
    if t > 0.0 && t < 1.0 {
        Ok(())
    } else {
        Err(CliError::usage(format!("--threshold must lie in (0, 1), got {t}")))
    }
}

fn check_folds(k: usize) -> CmdResult {
    if k >= 2 {
        Ok(())
    } else {
        Err(CliError::usage(format!("--folds must be >= 2, got {k}")))
    }
}

fn cmd_split(a: &SplitArgs, manifest: &mut RunManifest) -> CmdResult {
    if !(a.train_fraction > 0.0 && a.train_fraction < 1.0) {
        return Err(CliError::usage(format!(
            "--train-fraction must lie in (0, 1), got {}",
            a.train_fraction
        )));
    }
    manifest.seed("seed", a.seed);
    let data = load(&a.ingest, manifest)?;
    let plan = stratified_split(data.labels(), a.train_fraction, a.seed)?;
    write(manifest, a.out.join("train_indices.txt"), &lines(&plan.train_indices))?;
    write(manifest, a.out.join("validation_indices.txt"), &lines(&plan.validation_indices))?;
    write_json(manifest, a.out.join("split.json"), &plan)?;
    println!(
        "train: {} rows, validation: {} rows",
        plan.train_indices.len(),
        plan.validation_indices.len()
    );
    Ok(())
}

fn cmd_train(a: &TrainArgs, manifest: &mut RunManifest) -> CmdResult {
    let cfg = a.gbdt.config(a.seed);
    cfg.validate()?;
    manifest.seed("seed", a.seed);
    let data = load(&a.ingest, manifest)?;
    let data = restrict(data, a.features_file.as_ref(), manifest)?;
    let model = crate::boosting::fit(&data, &cfg)?;
    let path = a.out.join("model.json");
    save_model(&model, &path)?;
    manifest.output(&path);
    println!("trained {} trees on {} rows x {} features", model.trees.len(), data.n_rows(), data.n_features());
    Ok(())
}

fn cv_text(cv: &CvSummary) -> String {
    let mut out = cv_table(cv);
    if let Some(p) = &cv.pooled {
        let _ = writeln!(out, "\nPooled out-of-fold confusion matrix:");
        out.push_str(&confusion_table(&p.matrix));
    }
    for w in &cv.warnings {
        let _ = writeln!(out, "warning: {w}");
    }
    out
}

fn cmd_cv(a: &CvArgs, manifest: &mut RunManifest) -> CmdResult {
    check_folds(a.folds)?;
    check_threshold(a.threshold)?;
    let spec = match a.model {
        ModelKind::Gbdt => {
            let cfg = a.gbdt.config(a.seed);
            cfg.validate()?;
            ModelSpec::Gbdt(cfg)
        }
        ModelKind::Knn => {
            if a.k == 0 {
                return Err(CliError::usage("--k must be >= 1"));
            }
            ModelSpec::Knn { k: a.k }
        }
    };
    manifest.seed("seed", a.seed);
    let data = load(&a.ingest, manifest)?;
    let data = restrict(data, a.features_file.as_ref(), manifest)?;
    let cv = cross_validate(&spec, &data, a.folds, a.seed, a.threshold)?;
    write_json(manifest, a.out.join("cv.json"), &cv)?;
    let text = cv_text(&cv);
    write(manifest, a.out.join("cv.txt"), &text)?;
    print!("{text}");
    Ok(())
}

fn select_config(a: &SelectArgs, manifest: &mut RunManifest) -> Result<SelectionConfig, CliError> {
    let exclusion_list: BTreeSet<String> = match &a.exclude_file {
        Some(p) => read_name_list(p, manifest)?.into_iter().collect(),
        None => BTreeSet::new(),
    };
    let w = &a.wide;
    let c = &a.compact;
    Ok(SelectionConfig {
        top_k: a.top_k,
        exclusion_list,
        always_include: a.always_include.clone(),
        wide_config: TrainConfig {
            iterations: w.wide_iterations,
            depth: w.wide_depth,
            learning_rate: w.wide_learning_rate,
            l2_leaf_reg: w.wide_l2_leaf_reg,
            class_weighting: w.wide_class_weighting.into(),
            seed: a.seed,
            max_bins: w.wide_max_bins,
        },
        compact_config: TrainConfig {
            iterations: c.compact_iterations,
            depth: c.compact_depth,
            learning_rate: c.compact_learning_rate,
            l2_leaf_reg: c.compact_l2_leaf_reg,
            class_weighting: c.compact_class_weighting.into(),
            seed: a.compact_seed.unwrap_or(a.seed),
            max_bins: c.compact_max_bins,
        },
        seed: a.seed,
        compact_seed: a.compact_seed,
        train_fraction: a.train_fraction,
        importance_repeats: a.importance_repeats,
        cv_folds: a.folds,
        threshold: a.threshold,
    })
}

fn write_reports(manifest: &mut RunManifest, out: &Path, r: &SelectionReports) -> CmdResult {
    write_report(
        manifest,
        out.join("importance_prediction_values_change.csv"),
        &r.prediction_values_change,
    )?;
    write_report(
        manifest,
        out.join("importance_loss_function_change.csv"),
        &r.loss_function_change,
    )
}

fn cmd_select(a: &SelectArgs, manifest: &mut RunManifest) -> CmdResult {
    if !(a.train_fraction > 0.0 && a.train_fraction < 1.0) {
        return Err(CliError::usage(format!(
            "--train-fraction must lie in (0, 1), got {}",
            a.train_fraction
        )));
    }
    let cfg = select_config(a, manifest)?;
    cfg.validate()?;
    manifest.seed("seed", cfg.seed);
    if let Some(s) = cfg.compact_seed {
        manifest.seed("compact_seed", s);
    }
    let data = load(&a.ingest, manifest)?;
    let output = match run_pipeline(&data, &cfg) {
        Ok(o) => o,
        Err(SelectionError::EmptySelection { top_k, reports }) => {
            write_reports(manifest, &a.out, &reports)?;
            return Err(CliError {
                code: EXIT_EMPTY_SELECTION,
                message: format!(
                    "no features left after intersecting the top {top_k} and applying exclusions"
                ),
            });
        }
        Err(e) => return Err(e.into()),
    };
    let sel = &output.selection;
    write_reports(manifest, &a.out, &sel.reports)?;
    write(manifest, a.out.join("selection.json"), &sel.to_json())?;
    write(manifest, a.out.join("final_features.txt"), &lines(&sel.final_features))?;
    for (name, model) in [("wide_model.json", &output.wide_model), ("compact_model.json", &output.compact_model)] {
        let path = a.out.join(name);
        save_model(model, &path)?;
        manifest.output(&path);
    }
    write_json(manifest, a.out.join("validation_metrics.json"), &output.validation)?;
    write_json(manifest, a.out.join("cv.json"), &output.cv)?;

    let mut text = String::new();
    let _ = writeln!(
        text,
        "features: {} -> intersection {} -> after exclusion {} -> final {}",
        data.n_features(),
        sel.intersection.len(),
        sel.after_exclusion.len(),
        sel.final_features.len()
    );
    for w in &sel.provenance.warnings {
        let _ = writeln!(text, "warning: {w}");
    }
    let _ = writeln!(text);
    text.push_str(&metrics_table(Some(&output.validation), Some(&output.cv)));
    let _ = writeln!(text, "\nValidation confusion matrix:");
    text.push_str(&confusion_table(&output.validation.matrix));
    let _ = writeln!(text, "\nCross-validation:");
    text.push_str(&cv_text(&output.cv));
    write(manifest, a.out.join("metrics.txt"), &text)?;
    print!("{text}");
    Ok(())
}

fn cmd_evaluate(a: &EvaluateArgs, manifest: &mut RunManifest) -> CmdResult {
    check_threshold(a.threshold)?;
    manifest.input(&a.model_file).map_err(|e| CliError::io(&a.model_file, e))?;
    let model = load_model(&a.model_file)?;
    let data = load(&a.ingest, manifest)?;
    let eval = evaluate(&TrainedModel::Gbdt(model), &data, a.threshold)?;
    write_json(manifest, a.out.join("metrics.json"), &eval.report)?;
    let mut text = metrics_table(Some(&eval.report), None);
    let _ = writeln!(text);
    text.push_str(&confusion_table(&eval.report.matrix));
    write(manifest, a.out.join("metrics.txt"), &text)?;
    print!("{text}");
    Ok(())
}

fn cmd_synth(a: &SynthArgs, manifest: &mut RunManifest) -> CmdResult {
    if a.rows < 2 || a.informative > a.features || a.features == 0 {
        return Err(CliError::usage("need --rows >= 2 and 1 <= --informative <= --features"));
    }
    if !(a.positive_fraction > 0.0 && a.positive_fraction < 1.0) {
        return Err(CliError::usage("--positive-fraction must lie in (0, 1)"));
    }
    if let Some(f) = a.age_missing_fraction {
        if !(0.0..1.0).contains(&f) {
            return Err(CliError::usage("--age-missing-fraction must lie in [0, 1)"));
        }
    }
    manifest.seed("seed", a.seed);
    let spec = PlantedSpec {
        rows: a.rows,
        features: a.features,
        informative: a.informative,
        shift: a.shift,
        positive_fraction: a.positive_fraction,
        age_missing_fraction: a.age_missing_fraction,
    };
    let (data, truth) = planted_dataset(&spec, a.seed);
    let path = a.out.join("data.csv");
    write_dataset_csv(&data, &path)?;
    manifest.output(&path);
    write(manifest, a.out.join("informative.txt"), &lines(&truth))?;
    println!("wrote {} rows x {} features to {}", data.n_rows(), data.n_features(), path.display());
    Ok(())
}
