//! Command-line driver: one subcommand per pipeline stage plus full
//! cross-validation. Human-readable tables go to stdout; machine-readable
//! artifacts go to the output directory.
//!
//! Exit codes: 0 success, 1 config error, 2 input error, 3 stage failure,
//! 4 model bundle incompatibility.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use fwsvm::dataset::{self, DatasetError, SampleMatrix};
use fwsvm::evaluation::{self, EvaluationError, Experiment, FeatureSpace, ModelBundle};
use fwsvm::mi_weights;
use fwsvm::pca::{self, PcaModel};
use fwsvm::{KernelVariant, Label, PipelineConfig, Scalar};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("stage `{stage}` failed: {message}")]
    Stage { stage: String, message: String },
    #[error("model bundle error: {0}")]
    Bundle(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Input(_) => 2,
            CliError::Stage { .. } => 3,
            CliError::Bundle(_) => 4,
        }
    }
}

impl From<EvaluationError> for CliError {
    fn from(e: EvaluationError) -> Self {
        match e {
            EvaluationError::Config(m) => CliError::Config(m),
            EvaluationError::Bundle(m) => CliError::Bundle(m),
            other => CliError::Stage {
                stage: other.stage().to_string(),
                message: other.to_string(),
            },
        }
    }
}

fn stage(name: &str) -> impl FnOnce(String) -> CliError + '_ {
    move |message| CliError::Stage {
        stage: name.to_string(),
        message,
    }
}

#[derive(Debug, Parser)]
#[command(name = "fwsvm", version, about = "Feature-weighted SVM with PCA, MI weights and cuckoo-search tuning")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub opts: Options,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Per-feature mean, std, min and max of the input file.
    Stats,
    /// Principal components of the standardized input.
    Pca,
    /// Mutual-information feature weights of the (projected) input.
    Weights,
    /// Tune (C, gamma) on a stratified training split; writes the search trace.
    Tune,
    /// Train on a stratified split, evaluate on the held-out rows, write the model bundle.
    Train,
    /// Classify rows with a saved model bundle.
    Predict,
    /// Stratified k-fold cross-validation of the full pipeline.
    Cv,
    /// Print the effective configuration as TOML.
    PrintConfig,
}

#[derive(Debug, Default, Args)]
pub struct Options {
    /// Pima CSV file (8 features and a 0/1 label per row).
    #[arg(long, global = true)]
    pub input: Option<PathBuf>,
    /// TOML config file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory for machine-readable artifacts.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Model bundle for `predict`.
    #[arg(long, global = true)]
    pub model: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub folds: Option<usize>,
    #[arg(long, global = true)]
    pub components: Option<usize>,
    /// `sqrt` or `squared`.
    #[arg(long, global = true)]
    pub kernel_variant: Option<KernelVariant>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// MCS fitness-evaluation budget.
    #[arg(long, global = true)]
    pub budget: Option<usize>,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

/// Reads the config file (if any), applies flag overrides and validates.
pub fn resolve_config(opts: &Options) -> Result<PipelineConfig, CliError> {
    let mut cfg = match &opts.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            toml::from_str::<PipelineConfig>(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        }
        None => PipelineConfig::default(),
    };
    if let Some(v) = opts.seed {
        cfg.seed = v;
    }
    if let Some(v) = opts.folds {
        cfg.folds = v;
    }
    if let Some(v) = opts.components {
        cfg.n_components = v;
    }
    if let Some(v) = opts.kernel_variant {
        cfg.kernel_variant = v;
    }
    if let Some(v) = opts.budget {
        cfg.budget = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn input_path(opts: &Options) -> Result<&Path, CliError> {
    let path = opts.input.as_deref().ok_or_else(|| CliError::Input("--input is required".into()))?;
    if !path.is_file() {
        return Err(CliError::Input(format!("{}: not a readable file", path.display())));
    }
    Ok(path)
}

pub fn load_data(path: &Path) -> Result<SampleMatrix<f64>, CliError> {
    let file = fs::File::open(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let records = dataset::parse_reader(file).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    dataset::to_matrix(&records).map_err(|e| match e {
        DatasetError::Empty => CliError::Input(format!("{}: no data rows", path.display())),
        other => CliError::Input(format!("{}: {other}", path.display())),
    })
}

struct OutDir(PathBuf);

impl OutDir {
    fn create(path: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(path).map_err(|e| CliError::Input(format!("cannot create {}: {e}", path.display())))?;
        Ok(Self(path.to_path_buf()))
    }

    fn write(&self, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let p = self.0.join(name);
        fs::write(&p, bytes).map_err(|e| CliError::Input(format!("cannot write {}: {e}", p.display())))?;
        Ok(p)
    }

    fn write_json<S: Serialize>(&self, name: &str, value: &S) -> Result<PathBuf, CliError> {
        let mut text = serde_json::to_string_pretty(value).expect("serializable");
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    fn write_trace<T: Scalar>(&self, name: &str, trace: &[fwsvm::mcs::TraceRow<T>]) -> Result<PathBuf, CliError> {
        let mut buf = Vec::new();
        fwsvm::mcs::write_trace_csv(trace, &mut buf).map_err(|e| CliError::Input(e.to_string()))?;
        self.write(name, &buf)
    }
}

fn emit(out: &mut dyn Write, text: &str) -> Result<(), CliError> {
    out.write_all(text.as_bytes()).map_err(|e| CliError::Input(format!("stdout: {e}")))
}

/// Runs one command, writing human-readable output to `out`.
pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = resolve_config(&cli.opts)?;
    if let Some(n) = cli.opts.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        // Only the first call in a process can size the global pool.
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::debug!("thread pool already initialized: {e}");
        }
    }
    match cli.command {
        Command::PrintConfig => cmd_print_config(&cfg, out),
        Command::Stats => cmd_stats(&cli.opts, out),
        Command::Pca => cmd_pca(&cli.opts, &cfg, out),
        Command::Weights => cmd_weights(&cli.opts, &cfg, out),
        Command::Tune => cmd_tune(&cli.opts, &cfg, out),
        Command::Train => cmd_train(&cli.opts, &cfg, out),
        Command::Predict => cmd_predict(&cli.opts, out),
        Command::Cv => cmd_cv(&cli.opts, &cfg, out),
    }
}

pub fn cmd_print_config(cfg: &PipelineConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let body = toml::to_string(cfg).map_err(|e| CliError::Config(e.to_string()))?;
    emit(out, "# Omit `bandwidth` for Silverman's rule; set it to a number for a fixed Parzen width.\n")?;
    emit(out, &body)
}

pub fn cmd_stats(opts: &Options, out: &mut dyn Write) -> Result<(), CliError> {
    let data = load_data(input_path(opts)?)?;
    let summary = dataset::summary_stats(&data);
    emit(out, &format!("{} rows, {} positive\n", data.n_samples(), data.n_positive()))?;
    emit(out, &dataset::render_summary_table(&summary))?;
    OutDir::create(&opts.out)?.write_json("stats.json", &summary)?;
    Ok(())
}

#[derive(Serialize)]
struct PcaReport<'a> {
    /// All d eigenvalues of the standardized covariance, descending.
    eigenvalues: Vec<f64>,
    model: &'a PcaModel<f64>,
}

pub fn cmd_pca(opts: &Options, cfg: &PipelineConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let data = load_data(input_path(opts)?)?;
    let z = standardize(&data)?;
    let cov = pca::covariance(&z).map_err(|e| stage("pca")(e.to_string()))?;
    let eig = pca::eig_sym(&cov).map_err(|e| stage("pca")(e.to_string()))?;
    let model = PcaModel::fit(&z, cfg.n_components).map_err(|e| stage("pca")(e.to_string()))?;

    let total = cov.trace();
    let mut text = format!("{:<10} {:>12} {:>10} {:>10}\n", "Component", "Eigenvalue", "Share", "Cumul.");
    let mut cumulative = 0.0;
    for (k, &v) in eig.values.iter().enumerate() {
        cumulative += v / total;
        text.push_str(&format!("{:<10} {:>12.6} {:>10.4} {:>10.4}\n", k + 1, v, v / total, cumulative));
    }
    text.push_str(&format!(
        "kept {} components, explained variance {:.4}\n",
        model.n_components(),
        model.explained_variance_ratio
    ));
    emit(out, &text)?;
    OutDir::create(&opts.out)?.write_json(
        "pca.json",
        &PcaReport {
            eigenvalues: eig.values.to_vec(),
            model: &model,
        },
    )?;
    Ok(())
}

fn standardize(data: &SampleMatrix<f64>) -> Result<SampleMatrix<f64>, CliError> {
    let params = dataset::StandardizationParams::fit(data).map_err(|e| stage("standardize")(e.to_string()))?;
    params.apply(data).map_err(|e| stage("standardize")(e.to_string()))
}

#[derive(Serialize)]
struct WeightRow {
    feature: usize,
    mi_bits: f64,
    alpha: f64,
}

pub fn cmd_weights(opts: &Options, cfg: &PipelineConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let data = load_data(input_path(opts)?)?;
    let z = standardize(&data)?;
    let q = match cfg.feature_space {
        FeatureSpace::Pca => {
            let model = PcaModel::fit(&z, cfg.n_components).map_err(|e| stage("pca")(e.to_string()))?;
            model.transform_matrix(&z).map_err(|e| stage("pca")(e.to_string()))?
        }
        FeatureSpace::Raw => z,
    };
    let w = mi_weights::compute_weights(&q, &cfg.parzen()).map_err(|e| stage("weights")(e.to_string()))?;
    emit(out, &mi_weights::render_weights_table(&w))?;
    let rows: Vec<WeightRow> = w
        .mi_values
        .iter()
        .zip(w.alpha.iter())
        .enumerate()
        .map(|(k, (&mi, &a))| WeightRow {
            feature: k + 1,
            mi_bits: mi,
            alpha: a,
        })
        .collect();
    OutDir::create(&opts.out)?.write_json("weights.json", &rows)?;
    Ok(())
}

#[derive(Serialize)]
struct TuneReport<'a> {
    config: &'a PipelineConfig,
    train_size: usize,
    c: f64,
    gamma: f64,
    tuned_fitness: f64,
    midpoint_fitness: f64,
    evaluations: usize,
    mi_bits: Vec<f64>,
    alpha: Vec<f64>,
}

#[derive(Serialize)]
struct SplitRecord<'a> {
    /// Zero-based row indices into the input file's data rows.
    train: &'a [usize],
    test: &'a [usize],
}

fn holdout(opts: &Options, cfg: &PipelineConfig) -> Result<(Experiment<f64>, Vec<usize>, Vec<usize>), CliError> {
    let data = load_data(input_path(opts)?)?;
    Ok(evaluation::single_split(&data, cfg)?)
}

pub fn cmd_tune(opts: &Options, cfg: &PipelineConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let (exp, _, _) = holdout(opts, cfg)?;
    let f = &exp.report.folds[0];
    emit(
        out,
        &format!(
            "tuned on {} rows ({} evaluations, fitness {})\nC = {:.6}\ngamma = {:.6}\ntuned fitness = {:.4}\nfitness at box midpoint = {:.4}\n\n",
            f.train_size, f.evaluations, cfg.fitness, f.c, f.gamma, f.tuned_fitness, f.midpoint_fitness
        ),
    )?;
    emit(out, &mi_weights::render_weights_table(&exp.bundles[0].weights))?;
    let dir = OutDir::create(&opts.out)?;
    dir.write_json(
        "tune.json",
        &TuneReport {
            config: cfg,
            train_size: f.train_size,
            c: f.c,
            gamma: f.gamma,
            tuned_fitness: f.tuned_fitness,
            midpoint_fitness: f.midpoint_fitness,
            evaluations: f.evaluations,
            mi_bits: f.mi_bits.to_vec(),
            alpha: f.alpha.to_vec(),
        },
    )?;
    dir.write_trace("trace.csv", &f.trace)?;
    Ok(())
}

pub fn cmd_train(opts: &Options, cfg: &PipelineConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let (exp, train, test) = holdout(opts, cfg)?;
    emit(out, &evaluation::render_report(&exp.report))?;
    let dir = OutDir::create(&opts.out)?;
    dir.write("model.json", (exp.bundles[0].to_json() + "\n").as_bytes())?;
    dir.write("report.json", (exp.report.to_json() + "\n").as_bytes())?;
    dir.write_json("split.json", &SplitRecord { train: &train, test: &test })?;
    dir.write_trace("trace.csv", &exp.report.folds[0].trace)?;
    Ok(())
}

pub fn cmd_predict(opts: &Options, out: &mut dyn Write) -> Result<(), CliError> {
    let model_path = opts.model.as_deref().ok_or_else(|| CliError::Input("--model is required".into()))?;
    let text = fs::read_to_string(model_path).map_err(|e| CliError::Input(format!("{}: {e}", model_path.display())))?;
    let bundle = ModelBundle::<f64>::from_json(&text)?;
    if bundle.input_dim() != dataset::PIMA_FEATURES {
        return Err(CliError::Bundle(format!(
            "bundle expects {} input features, rows carry {}",
            bundle.input_dim(),
            dataset::PIMA_FEATURES
        )));
    }
    let path = input_path(opts)?;
    let file = fs::File::open(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let rows = dataset::parse_query_reader(file).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    if rows.is_empty() {
        return Err(CliError::Input(format!("{}: no data rows", path.display())));
    }

    let mut csv = String::from("line,label,decision_value\n");
    let (mut labelled, mut correct) = (0usize, 0usize);
    for row in &rows {
        let x = ndarray_row(&row.features);
        let (label, value) = bundle.predict_row(x.view()).map_err(|e| match e {
            EvaluationError::Dataset(d) => CliError::Input(format!("line {}: {d}", row.line)),
            other => CliError::from(other),
        })?;
        csv.push_str(&format!("{},{},{:?}\n", row.line, label, value));
        if let Some(truth) = row.label {
            labelled += 1;
            if (truth == 1) == (label == Label::Positive) {
                correct += 1;
            }
        }
    }
    emit(out, &csv)?;
    if labelled > 0 {
        emit(
            out,
            &format!("accuracy {correct}/{labelled} = {:.4}\n", correct as f64 / labelled as f64),
        )?;
    }
    OutDir::create(&opts.out)?.write("predictions.csv", csv.as_bytes())?;
    Ok(())
}

fn ndarray_row(features: &[f64]) -> fwsvm::ndarray::Array1<f64> {
    fwsvm::ndarray::Array1::from(features.to_vec())
}

pub fn cmd_cv(opts: &Options, cfg: &PipelineConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let data = load_data(input_path(opts)?)?;
    let dir = OutDir::create(&opts.out)?;
    let exp = evaluation::cross_validate(&data, cfg)?;
    emit(out, &evaluation::render_report(&exp.report))?;
    dir.write("report.json", (exp.report.to_json() + "\n").as_bytes())?;
    for (f, bundle) in exp.bundles.iter().enumerate() {
        dir.write(&format!("fold-{f:02}-model.json"), (bundle.to_json() + "\n").as_bytes())?;
        dir.write_trace(&format!("fold-{f:02}-trace.csv"), &exp.report.folds[f].trace)?;
    }
    Ok(())
}
