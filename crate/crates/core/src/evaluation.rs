//! Three-stage pipeline (PCA → MI weights → MCS-tuned weighted SVM),
//! confusion-matrix metrics, and single-split / k-fold experiments.

use std::fmt;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{self, DatasetError, Label, SampleMatrix, StandardizationParams};
use crate::mcs::{self, McsConfig, McsError, Objective, TraceRow};
use crate::mi_weights::{self, Bandwidth, FeatureWeights, MiError, ParzenConfig};
use crate::pca::{PcaError, PcaModel};
use crate::rng;
use crate::wfsvm::{self, KernelSpec, KernelVariant, SvmError, SvmModel, SvmParams};
use crate::Scalar;

pub const BUNDLE_SCHEMA: &str = "fwsvm-model-bundle/1";
pub const REPORT_SCHEMA: &str = "fwsvm-report/1";

#[derive(Debug, Error)]
pub enum EvaluationError {
    #[error("config: {0}")]
    Config(String),
    #[error("{expected} predictions expected, got {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("dataset stage: {0}")]
    Dataset(#[from] DatasetError),
    #[error("pca stage: {0}")]
    Pca(#[from] PcaError),
    #[error("mutual-information stage: {0}")]
    Mi(#[from] MiError),
    #[error("svm stage: {0}")]
    Svm(#[from] SvmError),
    #[error("mcs stage: {0}")]
    Mcs(#[from] McsError),
    #[error("fold {index}: {source}")]
    Fold {
        index: usize,
        #[source]
        source: Box<EvaluationError>,
    },
    #[error("bundle: {0}")]
    Bundle(String),
}

impl EvaluationError {
    /// Name of the pipeline stage that failed.
    pub fn stage(&self) -> &'static str {
        match self {
            EvaluationError::Config(_) => "config",
            EvaluationError::LengthMismatch { .. } => "evaluation",
            EvaluationError::Dataset(_) => "standardize",
            EvaluationError::Pca(_) => "pca",
            EvaluationError::Mi(_) => "weights",
            EvaluationError::Svm(_) => "svm",
            EvaluationError::Mcs(_) => "tune",
            EvaluationError::Fold { source, .. } => source.stage(),
            EvaluationError::Bundle(_) => "bundle",
        }
    }
}

/// Binary confusion counts; positive = diabetic = +1.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tn: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tp: usize,
}

impl ConfusionMatrix {
    pub fn new(tn: usize, fp: usize, fn_: usize, tp: usize) -> Self {
        Self { tn, fp, fn_, tp }
    }

    pub fn total(&self) -> usize {
        self.tn + self.fp + self.fn_ + self.tp
    }

    pub fn record(&mut self, predicted: Label, truth: Label) {
        match (truth, predicted) {
            (Label::Negative, Label::Negative) => self.tn += 1,
            (Label::Negative, Label::Positive) => self.fp += 1,
            (Label::Positive, Label::Negative) => self.fn_ += 1,
            (Label::Positive, Label::Positive) => self.tp += 1,
        }
    }
}

impl std::ops::Add for ConfusionMatrix {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self::new(self.tn + o.tn, self.fp + o.fp, self.fn_ + o.fn_, self.tp + o.tp)
    }
}

pub fn confusion(predictions: &[Label], truth: &[Label]) -> Result<ConfusionMatrix, EvaluationError> {
    if predictions.len() != truth.len() {
        return Err(EvaluationError::LengthMismatch {
            expected: truth.len(),
            found: predictions.len(),
        });
    }
    let mut cm = ConfusionMatrix::default();
    for (&p, &t) in predictions.iter().zip(truth) {
        cm.record(p, t);
    }
    Ok(cm)
}

/// Ratios of a confusion matrix; `None` when the denominator is zero.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: Option<f64>,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn metrics(cm: &ConfusionMatrix) -> Metrics {
    Metrics {
        accuracy: ratio(cm.tp + cm.tn, cm.total()),
        sensitivity: ratio(cm.tp, cm.tp + cm.fn_),
        specificity: ratio(cm.tn, cm.tn + cm.fp),
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSpace {
    /// Standardize, then project onto the leading principal components.
    #[default]
    Pca,
    /// Standardized raw features; PCA is skipped.
    Raw,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitnessMode {
    /// Correctly classified / total on the tuning set itself.
    #[default]
    TrainingAccuracy,
    /// Pooled accuracy of an inner stratified k-fold on the tuning set.
    InnerCv,
}

impl fmt::Display for FitnessMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FitnessMode::TrainingAccuracy => "training_accuracy",
            FitnessMode::InnerCv => "inner_cv",
        })
    }
}

/// Every knob of the pipeline, flat so it maps one-to-one onto a key-value
/// config file. Unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub seed: u64,
    pub n_components: usize,
    pub feature_space: FeatureSpace,
    pub c_min: f64,
    pub c_max: f64,
    pub gamma_min: f64,
    pub gamma_max: f64,
    /// Search `(log10 C, log10 γ)` instead of `(C, γ)`.
    pub log_space: bool,
    pub kernel_variant: KernelVariant,
    pub kkt_tolerance: f64,
    pub max_iterations: usize,
    pub folds: usize,
    /// Test rows in single-split mode.
    pub holdout_size: usize,
    pub fitness: FitnessMode,
    pub inner_folds: usize,
    pub n_nests: usize,
    pub frac_abandon: f64,
    pub frac_top: f64,
    pub max_levy_step: f64,
    pub levy_exponent: f64,
    pub budget: usize,
    /// Fixed Parzen window width; Silverman's rule when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bandwidth: Option<f64>,
    pub leave_one_out: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            n_components: 4,
            feature_space: FeatureSpace::Pca,
            c_min: 1e-3,
            c_max: 200.0,
            gamma_min: 1e-3,
            gamma_max: 2.0,
            log_space: false,
            kernel_variant: KernelVariant::Sqrt,
            kkt_tolerance: 1e-3,
            max_iterations: 1_000_000,
            folds: 10,
            holdout_size: 78,
            fitness: FitnessMode::TrainingAccuracy,
            inner_folds: 5,
            n_nests: 25,
            frac_abandon: 0.75,
            frac_top: 0.25,
            max_levy_step: 1.0,
            levy_exponent: 1.5,
            budget: 2000,
            bandwidth: None,
            leave_one_out: false,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), EvaluationError> {
        let bad = |m: String| Err(EvaluationError::Config(m));
        let interval_ok = |lo: f64, hi: f64| lo > 0.0 && lo < hi && hi.is_finite();
        if !interval_ok(self.c_min, self.c_max) {
            return bad(format!("C bounds must satisfy 0 < c_min < c_max, got [{}, {}]", self.c_min, self.c_max));
        }
        if !interval_ok(self.gamma_min, self.gamma_max) {
            return bad(format!(
                "gamma bounds must satisfy 0 < gamma_min < gamma_max, got [{}, {}]",
                self.gamma_min, self.gamma_max
            ));
        }
        if !(1..=dataset::PIMA_FEATURES).contains(&self.n_components) {
            return bad(format!("n_components must be in 1..=8, got {}", self.n_components));
        }
        if self.folds < 2 {
            return bad(format!("folds must be at least 2, got {}", self.folds));
        }
        if self.inner_folds < 2 {
            return bad(format!("inner_folds must be at least 2, got {}", self.inner_folds));
        }
        if !(self.kkt_tolerance > 0.0) {
            return bad("kkt_tolerance must be positive".into());
        }
        if self.max_iterations == 0 {
            return bad("max_iterations must be positive".into());
        }
        if let Some(h) = self.bandwidth {
            if !(h > 0.0 && h.is_finite()) {
                return bad(format!("bandwidth must be positive, got {h}"));
            }
        }
        self.mcs_config(0).validate().map_err(|e| EvaluationError::Config(e.to_string()))
    }

    pub fn parzen(&self) -> ParzenConfig {
        ParzenConfig {
            bandwidth: self.bandwidth.map_or(Bandwidth::Silverman, Bandwidth::Fixed),
            leave_one_out: self.leave_one_out,
        }
    }

    /// Search box in the optimizer's coordinates.
    pub fn search_bounds(&self) -> Vec<(f64, f64)> {
        if self.log_space {
            vec![
                (self.c_min.log10(), self.c_max.log10()),
                (self.gamma_min.log10(), self.gamma_max.log10()),
            ]
        } else {
            vec![(self.c_min, self.c_max), (self.gamma_min, self.gamma_max)]
        }
    }

    /// Optimizer coordinates to `(C, γ)`, clamped to the configured box.
    pub fn decode(&self, position: &[f64]) -> (f64, f64) {
        let (c, g) = if self.log_space {
            (10f64.powf(position[0]), 10f64.powf(position[1]))
        } else {
            (position[0], position[1])
        };
        (c.clamp(self.c_min, self.c_max), g.clamp(self.gamma_min, self.gamma_max))
    }

    pub fn mcs_config(&self, seed: u64) -> McsConfig {
        McsConfig {
            n_nests: self.n_nests,
            frac_abandon: self.frac_abandon,
            frac_top: self.frac_top,
            max_levy_step: self.max_levy_step,
            max_evaluations: self.budget,
            bounds: self.search_bounds(),
            levy_exponent: self.levy_exponent,
            seed,
        }
    }

    pub fn svm_params<T: Scalar>(&self, c: T) -> SvmParams<T> {
        SvmParams {
            c,
            kkt_tolerance: T::lit(self.kkt_tolerance),
            max_iterations: self.max_iterations,
        }
    }

    /// Box midpoint `(C, γ)` in raw parameter space.
    pub fn midpoint(&self) -> (f64, f64) {
        ((self.c_min + self.c_max) / 2.0, (self.gamma_min + self.gamma_max) / 2.0)
    }
}

/// Fitness of `(C, γ)` on a fixed training set with fixed feature weights.
/// The weighted distance matrix is computed once; each evaluation only
/// rebuilds `exp(−γ D)` and retrains.
pub struct FitnessEvaluator<'a, T> {
    cfg: &'a PipelineConfig,
    labels: Vec<Label>,
    distances: Array2<T>,
    inner: Option<dataset::FoldPlan>,
}

impl<'a, T: Scalar> FitnessEvaluator<'a, T> {
    pub fn new(train: &SampleMatrix<T>, weights: &FeatureWeights<T>, cfg: &'a PipelineConfig, seed: u64) -> Result<Self, EvaluationError> {
        if weights.len() != train.n_features() {
            return Err(SvmError::DimensionMismatch {
                expected: train.n_features(),
                found: weights.len(),
            }
            .into());
        }
        let inner = match cfg.fitness {
            FitnessMode::TrainingAccuracy => None,
            FitnessMode::InnerCv => Some(dataset::stratified_kfold(train.labels(), cfg.inner_folds, rng::derive_seed(seed, "inner_cv", 0))?),
        };
        Ok(Self {
            cfg,
            labels: train.labels().to_vec(),
            distances: wfsvm::distance_matrix(train.features(), &weights.alpha, cfg.kernel_variant),
            inner,
        })
    }

    fn try_accuracy(&self, c: T, gamma: T) -> Result<T, SvmError> {
        let gram = wfsvm::gram_from_distances(&self.distances, gamma);
        let params = self.cfg.svm_params(c);
        let correct = match &self.inner {
            None => {
                let sol = wfsvm::solve_dual(gram.view(), &self.labels, &params)?;
                sol.fitted_decisions()
                    .iter()
                    .zip(&self.labels)
                    .filter(|(&f, &l)| Label::from_sign(f) == l)
                    .count()
            }
            Some(plan) => {
                let mut correct = 0;
                for f in 0..plan.k {
                    let (tr, te) = plan.split(f);
                    let y_tr: Vec<Label> = tr.iter().map(|&i| self.labels[i]).collect();
                    let sub = gram.select(Axis(0), &tr).select(Axis(1), &tr);
                    let sol = wfsvm::solve_dual(sub.view(), &y_tr, &params)?;
                    for &i in &te {
                        let mut s = sol.bias;
                        for (k, &j) in tr.iter().enumerate() {
                            let a = sol.multipliers[k];
                            if a != T::zero() {
                                s += a * y_tr[k].sign::<T>() * gram[[i, j]];
                            }
                        }
                        if Label::from_sign(s) == self.labels[i] {
                            correct += 1;
                        }
                    }
                }
                correct
            }
        };
        Ok(T::lit(correct as f64 / self.labels.len() as f64))
    }

    /// Accuracy at `(C, γ)`; solver failures score 0.
    pub fn accuracy(&self, c: T, gamma: T) -> T {
        self.try_accuracy(c, gamma).unwrap_or_else(|e| {
            log::warn!("fitness at C={c}, gamma={gamma} failed: {e}; scoring 0");
            T::zero()
        })
    }
}

impl<T: Scalar> Objective<T> for FitnessEvaluator<'_, T> {
    fn dimension(&self) -> usize {
        2
    }

    fn evaluate(&self, x: &[T]) -> T {
        let (c, g) = self.cfg.decode(&[x[0].as_f64(), x[1].as_f64()]);
        self.accuracy(T::lit(c), T::lit(g))
    }
}

/// Training-set accuracy (or inner-CV accuracy, per `cfg.fitness`) of a
/// weighted SVM at `(C, γ)`.
pub fn fitness<T: Scalar>(
    c: T,
    gamma: T,
    train: &SampleMatrix<T>,
    weights: &FeatureWeights<T>,
    cfg: &PipelineConfig,
) -> Result<T, EvaluationError> {
    Ok(FitnessEvaluator::new(train, weights, cfg, cfg.seed)?.accuracy(c, gamma))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuningInfo<T> {
    pub c: T,
    pub gamma: T,
    pub fitness_mode: FitnessMode,
    pub tuned_fitness: T,
    pub evaluations: usize,
    /// Accuracy of the final model on the rows it was trained on.
    pub training_accuracy: T,
    pub training_rows: usize,
}

/// Everything needed to classify a raw 8-feature row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: crate::Scalar")]
pub struct ModelBundle<T> {
    pub schema: String,
    pub standardization: StandardizationParams<T>,
    pub pca: Option<PcaModel<T>>,
    pub weights: FeatureWeights<T>,
    pub svm: SvmModel<T>,
    pub tuning: TuningInfo<T>,
}

impl<T: Scalar> ModelBundle<T> {
    pub fn input_dim(&self) -> usize {
        self.standardization.n_features()
    }

    pub fn transform_row(&self, x: ArrayView1<'_, T>) -> Result<Array1<T>, EvaluationError> {
        let z = self.standardization.apply_row(x)?;
        Ok(match &self.pca {
            Some(p) => p.transform(z.view())?,
            None => z,
        })
    }

    /// Raw decision value and label for one raw feature row.
    pub fn predict_row(&self, x: ArrayView1<'_, T>) -> Result<(Label, T), EvaluationError> {
        let q = self.transform_row(x)?;
        let v = self.svm.decision_value(q.view())?;
        Ok((Label::from_sign(v), v))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("bundle serializes")
    }

    /// Parses a bundle, checking the schema tag before anything else.
    pub fn from_json(text: &str) -> Result<Self, EvaluationError> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| EvaluationError::Bundle(e.to_string()))?;
        match value.get("schema").and_then(|s| s.as_str()) {
            Some(BUNDLE_SCHEMA) => {}
            Some(other) => return Err(EvaluationError::Bundle(format!("unsupported schema `{other}` (expected {BUNDLE_SCHEMA})"))),
            None => return Err(EvaluationError::Bundle("missing schema field".into())),
        }
        serde_json::from_value(value).map_err(|e| EvaluationError::Bundle(e.to_string()))
    }
}

/// Stages that fit parameters, in execution order, plus the final test evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    Standardize,
    Pca,
    Weights,
    Tune,
    FinalFit,
    Evaluate,
}

/// Per-fold diagnostics and results.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: crate::Scalar")]
pub struct FoldReport<T> {
    pub index: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub confusion: ConfusionMatrix,
    pub metrics: Metrics,
    pub c: T,
    pub gamma: T,
    pub tuned_fitness: T,
    /// Tuning criterion at the box midpoint, for comparison with the tuned point.
    pub midpoint_fitness: T,
    pub training_accuracy: T,
    #[serde(with = "crate::nested::vector")]
    pub alpha: Array1<T>,
    #[serde(with = "crate::nested::vector")]
    pub mi_bits: Array1<T>,
    pub explained_variance_ratio: Option<T>,
    pub n_support: usize,
    pub converged: bool,
    pub evaluations: usize,
    pub trace: Vec<TraceRow<T>>,
}

pub struct FoldOutcome<T> {
    pub report: FoldReport<T>,
    pub bundle: ModelBundle<T>,
}

/// Runs the pipeline on one train/test split. Every fitted quantity sees
/// `train` only; `test` is touched once, at the end.
pub fn run_fold<T: Scalar>(
    train: &SampleMatrix<T>,
    test: &SampleMatrix<T>,
    cfg: &PipelineConfig,
    index: usize,
    seed: u64,
) -> Result<FoldOutcome<T>, EvaluationError> {
    run_fold_observed(train, test, cfg, index, seed, &|_| {})
}

fn run_fold_observed<T: Scalar>(
    train: &SampleMatrix<T>,
    test: &SampleMatrix<T>,
    cfg: &PipelineConfig,
    index: usize,
    seed: u64,
    observe: &(dyn Fn(Stage) + Sync),
) -> Result<FoldOutcome<T>, EvaluationError> {
    cfg.validate()?;

    observe(Stage::Standardize);
    let standardization = StandardizationParams::fit(train)?;
    let train_z = standardization.apply(train)?;

    let (pca, train_q) = match cfg.feature_space {
        FeatureSpace::Pca => {
            observe(Stage::Pca);
            let model = PcaModel::fit(&train_z, cfg.n_components)?;
            let q = model.transform_matrix(&train_z)?;
            (Some(model), q)
        }
        FeatureSpace::Raw => (None, train_z),
    };

    observe(Stage::Weights);
    let weights = mi_weights::compute_weights(&train_q, &cfg.parzen())?;

    observe(Stage::Tune);
    let evaluator = FitnessEvaluator::new(&train_q, &weights, cfg, seed)?;
    let result = mcs::optimize(&evaluator, &cfg.mcs_config(rng::derive_seed(seed, "mcs", 0)))?;
    let best: Vec<f64> = result.best.position.iter().map(|v| v.as_f64()).collect();
    let (c, gamma) = cfg.decode(&best);
    let (c, gamma) = (T::lit(c), T::lit(gamma));
    let (mid_c, mid_g) = cfg.midpoint();
    let midpoint_fitness = evaluator.accuracy(T::lit(mid_c), T::lit(mid_g));

    observe(Stage::FinalFit);
    let spec = KernelSpec::from_feature_weights(gamma, &weights, cfg.kernel_variant)?;
    let svm = wfsvm::train(train_q.features(), train_q.labels(), &cfg.svm_params(c), &spec)?;
    let train_pred: Vec<Label> = svm.decision_values(train_q.features())?.into_iter().map(Label::from_sign).collect();
    let train_cm = confusion(&train_pred, train_q.labels())?;
    let training_accuracy = T::lit((train_cm.tp + train_cm.tn) as f64 / train_cm.total() as f64);

    let bundle = ModelBundle {
        schema: BUNDLE_SCHEMA.to_string(),
        standardization,
        pca,
        weights,
        svm,
        tuning: TuningInfo {
            c,
            gamma,
            fitness_mode: cfg.fitness,
            tuned_fitness: result.best.fitness,
            evaluations: result.evaluations,
            training_accuracy,
            training_rows: train.n_samples(),
        },
    };

    observe(Stage::Evaluate);
    let mut cm = ConfusionMatrix::default();
    for (i, &truth) in test.labels().iter().enumerate() {
        let (label, _) = bundle.predict_row(test.row(i))?;
        cm.record(label, truth);
    }

    let report = FoldReport {
        index,
        train_size: train.n_samples(),
        test_size: test.n_samples(),
        confusion: cm,
        metrics: metrics(&cm),
        c,
        gamma,
        tuned_fitness: result.best.fitness,
        midpoint_fitness,
        training_accuracy,
        alpha: bundle.weights.alpha.clone(),
        mi_bits: bundle.weights.mi_values.clone(),
        explained_variance_ratio: bundle.pca.as_ref().map(|p| p.explained_variance_ratio),
        n_support: bundle.svm.n_support(),
        converged: bundle.svm.converged,
        evaluations: result.evaluations,
        trace: result.trace,
    };
    Ok(FoldOutcome { report, bundle })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample (n − 1) standard deviation across folds.
    pub std: f64,
    /// Folds where the metric was defined.
    pub count: usize,
}

fn mean_std(values: impl Iterator<Item = Option<f64>>) -> Option<MeanStd> {
    let v: Vec<f64> = values.flatten().collect();
    if v.is_empty() {
        return None;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let std = if v.len() > 1 {
        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Some(MeanStd { mean, std, count: v.len() })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub accuracy: Option<MeanStd>,
    pub sensitivity: Option<MeanStd>,
    pub specificity: Option<MeanStd>,
    /// Cellwise sum of the per-fold matrices.
    pub pooled: ConfusionMatrix,
    pub pooled_metrics: Metrics,
}

impl Aggregate {
    pub fn from_folds<T>(folds: &[FoldReport<T>]) -> Self {
        let pooled = folds.iter().fold(ConfusionMatrix::default(), |acc, f| acc + f.confusion);
        Self {
            accuracy: mean_std(folds.iter().map(|f| f.metrics.accuracy)),
            sensitivity: mean_std(folds.iter().map(|f| f.metrics.sensitivity)),
            specificity: mean_std(folds.iter().map(|f| f.metrics.specificity)),
            pooled,
            pooled_metrics: metrics(&pooled),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    KFold,
    Holdout,
}

/// Machine-readable experiment report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: crate::Scalar")]
pub struct PipelineReport<T> {
    pub schema: String,
    pub mode: SplitMode,
    pub config: PipelineConfig,
    pub n_samples: usize,
    pub folds: Vec<FoldReport<T>>,
    pub aggregate: Aggregate,
}

impl<T: Scalar> PipelineReport<T> {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

pub struct Experiment<T> {
    pub report: PipelineReport<T>,
    pub bundles: Vec<ModelBundle<T>>,
}

/// Stratified k-fold cross-validation; folds run in parallel, each with its
/// own seed derived from `(cfg.seed, fold index)`.
pub fn cross_validate<T: Scalar>(data: &SampleMatrix<T>, cfg: &PipelineConfig) -> Result<Experiment<T>, EvaluationError> {
    cross_validate_observed(data, cfg, &|_, _, _| {})
}

/// As [`cross_validate`], reporting the original row indices each stage of
/// each fold consumes.
pub fn cross_validate_observed<T: Scalar>(
    data: &SampleMatrix<T>,
    cfg: &PipelineConfig,
    observer: &(dyn Fn(usize, Stage, &[usize]) + Sync),
) -> Result<Experiment<T>, EvaluationError> {
    cfg.validate()?;
    let plan = dataset::stratified_kfold(data.labels(), cfg.folds, rng::derive_seed(cfg.seed, "folds", 0))?;
    let outcomes: Vec<Result<FoldOutcome<T>, EvaluationError>> = (0..plan.k)
        .into_par_iter()
        .map(|f| {
            let (train_idx, test_idx) = plan.split(f);
            let train = data.select(&train_idx);
            let test = data.select(&test_idx);
            let observe = |stage: Stage| {
                let rows = if stage == Stage::Evaluate { &test_idx } else { &train_idx };
                observer(f, stage, rows);
            };
            run_fold_observed(&train, &test, cfg, f, rng::derive_seed(cfg.seed, "fold", f as u64), &observe)
        })
        .collect();

    let mut folds = Vec::with_capacity(plan.k);
    let mut bundles = Vec::with_capacity(plan.k);
    for (index, outcome) in outcomes.into_iter().enumerate() {
        let outcome = outcome.map_err(|e| EvaluationError::Fold {
            index,
            source: Box::new(e),
        })?;
        folds.push(outcome.report);
        bundles.push(outcome.bundle);
    }
    let aggregate = Aggregate::from_folds(&folds);
    Ok(Experiment {
        report: PipelineReport {
            schema: REPORT_SCHEMA.to_string(),
            mode: SplitMode::KFold,
            config: cfg.clone(),
            n_samples: data.n_samples(),
            folds,
            aggregate,
        },
        bundles,
    })
}

/// Single stratified train/test split with `cfg.holdout_size` test rows.
/// Returns the experiment plus the (train, test) row indices.
pub fn single_split<T: Scalar>(
    data: &SampleMatrix<T>,
    cfg: &PipelineConfig,
) -> Result<(Experiment<T>, Vec<usize>, Vec<usize>), EvaluationError> {
    cfg.validate()?;
    let (train_idx, test_idx) = dataset::stratified_holdout(data.labels(), cfg.holdout_size, rng::derive_seed(cfg.seed, "holdout", 0))?;
    let outcome = run_fold(
        &data.select(&train_idx),
        &data.select(&test_idx),
        cfg,
        0,
        rng::derive_seed(cfg.seed, "fold", 0),
    )?;
    let folds = vec![outcome.report];
    let aggregate = Aggregate::from_folds(&folds);
    let exp = Experiment {
        report: PipelineReport {
            schema: REPORT_SCHEMA.to_string(),
            mode: SplitMode::Holdout,
            config: cfg.clone(),
            n_samples: data.n_samples(),
            folds,
            aggregate,
        },
        bundles: vec![outcome.bundle],
    };
    Ok((exp, train_idx, test_idx))
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), |x| format!("{:.2}", 100.0 * x))
}

/// Confusion matrix laid out with desired class per row, output per column.
pub fn render_confusion(cm: &ConfusionMatrix) -> String {
    format!(
        "{:<16} {:>14} {:>10}\n{:<16} {:>14} {:>10}\n{:<16} {:>14} {:>10}\n",
        "Desired/output", "Non-diabetics", "Diabetics",
        "Non-diabetics", cm.tn, cm.fp,
        "Diabetics", cm.fn_, cm.tp,
    )
}

/// Human-readable tables: pooled confusion matrix and per-fold metrics.
pub fn render_report<T: Scalar>(report: &PipelineReport<T>) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "kernel variant: {}   fitness: {}   search space: {}\n\n",
        report.config.kernel_variant,
        report.config.fitness,
        if report.config.log_space { "log10" } else { "linear" }
    ));
    out.push_str("Pooled confusion matrix\n");
    out.push_str(&render_confusion(&report.aggregate.pooled));
    out.push('\n');
    out.push_str(&format!(
        "{:<6} {:>10} {:>10} {:>10} {:>12} {:>10} {:>9}\n",
        "Fold", "Sens (%)", "Spec (%)", "Acc (%)", "C", "gamma", "tune-fit"
    ));
    for f in &report.folds {
        out.push_str(&format!(
            "{:<6} {:>10} {:>10} {:>10} {:>12.4} {:>10.4} {:>9.4}\n",
            f.index,
            pct(f.metrics.sensitivity),
            pct(f.metrics.specificity),
            pct(f.metrics.accuracy),
            f.c.as_f64(),
            f.gamma.as_f64(),
            f.tuned_fitness.as_f64()
        ));
    }
    let ms = |m: &Option<MeanStd>| m.map_or_else(|| "undefined".to_string(), |m| format!("{:.2}±{:.2}", 100.0 * m.mean, 100.0 * m.std));
    out.push_str(&format!(
        "{:<6} {:>10} {:>10} {:>10}\n",
        "mean",
        ms(&report.aggregate.sensitivity),
        ms(&report.aggregate.specificity),
        ms(&report.aggregate.accuracy)
    ));
    out.push_str(&format!(
        "{:<6} {:>10} {:>10} {:>10}\n",
        "pooled",
        pct(report.aggregate.pooled_metrics.sensitivity),
        pct(report.aggregate.pooled_metrics.specificity),
        pct(report.aggregate.pooled_metrics.accuracy)
    ));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions() {
        let y: Vec<Label> = (0..10).map(|i| if i % 2 == 0 { Label::Positive } else { Label::Negative }).collect();
        let cm = confusion(&y, &y).unwrap();
        assert_eq!((cm.fp, cm.fn_), (0, 0));
        assert_eq!(cm.total(), 10);
        let m = metrics(&cm);
        assert_eq!((m.accuracy, m.sensitivity, m.specificity), (Some(1.0), Some(1.0), Some(1.0)));
    }

    #[test]
    fn all_negative_predictor_on_table_two_mix() {
        let mut truth = vec![Label::Negative; 51];
        truth.extend(vec![Label::Positive; 27]);
        let pred = vec![Label::Negative; 78];
        assert_eq!(confusion(&pred, &truth).unwrap(), ConfusionMatrix::new(51, 0, 27, 0));
    }

    #[test]
    fn length_mismatch() {
        assert!(matches!(
            confusion(&[Label::Positive], &[]),
            Err(EvaluationError::LengthMismatch { expected: 0, found: 1 })
        ));
    }

    #[test]
    fn undefined_metrics_are_none() {
        let m = metrics(&ConfusionMatrix::new(5, 1, 0, 0));
        assert_eq!(m.sensitivity, None);
        assert_eq!(m.specificity, Some(5.0 / 6.0));
        assert_eq!(metrics(&ConfusionMatrix::default()).accuracy, None);
    }

    #[test]
    fn confusion_serializes_with_short_names() {
        let s = serde_json::to_string(&ConfusionMatrix::new(48, 3, 2, 25)).unwrap();
        assert_eq!(s, r#"{"tn":48,"fp":3,"fn":2,"tp":25}"#);
    }

    #[test]
    fn config_validation() {
        assert!(PipelineConfig::default().validate().is_ok());
        let inverted = PipelineConfig {
            c_min: 200.0,
            c_max: 1e-3,
            ..PipelineConfig::default()
        };
        assert!(matches!(inverted.validate(), Err(EvaluationError::Config(_))));
        let one_fold = PipelineConfig {
            folds: 1,
            ..PipelineConfig::default()
        };
        assert!(one_fold.validate().is_err());
        let nine = PipelineConfig {
            n_components: 9,
            ..PipelineConfig::default()
        };
        assert!(nine.validate().is_err());
    }

    #[test]
    fn log_space_decoding() {
        let cfg = PipelineConfig {
            log_space: true,
            ..PipelineConfig::default()
        };
        let b = cfg.search_bounds();
        assert!((b[0].0 + 3.0).abs() < 1e-12);
        let (c, g) = cfg.decode(&[1.0, 0.0]);
        assert!((c - 10.0).abs() < 1e-12 && (g - 1.0).abs() < 1e-12);
        let (c, _) = cfg.decode(&[10.0, 0.0]);
        assert_eq!(c, 200.0);
    }

    #[test]
    fn unknown_config_keys_rejected() {
        let err = serde_json::from_str::<PipelineConfig>(r#"{"n_components": 4, "colour": 1}"#);
        assert!(err.is_err());
        let ok: PipelineConfig = serde_json::from_str(r#"{"n_components": 3}"#).unwrap();
        assert_eq!(ok.n_components, 3);
        assert_eq!(ok.budget, 2000);
    }

    #[test]
    fn bundle_schema_checked_first() {
        assert!(matches!(
            ModelBundle::<f64>::from_json(r#"{"schema": "other/9"}"#),
            Err(EvaluationError::Bundle(m)) if m.contains("unsupported schema")
        ));
        assert!(matches!(ModelBundle::<f64>::from_json("{}"), Err(EvaluationError::Bundle(_))));
    }
}
