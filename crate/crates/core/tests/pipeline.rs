use std::path::PathBuf;
use std::sync::Mutex;

use fwsvm::dataset::{self, SampleMatrix};
use fwsvm::evaluation::{self, ConfusionMatrix, FitnessMode, ModelBundle, Stage};
use fwsvm::mi_weights::FeatureWeights;
use fwsvm::ndarray::Array2;
use fwsvm::{Label, PipelineConfig, SampleMatrix64};

fn pima() -> SampleMatrix64 {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/pima-indians-diabetes.data");
    dataset::to_matrix(&dataset::parse_csv(&std::fs::read_to_string(p).unwrap()).unwrap()).unwrap()
}

/// Every fourth Pima row: 192 samples, both classes.
fn small_pima() -> SampleMatrix64 {
    let idx: Vec<usize> = (0..768).step_by(4).collect();
    pima().select(&idx)
}

fn quick_config() -> PipelineConfig {
    PipelineConfig {
        folds: 3,
        budget: 60,
        n_nests: 10,
        seed: 9,
        ..PipelineConfig::default()
    }
}

fn close(a: Option<f64>, b: f64) -> bool {
    (100.0 * a.unwrap() - b).abs() < 0.01
}

#[test]
fn published_confusion_matrices_give_published_rates() {
    let m = evaluation::metrics(&ConfusionMatrix::new(48, 3, 2, 25));
    assert!(close(m.accuracy, 93.5897));
    assert!(close(m.sensitivity, 92.5926));
    assert!(close(m.specificity, 94.1176));
    let m = evaluation::metrics(&ConfusionMatrix::new(44, 11, 6, 17));
    assert!(close(m.accuracy, 78.2051));
    assert!(close(m.sensitivity, 73.9130));
    assert!(close(m.specificity, 80.0));
}

#[test]
fn no_fitted_stage_sees_test_rows() {
    let data = small_pima();
    let cfg = quick_config();
    let log = Mutex::new(Vec::new());
    let exp = evaluation::cross_validate_observed(&data, &cfg, &|fold, stage, rows| {
        log.lock().unwrap().push((fold, stage, rows.to_vec()));
    })
    .unwrap();
    let plan = dataset::stratified_kfold(data.labels(), cfg.folds, fwsvm::rng::derive_seed(cfg.seed, "folds", 0)).unwrap();
    let log = log.into_inner().unwrap();
    for f in 0..cfg.folds {
        let (train, test) = plan.split(f);
        let events: Vec<_> = log.iter().filter(|e| e.0 == f).collect();
        let stages: Vec<Stage> = events.iter().map(|e| e.1).collect();
        assert_eq!(
            stages,
            vec![Stage::Standardize, Stage::Pca, Stage::Weights, Stage::Tune, Stage::FinalFit, Stage::Evaluate]
        );
        for (_, stage, rows) in &events {
            if *stage == Stage::Evaluate {
                assert_eq!(rows, &test);
            } else {
                assert_eq!(rows, &train);
                assert!(rows.iter().all(|r| !test.contains(r)));
            }
        }
        assert_eq!(exp.report.folds[f].test_size, test.len());
    }
}

#[test]
fn tuned_point_dominates_trace_and_midpoint() {
    let data = small_pima();
    for fitness in [FitnessMode::TrainingAccuracy, FitnessMode::InnerCv] {
        let cfg = PipelineConfig { fitness, ..quick_config() };
        let exp = evaluation::cross_validate(&data, &cfg).unwrap();
        for f in &exp.report.folds {
            assert!(f.trace.iter().all(|row| row.best_fitness <= f.tuned_fitness));
            assert_eq!(f.trace.last().unwrap().best_fitness, f.tuned_fitness);
            assert!(f.evaluations <= cfg.budget);
            assert!(f.c >= cfg.c_min && f.c <= cfg.c_max);
            assert!(f.gamma >= cfg.gamma_min && f.gamma <= cfg.gamma_max);
            assert!((f.alpha.sum() - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn cross_validation_is_reproducible() {
    let data = small_pima();
    let a = evaluation::cross_validate(&data, &quick_config()).unwrap();
    let b = evaluation::cross_validate(&data, &quick_config()).unwrap();
    assert_eq!(a.report.to_json(), b.report.to_json());
    let total: usize = a.report.folds.iter().map(|f| f.test_size).sum();
    assert_eq!(total, data.n_samples());
    assert_eq!(a.report.aggregate.pooled.total(), data.n_samples());
}

#[test]
fn bundle_round_trips_and_reproduces_training_accuracy() {
    let data = small_pima();
    let (exp, train, _) = evaluation::single_split(&data, &PipelineConfig { holdout_size: 20, ..quick_config() }).unwrap();
    let bundle = &exp.bundles[0];
    let back = ModelBundle::<f64>::from_json(&bundle.to_json()).unwrap();
    assert_eq!(&back, bundle);

    let correct = train
        .iter()
        .filter(|&&i| back.predict_row(data.row(i)).unwrap().0 == data.labels()[i])
        .count();
    let acc = correct as f64 / train.len() as f64;
    assert!((acc - bundle.tuning.training_accuracy).abs() < 1e-12);
    assert_eq!(bundle.tuning.training_rows, train.len());
    assert_eq!(exp.report.folds[0].test_size, 20);
}

#[test]
fn tiny_gamma_scores_at_least_the_majority_rate() {
    let data = pima();
    let z = dataset::StandardizationParams::fit(&data).unwrap().apply(&data).unwrap();
    let q = fwsvm::PcaModel64::fit(&z, 4).unwrap().transform_matrix(&z).unwrap();
    let w = fwsvm::mi_weights::compute_weights(&q, &fwsvm::ParzenConfig::default()).unwrap();
    let cfg = PipelineConfig::default();
    let f = evaluation::fitness(1.0, 1e-3, &q, &w, &cfg).unwrap();
    assert!(f >= 500.0 / 768.0, "{f}");
    assert_eq!(f, evaluation::fitness(1.0, 1e-3, &q, &w, &cfg).unwrap());
}

#[test]
fn solver_failure_scores_zero() {
    let x = Array2::from_shape_fn((6, 2), |(i, j)| (i * 2 + j) as f64);
    let m = SampleMatrix::new(x, vec![Label::Positive; 6]).unwrap();
    let f = evaluation::fitness(1.0, 1.0, &m, &FeatureWeights::uniform(2), &PipelineConfig::default()).unwrap();
    assert_eq!(f, 0.0);
}

#[test]
fn raw_feature_space_skips_projection() {
    let data = small_pima();
    let cfg = PipelineConfig {
        feature_space: evaluation::FeatureSpace::Raw,
        ..quick_config()
    };
    let (exp, _, _) = evaluation::single_split(&data, &PipelineConfig { holdout_size: 20, ..cfg }).unwrap();
    assert!(exp.bundles[0].pca.is_none());
    assert_eq!(exp.bundles[0].weights.len(), 8);
}

#[test]
fn single_precision_pipeline_runs() {
    let data: fwsvm::SampleMatrix32 = dataset::to_matrix(&dataset::parse_csv(
        &std::fs::read_to_string(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/pima-indians-diabetes.data")).unwrap(),
    )
    .unwrap())
    .unwrap();
    let idx: Vec<usize> = (0..768).step_by(4).collect();
    let exp = evaluation::cross_validate(&data.select(&idx), &quick_config()).unwrap();
    let acc = exp.report.aggregate.accuracy.unwrap().mean;
    assert!(acc > 0.5 && acc <= 1.0);
}

#[test]
fn invalid_configs_are_rejected_before_work() {
    let data = small_pima();
    let cfg = PipelineConfig { gamma_min: 3.0, ..quick_config() };
    assert!(matches!(evaluation::cross_validate(&data, &cfg), Err(evaluation::EvaluationError::Config(_))));
    let cfg = PipelineConfig { budget: 5, ..quick_config() };
    assert!(matches!(evaluation::cross_validate(&data, &cfg), Err(evaluation::EvaluationError::Config(_))));
}
