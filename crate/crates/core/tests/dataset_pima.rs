use std::path::PathBuf;

use fwsvm::dataset::{self, DatasetError, SampleMatrix, StandardizationParams};
use fwsvm::{Label, SampleMatrix64};
use proptest::prelude::*;

mod common;
use common::oracles::PUBLISHED_SUMMARY;

fn pima_text() -> String {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/pima-indians-diabetes.data");
    std::fs::read_to_string(p).unwrap()
}

fn pima() -> SampleMatrix64 {
    dataset::to_matrix(&dataset::parse_csv(&pima_text()).unwrap()).unwrap()
}

#[test]
fn summary_reproduces_published_table() {
    let rows = dataset::summary_stats(&pima());
    assert_eq!(rows.len(), 8);
    for (r, &(mean, std, min, max)) in rows.iter().zip(&PUBLISHED_SUMMARY) {
        assert_eq!(format!("{:.1}", r.mean), format!("{mean:.1}"), "feature {}", r.feature);
        assert_eq!(format!("{:.1}", r.std), format!("{std:.1}"), "feature {}", r.feature);
        assert_eq!(format!("{}", r.min), min);
        assert_eq!(format!("{}", r.max), max);
    }
    let table = dataset::render_summary_table(&rows);
    assert!(table.contains("0.078/2.42"));
    assert!(table.contains("115.2"));
}

#[test]
fn class_balance() {
    let m = pima();
    assert_eq!(m.n_samples(), 768);
    assert_eq!(m.n_features(), 8);
    assert_eq!(m.n_positive(), 268);
}

#[test]
fn header_line_is_skipped() {
    let text = format!("preg,plas,pres,skin,insu,mass,pedi,age,class\n{}", pima_text());
    assert_eq!(dataset::parse_csv(&text).unwrap().len(), 768);
}

#[test]
fn parse_errors_name_the_line() {
    let err = dataset::parse_csv("1,2,3,4,5,6,7,8,1\n1,2,3,4,5,6,7,8\n").unwrap_err();
    assert!(matches!(err, DatasetError::FieldCount { line: 2, expected: 9, found: 8 }));
    let err = dataset::parse_csv("1,2,3,4,5,6,7,8,1\n1,2,x,4,5,6,7,8,0\n").unwrap_err();
    assert!(matches!(err, DatasetError::NonNumeric { line: 2, field: 3, .. }));
    let err = dataset::parse_csv("1,2,3,4,5,6,7,8,2\n").unwrap_err();
    assert!(matches!(err, DatasetError::InvalidLabel { line: 1, .. }));
    assert!(matches!(dataset::to_matrix::<f64>(&dataset::parse_csv("").unwrap()), Err(DatasetError::Empty)));
}

#[test]
fn query_rows_accept_optional_labels() {
    let rows = dataset::parse_query_reader("1,2,3,4,5,6,7,8\n1,2,3,4,5,6,7,8,1\n".as_bytes()).unwrap();
    assert_eq!(rows[0].label, None);
    assert_eq!(rows[1].label, Some(1));
    assert!(dataset::parse_query_reader("1,2,3\n".as_bytes()).is_err());
}

#[test]
fn parsing_is_byte_deterministic() {
    assert_eq!(pima(), pima());
}

#[test]
fn ten_folds_are_stratified() {
    let m = pima();
    let plan = dataset::stratified_kfold(m.labels(), 10, 42).unwrap();
    let mut seen = vec![0usize; 768];
    for f in 0..10 {
        let (train, test) = plan.split(f);
        assert_eq!(train.len() + test.len(), 768);
        assert!((76..=77).contains(&test.len()), "fold {f} has {}", test.len());
        let pos = test.iter().filter(|&&i| m.labels()[i].is_positive()).count();
        assert!((26..=27).contains(&pos), "fold {f} has {pos} positives");
        for &i in &test {
            seen[i] += 1;
        }
        let expected = (268.0 * test.len() as f64 / 768.0).round() as i64;
        assert!((pos as i64 - expected).abs() <= 1);
    }
    assert!(seen.iter().all(|&c| c == 1));
}

#[test]
fn holdout_mirrors_the_published_split_size() {
    let m = pima();
    let (train, test) = dataset::stratified_holdout(m.labels(), 78, 42).unwrap();
    assert_eq!(test.len(), 78);
    assert_eq!(train.len(), 690);
    let pos = test.iter().filter(|&&i| m.labels()[i].is_positive()).count();
    assert_eq!(pos, 27);
}

#[test]
fn standardization_centres_and_scales() {
    let m = pima();
    let params = StandardizationParams::fit(&m).unwrap();
    let z = params.apply(&m).unwrap();
    for j in 0..8 {
        let col = z.features().column(j);
        let mean = col.mean().unwrap();
        let std = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 768.0).sqrt();
        assert!(mean.abs() < 1e-10 && (std - 1.0).abs() < 1e-10);
    }
    let cov = fwsvm::pca::covariance(&z).unwrap();
    for j in 0..8 {
        assert!((cov.matrix()[[j, j]] - 1.0).abs() < 1e-10);
    }
}

#[test]
fn constant_column_is_rejected() {
    let x = fwsvm::ndarray::array![[1.0, 2.0], [1.0, 3.0], [1.0, 4.0]];
    let m = SampleMatrix::new(x, vec![Label::Positive, Label::Negative, Label::Positive]).unwrap();
    assert!(matches!(StandardizationParams::fit(&m), Err(DatasetError::ConstantColumn { column: 0 })));
}

proptest! {
    #[test]
    fn folds_partition_and_stratify(n_pos in 2usize..60, n_neg in 2usize..60, k in 2usize..8, seed in any::<u64>()) {
        prop_assume!(k <= n_pos + n_neg);
        let mut y = vec![Label::Positive; n_pos];
        y.extend(vec![Label::Negative; n_neg]);
        let plan = dataset::stratified_kfold(&y, k, seed).unwrap();
        let n = y.len();
        let mut seen = vec![0usize; n];
        for f in 0..k {
            let (_, test) = plan.split(f);
            for &i in &test {
                seen[i] += 1;
            }
            for class in [Label::Positive, Label::Negative] {
                let total = y.iter().filter(|&&l| l == class).count() as f64;
                let count = test.iter().filter(|&&i| y[i] == class).count() as i64;
                let expected = (total * test.len() as f64 / n as f64).round() as i64;
                prop_assert!((count - expected).abs() <= 1);
            }
        }
        prop_assert!(seen.iter().all(|&c| c == 1));
        let sizes: Vec<usize> = (0..k).map(|f| plan.fold_size(f)).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }
}
