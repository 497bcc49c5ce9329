use fwsvm::dataset::SampleMatrix;
use fwsvm::ndarray::{Array1, Array2};
use fwsvm::pca::{self, PcaModel};
use fwsvm::Label;
use proptest::prelude::*;

mod common;
use common::oracles::bisection_eigenvalues;

fn symmetric(n: usize, entries: &[f64]) -> Array2<f64> {
    let mut a = Array2::zeros((n, n));
    let mut it = entries.iter();
    for i in 0..n {
        for j in i..n {
            let v = *it.next().unwrap();
            a[[i, j]] = v;
            a[[j, i]] = v;
        }
    }
    a
}

fn symmetric_matrix() -> impl Strategy<Value = Array2<f64>> {
    (1usize..=8).prop_flat_map(|n| prop::collection::vec(-10.0f64..10.0, n * (n + 1) / 2).prop_map(move |e| symmetric(n, &e)))
}

fn sample_matrix() -> impl Strategy<Value = SampleMatrix<f64>> {
    (1usize..=8, 10usize..40).prop_flat_map(|(d, l)| {
        prop::collection::vec(-5.0f64..5.0, d * l).prop_map(move |v| {
            let x = Array2::from_shape_vec((l, d), v).unwrap();
            SampleMatrix::new(x, vec![Label::Positive; l]).unwrap()
        })
    })
}

fn max_abs(a: &Array2<f64>) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

#[test]
fn bisection_oracle_agrees_on_known_spectrum() {
    let a = fwsvm::ndarray::array![[2.0, 1.0], [1.0, 2.0]];
    let ev = bisection_eigenvalues(&a);
    assert!((ev[0] - 3.0).abs() < 1e-12 && (ev[1] - 1.0).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn jacobi_matches_inertia_oracle(a in symmetric_matrix()) {
        let eig = pca::eig_sym_matrix(&a).unwrap();
        let oracle = bisection_eigenvalues(&a);
        for (got, want) in eig.values.iter().zip(&oracle) {
            prop_assert!((got - want).abs() < 1e-6, "{} vs {}", got, want);
        }
    }

    #[test]
    fn eigenpairs_are_orthonormal_with_small_residual(a in symmetric_matrix()) {
        let eig = pca::eig_sym_matrix(&a).unwrap();
        let n = a.nrows();
        let v = &eig.vectors;
        prop_assert!(max_abs(&(v.t().dot(v) - Array2::<f64>::eye(n))) < 1e-8);
        let scale = eig.values.iter().fold(1.0f64, |m, x| m.max(x.abs()));
        for k in 0..n {
            let col = v.column(k);
            let r = a.dot(&col) - &col * eig.values[k];
            prop_assert!(r.dot(&r).sqrt() < 1e-8 * scale);
        }
        for w in eig.values.windows(2) {
            prop_assert!(w[0] >= w[1]);
        }
        let trace: f64 = a.diag().sum();
        prop_assert!((eig.values.sum() - trace).abs() < 1e-8 * scale.max(1.0));
    }

    #[test]
    fn pca_invariants_on_random_samples(m in sample_matrix()) {
        let d = m.n_features();
        let model = PcaModel::fit(&m, d).unwrap();
        let v = &model.components;
        prop_assert!(max_abs(&(v.t().dot(v) - Array2::<f64>::eye(d))) < 1e-8);

        let cov = pca::covariance(&m).unwrap();
        let s = cov.matrix();
        prop_assert_eq!(s, &s.t().to_owned());
        let lambda1 = model.eigenvalues[0].max(1.0);
        for k in 0..d {
            let col = v.column(k);
            let r = s.dot(&col) - &col * model.eigenvalues[k];
            prop_assert!(r.dot(&r).sqrt() < 1e-8 * lambda1);
            prop_assert!(model.eigenvalues[k] >= -1e-10);
        }
        prop_assert!((model.eigenvalues.sum() - cov.trace()).abs() < 1e-8);
        prop_assert!((model.total_variance - cov.trace()).abs() < 1e-8);

        let q = model.transform_matrix(&m).unwrap();
        for k in 0..d {
            let col = q.features().column(k);
            let mean = col.mean().unwrap();
            let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / col.len() as f64;
            prop_assert!(mean.abs() < 1e-9);
            prop_assert!((var - model.eigenvalues[k]).abs() < 1e-6);
        }
        for i in 0..m.n_samples() {
            let back = model.inverse_transform(q.row(i)).unwrap();
            let err: Array1<f64> = &back - &m.row(i);
            prop_assert!(err.dot(&err).sqrt() < 1e-8);
        }
    }

    #[test]
    fn leading_components_are_a_prefix_of_the_full_fit(m in sample_matrix(), n in 1usize..=8) {
        let d = m.n_features();
        let n = n.min(d);
        let full = PcaModel::fit(&m, d).unwrap();
        let part = PcaModel::fit(&m, n).unwrap();
        prop_assert_eq!(part.components.ncols(), n);
        for k in 0..n {
            prop_assert_eq!(part.eigenvalues[k], full.eigenvalues[k]);
        }
        prop_assert!(part.explained_variance_ratio > 0.0 || full.total_variance == 0.0);
        prop_assert!(part.explained_variance_ratio <= 1.0 + 1e-12);
    }
}

#[test]
fn line_data_has_diagonal_axis_and_zero_second_eigenvalue() {
    let x = fwsvm::ndarray::array![[1.0, 1.0], [2.0, 2.0], [-1.0, -1.0], [4.0, 4.0], [0.5, 0.5]];
    let m = SampleMatrix::new(x, vec![Label::Negative; 5]).unwrap();
    let model = PcaModel::fit(&m, 2).unwrap();
    let r = std::f64::consts::FRAC_1_SQRT_2;
    assert!((model.components[[0, 0]] - r).abs() < 1e-10);
    assert!((model.components[[1, 0]] - r).abs() < 1e-10);
    assert!(model.eigenvalues[1].abs() < 1e-10);
}

#[test]
fn mean_maps_to_origin_and_axis_to_unit_vector() {
    let x = fwsvm::ndarray::array![[1.0, 0.2, 3.0], [0.0, 1.0, -1.0], [2.0, 2.0, 0.5], [-1.0, 0.4, 0.0], [0.3, -2.0, 1.0]];
    let m = SampleMatrix::new(x, vec![Label::Positive; 5]).unwrap();
    let model: PcaModel<f64> = PcaModel::fit(&m, 3).unwrap();
    let q0 = model.transform(model.mean.view()).unwrap();
    assert!(q0.iter().all(|v| v.abs() < 1e-12));
    let x1 = &model.mean + &model.components.column(0);
    let q1 = model.transform(x1.view()).unwrap();
    assert!((q1[0] - 1.0).abs() < 1e-12 && q1[1].abs() < 1e-12 && q1[2].abs() < 1e-12);
}
