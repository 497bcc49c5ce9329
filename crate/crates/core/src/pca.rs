//! Principal component analysis: population covariance, cyclic Jacobi
//! eigendecomposition, and centered projection onto the leading axes.

use std::cmp::Ordering;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{DatasetError, SampleMatrix};
use crate::Scalar;

/// Sweep cap for the Jacobi iteration.
pub const MAX_SWEEPS: usize = 100;
/// Off-diagonal Frobenius norm, relative to the full norm, at which Jacobi stops.
pub const OFF_DIAGONAL_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum PcaError {
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("n_components must be in 1..={d}, got {requested}")]
    InvalidComponents { requested: usize, d: usize },
    #[error("matrix is not square and symmetric")]
    NotSymmetric,
    #[error("Jacobi did not converge after {sweeps} sweeps (off-diagonal norm {off_norm:e})")]
    NotConverged { sweeps: usize, off_norm: f64 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

/// Population covariance `S = (1/L) Σ (x_k − m)ᵀ(x_k − m)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CovarianceMatrix<T> {
    s: Array2<T>,
    sample_count: usize,
}

impl<T: Scalar> CovarianceMatrix<T> {
    pub fn matrix(&self) -> &Array2<T> {
        &self.s
    }

    pub fn sample_count(&self) -> usize {
        self.sample_count
    }

    pub fn trace(&self) -> T {
        self.s.diag().sum()
    }
}

fn column_means<T: Scalar>(x: &Array2<T>) -> Array1<T> {
    x.sum_axis(Axis(0)) / T::lit(x.nrows() as f64)
}

pub fn covariance<T: Scalar>(m: &SampleMatrix<T>) -> Result<CovarianceMatrix<T>, PcaError> {
    let x = m.features();
    let n = x.nrows();
    if n < 2 {
        return Err(PcaError::TooFewSamples(n));
    }
    let mean = column_means(x);
    let centered = x - &mean;
    let d = x.ncols();
    let nf = T::lit(n as f64);
    let mut s = Array2::zeros((d, d));
    for a in 0..d {
        for b in a..d {
            let v = centered.column(a).dot(&centered.column(b)) / nf;
            s[[a, b]] = v;
            s[[b, a]] = v;
        }
    }
    Ok(CovarianceMatrix { s, sample_count: n })
}

/// Eigenpairs of a symmetric matrix, values descending, vectors as columns.
#[derive(Clone, Debug, PartialEq)]
pub struct SymmetricEigen<T> {
    pub values: Array1<T>,
    pub vectors: Array2<T>,
    pub sweeps: usize,
}

fn off_diagonal_norm<T: Scalar>(a: &Array2<T>) -> T {
    let mut acc = T::zero();
    for ((i, j), &v) in a.indexed_iter() {
        if i != j {
            acc += v * v;
        }
    }
    acc.sqrt()
}

/// Flips `v` so its largest-magnitude entry (first one on ties) is positive.
fn normalize_sign<T: Scalar>(mut v: ndarray::ArrayViewMut1<'_, T>) {
    let mut best = 0;
    for k in 1..v.len() {
        if v[k].abs() > v[best].abs() {
            best = k;
        }
    }
    if v[best] < T::zero() {
        v.mapv_inplace(|e| -e);
    }
}

fn lexicographic<T: Scalar>(a: ArrayView1<'_, T>, b: ArrayView1<'_, T>) -> Ordering {
    for (x, y) in a.iter().zip(b.iter()) {
        match x.partial_cmp(y) {
            Some(Ordering::Equal) | None => continue,
            Some(o) => return o,
        }
    }
    Ordering::Equal
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
pub fn eig_sym_matrix<T: Scalar>(matrix: &Array2<T>) -> Result<SymmetricEigen<T>, PcaError> {
    let n = matrix.nrows();
    if matrix.ncols() != n || matrix.iter().any(|v| !v.is_finite()) {
        return Err(PcaError::NotSymmetric);
    }
    for i in 0..n {
        for j in 0..i {
            if matrix[[i, j]] != matrix[[j, i]] {
                return Err(PcaError::NotSymmetric);
            }
        }
    }

    let mut a = matrix.clone();
    let mut v = Array2::<T>::eye(n);
    let norm = a.iter().map(|&x| x * x).sum::<T>().sqrt();
    let tol = T::lit(OFF_DIAGONAL_TOLERANCE).max(T::epsilon() * T::lit(4.0)) * norm;

    let mut sweeps = 0;
    let two = T::lit(2.0);
    while off_diagonal_norm(&a) > tol {
        if sweeps == MAX_SWEEPS {
            return Err(PcaError::NotConverged {
                sweeps,
                off_norm: off_diagonal_norm(&a).as_f64(),
            });
        }
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[[p, q]];
                if apq == T::zero() {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (two * apq);
                let t = if theta.abs() > T::lit(1e100) {
                    T::one() / (two * theta)
                } else {
                    let sgn = if theta >= T::zero() { T::one() } else { -T::one() };
                    sgn / (theta.abs() + (theta * theta + T::one()).sqrt())
                };
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[[k, p]], a[[k, q]]);
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[[p, k]], a[[q, k]]);
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
                }
                a[[p, q]] = T::zero();
                a[[q, p]] = T::zero();
                for k in 0..n {
                    let (vkp, vkq) = (v[[k, p]], v[[k, q]]);
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }

    for mut col in v.columns_mut() {
        normalize_sign(col.view_mut());
    }
    let diag = a.diag().to_owned();
    let mut order: Vec<usize> = (0..n).collect();
    // Descending value; equal values fall back to descending lexicographic
    // order of the sign-normalized vectors (so e_1 precedes e_2).
    order.sort_by(|&i, &j| {
        diag[j]
            .partial_cmp(&diag[i])
            .unwrap_or(Ordering::Equal)
            .then_with(|| lexicographic(v.column(j), v.column(i)))
    });
    let values = order.iter().map(|&i| diag[i]).collect();
    let vectors = v.select(Axis(1), &order);
    Ok(SymmetricEigen {
        values,
        vectors,
        sweeps,
    })
}

pub fn eig_sym<T: Scalar>(c: &CovarianceMatrix<T>) -> Result<SymmetricEigen<T>, PcaError> {
    eig_sym_matrix(&c.s)
}

/// Fitted projection onto the leading principal axes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: crate::Scalar")]
pub struct PcaModel<T> {
    #[serde(with = "crate::nested::vector")]
    pub mean: Array1<T>,
    /// d × n, one principal axis per column.
    #[serde(with = "crate::nested::matrix")]
    pub components: Array2<T>,
    #[serde(with = "crate::nested::vector")]
    pub eigenvalues: Array1<T>,
    /// Sum of all d eigenvalues.
    pub total_variance: T,
    pub explained_variance_ratio: T,
}

impl<T: Scalar> PcaModel<T> {
    pub fn fit(m: &SampleMatrix<T>, n_components: usize) -> Result<Self, PcaError> {
        pca_fit(m, n_components)
    }

    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn n_components(&self) -> usize {
        self.components.ncols()
    }

    pub fn transform(&self, x: ArrayView1<'_, T>) -> Result<Array1<T>, PcaError> {
        pca_transform(self, x)
    }

    pub fn transform_matrix(&self, m: &SampleMatrix<T>) -> Result<SampleMatrix<T>, PcaError> {
        if m.n_features() != self.input_dim() {
            return Err(PcaError::DimensionMismatch {
                expected: self.input_dim(),
                found: m.n_features(),
            });
        }
        let q = (m.features() - &self.mean).dot(&self.components);
        Ok(m.with_features(q)?)
    }

    /// `V q + m`; exact inverse of `transform` when all components are kept.
    pub fn inverse_transform(&self, q: ArrayView1<'_, T>) -> Result<Array1<T>, PcaError> {
        if q.len() != self.n_components() {
            return Err(PcaError::DimensionMismatch {
                expected: self.n_components(),
                found: q.len(),
            });
        }
        Ok(self.components.dot(&q) + &self.mean)
    }
}

pub fn pca_fit<T: Scalar>(m: &SampleMatrix<T>, n_components: usize) -> Result<PcaModel<T>, PcaError> {
    let d = m.n_features();
    if n_components == 0 || n_components > d {
        return Err(PcaError::InvalidComponents {
            requested: n_components,
            d,
        });
    }
    let cov = covariance(m)?;
    let eig = eig_sym(&cov)?;
    let total_variance: T = eig.values.sum();
    let eigenvalues = eig.values.slice(ndarray::s![..n_components]).to_owned();
    let kept: T = eigenvalues.sum();
    let explained_variance_ratio = if total_variance > T::zero() {
        kept / total_variance
    } else {
        T::one()
    };
    log::debug!(
        "pca: kept {n_components}/{d} components, explained variance {:.4}",
        explained_variance_ratio.as_f64()
    );
    Ok(PcaModel {
        mean: column_means(m.features()),
        components: eig.vectors.slice(ndarray::s![.., ..n_components]).to_owned(),
        eigenvalues,
        total_variance,
        explained_variance_ratio,
    })
}

/// Centered projection `q = Vᵀ(x − m)`.
pub fn pca_transform<T: Scalar>(model: &PcaModel<T>, x: ArrayView1<'_, T>) -> Result<Array1<T>, PcaError> {
    if x.len() != model.input_dim() {
        return Err(PcaError::DimensionMismatch {
            expected: model.input_dim(),
            found: x.len(),
        });
    }
    Ok(model.components.t().dot(&(&x - &model.mean)))
}
