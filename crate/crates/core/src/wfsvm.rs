//! Feature-weighted soft-margin SVM.
//!
//! The kernel scales each coordinate difference by a feature weight `α_k`:
//!
//! * `sqrt` variant: `K'(a, b) = exp(−γ √(Σ_k α_k (a_k − b_k)²))`
//! * `squared` variant: `K'(a, b) = exp(−γ Σ_k α_k (a_k − b_k)²)`
//!
//! Training solves the dual
//! `max Σ L_i − ½ Σ_ij L_i L_j y_i y_j K'_ij` s.t. `0 ≤ L_i ≤ C`, `Σ L_i y_i = 0`
//! by sequential two-variable updates on the maximal KKT-violating pair.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Label;
use crate::mi_weights::FeatureWeights;
use crate::Scalar;

/// Multipliers at or below this value are not kept as support vectors.
pub const SUPPORT_FLOOR: f64 = 1e-8;

#[derive(Debug, Error, PartialEq)]
pub enum SvmError {
    #[error("gamma must be positive and finite, got {0}")]
    InvalidGamma(f64),
    #[error("C must be positive and finite, got {0}")]
    InvalidPenalty(f64),
    #[error("KKT tolerance must be positive, got {0}")]
    InvalidTolerance(f64),
    #[error("feature weights must be non-negative and sum to 1")]
    InvalidWeights,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("need at least 2 training samples, got {0}")]
    TooFewSamples(usize),
    #[error("training labels contain a single class")]
    SingleClass,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelVariant {
    /// Exponential of the weighted Euclidean distance.
    #[default]
    Sqrt,
    /// Exponential of the weighted squared distance (Gaussian RBF).
    Squared,
}

impl fmt::Display for KernelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KernelVariant::Sqrt => "sqrt",
            KernelVariant::Squared => "squared",
        })
    }
}

impl FromStr for KernelVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "sqrt" => Ok(KernelVariant::Sqrt),
            "squared" => Ok(KernelVariant::Squared),
            other => Err(format!("unknown kernel variant `{other}` (expected sqrt or squared)")),
        }
    }
}

/// Weighted RBF kernel parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: crate::Scalar")]
pub struct KernelSpec<T> {
    pub gamma: T,
    #[serde(with = "crate::nested::vector")]
    pub weights: Array1<T>,
    pub variant: KernelVariant,
}

impl<T: Scalar> KernelSpec<T> {
    pub fn new(gamma: T, weights: Array1<T>, variant: KernelVariant) -> Result<Self, SvmError> {
        if !(gamma > T::zero()) || !gamma.is_finite() {
            return Err(SvmError::InvalidGamma(gamma.as_f64()));
        }
        let tol = T::lit(1e-12).max(T::epsilon() * T::lit(64.0 * weights.len() as f64));
        if weights.is_empty()
            || weights.iter().any(|w| !w.is_finite() || *w < T::zero())
            || (weights.sum() - T::one()).abs() > tol
        {
            return Err(SvmError::InvalidWeights);
        }
        Ok(Self {
            gamma,
            weights,
            variant,
        })
    }

    pub fn from_feature_weights(gamma: T, w: &FeatureWeights<T>, variant: KernelVariant) -> Result<Self, SvmError> {
        Self::new(gamma, w.alpha.clone(), variant)
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    /// Same weights and variant, different width.
    pub fn with_gamma(&self, gamma: T) -> Result<Self, SvmError> {
        Self::new(gamma, self.weights.clone(), self.variant)
    }

    /// `Σ α_k (a_k − b_k)²` (squared) or its square root (sqrt).
    pub fn base_distance(&self, a: ArrayView1<'_, T>, b: ArrayView1<'_, T>) -> T {
        base_distance(&self.weights, self.variant, a, b)
    }

    fn eval_unchecked(&self, a: ArrayView1<'_, T>, b: ArrayView1<'_, T>) -> T {
        (-self.gamma * self.base_distance(a, b)).exp()
    }
}

fn base_distance<T: Scalar>(w: &Array1<T>, variant: KernelVariant, a: ArrayView1<'_, T>, b: ArrayView1<'_, T>) -> T {
    let mut acc = T::zero();
    for ((&wk, &ak), &bk) in w.iter().zip(a.iter()).zip(b.iter()) {
        let d = ak - bk;
        acc += wk * d * d;
    }
    match variant {
        KernelVariant::Sqrt => acc.sqrt(),
        KernelVariant::Squared => acc,
    }
}

pub fn kernel_eval<T: Scalar>(xi: ArrayView1<'_, T>, xj: ArrayView1<'_, T>, spec: &KernelSpec<T>) -> Result<T, SvmError> {
    for x in [&xi, &xj] {
        if x.len() != spec.dim() {
            return Err(SvmError::DimensionMismatch {
                expected: spec.dim(),
                found: x.len(),
            });
        }
    }
    Ok(spec.eval_unchecked(xi, xj))
}

/// Pairwise base distances (the γ-free part of the kernel). Symmetric with a
/// zero diagonal; rows are computed in parallel.
pub fn distance_matrix<T: Scalar>(x: &Array2<T>, weights: &Array1<T>, variant: KernelVariant) -> Array2<T> {
    let n = x.nrows();
    let rows: Vec<Vec<T>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (i..n)
                .map(|j| {
                    if i == j {
                        T::zero()
                    } else {
                        base_distance(weights, variant, x.row(i), x.row(j))
                    }
                })
                .collect()
        })
        .collect();
    let mut out = Array2::zeros((n, n));
    for (i, row) in rows.into_iter().enumerate() {
        for (off, v) in row.into_iter().enumerate() {
            out[[i, i + off]] = v;
            out[[i + off, i]] = v;
        }
    }
    out
}

/// `exp(−γ D)` elementwise.
pub fn gram_from_distances<T: Scalar>(distances: &Array2<T>, gamma: T) -> Array2<T> {
    let n = distances.nrows();
    let mut g = Array2::from_elem((n, n), T::one());
    for i in 0..n {
        for j in i + 1..n {
            let v = (-gamma * distances[[i, j]]).exp();
            g[[i, j]] = v;
            g[[j, i]] = v;
        }
    }
    g
}

pub fn gram_matrix<T: Scalar>(x: &Array2<T>, spec: &KernelSpec<T>) -> Array2<T> {
    gram_from_distances(&distance_matrix(x, &spec.weights, spec.variant), spec.gamma)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvmParams<T> {
    /// Penalty `C`.
    pub c: T,
    /// Stopping gap on the maximal violating pair; also bounds the KKT
    /// violation in functional-margin units.
    pub kkt_tolerance: T,
    pub max_iterations: usize,
}

impl<T: Scalar> SvmParams<T> {
    pub fn new(c: T) -> Self {
        Self {
            c,
            kkt_tolerance: T::lit(1e-3),
            max_iterations: 1_000_000,
        }
    }

    fn validate(&self) -> Result<(), SvmError> {
        if !(self.c > T::zero()) || !self.c.is_finite() {
            return Err(SvmError::InvalidPenalty(self.c.as_f64()));
        }
        if !(self.kkt_tolerance > T::zero()) {
            return Err(SvmError::InvalidTolerance(self.kkt_tolerance.as_f64()));
        }
        Ok(())
    }
}

/// Full dual solution over all training points.
#[derive(Clone, Debug, PartialEq)]
pub struct DualSolution<T> {
    pub multipliers: Vec<T>,
    pub bias: T,
    pub objective: T,
    pub iterations: usize,
    pub converged: bool,
    /// `Σ_j L_j y_j K_ij` for every training point, read off the final gradient.
    pub margins: Vec<T>,
}

impl<T: Scalar> DualSolution<T> {
    /// Training decision values from the solver's own gradient; O(n).
    pub fn fitted_decisions(&self) -> Vec<T> {
        self.margins.iter().map(|&m| m + self.bias).collect()
    }

    /// Decision values `Σ_j L_j y_j K_ij + b` at the training points.
    pub fn training_decisions(&self, gram: ArrayView2<'_, T>, y: &[Label]) -> Vec<T> {
        let coef: Vec<T> = self.multipliers.iter().zip(y).map(|(&a, &l)| a * l.sign::<T>()).collect();
        (0..y.len())
            .map(|i| {
                let row = gram.row(i);
                let mut s = self.bias;
                for (j, &cj) in coef.iter().enumerate() {
                    if cj != T::zero() {
                        s += cj * row[j];
                    }
                }
                s
            })
            .collect()
    }
}

/// Dual objective `Σ L_i − ½ Σ_ij L_i L_j y_i y_j K_ij` (to be maximized).
pub fn dual_objective<T: Scalar>(gram: ArrayView2<'_, T>, y: &[Label], multipliers: &[T]) -> T {
    let n = y.len();
    let mut quad = T::zero();
    for i in 0..n {
        if multipliers[i] == T::zero() {
            continue;
        }
        let yi: T = y[i].sign();
        for j in 0..n {
            quad += multipliers[i] * multipliers[j] * yi * y[j].sign::<T>() * gram[[i, j]];
        }
    }
    multipliers.iter().copied().sum::<T>() - T::lit(0.5) * quad
}

/// Largest KKT violation over the training points, in functional-margin units:
/// `L = 0` needs `y f ≥ 1`, `0 < L < C` needs `y f = 1`, `L = C` needs `y f ≤ 1`.
pub fn max_kkt_violation<T: Scalar>(gram: ArrayView2<'_, T>, y: &[Label], sol: &DualSolution<T>, c: T) -> T {
    let f = sol.training_decisions(gram, y);
    let mut worst = T::zero();
    for ((&a, &l), &fi) in sol.multipliers.iter().zip(y).zip(&f) {
        let margin = l.sign::<T>() * fi;
        let v = if a <= T::zero() {
            (T::one() - margin).max(T::zero())
        } else if a >= c {
            (margin - T::one()).max(T::zero())
        } else {
            (margin - T::one()).abs()
        };
        worst = worst.max(v);
    }
    worst
}

/// Two-variable working-set solver on a precomputed Gram matrix.
/// Each step optimizes the maximal KKT-violating pair exactly; the gradient
/// update and the next pair selection share one pass over the data.
pub fn solve_dual<T: Scalar>(gram: ArrayView2<'_, T>, y: &[Label], params: &SvmParams<T>) -> Result<DualSolution<T>, SvmError> {
    params.validate()?;
    let n = y.len();
    if n < 2 {
        return Err(SvmError::TooFewSamples(n));
    }
    if gram.nrows() != n || gram.ncols() != n {
        return Err(SvmError::DimensionMismatch {
            expected: n,
            found: gram.nrows(),
        });
    }
    if y.iter().all(|&l| l == y[0]) {
        return Err(SvmError::SingleClass);
    }

    let gram = gram.as_standard_layout();
    let k = gram.as_slice().expect("standard layout");
    let c = params.c;
    let eps = params.kkt_tolerance;
    let tau = T::lit(1e-12);
    let two = T::lit(2.0);
    let ys: Vec<T> = y.iter().map(|l| l.sign()).collect();
    let mut a = vec![T::zero(); n];
    // Gradient of ½ aᵀQa − eᵀa with Q_ij = y_i y_j K_ij.
    let mut grad = vec![-T::one(); n];

    // Maximal violating pair: i maximizes −y G over I_up, j minimizes it over I_low.
    let pick = |t: usize, at: T, v: T, sel: &mut (usize, T, usize, T)| {
        let pos = ys[t] > T::zero();
        if (pos && at < c) || (!pos && at > T::zero()) {
            if v > sel.1 {
                sel.0 = t;
                sel.1 = v;
            }
        }
        if (!pos && at < c) || (pos && at > T::zero()) {
            if v < sel.3 {
                sel.2 = t;
                sel.3 = v;
            }
        }
    };
    let empty = (usize::MAX, T::neg_infinity(), usize::MAX, T::infinity());
    let mut sel = empty;
    for t in 0..n {
        pick(t, a[t], -ys[t] * grad[t], &mut sel);
    }

    let mut iterations = 0;
    let mut converged = false;
    loop {
        let (i, m_up, j, m_low) = sel;
        if i == usize::MAX || j == usize::MAX || m_up - m_low < eps {
            converged = true;
            break;
        }
        if iterations == params.max_iterations {
            break;
        }
        iterations += 1;

        let row_i = &k[i * n..(i + 1) * n];
        let row_j = &k[j * n..(j + 1) * n];
        let mut quad = row_i[i] + row_j[j] - two * row_i[j];
        if quad <= T::zero() {
            quad = tau;
        }
        let (old_ai, old_aj) = (a[i], a[j]);
        if ys[i] != ys[j] {
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = a[i] - a[j];
            a[i] += delta;
            a[j] += delta;
            if diff > T::zero() {
                if a[j] < T::zero() {
                    a[j] = T::zero();
                    a[i] = diff;
                }
            } else if a[i] < T::zero() {
                a[i] = T::zero();
                a[j] = -diff;
            }
            if diff > T::zero() {
                if a[i] > c {
                    a[i] = c;
                    a[j] = c - diff;
                }
            } else if a[j] > c {
                a[j] = c;
                a[i] = c + diff;
            }
        } else {
            let delta = (grad[i] - grad[j]) / quad;
            let sum = a[i] + a[j];
            a[i] -= delta;
            a[j] += delta;
            if sum > c {
                if a[i] > c {
                    a[i] = c;
                    a[j] = sum - c;
                }
            } else if a[j] < T::zero() {
                a[j] = T::zero();
                a[i] = sum;
            }
            if sum > c {
                if a[j] > c {
                    a[j] = c;
                    a[i] = sum - c;
                }
            } else if a[i] < T::zero() {
                a[i] = T::zero();
                a[j] = sum;
            }
        }

        let ci = ys[i] * (a[i] - old_ai);
        let cj = ys[j] * (a[j] - old_aj);
        sel = empty;
        for t in 0..n {
            let g = grad[t] + ys[t] * (ci * row_i[t] + cj * row_j[t]);
            grad[t] = g;
            pick(t, a[t], -ys[t] * g, &mut sel);
        }
    }
    let (m_up, m_low) = (sel.1, sel.3);
    if !converged {
        log::warn!("svm: iteration cap {} reached (gap {:e})", params.max_iterations, (m_up - m_low).as_f64());
    }

    let mut free_sum = T::zero();
    let mut free_count = 0usize;
    for t in 0..n {
        if a[t] > T::zero() && a[t] < c {
            free_sum += -ys[t] * grad[t];
            free_count += 1;
        }
    }
    let bias = if free_count > 0 {
        free_sum / T::lit(free_count as f64)
    } else if m_up.is_finite() && m_low.is_finite() {
        (m_up + m_low) / two
    } else if m_up.is_finite() {
        m_up
    } else {
        m_low
    };

    // Σ_j L_j y_j K_ij = y_i (G_i + 1), and aᵀQa = Σ L_i (G_i + 1).
    let margins: Vec<T> = (0..n).map(|t| ys[t] * (grad[t] + T::one())).collect();
    let quad_form: T = a.iter().zip(&grad).map(|(&at, &g)| at * (g + T::one())).sum();
    let objective = a.iter().copied().sum::<T>() - T::lit(0.5) * quad_form;
    Ok(DualSolution {
        multipliers: a,
        bias,
        objective,
        iterations,
        converged,
        margins,
    })
}

/// Trained classifier: support vectors with their multipliers and labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: crate::Scalar")]
pub struct SvmModel<T> {
    pub kernel: KernelSpec<T>,
    pub bias: T,
    #[serde(with = "crate::nested::matrix")]
    pub support_vectors: Array2<T>,
    #[serde(with = "crate::nested::vector")]
    pub multipliers: Array1<T>,
    pub labels: Vec<Label>,
    /// False when the solver stopped at its iteration cap.
    pub converged: bool,
    pub iterations: usize,
}

impl<T: Scalar> SvmModel<T> {
    pub fn from_dual(x: &Array2<T>, y: &[Label], sol: &DualSolution<T>, kernel: KernelSpec<T>) -> Self {
        let floor = T::lit(SUPPORT_FLOOR);
        let idx: Vec<usize> = (0..y.len()).filter(|&i| sol.multipliers[i] > floor).collect();
        Self {
            kernel,
            bias: sol.bias,
            support_vectors: x.select(Axis(0), &idx),
            multipliers: idx.iter().map(|&i| sol.multipliers[i]).collect(),
            labels: idx.iter().map(|&i| y[i]).collect(),
            converged: sol.converged,
            iterations: sol.iterations,
        }
    }

    pub fn n_support(&self) -> usize {
        self.labels.len()
    }

    pub fn decision_value(&self, x: ArrayView1<'_, T>) -> Result<T, SvmError> {
        if x.len() != self.kernel.dim() {
            return Err(SvmError::DimensionMismatch {
                expected: self.kernel.dim(),
                found: x.len(),
            });
        }
        let mut s = self.bias;
        for ((sv, &l), &lab) in self.support_vectors.rows().into_iter().zip(&self.multipliers).zip(&self.labels) {
            s += l * lab.sign::<T>() * self.kernel.eval_unchecked(sv, x);
        }
        Ok(s)
    }

    /// Sign of the decision value; a value of exactly zero maps to +1.
    pub fn predict(&self, x: ArrayView1<'_, T>) -> Result<Label, SvmError> {
        Ok(Label::from_sign(self.decision_value(x)?))
    }

    /// Decision values for every row, computed in parallel.
    pub fn decision_values(&self, x: &Array2<T>) -> Result<Vec<T>, SvmError> {
        (0..x.nrows())
            .into_par_iter()
            .map(|i| self.decision_value(x.row(i)))
            .collect()
    }
}

pub fn train<T: Scalar>(x: &Array2<T>, y: &[Label], params: &SvmParams<T>, spec: &KernelSpec<T>) -> Result<SvmModel<T>, SvmError> {
    if x.nrows() != y.len() {
        return Err(SvmError::DimensionMismatch {
            expected: y.len(),
            found: x.nrows(),
        });
    }
    if x.ncols() != spec.dim() {
        return Err(SvmError::DimensionMismatch {
            expected: spec.dim(),
            found: x.ncols(),
        });
    }
    let gram = gram_matrix(x, spec);
    let sol = solve_dual(gram.view(), y, params)?;
    Ok(SvmModel::from_dual(x, y, &sol, spec.clone()))
}

pub fn decision_value<T: Scalar>(model: &SvmModel<T>, x: ArrayView1<'_, T>) -> Result<T, SvmError> {
    model.decision_value(x)
}

pub fn predict<T: Scalar>(model: &SvmModel<T>, x: ArrayView1<'_, T>) -> Result<Label, SvmError> {
    model.predict(x)
}
