//! Mutual information between each feature and the class label, estimated
//! with a Gaussian Parzen window, and its normalization into feature weights.
//!
//! For a feature column `f` and labels `y`:
//!
//! * `H(Y) = −Σ P̂(y) log₂ P̂(y)` with `P̂(y) = |y| / l`;
//! * `p̂(y | x) = Σ_{i: y_i = y} κ_h(x − f_i) / Σ_i κ_h(x − f_i)`;
//! * `Ĥ(Y | f) = −(1/l) Σ_i Σ_y p̂(y | f_i) log₂ p̂(y | f_i)`;
//! * `I(Y, f) = max(0, H(Y) − Ĥ(Y | f))`;
//! * `α_k = I(Y, f_k) / Σ_j I(Y, f_j)`.
//!
//! The Gaussian normalization constant cancels in the posterior, so only
//! `exp(−u² / 2h²)` is evaluated, shifted by the smallest `u²` so the
//! denominator never underflows.

use std::collections::BTreeMap;

use ndarray::{Array1, ArrayView1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Label, SampleMatrix};
use crate::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum MiError {
    #[error("label vector is empty")]
    Empty,
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("feature has {features} values but there are {labels} labels")]
    LengthMismatch { features: usize, labels: usize },
    #[error("bandwidth must be positive and finite, got {0}")]
    InvalidBandwidth(f64),
    #[error("Parzen window weights sum to zero at query {0}")]
    ZeroDenominator(f64),
    #[error("every feature has zero mutual information with the label; weights are undefined")]
    AllZero,
    #[error("weights must be finite and non-negative")]
    InvalidWeights,
}

/// Empirical class frequencies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassPrior {
    pub counts: BTreeMap<Label, usize>,
    pub total: usize,
}

impl ClassPrior {
    pub fn probability(&self, label: Label) -> f64 {
        self.counts.get(&label).map_or(0.0, |&c| c as f64 / self.total as f64)
    }

    pub fn probabilities(&self) -> BTreeMap<Label, f64> {
        self.counts.keys().map(|&l| (l, self.probability(l))).collect()
    }
}

pub fn class_prior(y: &[Label]) -> Result<ClassPrior, MiError> {
    if y.is_empty() {
        return Err(MiError::Empty);
    }
    let mut counts = BTreeMap::new();
    for &l in y {
        *counts.entry(l).or_insert(0) += 1;
    }
    Ok(ClassPrior {
        counts,
        total: y.len(),
    })
}

/// `−p log₂ p` with the `0 log 0 = 0` convention.
fn plogp<T: Scalar>(p: T) -> T {
    if p > T::zero() {
        -p * p.log2()
    } else {
        T::zero()
    }
}

/// Class entropy in bits.
pub fn entropy<T: Scalar>(prior: &ClassPrior) -> T {
    prior
        .counts
        .keys()
        .map(|&l| plogp(T::lit(prior.probability(l))))
        .sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bandwidth {
    /// `h = 1.06 σ̂ l^(−1/5)` per feature.
    Silverman,
    Fixed(f64),
}

/// Parzen estimator settings. The window is always Gaussian and entropies
/// are always reported in bits.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParzenConfig {
    pub bandwidth: Bandwidth,
    /// Exclude `x_i` itself when estimating `p̂(y | x_i)`.
    pub leave_one_out: bool,
}

impl Default for ParzenConfig {
    fn default() -> Self {
        Self {
            bandwidth: Bandwidth::Silverman,
            leave_one_out: false,
        }
    }
}

impl ParzenConfig {
    pub fn fixed(h: f64) -> Self {
        Self {
            bandwidth: Bandwidth::Fixed(h),
            ..Self::default()
        }
    }
}

fn check_lengths<T>(f: &ArrayView1<'_, T>, y: &[Label]) -> Result<(), MiError> {
    if f.len() != y.len() {
        return Err(MiError::LengthMismatch {
            features: f.len(),
            labels: y.len(),
        });
    }
    if y.len() < 2 {
        return Err(MiError::TooFewSamples(y.len()));
    }
    Ok(())
}

/// Resolves the window width for one feature column.
pub fn resolve_bandwidth<T: Scalar>(f: ArrayView1<'_, T>, cfg: &ParzenConfig) -> Result<T, MiError> {
    match cfg.bandwidth {
        Bandwidth::Fixed(h) => {
            if h > 0.0 && h.is_finite() {
                Ok(T::lit(h))
            } else {
                Err(MiError::InvalidBandwidth(h))
            }
        }
        Bandwidth::Silverman => {
            let l = f.len();
            if l < 2 {
                return Err(MiError::TooFewSamples(l));
            }
            let lf = T::lit(l as f64);
            let mean = f.sum() / lf;
            let var = f.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / (lf - T::one());
            let sigma = var.sqrt();
            // A constant column makes every window weight equal for any h.
            if sigma <= T::zero() {
                return Ok(T::one());
            }
            Ok(T::lit(1.06) * sigma * lf.powf(T::lit(-0.2)))
        }
    }
}

fn class_slot(l: Label) -> usize {
    usize::from(l.is_positive())
}

/// Posterior mass for [negative, positive] at `x`, optionally skipping one sample.
fn posterior_slots<T: Scalar>(
    f: &ArrayView1<'_, T>,
    y: &[Label],
    x: T,
    h: T,
    exclude: Option<usize>,
) -> Result<[T; 2], MiError> {
    let scale = T::lit(-0.5) / (h * h);
    let mut min_sq = T::infinity();
    for (i, &fi) in f.iter().enumerate() {
        if Some(i) != exclude {
            let u = x - fi;
            min_sq = min_sq.min(u * u);
        }
    }
    let mut mass = [T::zero(); 2];
    for (i, (&fi, &yi)) in f.iter().zip(y).enumerate() {
        if Some(i) == exclude {
            continue;
        }
        let u = x - fi;
        mass[class_slot(yi)] += ((u * u - min_sq) * scale).exp();
    }
    let total = mass[0] + mass[1];
    if !(total > T::zero()) || !total.is_finite() {
        return Err(MiError::ZeroDenominator(x.as_f64()));
    }
    Ok([mass[0] / total, mass[1] / total])
}

/// Parzen estimate of `p̂(y | x)` for every class present in `y`.
pub fn parzen_posterior<T: Scalar>(
    f: ArrayView1<'_, T>,
    y: &[Label],
    x: T,
    cfg: &ParzenConfig,
) -> Result<BTreeMap<Label, T>, MiError> {
    check_lengths(&f, y)?;
    let h = resolve_bandwidth(f, cfg)?;
    let p = posterior_slots(&f, y, x, h, None)?;
    let prior = class_prior(y)?;
    Ok(prior.counts.keys().map(|&l| (l, p[class_slot(l)])).collect())
}

/// `Ĥ(Y | f)` in bits, evaluated at every training value of the feature.
pub fn conditional_entropy<T: Scalar>(
    f: ArrayView1<'_, T>,
    y: &[Label],
    cfg: &ParzenConfig,
) -> Result<T, MiError> {
    check_lengths(&f, y)?;
    let h = resolve_bandwidth(f, cfg)?;
    let mut acc = T::zero();
    for (i, &xi) in f.iter().enumerate() {
        let exclude = cfg.leave_one_out.then_some(i);
        let p = posterior_slots(&f, y, xi, h, exclude)?;
        acc += plogp(p[0]) + plogp(p[1]);
    }
    Ok(acc / T::lit(f.len() as f64))
}

/// `H(Y) − Ĥ(Y | f)` without clamping; estimator noise can make it slightly negative.
pub fn mutual_info_unclamped<T: Scalar>(
    f: ArrayView1<'_, T>,
    y: &[Label],
    cfg: &ParzenConfig,
) -> Result<T, MiError> {
    let hy: T = entropy(&class_prior(y)?);
    Ok(hy - conditional_entropy(f, y, cfg)?)
}

/// `I(Y, f)` in bits, clamped at zero.
pub fn mutual_info<T: Scalar>(f: ArrayView1<'_, T>, y: &[Label], cfg: &ParzenConfig) -> Result<T, MiError> {
    Ok(mutual_info_unclamped(f, y, cfg)?.max(T::zero()))
}

/// Normalized feature weights and the MI values they came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: crate::Scalar")]
pub struct FeatureWeights<T> {
    #[serde(with = "crate::nested::vector")]
    pub alpha: Array1<T>,
    #[serde(with = "crate::nested::vector")]
    pub mi_values: Array1<T>,
}

impl<T: Scalar> FeatureWeights<T> {
    /// Normalizes non-negative MI values into weights summing to one.
    pub fn from_mi(mi_values: Array1<T>) -> Result<Self, MiError> {
        if mi_values.iter().any(|v| !v.is_finite() || *v < T::zero()) {
            return Err(MiError::InvalidWeights);
        }
        let total: T = mi_values.sum();
        if total <= T::zero() {
            return Err(MiError::AllZero);
        }
        let alpha = mi_values.mapv(|v| v / total);
        Ok(Self { alpha, mi_values })
    }

    /// Equal weights `1/d` (the unweighted kernel); MI values are recorded as equal.
    pub fn uniform(d: usize) -> Self {
        Self::from_mi(Array1::ones(d)).expect("d > 0")
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }
}

/// Per-feature MI against the labels, normalized into weights. Columns are
/// estimated in parallel; each estimate reads only its own column.
pub fn compute_weights<T: Scalar>(m: &SampleMatrix<T>, cfg: &ParzenConfig) -> Result<FeatureWeights<T>, MiError> {
    let x = m.features();
    let y = m.labels();
    let mi: Vec<T> = (0..m.n_features())
        .into_par_iter()
        .map(|j| mutual_info(x.column(j), y, cfg))
        .collect::<Result<_, _>>()?;
    FeatureWeights::from_mi(Array1::from(mi))
}

/// Text table of `(feature, MI bits, α)`.
pub fn render_weights_table<T: Scalar>(w: &FeatureWeights<T>) -> String {
    let mut out = format!("{:<8} {:>12} {:>10}\n", "Feature", "MI (bits)", "alpha");
    for (k, (mi, a)) in w.mi_values.iter().zip(w.alpha.iter()).enumerate() {
        out.push_str(&format!("{:<8} {:>12.6} {:>10.6}\n", k + 1, mi.as_f64(), a.as_f64()));
    }
    out
}
