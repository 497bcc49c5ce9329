//! Independent reference computations shared by the integration tests and
//! the acceptance runner. Nothing here calls into the library's numerics.
#![allow(dead_code)]

use fwsvm::ndarray::Array2;
use fwsvm::Label;

/// Number of eigenvalues of symmetric `a` strictly below `sigma`, by
/// Sylvester's law of inertia: the count of negative pivots in the LDLᵀ
/// factorization of `a − σI`.
pub fn count_below(a: &Array2<f64>, sigma: f64) -> usize {
    let n = a.nrows();
    let mut m = a.clone();
    for i in 0..n {
        m[[i, i]] -= sigma;
    }
    let mut negatives = 0;
    for k in 0..n {
        let p = if m[[k, k]] == 0.0 { -1e-300 } else { m[[k, k]] };
        if p < 0.0 {
            negatives += 1;
        }
        for i in k + 1..n {
            let f = m[[i, k]] / p;
            for j in k + 1..n {
                m[[i, j]] -= f * m[[k, j]];
            }
        }
    }
    negatives
}

/// Eigenvalues (descending) by bisection on the inertia count.
pub fn bisection_eigenvalues(a: &Array2<f64>) -> Vec<f64> {
    let n = a.nrows();
    let radius = (0..n)
        .map(|i| (0..n).map(|j| a[[i, j]].abs()).sum::<f64>())
        .fold(0.0, f64::max)
        + 1.0;
    (0..n)
        .map(|k| {
            // k-th smallest eigenvalue: smallest σ with count_below(σ) > k.
            let (mut lo, mut hi) = (-radius, radius);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if count_below(a, mid) > k {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            0.5 * (lo + hi)
        })
        .rev()
        .collect()
}

/// Exhaustive dual maximization for 4 points: three multipliers on a grid
/// of step `C/200`, the fourth fixed by the equality constraint. Repeated
/// with each multiplier as the eliminated one, so that an optimum with
/// multipliers at 0 or C (grid points) is hit up to O(h²).
pub fn grid_dual_optimum(k: &Array2<f64>, y: &[f64; 4], c: f64) -> f64 {
    let steps = 200;
    let h = c / steps as f64;
    let mut q = [[0f64; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            q[i][j] = y[i] * y[j] * k[[i, j]];
        }
    }
    let mut best = f64::NEG_INFINITY;
    for free in 0..4 {
        let others: Vec<usize> = (0..4).filter(|&i| i != free).collect();
        let (p, r, s) = (others[0], others[1], others[2]);
        for s1 in 0..=steps {
            for s2 in 0..=steps {
                for s3 in 0..=steps {
                    let mut a = [0f64; 4];
                    a[p] = s1 as f64 * h;
                    a[r] = s2 as f64 * h;
                    a[s] = s3 as f64 * h;
                    let v = -y[free] * (a[p] * y[p] + a[r] * y[r] + a[s] * y[s]);
                    // Rounding slack so corners like all-at-C stay feasible.
                    if v < -1e-12 || v > c + 1e-12 {
                        continue;
                    }
                    a[free] = v.clamp(0.0, c);
                    let mut quad = 0.0;
                    for i in 0..4 {
                        for j in 0..4 {
                            quad += a[i] * a[j] * q[i][j];
                        }
                    }
                    best = best.max(a.iter().sum::<f64>() - 0.5 * quad);
                }
            }
        }
    }
    best
}

/// Plug-in mutual information (bits) of a binary feature and the label.
pub fn contingency_mi(x: &[u8], y: &[Label]) -> f64 {
    let n = x.len() as f64;
    let mut joint = [[0f64; 2]; 2];
    for (&xi, &yi) in x.iter().zip(y) {
        joint[xi as usize][yi.is_positive() as usize] += 1.0;
    }
    let px = [joint[0][0] + joint[0][1], joint[1][0] + joint[1][1]];
    let py = [joint[0][0] + joint[1][0], joint[0][1] + joint[1][1]];
    let mut mi = 0.0;
    for a in 0..2 {
        for b in 0..2 {
            if joint[a][b] > 0.0 {
                mi += joint[a][b] / n * (joint[a][b] * n / (px[a] * py[b])).log2();
            }
        }
    }
    mi
}

pub fn entropy_bits(y: &[Label]) -> f64 {
    let p = y.iter().filter(|l| l.is_positive()).count() as f64 / y.len() as f64;
    [p, 1.0 - p].iter().filter(|&&q| q > 0.0).map(|&q| -q * q.log2()).sum()
}

/// Hill estimate of the tail index from the `k` largest magnitudes.
pub fn hill_tail_index(samples: &[f64], k: usize) -> f64 {
    let mut s: Vec<f64> = samples.iter().map(|v| v.abs()).collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let threshold = s[k].ln();
    1.0 / (s[..k].iter().map(|v| v.ln() - threshold).sum::<f64>() / k as f64)
}

/// Per-feature (mean, std, min, max) of the Pima file as published; mean
/// and std at one decimal, min and max exact.
pub const PUBLISHED_SUMMARY: [(f64, f64, &str, &str); 8] = [
    (3.8, 3.4, "0", "17"),
    (120.9, 32.0, "0", "199"),
    (69.1, 19.4, "0", "122"),
    (20.5, 16.0, "0", "99"),
    (79.8, 115.2, "0", "846"),
    (32.0, 7.9, "0", "67.1"),
    (0.5, 0.3, "0.078", "2.42"),
    (33.2, 11.8, "21", "81"),
];
