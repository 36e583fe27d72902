//! Scalar statistics helpers: standard-normal functions, Gauss–Hermite
//! rules, order statistics and rank correlation.

use std::f64::consts::{PI, SQRT_2};

use nalgebra::{DMatrix, SymmetricEigen};
use statrs::function::erf::erfc;

/// `1 / sqrt(2 pi)`
pub const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal density.
pub fn normal_pdf(z: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * z * z).exp()
}

/// Standard normal CDF, accurate in relative terms deep into the lower tail.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / SQRT_2)
}

/// Threshold below which [`inverse_mills`] switches to the continued fraction.
const MILLS_SWITCH: f64 = -8.0;

/// Ratio `phi(beta) / Phi(beta)`.
///
/// For `beta < -8` the CDF is replaced by the Laplace continued fraction of
/// the Mills ratio, which stays accurate where `Phi` would underflow.
pub fn inverse_mills(beta: f64) -> f64 {
    if beta >= MILLS_SWITCH {
        return normal_pdf(beta) / normal_cdf(beta);
    }
    // Phi(-t) / phi(t) = 1 / (t + 1 / (t + 2 / (t + 3 / (t + ...))))
    let t = -beta;
    let mut tail = t;
    for k in (1..=60).rev() {
        tail = t + k as f64 / tail;
    }
    tail
}

/// Nodes and weights of an `n`-point Gauss–Hermite rule for the standard
/// normal measure: `E[f(Z)] ~ sum_i w_i f(z_i)` with `sum_i w_i = 1`.
///
/// Computed with the Golub–Welsch eigenvalue method on the Jacobi matrix
/// of the probabilists' Hermite polynomials.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "a quadrature rule needs at least one node");
    let mut jacobi = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let off = (k as f64).sqrt();
        jacobi[(k - 1, k)] = off;
        jacobi[(k, k - 1)] = off;
    }
    let eig = SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| (eig.eigenvalues[i], eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    // symmetrize: the rule is exactly symmetric about zero
    let nodes: Vec<f64> = (0..n)
        .map(|i| 0.5 * (pairs[i].0 - pairs[n - 1 - i].0))
        .collect();
    let weights: Vec<f64> = (0..n)
        .map(|i| 0.5 * (pairs[i].1 + pairs[n - 1 - i].1) / total)
        .collect();
    (nodes, weights)
}

/// Percentile `p` in `[0, 100]` of `values` with linear interpolation
/// between order statistics (the rank of `p` is `p/100 * (n - 1)`).
pub fn percentile(values: &[f64], p: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    percentile_sorted(&sorted, p)
}

pub fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    let rank = (p / 100.0).clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

pub fn median(values: &[f64]) -> f64 {
    percentile(values, 50.0)
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Unbiased sample variance.
pub fn variance(values: &[f64]) -> f64 {
    let m = mean(values);
    values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() as f64 - 1.0)
}

/// Average ranks (1-based), ties share the mean of their positions.
fn ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let r = 0.5 * (i + j) as f64 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let ma = mean(a);
    let mb = mean(b);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    if saa == 0.0 || sbb == 0.0 {
        return 0.0;
    }
    sab / (saa * sbb).sqrt()
}

/// Spearman rank correlation.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    pearson(&ranks(a), &ranks(b))
}

/// Differential entropy of a normal with the given variance, in nats.
pub(crate) fn normal_entropy_unchecked(variance: f64) -> f64 {
    0.5 * (2.0 * PI * std::f64::consts::E * variance).ln()
}
