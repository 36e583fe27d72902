//! Closed-form test objectives, all written for maximization.

use std::f64::consts::PI;

/// `sin(5 pi x^2) + 0.5 x`
pub fn sin_linear(x: f64) -> f64 {
    (5.0 * PI * x * x).sin() + 0.5 * x
}

/// Terms `(center, width, coefficient)` of the one-dimensional kernel
/// expansion used as the RKHS benchmark: a tall narrow peak at 0.3, a
/// broad lower hill around 0.72 and a few smaller bumps.
pub const RKHS_TERMS: [(f64, f64, f64); 6] = [
    (0.05, 0.05, 0.40),
    (0.30, 0.015, 1.20),
    (0.50, 0.05, -0.40),
    (0.72, 0.08, 1.00),
    (0.90, 0.04, 0.30),
    (0.15, 0.03, -0.25),
];

/// `sum_i c_i exp(-(x - z_i)^2 / (2 s_i^2))`
pub fn rkhs_1d(x: f64) -> f64 {
    RKHS_TERMS
        .iter()
        .map(|(z, s, c)| c * (-0.5 * ((x - z) / s).powi(2)).exp())
        .sum()
}

/// Components `(center, width, weight)` of the two-dimensional mixture: a
/// narrow tall peak, a broad plateau and a medium bump.
pub const GMM_COMPONENTS: [([f64; 2], f64, f64); 3] = [
    ([0.75, 0.25], 0.04, 1.0),
    ([0.30, 0.70], 0.20, 0.8),
    ([0.70, 0.75], 0.10, 0.5),
];

/// Unnormalized isotropic Gaussian bumps `sum_k w_k exp(-|x - c_k|^2 / (2 s_k^2))`.
pub fn gmm_2d(x: &[f64]) -> f64 {
    GMM_COMPONENTS
        .iter()
        .map(|(c, s, w)| {
            let q = (x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2);
            w * (-0.5 * q / (s * s)).exp()
        })
        .sum()
}

/// Classic two-dimensional robust-optimization test polynomial, in its
/// original minimization form.
pub fn bertsimas_polynomial(x: f64, y: f64) -> f64 {
    let (x2, y2) = (x * x, y * y);
    2.0 * x2 * x2 * x2 - 12.2 * x2 * x2 * x + 21.2 * x2 * x2 + 6.2 * x - 6.4 * x2 * x - 4.7 * x2
        + y2 * y2 * y2
        - 11.0 * y2 * y2 * y
        + 43.3 * y2 * y2
        - 10.0 * y
        - 74.8 * y2 * y
        + 56.9 * y2
        - 4.1 * x * y
        - 0.1 * y2 * x2
        + 0.4 * y2 * x
        + 0.4 * x2 * y
}

/// Mean and standard deviation of the negated polynomial over a 201 x 201
/// grid of `[-0.75, -0.25] x [3.0, 4.2]`.
pub const POLYNOMIAL_GRID_MEAN: f64 = -15.497_656_174_282_636;
pub const POLYNOMIAL_GRID_STD: f64 = 9.449_886_788_804_646;

/// Negated polynomial, standardized to zero mean and unit variance on its domain.
pub fn polynomial_2d(x: &[f64]) -> f64 {
    (-bertsimas_polynomial(x[0], x[1]) - POLYNOMIAL_GRID_MEAN) / POLYNOMIAL_GRID_STD
}

const HARTMANN_ALPHA: [f64; 4] = [1.0, 1.2, 3.0, 3.2];

const HARTMANN3_A: [[f64; 3]; 4] = [
    [3.0, 10.0, 30.0],
    [0.1, 10.0, 35.0],
    [3.0, 10.0, 30.0],
    [0.1, 10.0, 35.0],
];

const HARTMANN3_P: [[f64; 3]; 4] = [
    [0.3689, 0.1170, 0.2673],
    [0.4699, 0.4387, 0.7470],
    [0.1091, 0.8732, 0.5547],
    [0.0381, 0.5743, 0.8828],
];

const HARTMANN6_A: [[f64; 6]; 4] = [
    [10.0, 3.0, 17.0, 3.5, 1.7, 8.0],
    [0.05, 10.0, 17.0, 0.1, 8.0, 14.0],
    [3.0, 3.5, 1.7, 10.0, 17.0, 8.0],
    [17.0, 8.0, 0.05, 10.0, 0.1, 14.0],
];

const HARTMANN6_P: [[f64; 6]; 4] = [
    [0.1312, 0.1696, 0.5569, 0.0124, 0.8283, 0.5886],
    [0.2329, 0.4135, 0.8307, 0.3736, 0.1004, 0.9991],
    [0.2348, 0.1451, 0.3522, 0.2883, 0.3047, 0.6650],
    [0.4047, 0.8828, 0.8732, 0.5743, 0.1091, 0.0381],
];

fn hartmann<const D: usize>(x: &[f64], a: &[[f64; D]; 4], p: &[[f64; D]; 4]) -> f64 {
    (0..4)
        .map(|i| {
            let q: f64 = (0..D).map(|j| a[i][j] * (x[j] - p[i][j]).powi(2)).sum();
            HARTMANN_ALPHA[i] * (-q).exp()
        })
        .sum()
}

/// Hartmann function on `[0, 1]^3`, sign flipped for maximization.
pub fn hartmann3(x: &[f64]) -> f64 {
    hartmann(x, &HARTMANN3_A, &HARTMANN3_P)
}

/// Hartmann function on `[0, 1]^6`, sign flipped for maximization.
pub fn hartmann6(x: &[f64]) -> f64 {
    hartmann(x, &HARTMANN6_A, &HARTMANN6_P)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sin_linear_values() {
        assert_eq!(sin_linear(0.0), 0.0);
        assert!((sin_linear(1.0) - 0.5).abs() < 1e-14);
        assert!((sin_linear(0.1) - 0.206_434_465_040_230_7).abs() < 1e-12);
    }

    #[test]
    fn polynomial_reference_point() {
        // hand expansion: every monomial equals its coefficient at (1, 1)
        assert!((bertsimas_polynomial(1.0, 1.0) - 8.1).abs() < 1e-12);
        assert!((bertsimas_polynomial(-0.5, 3.5) - 16.571_875).abs() < 1e-9);
    }

    #[test]
    fn polynomial_is_standardized_on_grid() {
        let n = 201;
        let mut sum = 0.0;
        let mut sq = 0.0;
        for i in 0..n {
            for j in 0..n {
                let x = -0.75 + 0.5 * i as f64 / (n - 1) as f64;
                let y = 3.0 + 1.2 * j as f64 / (n - 1) as f64;
                let v = polynomial_2d(&[x, y]);
                sum += v;
                sq += v * v;
            }
        }
        let m = sum / (n * n) as f64;
        let var = sq / (n * n) as f64 - m * m;
        assert!(m.abs() < 1e-6 && (var - 1.0).abs() < 1e-6, "{m} {var}");
    }

    #[test]
    fn hartmann_optima() {
        let x3 = [0.114_614, 0.555_649, 0.852_547];
        assert!((hartmann3(&x3) - 3.862_78).abs() < 1e-5);
        let x6 = [0.201_69, 0.150_011, 0.476_874, 0.275_332, 0.311_652, 0.657_3];
        assert!((hartmann6(&x6) - 3.322_37).abs() < 1e-5);
    }

    #[test]
    fn rkhs_peak() {
        assert!((rkhs_1d(0.299_998_001_462_322_86) - 1.199_867_419_454_103_5).abs() < 1e-12);
        assert!(rkhs_1d(0.72) < rkhs_1d(0.3));
    }

    #[test]
    fn gmm_integral() {
        let n = 400;
        let h = 1.0 / n as f64;
        let mut total = 0.0;
        for i in 0..n {
            for j in 0..n {
                total += gmm_2d(&[(i as f64 + 0.5) * h, (j as f64 + 0.5) * h]);
            }
        }
        assert!((total * h * h - 0.216_239_050_619_914_25).abs() < 1e-5);
    }

    #[test]
    fn gmm_component_heights() {
        for (c, _, w) in GMM_COMPONENTS {
            assert!(gmm_2d(&c) >= w);
        }
    }
}
