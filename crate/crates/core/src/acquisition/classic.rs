//! Closed-form baseline acquisitions on a Gaussian predictive.

use crate::error::{invalid, Result};
use crate::gp::{InputNoise, Prediction, VARIANCE_FLOOR};
use crate::stats::{normal_cdf, normal_pdf};

/// Expected improvement over `incumbent`.
pub fn expected_improvement(p: Prediction, incumbent: f64) -> f64 {
    let gain = p.mean - incumbent;
    if p.variance <= 0.0 {
        return gain.max(0.0);
    }
    let sd = p.variance.sqrt();
    let z = gain / sd;
    (gain * normal_cdf(z) + sd * normal_pdf(z)).max(gain.max(0.0))
}

/// `mean + sqrt(beta) * sd`
pub fn upper_confidence_bound(p: Prediction, beta: f64) -> f64 {
    p.mean + (beta * p.variance.max(0.0)).sqrt()
}

/// Max-value entropy search averaged over max-value samples:
/// `1/K sum_k [gamma_k phi(gamma_k) / (2 Phi(gamma_k)) - ln Phi(gamma_k)]`
/// with `gamma_k = (y*_k - mean) / sd`.
pub fn max_value_entropy(p: Prediction, max_values: &[f64]) -> f64 {
    let sd = p.variance.max(VARIANCE_FLOOR).sqrt();
    let total: f64 = max_values
        .iter()
        .map(|y| {
            let gamma = (y - p.mean) / sd;
            let cdf = normal_cdf(gamma);
            if cdf >= 1.0 {
                return 0.0;
            }
            if cdf <= 0.0 || gamma < -30.0 {
                // gamma -> -inf: the term grows like gamma^2 / 2
                let r = crate::stats::inverse_mills(gamma);
                let log_cdf = -0.5 * gamma * gamma - (r * (2.0 * std::f64::consts::PI).sqrt()).ln();
                return 0.5 * gamma * r - log_cdf;
            }
            (0.5 * gamma * normal_pdf(gamma) / cdf - cdf.ln()).max(0.0)
        })
        .sum();
    total / max_values.len() as f64
}

/// Sigma points and weights of the unscented transform for a diagonal
/// Gaussian input perturbation.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaPoints {
    /// Offsets from the center, `2d + 1` entries (the first is zero).
    pub offsets: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

/// Default unscented parameter.
pub const DEFAULT_KAPPA: f64 = 1.0;

/// Sigma points `0, +-(sqrt((d + kappa) Sigma_x))_i` with weights
/// `kappa / (d + kappa)` for the center and `1 / (2 (d + kappa))` otherwise.
pub fn sigma_points(noise: &InputNoise, kappa: f64) -> Result<SigmaPoints> {
    let d = noise.dim();
    let denom = d as f64 + kappa;
    if !(denom > 0.0) || !kappa.is_finite() {
        return Err(invalid(format!(
            "unscented transform needs d + kappa > 0 (d = {d}, kappa = {kappa})"
        )));
    }
    let mut offsets = vec![vec![0.0; d]];
    let mut weights = vec![kappa / denom];
    for j in 0..d {
        let step = (denom * noise.variances()[j]).sqrt();
        for sign in [1.0, -1.0] {
            let mut o = vec![0.0; d];
            o[j] = sign * step;
            offsets.push(o);
            weights.push(0.5 / denom);
        }
    }
    Ok(SigmaPoints { offsets, weights })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pred(mean: f64, variance: f64) -> Prediction {
        Prediction { mean, variance }
    }

    #[test]
    fn ei_closed_form() {
        assert_eq!(expected_improvement(pred(0.0, 0.0), 0.0), 0.0);
        assert!((expected_improvement(pred(0.3, 1.0), 0.3) - 0.398_942_280_401_432_7).abs() < 1e-15);
        for (m, v) in [(1.0, 0.2), (-2.0, 3.0), (0.5, 1e-9)] {
            assert!(expected_improvement(pred(m, v), 0.0) >= m.max(0.0));
        }
    }

    #[test]
    fn ucb_closed_form() {
        assert_eq!(upper_confidence_bound(pred(1.5, 0.0), 4.0), 1.5);
        assert_eq!(upper_confidence_bound(pred(1.5, 2.0), 0.0), 1.5);
        assert_eq!(upper_confidence_bound(pred(0.0, 1.0), 4.0), 2.0);
    }

    #[test]
    fn mes_closed_form() {
        assert!(max_value_entropy(pred(0.0, 1.0), &[1e6]).abs() < 1e-12);
        // the gamma * phi term vanishes at gamma = 0, leaving -ln(1/2)
        let at_zero = max_value_entropy(pred(0.0, 1.0), &[0.0]);
        assert!((at_zero - std::f64::consts::LN_2).abs() < 1e-15);
        for g in [-40.0, -5.0, 0.3, 8.0] {
            let v = max_value_entropy(pred(0.0, 1.0), &[g]);
            assert!(v >= 0.0 && v.is_finite(), "{g}: {v}");
        }
    }

    #[test]
    fn mes_tail_branches_meet() {
        let just_above = max_value_entropy(pred(0.0, 1.0), &[-29.999_999]);
        let just_below = max_value_entropy(pred(0.0, 1.0), &[-30.000_001]);
        assert!((just_above - just_below).abs() / just_above < 1e-5);
    }

    #[test]
    fn sigma_weights() {
        let sp = sigma_points(&InputNoise::from_std(&[0.1]).unwrap(), 1.0).unwrap();
        assert_eq!(sp.weights, vec![0.5, 0.25, 0.25]);
        assert!((sp.offsets[1][0] - 2f64.sqrt() * 0.1).abs() < 1e-15);
        assert!(sigma_points(&InputNoise::zeros(2), -2.0).is_err());
        let sp0 = sigma_points(&InputNoise::zeros(3), 0.0).unwrap();
        assert_eq!(sp0.weights[0], 0.0);
    }
}
