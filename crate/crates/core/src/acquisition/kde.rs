//! Resubstitution (Ahmad–Lin) entropy estimate with a Gaussian kernel
//! density.

use crate::error::{Error, Result};
use crate::stats::{normal_pdf, variance};

/// Kernel contributions beyond this many bandwidths are dropped.
const CUTOFF: f64 = 8.0;

/// Silverman's rule of thumb, `1.06 * sd * n^{-1/5}`.
pub fn silverman_bandwidth(samples: &[f64]) -> f64 {
    1.06 * variance(samples).sqrt() * (samples.len() as f64).powf(-0.2)
}

/// Estimates the differential entropy (nats) of the distribution behind
/// `samples` as `-1/n sum_i ln p(y_i)`, where `p` is the Gaussian KDE built
/// from all samples.
pub fn kde_entropy(samples: &[f64]) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::InvalidArgument("KDE entropy needs at least two samples".into()));
    }
    let h = silverman_bandwidth(samples);
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::DegenerateDistribution(
            "samples have zero spread; KDE bandwidth is zero".into(),
        ));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let norm = 1.0 / (n as f64 * h);
    let reach = CUTOFF * h;
    let mut lo = 0;
    let mut total = 0.0;
    for i in 0..n {
        let y = sorted[i];
        while sorted[lo] < y - reach {
            lo += 1;
        }
        let mut density = 0.0;
        for &other in sorted[lo..].iter().take_while(|v| **v <= y + reach) {
            density += normal_pdf((y - other) / h);
        }
        total -= (density * norm).ln();
    }
    Ok(total / n as f64)
}
