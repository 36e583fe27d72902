//! Noisy-input entropy search.
//!
//! Both variants estimate the mutual information between the next
//! observation `y(x)` and the robust max-value `g*`:
//! `H[y(x) | D] - 1/K sum_k H[y(x) | D, g*_k]`. The first term is Gaussian;
//! the variants differ in how the conditioned entropy is approximated.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::domain::Bounds;
use crate::ep::{condition_with, TruncatedLatents};
use crate::error::{Error, Result};
use crate::gp::{gaussian_entropy, GpModel, VARIANCE_FLOOR};
use crate::ssgp::{local_ascent, SsgpPosterior};

use super::kde::kde_entropy;

/// EP variant: `1/2 [ln(v_f + s^2) - 1/K sum_k ln(v~_k + s^2)]`, with one
/// set of truncated latents per max-value sample.
pub fn nes_ep_value(model: &GpModel, latents: &[TruncatedLatents], x: &[f64]) -> Result<f64> {
    let noise = model.params().noise_variance();
    let joint = model.predict_joint(x);
    let base = (joint.f.variance.max(VARIANCE_FLOOR) + noise).ln();
    let mut conditioned = 0.0;
    for lat in latents {
        let c = condition_with(model, lat, x, &joint)?;
        conditioned += (c.f_var.max(VARIANCE_FLOOR) + noise).ln();
    }
    Ok(0.5 * (base - conditioned / latents.len() as f64))
}

/// Settings for drawing posterior samples consistent with a max-value.
#[derive(Debug, Clone)]
pub struct RejectionOptions {
    /// Accepted samples `L` per max-value.
    pub accepted: usize,
    /// Uniform probes per dimension used for early rejection.
    pub probes_per_dim: usize,
    /// Local ascents from the best probes of each surviving sample.
    pub ascent_starts: usize,
    /// Abort when the acceptance rate falls below this value.
    pub min_acceptance: f64,
    /// Proposals between acceptance-rate checks.
    pub check_every: usize,
}

impl Default for RejectionOptions {
    fn default() -> Self {
        Self {
            accepted: 1000,
            probes_per_dim: 100,
            ascent_starts: 2,
            min_acceptance: 1e-4,
            check_every: 10_000,
        }
    }
}

/// Accepted posterior samples for one max-value `g*`: weight vectors whose
/// smoothed function stays below `g*`, each with a fixed observation-noise
/// draw.
#[derive(Debug, Clone)]
pub struct RejectionSamples {
    pub g_star: f64,
    /// `L x M`, one accepted weight vector per row, premultiplied by the
    /// feature amplitude.
    weights: DMatrix<f64>,
    noise: DVector<f64>,
    offset: f64,
    pub proposed: usize,
}

impl RejectionSamples {
    pub fn len(&self) -> usize {
        self.noise.len()
    }

    pub fn is_empty(&self) -> bool {
        self.noise.is_empty()
    }

    pub fn acceptance_rate(&self) -> f64 {
        self.len() as f64 / self.proposed as f64
    }

    /// Noisy observations `f_i(x) + eps_i` of all accepted samples.
    pub fn observations(&self, posterior: &SsgpPosterior, x: &[f64]) -> DVector<f64> {
        let phi = DVector::from_fn(posterior.features().len(), |i, _| posterior_cos(posterior, i, x));
        let mut y = &self.weights * phi + &self.noise;
        y.add_scalar_mut(self.offset);
        y
    }
}

fn posterior_cos(posterior: &SsgpPosterior, i: usize, x: &[f64]) -> f64 {
    let f = posterior.features();
    let mut t = f.phases()[i];
    for (j, xj) in x.iter().enumerate() {
        t += f.frequencies()[(i, j)] * xj;
    }
    t.cos()
}

/// Draws samples from the sparse-spectrum posterior until `accepted` of
/// them satisfy `max g~ <= g_star`. A sample is rejected as soon as any
/// probe exceeds `g_star`; survivors are checked by local ascent from the
/// best probes.
pub fn rejection_sample<R: Rng + ?Sized>(
    posterior: &SsgpPosterior,
    domain: &Bounds,
    extra_probes: &[Vec<f64>],
    g_star: f64,
    noise_variance: f64,
    options: &RejectionOptions,
    rng: &mut R,
) -> Result<RejectionSamples> {
    let m = posterior.features().len();
    let amp = posterior.features().amplitude();
    let mut probes: Vec<Vec<f64>> = extra_probes.to_vec();
    probes.extend((0..options.probes_per_dim * domain.dim()).map(|_| domain.sample_uniform(rng)));
    let mut probe_design = posterior.features().design(&probes);
    for (i, s) in posterior.scales().iter().enumerate() {
        probe_design.column_mut(i).scale_mut(*s);
    }
    let offset = posterior.weights().offset();
    let noise_std = noise_variance.max(0.0).sqrt();

    let mut rows: Vec<DVector<f64>> = Vec::with_capacity(options.accepted);
    let mut noise = Vec::with_capacity(options.accepted);
    let mut proposed = 0usize;
    while rows.len() < options.accepted {
        proposed += 1;
        if proposed % options.check_every == 0
            && (rows.len() as f64) < options.min_acceptance * proposed as f64
        {
            return Err(Error::LowAcceptance {
                accepted: rows.len(),
                proposed,
            });
        }
        let a = posterior.weights().sample_weights(rng);
        let g_probe = &probe_design * &a;
        if g_probe.iter().any(|v| v + offset > g_star) {
            continue;
        }
        let sample = posterior.with_weights(a.as_slice());
        let mut order: Vec<usize> = (0..probes.len()).collect();
        order.sort_by(|&i, &j| g_probe[j].total_cmp(&g_probe[i]));
        let exceeds = order.iter().take(options.ascent_starts).any(|&i| {
            local_ascent(&sample, domain, probes[i].clone(), 100).1 > g_star
        });
        if exceeds {
            continue;
        }
        noise.push(noise_std * rng.sample::<f64, _>(StandardNormal));
        rows.push(a * amp);
    }
    let mut weights = DMatrix::zeros(rows.len(), m);
    for (r, a) in rows.iter().enumerate() {
        weights.row_mut(r).tr_copy_from(a);
    }
    Ok(RejectionSamples {
        g_star,
        weights,
        noise: DVector::from_vec(noise),
        offset,
        proposed,
    })
}

/// Rejection-sampling variant: Gaussian entropy of the predictive minus
/// the mean KDE entropy of the accepted samples' noisy observations.
pub fn nes_rs_value(
    model: &GpModel,
    posterior: &SsgpPosterior,
    samples: &[RejectionSamples],
    x: &[f64],
) -> Result<f64> {
    let v = model.predict_f(x).variance.max(VARIANCE_FLOOR) + model.params().noise_variance();
    let base = gaussian_entropy(v)?;
    let mut conditioned = 0.0;
    for s in samples {
        let y = s.observations(posterior, x);
        conditioned += kde_entropy(y.as_slice())?;
    }
    Ok(base - conditioned / samples.len() as f64)
}
