//! Conditioning the GP posterior on a robust max-value `g*`.
//!
//! The event `max g <= g*` is approximated by the constraints
//! `g(x_i) <= g*` at the training inputs plus `g(x) <= g*` at the query.
//! The first part is a truncated multivariate normal over the latent robust
//! values at the data, approximated by expectation propagation with one
//! univariate site per constraint. The query constraint is a one-dimensional
//! truncation, and the final predictive of `f(x)` follows by Gaussian
//! marginalization over the truncated `g(x)`.

use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{invalid, Error, Result};
use crate::gp::{cross_gram, gram, GpModel, JointPrediction, VARIANCE_FLOOR};
use crate::linalg::symmetrize;
use crate::stats::inverse_mills;

/// Mean and variance of `N(m0, v0)` truncated to `(-inf, g_star]`.
///
/// With `beta = (g_star - m0) / sqrt(v0)` and `r = phi(beta) / Phi(beta)`:
/// `m = m0 - sqrt(v0) r` and `v = v0 (1 - r (r + beta))`.
pub fn truncate_univariate(m0: f64, v0: f64, g_star: f64) -> Result<(f64, f64)> {
    if !(v0 > 0.0) || !v0.is_finite() {
        return Err(invalid(format!("truncation needs a positive variance, got {v0}")));
    }
    if !(m0.is_finite() && g_star.is_finite()) {
        return Err(invalid("truncation needs finite mean and bound"));
    }
    let sd = v0.sqrt();
    let beta = (g_star - m0) / sd;
    let r = inverse_mills(beta);
    let mean = m0 - sd * r;
    let shrink = (1.0 - r * (r + beta)).clamp(f64::MIN_POSITIVE, 1.0);
    Ok((mean, v0 * shrink))
}

/// EP schedule settings.
#[derive(Debug, Clone)]
pub struct EpOptions {
    /// Weight of the proposed site value once updates are damped. Sweeps
    /// take full steps until a cavity variance turns negative or the largest
    /// site change grows from one sweep to the next.
    pub damping: f64,
    pub tolerance: f64,
    pub max_sweeps: usize,
    /// Consecutive skipped sweeps after which a site is frozen.
    pub freeze_after: usize,
}

impl Default for EpOptions {
    fn default() -> Self {
        Self {
            damping: 0.8,
            tolerance: 1e-6,
            max_sweeps: 50,
            freeze_after: 5,
        }
    }
}

/// Posterior of the latent robust values at the training inputs, before
/// any max-value constraint. Depends only on the model, so it is shared by
/// all `g*` values of one iteration.
#[derive(Debug, Clone)]
pub struct LatentPrior {
    /// `m_g(X)`
    mean: DVector<f64>,
    /// `S = k_g(X, X) - V^T V`
    cov: DMatrix<f64>,
    /// `V = L^{-1} k_gf(X, X)` with `L` the Cholesky factor of the model's Gram matrix.
    whitened_gf: DMatrix<f64>,
}

impl LatentPrior {
    pub fn new(model: &GpModel) -> Result<Self> {
        if model.is_empty() {
            return Err(invalid("latent prior needs at least one observation"));
        }
        let chol = model.chol.as_ref().expect("non-empty model is factorized");
        let x = model.data().inputs();
        let kgf = cross_gram(&model.kernels.gf, x, x);
        let v = chol.solve_lower_mat(&kgf);
        let mut cov = gram(&model.kernels.g, x, 0.0) - v.transpose() * &v;
        symmetrize(&mut cov);
        let mean = DVector::from_iterator(
            model.len(),
            (0..model.len()).map(|i| model.prior_mean() + kgf.column(i).dot(&model.alpha)),
        );
        Ok(Self {
            mean,
            cov,
            whitened_gf: v,
        })
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// Posterior covariance between `g(x)` and the latents, given the
    /// query's whitened cross-covariance `L^{-1} k_gf(x, X)`.
    fn query_cov(&self, model: &GpModel, x: &[f64], whitened: &DVector<f64>) -> DVector<f64> {
        model.cross_vector(&model.kernels.g, x) - self.whitened_gf.transpose() * whitened
    }
}

/// Univariate EP site parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct EpSites {
    /// Site precisions `tau_i >= 0`.
    pub precisions: Vec<f64>,
    /// Site precision-adjusted means `nu_i`.
    pub natural_means: Vec<f64>,
    pub converged: bool,
    pub sweeps_used: usize,
}

/// Gaussian approximation `N(mu_1, Sigma_1)` of the latents under the
/// constraints `g(x_i) <= g*`, with what is needed to project it onto
/// query points.
#[derive(Debug, Clone)]
pub struct TruncatedLatents {
    prior: Arc<LatentPrior>,
    g_star: f64,
    sites: EpSites,
    /// `mu_1 - m_g(X)`
    centered_mean: DVector<f64>,
    cov: DMatrix<f64>,
    /// `S^{-1} (mu_1 - m_g(X)) = nu - T^{1/2} B^{-1} T^{1/2} S nu`
    proj_mean: DVector<f64>,
    sqrt_tau: DVector<f64>,
    /// Cholesky factor of `B = I + T^{1/2} S T^{1/2}`.
    chol_b: Cholesky<f64, Dyn>,
}

struct SiteState {
    sqrt_tau: DVector<f64>,
    chol_b: Cholesky<f64, Dyn>,
    cov: DMatrix<f64>,
    mean: DVector<f64>,
}

/// Recomputes `Sigma_1 = (S^{-1} + T)^{-1}` and `mu_1 = Sigma_1 nu` without
/// inverting `S`.
fn site_state(s: &DMatrix<f64>, tau: &[f64], nu: &[f64]) -> Result<SiteState> {
    let n = tau.len();
    let sqrt_tau = DVector::from_iterator(n, tau.iter().map(|t| t.max(0.0).sqrt()));
    let mut b = DMatrix::identity(n, n);
    for i in 0..n {
        for j in 0..n {
            b[(i, j)] += sqrt_tau[i] * s[(i, j)] * sqrt_tau[j];
        }
    }
    symmetrize(&mut b);
    let chol_b = Cholesky::new(b)
        .ok_or_else(|| Error::NumericalFailure("EP site matrix not positive definite".into()))?;
    // V = L_B^{-1} T^{1/2} S
    let mut ts = s.clone();
    for i in 0..n {
        ts.row_mut(i).scale_mut(sqrt_tau[i]);
    }
    let v = chol_b
        .l_dirty()
        .solve_lower_triangular(&ts)
        .expect("positive diagonal");
    let mut cov = s - v.transpose() * v;
    symmetrize(&mut cov);
    let mean = &cov * DVector::from_column_slice(nu);
    Ok(SiteState {
        sqrt_tau,
        chol_b,
        cov,
        mean,
    })
}

/// Runs EP for the constraints `g(x_i) <= g_star` on a shared latent prior.
pub fn ep_truncate(prior: Arc<LatentPrior>, g_star: f64, options: &EpOptions) -> Result<TruncatedLatents> {
    if !g_star.is_finite() {
        return Err(invalid("max-value must be finite"));
    }
    let n = prior.len();
    let s = &prior.cov;
    let bounds: Vec<f64> = prior.mean.iter().map(|m| g_star - m).collect();
    let scale: Vec<f64> = (0..n).map(|i| s[(i, i)].max(VARIANCE_FLOOR)).collect();
    let mut tau = vec![0.0; n];
    let mut nu = vec![0.0; n];
    let mut skipped = vec![0usize; n];
    let mut cov = s.clone();
    let mut mean = DVector::zeros(n);
    let mut converged = false;
    let mut sweeps = 0;
    let mut damped = false;
    let mut last_change = f64::INFINITY;

    while sweeps < options.max_sweeps {
        sweeps += 1;
        let damping = if damped { options.damping } else { 1.0 };
        let mut max_change: f64 = 0.0;
        for i in 0..n {
            if skipped[i] >= options.freeze_after {
                continue;
            }
            let var_i = cov[(i, i)].max(VARIANCE_FLOOR);
            let cav_tau = 1.0 / var_i - tau[i];
            let cav_nu = mean[i] / var_i - nu[i];
            if !(cav_tau > 0.0) {
                skipped[i] += 1;
                damped = true;
                continue;
            }
            skipped[i] = 0;
            let (m_hat, v_hat) = truncate_univariate(cav_nu / cav_tau, 1.0 / cav_tau, bounds[i])?;
            let proposed_tau = (1.0 / v_hat - cav_tau).max(0.0);
            let proposed_nu: f64 = m_hat / v_hat - cav_nu;
            let new_tau = (damping * proposed_tau + (1.0 - damping) * tau[i]).max(0.0);
            let new_nu: f64 = damping * proposed_nu + (1.0 - damping) * nu[i];
            let change = ((new_tau - tau[i]).abs() * scale[i])
                .max((new_nu - nu[i]).abs() * scale[i].sqrt());
            max_change = max_change.max(change);

            // rank-one update of Sigma_1 for the change in site precision
            let dtau = new_tau - tau[i];
            tau[i] = new_tau;
            nu[i] = new_nu;
            if dtau != 0.0 {
                let col = cov.column(i).clone_owned();
                let denom = 1.0 + dtau * col[i];
                if denom > 0.0 {
                    cov -= (dtau / denom) * &col * col.transpose();
                } else {
                    cov = site_state(s, &tau, &nu)?.cov;
                }
            }
            mean = &cov * DVector::from_column_slice(&nu);
        }
        let state = site_state(s, &tau, &nu)?;
        cov = state.cov;
        mean = state.mean;
        if max_change < options.tolerance {
            converged = true;
            break;
        }
        damped |= max_change > last_change;
        last_change = max_change;
    }

    let state = site_state(s, &tau, &nu)?;
    let nu_vec = DVector::from_column_slice(&nu);
    // S^{-1} mu_1 = nu - T^{1/2} B^{-1} T^{1/2} S nu
    let t_s_nu = state.sqrt_tau.component_mul(&(s * &nu_vec));
    let proj_mean = &nu_vec - state.sqrt_tau.component_mul(&state.chol_b.solve(&t_s_nu));
    Ok(TruncatedLatents {
        prior,
        g_star,
        sites: EpSites {
            precisions: tau,
            natural_means: nu,
            converged,
            sweeps_used: sweeps,
        },
        centered_mean: state.mean,
        cov: state.cov,
        proj_mean,
        sqrt_tau: state.sqrt_tau,
        chol_b: state.chol_b,
    })
}

/// EP approximation of the latent robust values at the data under `g(x_i) <= g_star`.
pub fn ep_truncate_latents(model: &GpModel, g_star: f64) -> Result<TruncatedLatents> {
    ep_truncate(Arc::new(LatentPrior::new(model)?), g_star, &EpOptions::default())
}

impl TruncatedLatents {
    /// Latents without any constraint (all sites empty).
    pub fn untruncated(model: &GpModel) -> Result<Self> {
        let prior = Arc::new(LatentPrior::new(model)?);
        let n = prior.len();
        let state = site_state(&prior.cov, &vec![0.0; n], &vec![0.0; n])?;
        Ok(Self {
            g_star: f64::INFINITY,
            sites: EpSites {
                precisions: vec![0.0; n],
                natural_means: vec![0.0; n],
                converged: true,
                sweeps_used: 0,
            },
            centered_mean: state.mean,
            cov: state.cov,
            proj_mean: DVector::zeros(n),
            sqrt_tau: state.sqrt_tau,
            chol_b: state.chol_b,
            prior,
        })
    }

    pub fn g_star(&self) -> f64 {
        self.g_star
    }

    pub fn sites(&self) -> &EpSites {
        &self.sites
    }

    pub fn converged(&self) -> bool {
        self.sites.converged
    }

    /// `mu_1`
    pub fn mean(&self) -> DVector<f64> {
        &self.centered_mean + &self.prior.mean
    }

    /// `Sigma_1`
    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn prior(&self) -> &LatentPrior {
        &self.prior
    }

    /// `(m_0, v_0)` at a query whose joint prediction is already known.
    pub fn project(&self, model: &GpModel, x: &[f64], joint: &JointPrediction) -> (f64, f64) {
        let c = self.prior.query_cov(model, x, &joint.whitened_gf);
        let m0 = joint.g.mean + c.dot(&self.proj_mean);
        let tc = self.sqrt_tau.component_mul(&c);
        let w = self
            .chol_b
            .l_dirty()
            .solve_lower_triangular(&tc)
            .expect("positive diagonal");
        let v0 = (joint.g.variance - w.norm_squared()).max(0.0);
        (m0, v0)
    }
}

/// Predictive distribution of `g(x)` after marginalizing the latents:
/// returns `(m_0, v_0)`.
pub fn predictive_from_latents(model: &GpModel, latents: &TruncatedLatents, query: &[f64]) -> (f64, f64) {
    let joint = model.predict_joint(query);
    latents.project(model, query, &joint)
}

/// Intermediate and final moments of the conditioned predictive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionedPredictive {
    /// Mean and variance of `g(x)` given the latent constraints.
    pub m0: f64,
    pub v0: f64,
    /// The same after truncating `g(x)` itself at `g*`.
    pub g_mean: f64,
    pub g_var: f64,
    /// Resulting predictive of `f(x)`.
    pub f_mean: f64,
    pub f_var: f64,
}

/// Conditions `f(x)` on the max-value behind `latents`, reusing a joint
/// prediction computed once per query.
pub fn condition_with(
    model: &GpModel,
    latents: &TruncatedLatents,
    query: &[f64],
    joint: &JointPrediction,
) -> Result<ConditionedPredictive> {
    let (m0, v0) = latents.project(model, query, joint);
    let (g_mean, g_var) = if v0 > VARIANCE_FLOOR && latents.g_star.is_finite() {
        truncate_univariate(m0, v0, latents.g_star)?
    } else {
        (m0, v0)
    };
    let (f_mean, f_var) = if joint.g.variance < VARIANCE_FLOOR {
        (joint.f.mean, joint.f.variance)
    } else {
        let gain = joint.cov_fg / joint.g.variance;
        let resid = (joint.f.variance - gain * joint.cov_fg).max(0.0);
        (joint.f.mean + gain * (g_mean - joint.g.mean), resid + gain * gain * g_var)
    };
    Ok(ConditionedPredictive {
        m0,
        v0,
        g_mean,
        g_var,
        f_mean,
        f_var,
    })
}

/// Full pipeline for one `(g*, x)` pair: EP on the latents, projection,
/// univariate truncation and marginalization.
pub fn condition_f_on_gstar(model: &GpModel, g_star: f64, query: &[f64]) -> Result<ConditionedPredictive> {
    let latents = ep_truncate_latents(model, g_star)?;
    condition_with(model, &latents, query, &model.predict_joint(query))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Bounds;
    use crate::gp::{Dataset, InputNoise, KernelParams};
    use approx::assert_relative_eq;

    fn model(n: usize, noise_std: f64, seed: u64) -> GpModel {
        use rand::Rng;
        let mut r = crate::rng::from_seed(seed);
        let xs: Vec<Vec<f64>> = (0..n).map(|_| vec![r.gen::<f64>()]).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 0.5 * (9.0 * x[0]).sin()).collect();
        let data = Dataset::from_points(Bounds::unit(1), xs, ys).unwrap();
        GpModel::new(
            KernelParams::new(0.25, vec![0.1], 1e-4).unwrap(),
            InputNoise::from_std(&[noise_std]).unwrap(),
            data,
        )
        .unwrap()
    }

    #[test]
    fn truncation_at_zero() {
        let (m, v) = truncate_univariate(0.0, 1.0, 0.0).unwrap();
        let r = 0.797_884_560_802_865_4;
        assert_relative_eq!(m, -r, epsilon = 1e-12);
        assert_relative_eq!(v, 1.0 - r * r, epsilon = 1e-12);
        assert_relative_eq!(v, 0.363_380_227_632_418_4, epsilon = 1e-12);
    }

    #[test]
    fn inactive_truncation_is_identity() {
        let (m, v) = truncate_univariate(1.5, 4.0, 1.5 + 10.0 * 2.0).unwrap();
        assert!((m - 1.5).abs() < 1e-8 && (v - 4.0).abs() < 1e-8);
    }

    #[test]
    fn deep_truncation_stays_positive() {
        for beta in [-8.5, -20.0, -1e3] {
            let (m, v) = truncate_univariate(0.0, 1.0, beta).unwrap();
            assert!(v > 0.0 && v < 1.0 && m < beta, "{beta}: {m} {v}");
        }
        assert!(truncate_univariate(0.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn single_site_is_exact() {
        let m = model(1, 0.05, 1);
        let prior = LatentPrior::new(&m).unwrap();
        let (mu, var) = (prior.mean()[0], prior.covariance()[(0, 0)]);
        let g_star = mu + 0.3 * var.sqrt();
        let lat = ep_truncate_latents(&m, g_star).unwrap();
        let (em, ev) = truncate_univariate(mu, var, g_star).unwrap();
        assert!(lat.converged());
        assert_relative_eq!(lat.mean()[0], em, epsilon = 1e-6);
        assert_relative_eq!(lat.covariance()[(0, 0)], ev, epsilon = 1e-6);
    }

    #[test]
    fn vacuous_bound_leaves_prior() {
        let m = model(6, 0.05, 2);
        let prior = LatentPrior::new(&m).unwrap();
        let top = (0..6)
            .map(|i| prior.mean()[i] + 40.0 * prior.covariance()[(i, i)].sqrt())
            .fold(f64::NEG_INFINITY, f64::max);
        let lat = ep_truncate_latents(&m, top).unwrap();
        assert!((lat.mean() - prior.mean()).amax() < 1e-6);
        assert!((lat.covariance() - prior.covariance()).amax() < 1e-6);
    }

    #[test]
    fn untruncated_projection_matches_predict_g() {
        let m = model(5, 0.05, 3);
        let lat = TruncatedLatents::untruncated(&m).unwrap();
        for x in [0.05, 0.33, 0.71] {
            let (m0, v0) = predictive_from_latents(&m, &lat, &[x]);
            let p = m.predict_g(&[x]);
            assert!((m0 - p.mean).abs() < 1e-8 && (v0 - p.variance).abs() < 1e-8);
        }
        let m0n = model(5, 0.0, 3);
        let lat = TruncatedLatents::untruncated(&m0n).unwrap();
        let (m0, v0) = predictive_from_latents(&m0n, &lat, &[0.4]);
        let p = m0n.predict_f(&[0.4]);
        assert!((m0 - p.mean).abs() < 1e-8 && (v0 - p.variance).abs() < 1e-8);
    }

    /// Dense oracle: condition the joint Gaussian of `(g(x), g(X))` on `y`,
    /// then marginalize `g(X) ~ N(mu_1, Sigma_1)` explicitly.
    #[test]
    fn projection_matches_dense_conditioning() {
        let m = model(5, 0.05, 4);
        let lat = ep_truncate_latents(&m, 0.2).unwrap();
        let x = m.data().inputs().to_vec();
        let n = x.len();
        let q = [0.52];
        let params = m.params();
        let noise = m.noise();
        let kf = |a: &[f64], b: &[f64]| crate::gp::se_kernel(a, b, params).unwrap();
        let kgf = |a: &[f64], b: &[f64]| crate::gp::robust_cross_kernel(a, b, params, noise).unwrap();
        let kg = |a: &[f64], b: &[f64]| crate::gp::robust_kernel(a, b, params, noise).unwrap();
        // z = [g(q), g(x_1..n)], y observed
        let mut pts = vec![q.to_vec()];
        pts.extend(x.iter().cloned());
        let czz = DMatrix::from_fn(n + 1, n + 1, |i, j| kg(&pts[i], &pts[j]));
        let czy = DMatrix::from_fn(n + 1, n, |i, j| kgf(&pts[i], &x[j]));
        let mut cyy = DMatrix::from_fn(n, n, |i, j| kf(&x[i], &x[j]));
        for i in 0..n {
            cyy[(i, i)] += params.noise_variance() + m.jitter();
        }
        let y = DVector::from_column_slice(m.data().targets());
        let cyy_inv = cyy.try_inverse().unwrap();
        let mz = &czy * &cyy_inv * &y;
        let sz = &czz - &czy * &cyy_inv * czy.transpose();
        let s12 = sz.view((0, 1), (1, n)).clone_owned();
        let s22 = sz.view((1, 1), (n, n)).clone_owned();
        let s22_inv = s22.try_inverse().unwrap();
        let b1 = &s12 * &s22_inv;
        let mu1 = lat.mean();
        let m0 = mz[0] + (&b1 * (&mu1 - mz.rows(1, n)))[(0, 0)];
        let v0 = sz[(0, 0)] - (&b1 * s12.transpose())[(0, 0)] + (&b1 * lat.covariance() * b1.transpose())[(0, 0)];
        let (em0, ev0) = predictive_from_latents(&m, &lat, &q);
        assert!((em0 - m0).abs() < 1e-8, "{em0} {m0}");
        assert!((ev0 - v0).abs() < 1e-8, "{ev0} {v0}");
    }

    #[test]
    fn vacuous_conditioning_recovers_predict_f() {
        let m = model(6, 0.05, 5);
        for x in [0.1, 0.5, 0.9] {
            let c = condition_f_on_gstar(&m, 1e3, &[x]).unwrap();
            let p = m.predict_f(&[x]);
            assert!((c.f_mean - p.mean).abs() < 1e-6 && (c.f_var - p.variance).abs() < 1e-6);
        }
    }

    #[test]
    fn active_bound_pulls_mean_down() {
        let m = model(6, 0.05, 6);
        let prior = LatentPrior::new(&m).unwrap();
        let top = prior.mean().imax();
        let g_star = prior.mean()[top] + 0.1 * prior.covariance()[(top, top)].sqrt();
        let c = condition_f_on_gstar(&m, g_star, &m.data().inputs()[top]).unwrap();
        assert!(c.g_mean < c.m0 && c.g_var < c.v0, "{c:?}");
    }
}
