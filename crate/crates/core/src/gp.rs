//! Gaussian-process regression with the squared-exponential kernel and its
//! Gaussian-smoothed counterparts.
//!
//! Observations `y_i = f(x_i) + eps` are modeled with a zero-mean (or
//! constant-mean) GP on `f`. Because the input-noise expectation
//! `g(x) = E[f(x + xi)]`, `xi ~ N(0, Sigma_x)`, is a linear functional of
//! `f`, the model also yields a GP posterior for `g`:
//!
//! * `k_f(a, b)  = s^2 exp(-1/2 sum_j (a_j - b_j)^2 / l_j^2)`
//! * `k_gf(a, b) = s^2 prod_j (l_j^2 / (l_j^2 + v_j))^{1/2} exp(-1/2 sum_j (a_j - b_j)^2 / (l_j^2 + v_j))`
//! * `k_g(a, b)  = s^2 prod_j (l_j^2 / (l_j^2 + 2 v_j))^{1/2} exp(-1/2 sum_j (a_j - b_j)^2 / (l_j^2 + 2 v_j))`
//!
//! where `v_j` is the input-noise variance along dimension `j`. All three
//! are scaled SE kernels, so they share one implementation.

use log::warn;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::domain::Bounds;
use crate::error::{check_dims, invalid, Error, Result};
use crate::linalg::JitteredCholesky;
use crate::optim::bfgs_maximize;
use crate::rng;
use crate::stats::normal_entropy_unchecked;

/// Floor applied to predictive variances before they enter logarithms.
pub const VARIANCE_FLOOR: f64 = 1e-12;

/// Squared-exponential kernel hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    signal_variance: f64,
    lengthscales: Vec<f64>,
    noise_variance: f64,
}

impl KernelParams {
    pub fn new(signal_variance: f64, lengthscales: Vec<f64>, noise_variance: f64) -> Result<Self> {
        if !(signal_variance > 0.0 && signal_variance.is_finite()) {
            return Err(invalid("signal variance must be positive"));
        }
        if lengthscales.is_empty() || lengthscales.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
            return Err(invalid("lengthscales must be non-empty and strictly positive"));
        }
        if !(noise_variance >= 0.0 && noise_variance.is_finite()) {
            return Err(invalid("observation noise variance must be non-negative"));
        }
        Ok(Self {
            signal_variance,
            lengthscales,
            noise_variance,
        })
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    pub fn signal_variance(&self) -> f64 {
        self.signal_variance
    }

    pub fn lengthscales(&self) -> &[f64] {
        &self.lengthscales
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    /// `[ln s^2, ln l_1, .., ln l_d, ln sigma_eps^2]`
    pub fn to_log_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim() + 2);
        v.push(self.signal_variance.ln());
        v.extend(self.lengthscales.iter().map(|l| l.ln()));
        v.push(self.noise_variance.max(f64::MIN_POSITIVE).ln());
        v
    }

    pub fn from_log_vec(v: &[f64]) -> Result<Self> {
        if v.len() < 3 {
            return Err(invalid("log-parameter vector too short"));
        }
        let d = v.len() - 2;
        Self::new(
            v[0].exp(),
            v[1..=d].iter().map(|x| x.exp()).collect(),
            v[d + 1].exp(),
        )
    }
}

/// Diagonal covariance of the Gaussian input perturbation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputNoise {
    variances: Vec<f64>,
}

impl InputNoise {
    pub fn new(variances: Vec<f64>) -> Result<Self> {
        if variances.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(invalid("input-noise variances must be non-negative"));
        }
        Ok(Self { variances })
    }

    /// Builds the noise from per-dimension standard deviations.
    pub fn from_std(std: &[f64]) -> Result<Self> {
        Self::new(std.iter().map(|s| s * s).collect())
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            variances: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.variances.len()
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    pub fn std(&self) -> Vec<f64> {
        self.variances.iter().map(|v| v.sqrt()).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.variances.iter().all(|v| *v == 0.0)
    }
}

/// Observed evaluations inside a box domain.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    domain: Bounds,
    inputs: Vec<Vec<f64>>,
    targets: Vec<f64>,
}

impl Dataset {
    pub fn new(domain: Bounds) -> Self {
        Self {
            domain,
            inputs: Vec::new(),
            targets: Vec::new(),
        }
    }

    pub fn from_points(domain: Bounds, inputs: Vec<Vec<f64>>, targets: Vec<f64>) -> Result<Self> {
        if inputs.len() != targets.len() {
            return Err(invalid("inputs and targets differ in length"));
        }
        let mut data = Self::new(domain);
        for (x, y) in inputs.into_iter().zip(targets) {
            data.push(x, y)?;
        }
        Ok(data)
    }

    pub fn push(&mut self, x: Vec<f64>, y: f64) -> Result<()> {
        check_dims(self.domain.dim(), x.len(), "dataset input")?;
        if !self.domain.contains(&x) {
            return Err(invalid(format!("input {x:?} lies outside the domain")));
        }
        if !y.is_finite() {
            return Err(invalid("targets must be finite"));
        }
        self.inputs.push(x);
        self.targets.push(y);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn domain(&self) -> &Bounds {
        &self.domain
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }
}

/// `amplitude * exp(-1/2 sum_j (a_j - b_j)^2 * inv_sq_len_j)`
#[derive(Debug, Clone)]
pub(crate) struct ScaledSe {
    pub amplitude: f64,
    pub inv_sq_len: Vec<f64>,
}

impl ScaledSe {
    fn smoothed(params: &KernelParams, noise: &InputNoise, copies: f64) -> Self {
        let mut amplitude = params.signal_variance;
        let mut inv_sq_len = Vec::with_capacity(params.dim());
        for (l, v) in params.lengthscales.iter().zip(&noise.variances) {
            let l2 = l * l;
            let widened = l2 + copies * v;
            amplitude *= (l2 / widened).sqrt();
            inv_sq_len.push(1.0 / widened);
        }
        Self {
            amplitude,
            inv_sq_len,
        }
    }

    #[inline]
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        let mut q = 0.0;
        for j in 0..a.len() {
            let d = a[j] - b[j];
            q += d * d * self.inv_sq_len[j];
        }
        self.amplitude * (-0.5 * q).exp()
    }
}

/// The three kernels `k_f`, `k_gf` and `k_g` for one parameter setting.
#[derive(Debug, Clone)]
pub(crate) struct KernelTriple {
    pub f: ScaledSe,
    pub gf: ScaledSe,
    pub g: ScaledSe,
}

impl KernelTriple {
    pub fn new(params: &KernelParams, noise: &InputNoise) -> Self {
        Self {
            f: ScaledSe::smoothed(params, noise, 0.0),
            gf: ScaledSe::smoothed(params, noise, 1.0),
            g: ScaledSe::smoothed(params, noise, 2.0),
        }
    }
}

fn check_pair(a: &[f64], b: &[f64], params: &KernelParams) -> Result<()> {
    check_dims(params.dim(), a.len(), "kernel argument a")?;
    check_dims(params.dim(), b.len(), "kernel argument b")
}

/// Squared-exponential covariance `k_f(a, b)`.
pub fn se_kernel(a: &[f64], b: &[f64], params: &KernelParams) -> Result<f64> {
    check_pair(a, b, params)?;
    Ok(ScaledSe::smoothed(params, &InputNoise::zeros(params.dim()), 0.0).eval(a, b))
}

/// Covariance between the smoothed process at `a` and the latent process at
/// `b`: `k_gf(a, b) = E_xi[k_f(a + xi, b)]`.
pub fn robust_cross_kernel(
    a: &[f64],
    b: &[f64],
    params: &KernelParams,
    noise: &InputNoise,
) -> Result<f64> {
    check_pair(a, b, params)?;
    check_dims(params.dim(), noise.dim(), "input noise")?;
    Ok(ScaledSe::smoothed(params, noise, 1.0).eval(a, b))
}

/// Covariance of the smoothed process: `k_g(a, b) = E_{xi, xi'}[k_f(a + xi, b + xi')]`.
pub fn robust_kernel(
    a: &[f64],
    b: &[f64],
    params: &KernelParams,
    noise: &InputNoise,
) -> Result<f64> {
    check_pair(a, b, params)?;
    check_dims(params.dim(), noise.dim(), "input noise")?;
    Ok(ScaledSe::smoothed(params, noise, 2.0).eval(a, b))
}

/// Differential entropy `1/2 ln(2 pi e v)` of a normal with variance `v`.
pub fn gaussian_entropy(variance: f64) -> Result<f64> {
    if variance.is_nan() || variance < 0.0 {
        return Err(invalid("variance must be non-negative"));
    }
    if variance == 0.0 {
        return Err(Error::DegenerateDistribution(
            "zero variance has entropy -inf".into(),
        ));
    }
    Ok(normal_entropy_unchecked(variance))
}

/// Posterior mean and variance at one input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub mean: f64,
    pub variance: f64,
}

/// Joint posterior of `f(x)` and `g(x)` at one input.
#[derive(Debug, Clone)]
pub struct JointPrediction {
    pub f: Prediction,
    pub g: Prediction,
    /// Posterior covariance of `f(x)` and `g(x)`.
    pub cov_fg: f64,
    /// `L^{-1} k_gf(x, X)`, reused by the conditioning code.
    pub(crate) whitened_gf: DVector<f64>,
}

/// GP posterior over `f` (and `g`) given a dataset.
///
/// Immutable after construction: changing data or parameters means
/// building a new model.
#[derive(Debug, Clone)]
pub struct GpModel {
    params: KernelParams,
    noise: InputNoise,
    data: Dataset,
    prior_mean: f64,
    pub(crate) kernels: KernelTriple,
    pub(crate) chol: Option<JitteredCholesky>,
    /// `K^{-1} (y - prior_mean)`
    pub(crate) alpha: DVector<f64>,
}

impl GpModel {
    pub fn new(params: KernelParams, noise: InputNoise, data: Dataset) -> Result<Self> {
        Self::with_prior_mean(params, noise, data, 0.0)
    }

    /// Model with a constant prior mean for `f` (and hence `g`).
    pub fn with_prior_mean(
        params: KernelParams,
        noise: InputNoise,
        data: Dataset,
        prior_mean: f64,
    ) -> Result<Self> {
        check_dims(params.dim(), data.dim(), "dataset")?;
        check_dims(params.dim(), noise.dim(), "input noise")?;
        if !prior_mean.is_finite() {
            return Err(invalid("prior mean must be finite"));
        }
        let kernels = KernelTriple::new(&params, &noise);
        let n = data.len();
        let (chol, alpha) = if n == 0 {
            (None, DVector::zeros(0))
        } else {
            let k = gram(&kernels.f, data.inputs(), params.noise_variance);
            let chol = JitteredCholesky::new(&k, params.signal_variance)?;
            let centered =
                DVector::from_iterator(n, data.targets().iter().map(|y| y - prior_mean));
            let alpha = chol.solve(&centered);
            (Some(chol), alpha)
        };
        Ok(Self {
            params,
            noise,
            data,
            prior_mean,
            kernels,
            chol,
            alpha,
        })
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn noise(&self) -> &InputNoise {
        &self.noise
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn prior_mean(&self) -> f64 {
        self.prior_mean
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Diagonal jitter the factorization needed (0 when there is no data).
    pub fn jitter(&self) -> f64 {
        self.chol.as_ref().map_or(0.0, |c| c.jitter)
    }

    pub(crate) fn cross_vector(&self, kernel: &ScaledSe, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.len(),
            self.data.inputs().iter().map(|xi| kernel.eval(x, xi)),
        )
    }

    fn predict_with(&self, kernel: &ScaledSe, prior_var: f64, x: &[f64]) -> (Prediction, DVector<f64>) {
        assert_eq!(x.len(), self.params.dim(), "query dimension mismatch");
        match &self.chol {
            None => (
                Prediction {
                    mean: self.prior_mean,
                    variance: prior_var,
                },
                DVector::zeros(0),
            ),
            Some(chol) => {
                let k = self.cross_vector(kernel, x);
                let mean = self.prior_mean + k.dot(&self.alpha);
                let w = chol.solve_lower(&k);
                let variance = (prior_var - w.norm_squared()).max(0.0);
                (Prediction { mean, variance }, w)
            }
        }
    }

    /// Posterior of the latent objective `f` at `x`.
    pub fn predict_f(&self, x: &[f64]) -> Prediction {
        self.predict_with(&self.kernels.f, self.kernels.f.amplitude, x).0
    }

    /// Posterior of the robust objective `g` at `x`.
    pub fn predict_g(&self, x: &[f64]) -> Prediction {
        self.predict_with(&self.kernels.gf, self.kernels.g.amplitude, x).0
    }

    /// Joint posterior of `(f(x), g(x))`.
    pub fn predict_joint(&self, x: &[f64]) -> JointPrediction {
        let (f, wf) = self.predict_with(&self.kernels.f, self.kernels.f.amplitude, x);
        let (g, wg) = self.predict_with(&self.kernels.gf, self.kernels.g.amplitude, x);
        // prior Cov(f(x), g(x)) = k_gf(x, x)
        let cov_fg = if self.is_empty() {
            self.kernels.gf.amplitude
        } else {
            self.kernels.gf.amplitude - wf.dot(&wg)
        };
        JointPrediction {
            f,
            g,
            cov_fg,
            whitened_gf: wg,
        }
    }

    /// `(y - prior_mean)`
    pub(crate) fn centered_targets(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.len(),
            self.data.targets().iter().map(|y| y - self.prior_mean),
        )
    }
}

/// `k(X, X) + noise * I`
pub(crate) fn gram(kernel: &ScaledSe, inputs: &[Vec<f64>], noise: f64) -> DMatrix<f64> {
    let n = inputs.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = kernel.eval(&inputs[i], &inputs[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
        k[(i, i)] += noise;
    }
    k
}

pub(crate) fn cross_gram(kernel: &ScaledSe, a: &[Vec<f64>], b: &[Vec<f64>]) -> DMatrix<f64> {
    DMatrix::from_fn(a.len(), b.len(), |i, j| kernel.eval(&a[i], &b[j]))
}

/// Log-normal prior on each lengthscale, expressed as a normal density on
/// `ln l_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct LengthscalePrior {
    pub log_mean: Vec<f64>,
    pub log_std: f64,
}

impl LengthscalePrior {
    /// Centers dimension `j` at `2 sigma_x,j`, or at a tenth of the domain
    /// width when that dimension carries no input noise.
    pub fn from_noise(noise: &InputNoise, domain: &Bounds) -> Self {
        let log_mean = noise
            .std()
            .iter()
            .enumerate()
            .map(|(j, s)| {
                if *s > 0.0 {
                    (2.0 * s).ln()
                } else {
                    (0.1 * domain.width(j)).ln()
                }
            })
            .collect();
        Self {
            log_mean,
            log_std: 1.0,
        }
    }

    fn log_density(&self, log_len: &[f64]) -> (f64, Vec<f64>) {
        let norm = -(self.log_std * (2.0 * std::f64::consts::PI).sqrt()).ln();
        let mut value = 0.0;
        let mut grad = Vec::with_capacity(log_len.len());
        for (t, m) in log_len.iter().zip(&self.log_mean) {
            let z = (t - m) / self.log_std;
            value += norm - 0.5 * z * z;
            grad.push(-z / self.log_std);
        }
        (value, grad)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.log_mean
            .iter()
            .map(|m| (m + self.log_std * rng.sample::<f64, _>(StandardNormal)).exp())
            .collect()
    }
}

/// Log marginal likelihood, lengthscale log-prior and their gradients with
/// respect to `[ln s^2, ln l_1, .., ln l_d, ln sigma_eps^2]`.
#[derive(Debug, Clone)]
pub struct LogEvidence {
    pub lml: f64,
    pub lml_gradient: Vec<f64>,
    pub log_prior: f64,
    pub log_prior_gradient: Vec<f64>,
}

impl LogEvidence {
    pub fn total(&self) -> f64 {
        self.lml + self.log_prior
    }

    pub fn total_gradient(&self) -> Vec<f64> {
        self.lml_gradient
            .iter()
            .zip(&self.log_prior_gradient)
            .map(|(a, b)| a + b)
            .collect()
    }
}

/// `-1/2 y^T K^{-1} y - 1/2 ln|K| - n/2 ln 2 pi` plus the lengthscale
/// hyperprior, with analytic gradients.
pub fn log_marginal_likelihood(model: &GpModel, prior: &LengthscalePrior) -> Result<LogEvidence> {
    let n = model.len();
    if n == 0 {
        return Err(invalid("log marginal likelihood needs at least one observation"));
    }
    let chol = model.chol.as_ref().expect("non-empty model is factorized");
    let y = model.centered_targets();
    let alpha = &model.alpha;
    let lml = -0.5 * y.dot(alpha)
        - 0.5 * chol.log_det()
        - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();

    let kinv = chol.inverse();
    // W = alpha alpha^T - K^{-1}; dL/dtheta = 1/2 tr(W dK/dtheta)
    let w = alpha * alpha.transpose() - &kinv;
    let d = model.params.dim();
    let inputs = model.data.inputs();
    let kf = gram(&model.kernels.f, inputs, 0.0);

    let mut grad = vec![0.0; d + 2];
    // signal variance: dK = K_f + jitter I (jitter scales with s^2)
    let mut g0 = 0.0;
    for i in 0..n {
        for j in 0..n {
            g0 += w[(i, j)] * kf[(i, j)];
        }
        g0 += w[(i, i)] * chol.jitter;
    }
    grad[0] = 0.5 * g0;
    for (dim, l) in model.params.lengthscales.iter().enumerate() {
        let l2 = l * l;
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                let diff = inputs[i][dim] - inputs[j][dim];
                acc += w[(i, j)] * kf[(i, j)] * diff * diff / l2;
            }
        }
        grad[1 + dim] = 0.5 * acc;
    }
    grad[d + 1] = 0.5 * model.params.noise_variance * w.trace();

    let log_len: Vec<f64> = model.params.lengthscales.iter().map(|l| l.ln()).collect();
    let (log_prior, prior_grad) = prior.log_density(&log_len);
    let mut log_prior_gradient = vec![0.0; d + 2];
    log_prior_gradient[1..=d].copy_from_slice(&prior_grad);

    Ok(LogEvidence {
        lml,
        lml_gradient: grad,
        log_prior,
        log_prior_gradient,
    })
}

/// Settings for [`fit_hyperparameters`].
#[derive(Debug, Clone)]
pub struct FitOptions {
    pub restarts: usize,
    pub max_iter: usize,
    pub seed: u64,
    /// Constant prior mean used while fitting.
    pub prior_mean: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            restarts: 5,
            max_iter: 200,
            seed: 0,
            prior_mean: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub params: KernelParams,
    /// Log marginal likelihood plus hyperprior at `params`.
    pub objective: f64,
    /// Set when every restart failed and `params` is the initial guess.
    pub fell_back_to_init: bool,
}

/// Maximizes log marginal likelihood plus the lengthscale hyperprior over
/// all hyperparameters (in log space) with projected BFGS from several
/// restarts. The first restart is `init`; the others draw lengthscales from
/// the hyperprior.
pub fn fit_hyperparameters(
    data: &Dataset,
    noise: &InputNoise,
    init: &KernelParams,
    options: &FitOptions,
) -> Result<FitOutcome> {
    if data.len() < 2 {
        return Err(invalid("hyperparameter fitting needs at least two observations"));
    }
    check_dims(init.dim(), data.dim(), "initial parameters")?;
    let d = data.dim();
    let prior = LengthscalePrior::from_noise(noise, data.domain());
    let centered: Vec<f64> = data.targets().iter().map(|y| y - options.prior_mean).collect();
    let var_y = (centered.iter().map(|v| v * v).sum::<f64>() / centered.len() as f64).max(1e-10);

    let mut lower = vec![(1e-3 * var_y).ln()];
    let mut upper = vec![(1e3 * var_y).ln()];
    for j in 0..d {
        lower.push((1e-3 * data.domain().width(j)).ln());
        upper.push((1e2 * data.domain().width(j)).ln());
    }
    lower.push((1e-8 * var_y).ln());
    upper.push(var_y.ln());

    let evaluate = |theta: &[f64]| -> Option<(f64, Vec<f64>)> {
        let params = KernelParams::from_log_vec(theta).ok()?;
        let model =
            GpModel::with_prior_mean(params, noise.clone(), data.clone(), options.prior_mean).ok()?;
        let ev = log_marginal_likelihood(&model, &prior).ok()?;
        let total = ev.total();
        total.is_finite().then(|| (total, ev.total_gradient()))
    };

    let init_value = evaluate(&init.to_log_vec()).map(|(v, _)| v);

    let mut rng = rng::stream(options.seed, "hyperfit", &[data.len() as u64]);
    let mut best: Option<(Vec<f64>, f64)> = None;
    for restart in 0..options.restarts.max(1) {
        let mut start = init.to_log_vec();
        if restart > 0 {
            let lens = prior.sample(&mut rng);
            for j in 0..d {
                start[1 + j] = lens[j].ln();
            }
            start[0] = (var_y * (0.5 * rng.sample::<f64, _>(StandardNormal)).exp()).ln();
        }
        if let Some((theta, value)) = bfgs_maximize(evaluate, &start, &lower, &upper, options.max_iter) {
            if best.as_ref().map_or(true, |(_, b)| value > *b) {
                best = Some((theta, value));
            }
        }
    }

    match best {
        Some((theta, value)) if init_value.map_or(true, |iv| value >= iv) => Ok(FitOutcome {
            params: KernelParams::from_log_vec(&theta)?,
            objective: value,
            fell_back_to_init: false,
        }),
        Some(_) => Ok(FitOutcome {
            params: init.clone(),
            objective: init_value.expect("guard checked init value"),
            fell_back_to_init: false,
        }),
        None => {
            warn!(
                "all {} hyperparameter restarts failed; keeping the initial parameters",
                options.restarts
            );
            Ok(FitOutcome {
                params: init.clone(),
                objective: init_value.unwrap_or(f64::NEG_INFINITY),
                fell_back_to_init: true,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;

    fn params_1d(sf: f64, l: f64, noise: f64) -> KernelParams {
        KernelParams::new(sf * sf, vec![l], noise).unwrap()
    }

    #[test]
    fn se_kernel_diagonal_and_decay() {
        let p = params_1d(0.5, 0.05, 0.0);
        assert_eq!(se_kernel(&[0.3], &[0.3], &p).unwrap(), 0.25);
        assert_relative_eq!(
            se_kernel(&[0.0], &[0.05], &p).unwrap(),
            0.25 * (-0.5f64).exp(),
            epsilon = 1e-15
        );
        assert_relative_eq!(0.25 * (-0.5f64).exp(), 0.151_632_664_928_158_6, epsilon = 1e-15);
        assert!(se_kernel(&[0.0], &[100.0], &p).unwrap() < 1e-300);
    }

    #[test]
    fn kernels_reject_dimension_mismatch() {
        let p = params_1d(1.0, 1.0, 0.0);
        let noise = InputNoise::zeros(1);
        assert!(matches!(se_kernel(&[0.0, 1.0], &[0.0], &p), Err(Error::InvalidArgument(_))));
        assert!(robust_kernel(&[0.0], &[0.0, 1.0], &p, &noise).is_err());
        assert!(robust_cross_kernel(&[0.0], &[0.0], &p, &InputNoise::zeros(2)).is_err());
    }

    #[test]
    fn zero_input_noise_reduces_to_se() {
        let p = KernelParams::new(0.7, vec![0.2, 0.4], 0.0).unwrap();
        let noise = InputNoise::zeros(2);
        let (a, b) = ([0.1, 0.9], [0.3, 0.2]);
        let k = se_kernel(&a, &b, &p).unwrap();
        assert_eq!(robust_cross_kernel(&a, &b, &p, &noise).unwrap(), k);
        assert_eq!(robust_kernel(&a, &b, &p, &noise).unwrap(), k);
    }

    #[test]
    fn smoothing_contracts_marginal_variance() {
        let p = params_1d(0.5, 0.05, 0.0);
        let noise = InputNoise::from_std(&[0.05]).unwrap();
        let x = [0.4];
        let kf = se_kernel(&x, &x, &p).unwrap();
        let kgf = robust_cross_kernel(&x, &x, &p, &noise).unwrap();
        let kg = robust_kernel(&x, &x, &p, &noise).unwrap();
        assert!(kg < kgf && kgf < kf);
    }

    #[test]
    fn cross_kernel_is_symmetric_under_swap() {
        let p = KernelParams::new(1.3, vec![0.2, 0.3], 0.0).unwrap();
        let noise = InputNoise::from_std(&[0.1, 0.05]).unwrap();
        let (a, b) = ([0.1, 0.5], [0.4, 0.45]);
        assert_eq!(
            robust_cross_kernel(&a, &b, &p, &noise).unwrap(),
            robust_cross_kernel(&b, &a, &p, &noise).unwrap()
        );
    }

    #[test]
    fn gaussian_entropy_values() {
        let unit = 1.0 / (2.0 * std::f64::consts::PI * std::f64::consts::E);
        assert!(gaussian_entropy(unit).unwrap().abs() < 1e-15);
        assert_relative_eq!(gaussian_entropy(1.0).unwrap(), 1.418_938_533_204_672_7, epsilon = 1e-14);
        assert!(gaussian_entropy(2.0).unwrap() > gaussian_entropy(1.0).unwrap());
        assert!(matches!(gaussian_entropy(0.0), Err(Error::DegenerateDistribution(_))));
        assert!(gaussian_entropy(-1.0).is_err());
    }

    #[test]
    fn empty_model_returns_prior() {
        let p = params_1d(0.5, 0.05, 1e-4);
        let noise = InputNoise::from_std(&[0.05]).unwrap();
        let model = GpModel::new(p.clone(), noise.clone(), Dataset::new(Bounds::unit(1))).unwrap();
        let pf = model.predict_f(&[0.3]);
        assert_eq!((pf.mean, pf.variance), (0.0, 0.25));
        let pg = model.predict_g(&[0.3]);
        assert_eq!(pg.mean, 0.0);
        assert_eq!(pg.variance, robust_kernel(&[0.3], &[0.3], &p, &noise).unwrap());
    }

    #[test]
    fn interpolates_training_points() {
        let p = params_1d(1.0, 0.2, 1e-12);
        let data = Dataset::from_points(
            Bounds::unit(1),
            vec![vec![0.1], vec![0.5], vec![0.8]],
            vec![0.3, -1.0, 0.7],
        )
        .unwrap();
        let model = GpModel::new(p, InputNoise::zeros(1), data).unwrap();
        let pr = model.predict_f(&[0.5]);
        assert!((pr.mean + 1.0).abs() < 1e-5);
        assert!(pr.variance <= 1e-6);
    }

    #[test]
    fn scalar_lml() {
        let p = params_1d(0.8, 0.3, 0.01);
        let data = Dataset::from_points(Bounds::unit(1), vec![vec![0.4]], vec![0.0]).unwrap();
        let model = GpModel::new(p, InputNoise::zeros(1), data.clone()).unwrap();
        let prior = LengthscalePrior::from_noise(model.noise(), data.domain());
        let ev = log_marginal_likelihood(&model, &prior).unwrap();
        let k = 0.64 + 0.01 + model.jitter();
        let expected = -0.5 * k.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln();
        assert_relative_eq!(ev.lml, expected, epsilon = 1e-12);
    }

    #[test]
    fn duplicate_points_keep_lml_finite() {
        let p = params_1d(1.0, 0.2, 1e-10);
        let data = Dataset::from_points(
            Bounds::unit(1),
            vec![vec![0.3], vec![0.6], vec![0.3]],
            vec![0.5, 0.1, 0.5],
        )
        .unwrap();
        let model = GpModel::new(p, InputNoise::zeros(1), data.clone()).unwrap();
        let prior = LengthscalePrior::from_noise(model.noise(), data.domain());
        assert!(log_marginal_likelihood(&model, &prior).unwrap().lml.is_finite());
    }

    #[test]
    fn fit_terminates_on_identical_inputs() {
        let data = Dataset::from_points(
            Bounds::unit(1),
            vec![vec![0.5], vec![0.5]],
            vec![1.0, 1.0],
        )
        .unwrap();
        let init = params_1d(1.0, 0.1, 1e-3);
        let out = fit_hyperparameters(&data, &InputNoise::zeros(1), &init, &FitOptions::default());
        assert!(out.is_ok());
    }

    #[test]
    fn fit_never_decreases_objective() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let xs: Vec<Vec<f64>> = (0..12).map(|_| vec![rng.gen::<f64>()]).collect();
        let ys: Vec<f64> = xs.iter().map(|x| (7.0 * x[0]).sin()).collect();
        let data = Dataset::from_points(Bounds::unit(1), xs, ys).unwrap();
        let noise = InputNoise::from_std(&[0.02]).unwrap();
        let init = params_1d(1.0, 0.15, 1e-3);
        let opts = FitOptions::default();
        let first = fit_hyperparameters(&data, &noise, &init, &opts).unwrap();
        let again = fit_hyperparameters(&data, &noise, &first.params, &opts).unwrap();
        assert!(again.objective >= first.objective - 1e-9);
        let prior = LengthscalePrior::from_noise(&noise, data.domain());
        let m0 = GpModel::new(init, noise.clone(), data.clone()).unwrap();
        assert!(first.objective >= log_marginal_likelihood(&m0, &prior).unwrap().total());
    }
}
