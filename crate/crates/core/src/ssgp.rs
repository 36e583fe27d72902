//! Sparse-spectrum approximation of GP posterior samples.
//!
//! A sample is `f(x) = c + sum_i a_i phi_i(x)` with random cosine features
//! `phi_i(x) = s cos(w_i^T x + b_i)`, `s = sqrt(2 sigma_f^2 / M)`. Smoothing a
//! cosine with Gaussian input noise only rescales its amplitude by
//! `exp(-1/2 sum_j w_ij^2 sigma_xj^2)`, so every sample of `f` comes with an
//! exact sample of the robust objective `g`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::domain::Bounds;
use crate::error::{check_dims, invalid, Result};
use crate::gp::{Dataset, GpModel, InputNoise, KernelParams};
use crate::linalg::JitteredCholesky;
use crate::rng::{self, StreamRng};
use crate::stats::percentile_sorted;

/// Random Fourier features of the squared-exponential kernel.
#[derive(Debug, Clone)]
pub struct SpectralFeatures {
    /// `M x d`, row `i` is `w_i ~ N(0, diag(1 / l^2))`.
    frequencies: DMatrix<f64>,
    phases: Vec<f64>,
    amplitude: f64,
}

/// Draws `m` features for the SE kernel with the given parameters.
pub fn draw_features<R: Rng + ?Sized>(params: &KernelParams, m: usize, rng: &mut R) -> Result<SpectralFeatures> {
    if m == 0 {
        return Err(invalid("feature count must be at least one"));
    }
    let d = params.dim();
    let mut frequencies = DMatrix::zeros(m, d);
    let mut phases = Vec::with_capacity(m);
    for i in 0..m {
        for (j, l) in params.lengthscales().iter().enumerate() {
            frequencies[(i, j)] = rng.sample::<f64, _>(StandardNormal) / l;
        }
        phases.push(rng.gen::<f64>() * 2.0 * PI);
    }
    Ok(SpectralFeatures {
        frequencies,
        phases,
        amplitude: (2.0 * params.signal_variance() / m as f64).sqrt(),
    })
}

impl SpectralFeatures {
    /// Assembles features from explicit frequencies (rows) and phases.
    pub fn from_parts(frequencies: DMatrix<f64>, phases: Vec<f64>, amplitude: f64) -> Result<Self> {
        if frequencies.nrows() != phases.len() || phases.is_empty() {
            return Err(invalid("need one phase per frequency row"));
        }
        Ok(Self {
            frequencies,
            phases,
            amplitude,
        })
    }

    pub fn len(&self) -> usize {
        self.phases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phases.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.frequencies.ncols()
    }

    pub fn frequencies(&self) -> &DMatrix<f64> {
        &self.frequencies
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    #[inline]
    fn arg(&self, i: usize, x: &[f64]) -> f64 {
        let mut t = self.phases[i];
        for (j, xj) in x.iter().enumerate() {
            t += self.frequencies[(i, j)] * xj;
        }
        t
    }

    /// Feature vector `phi(x)`.
    pub fn eval(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_fn(self.len(), |i, _| self.amplitude * self.arg(i, x).cos())
    }

    /// `n x M` design matrix.
    pub fn design(&self, inputs: &[Vec<f64>]) -> DMatrix<f64> {
        DMatrix::from_fn(inputs.len(), self.len(), |r, i| {
            self.amplitude * self.arg(i, &inputs[r]).cos()
        })
    }
}

/// Per-feature amplitude factors `exp(-1/2 sum_j w_ij^2 sigma_xj^2)`.
pub fn robust_scale(features: &SpectralFeatures, noise: &InputNoise) -> Result<Vec<f64>> {
    check_dims(features.dim(), noise.dim(), "input noise")?;
    Ok((0..features.len())
        .map(|i| {
            let q: f64 = noise
                .variances()
                .iter()
                .enumerate()
                .map(|(j, v)| features.frequencies[(i, j)].powi(2) * v)
                .sum();
            (-0.5 * q).exp()
        })
        .collect())
}

/// Gaussian posterior over feature weights, `N(A^{-1} Phi^T (y - c), sigma_eps^2 A^{-1})`.
#[derive(Debug, Clone)]
pub struct WeightPosterior {
    mean: DVector<f64>,
    /// Cholesky factor of `A = Phi^T Phi + sigma_eps^2 I`.
    chol: JitteredCholesky,
    noise_std: f64,
    offset: f64,
}

/// Posterior over weights given data centered at `offset`.
pub fn weight_posterior(
    features: &SpectralFeatures,
    data: &Dataset,
    noise_variance: f64,
    offset: f64,
) -> Result<WeightPosterior> {
    check_dims(features.dim(), data.dim(), "dataset")?;
    if !(noise_variance > 0.0) {
        return Err(invalid("weight posterior needs a positive observation noise variance"));
    }
    let m = features.len();
    let phi = features.design(data.inputs());
    let mut a = phi.transpose() * &phi;
    for i in 0..m {
        a[(i, i)] += noise_variance;
    }
    let scale = (a.trace() / m as f64).max(noise_variance);
    let chol = JitteredCholesky::new(&a, scale)?;
    let y = DVector::from_iterator(data.len(), data.targets().iter().map(|t| t - offset));
    let mean = chol.solve(&(phi.transpose() * y));
    Ok(WeightPosterior {
        mean,
        chol,
        noise_std: noise_variance.sqrt(),
        offset,
    })
}

impl WeightPosterior {
    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    /// One weight draw `a = mean + sigma_eps L^{-T} z`.
    pub fn sample_weights<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let z = DVector::from_fn(self.mean.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
        &self.mean + self.chol.solve_upper(&z) * self.noise_std
    }
}

/// One sampled function in the sparse-spectrum basis, evaluated either
/// raw (`f`) or smoothed (`g`).
#[derive(Debug, Clone)]
pub struct SampledFunction<'a> {
    features: &'a SpectralFeatures,
    /// `s * a_i`
    raw: Vec<f64>,
    /// `s * a_i * scale_i`
    smoothed: Vec<f64>,
    offset: f64,
}

impl<'a> SampledFunction<'a> {
    pub fn new(features: &'a SpectralFeatures, weights: &[f64], scales: &[f64], offset: f64) -> Result<Self> {
        check_dims(features.len(), weights.len(), "weights")?;
        check_dims(features.len(), scales.len(), "robust scales")?;
        let raw: Vec<f64> = weights.iter().map(|a| a * features.amplitude).collect();
        let smoothed = raw.iter().zip(scales).map(|(r, s)| r * s).collect();
        Ok(Self {
            features,
            raw,
            smoothed,
            offset,
        })
    }

    pub fn dim(&self) -> usize {
        self.features.dim()
    }

    fn eval_with(&self, coef: &[f64], x: &[f64]) -> f64 {
        let mut v = self.offset;
        for (i, c) in coef.iter().enumerate() {
            v += c * self.features.arg(i, x).cos();
        }
        v
    }

    /// Unsmoothed sample `f(x)`.
    pub fn value_f(&self, x: &[f64]) -> f64 {
        self.eval_with(&self.raw, x)
    }

    /// Smoothed sample `g(x)`.
    pub fn value(&self, x: &[f64]) -> f64 {
        self.eval_with(&self.smoothed, x)
    }

    /// Value, gradient and Hessian of the smoothed sample.
    pub fn value_grad_hess(&self, x: &[f64]) -> (f64, DVector<f64>, DMatrix<f64>) {
        let d = self.dim();
        let mut v = self.offset;
        let mut g = DVector::zeros(d);
        let mut h = DMatrix::zeros(d, d);
        for (i, c) in self.smoothed.iter().enumerate() {
            let t = self.features.arg(i, x);
            let (s, co) = t.sin_cos();
            v += c * co;
            for j in 0..d {
                let wj = self.features.frequencies[(i, j)];
                g[j] -= c * s * wj;
                for k in 0..=j {
                    let hv = -c * co * wj * self.features.frequencies[(i, k)];
                    h[(j, k)] += hv;
                }
            }
        }
        for j in 0..d {
            for k in 0..j {
                h[(k, j)] = h[(j, k)];
            }
        }
        (v, g, h)
    }
}

/// Settings for maximizing a sampled function over a box.
#[derive(Debug, Clone)]
pub struct MaximizeOptions {
    /// Random probes per dimension; the best probe seeds one local start.
    pub probes_per_dim: usize,
    /// Additional local starts drawn uniformly in the box.
    pub uniform_starts: usize,
    pub max_iter: usize,
}

impl Default for MaximizeOptions {
    fn default() -> Self {
        Self {
            probes_per_dim: 100,
            uniform_starts: 10,
            max_iter: 200,
        }
    }
}

/// Projected Newton ascent with a gradient-step fallback.
pub(crate) fn local_ascent(sample: &SampledFunction<'_>, domain: &Bounds, start: Vec<f64>, max_iter: usize) -> (Vec<f64>, f64) {
    let widths: Vec<f64> = (0..domain.dim()).map(|j| domain.width(j)).collect();
    let max_len = 0.1 * widths.iter().cloned().fold(0.0, f64::max);
    let mut x = start;
    let (mut fx, mut g, mut h) = sample.value_grad_hess(&x);
    for _ in 0..max_iter {
        // coordinates pinned at a face with the gradient pointing outward stay fixed
        let free: Vec<usize> = (0..x.len())
            .filter(|&j| !(x[j] <= domain.lower()[j] && g[j] < 0.0) && !(x[j] >= domain.upper()[j] && g[j] > 0.0))
            .collect();
        if free.is_empty() {
            break;
        }
        let g_free = DVector::from_fn(free.len(), |a, _| g[free[a]]);
        let neg_h = DMatrix::from_fn(free.len(), free.len(), |a, b| -h[(free[a], free[b])]);
        let embed = |v: DVector<f64>| {
            let mut out = DVector::zeros(x.len());
            for (a, &j) in free.iter().enumerate() {
                out[j] = v[a];
            }
            out
        };
        let newton = neg_h.cholesky().map(|c| embed(c.solve(&g_free)));
        let gradient = embed(g_free);
        let mut moved = false;
        let directions: Vec<DVector<f64>> = match newton {
            Some(p) => vec![p, gradient],
            None => vec![gradient],
        };
        for dir in directions {
            let norm = dir.norm();
            if norm == 0.0 {
                continue;
            }
            // cap the first trial at a tenth of the widest side
            let mut t = (max_len / norm).min(1.0);
            for _ in 0..30 {
                let mut trial: Vec<f64> = x.iter().zip(dir.iter()).map(|(a, b)| a + t * b).collect();
                domain.project(&mut trial);
                let ft = sample.value(&trial);
                if ft > fx {
                    let (f2, g2, h2) = sample.value_grad_hess(&trial);
                    let gain = f2 - fx;
                    let step = x.iter().zip(&trial).zip(&widths).map(|((a, b), w)| (a - b).abs() / w).fold(0.0, f64::max);
                    x = trial;
                    fx = f2;
                    g = g2;
                    h = h2;
                    moved = gain > 1e-10 * (1.0 + fx.abs()) && step > 1e-8;
                    break;
                }
                t *= 0.5;
            }
            if moved {
                break;
            }
        }
        if !moved {
            break;
        }
    }
    (x, fx)
}

/// Maximizes the smoothed sample over `domain` by multistart local ascent.
pub fn maximize_sample<R: Rng + ?Sized>(
    sample: &SampledFunction<'_>,
    domain: &Bounds,
    options: &MaximizeOptions,
    rng: &mut R,
) -> (Vec<f64>, f64) {
    let d = domain.dim();
    let mut best_probe = domain.center();
    let mut best_probe_value = sample.value(&best_probe);
    for _ in 0..options.probes_per_dim * d {
        let x = domain.sample_uniform(rng);
        let v = sample.value(&x);
        if v > best_probe_value {
            best_probe_value = v;
            best_probe = x;
        }
    }
    let mut best = local_ascent(sample, domain, best_probe.clone(), options.max_iter);
    if best.1 < best_probe_value {
        best = (best_probe, best_probe_value);
    }
    for _ in 0..options.uniform_starts {
        let start = domain.sample_uniform(rng);
        let cand = local_ascent(sample, domain, start, options.max_iter);
        if cand.1 > best.1 {
            best = cand;
        }
    }
    best
}

/// Robust max-value samples `g*_k` in ascending order.
#[derive(Debug, Clone, PartialEq)]
pub struct MaxValueSet {
    values: Vec<f64>,
    pool_size: usize,
}

impl MaxValueSet {
    pub fn from_values(mut values: Vec<f64>, pool_size: usize) -> Result<Self> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("max values must be finite and non-empty"));
        }
        values.sort_by(f64::total_cmp);
        Ok(Self { values, pool_size })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn pool_size(&self) -> usize {
        self.pool_size
    }
}

/// Percentile levels `25 + 50 k / (K - 1)`, or the median when `K = 1`.
pub fn percentile_levels(k: usize) -> Vec<f64> {
    if k == 1 {
        return vec![50.0];
    }
    (0..k).map(|i| 25.0 + 50.0 * i as f64 / (k - 1) as f64).collect()
}

/// Sparse-spectrum posterior of a [`GpModel`], ready for drawing samples.
#[derive(Debug, Clone)]
pub struct SsgpPosterior {
    features: SpectralFeatures,
    weights: WeightPosterior,
    scales: Vec<f64>,
}

impl SsgpPosterior {
    /// Draws `m` features for the model's kernel and conditions the weights
    /// on its data. `smoothing` sets the robust scales (use zero noise for
    /// plain, non-robust samples).
    pub fn new<R: Rng + ?Sized>(model: &GpModel, smoothing: &InputNoise, m: usize, rng: &mut R) -> Result<Self> {
        let features = draw_features(model.params(), m, rng)?;
        Self::from_features(model, smoothing, features)
    }

    pub fn from_features(model: &GpModel, smoothing: &InputNoise, features: SpectralFeatures) -> Result<Self> {
        let weights = weight_posterior(
            &features,
            model.data(),
            model.params().noise_variance().max(1e-10 * model.params().signal_variance()),
            model.prior_mean(),
        )?;
        let scales = robust_scale(&features, smoothing)?;
        Ok(Self {
            features,
            weights,
            scales,
        })
    }

    pub fn features(&self) -> &SpectralFeatures {
        &self.features
    }

    pub fn weights(&self) -> &WeightPosterior {
        &self.weights
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> SampledFunction<'_> {
        let a = self.weights.sample_weights(rng);
        self.with_weights(a.as_slice())
    }

    pub fn with_weights(&self, weights: &[f64]) -> SampledFunction<'_> {
        SampledFunction::new(&self.features, weights, &self.scales, self.weights.offset)
            .expect("weights drawn from this posterior")
    }
}

/// Settings for [`sample_max_values`].
#[derive(Debug, Clone)]
pub struct MaxValueOptions {
    /// Number of returned values `K`.
    pub count: usize,
    /// Number of random features `M`.
    pub features: usize,
    /// Size of the sample pool the percentiles are taken from.
    pub pool_size: usize,
    pub maximize: MaximizeOptions,
}

impl Default for MaxValueOptions {
    fn default() -> Self {
        Self {
            count: 1,
            features: 500,
            pool_size: 100,
            maximize: MaximizeOptions::default(),
        }
    }
}

/// Samples robust max-values: draws `pool_size` posterior functions, smooths
/// and maximizes each, then returns the pool values at `K` evenly spaced
/// percentiles between the 25th and the 75th.
pub fn sample_max_values(
    model: &GpModel,
    smoothing: &InputNoise,
    options: &MaxValueOptions,
    seed: u64,
) -> Result<MaxValueSet> {
    if options.count == 0 || options.pool_size == 0 {
        return Err(invalid("max-value count and pool size must be positive"));
    }
    let mut rng: StreamRng = rng::stream(seed, "max-values", &[]);
    let posterior = SsgpPosterior::new(model, smoothing, options.features, &mut rng)?;
    max_values_from(&posterior, model.data().domain(), options, &mut rng)
}

/// Max-value sampling on an existing sparse-spectrum posterior.
pub fn max_values_from<R: Rng + ?Sized>(
    posterior: &SsgpPosterior,
    domain: &Bounds,
    options: &MaxValueOptions,
    rng: &mut R,
) -> Result<MaxValueSet> {
    if options.count == 0 || options.pool_size == 0 {
        return Err(invalid("max-value count and pool size must be positive"));
    }
    let mut pool: Vec<f64> = (0..options.pool_size)
        .map(|_| {
            let s = posterior.sample(rng);
            maximize_sample(&s, domain, &options.maximize, rng).1
        })
        .collect();
    pool.sort_by(f64::total_cmp);
    let values = percentile_levels(options.count)
        .into_iter()
        .map(|p| percentile_sorted(&pool, p))
        .collect();
    MaxValueSet::from_values(values, options.pool_size)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::gauss_hermite;
    use rand::SeedableRng;

    #[test]
    fn robust_scale_closed_form() {
        let f = SpectralFeatures::from_parts(DMatrix::from_element(1, 1, 2.0), vec![0.0], 1.0).unwrap();
        let s = robust_scale(&f, &InputNoise::from_std(&[0.5]).unwrap()).unwrap();
        assert!((s[0] - (-0.5f64).exp()).abs() < 1e-15);
        assert!((s[0] - 0.606_530_659_712_633_4).abs() < 1e-15);
        let ones = robust_scale(&f, &InputNoise::zeros(1)).unwrap();
        assert_eq!(ones, vec![1.0]);
    }

    #[test]
    fn features_are_deterministic_and_collapse_for_long_lengthscales() {
        let p = KernelParams::new(1.0, vec![1e12], 0.0).unwrap();
        let mut r1 = rng::from_seed(4);
        let mut r2 = rng::from_seed(4);
        let a = draw_features(&p, 50, &mut r1).unwrap();
        let b = draw_features(&p, 50, &mut r2).unwrap();
        assert_eq!(a.frequencies(), b.frequencies());
        assert_eq!(a.phases(), b.phases());
        assert!(a.frequencies().iter().all(|w| w.abs() < 1e-10));
    }

    #[test]
    fn features_reconstruct_kernel() {
        // E[phi(a)^T phi(b)] = k(a, b); for M = 2000 the estimate is close.
        let p = KernelParams::new(1.0, vec![0.1], 0.0).unwrap();
        let f = draw_features(&p, 2000, &mut rng::from_seed(11)).unwrap();
        let mut worst: f64 = 0.0;
        for i in 0..=50 {
            let x = i as f64 / 50.0;
            let est = f.eval(&[0.0]).dot(&f.eval(&[x]));
            let exact = (-0.5 * x * x / 0.01).exp();
            worst = worst.max((est - exact).abs());
        }
        assert!(worst <= 0.05, "{worst}");
    }

    #[test]
    fn smoothed_sample_matches_quadrature() {
        let p = KernelParams::new(0.25, vec![0.05], 0.0).unwrap();
        let noise = InputNoise::from_std(&[0.05]).unwrap();
        let mut r = rng::from_seed(2);
        let f = draw_features(&p, 200, &mut r).unwrap();
        let scales = robust_scale(&f, &noise).unwrap();
        let w: Vec<f64> = (0..200).map(|_| r.sample(StandardNormal)).collect();
        let s = SampledFunction::new(&f, &w, &scales, 0.3).unwrap();
        let (z, wt) = gauss_hermite(120);
        for x in [0.1, 0.47, 0.9] {
            let q: f64 = z.iter().zip(&wt).map(|(z, w)| w * s.value_f(&[x + 0.05 * z])).sum();
            assert!((q - s.value(&[x])).abs() < 1e-8);
        }
    }

    #[test]
    fn constant_sample_maximum() {
        let f = SpectralFeatures::from_parts(DMatrix::zeros(1, 1), vec![0.0], 1.0).unwrap();
        let s = SampledFunction::new(&f, &[1.0], &[1.0], 0.0).unwrap();
        let (_, v) = maximize_sample(&s, &Bounds::unit(1), &MaximizeOptions::default(), &mut rng::from_seed(0));
        assert_eq!(v, 1.0);
    }

    #[test]
    fn maximize_matches_dense_grid() {
        let p = KernelParams::new(0.25, vec![0.05], 0.0).unwrap();
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let f = draw_features(&p, 500, &mut r).unwrap();
        let w: Vec<f64> = (0..500).map(|_| r.sample(StandardNormal)).collect();
        let s = SampledFunction::new(&f, &w, &vec![1.0; 500], 0.0).unwrap();
        let grid = (0..=10_000)
            .map(|i| s.value(&[i as f64 / 10_000.0]))
            .fold(f64::NEG_INFINITY, f64::max);
        let (x, v) = maximize_sample(&s, &Bounds::unit(1), &MaximizeOptions::default(), &mut r);
        assert!((v - grid).abs() <= 1e-6 && v >= grid - 1e-12, "{v} vs {grid}");
        if x[0] > 1e-9 && x[0] < 1.0 - 1e-9 {
            assert!(s.value_grad_hess(&x).1.norm() <= 1e-6);
        }
    }

    #[test]
    fn percentile_grid() {
        assert_eq!(percentile_levels(1), vec![50.0]);
        assert_eq!(percentile_levels(3), vec![25.0, 50.0, 75.0]);
    }
}
