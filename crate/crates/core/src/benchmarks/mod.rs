//! Test objectives and their robust optima.
//!
//! Every [`Objective`] bundles a latent function `f`, its domain, the input
//! noise used to define the robust objective `g(x) = E[f(x + xi)]`, and the
//! observation noise added by [`Objective::observe`].

pub mod functions;
pub mod gravity;
pub mod ground_truth;

use std::fmt;

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::domain::Bounds;
use crate::error::{check_dims, invalid, Error, Result};
use crate::gp::{InputNoise, KernelParams};
use crate::rng;
use crate::ssgp::{draw_features, robust_scale, SpectralFeatures};
use crate::stats::gauss_hermite;

pub use gravity::GravityScenario;
pub use ground_truth::{ground_truth_robust_optimum, GroundTruthOptions, RobustOptimum};

/// Observation noise standard deviation of the synthetic and gravity benchmarks.
pub const BENCHMARK_OBSERVATION_STD: f64 = 0.01;

/// Settings of the within-model GP-sample objectives.
pub const GP_SAMPLE_SIGNAL_STD: f64 = 0.5;
pub const GP_SAMPLE_LENGTHSCALE: f64 = 0.05;
pub const GP_SAMPLE_INPUT_STD: f64 = 0.05;
pub const GP_SAMPLE_OBSERVATION_STD: f64 = 1e-3;
pub const GP_SAMPLE_FEATURES: usize = 2000;

/// A fixed draw from the SSGP prior, `f(x) = sum_i a_i phi_i(x)`.
#[derive(Debug, Clone)]
pub struct GpSample {
    features: SpectralFeatures,
    weights: DVector<f64>,
    scaled_weights: DVector<f64>,
    params: KernelParams,
    seed: u64,
}

impl GpSample {
    pub fn draw(params: KernelParams, noise: &InputNoise, m: usize, seed: u64) -> Result<Self> {
        let mut r = rng::stream(seed, "gp-sample", &[]);
        let features = draw_features(&params, m, &mut r)?;
        let weights = DVector::from_fn(m, |_, _| r.sample::<f64, _>(StandardNormal));
        let scales = robust_scale(&features, noise)?;
        let scaled_weights = DVector::from_fn(m, |i, _| weights[i] * scales[i]);
        Ok(Self { features, weights, scaled_weights, params, seed })
    }

    /// The kernel hyperparameters the sample was drawn with.
    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.features.eval(x).dot(&self.weights)
    }

    /// Exact smoothed value.
    pub fn robust_value(&self, x: &[f64]) -> f64 {
        self.features.eval(x).dot(&self.scaled_weights)
    }
}

#[derive(Debug, Clone)]
pub enum Function {
    SinLinear,
    Rkhs,
    Gmm,
    Polynomial,
    Hartmann3,
    Hartmann6,
    Constant(f64),
    GpSample(Box<GpSample>),
    /// Controls are `(alpha0 [deg], v0)`.
    Gravity(Box<GravityScenario>),
}

#[derive(Debug, Clone)]
pub struct Objective {
    name: String,
    domain: Bounds,
    input_noise: InputNoise,
    observation_std: f64,
    function: Function,
    quadrature_order: usize,
    known_optimum: Option<RobustOptimum>,
}

/// Names accepted by [`Objective::by_name`].
pub const OBJECTIVE_NAMES: [&str; 9] = [
    "sin_linear",
    "rkhs_1d",
    "gmm_2d",
    "polynomial_2d",
    "hartmann_3d",
    "hartmann_6d",
    "gravity",
    "gp_sample",
    "constant",
];

impl Objective {
    pub fn new(
        name: impl Into<String>,
        domain: Bounds,
        input_noise: InputNoise,
        observation_std: f64,
        function: Function,
    ) -> Result<Self> {
        check_dims(domain.dim(), input_noise.dim(), "input noise")?;
        if !(observation_std >= 0.0 && observation_std.is_finite()) {
            return Err(invalid("observation noise must be a finite non-negative std"));
        }
        let quadrature_order = match domain.dim() {
            1 => 64,
            2 => 32,
            3 => 16,
            _ => 6,
        };
        Ok(Self {
            name: name.into(),
            domain,
            input_noise,
            observation_std,
            function,
            quadrature_order,
            known_optimum: None,
        })
    }

    /// Looks up a registered benchmark. `gp_sample` uses seed 0; see
    /// [`Objective::gp_sample`] for other draws.
    pub fn by_name(name: &str) -> Result<Self> {
        let iso = |d: usize, s: f64| InputNoise::from_std(&vec![s; d]);
        let std = BENCHMARK_OBSERVATION_STD;
        match name {
            "sin_linear" => Self::new(name, Bounds::unit(1), iso(1, 0.05)?, std, Function::SinLinear),
            "rkhs_1d" => Self::new(name, Bounds::unit(1), iso(1, 0.03)?, std, Function::Rkhs),
            "gmm_2d" => Self::new(name, Bounds::unit(2), iso(2, 0.1)?, std, Function::Gmm),
            "polynomial_2d" => Self::new(
                name,
                Bounds::new(vec![-0.75, 3.0], vec![-0.25, 4.2])?,
                iso(2, 0.6)?,
                std,
                Function::Polynomial,
            ),
            "hartmann_3d" => Self::new(name, Bounds::unit(3), iso(3, 0.1)?, std, Function::Hartmann3),
            "hartmann_6d" => Self::new(name, Bounds::unit(6), iso(6, 0.1)?, std, Function::Hartmann6),
            "gravity" => Self::gravity(GravityScenario::default()),
            "gp_sample" => Self::gp_sample(0),
            "constant" => Self::new(name, Bounds::unit(1), iso(1, 0.05)?, 0.0, Function::Constant(0.0)),
            other => Err(Error::Config(format!(
                "unknown objective `{other}`; valid names: {}",
                OBJECTIVE_NAMES.join(", ")
            ))),
        }
    }

    pub fn gravity(scenario: GravityScenario) -> Result<Self> {
        scenario.validate()?;
        let domain = scenario.control_bounds()?;
        let mut obj = Self::new(
            "gravity",
            domain,
            InputNoise::from_std(&gravity::CONTROL_NOISE_STD)?,
            BENCHMARK_OBSERVATION_STD,
            Function::Gravity(Box::new(scenario)),
        )?;
        obj.quadrature_order = 24;
        Ok(obj)
    }

    /// One within-model objective: an SSGP prior draw on `[0, 1]`.
    pub fn gp_sample(seed: u64) -> Result<Self> {
        let params = KernelParams::new(
            GP_SAMPLE_SIGNAL_STD.powi(2),
            vec![GP_SAMPLE_LENGTHSCALE],
            GP_SAMPLE_OBSERVATION_STD.powi(2),
        )?;
        let noise = InputNoise::from_std(&[GP_SAMPLE_INPUT_STD])?;
        let sample = GpSample::draw(params, &noise, GP_SAMPLE_FEATURES, seed)?;
        Self::new(
            "gp_sample",
            Bounds::unit(1),
            noise,
            GP_SAMPLE_OBSERVATION_STD,
            Function::GpSample(Box::new(sample)),
        )
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn domain(&self) -> &Bounds {
        &self.domain
    }

    pub fn input_noise(&self) -> &InputNoise {
        &self.input_noise
    }

    pub fn observation_std(&self) -> f64 {
        self.observation_std
    }

    pub fn function(&self) -> &Function {
        &self.function
    }

    pub fn quadrature_order(&self) -> usize {
        self.quadrature_order
    }

    pub fn with_quadrature_order(mut self, order: usize) -> Self {
        self.quadrature_order = order.max(1);
        self
    }

    pub fn with_input_noise(mut self, noise: InputNoise) -> Result<Self> {
        check_dims(self.dim(), noise.dim(), "input noise")?;
        if let Function::GpSample(s) = &mut self.function {
            let scales = robust_scale(&s.features, &noise)?;
            s.scaled_weights = DVector::from_fn(s.weights.len(), |i, _| s.weights[i] * scales[i]);
        }
        self.input_noise = noise;
        self.known_optimum = None;
        Ok(self)
    }

    pub fn with_observation_std(mut self, std: f64) -> Result<Self> {
        if !(std >= 0.0 && std.is_finite()) {
            return Err(invalid("observation noise must be a finite non-negative std"));
        }
        self.observation_std = std;
        Ok(self)
    }

    /// Kernel hyperparameters of a GP-sample objective.
    pub fn true_params(&self) -> Option<&KernelParams> {
        match &self.function {
            Function::GpSample(s) => Some(s.params()),
            _ => None,
        }
    }

    /// Text that identifies the robust objective, used as a cache key.
    pub fn cache_key(&self) -> String {
        let variant = match &self.function {
            Function::Constant(c) => format!("c={}", format_bits(*c)),
            Function::GpSample(s) => format!("seed={};m={}", s.seed, s.weights.len()),
            Function::Gravity(s) => toml::to_string(s.as_ref()).unwrap_or_default(),
            _ => String::new(),
        };
        let noise: Vec<String> = self.input_noise.variances().iter().map(|v| format_bits(*v)).collect();
        let lo: Vec<String> = self.domain.lower().iter().map(|v| format_bits(*v)).collect();
        let hi: Vec<String> = self.domain.upper().iter().map(|v| format_bits(*v)).collect();
        format!(
            "{}|noise={}|lo={}|hi={}|q={}|{}",
            self.name,
            noise.join(","),
            lo.join(","),
            hi.join(","),
            self.quadrature_order,
            variant
        )
    }

    pub fn known_optimum(&self) -> Option<&RobustOptimum> {
        self.known_optimum.as_ref()
    }

    /// Attaches a robust optimum computed by [`ground_truth_robust_optimum`].
    pub fn set_known_optimum(&mut self, optimum: RobustOptimum) -> Result<()> {
        check_dims(self.dim(), optimum.location.len(), "optimum location")?;
        self.known_optimum = Some(optimum);
        Ok(())
    }

    /// `f(x)`; errors outside the domain.
    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        if !self.domain.contains(x) {
            return Err(invalid(format!("{x:?} lies outside the domain of `{}`", self.name)));
        }
        Ok(self.latent(x))
    }

    /// `f(x)` without the domain check; the smoothing integrals reach
    /// outside the box.
    pub fn latent(&self, x: &[f64]) -> f64 {
        match &self.function {
            Function::SinLinear => functions::sin_linear(x[0]),
            Function::Rkhs => functions::rkhs_1d(x[0]),
            Function::Gmm => functions::gmm_2d(x),
            Function::Polynomial => functions::polynomial_2d(x),
            Function::Hartmann3 => functions::hartmann3(x),
            Function::Hartmann6 => functions::hartmann6(x),
            Function::Constant(c) => *c,
            Function::GpSample(s) => s.value(x),
            Function::Gravity(s) => s.objective_unchecked(x[0], x[1]),
        }
    }

    /// `g(x)`: exact for GP samples and constants, tensor Gauss-Hermite otherwise.
    pub fn robust_value(&self, x: &[f64]) -> Result<f64> {
        check_dims(self.dim(), x.len(), "query")?;
        match &self.function {
            Function::Constant(c) => return Ok(*c),
            Function::GpSample(s) => return Ok(s.robust_value(x)),
            _ => {}
        }
        let std = self.input_noise.std();
        let active: Vec<usize> = (0..self.dim()).filter(|&j| std[j] > 0.0).collect();
        if active.is_empty() {
            return Ok(self.latent(x));
        }
        let (nodes, weights) = gauss_hermite(self.quadrature_order);
        let q = nodes.len();
        let mut idx = vec![0usize; active.len()];
        let mut point = x.to_vec();
        let mut total = 0.0;
        loop {
            let mut w = 1.0;
            for (k, &j) in active.iter().enumerate() {
                point[j] = x[j] + std[j] * nodes[idx[k]];
                w *= weights[idx[k]];
            }
            total += w * self.latent(&point);
            let mut k = 0;
            loop {
                if k == idx.len() {
                    return Ok(total);
                }
                idx[k] += 1;
                if idx[k] < q {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
        }
    }

    /// `f(x) + eps` with `eps ~ N(0, observation_std^2)`.
    pub fn observe<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> Result<f64> {
        let f = self.evaluate(x)?;
        Ok(f + self.observation_std * rng.sample::<f64, _>(StandardNormal))
    }
}

fn format_bits(v: f64) -> String {
    format!("{:016x}", v.to_bits())
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (d = {})", self.name, self.dim())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_round_trip() {
        for name in OBJECTIVE_NAMES {
            let o = Objective::by_name(name).unwrap();
            assert_eq!(o.name(), name);
            let c = o.domain().center();
            assert!(o.evaluate(&c).unwrap().is_finite());
        }
        let err = Objective::by_name("branin").unwrap_err().to_string();
        assert!(err.contains("sin_linear") && err.contains("gravity"));
    }

    #[test]
    fn out_of_domain_is_rejected() {
        let o = Objective::by_name("sin_linear").unwrap();
        assert!(o.evaluate(&[1.2]).is_err());
        assert!(o.evaluate(&[0.5, 0.5]).is_err());
        assert!(o.latent(&[1.2]).is_finite());
    }

    #[test]
    fn smoothing_special_cases() {
        let o = Objective::by_name("constant").unwrap();
        assert_eq!(o.robust_value(&[0.3]).unwrap(), 0.0);
        let flat = Objective::by_name("sin_linear")
            .unwrap()
            .with_input_noise(InputNoise::zeros(1))
            .unwrap();
        assert_eq!(flat.robust_value(&[0.4]).unwrap(), flat.latent(&[0.4]));
    }

    #[test]
    fn robust_value_matches_adaptive_quadrature() {
        let s = Objective::by_name("sin_linear").unwrap();
        let g = s.robust_value(&[0.4]).unwrap();
        assert!((g - 0.666_413_800_574_126_1).abs() < 1e-12, "{g}");
    }

    #[test]
    fn gp_sample_is_deterministic_and_smoothing_is_exact() {
        let a = Objective::gp_sample(3).unwrap();
        let b = Objective::gp_sample(3).unwrap();
        let c = Objective::gp_sample(4).unwrap();
        assert_eq!(a.latent(&[0.37]).to_bits(), b.latent(&[0.37]).to_bits());
        assert_ne!(a.latent(&[0.37]), c.latent(&[0.37]));
        let quad = a.clone().with_quadrature_order(64);
        // generic quadrature path on the same function
        let (nodes, weights) = gauss_hermite(64);
        let gh: f64 = nodes.iter().zip(&weights).map(|(z, w)| w * quad.latent(&[0.37 + 0.05 * z])).sum();
        assert!((a.robust_value(&[0.37]).unwrap() - gh).abs() < 1e-10);
        assert_eq!(a.true_params().unwrap().signal_variance(), 0.25);
    }

    #[test]
    fn observation_noise_has_the_right_scale() {
        let o = Objective::by_name("sin_linear").unwrap();
        let mut r = rng::from_seed(1);
        let f = o.evaluate(&[0.3]).unwrap();
        let devs: Vec<f64> = (0..4000).map(|_| o.observe(&[0.3], &mut r).unwrap() - f).collect();
        let sd = crate::stats::variance(&devs).sqrt();
        assert!((sd - 0.01).abs() < 0.001, "{sd}");
    }
}
