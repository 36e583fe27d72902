//! Acquisition functions and their maximization.
//!
//! [`AcquisitionState::prepare`] does all per-iteration work (max-value
//! sampling, EP, rejection sampling) once; [`AcquisitionState::evaluate`]
//! is then cheap and read-only.

pub mod classic;
pub mod kde;
pub mod nes;
pub mod optimize;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::domain::Bounds;
use crate::ep::{ep_truncate, EpOptions, LatentPrior, TruncatedLatents};
use crate::error::{Error, Result};
use crate::gp::{GpModel, InputNoise, Prediction};
use crate::rng;
use crate::ssgp::{max_values_from, MaxValueOptions, MaxValueSet, SsgpPosterior};

pub use classic::{expected_improvement, max_value_entropy, sigma_points, upper_confidence_bound, SigmaPoints, DEFAULT_KAPPA};
pub use kde::kde_entropy;
pub use nes::{nes_ep_value, nes_rs_value, rejection_sample, RejectionOptions, RejectionSamples};
pub use optimize::{optimize_acquisition, OptimizeOptions};

/// Available acquisition functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AcquisitionKind {
    NesEp,
    NesRs,
    Ei,
    Ucb,
    Mes,
    BoUuEi,
    BoUuUcb,
    BoUuMes,
    UnscEi,
}

impl AcquisitionKind {
    pub const ALL: [AcquisitionKind; 9] = [
        Self::NesEp,
        Self::NesRs,
        Self::Ei,
        Self::Ucb,
        Self::Mes,
        Self::BoUuEi,
        Self::BoUuUcb,
        Self::BoUuMes,
        Self::UnscEi,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::NesEp => "nes-ep",
            Self::NesRs => "nes-rs",
            Self::Ei => "ei",
            Self::Ucb => "ucb",
            Self::Mes => "mes",
            Self::BoUuEi => "bo-uu-ei",
            Self::BoUuUcb => "bo-uu-ucb",
            Self::BoUuMes => "bo-uu-mes",
            Self::UnscEi => "unsc-ei",
        }
    }

    pub fn valid_names() -> String {
        Self::ALL.iter().map(|k| k.name()).collect::<Vec<_>>().join(", ")
    }
}

impl fmt::Display for AcquisitionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AcquisitionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('_', "-");
        Self::ALL
            .into_iter()
            .find(|k| k.name() == key)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown acquisition '{s}'; valid names: {}",
                    Self::valid_names()
                ))
            })
    }
}

/// Acquisition choice and its tuning constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AcquisitionSpec {
    pub kind: AcquisitionKind,
    /// Max-value samples `K`.
    pub max_values: usize,
    /// Accepted samples `L` per max-value (NES-RS).
    pub accepted_samples: usize,
    /// Random features `M`.
    pub features: usize,
    /// Max-value pool size.
    pub pool_size: usize,
    pub ucb_beta: f64,
    /// Unscented transform parameter.
    pub kappa: f64,
}

impl Default for AcquisitionSpec {
    fn default() -> Self {
        Self {
            kind: AcquisitionKind::NesEp,
            max_values: 1,
            accepted_samples: 1000,
            features: 500,
            pool_size: 100,
            ucb_beta: 4.0,
            kappa: DEFAULT_KAPPA,
        }
    }
}

impl AcquisitionSpec {
    pub fn new(kind: AcquisitionKind) -> Self {
        Self {
            kind,
            ..Self::default()
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.max_values == 0 || self.accepted_samples < 2 || self.features == 0 || self.pool_size == 0 {
            return Err(Error::Config(
                "max_values, features and pool_size must be >= 1 and accepted_samples >= 2".into(),
            ));
        }
        if !(self.ucb_beta >= 0.0) {
            return Err(Error::Config("ucb_beta must be non-negative".into()));
        }
        if !(self.kappa >= 0.0 && dim as f64 + self.kappa > 0.0) {
            return Err(Error::Config("kappa must be >= 0 with d + kappa > 0".into()));
        }
        Ok(())
    }

    fn max_value_options(&self) -> MaxValueOptions {
        MaxValueOptions {
            count: self.max_values,
            features: self.features,
            pool_size: self.pool_size,
            ..MaxValueOptions::default()
        }
    }
}

/// Which posterior a baseline reads: the latent `f` or the robust `g`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum View {
    F,
    G,
}

impl View {
    fn predict(self, model: &GpModel, x: &[f64]) -> Prediction {
        match self {
            View::F => model.predict_f(x),
            View::G => model.predict_g(x),
        }
    }
}

#[derive(Debug, Clone)]
enum Prepared {
    NesEp {
        max_values: MaxValueSet,
        latents: Vec<TruncatedLatents>,
    },
    NesRs {
        max_values: MaxValueSet,
        posterior: SsgpPosterior,
        samples: Vec<RejectionSamples>,
    },
    Ei {
        view: View,
        incumbent: f64,
    },
    Ucb {
        view: View,
        beta: f64,
    },
    Mes {
        view: View,
        max_values: MaxValueSet,
    },
    Unscented {
        incumbent: f64,
        points: SigmaPoints,
    },
}

/// An acquisition function ready to evaluate for one BO iteration.
#[derive(Debug, Clone)]
pub struct AcquisitionState<'m> {
    model: &'m GpModel,
    kind: AcquisitionKind,
    prepared: Prepared,
}

fn best_mean_at_data(model: &GpModel, view: View) -> f64 {
    model
        .data()
        .inputs()
        .iter()
        .map(|x| view.predict(model, x).mean)
        .fold(f64::NEG_INFINITY, f64::max)
}

fn unscented_mean(model: &GpModel, points: &SigmaPoints, x: &[f64]) -> f64 {
    points
        .offsets
        .iter()
        .zip(&points.weights)
        .map(|(o, w)| {
            let p: Vec<f64> = x.iter().zip(o).map(|(a, b)| a + b).collect();
            w * model.predict_f(&p).mean
        })
        .sum()
}

impl<'m> AcquisitionState<'m> {
    /// Performs the per-iteration precomputation for `spec.kind`.
    pub fn prepare(model: &'m GpModel, spec: &AcquisitionSpec, seed: u64) -> Result<Self> {
        spec.validate(model.data().dim())?;
        let mut rng = rng::stream(seed, "acquisition", &[]);
        let domain = model.data().domain();
        let no_noise = InputNoise::zeros(model.data().dim());
        let prepared = match spec.kind {
            AcquisitionKind::NesEp => {
                let posterior = SsgpPosterior::new(model, model.noise(), spec.features, &mut rng)?;
                let max_values = max_values_from(&posterior, domain, &spec.max_value_options(), &mut rng)?;
                let latents = if model.is_empty() {
                    Vec::new()
                } else {
                    let prior = Arc::new(LatentPrior::new(model)?);
                    max_values
                        .values()
                        .iter()
                        .map(|g| ep_truncate(prior.clone(), *g, &EpOptions::default()))
                        .collect::<Result<Vec<_>>>()?
                };
                Prepared::NesEp { max_values, latents }
            }
            AcquisitionKind::NesRs => {
                let posterior = SsgpPosterior::new(model, model.noise(), spec.features, &mut rng)?;
                let max_values = max_values_from(&posterior, domain, &spec.max_value_options(), &mut rng)?;
                let options = RejectionOptions {
                    accepted: spec.accepted_samples,
                    ..RejectionOptions::default()
                };
                let samples = max_values
                    .values()
                    .iter()
                    .map(|g| {
                        rejection_sample(
                            &posterior,
                            domain,
                            model.data().inputs(),
                            *g,
                            model.params().noise_variance(),
                            &options,
                            &mut rng,
                        )
                    })
                    .collect::<Result<Vec<_>>>()?;
                Prepared::NesRs {
                    max_values,
                    posterior,
                    samples,
                }
            }
            AcquisitionKind::Ei | AcquisitionKind::BoUuEi => {
                let view = if spec.kind == AcquisitionKind::Ei { View::F } else { View::G };
                Prepared::Ei {
                    view,
                    incumbent: best_mean_at_data(model, view),
                }
            }
            AcquisitionKind::Ucb | AcquisitionKind::BoUuUcb => Prepared::Ucb {
                view: if spec.kind == AcquisitionKind::Ucb { View::F } else { View::G },
                beta: spec.ucb_beta,
            },
            AcquisitionKind::Mes | AcquisitionKind::BoUuMes => {
                let (view, smoothing) = if spec.kind == AcquisitionKind::Mes {
                    (View::F, &no_noise)
                } else {
                    (View::G, model.noise())
                };
                let posterior = SsgpPosterior::new(model, smoothing, spec.features, &mut rng)?;
                let max_values = max_values_from(&posterior, domain, &spec.max_value_options(), &mut rng)?;
                Prepared::Mes { view, max_values }
            }
            AcquisitionKind::UnscEi => {
                let points = sigma_points(model.noise(), spec.kappa)?;
                let incumbent = model
                    .data()
                    .inputs()
                    .iter()
                    .map(|x| unscented_mean(model, &points, x))
                    .fold(f64::NEG_INFINITY, f64::max);
                Prepared::Unscented { incumbent, points }
            }
        };
        Ok(Self {
            model,
            kind: spec.kind,
            prepared,
        })
    }

    pub fn kind(&self) -> AcquisitionKind {
        self.kind
    }

    pub fn model(&self) -> &GpModel {
        self.model
    }

    /// Max-value samples used by the entropy-based kinds.
    pub fn max_values(&self) -> Option<&MaxValueSet> {
        match &self.prepared {
            Prepared::NesEp { max_values, .. }
            | Prepared::NesRs { max_values, .. }
            | Prepared::Mes { max_values, .. } => Some(max_values),
            _ => None,
        }
    }

    /// Accepted-sample sets of NES-RS.
    pub fn rejection_samples(&self) -> Option<&[RejectionSamples]> {
        match &self.prepared {
            Prepared::NesRs { samples, .. } => Some(samples),
            _ => None,
        }
    }

    /// Acquisition value, or an error from the underlying approximation.
    pub fn try_evaluate(&self, x: &[f64]) -> Result<f64> {
        let model = self.model;
        Ok(match &self.prepared {
            Prepared::NesEp { latents, .. } => {
                if latents.is_empty() {
                    0.0
                } else {
                    nes_ep_value(model, latents, x)?
                }
            }
            Prepared::NesRs { posterior, samples, .. } => nes_rs_value(model, posterior, samples, x)?,
            Prepared::Ei { view, incumbent } => {
                if incumbent.is_finite() {
                    expected_improvement(view.predict(model, x), *incumbent)
                } else {
                    view.predict(model, x).variance.sqrt()
                }
            }
            Prepared::Ucb { view, beta } => upper_confidence_bound(view.predict(model, x), *beta),
            Prepared::Mes { view, max_values } => max_value_entropy(view.predict(model, x), max_values.values()),
            Prepared::Unscented { incumbent, points } => points
                .offsets
                .iter()
                .zip(&points.weights)
                .map(|(o, w)| {
                    let p: Vec<f64> = x.iter().zip(o).map(|(a, b)| a + b).collect();
                    let pred = model.predict_f(&p);
                    if incumbent.is_finite() {
                        w * expected_improvement(pred, *incumbent)
                    } else {
                        w * pred.variance.sqrt()
                    }
                })
                .sum(),
        })
    }

    /// Acquisition value with failures mapped to minus infinity.
    pub fn evaluate(&self, x: &[f64]) -> f64 {
        match self.try_evaluate(x) {
            Ok(v) if v.is_finite() => v,
            _ => f64::NEG_INFINITY,
        }
    }

    /// Maximizes the acquisition over the model's domain.
    pub fn maximize(&self, options: &OptimizeOptions, seed: u64) -> (Vec<f64>, f64) {
        let mut rng = rng::stream(seed, "acquisition-optimizer", &[]);
        optimize_acquisition(
            |x| self.evaluate(x),
            self.model.data().domain(),
            &[],
            options,
            &mut rng,
        )
    }
}

/// Point estimate of the robust optimum: the maximizer of the robust
/// posterior mean, with the observed inputs as extra candidates.
pub fn recommend_incumbent(model: &GpModel, seed: u64) -> (Vec<f64>, f64) {
    let domain: &Bounds = model.data().domain();
    let options = OptimizeOptions {
        min_step: 1e-9,
        max_evals: 2000,
        ..OptimizeOptions::default()
    };
    let mut rng = rng::stream(seed, "incumbent", &[]);
    optimize_acquisition(
        |x| model.predict_g(x).mean,
        domain,
        model.data().inputs(),
        &options,
        &mut rng,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::{Dataset, KernelParams};

    fn model(n: usize) -> GpModel {
        let xs: Vec<Vec<f64>> = (0..n).map(|i| vec![(i as f64 + 0.5) / n as f64]).collect();
        let ys: Vec<f64> = xs.iter().map(|x| (6.0 * x[0]).sin()).collect();
        GpModel::new(
            KernelParams::new(1.0, vec![0.15], 1e-4).unwrap(),
            InputNoise::from_std(&[0.05]).unwrap(),
            Dataset::from_points(Bounds::unit(1), xs, ys).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn names_round_trip() {
        for k in AcquisitionKind::ALL {
            assert_eq!(k.name().parse::<AcquisitionKind>().unwrap(), k);
        }
        let err = "pes".parse::<AcquisitionKind>().unwrap_err().to_string();
        assert!(err.contains("nes-ep") && err.contains("unsc-ei"));
    }

    #[test]
    fn every_kind_is_finite() {
        let m = model(6);
        for kind in AcquisitionKind::ALL {
            let spec = AcquisitionSpec {
                accepted_samples: 50,
                features: 200,
                pool_size: 20,
                ..AcquisitionSpec::new(kind)
            };
            let st = AcquisitionState::prepare(&m, &spec, 1).unwrap();
            for x in [0.0, 0.3, 0.77, 1.0] {
                assert!(st.try_evaluate(&[x]).unwrap().is_finite(), "{kind} at {x}");
            }
        }
    }

    #[test]
    fn incumbent_dominates_data() {
        let m = model(8);
        let (x, v) = recommend_incumbent(&m, 0);
        assert!(Bounds::unit(1).contains(&x));
        for xi in m.data().inputs() {
            assert!(v >= m.predict_g(xi).mean - 1e-9);
        }
    }
}
