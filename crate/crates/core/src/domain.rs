use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Axis-aligned box `[lower_j, upper_j]` in `d` dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

/// Inputs within this distance of a face still count as inside the box.
const CONTAINMENT_SLACK: f64 = 1e-12;

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(invalid("bounds need matching, non-empty lower/upper vectors"));
        }
        if lower
            .iter()
            .zip(&upper)
            .any(|(l, u)| !(l.is_finite() && u.is_finite() && l < u))
        {
            return Err(invalid("bounds must be finite with lower < upper"));
        }
        Ok(Self { lower, upper })
    }

    /// The unit hypercube `[0, 1]^d`.
    pub fn unit(dim: usize) -> Self {
        Self {
            lower: vec![0.0; dim],
            upper: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn width(&self, j: usize) -> f64 {
        self.upper[j] - self.lower[j]
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter().enumerate().all(|(j, &v)| {
                let slack = CONTAINMENT_SLACK * self.width(j).max(1.0);
                v >= self.lower[j] - slack && v <= self.upper[j] + slack
            })
    }

    /// Clamps `x` into the box in place.
    pub fn project(&self, x: &mut [f64]) {
        for (j, v) in x.iter_mut().enumerate() {
            *v = v.clamp(self.lower[j], self.upper[j]);
        }
    }

    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        (0..self.dim())
            .map(|j| self.lower[j] + rng.gen::<f64>() * self.width(j))
            .collect()
    }

    pub fn center(&self) -> Vec<f64> {
        (0..self.dim())
            .map(|j| 0.5 * (self.lower[j] + self.upper[j]))
            .collect()
    }
}
