//! Planar gravity-assist simulator.
//!
//! A probe leaves `start_position` with speed `v0` at angle `alpha0`
//! (degrees, counter-clockwise from the x axis) and coasts through the
//! field of fixed point masses. The figure of merit is the closest approach
//! to the target planet.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::Bounds;
use crate::error::{invalid, Error, Result};

/// The shipped default scenario.
pub const DEFAULT_SCENARIO: &str = include_str!("gravity_scenario.toml");

/// Input noise on `(alpha0 [deg], v0)`.
pub const CONTROL_NOISE_STD: [f64; 2] = [3.0, 0.05];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlDomain {
    /// Launch angle range in degrees.
    pub alpha_deg: [f64; 2],
    /// Launch speed range.
    pub speed: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GravityScenario {
    pub planet_positions: Vec<[f64; 2]>,
    pub planet_masses: Vec<f64>,
    pub gravitational_constant: f64,
    pub start_position: [f64; 2],
    pub target_index: usize,
    pub beta_cost: f64,
    pub integrator_step: f64,
    pub max_flight_time: f64,
    pub softening: f64,
    pub control_domain: ControlDomain,
}

/// Result of one integration.
#[derive(Debug, Clone)]
pub struct Trajectory {
    /// Positions at every integrator step, starting with the launch point.
    pub points: Vec<[f64; 2]>,
    /// Closest distance to the target over the flight.
    pub d_target: f64,
    /// Kinetic plus softened potential energy per unit probe mass, per step.
    pub energy: Vec<f64>,
}

impl Default for GravityScenario {
    fn default() -> Self {
        Self::from_toml(DEFAULT_SCENARIO).expect("shipped scenario parses")
    }
}

impl GravityScenario {
    pub fn from_toml(text: &str) -> Result<Self> {
        let s: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.planet_positions.len();
        if n == 0 || n != self.planet_masses.len() {
            return Err(Error::Config("planet positions and masses must be non-empty and match".into()));
        }
        if self.target_index >= n {
            return Err(Error::Config(format!("target_index {} out of range", self.target_index)));
        }
        if !(self.integrator_step > 0.0 && self.max_flight_time > 0.0 && self.softening > 0.0) {
            return Err(Error::Config("integrator_step, max_flight_time and softening must be positive".into()));
        }
        if self.planet_masses.iter().any(|m| !(m.is_finite() && *m >= 0.0))
            || !(self.gravitational_constant > 0.0)
            || !self.beta_cost.is_finite()
        {
            return Err(Error::Config("masses must be non-negative, G positive, beta finite".into()));
        }
        for i in 0..n {
            for j in 0..i {
                if self.planet_positions[i] == self.planet_positions[j] {
                    return Err(Error::Config(format!("planets {j} and {i} coincide")));
                }
            }
        }
        self.control_bounds().map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    /// The control box as `[alpha0 (deg), v0]`.
    pub fn control_bounds(&self) -> Result<Bounds> {
        let c = &self.control_domain;
        Bounds::new(vec![c.alpha_deg[0], c.speed[0]], vec![c.alpha_deg[1], c.speed[1]])
    }

    fn acceleration(&self, x: [f64; 2]) -> [f64; 2] {
        let eps2 = self.softening * self.softening;
        let mut a = [0.0; 2];
        for (p, &m) in self.planet_positions.iter().zip(&self.planet_masses) {
            let dx = p[0] - x[0];
            let dy = p[1] - x[1];
            let r2 = dx * dx + dy * dy + eps2;
            let s = self.gravitational_constant * m / (r2 * r2.sqrt());
            a[0] += s * dx;
            a[1] += s * dy;
        }
        a
    }

    fn potential(&self, x: [f64; 2]) -> f64 {
        let eps2 = self.softening * self.softening;
        self.planet_positions
            .iter()
            .zip(&self.planet_masses)
            .map(|(p, &m)| {
                let r2 = (p[0] - x[0]).powi(2) + (p[1] - x[1]).powi(2) + eps2;
                -self.gravitational_constant * m / r2.sqrt()
            })
            .sum()
    }

    /// Velocity-Verlet integration; `record` keeps positions and energies.
    fn integrate(&self, alpha_deg: f64, v0: f64, step: f64, record: bool) -> Trajectory {
        let target = self.planet_positions[self.target_index];
        let a0 = alpha_deg.to_radians();
        let mut x = self.start_position;
        let mut v = [v0 * a0.cos(), v0 * a0.sin()];
        let mut acc = self.acceleration(x);
        let steps = (self.max_flight_time / step).round().max(1.0) as usize;
        let mut best = dist(x, target);
        let mut points = Vec::new();
        let mut energy = Vec::new();
        if record {
            points.reserve(steps + 1);
            points.push(x);
            energy.push(0.5 * (v[0] * v[0] + v[1] * v[1]) + self.potential(x));
        }
        for _ in 0..steps {
            let xn = [
                x[0] + step * (v[0] + 0.5 * step * acc[0]),
                x[1] + step * (v[1] + 0.5 * step * acc[1]),
            ];
            let an = self.acceleration(xn);
            v[0] += 0.5 * step * (acc[0] + an[0]);
            v[1] += 0.5 * step * (acc[1] + an[1]);
            best = best.min(segment_distance(x, xn, target));
            x = xn;
            acc = an;
            if record {
                points.push(x);
                energy.push(0.5 * (v[0] * v[0] + v[1] * v[1]) + self.potential(x));
            }
        }
        Trajectory { points, d_target: best, energy }
    }

    /// Full trajectory for controls in the control domain.
    pub fn simulate_trajectory(&self, alpha_deg: f64, v0: f64) -> Result<Trajectory> {
        self.check_controls(alpha_deg, v0)?;
        Ok(self.integrate(alpha_deg, v0, self.integrator_step, true))
    }

    /// Same as [`simulate_trajectory`](Self::simulate_trajectory) with an explicit step.
    pub fn simulate_with_step(&self, alpha_deg: f64, v0: f64, step: f64) -> Result<Trajectory> {
        self.check_controls(alpha_deg, v0)?;
        if !(step > 0.0) {
            return Err(invalid("integrator step must be positive"));
        }
        Ok(self.integrate(alpha_deg, v0, step, true))
    }

    /// Closest approach without bounds checking; used for smoothing near
    /// the edges of the control box.
    pub fn d_target_unchecked(&self, alpha_deg: f64, v0: f64) -> f64 {
        self.integrate(alpha_deg, v0, self.integrator_step, false).d_target
    }

    /// `-log10(d_target + beta * v0)`, to be maximized.
    pub fn objective(&self, alpha_deg: f64, v0: f64) -> Result<f64> {
        self.check_controls(alpha_deg, v0)?;
        Ok(self.objective_unchecked(alpha_deg, v0))
    }

    pub fn objective_unchecked(&self, alpha_deg: f64, v0: f64) -> f64 {
        cost_to_objective(self.d_target_unchecked(alpha_deg, v0), self.beta_cost, v0)
    }

    fn check_controls(&self, alpha_deg: f64, v0: f64) -> Result<()> {
        if !self.control_bounds()?.contains(&[alpha_deg, v0]) {
            return Err(invalid(format!("controls ({alpha_deg}, {v0}) outside the control domain")));
        }
        Ok(())
    }
}

pub fn cost_to_objective(d_target: f64, beta: f64, v0: f64) -> f64 {
    -(d_target + beta * v0).log10()
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Distance from `p` to the segment `[a, b]`.
fn segment_distance(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> f64 {
    let s = [b[0] - a[0], b[1] - a[1]];
    let w = [p[0] - a[0], p[1] - a[1]];
    let ss = s[0] * s[0] + s[1] * s[1];
    let t = if ss > 0.0 { ((s[0] * w[0] + s[1] * w[1]) / ss).clamp(0.0, 1.0) } else { 0.0 };
    dist([a[0] + t * s[0], a[1] + t * s[1]], p)
}
