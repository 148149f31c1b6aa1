use std::f64::consts::PI;

use nalgebra::DVector;
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hybrid_mpc::Reference;

/// One operating condition: a raised-sine reference per joint plus a
/// one-shot torque disturbance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Condition {
    pub id: usize,
    pub amplitude: Vec<f64>,
    pub frequency: Vec<f64>,
    pub duration: f64,
    pub disturbance: Vec<f64>,
    pub trigger: f64,
}

pub const PAPER_DISTURBANCE: [f64; 6] = [1.0, 1.0, 5.0, 5.0, 10.0, 10.0];

impl Condition {
    pub fn new(id: usize, amplitude: Vec<f64>, frequency: Vec<f64>, duration: f64) -> Result<Self> {
        let c = Condition {
            id,
            disturbance: vec![0.0; amplitude.len()],
            amplitude,
            frequency,
            duration,
            trigger: 2.0,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn with_disturbance(mut self, tau: Vec<f64>, trigger: f64) -> Self {
        self.disturbance = tau;
        self.trigger = trigger;
        self
    }

    pub fn dof(&self) -> usize {
        self.amplitude.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dof();
        if self.frequency.len() != n || self.disturbance.len() != n {
            return Err(Error::Validation("condition vectors must share one length".into()));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::Validation(format!("duration must be > 0 (got {})", self.duration)));
        }
        if self.frequency.iter().any(|f| !(*f > 0.0 && f.is_finite())) {
            return Err(Error::Validation("frequencies must be > 0".into()));
        }
        if self.amplitude.iter().chain(&self.disturbance).any(|x| !x.is_finite()) || !self.trigger.is_finite() {
            return Err(Error::Validation("condition values must be finite".into()));
        }
        Ok(())
    }

    /// `q = Q/2 (1 + sin(2 pi f (t - T/2)))` and its time derivative.
    pub fn reference(&self, t: f64) -> (DVector<f64>, DVector<f64>) {
        let half = self.duration / 2.0;
        let n = self.dof();
        let q = DVector::from_fn(n, |i, _| {
            0.5 * self.amplitude[i] * (1.0 + (2.0 * PI * self.frequency[i] * (t - half)).sin())
        });
        let qd = DVector::from_fn(n, |i, _| {
            PI * self.amplitude[i] * self.frequency[i] * (2.0 * PI * self.frequency[i] * (t - half)).cos()
        });
        (q, qd)
    }

    /// Disturbance torque for the control period `[t, t + dt)`.
    pub fn disturbance_at(&self, t: f64, dt: f64) -> DVector<f64> {
        let tol = 1e-9 * dt;
        if self.trigger >= t - tol && self.trigger < t + dt - tol {
            DVector::from_column_slice(&self.disturbance)
        } else {
            DVector::zeros(self.dof())
        }
    }

    /// A random condition for data collection: amplitudes within
    /// `±max_amplitude` per joint and frequencies in `[f_lo, f_hi]` Hz.
    pub fn random<R: Rng>(id: usize, rng: &mut R, max_amplitude: &[f64], f_range: (f64, f64), duration: f64) -> Self {
        Condition {
            id,
            amplitude: max_amplitude.iter().map(|a| rng.gen_range(-a..=*a)).collect(),
            frequency: max_amplitude.iter().map(|_| rng.gen_range(f_range.0..=f_range.1)).collect(),
            duration,
            disturbance: PAPER_DISTURBANCE.to_vec(),
            trigger: 2.0,
        }
    }
}

impl Reference for Condition {
    fn at(&self, t: f64) -> (DVector<f64>, DVector<f64>) {
        self.reference(t)
    }
}

/// The five evaluation conditions, 5 s each, with the 2 s disturbance.
pub fn builtin_conditions() -> Vec<Condition> {
    let q1 = [-PI / 4.0, PI / 6.0, -PI / 6.0, -PI / 4.0, PI / 2.0, PI / 2.0];
    let q3 = [-PI / 3.0, PI / 4.0, -PI / 6.0, -PI / 6.0, PI / 3.0, PI / 2.0];
    let q4 = [PI / 2.0; 6];
    let neg = |v: &[f64; 6]| v.iter().map(|x| -x).collect::<Vec<_>>();
    let table = [
        (q1.to_vec(), 0.1),
        (neg(&q1), 0.1),
        (q3.to_vec(), 0.1),
        (q4.to_vec(), 0.05),
        (neg(&q4), 0.05),
    ];
    table
        .into_iter()
        .enumerate()
        .map(|(i, (amp, f))| Condition {
            id: i + 1,
            amplitude: amp,
            frequency: vec![f; 6],
            duration: 5.0,
            disturbance: PAPER_DISTURBANCE.to_vec(),
            trigger: 2.0,
        })
        .collect()
}

pub fn builtin_condition(id: usize) -> Result<Condition> {
    builtin_conditions()
        .into_iter()
        .find(|c| c.id == id)
        .ok_or_else(|| Error::Config(format!("no built-in condition {id} (expected 1..=5)")))
}
