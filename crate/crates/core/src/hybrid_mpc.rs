//! Candidate-scaling predictive layer.
//!
//! The feedback torque is scaled by every entry of a selection vector, each
//! candidate is stretched over the horizon with decreasing preview weights,
//! rolled out through the forward dynamics and scored. The first torque of
//! the cheapest feasible rollout is applied.

use std::path::Path;

use nalgebra::DVector;
use serde::Serialize;

use crate::error::{check_len, Error, Result};
use crate::feedback::{saturate, FeedbackController};
use crate::kv;
use crate::rne::{rnefda, JointState, SpatialLoad};
use crate::robot_model::{JointLimits, RobotModel};

/// Anything that yields `(q_ref, qd_ref)` at a time.
pub trait Reference: Sync {
    fn at(&self, t: f64) -> (DVector<f64>, DVector<f64>);
}

impl<F> Reference for F
where
    F: Fn(f64) -> (DVector<f64>, DVector<f64>) + Sync,
{
    fn at(&self, t: f64) -> (DVector<f64>, DVector<f64>) {
        self(t)
    }
}

/// The transition map used both by the plant and by the predictor:
/// semi-implicit Euler (velocity first, then position), no clamping.
pub fn transition(model: &RobotModel, state: &JointState, tau: &DVector<f64>, dt: f64) -> Result<JointState> {
    let qdd = rnefda(model, &state.q, &state.qd, tau, &SpatialLoad::zero())?;
    let qd = &state.qd + qdd * dt;
    let q = &state.q + &qd * dt;
    Ok(JointState { q, qd })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpcConfig {
    pub selection: Vec<f64>,
    pub horizon: usize,
    /// Scalar preview weight per horizon step, applied to every joint.
    pub temporal_weights: Vec<f64>,
    /// Error weights on position and velocity error. The integral, sliding
    /// and disturbance features carry zero weight.
    pub w1_e: DVector<f64>,
    pub w1_ed: DVector<f64>,
    pub w2: DVector<f64>,
    pub limits: JointLimits,
    pub dt: f64,
}

pub fn default_selection() -> Vec<f64> {
    (0..=10).map(|i| 0.5 + 0.1 * i as f64).collect()
}

pub fn linear_preview(horizon: usize) -> Vec<f64> {
    (1..=horizon).map(|k| 1.0 - 0.05 * (k as f64 - 1.0)).collect()
}

impl MpcConfig {
    pub fn ur5() -> Self {
        Self::for_limits(JointLimits::ur5())
    }

    pub fn for_limits(limits: JointLimits) -> Self {
        let n = limits.dof();
        MpcConfig {
            selection: default_selection(),
            horizon: 5,
            temporal_weights: linear_preview(5),
            w1_e: DVector::from_element(n, 100.0),
            w1_ed: DVector::from_element(n, 1.0),
            w2: DVector::from_element(n, 1e-4),
            limits,
            dt: 0.005,
        }
    }

    /// Changes the horizon and regenerates the linear preview profile.
    pub fn with_horizon(mut self, horizon: usize) -> Self {
        self.horizon = horizon;
        self.temporal_weights = linear_preview(horizon);
        self
    }

    pub fn dof(&self) -> usize {
        self.limits.dof()
    }

    pub fn validate(&self) -> Result<()> {
        if self.selection.is_empty() {
            return Err(Error::Validation("selection must not be empty".into()));
        }
        if self.selection.iter().any(|w| !w.is_finite()) || self.selection.windows(2).any(|p| p[1] <= p[0]) {
            return Err(Error::Validation("selection must be finite and strictly increasing".into()));
        }
        if self.horizon == 0 {
            return Err(Error::Validation("horizon must be >= 1".into()));
        }
        check_len("temporal_weights", self.horizon, self.temporal_weights.len())?;
        if self.temporal_weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Validation("temporal weights must be finite".into()));
        }
        let n = self.dof();
        for (what, v) in [("w1_e", &self.w1_e), ("w1_ed", &self.w1_ed), ("w2", &self.w2)] {
            check_len(what, n, v.len())?;
            if v.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                return Err(Error::Validation(format!("{what} entries must be finite and >= 0")));
            }
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Validation(format!("dt must be > 0 (got {})", self.dt)));
        }
        self.limits.validate()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    /// `key = value` overrides on top of [`MpcConfig::ur5`]. `selection` may
    /// be given as an explicit list or as `start:step:end`.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::ur5();
        let mut preview = None;
        for section in kv::parse(text)? {
            if !section.name.is_empty() {
                return Err(Error::Parse {
                    line: section.line,
                    msg: "MPC config files have no sections".into(),
                });
            }
            for entry in &section.entries {
                let n = cfg.dof();
                let vec = |e: &kv::Entry| e.floats_n(n).map(DVector::from_vec);
                match entry.key.as_str() {
                    "selection" => cfg.selection = parse_selection(entry)?,
                    "horizon" => cfg.horizon = entry.usize()?,
                    "temporal_weights" => preview = Some(entry.floats()?),
                    "w1_e" => cfg.w1_e = vec(entry)?,
                    "w1_ed" => cfg.w1_ed = vec(entry)?,
                    "w2" => cfg.w2 = vec(entry)?,
                    "dt" => cfg.dt = entry.float()?,
                    "q_min" => cfg.limits.q_min = vec(entry)?,
                    "q_max" => cfg.limits.q_max = vec(entry)?,
                    "qd_min" => cfg.limits.qd_min = vec(entry)?,
                    "qd_max" => cfg.limits.qd_max = vec(entry)?,
                    "torque" => cfg.limits.torque = vec(entry)?,
                    other => {
                        return Err(Error::Parse {
                            line: entry.line,
                            msg: format!("unknown MPC field `{other}`"),
                        })
                    }
                }
            }
        }
        cfg.temporal_weights = preview.unwrap_or_else(|| linear_preview(cfg.horizon));
        cfg.validate()?;
        Ok(cfg)
    }
}

fn parse_selection(entry: &kv::Entry) -> Result<Vec<f64>> {
    let words = entry.words();
    if words.len() == 1 && words[0].contains(':') {
        let parts: Vec<f64> = words[0]
            .split(':')
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse {
                line: entry.line,
                msg: format!("bad range: {e}"),
            })?;
        let [start, step, end] = parts[..] else {
            return Err(Error::Parse {
                line: entry.line,
                msg: "range must be start:step:end".into(),
            });
        };
        if !(step > 0.0) || end < start {
            return Err(Error::Parse {
                line: entry.line,
                msg: "range needs step > 0 and end >= start".into(),
            });
        }
        let count = ((end - start) / step + 1e-9).floor() as usize;
        return Ok((0..=count).map(|i| start + step * i as f64).collect());
    }
    entry.floats()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateRollout {
    pub candidate: f64,
    pub torques: Vec<DVector<f64>>,
    pub states: Vec<JointState>,
    pub cost: f64,
    pub feasible: bool,
    /// First predicted step (1-based) that left the state box.
    pub violation_step: Option<usize>,
}

/// Per-step record of the predictive layer.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MpcDiagnostics {
    pub costs: Vec<f64>,
    pub chosen: f64,
    pub fallback: bool,
}

/// Result of one planning call.
#[derive(Debug, Clone, PartialEq)]
pub struct MpcPlan {
    pub tau: DVector<f64>,
    pub diagnostics: MpcDiagnostics,
}

pub fn candidate_torques(tau_fb: &DVector<f64>, cfg: &MpcConfig) -> Vec<DVector<f64>> {
    cfg.selection
        .iter()
        .map(|w| saturate(&(tau_fb * *w), &cfg.limits.torque))
        .collect()
}

pub fn preview_sequence(candidate: &DVector<f64>, cfg: &MpcConfig) -> Vec<DVector<f64>> {
    cfg.temporal_weights
        .iter()
        .map(|w| saturate(&(candidate * *w), &cfg.limits.torque))
        .collect()
}

fn weighted_sq(v: &DVector<f64>, w: &DVector<f64>) -> f64 {
    v.iter().zip(w.iter()).map(|(x, wi)| wi * x * x).sum()
}

/// Rolls `seq` out from `state` at time `t`. Step `j` (1-based) is scored
/// on the state reached after applying `seq[j-1]`, against the reference at
/// `t + j dt`.
pub fn rollout_cost(
    model: &RobotModel,
    state: &JointState,
    t: f64,
    reference: &dyn Reference,
    seq: &[DVector<f64>],
    cfg: &MpcConfig,
) -> Result<CandidateRollout> {
    check_len("torque sequence", cfg.horizon, seq.len())?;
    let mut x = state.clone();
    let mut states = Vec::with_capacity(seq.len());
    let mut cost = 0.0;
    for (j, tau) in seq.iter().enumerate() {
        x = transition(model, &x, tau, cfg.dt)?;
        let step = j + 1;
        if !cfg.limits.contains(&x.q, &x.qd) {
            states.push(x);
            return Ok(CandidateRollout {
                candidate: f64::NAN,
                torques: seq.to_vec(),
                states,
                cost: f64::INFINITY,
                feasible: false,
                violation_step: Some(step),
            });
        }
        let (rq, rqd) = reference.at(t + step as f64 * cfg.dt);
        let e = rq - &x.q;
        let ed = rqd - &x.qd;
        cost += weighted_sq(&e, &cfg.w1_e) + weighted_sq(&ed, &cfg.w1_ed) + weighted_sq(tau, &cfg.w2);
        states.push(x.clone());
    }
    if !cost.is_finite() {
        return Err(Error::NonFinite("rollout cost"));
    }
    Ok(CandidateRollout {
        candidate: f64::NAN,
        torques: seq.to_vec(),
        states,
        cost,
        feasible: true,
        violation_step: None,
    })
}

/// Index of the winning rollout, or `None` when none is feasible.
pub fn select_index(rollouts: &[CandidateRollout]) -> Result<Option<usize>> {
    if rollouts.is_empty() {
        return Err(Error::Empty("rollouts"));
    }
    let key = |r: &CandidateRollout| ((r.candidate - 1.0).abs(), r.candidate);
    let mut best: Option<usize> = None;
    for (i, r) in rollouts.iter().enumerate() {
        if !r.feasible {
            continue;
        }
        best = match best {
            None => Some(i),
            Some(b) => {
                let cur = &rollouts[b];
                let better = r.cost < cur.cost || (r.cost == cur.cost && key(r) < key(cur));
                Some(if better { i } else { b })
            }
        };
    }
    Ok(best)
}

/// First torque of the best feasible rollout, or `fallback` (flagged) when
/// every rollout violates the state box.
pub fn select_optimal(rollouts: &[CandidateRollout], fallback: &DVector<f64>) -> Result<(DVector<f64>, bool)> {
    Ok(match select_index(rollouts)? {
        Some(i) => (rollouts[i].torques[0].clone(), false),
        None => (fallback.clone(), true),
    })
}

/// Runs the predictive layer for a given feedback torque. Used by the
/// closed loop and for labeling expert data.
pub fn hmpc_plan(
    model: &RobotModel,
    state: &JointState,
    t: f64,
    reference: &dyn Reference,
    tau_fb: &DVector<f64>,
    cfg: &MpcConfig,
) -> Result<MpcPlan> {
    check_len("tau_fb", cfg.dof(), tau_fb.len())?;
    let mut rollouts = Vec::with_capacity(cfg.selection.len());
    for (w, cand) in cfg.selection.iter().zip(candidate_torques(tau_fb, cfg)) {
        let mut r = rollout_cost(model, state, t, reference, &preview_sequence(&cand, cfg), cfg)?;
        r.candidate = *w;
        rollouts.push(r);
    }
    let fallback = saturate(tau_fb, &cfg.limits.torque);
    let idx = select_index(&rollouts)?;
    let (tau, chosen, fb) = match idx {
        Some(i) => (rollouts[i].torques[0].clone(), rollouts[i].candidate, false),
        None => (fallback, 1.0, true),
    };
    Ok(MpcPlan {
        tau,
        diagnostics: MpcDiagnostics {
            costs: rollouts.iter().map(|r| r.cost).collect(),
            chosen,
            fallback: fb,
        },
    })
}

/// One closed-loop call: feedback torque, then the predictive layer. The
/// controller is told which torque was applied.
pub fn hmpc_step(
    model: &RobotModel,
    state: &JointState,
    t: f64,
    reference: &dyn Reference,
    controller: &mut FeedbackController,
    cfg: &MpcConfig,
) -> Result<(DVector<f64>, MpcDiagnostics)> {
    let (rq, rqd) = reference.at(t);
    let (_, tau_fb) = controller.compute(state, &rq, &rqd, cfg.dt)?;
    let plan = hmpc_plan(model, state, t, reference, &tau_fb, cfg)?;
    controller.record_applied(&plan.tau);
    Ok((plan.tau, plan.diagnostics))
}
