use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::metrics::{metrics_from_signal, MetricSet, SETTLE_THRESHOLD};
use super::reference::Condition;
use crate::emulator::{lmpc_step, EmulatorNet};
use crate::error::{check_len, Error, Result};
use crate::feedback::{FeedbackController, FeedbackGains, FeedbackLaw};
use crate::hybrid_mpc::{hmpc_step, transition, MpcConfig};
use crate::rne::JointState;
use crate::robot_model::{JointLimits, RobotModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Fb,
    Hmpc,
    Lmpc,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Fb, Mode::Hmpc, Mode::Lmpc];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Fb => "fb",
            Mode::Hmpc => "hmpc",
            Mode::Lmpc => "lmpc",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown mode `{s}`")))
    }
}

/// Advances the plant one period and clamps the result into the state box.
/// The flag is set when clamping changed anything.
pub fn step(
    model: &RobotModel,
    state: &JointState,
    tau: &DVector<f64>,
    dt: f64,
    limits: &JointLimits,
) -> Result<(JointState, bool)> {
    if !(dt > 0.0) {
        return Err(Error::Domain(format!("dt must be > 0 (got {dt})")));
    }
    let mut next = transition(model, state, tau, dt)?;
    if next.q.iter().chain(next.qd.iter()).any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("plant state"));
    }
    let mut clamped = false;
    for i in 0..next.dof() {
        let q = next.q[i].clamp(limits.q_min[i], limits.q_max[i]);
        let qd = next.qd[i].clamp(limits.qd_min[i], limits.qd_max[i]);
        clamped |= q != next.q[i] || qd != next.qd[i];
        next.q[i] = q;
        next.qd[i] = qd;
    }
    Ok((next, clamped))
}

/// Everything an episode needs besides the condition.
#[derive(Debug, Clone, Copy)]
pub struct EpisodeSetup<'a> {
    pub model: &'a RobotModel,
    pub gains: &'a FeedbackGains,
    pub mpc: &'a MpcConfig,
    pub net: Option<&'a EmulatorNet>,
    /// Half-width (rad) of the uniform per-seed perturbation of the
    /// initial joint positions.
    pub init_jitter: f64,
}

pub const DEFAULT_INIT_JITTER: f64 = 0.005;

impl<'a> EpisodeSetup<'a> {
    pub fn new(model: &'a RobotModel, gains: &'a FeedbackGains, mpc: &'a MpcConfig) -> Self {
        EpisodeSetup {
            model,
            gains,
            mpc,
            net: None,
            init_jitter: DEFAULT_INIT_JITTER,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeTrace {
    pub mode: Mode,
    pub law: FeedbackLaw,
    pub condition: usize,
    pub seed: u64,
    pub dt: f64,
    pub trigger: f64,
    pub t: Vec<f64>,
    pub q: Vec<DVector<f64>>,
    pub qd: Vec<DVector<f64>>,
    pub ref_q: Vec<DVector<f64>>,
    pub ref_qd: Vec<DVector<f64>>,
    /// Torque the controller emitted (before the disturbance).
    pub tau: Vec<DVector<f64>>,
    /// Output of the feedback law at the same step.
    pub tau_fb: Vec<DVector<f64>>,
    pub latency: Vec<f64>,
    /// Steps where the plant state had to be clamped into the box.
    pub clamp_events: usize,
    /// Steps where every predictive candidate was infeasible.
    pub fallback_events: usize,
}

impl EpisodeTrace {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn error(&self, k: usize) -> DVector<f64> {
        &self.ref_q[k] - &self.q[k]
    }

    /// Joint-mean absolute position error per sample.
    pub fn mean_abs_error(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.error(k).abs().mean()).collect()
    }

    pub fn metrics(&self) -> Result<MetricSet> {
        self.metrics_with(SETTLE_THRESHOLD)
    }

    pub fn metrics_with(&self, threshold: f64) -> Result<MetricSet> {
        metrics_from_signal(&self.mean_abs_error(), self.dt, self.trigger, threshold)
    }

    pub fn mean_latency(&self) -> f64 {
        if self.latency.is_empty() {
            0.0
        } else {
            self.latency.iter().sum::<f64>() / self.latency.len() as f64
        }
    }

    /// `t, q*, ref*, e*, tau*, latency` with one row per sample.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let n = self.q.first().map_or(0, |v| v.len());
        let mut header = vec!["t".to_string()];
        for prefix in ["q", "ref", "e", "tau"] {
            header.extend((1..=n).map(|j| format!("{prefix}{j}")));
        }
        header.push("latency".into());
        writeln!(w, "{}", header.join(","))?;
        for k in 0..self.len() {
            let mut row = vec![format!("{}", self.t[k])];
            let e = self.error(k);
            for v in [&self.q[k], &self.ref_q[k], &e, &self.tau[k]] {
                row.extend(v.iter().map(|x| format!("{x}")));
            }
            row.push(format!("{}", self.latency[k]));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Initial state: the reference start, with positions perturbed by a
/// seeded uniform offset.
pub fn initial_state(cond: &Condition, seed: u64, jitter: f64) -> JointState {
    let (q, qd) = cond.reference(0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = if jitter > 0.0 {
        q.map(|x| x + rng.gen_range(-jitter..=jitter))
    } else {
        q
    };
    JointState { q, qd }
}

/// Closed-loop run from `t = 0` to the condition's duration at the MPC
/// config's period. Every sample (including the last) calls the controller;
/// the plant is stepped between samples.
pub fn run_episode(
    setup: &EpisodeSetup<'_>,
    mode: Mode,
    law: FeedbackLaw,
    cond: &Condition,
    seed: u64,
) -> Result<EpisodeTrace> {
    let EpisodeSetup {
        model, gains, mpc, net, ..
    } = *setup;
    let n = model.dof();
    check_len("condition", n, cond.dof())?;
    mpc.validate()?;
    if mode == Mode::Lmpc && net.is_none() {
        return Err(Error::Config("LMPC mode needs a trained emulator".into()));
    }
    let dt = mpc.dt;
    let steps = (cond.duration / dt).round() as usize;
    let mut ctl = FeedbackController::new(law, gains.clone());
    let mut state = initial_state(cond, seed, setup.init_jitter);
    let mut trace = EpisodeTrace {
        mode,
        law,
        condition: cond.id,
        seed,
        dt,
        trigger: cond.trigger,
        t: Vec::with_capacity(steps + 1),
        q: Vec::with_capacity(steps + 1),
        qd: Vec::with_capacity(steps + 1),
        ref_q: Vec::with_capacity(steps + 1),
        ref_qd: Vec::with_capacity(steps + 1),
        tau: Vec::with_capacity(steps + 1),
        tau_fb: Vec::with_capacity(steps + 1),
        latency: Vec::with_capacity(steps + 1),
        clamp_events: 0,
        fallback_events: 0,
    };
    for k in 0..=steps {
        let t = k as f64 * dt;
        let (rq, rqd) = cond.reference(t);
        let start = Instant::now();
        let (tau, tau_fb) = match mode {
            Mode::Fb => {
                let (_, tau) = ctl.compute(&state, &rq, &rqd, dt)?;
                (tau.clone(), tau)
            }
            Mode::Hmpc => {
                let (tau, diag) = hmpc_step(model, &state, t, cond, &mut ctl, mpc)?;
                trace.fallback_events += diag.fallback as usize;
                let fb = ctl.last_output().clone();
                (tau, fb)
            }
            Mode::Lmpc => {
                let (_, tau_fb) = ctl.compute(&state, &rq, &rqd, dt)?;
                let tau = lmpc_step(net.expect("checked above"), &state, &rq, &rqd, &tau_fb, &mpc.limits.torque)?;
                ctl.record_applied(&tau);
                (tau, tau_fb)
            }
        };
        let latency = start.elapsed().as_secs_f64();
        trace.t.push(t);
        trace.q.push(state.q.clone());
        trace.qd.push(state.qd.clone());
        trace.ref_q.push(rq);
        trace.ref_qd.push(rqd);
        trace.tau_fb.push(tau_fb);
        trace.latency.push(latency);
        if k < steps {
            let applied = &tau + cond.disturbance_at(t, dt);
            let (next, clamped) = step(model, &state, &applied, dt, &mpc.limits)?;
            trace.clamp_events += clamped as usize;
            state = next;
        }
        trace.tau.push(tau);
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::robot_model::ur5_default;
    use crate::simlab::reference::builtin_condition;

    #[test]
    fn trace_has_one_sample_per_period() {
        let model = ur5_default();
        let gains = FeedbackGains::ur5();
        let mpc = MpcConfig::ur5();
        let setup = EpisodeSetup::new(&model, &gains, &mpc);
        let mut cond = builtin_condition(1).unwrap();
        cond.duration = 0.1;
        let tr = run_episode(&setup, Mode::Fb, FeedbackLaw::Pd, &cond, 0).unwrap();
        assert_eq!(tr.len(), 21);
        assert_eq!(tr.tau.len(), tr.len());
        assert!((tr.t[20] - 0.1).abs() < 1e-12);
        let again = run_episode(&setup, Mode::Fb, FeedbackLaw::Pd, &cond, 0).unwrap();
        assert_eq!(tr.q, again.q);
        let other = run_episode(&setup, Mode::Fb, FeedbackLaw::Pd, &cond, 1).unwrap();
        assert_ne!(tr.q[0], other.q[0]);
    }

    #[test]
    fn zero_torque_rest_stays_put() {
        let model = ur5_default().without_gravity();
        let limits = JointLimits::ur5();
        let mut x = JointState::zeros(6);
        x.q[1] = 0.3;
        let start = x.clone();
        for _ in 0..200 {
            let (next, clamped) = step(&model, &x, &DVector::zeros(6), 0.005, &limits).unwrap();
            assert!(!clamped);
            x = next;
        }
        assert!((x.q - start.q).amax() < 1e-12);
        assert!(x.qd.amax() < 1e-12);
    }

    #[test]
    fn clamping_is_flagged() {
        let model = ur5_default();
        let limits = JointLimits::ur5();
        let mut x = JointState::zeros(6);
        x.qd[0] = limits.qd_max[0];
        let tau = limits.torque.clone();
        let (next, clamped) = step(&model, &x, &tau, 0.005, &limits).unwrap();
        assert!(clamped);
        assert!(limits.contains(&next.q, &next.qd));
    }

    #[test]
    fn lmpc_needs_a_net() {
        let model = ur5_default();
        let gains = FeedbackGains::ur5();
        let mpc = MpcConfig::ur5();
        let setup = EpisodeSetup::new(&model, &gains, &mpc);
        let cond = builtin_condition(1).unwrap();
        assert!(run_episode(&setup, Mode::Lmpc, FeedbackLaw::Pd, &cond, 0).is_err());
    }

    #[test]
    fn csv_shape() {
        let model = ur5_default();
        let gains = FeedbackGains::ur5();
        let mpc = MpcConfig::ur5();
        let setup = EpisodeSetup::new(&model, &gains, &mpc);
        let mut cond = builtin_condition(2).unwrap();
        cond.duration = 0.02;
        let tr = run_episode(&setup, Mode::Hmpc, FeedbackLaw::Pid, &cond, 0).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), tr.len() + 1);
        assert!(lines.iter().all(|l| l.split(',').count() == 26));
    }
}
