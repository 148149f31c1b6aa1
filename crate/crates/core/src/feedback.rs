//! Error features and the feedback law bank.
//!
//! Every law maps the error vector to a joint torque. Each `*_torque`
//! function returns the saturated output; [`raw_law`] evaluates the smooth
//! pre-saturation map without touching controller state, which is what the
//! stability checker differentiates.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::kv;
use crate::rne::{mass_matrix, JointState};
use crate::robot_model::{ur5_default, JointLimits};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeedbackLaw {
    Pd,
    Pid,
    Adrc,
    Hinf,
    Smc,
    Mrac,
}

impl FeedbackLaw {
    pub const ALL: [FeedbackLaw; 6] = [
        FeedbackLaw::Pd,
        FeedbackLaw::Pid,
        FeedbackLaw::Adrc,
        FeedbackLaw::Hinf,
        FeedbackLaw::Smc,
        FeedbackLaw::Mrac,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FeedbackLaw::Pd => "pd",
            FeedbackLaw::Pid => "pid",
            FeedbackLaw::Adrc => "adrc",
            FeedbackLaw::Hinf => "hinf",
            FeedbackLaw::Smc => "smc",
            FeedbackLaw::Mrac => "mrac",
        }
    }
}

impl fmt::Display for FeedbackLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeedbackLaw {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FeedbackLaw::ALL
            .into_iter()
            .find(|l| l.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown feedback law `{s}`")))
    }
}

/// Generalized tracking-error features.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorVector {
    pub e: DVector<f64>,
    pub ed: DVector<f64>,
    pub xi: DVector<f64>,
    pub slide: DVector<f64>,
    pub dhat: DVector<f64>,
}

impl ErrorVector {
    pub fn zeros(n: usize) -> Self {
        ErrorVector {
            e: DVector::zeros(n),
            ed: DVector::zeros(n),
            xi: DVector::zeros(n),
            slide: DVector::zeros(n),
            dhat: DVector::zeros(n),
        }
    }

    pub fn dof(&self) -> usize {
        self.e.len()
    }

    pub fn scaled(&self, c: f64) -> Self {
        ErrorVector {
            e: &self.e * c,
            ed: &self.ed * c,
            xi: &self.xi * c,
            slide: &self.slide * c,
            dhat: &self.dhat * c,
        }
    }
}

/// First-order weighting function described by its DC gain, the frequency
/// (rad/s) where its magnitude is one, and its high-frequency gain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Makeweight {
    pub dc_gain: f64,
    pub crossover: f64,
    pub hf_gain: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdrcGains {
    pub b0: DVector<f64>,
    pub omega_o: f64,
    pub omega_c: f64,
    /// Observer gains, `(3 w_o, 3 w_o^2, w_o^3)`.
    pub beta: [f64; 3],
}

impl AdrcGains {
    pub fn new(b0: DVector<f64>, omega_o: f64, omega_c: f64) -> Self {
        AdrcGains {
            b0,
            omega_o,
            omega_c,
            beta: [3.0 * omega_o, 3.0 * omega_o * omega_o, omega_o.powi(3)],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmcGains {
    pub lambda: DVector<f64>,
    pub k: DVector<f64>,
    pub boundary: DVector<f64>,
    pub k_eq: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MracGains {
    pub alpha: DVector<f64>,
    pub gamma: DVector<f64>,
    pub lambda: DVector<f64>,
}

/// Static loop-shaped stand-in for a mixed-sensitivity design.
///
/// Each joint is treated as a decoupled inertia `m_j`. The two weights cross
/// unity at the same frequency; the design bandwidth is placed at
/// `w_b = crossover * sqrt(dc_s / dc_u)`, the geometric point where the
/// sensitivity weight's low-frequency demand meets the control weight's
/// allowance, and the PD pair `k_s = m w_b^2`, `k_u = 2 m w_b` puts a
/// critically damped pole pair there. The output is `alpha * (k_s e + k_u ed)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HinfGains {
    pub alpha: DVector<f64>,
    pub ks: DVector<f64>,
    pub ku: DVector<f64>,
    pub ws: Makeweight,
    pub wu: Makeweight,
}

impl HinfGains {
    pub fn loop_shaped(alpha: DVector<f64>, nominal_inertia: &DVector<f64>, ws: Makeweight, wu: Makeweight) -> Self {
        let wb = ws.crossover * (ws.dc_gain / wu.dc_gain).sqrt();
        HinfGains {
            ks: nominal_inertia * (wb * wb),
            ku: nominal_inertia * (2.0 * wb),
            alpha,
            ws,
            wu,
        }
    }

    pub fn bandwidth(&self) -> f64 {
        self.ws.crossover * (self.ws.dc_gain / self.wu.dc_gain).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackGains {
    pub kp: DVector<f64>,
    pub kd: DVector<f64>,
    pub ki: DVector<f64>,
    pub adrc: AdrcGains,
    pub smc: SmcGains,
    pub mrac: MracGains,
    pub hinf: HinfGains,
    pub torque_limits: DVector<f64>,
}

fn dv(x: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(x)
}

impl FeedbackGains {
    /// Gains for the six-joint arm of [`ur5_default`].
    pub fn ur5() -> Self {
        let nominal = mass_matrix(&ur5_default(), &DVector::zeros(6))
            .expect("valid model")
            .diagonal();
        FeedbackGains {
            kp: dv(&[25.0, 150.0, 65.0, 25.0, 2.0, 1.0]),
            kd: dv(&[1.0, 5.0, 2.0, 0.6, 0.1, 0.05]),
            ki: dv(&[0.3, 0.4, 0.3, 0.1, 0.03, 0.03]),
            adrc: AdrcGains::new(dv(&[0.015, 0.125, 0.070, 0.025, 0.008, 0.0001]), 50.0, 20.0),
            smc: SmcGains {
                lambda: dv(&[5.0, 3.0, 3.0, 5.0, 2.0, 0.05]),
                k: dv(&[0.05, 0.10, 0.10, 0.15, 0.20, 0.005]),
                boundary: DVector::from_element(6, 0.02),
                k_eq: dv(&[10.0, 20.0, 15.0, 8.0, 3.0, 1.0]),
            },
            mrac: MracGains {
                alpha: dv(&[0.5, 0.5, 0.5, 0.5, 0.2, 0.2]),
                gamma: dv(&[5.0, 5.0, 4.0, 3.0, 1.0, 0.2]),
                lambda: dv(&[20.0, 20.0, 15.0, 10.0, 6.0, 2.0]),
            },
            hinf: HinfGains::loop_shaped(
                DVector::from_element(6, 0.2),
                &nominal,
                Makeweight {
                    dc_gain: 10.0,
                    crossover: 1.0,
                    hf_gain: 0.01,
                },
                Makeweight {
                    dc_gain: 0.1,
                    crossover: 1.0,
                    hf_gain: 10.0,
                },
            ),
            torque_limits: JointLimits::ur5().torque,
        }
    }

    pub fn dof(&self) -> usize {
        self.kp.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dof();
        let vectors: [(&'static str, &DVector<f64>); 15] = [
            ("kd", &self.kd),
            ("ki", &self.ki),
            ("adrc.b0", &self.adrc.b0),
            ("smc.lambda", &self.smc.lambda),
            ("smc.k", &self.smc.k),
            ("smc.boundary", &self.smc.boundary),
            ("smc.k_eq", &self.smc.k_eq),
            ("mrac.alpha", &self.mrac.alpha),
            ("mrac.gamma", &self.mrac.gamma),
            ("mrac.lambda", &self.mrac.lambda),
            ("hinf.alpha", &self.hinf.alpha),
            ("hinf.ks", &self.hinf.ks),
            ("hinf.ku", &self.hinf.ku),
            ("torque_limits", &self.torque_limits),
            ("kp", &self.kp),
        ];
        for (what, v) in vectors {
            check_len(what, n, v.len())?;
            if v.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                return Err(Error::Validation(format!("{what}: gains must be finite and >= 0")));
            }
        }
        if self.adrc.b0.iter().any(|b| *b <= 0.0) {
            return Err(Error::Validation("adrc.b0 must be > 0".into()));
        }
        if self.smc.boundary.iter().any(|b| *b <= 0.0) {
            return Err(Error::Validation("smc.boundary must be > 0".into()));
        }
        if self.torque_limits.iter().any(|b| *b <= 0.0) {
            return Err(Error::Validation("torque_limits must be > 0".into()));
        }
        let w = self.adrc.omega_o;
        let expect = [3.0 * w, 3.0 * w * w, w * w * w];
        if self.adrc.beta.iter().zip(expect).any(|(b, e)| (b - e).abs() > 1e-9 * e.abs().max(1.0)) {
            return Err(Error::Validation("adrc.beta must equal (3w, 3w^2, w^3)".into()));
        }
        Ok(())
    }

    /// Reads overrides from a `law.field = values` file on top of the UR5
    /// defaults.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut g = Self::ur5();
        let sections = kv::parse(text)?;
        for section in &sections {
            if !section.name.is_empty() {
                return Err(Error::Parse {
                    line: section.line,
                    msg: "controller files have no sections".into(),
                });
            }
            for entry in &section.entries {
                let n = g.dof();
                let vec = |e: &kv::Entry| e.floats_n(n).map(DVector::from_vec);
                match entry.key.as_str() {
                    "pd.kp" => g.kp = vec(entry)?,
                    "pd.kd" => g.kd = vec(entry)?,
                    "pid.ki" => g.ki = vec(entry)?,
                    "adrc.b0" => g.adrc.b0 = vec(entry)?,
                    "adrc.omega_o" => g.adrc = AdrcGains::new(g.adrc.b0.clone(), entry.float()?, g.adrc.omega_c),
                    "adrc.omega_c" => g.adrc.omega_c = entry.float()?,
                    "smc.lambda" => g.smc.lambda = vec(entry)?,
                    "smc.k" => g.smc.k = vec(entry)?,
                    "smc.boundary" => g.smc.boundary = vec(entry)?,
                    "smc.k_eq" => g.smc.k_eq = vec(entry)?,
                    "mrac.alpha" => g.mrac.alpha = vec(entry)?,
                    "mrac.gamma" => g.mrac.gamma = vec(entry)?,
                    "mrac.lambda" => g.mrac.lambda = vec(entry)?,
                    "hinf.alpha" => g.hinf.alpha = vec(entry)?,
                    "hinf.ks" => g.hinf.ks = vec(entry)?,
                    "hinf.ku" => g.hinf.ku = vec(entry)?,
                    "torque_limits" => g.torque_limits = vec(entry)?,
                    other => {
                        return Err(Error::Parse {
                            line: entry.line,
                            msg: format!("unknown controller field `{other}`"),
                        })
                    }
                }
            }
        }
        g.validate()?;
        Ok(g)
    }
}

/// Per-episode controller memory.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackState {
    /// Integral of the position error.
    pub xi: DVector<f64>,
    pub e_prev: DVector<f64>,
    /// ESO estimates of position, velocity and lumped disturbance.
    pub z1: DVector<f64>,
    pub z2: DVector<f64>,
    pub z3: DVector<f64>,
    /// Last torque actually applied, fed to the ESO.
    pub u_prev: DVector<f64>,
    /// Adaptive feedforward parameters.
    pub theta_hat: DVector<f64>,
    /// Adaptation regressor (desired acceleration proxy).
    pub regressor: DVector<f64>,
    pub ref_qd_prev: DVector<f64>,
    pub steps: u64,
}

impl FeedbackState {
    pub fn new(n: usize) -> Self {
        FeedbackState {
            xi: DVector::zeros(n),
            e_prev: DVector::zeros(n),
            z1: DVector::zeros(n),
            z2: DVector::zeros(n),
            z3: DVector::zeros(n),
            u_prev: DVector::zeros(n),
            theta_hat: DVector::zeros(n),
            regressor: DVector::zeros(n),
            ref_qd_prev: DVector::zeros(n),
            steps: 0,
        }
    }

    pub fn reset(&mut self) {
        *self = FeedbackState::new(self.xi.len());
    }
}

pub fn saturate(tau: &DVector<f64>, bounds: &DVector<f64>) -> DVector<f64> {
    tau.zip_map(bounds, |t, b| t.clamp(-b, b))
}

pub fn error_vector(
    state: &JointState,
    ref_q: &DVector<f64>,
    ref_qd: &DVector<f64>,
    fb_state: &FeedbackState,
    law: FeedbackLaw,
    gains: &FeedbackGains,
) -> Result<ErrorVector> {
    let n = state.dof();
    check_len("ref_q", n, ref_q.len())?;
    check_len("ref_qd", n, ref_qd.len())?;
    check_len("gains", n, gains.dof())?;
    let e = ref_q - &state.q;
    let ed = ref_qd - &state.qd;
    let slide = match law {
        FeedbackLaw::Smc => &ed + gains.smc.lambda.component_mul(&e),
        _ => DVector::zeros(n),
    };
    let xi = match law {
        FeedbackLaw::Pid => fb_state.xi.clone(),
        _ => DVector::zeros(n),
    };
    let dhat = match law {
        FeedbackLaw::Adrc => fb_state.z3.clone(),
        _ => DVector::zeros(n),
    };
    Ok(ErrorVector { e, ed, xi, slide, dhat })
}

fn unit_sat(x: f64) -> f64 {
    x.clamp(-1.0, 1.0)
}

/// Smooth pre-saturation law as a function of `(e, ed)`, holding the
/// controller memory fixed. Used for Jacobians and linearity checks.
pub fn raw_law(
    law: FeedbackLaw,
    e: &DVector<f64>,
    ed: &DVector<f64>,
    gains: &FeedbackGains,
    fb_state: &FeedbackState,
) -> DVector<f64> {
    match law {
        FeedbackLaw::Pd => gains.kp.component_mul(e) + gains.kd.component_mul(ed),
        FeedbackLaw::Pid => {
            gains.kp.component_mul(e) + gains.ki.component_mul(&fb_state.xi) + gains.kd.component_mul(ed)
        }
        FeedbackLaw::Adrc => {
            let a = &gains.adrc;
            let wc = a.omega_c;
            DVector::from_fn(e.len(), |i, _| (wc * wc * e[i] + 2.0 * wc * ed[i] - fb_state.z3[i]) / a.b0[i])
        }
        FeedbackLaw::Hinf => {
            let h = &gains.hinf;
            h.alpha.component_mul(&(h.ks.component_mul(e) + h.ku.component_mul(ed)))
        }
        FeedbackLaw::Smc => {
            let s = ed + gains.smc.lambda.component_mul(e);
            smc_raw(&s, &gains.smc)
        }
        FeedbackLaw::Mrac => {
            let m = &gains.mrac;
            let s = ed + m.alpha.component_mul(e);
            m.lambda.component_mul(&s) + fb_state.theta_hat.component_mul(&fb_state.regressor)
        }
    }
}

fn smc_raw(s: &DVector<f64>, g: &SmcGains) -> DVector<f64> {
    DVector::from_fn(s.len(), |i, _| g.k_eq[i] * s[i] + g.k[i] * unit_sat(s[i] / g.boundary[i]))
}

pub fn pd_torque(err: &ErrorVector, gains: &FeedbackGains) -> DVector<f64> {
    let tau = gains.kp.component_mul(&err.e) + gains.kd.component_mul(&err.ed);
    saturate(&tau, &gains.torque_limits)
}

/// PID with trapezoidal integration of the position error and conditional
/// integration: a joint's integrator is frozen while its output is
/// saturated in the direction the error would push it further.
pub fn pid_torque(err: &ErrorVector, gains: &FeedbackGains, fb_state: &mut FeedbackState, dt: f64) -> DVector<f64> {
    let base = gains.kp.component_mul(&err.e) + gains.kd.component_mul(&err.ed);
    let n = err.dof();
    let mut tau = DVector::zeros(n);
    for i in 0..n {
        let xi_new = fb_state.xi[i] + 0.5 * dt * (fb_state.e_prev[i] + err.e[i]);
        let candidate = base[i] + gains.ki[i] * xi_new;
        let bound = gains.torque_limits[i];
        let winding = candidate.abs() > bound && candidate.signum() == err.e[i].signum();
        if !winding {
            fb_state.xi[i] = xi_new;
        }
        tau[i] = base[i] + gains.ki[i] * fb_state.xi[i];
    }
    fb_state.e_prev.copy_from(&err.e);
    saturate(&tau, &gains.torque_limits)
}

/// Per-joint linear ADRC: a third-order extended state observer (explicit
/// Euler at `dt`) estimates position, velocity and the lumped disturbance,
/// and the bandwidth-parameterized law cancels the estimate.
pub fn adrc_torque(
    err: &ErrorVector,
    state: &JointState,
    gains: &FeedbackGains,
    fb_state: &mut FeedbackState,
    dt: f64,
) -> DVector<f64> {
    let a = &gains.adrc;
    let n = err.dof();
    if fb_state.steps == 0 {
        fb_state.z1.copy_from(&state.q);
        fb_state.z2.copy_from(&state.qd);
        fb_state.z3.fill(0.0);
    }
    let [b1, b2, b3] = a.beta;
    for i in 0..n {
        eso_update(
            (&mut fb_state.z1[i], &mut fb_state.z2[i], &mut fb_state.z3[i]),
            state.q[i],
            a.b0[i] * fb_state.u_prev[i],
            (b1, b2, b3),
            dt,
        );
    }
    let wc = a.omega_c;
    let u = DVector::from_fn(n, |i, _| (wc * wc * err.e[i] + 2.0 * wc * err.ed[i] - fb_state.z3[i]) / a.b0[i]);
    let tau = saturate(&u, &gains.torque_limits);
    fb_state.u_prev.copy_from(&tau);
    tau
}

/// One explicit-Euler step of a scalar extended state observer.
pub fn eso_update(z: (&mut f64, &mut f64, &mut f64), y: f64, bu: f64, beta: (f64, f64, f64), dt: f64) {
    let (z1, z2, z3) = z;
    let innov = y - *z1;
    let d1 = *z2 + beta.0 * innov;
    let d2 = *z3 + beta.1 * innov + bu;
    let d3 = beta.2 * innov;
    *z1 += dt * d1;
    *z2 += dt * d2;
    *z3 += dt * d3;
}

/// Boundary-layer sliding mode: `K_eq s + k sat(s / eps)` with
/// `s = ed + lambda e`.
pub fn smc_torque(err: &ErrorVector, gains: &FeedbackGains) -> DVector<f64> {
    let s = &err.ed + gains.smc.lambda.component_mul(&err.e);
    saturate(&smc_raw(&s, &gains.smc), &gains.torque_limits)
}

/// Model-reference adaptive law. The adaptive feedforward parameters follow
/// `theta += dt * gamma * s * phi` with `s = ed + alpha e` and the regressor
/// `phi` held in `fb_state`; the output is `Lambda s + theta * phi`.
pub fn mrac_torque(err: &ErrorVector, gains: &FeedbackGains, fb_state: &mut FeedbackState, dt: f64) -> DVector<f64> {
    let m = &gains.mrac;
    let s = &err.ed + m.alpha.component_mul(&err.e);
    let step = m.gamma.component_mul(&s).component_mul(&fb_state.regressor) * dt;
    fb_state.theta_hat += step;
    let tau = m.lambda.component_mul(&s) + fb_state.theta_hat.component_mul(&fb_state.regressor);
    saturate(&tau, &gains.torque_limits)
}

pub fn hinf_torque(err: &ErrorVector, gains: &FeedbackGains) -> DVector<f64> {
    saturate(&raw_law(FeedbackLaw::Hinf, &err.e, &err.ed, gains, &FeedbackState::new(err.dof())), &gains.torque_limits)
}

/// A feedback law bundled with its gains and memory.
#[derive(Debug, Clone)]
pub struct FeedbackController {
    pub law: FeedbackLaw,
    pub gains: FeedbackGains,
    pub state: FeedbackState,
    last_output: DVector<f64>,
}

impl FeedbackController {
    pub fn new(law: FeedbackLaw, gains: FeedbackGains) -> Self {
        let n = gains.dof();
        FeedbackController {
            law,
            gains,
            state: FeedbackState::new(n),
            last_output: DVector::zeros(n),
        }
    }

    pub fn reset(&mut self) {
        self.state.reset();
        self.last_output.fill(0.0);
    }

    /// Saturated torque returned by the most recent [`compute`](Self::compute).
    pub fn last_output(&self) -> &DVector<f64> {
        &self.last_output
    }

    /// Builds the error vector and evaluates the law, advancing the
    /// controller memory by one control period.
    pub fn compute(
        &mut self,
        state: &JointState,
        ref_q: &DVector<f64>,
        ref_qd: &DVector<f64>,
        dt: f64,
    ) -> Result<(ErrorVector, DVector<f64>)> {
        if !(dt > 0.0) {
            return Err(Error::Domain(format!("control period must be > 0 (got {dt})")));
        }
        let err = error_vector(state, ref_q, ref_qd, &self.state, self.law, &self.gains)?;
        if self.law == FeedbackLaw::Mrac {
            self.state.regressor = if self.state.steps == 0 {
                DVector::zeros(ref_qd.len())
            } else {
                (ref_qd - &self.state.ref_qd_prev) / dt
            };
        }
        let tau = match self.law {
            FeedbackLaw::Pd => pd_torque(&err, &self.gains),
            FeedbackLaw::Pid => pid_torque(&err, &self.gains, &mut self.state, dt),
            FeedbackLaw::Adrc => adrc_torque(&err, state, &self.gains, &mut self.state, dt),
            FeedbackLaw::Hinf => hinf_torque(&err, &self.gains),
            FeedbackLaw::Smc => smc_torque(&err, &self.gains),
            FeedbackLaw::Mrac => mrac_torque(&err, &self.gains, &mut self.state, dt),
        };
        self.state.ref_qd_prev.copy_from(ref_qd);
        self.state.steps += 1;
        if tau.iter().any(|t| !t.is_finite()) {
            return Err(Error::NonFinite("feedback torque"));
        }
        self.last_output.copy_from(&tau);
        Ok((err, tau))
    }

    /// Tells the controller which torque actually reached the plant (the
    /// predictive layer may pick a different one).
    pub fn record_applied(&mut self, tau: &DVector<f64>) {
        if self.law == FeedbackLaw::Adrc {
            self.state.u_prev.copy_from(tau);
        }
    }

    pub fn raw(&self, e: &DVector<f64>, ed: &DVector<f64>) -> DVector<f64> {
        raw_law(self.law, e, ed, &self.gains, &self.state)
    }
}

/// Diagonal of a gain vector as a matrix.
pub fn diag(v: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_diagonal(v)
}
