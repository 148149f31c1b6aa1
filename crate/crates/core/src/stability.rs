//! Lyapunov candidate and the three local sufficient conditions for the
//! closed loop under a smooth feedback law.
//!
//! Norms written `‖·‖_max` are induced ∞-norms (maximum absolute row sum);
//! plain `‖·‖` is the spectral norm.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{check_len, Error, Result};
use crate::feedback::{raw_law, FeedbackGains, FeedbackLaw, FeedbackState};
use crate::rne::{coriolis_matrix, gravity_vector, mass_matrix, JointState};
use crate::robot_model::{JointLimits, RobotModel};

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityConfig {
    pub p: DMatrix<f64>,
    pub beta: f64,
    pub eps: f64,
    pub fd_step: f64,
}

impl StabilityConfig {
    pub fn ur5() -> Self {
        StabilityConfig {
            p: DMatrix::from_diagonal(&DVector::from_column_slice(&[25.0, 150.0, 65.0, 25.0, 2.0, 1.0])),
            beta: 1e-6,
            eps: 1e-3,
            fd_step: 1e-6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.p.is_square() {
            return Err(Error::Validation("P must be square".into()));
        }
        if (&self.p - self.p.transpose()).amax() > 1e-12 * self.p.amax().max(1.0) {
            return Err(Error::Validation("P must be symmetric".into()));
        }
        if !(self.p.symmetric_eigenvalues().min() > 0.0) {
            return Err(Error::Validation("P must be positive definite".into()));
        }
        if !(self.beta > 0.0 && self.eps > 0.0 && self.fd_step > 0.0) {
            return Err(Error::Validation("beta, eps and fd_step must be > 0".into()));
        }
        Ok(())
    }
}

/// `V = ½ edᵀ M ed + ½ eᵀ P e + β eᵀ M ed`.
pub fn lyapunov_value(e: &DVector<f64>, ed: &DVector<f64>, m: &DMatrix<f64>, cfg: &StabilityConfig) -> f64 {
    let med = m * ed;
    0.5 * ed.dot(&med) + 0.5 * e.dot(&(&cfg.p * e)) + cfg.beta * e.dot(&med)
}

/// Central-difference Jacobians of the pre-saturation law with respect to
/// position error and velocity error, around `(e0, ed0)` with the
/// controller memory held fixed.
pub fn numeric_jacobians(
    law: FeedbackLaw,
    gains: &FeedbackGains,
    fb_state: &FeedbackState,
    e0: &DVector<f64>,
    ed0: &DVector<f64>,
    h: f64,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = gains.dof();
    check_len("e0", n, e0.len())?;
    check_len("ed0", n, ed0.len())?;
    if !(h > 0.0) {
        return Err(Error::Domain(format!("finite-difference step must be > 0 (got {h})")));
    }
    let mut fe = DMatrix::zeros(n, n);
    let mut fd = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut ep = e0.clone();
        let mut em = e0.clone();
        ep[j] += h;
        em[j] -= h;
        let col = (raw_law(law, &ep, ed0, gains, fb_state) - raw_law(law, &em, ed0, gains, fb_state)) / (2.0 * h);
        fe.set_column(j, &col);
        let mut dp = ed0.clone();
        let mut dm = ed0.clone();
        dp[j] += h;
        dm[j] -= h;
        let col = (raw_law(law, e0, &dp, gains, fb_state) - raw_law(law, e0, &dm, gains, fb_state)) / (2.0 * h);
        fd.set_column(j, &col);
    }
    if fe.iter().chain(fd.iter()).any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("feedback Jacobian"));
    }
    Ok((fe, fd))
}

/// Induced ∞-norm: maximum absolute row sum.
pub fn inf_norm(a: &DMatrix<f64>) -> f64 {
    a.row_iter().map(|r| r.iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max)
}

pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    a.clone().svd(false, false).singular_values.max()
}

/// Smallest eigenvalue of the symmetric part.
pub fn lambda_min_sym(a: &DMatrix<f64>) -> f64 {
    ((a + a.transpose()) * 0.5).symmetric_eigenvalues().min()
}

/// Box of joint positions and velocities.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StateBox {
    pub q_min: Vec<f64>,
    pub q_max: Vec<f64>,
    pub qd_min: Vec<f64>,
    pub qd_max: Vec<f64>,
}

impl StateBox {
    pub fn from_limits(limits: &JointLimits) -> Self {
        StateBox {
            q_min: limits.q_min.as_slice().to_vec(),
            q_max: limits.q_max.as_slice().to_vec(),
            qd_min: limits.qd_min.as_slice().to_vec(),
            qd_max: limits.qd_max.as_slice().to_vec(),
        }
    }

    pub fn symmetric(n: usize, q: f64, qd: f64) -> Self {
        StateBox {
            q_min: vec![-q; n],
            q_max: vec![q; n],
            qd_min: vec![-qd; n],
            qd_max: vec![qd; n],
        }
    }

    pub fn dof(&self) -> usize {
        self.q_min.len()
    }

    /// Parses `q=lo:hi,qd=lo:hi` (same range on every joint) or `limits`
    /// for the full UR5 box.
    pub fn parse(text: &str, n: usize) -> Result<Self> {
        let text = text.trim();
        if text == "limits" {
            return Ok(Self::from_limits(&JointLimits::ur5()));
        }
        let mut out = StateBox::symmetric(n, 0.0, 0.0);
        let mut seen = (false, false);
        for part in text.split(',') {
            let (key, range) = part
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("bad region `{part}`, expected key=lo:hi")))?;
            let (lo, hi) = range
                .split_once(':')
                .ok_or_else(|| Error::Config(format!("bad range `{range}`, expected lo:hi")))?;
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Config(format!("bad number `{s}` in region")))
            };
            let (lo, hi) = (parse(lo)?, parse(hi)?);
            if !(lo <= hi) {
                return Err(Error::Config(format!("empty range {lo}:{hi}")));
            }
            match key.trim() {
                "q" => {
                    out.q_min = vec![lo; n];
                    out.q_max = vec![hi; n];
                    seen.0 = true;
                }
                "qd" => {
                    out.qd_min = vec![lo; n];
                    out.qd_max = vec![hi; n];
                    seen.1 = true;
                }
                other => return Err(Error::Config(format!("unknown region key `{other}`"))),
            }
        }
        if !seen.0 {
            return Err(Error::Config("region needs a q range".into()));
        }
        Ok(out)
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> JointState {
        let pick = |lo: f64, hi: f64, rng: &mut R| if hi > lo { rng.gen_range(lo..=hi) } else { lo };
        let n = self.dof();
        let q = DVector::from_fn(n, |i, _| pick(self.q_min[i], self.q_max[i], rng));
        let qd = DVector::from_fn(n, |i, _| pick(self.qd_min[i], self.qd_max[i], rng));
        JointState { q, qd }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DynamicsBounds {
    pub lambda_max_m: f64,
    pub c_max: f64,
    pub gq_max: f64,
}

/// Central-difference `∂G/∂q`.
pub fn gravity_jacobian(model: &RobotModel, q: &DVector<f64>, h: f64) -> Result<DMatrix<f64>> {
    let n = model.dof();
    let mut out = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut qp = q.clone();
        let mut qm = q.clone();
        qp[j] += h;
        qm[j] -= h;
        out.set_column(j, &((gravity_vector(model, &qp)? - gravity_vector(model, &qm)?) / (2.0 * h)));
    }
    Ok(out)
}

fn bounds_at(model: &RobotModel, x: &JointState, h: f64) -> Result<DynamicsBounds> {
    let m = mass_matrix(model, &x.q)?;
    Ok(DynamicsBounds {
        lambda_max_m: m.symmetric_eigenvalues().max(),
        c_max: inf_norm(&coriolis_matrix(model, &x.q, &x.qd)?),
        gq_max: inf_norm(&gravity_jacobian(model, &x.q, h)?),
    })
}

fn max_bounds(a: DynamicsBounds, b: DynamicsBounds) -> DynamicsBounds {
    DynamicsBounds {
        lambda_max_m: a.lambda_max_m.max(b.lambda_max_m),
        c_max: a.c_max.max(b.c_max),
        gq_max: a.gq_max.max(b.gq_max),
    }
}

/// Maxima of the bound quantities over an explicit set of states.
pub fn dynamics_bounds_on(model: &RobotModel, states: &[JointState]) -> Result<DynamicsBounds> {
    if states.is_empty() {
        return Err(Error::Empty("states"));
    }
    let each = states
        .par_iter()
        .map(|x| bounds_at(model, x, 1e-6))
        .collect::<Result<Vec<_>>>()?;
    Ok(each.into_iter().reduce(max_bounds).expect("non-empty"))
}

/// Monte-Carlo maxima over `samples` seeded draws from `region`.
pub fn dynamics_bounds(model: &RobotModel, region: &StateBox, samples: usize, seed: u64) -> Result<DynamicsBounds> {
    if samples == 0 {
        return Err(Error::Domain("samples must be >= 1".into()));
    }
    check_len("region", model.dof(), region.dof())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let states: Vec<JointState> = (0..samples).map(|_| region.sample(&mut rng)).collect();
    dynamics_bounds_on(model, &states)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub lambda_min_fd: f64,
    pub lambda_min_fe: f64,
    pub rhs1: f64,
    pub rhs2: f64,
    pub lhs3: f64,
    pub rhs3: f64,
    pub cond1: bool,
    pub cond2: bool,
    pub cond3: bool,
    pub overall: bool,
    pub bounds: DynamicsBounds,
    pub p_norm: f64,
    pub beta: f64,
    pub eps: f64,
}

/// Evaluates the damping, stiffness and coupling conditions:
///
/// 1. `λmin(Fd) > β λmax(M) + ‖C‖max + ε`
/// 2. `λmin(Fe) > ‖∂G/∂q‖max + (‖P‖ + β ‖C‖max) / β + ε`
/// 3. `‖β Fe − P‖ < (2/β) [λmin(Fd) − β λmax(M) − ‖C‖max] [β λmin(Fd) − β² ‖∂G/∂q‖max]`
pub fn check_conditions(
    fe: &DMatrix<f64>,
    fd: &DMatrix<f64>,
    bounds: &DynamicsBounds,
    cfg: &StabilityConfig,
) -> Result<StabilityReport> {
    let n = cfg.p.nrows();
    for (what, m) in [("Fe", fe), ("Fd", fd)] {
        if m.shape() != (n, n) {
            return Err(Error::DimensionMismatch {
                what,
                expected: n,
                got: m.nrows(),
            });
        }
        if m.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(what));
        }
    }
    let DynamicsBounds {
        lambda_max_m,
        c_max,
        gq_max,
    } = *bounds;
    let beta = cfg.beta;
    let lmin_fd = lambda_min_sym(fd);
    let lmin_fe = lambda_min_sym(fe);
    let p_norm = spectral_norm(&cfg.p);
    let rhs1 = beta * lambda_max_m + c_max + cfg.eps;
    let rhs2 = gq_max + (p_norm + beta * c_max) / beta + cfg.eps;
    let lhs3 = spectral_norm(&(fe * beta - &cfg.p));
    let rhs3 = (2.0 / beta) * (lmin_fd - beta * lambda_max_m - c_max) * (beta * lmin_fd - beta * beta * gq_max);
    let cond1 = lmin_fd > rhs1;
    let cond2 = lmin_fe > rhs2;
    let cond3 = lhs3 < rhs3;
    Ok(StabilityReport {
        lambda_min_fd: lmin_fd,
        lambda_min_fe: lmin_fe,
        rhs1,
        rhs2,
        lhs3,
        rhs3,
        cond1,
        cond2,
        cond3,
        overall: cond1 && cond2 && cond3,
        bounds: *bounds,
        p_norm,
        beta,
        eps: cfg.eps,
    })
}

/// Full pipeline for one law: Jacobians at zero error with a fresh
/// controller, bounds over the region, then the three conditions.
pub fn check_law(
    model: &RobotModel,
    law: FeedbackLaw,
    gains: &FeedbackGains,
    region: &StateBox,
    samples: usize,
    seed: u64,
    cfg: &StabilityConfig,
) -> Result<StabilityReport> {
    cfg.validate()?;
    let n = model.dof();
    let zero = DVector::zeros(n);
    let (fe, fd) = numeric_jacobians(law, gains, &FeedbackState::new(n), &zero, &zero, cfg.fd_step)?;
    let bounds = dynamics_bounds(model, region, samples, seed)?;
    check_conditions(&fe, &fd, &bounds, cfg)
}
