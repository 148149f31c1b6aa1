//! Recursive Newton-Euler dynamics.
//!
//! The forward pass propagates angular velocity/acceleration and linear
//! accelerations from the base out to the tool; the backward pass
//! accumulates the force and moment each link transmits to its parent and
//! projects the moment on the joint axis. Everything else (mass matrix, bias
//! vector, forward dynamics) is assembled from repeated inverse-dynamics
//! calls.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use crate::error::{check_len, Error, Result};
use crate::robot_model::RobotModel;

#[derive(Debug, Clone, PartialEq)]
pub struct JointState {
    pub q: DVector<f64>,
    pub qd: DVector<f64>,
}

impl JointState {
    pub fn new(q: DVector<f64>, qd: DVector<f64>) -> Result<Self> {
        check_len("qd", q.len(), qd.len())?;
        if !(q.iter().all(|v| v.is_finite()) && qd.iter().all(|v| v.is_finite())) {
            return Err(Error::NonFinite("joint state"));
        }
        Ok(JointState { q, qd })
    }

    pub fn zeros(n: usize) -> Self {
        JointState {
            q: DVector::zeros(n),
            qd: DVector::zeros(n),
        }
    }

    pub fn dof(&self) -> usize {
        self.q.len()
    }
}

/// Wrench the end-effector exerts on its environment, expressed in the last
/// link's frame and applied at the tool point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SpatialLoad {
    pub end_force: Vector3<f64>,
    pub end_torque: Vector3<f64>,
}

impl SpatialLoad {
    pub fn zero() -> Self {
        Self::default()
    }

    fn is_finite(&self) -> bool {
        self.end_force.iter().chain(self.end_torque.iter()).all(|v| v.is_finite())
    }
}

/// Motion quantities of one link, all in that link's own frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkKinematics {
    pub angular_velocity: Vector3<f64>,
    pub angular_acceleration: Vector3<f64>,
    pub origin_acceleration: Vector3<f64>,
    pub com_acceleration: Vector3<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KinematicPropagation {
    pub links: Vec<LinkKinematics>,
}

#[derive(Clone, Copy)]
struct BaseMotion {
    gravity: Vector3<f64>,
    angular_velocity: Vector3<f64>,
    angular_acceleration: Vector3<f64>,
    linear_acceleration: Vector3<f64>,
}

impl BaseMotion {
    fn of(model: &RobotModel) -> Self {
        BaseMotion {
            gravity: model.gravity,
            angular_velocity: model.base_angular_velocity,
            angular_acceleration: model.base_angular_acceleration,
            linear_acceleration: model.base_linear_acceleration,
        }
    }

    fn still() -> Self {
        BaseMotion {
            gravity: Vector3::zeros(),
            angular_velocity: Vector3::zeros(),
            angular_acceleration: Vector3::zeros(),
            linear_acceleration: Vector3::zeros(),
        }
    }
}

fn check_inputs(model: &RobotModel, vecs: &[(&'static str, &DVector<f64>)]) -> Result<()> {
    let n = model.dof();
    for (what, v) in vecs {
        check_len(what, n, v.len())?;
    }
    Ok(())
}

/// Forward pass. Returns the parent-to-child rotations, the gravity vector
/// in each link frame, and the link kinematics.
fn forward_pass(
    model: &RobotModel,
    base: &BaseMotion,
    q: &DVector<f64>,
    qd: &DVector<f64>,
    qdd: &DVector<f64>,
) -> (Vec<Matrix3<f64>>, Vec<Vector3<f64>>, Vec<LinkKinematics>) {
    let n = model.dof();
    let z = Vector3::z();
    let mut rotations = Vec::with_capacity(n);
    let mut gravity = Vec::with_capacity(n);
    let mut kin = Vec::with_capacity(n);

    let mut w = base.angular_velocity;
    let mut wd = base.angular_acceleration;
    let mut a_origin = base.linear_acceleration;
    let mut g = base.gravity;
    let mut offset = Vector3::zeros();

    for (i, link) in model.links.iter().enumerate() {
        let r = link.rotation(q[i]);
        let rt = r.transpose();
        // acceleration of this link's origin, still in the parent frame
        let a_parent = a_origin + wd.cross(&offset) + w.cross(&w.cross(&offset));
        let w_in = rt * w;
        let w_i = w_in + z * qd[i];
        let wd_i = rt * wd + z * qdd[i] + w_in.cross(&z) * qd[i];
        let a_i = rt * a_parent;
        let c = &link.com_offset;
        let ac_i = a_i + wd_i.cross(c) + w_i.cross(&w_i.cross(c));
        g = rt * g;

        rotations.push(r);
        gravity.push(g);
        kin.push(LinkKinematics {
            angular_velocity: w_i,
            angular_acceleration: wd_i,
            origin_acceleration: a_i,
            com_acceleration: ac_i,
        });
        w = w_i;
        wd = wd_i;
        a_origin = a_i;
        offset = link.joint_offset;
    }
    (rotations, gravity, kin)
}

fn inverse_dynamics(
    model: &RobotModel,
    base: &BaseMotion,
    q: &DVector<f64>,
    qd: &DVector<f64>,
    qdd: &DVector<f64>,
    load: &SpatialLoad,
) -> DVector<f64> {
    let n = model.dof();
    let (rotations, gravity, kin) = forward_pass(model, base, q, qd, qdd);
    let mut tau = DVector::zeros(n);

    let mut f_next = load.end_force;
    let mut n_next = load.end_torque;
    let mut r_next = Matrix3::identity();
    for i in (0..n).rev() {
        let link = &model.links[i];
        let k = &kin[i];
        let f_child = r_next * f_next;
        let n_child = r_next * n_next;
        let inertial = (k.com_acceleration - gravity[i]) * link.mass;
        let iw = link.inertia * k.angular_velocity;
        let f_i = f_child + inertial;
        let n_i = n_child
            + link.com_offset.cross(&inertial)
            + link.joint_offset.cross(&f_child)
            + link.inertia * k.angular_acceleration
            + k.angular_velocity.cross(&iw);
        tau[i] = n_i.z;
        f_next = f_i;
        n_next = n_i;
        r_next = rotations[i];
    }
    tau
}

pub fn propagate_kinematics(
    model: &RobotModel,
    q: &DVector<f64>,
    qd: &DVector<f64>,
    qdd: &DVector<f64>,
) -> Result<KinematicPropagation> {
    check_inputs(model, &[("q", q), ("qd", qd), ("qdd", qdd)])?;
    let (_, _, links) = forward_pass(model, &BaseMotion::of(model), q, qd, qdd);
    Ok(KinematicPropagation { links })
}

/// Joint torques producing `qdd` at state `(q, qd)` while the tool exerts
/// `load` on the environment.
pub fn rneida(
    model: &RobotModel,
    q: &DVector<f64>,
    qd: &DVector<f64>,
    qdd: &DVector<f64>,
    load: &SpatialLoad,
) -> Result<DVector<f64>> {
    check_inputs(model, &[("q", q), ("qd", qd), ("qdd", qdd)])?;
    if !load.is_finite() {
        return Err(Error::NonFinite("spatial load"));
    }
    Ok(inverse_dynamics(model, &BaseMotion::of(model), q, qd, qdd, load))
}

/// Joint-space inertia matrix, one inverse-dynamics call per column with
/// gravity, loads and base motion switched off.
pub fn mass_matrix(model: &RobotModel, q: &DVector<f64>) -> Result<DMatrix<f64>> {
    check_inputs(model, &[("q", q)])?;
    Ok(mass_matrix_unchecked(model, q))
}

fn mass_matrix_unchecked(model: &RobotModel, q: &DVector<f64>) -> DMatrix<f64> {
    let n = model.dof();
    let still = BaseMotion::still();
    let zero = DVector::zeros(n);
    let mut m = DMatrix::zeros(n, n);
    let mut unit = DVector::zeros(n);
    for j in 0..n {
        unit[j] = 1.0;
        let col = inverse_dynamics(model, &still, q, &zero, &unit, &SpatialLoad::zero());
        m.set_column(j, &col);
        unit[j] = 0.0;
    }
    m
}

/// Nonlinear effects `h(q, qd)`: Coriolis, centrifugal, gravity and load.
pub fn bias_vector(
    model: &RobotModel,
    q: &DVector<f64>,
    qd: &DVector<f64>,
    load: &SpatialLoad,
) -> Result<DVector<f64>> {
    let qdd = DVector::zeros(model.dof());
    rneida(model, q, qd, &qdd, load)
}

pub fn gravity_vector(model: &RobotModel, q: &DVector<f64>) -> Result<DVector<f64>> {
    let z = DVector::zeros(model.dof());
    rneida(model, q, &z, &z, &SpatialLoad::zero())
}

/// Solves `M x = rhs` with a Cholesky factorization, falling back to LU.
pub fn solve_spd(m: DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    if let Some(chol) = m.clone().cholesky() {
        return Ok(chol.solve(rhs));
    }
    m.lu()
        .solve(rhs)
        .ok_or_else(|| Error::Solve("mass matrix is singular".into()))
        .and_then(|x| {
            if x.iter().all(|v| v.is_finite()) {
                Err(Error::Solve(
                    "mass matrix is not positive definite (model defect)".into(),
                ))
            } else {
                Err(Error::Solve("mass matrix is singular".into()))
            }
        })
}

/// Joint accelerations under applied torques `tau`.
pub fn rnefda(
    model: &RobotModel,
    q: &DVector<f64>,
    qd: &DVector<f64>,
    tau: &DVector<f64>,
    load: &SpatialLoad,
) -> Result<DVector<f64>> {
    check_inputs(model, &[("tau", tau)])?;
    let h = bias_vector(model, q, qd, load)?;
    let m = mass_matrix_unchecked(model, q);
    solve_spd(m, &(tau - h))
}

/// Coriolis/centrifugal matrix built from the Christoffel symbols.
///
/// The velocity-product term `c(q, v) = h(q, v) - h(q, 0)` at zero gravity is
/// quadratic in `v`, so its symmetric bilinear form follows exactly by
/// polarization: `B(u, v) = (c(u + v) - c(u - v)) / 4`. Column `j` of `C` is
/// `B(qd, e_j)`, which is the Christoffel choice for which `Mdot - 2C` is
/// skew-symmetric.
pub fn coriolis_matrix(model: &RobotModel, q: &DVector<f64>, qd: &DVector<f64>) -> Result<DMatrix<f64>> {
    check_inputs(model, &[("q", q), ("qd", qd)])?;
    let n = model.dof();
    let still = BaseMotion::still();
    let zero = DVector::zeros(n);
    let load = SpatialLoad::zero();
    let mut c = DMatrix::zeros(n, n);
    let mut plus = qd.clone();
    let mut minus = qd.clone();
    for j in 0..n {
        plus[j] += 1.0;
        minus[j] -= 1.0;
        let hp = inverse_dynamics(model, &still, q, &plus, &zero, &load);
        let hm = inverse_dynamics(model, &still, q, &minus, &zero, &load);
        c.set_column(j, &((hp - hm) * 0.25));
        plus[j] = qd[j];
        minus[j] = qd[j];
    }
    Ok(c)
}

pub fn kinetic_energy(model: &RobotModel, q: &DVector<f64>, qd: &DVector<f64>) -> Result<f64> {
    let m = mass_matrix(model, q)?;
    check_len("qd", model.dof(), qd.len())?;
    Ok(0.5 * qd.dot(&(m * qd)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::robot_model::{rot_x, ur5_default, LinkParams};
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn pendulum(m: f64, lc: f64, izz: f64) -> RobotModel {
        let inertia = Matrix3::from_diagonal(&Vector3::new(0.01, 0.02, izz));
        let link = LinkParams::new(
            m,
            Vector3::new(lc, 0.0, 0.0),
            Vector3::new(2.0 * lc, 0.0, 0.0),
            inertia,
            rot_x(PI / 2.0),
        )
        .unwrap();
        RobotModel::new(vec![link]).unwrap()
    }

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn static_chain_has_no_motion() {
        let model = ur5_default().without_gravity();
        let q = v(&[0.3, -0.2, 1.0, 0.5, -1.2, 2.0]);
        let z = DVector::zeros(6);
        let kin = propagate_kinematics(&model, &q, &z, &z).unwrap();
        for k in &kin.links {
            assert_eq!(k.angular_velocity, Vector3::zeros());
            assert_eq!(k.angular_acceleration, Vector3::zeros());
            assert_eq!(k.origin_acceleration, Vector3::zeros());
            assert_eq!(k.com_acceleration, Vector3::zeros());
        }
    }

    #[test]
    fn single_link_spin() {
        // hand evaluation: w = [0, 0, w], a_c = w x (w x r) with |r| = lc
        let model = pendulum(2.0, 0.3, 0.05);
        let w = 1.7;
        let kin = propagate_kinematics(&model, &v(&[0.0]), &v(&[w]), &v(&[0.0])).unwrap();
        let k = &kin.links[0];
        assert_eq!(k.angular_velocity, Vector3::new(0.0, 0.0, w));
        assert_relative_eq!(k.com_acceleration.norm(), w * w * 0.3, epsilon = 1e-12);
        assert_relative_eq!(k.com_acceleration, Vector3::new(-w * w * 0.3, 0.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn pendulum_gravity_moment_and_inertia() {
        let (m, lc, izz, g) = (2.0, 0.3, 0.05, 9.81);
        let model = pendulum(m, lc, izz);
        let tau = gravity_vector(&model, &v(&[0.0])).unwrap();
        assert_relative_eq!(tau[0], m * g * lc, epsilon = 1e-12);
        let vertical = gravity_vector(&model, &v(&[PI / 2.0])).unwrap();
        assert_relative_eq!(vertical[0], 0.0, epsilon = 1e-12);
        let mm = mass_matrix(&model, &v(&[0.4])).unwrap();
        assert_relative_eq!(mm[(0, 0)], izz + m * lc * lc, epsilon = 1e-12);
        let qdd = rnefda(&model, &v(&[0.0]), &v(&[0.0]), &v(&[0.0]), &SpatialLoad::zero()).unwrap();
        assert_relative_eq!(qdd[0], -m * g * lc / (izz + m * lc * lc), epsilon = 1e-12);
    }

    #[test]
    fn equilibrium_torque_gives_zero_acceleration() {
        let model = ur5_default();
        let q = v(&[0.1, 0.7, -0.4, 0.2, 1.0, -0.5]);
        let qd = v(&[0.3, -0.2, 0.5, -0.1, 0.4, 0.2]);
        let h = bias_vector(&model, &q, &qd, &SpatialLoad::zero()).unwrap();
        let qdd = rnefda(&model, &q, &qd, &h, &SpatialLoad::zero()).unwrap();
        assert!(qdd.amax() < 1e-10);
    }

    #[test]
    fn bias_reduces_to_gravity_and_zero() {
        let model = ur5_default();
        let q = v(&[0.1, 0.7, -0.4, 0.2, 1.0, -0.5]);
        let z = DVector::zeros(6);
        let h = bias_vector(&model, &q, &z, &SpatialLoad::zero()).unwrap();
        assert_eq!(h, gravity_vector(&model, &q).unwrap());
        let h0 = bias_vector(&model.without_gravity(), &q, &z, &SpatialLoad::zero()).unwrap();
        assert!(h0.amax() < 1e-15);
        assert!(gravity_vector(&model.without_gravity(), &q).unwrap().amax() < 1e-15);
    }

    #[test]
    fn mass_matrix_column_order_independent() {
        let model = ur5_default();
        let q = v(&[0.4, -0.3, 0.9, 0.1, -0.6, 1.4]);
        let m = mass_matrix(&model, &q).unwrap();
        let g = gravity_vector(&model, &q).unwrap();
        let z = DVector::zeros(6);
        for j in (0..6).rev() {
            let mut e = DVector::zeros(6);
            e[j] = 1.0;
            let col = rneida(&model, &q, &z, &e, &SpatialLoad::zero()).unwrap() - &g;
            for i in 0..6 {
                assert_relative_eq!(col[i], m[(i, j)], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn tool_load_maps_through_jacobian_transpose() {
        // a vertical pull on the tool of a horizontal pendulum adds f * L
        let model = pendulum(1.0, 0.25, 0.02);
        let z = v(&[0.0]);
        let g = gravity_vector(&model, &z).unwrap()[0];
        // link frame: x along the rod, y vertical up at q = 0
        let load = SpatialLoad {
            end_force: Vector3::new(0.0, 3.0, 0.0),
            end_torque: Vector3::zeros(),
        };
        let tau = rneida(&model, &z, &z, &z, &load).unwrap()[0];
        assert_relative_eq!(tau - g, 3.0 * 0.5, epsilon = 1e-12);
        let pure = SpatialLoad {
            end_force: Vector3::zeros(),
            end_torque: Vector3::new(0.0, 0.0, 0.7),
        };
        assert_relative_eq!(rneida(&model, &z, &z, &z, &pure).unwrap()[0] - g, 0.7, epsilon = 1e-12);
    }

    #[test]
    fn dimension_mismatch() {
        let model = ur5_default();
        let err = gravity_vector(&model, &v(&[0.0; 5])).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { expected: 6, got: 5, .. }));
    }

    #[test]
    fn coriolis_matrix_reproduces_velocity_terms() {
        let model = ur5_default();
        let q = v(&[0.2, -0.5, 0.8, 0.3, 0.9, -0.4]);
        let qd = v(&[0.7, -0.3, 0.4, 1.1, -0.8, 0.5]);
        let c = coriolis_matrix(&model, &q, &qd).unwrap();
        let h0 = bias_vector(&model.without_gravity(), &q, &qd, &SpatialLoad::zero()).unwrap();
        assert!((c * &qd - h0).amax() < 1e-12);
    }

    #[test]
    fn non_pd_mass_matrix_reports_solve_error() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(solve_spd(m, &v(&[1.0, 1.0])), Err(Error::Solve(_))));
        let singular = DMatrix::zeros(2, 2);
        assert!(matches!(solve_spd(singular, &v(&[1.0, 1.0])), Err(Error::Solve(_))));
    }
}
