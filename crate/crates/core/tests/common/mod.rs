//! Planar test arms and their closed-form Lagrangian dynamics, written out
//! by hand so they share nothing with the recursive code.
#![allow(dead_code)]

use armlab::robot_model::{LinkParams, RobotModel};
use nalgebra::{DVector, Matrix3, Vector3};

pub const G: f64 = 9.81;

#[derive(Debug, Clone, Copy)]
pub struct PlanarLink {
    pub m: f64,
    pub l: f64,
    pub lc: f64,
    /// Moment of inertia about the joint-parallel axis through the CoM.
    pub i: f64,
}

/// Chain rotating about base z with gravity along -y.
pub fn planar_model(links: &[PlanarLink]) -> RobotModel {
    let params = links
        .iter()
        .map(|p| {
            LinkParams::new(
                p.m,
                Vector3::new(p.lc, 0.0, 0.0),
                Vector3::new(p.l, 0.0, 0.0),
                Matrix3::from_diagonal(&Vector3::new(0.7 * p.i, 1.3 * p.i, p.i)),
                Matrix3::identity(),
            )
            .unwrap()
        })
        .collect();
    RobotModel::with_gravity(params, Vector3::new(0.0, -G, 0.0)).unwrap()
}

/// `tau = (I + m lc²) qdd + m g lc cos q`.
pub fn pendulum_tau(p: PlanarLink, q: f64, qdd: f64) -> f64 {
    (p.i + p.m * p.lc * p.lc) * qdd + p.m * G * p.lc * q.cos()
}

/// Textbook two-link planar arm: `M(q) qdd + C(q, qd) qd + g(q)`.
pub fn two_link_tau(a: PlanarLink, b: PlanarLink, q: [f64; 2], qd: [f64; 2], qdd: [f64; 2]) -> [f64; 2] {
    let (s2, c2) = q[1].sin_cos();
    let m11 = a.i + a.m * a.lc * a.lc + b.i + b.m * (a.l * a.l + b.lc * b.lc + 2.0 * a.l * b.lc * c2);
    let m12 = b.i + b.m * (b.lc * b.lc + a.l * b.lc * c2);
    let m22 = b.i + b.m * b.lc * b.lc;
    let h = b.m * a.l * b.lc * s2;
    let g1 = (a.m * a.lc + b.m * a.l) * G * q[0].cos() + b.m * b.lc * G * (q[0] + q[1]).cos();
    let g2 = b.m * b.lc * G * (q[0] + q[1]).cos();
    [
        m11 * qdd[0] + m12 * qdd[1] - h * (2.0 * qd[0] * qd[1] + qd[1] * qd[1]) + g1,
        m12 * qdd[0] + m22 * qdd[1] + h * qd[0] * qd[0] + g2,
    ]
}

pub fn two_link_mass(a: PlanarLink, b: PlanarLink, q2: f64) -> [[f64; 2]; 2] {
    let c2 = q2.cos();
    let m11 = a.i + a.m * a.lc * a.lc + b.i + b.m * (a.l * a.l + b.lc * b.lc + 2.0 * a.l * b.lc * c2);
    let m12 = b.i + b.m * (b.lc * b.lc + a.l * b.lc * c2);
    let m22 = b.i + b.m * b.lc * b.lc;
    [[m11, m12], [m12, m22]]
}

pub const ROD_A: PlanarLink = PlanarLink {
    m: 1.7,
    l: 0.45,
    lc: 0.21,
    i: 0.031,
};

pub const ROD_B: PlanarLink = PlanarLink {
    m: 0.9,
    l: 0.35,
    lc: 0.17,
    i: 0.012,
};

pub fn dvec(x: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(x)
}
