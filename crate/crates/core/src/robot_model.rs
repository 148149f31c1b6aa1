//! Kinematic chain description of a serial manipulator with revolute joints.
//!
//! Frame convention: link `i` carries a body frame whose origin sits on
//! joint `i` and whose z axis is the joint axis. The orientation of link `i`
//! relative to its parent is `fixed_rotation_i * Rot_z(q_i)`, and
//! `joint_offset_i` is the vector from the origin of link `i` to the origin
//! of link `i + 1` (the tool point for the last link), expressed in link
//! `i`'s frame. `com_offset_i` is the vector from the origin of link `i` to
//! its centre of mass, also in link `i`'s frame.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{DVector, Matrix3, SymmetricEigen, Vector3};

use crate::error::{check_len, Error, Result};
use crate::kv;

const ORTHO_TOL: f64 = 1e-10;

/// Padding added to every principal moment of the thin-rod inertia so the
/// tensor stays positive definite even about the rod axis.
pub const ROD_INERTIA_PAD: f64 = 1e-4;

pub fn rot_x(angle: f64) -> Matrix3<f64> {
    let (s, c) = angle.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

pub fn rot_y(angle: f64) -> Matrix3<f64> {
    let (s, c) = angle.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

pub fn rot_z(angle: f64) -> Matrix3<f64> {
    let (s, c) = angle.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

fn is_rotation(r: &Matrix3<f64>) -> bool {
    let ortho = (r.transpose() * r - Matrix3::identity()).abs().max();
    ortho < ORTHO_TOL && (r.determinant() - 1.0).abs() < ORTHO_TOL
}

/// Rigid transform: `rotation` is the frame's orientation and `translation`
/// its origin, both relative to the base frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Pose {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        if !is_rotation(&rotation) {
            return Err(Error::Validation(
                "rotation must be orthonormal with det = +1".into(),
            ));
        }
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(Error::Validation("translation must be finite".into()));
        }
        Ok(Pose {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Pose {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Composition `self * child`, where `child` is expressed in `self`.
    pub fn compose(&self, rotation: &Matrix3<f64>, translation: &Vector3<f64>) -> Pose {
        Pose {
            rotation: self.rotation * rotation,
            translation: self.translation + self.rotation * translation,
        }
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.translation + self.rotation * p
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkParams {
    pub mass: f64,
    pub com_offset: Vector3<f64>,
    pub joint_offset: Vector3<f64>,
    /// Inertia about the centre of mass in link coordinates.
    pub inertia: Matrix3<f64>,
    pub fixed_rotation: Matrix3<f64>,
}

impl LinkParams {
    pub fn new(
        mass: f64,
        com_offset: Vector3<f64>,
        joint_offset: Vector3<f64>,
        inertia: Matrix3<f64>,
        fixed_rotation: Matrix3<f64>,
    ) -> Result<Self> {
        let link = LinkParams {
            mass,
            com_offset,
            joint_offset,
            inertia,
            fixed_rotation,
        };
        link.validate()?;
        Ok(link)
    }

    /// Uniform thin rod along `joint_offset` with its centre of mass at the
    /// midpoint.
    pub fn thin_rod(mass: f64, joint_offset: Vector3<f64>, fixed_rotation: Matrix3<f64>) -> Result<Self> {
        let length = joint_offset.norm();
        let axis = if length > 0.0 {
            joint_offset / length
        } else {
            Vector3::z()
        };
        let inertia = (Matrix3::identity() - axis * axis.transpose()) * (mass * length * length / 12.0)
            + Matrix3::identity() * ROD_INERTIA_PAD;
        Self::new(mass, joint_offset * 0.5, joint_offset, inertia, fixed_rotation)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mass > 0.0 && self.mass.is_finite()) {
            return Err(Error::Validation(format!("mass > 0 (got {})", self.mass)));
        }
        if !self.com_offset.iter().all(|v| v.is_finite()) {
            return Err(Error::Validation("com_offset must be finite".into()));
        }
        if !self.joint_offset.iter().all(|v| v.is_finite()) {
            return Err(Error::Validation("joint_offset must be finite".into()));
        }
        if !self.inertia.iter().all(|v| v.is_finite()) {
            return Err(Error::Validation("inertia must be finite".into()));
        }
        let asym = (self.inertia - self.inertia.transpose()).abs().max();
        if asym > 1e-12 * (1.0 + self.inertia.abs().max()) {
            return Err(Error::Validation("inertia must be symmetric".into()));
        }
        let eig = SymmetricEigen::new(self.inertia).eigenvalues;
        if eig.min() < -1e-12 {
            return Err(Error::Validation(
                "inertia must be positive semidefinite".into(),
            ));
        }
        if !is_rotation(&self.fixed_rotation) {
            return Err(Error::Validation(
                "fixed_rotation must be orthonormal with det = +1".into(),
            ));
        }
        Ok(())
    }

    /// Orientation of this link relative to its parent at joint angle `q`.
    #[inline]
    pub fn rotation(&self, q: f64) -> Matrix3<f64> {
        self.fixed_rotation * rot_z(q)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobotModel {
    pub links: Vec<LinkParams>,
    pub gravity: Vector3<f64>,
    pub base_angular_velocity: Vector3<f64>,
    pub base_angular_acceleration: Vector3<f64>,
    pub base_linear_acceleration: Vector3<f64>,
}

impl RobotModel {
    /// Model with the given links, standard gravity along -z and a base at rest.
    pub fn new(links: Vec<LinkParams>) -> Result<Self> {
        Self::with_gravity(links, Vector3::new(0.0, 0.0, -9.81))
    }

    pub fn with_gravity(links: Vec<LinkParams>, gravity: Vector3<f64>) -> Result<Self> {
        let model = RobotModel {
            links,
            gravity,
            base_angular_velocity: Vector3::zeros(),
            base_angular_acceleration: Vector3::zeros(),
            base_linear_acceleration: Vector3::zeros(),
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if self.links.is_empty() {
            return Err(Error::Validation("model needs at least one link".into()));
        }
        for (i, link) in self.links.iter().enumerate() {
            link.validate()
                .map_err(|e| Error::Validation(format!("link {}: {e}", i + 1)))?;
        }
        let finite = |v: &Vector3<f64>| v.iter().all(|x| x.is_finite());
        if !(finite(&self.gravity)
            && finite(&self.base_angular_velocity)
            && finite(&self.base_angular_acceleration)
            && finite(&self.base_linear_acceleration))
        {
            return Err(Error::Validation("gravity and base motion must be finite".into()));
        }
        Ok(())
    }

    pub fn dof(&self) -> usize {
        self.links.len()
    }

    pub fn without_gravity(&self) -> RobotModel {
        RobotModel {
            gravity: Vector3::zeros(),
            ..self.clone()
        }
    }

    /// Pose of every link frame in the base frame.
    pub fn link_poses(&self, q: &DVector<f64>) -> Result<Vec<Pose>> {
        check_len("q", self.dof(), q.len())?;
        let mut poses = Vec::with_capacity(self.dof());
        let mut parent = Pose::identity();
        let mut origin_offset = Vector3::zeros();
        for (link, &qi) in self.links.iter().zip(q.iter()) {
            let pose = parent.compose(&link.rotation(qi), &origin_offset);
            origin_offset = link.joint_offset;
            parent = pose;
            poses.push(pose);
        }
        Ok(poses)
    }

    /// End-effector (tool point) pose in the base frame.
    pub fn end_effector_pose(&self, q: &DVector<f64>) -> Result<Pose> {
        let poses = self.link_poses(q)?;
        let last = poses.last().expect("non-empty chain");
        let tip = self.links.last().expect("non-empty chain").joint_offset;
        Ok(last.compose(&Matrix3::identity(), &tip))
    }

    pub fn com_positions(&self, q: &DVector<f64>) -> Result<Vec<Vector3<f64>>> {
        Ok(self
            .link_poses(q)?
            .iter()
            .zip(&self.links)
            .map(|(pose, link)| pose.transform_point(&link.com_offset))
            .collect())
    }

    /// Gravitational potential energy, zero at the base origin.
    pub fn potential_energy(&self, q: &DVector<f64>) -> Result<f64> {
        Ok(self
            .com_positions(q)?
            .iter()
            .zip(&self.links)
            .map(|(c, link)| -link.mass * self.gravity.dot(c))
            .sum())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# armlab robot model v1\n");
        out += &format!("gravity = {}\n", kv::join(self.gravity.iter().copied()));
        out += &format!(
            "base_angular_velocity = {}\n",
            kv::join(self.base_angular_velocity.iter().copied())
        );
        out += &format!(
            "base_angular_acceleration = {}\n",
            kv::join(self.base_angular_acceleration.iter().copied())
        );
        out += &format!(
            "base_linear_acceleration = {}\n",
            kv::join(self.base_linear_acceleration.iter().copied())
        );
        for link in &self.links {
            let i = &link.inertia;
            out += "\n[link]\n";
            out += &format!("mass = {:?}\n", link.mass);
            out += &format!("com_offset = {}\n", kv::join(link.com_offset.iter().copied()));
            out += &format!("joint_offset = {}\n", kv::join(link.joint_offset.iter().copied()));
            out += &format!(
                "inertia = {}\n",
                kv::join([i[(0, 0)], i[(1, 1)], i[(2, 2)], i[(0, 1)], i[(0, 2)], i[(1, 2)]])
            );
            let r = &link.fixed_rotation;
            out += &format!(
                "fixed_rotation = {}\n",
                kv::join((0..3).flat_map(|row| (0..3).map(move |col| r[(row, col)])))
            );
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let sections = kv::parse(text)?;
        let root = &sections[0];
        let vec3 = |s: &kv::Section, key: &str, default: Option<Vector3<f64>>| -> Result<Vector3<f64>> {
            match (s.get(key), default) {
                (Some(e), _) => Ok(Vector3::from_vec(e.floats_n(3)?)),
                (None, Some(d)) => Ok(d),
                (None, None) => Err(s.require(key).unwrap_err()),
            }
        };
        let gravity = vec3(root, "gravity", None)?;
        let zero = Some(Vector3::zeros());
        let base_angular_velocity = vec3(root, "base_angular_velocity", zero)?;
        let base_angular_acceleration = vec3(root, "base_angular_acceleration", zero)?;
        let base_linear_acceleration = vec3(root, "base_linear_acceleration", zero)?;

        let mut links = Vec::new();
        for section in &sections[1..] {
            if section.name != "link" {
                return Err(Error::Parse {
                    line: section.line,
                    msg: format!("unknown section [{}]", section.name),
                });
            }
            let idx = links.len() + 1;
            let ctx = |e: Error| match e {
                Error::Validation(msg) => {
                    Error::Validation(format!("link {idx} (line {}): {msg}", section.line))
                }
                other => other,
            };
            let mass = section.require("mass")?.float()?;
            let com_offset = vec3(section, "com_offset", None)?;
            let joint_offset = vec3(section, "joint_offset", None)?;
            let iv = section.require("inertia")?.floats_n(6)?;
            let inertia = Matrix3::new(
                iv[0], iv[3], iv[4], //
                iv[3], iv[1], iv[5], //
                iv[4], iv[5], iv[2],
            );
            let fixed_rotation = match section.get("fixed_rotation") {
                Some(e) => Matrix3::from_row_slice(&e.floats_n(9)?),
                None => Matrix3::identity(),
            };
            links.push(
                LinkParams::new(mass, com_offset, joint_offset, inertia, fixed_rotation)
                    .map_err(ctx)?,
            );
        }
        let model = RobotModel {
            links,
            gravity,
            base_angular_velocity,
            base_angular_acceleration,
            base_linear_acceleration,
        };
        model.validate()?;
        Ok(model)
    }
}

pub fn load_model(path: impl AsRef<Path>) -> Result<RobotModel> {
    RobotModel::from_text(&std::fs::read_to_string(path)?)
}

pub fn save_model(model: &RobotModel, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, model.to_text())?;
    Ok(())
}

pub const UR5_LINK_LENGTHS: [f64; 6] = [0.40, 0.20, 0.20, 0.17, 0.17, 0.126];
pub const UR5_LINK_MASSES: [f64; 6] = [3.0, 0.5, 0.5, 0.5, 0.5, 0.4];

/// Six-link UR5-like arm.
///
/// Joint 1 is vertical, joints 2-4 share a horizontal axis, joint 5 is
/// perpendicular to joint 4 and joint 6 perpendicular to joint 5. Link 1
/// rises along the base z axis; the remaining links extend along their own
/// x axes, so at `q = 0` the arm is stretched out horizontally.
pub fn ur5_default() -> RobotModel {
    let l = UR5_LINK_LENGTHS;
    let m = UR5_LINK_MASSES;
    let layout = [
        (Matrix3::identity(), Vector3::new(0.0, 0.0, l[0])),
        (rot_x(PI / 2.0), Vector3::new(l[1], 0.0, 0.0)),
        (Matrix3::identity(), Vector3::new(l[2], 0.0, 0.0)),
        (Matrix3::identity(), Vector3::new(l[3], 0.0, 0.0)),
        (rot_x(-PI / 2.0), Vector3::new(l[4], 0.0, 0.0)),
        (rot_x(PI / 2.0), Vector3::new(l[5], 0.0, 0.0)),
    ];
    let links = layout
        .iter()
        .zip(m)
        .map(|((rot, offset), mass)| LinkParams::thin_rod(mass, *offset, *rot))
        .collect::<Result<Vec<_>>>()
        .expect("UR5 parameters are valid");
    RobotModel::new(links).expect("UR5 parameters are valid")
}

/// Position, velocity and torque bounds of the actuated joints.
#[derive(Debug, Clone, PartialEq)]
pub struct JointLimits {
    pub q_min: DVector<f64>,
    pub q_max: DVector<f64>,
    pub qd_min: DVector<f64>,
    pub qd_max: DVector<f64>,
    pub torque: DVector<f64>,
}

impl JointLimits {
    pub fn ur5() -> Self {
        let q_max = DVector::from_vec(vec![PI, 0.8 * PI, 0.8 * PI, PI, PI, PI]);
        let qd_max = DVector::from_element(6, 0.81 * PI);
        JointLimits {
            q_min: -&q_max,
            q_max,
            qd_min: -&qd_max,
            qd_max,
            torque: DVector::from_vec(vec![102.0, 102.0, 66.0, 34.0, 34.0, 34.0]),
        }
    }

    /// Symmetric unbounded-state limits with the given torque bounds.
    pub fn torque_only(torque: DVector<f64>) -> Self {
        let n = torque.len();
        JointLimits {
            q_min: DVector::from_element(n, f64::NEG_INFINITY),
            q_max: DVector::from_element(n, f64::INFINITY),
            qd_min: DVector::from_element(n, f64::NEG_INFINITY),
            qd_max: DVector::from_element(n, f64::INFINITY),
            torque,
        }
    }

    pub fn dof(&self) -> usize {
        self.torque.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dof();
        for (what, v) in [
            ("q_min", &self.q_min),
            ("q_max", &self.q_max),
            ("qd_min", &self.qd_min),
            ("qd_max", &self.qd_max),
        ] {
            check_len(what, n, v.len())?;
        }
        for i in 0..n {
            if !(self.q_min[i] < self.q_max[i] && self.qd_min[i] < self.qd_max[i]) {
                return Err(Error::Validation(format!("joint {}: bounds need min < max", i + 1)));
            }
            if !(self.torque[i] > 0.0 && self.torque[i].is_finite()) {
                return Err(Error::Validation(format!("joint {}: torque bound must be > 0", i + 1)));
            }
        }
        Ok(())
    }

    pub fn contains(&self, q: &DVector<f64>, qd: &DVector<f64>) -> bool {
        (0..self.dof()).all(|i| {
            q[i] >= self.q_min[i] && q[i] <= self.q_max[i] && qd[i] >= self.qd_min[i] && qd[i] <= self.qd_max[i]
        })
    }
}
