//! Shared fixtures for the criterion benches.

use armlab::emulator::EmulatorNet;
use armlab::robot_model::{rot_x, LinkParams};
use armlab::simlab::{builtin_condition, Condition};
use armlab::{ur5_default, FeedbackGains, JointState, MpcConfig, RobotModel};
use nalgebra::{DVector, Vector3};

pub struct Fixture {
    pub model: RobotModel,
    pub gains: FeedbackGains,
    pub mpc: MpcConfig,
    pub state: JointState,
    pub cond: Condition,
    pub net: EmulatorNet,
}

impl Fixture {
    pub fn ur5() -> Self {
        let model = ur5_default();
        let n = model.dof();
        Fixture {
            state: spread_state(n),
            gains: FeedbackGains::ur5(),
            mpc: MpcConfig::ur5(),
            cond: builtin_condition(1).expect("built-in condition"),
            net: EmulatorNet::new(&[5 * n, 128, 128, n], 0).expect("valid sizes"),
            model,
        }
    }

    pub fn reference(&self, t: f64) -> (DVector<f64>, DVector<f64>) {
        self.cond.reference(t)
    }
}

/// A fixed, non-singular state with every joint moving.
pub fn spread_state(n: usize) -> JointState {
    JointState {
        q: DVector::from_fn(n, |i, _| 0.3 * ((i as f64 + 1.0) * 0.7).sin()),
        qd: DVector::from_fn(n, |i, _| 0.2 * ((i as f64 + 1.0) * 1.3).cos()),
    }
}

/// `n` thin rods of 0.2 m and 0.5 kg with alternating joint axes, for
/// scaling runs.
pub fn rod_chain(n: usize) -> RobotModel {
    let links = (0..n)
        .map(|i| {
            let rot = if i % 2 == 0 { rot_x(std::f64::consts::FRAC_PI_2) } else { rot_x(0.0) };
            LinkParams::thin_rod(0.5, Vector3::new(0.2, 0.0, 0.0), rot).expect("valid rod")
        })
        .collect();
    RobotModel::new(links).expect("valid chain")
}
