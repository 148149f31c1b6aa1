//! armlab: a manipulator control laboratory.
//!
//! * [`robot_model`] - link parameters, frame conventions, model files.
//! * [`rne`] - recursive Newton-Euler inverse/forward dynamics.
//! * [`feedback`] - error features and six feedback laws.
//! * [`hybrid_mpc`] - the candidate-scaling predictive layer on top of a
//!   feedback law.
//! * [`stability`] - Lyapunov candidate and sufficient-condition checks.
//! * [`emulator`] - region-weighted expert sampling and an MLP torque
//!   emulator trained with Adam.
//! * [`simlab`] - closed-loop simulation, metrics and campaigns.

pub mod emulator;
pub mod error;
pub mod feedback;
pub mod hybrid_mpc;
pub mod kv;
pub mod rne;
pub mod robot_model;
pub mod simlab;
pub mod stability;

pub use error::{Error, Result};
pub use feedback::{ErrorVector, FeedbackController, FeedbackGains, FeedbackLaw, FeedbackState};
pub use hybrid_mpc::{CandidateRollout, MpcConfig, MpcDiagnostics, MpcPlan, Reference};
pub use rne::{JointState, KinematicPropagation, SpatialLoad};
pub use robot_model::{ur5_default, JointLimits, LinkParams, Pose, RobotModel};
pub use simlab::{Condition, EpisodeTrace, MetricSet, Mode};
