//! Expert-data sampling and the learned torque emulator.

mod dataset;
pub mod mlp;
pub mod sampling;

use nalgebra::DVector;

pub use dataset::{collect_pool, label_with_expert, random_conditions, ExpertDataset, RawPool, RawSample};
pub use mlp::{evaluate, fit, fit_normalization, train, EmulatorNet, EpochLoss, Normalization, TrainConfig};
pub use sampling::{
    allocate_counts, allocate_samples, brute_force_weights, build_regions, default_regions, difficulty,
    optimal_weights, PlanKind, RegionSpec, SamplingPlan,
};

use crate::error::{check_len, Result};
use crate::feedback::saturate;
use crate::rne::JointState;

/// Emulator input `(q, e, qd, ed, tau_fb)`.
pub fn state_vector(state: &JointState, ref_q: &DVector<f64>, ref_qd: &DVector<f64>, tau_fb: &DVector<f64>) -> Vec<f64> {
    let e = ref_q - &state.q;
    let ed = ref_qd - &state.qd;
    state
        .q
        .iter()
        .chain(e.iter())
        .chain(state.qd.iter())
        .chain(ed.iter())
        .chain(tau_fb.iter())
        .copied()
        .collect()
}

/// Learned stand-in for the predictive layer: one network evaluation,
/// saturated to the torque bounds.
pub fn lmpc_step(
    net: &EmulatorNet,
    state: &JointState,
    ref_q: &DVector<f64>,
    ref_qd: &DVector<f64>,
    tau_fb: &DVector<f64>,
    torque_bounds: &DVector<f64>,
) -> Result<DVector<f64>> {
    check_len("tau_fb", state.dof(), tau_fb.len())?;
    let out = net.predict(&state_vector(state, ref_q, ref_qd, tau_fb))?;
    Ok(saturate(&out, torque_bounds))
}
