use std::io::{BufRead, Write};
use std::path::Path;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::sampling::{allocate_samples, region_of, RegionSpec, SamplingPlan};
use super::state_vector;
use crate::error::{Error, Result};
use crate::feedback::FeedbackLaw;
use crate::hybrid_mpc::{hmpc_plan, MpcConfig};
use crate::rne::JointState;
use crate::robot_model::{JointLimits, RobotModel};
use crate::simlab::{run_episode, Condition, EpisodeSetup, Mode};

/// One recorded closed-loop sample, enough to re-run the expert on it.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSample {
    pub condition: usize,
    pub law: FeedbackLaw,
    pub t: f64,
    pub state: JointState,
    pub ref_q: DVector<f64>,
    pub ref_qd: DVector<f64>,
    pub tau_fb: DVector<f64>,
}

impl RawSample {
    pub fn input(&self) -> Vec<f64> {
        state_vector(&self.state, &self.ref_q, &self.ref_qd, &self.tau_fb)
    }
}

/// Feedback-only runs over a set of conditions.
#[derive(Debug, Clone)]
pub struct RawPool {
    pub conditions: Vec<Condition>,
    pub samples: Vec<RawSample>,
}

/// Random data-collection conditions: amplitudes within `±pi/2`,
/// frequencies in `[0.05, 0.2]` Hz, 5 s, with the standard disturbance.
pub fn random_conditions(count: usize, seed: u64, first_id: usize) -> Vec<Condition> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let amp = [std::f64::consts::FRAC_PI_2; 6];
    (0..count)
        .map(|i| Condition::random(first_id + i, &mut rng, &amp, (0.05, 0.2), 5.0))
        .collect()
}

/// Runs every law in feedback-only mode on every condition and keeps all
/// samples. Episodes run in parallel; the output order is fixed.
pub fn collect_pool(setup: &EpisodeSetup<'_>, conditions: Vec<Condition>, laws: &[FeedbackLaw], seed: u64) -> Result<RawPool> {
    let cells: Vec<(usize, FeedbackLaw)> = (0..conditions.len())
        .flat_map(|c| laws.iter().map(move |l| (c, *l)))
        .collect();
    let chunks: Vec<Vec<RawSample>> = cells
        .par_iter()
        .map(|&(c, law)| {
            let trace = run_episode(setup, Mode::Fb, law, &conditions[c], seed)?;
            Ok((0..trace.len())
                .map(|k| RawSample {
                    condition: c,
                    law,
                    t: trace.t[k],
                    state: JointState {
                        q: trace.q[k].clone(),
                        qd: trace.qd[k].clone(),
                    },
                    ref_q: trace.ref_q[k].clone(),
                    ref_qd: trace.ref_qd[k].clone(),
                    tau_fb: trace.tau_fb[k].clone(),
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(RawPool {
        conditions,
        samples: chunks.into_iter().flatten().collect(),
    })
}

impl RawPool {
    /// Sample indices grouped by region.
    pub fn by_region(&self, regions: &[RegionSpec]) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); regions.len()];
        for (i, s) in self.samples.iter().enumerate() {
            if let Some(r) = region_of(regions, s.t) {
                out[r].push(i);
            }
        }
        out
    }

    /// Picks sample indices following `plan`.
    pub fn allocate(&self, regions: &[RegionSpec], plan: &SamplingPlan, seed: u64) -> Result<Vec<usize>> {
        allocate_samples(&self.by_region(regions), &plan.counts, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    /// Uniform draw without replacement over the whole pool.
    pub fn uniform_indices(&self, count: usize, seed: u64) -> Result<Vec<usize>> {
        let all = vec![(0..self.samples.len()).collect::<Vec<_>>()];
        allocate_samples(&all, &[count], &mut ChaCha8Rng::seed_from_u64(seed))
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExpertDataset {
    pub inputs: Vec<Vec<f64>>,
    pub labels: Vec<Vec<f64>>,
}

impl ExpertDataset {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn subset(&self, idx: &[usize]) -> ExpertDataset {
        ExpertDataset {
            inputs: idx.iter().map(|&i| self.inputs[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i].clone()).collect(),
        }
    }

    /// True when every row respects the joint box, the torque bounds on
    /// `tau_fb` and on the label.
    pub fn row_admissible(input: &[f64], label: &[f64], limits: &JointLimits) -> bool {
        let n = limits.dof();
        if input.len() != 5 * n || label.len() != n {
            return false;
        }
        (0..n).all(|j| {
            let q = input[j];
            let qd = input[2 * n + j];
            let fb = input[4 * n + j];
            let bound = limits.torque[j];
            (limits.q_min[j]..=limits.q_max[j]).contains(&q)
                && (limits.qd_min[j]..=limits.qd_max[j]).contains(&qd)
                && fb.abs() <= bound
                && label[j].abs() <= bound
        }) && input.iter().chain(label).all(|x| x.is_finite())
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let n = self.labels.first().map_or(6, |l| l.len());
        writeln!(w, "# armlab expert dataset")?;
        writeln!(w, "# inputs: q e qd ed tau_fb ({n} each); labels: tau_star ({n})")?;
        let mut names = Vec::new();
        for p in ["q", "e", "qd", "ed", "tau_fb", "tau_star"] {
            names.extend((1..=n).map(|j| format!("{p}{j}")));
        }
        writeln!(w, "{}", names.join(","))?;
        for (x, y) in self.inputs.iter().zip(&self.labels) {
            let row: Vec<String> = x.iter().chain(y).map(|v| format!("{v:?}")).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_csv(f)
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut ds = ExpertDataset::default();
        let mut width = None;
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if width.is_none() {
                let cols = line.split(',').count();
                if cols % 6 != 0 {
                    return Err(Error::Parse {
                        line: i + 1,
                        msg: format!("expected 6n columns, got {cols}"),
                    });
                }
                width = Some(cols);
                if line.starts_with('q') {
                    continue;
                }
            }
            let vals: Vec<f64> = line
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse {
                    line: i + 1,
                    msg: e.to_string(),
                })?;
            let cols = width.unwrap();
            if vals.len() != cols {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: format!("expected {cols} values, got {}", vals.len()),
                });
            }
            let split = cols / 6 * 5;
            ds.inputs.push(vals[..split].to_vec());
            ds.labels.push(vals[split..].to_vec());
        }
        Ok(ds)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_csv(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

/// Labels the selected pool samples with the predictive layer, which is
/// handed the recorded feedback torque. Samples whose expert call fails or
/// whose row is inadmissible are dropped; their count is returned.
pub fn label_with_expert(
    model: &RobotModel,
    mpc: &MpcConfig,
    pool: &RawPool,
    indices: &[usize],
) -> (ExpertDataset, usize) {
    let rows: Vec<Option<(Vec<f64>, Vec<f64>)>> = indices
        .par_iter()
        .map(|&i| {
            let s = &pool.samples[i];
            let cond = &pool.conditions[s.condition];
            let plan = hmpc_plan(model, &s.state, s.t, cond, &s.tau_fb, mpc).ok()?;
            let x = s.input();
            let y = plan.tau.as_slice().to_vec();
            ExpertDataset::row_admissible(&x, &y, &mpc.limits).then_some((x, y))
        })
        .collect();
    let mut ds = ExpertDataset::default();
    let mut dropped = 0;
    for r in rows {
        match r {
            Some((x, y)) => {
                ds.inputs.push(x);
                ds.labels.push(y);
            }
            None => dropped += 1,
        }
    }
    (ds, dropped)
}
