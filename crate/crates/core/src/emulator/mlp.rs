//! Fully connected ReLU network with a linear output layer, trained by
//! mini-batch Adam on the mean squared error.

use std::path::Path;

use nalgebra::{DMatrix, DVector, RowDVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kv;

pub const STD_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct Normalization {
    pub in_mean: DVector<f64>,
    pub in_std: DVector<f64>,
    pub out_mean: DVector<f64>,
    pub out_std: DVector<f64>,
}

impl Normalization {
    pub fn identity(n_in: usize, n_out: usize) -> Self {
        Normalization {
            in_mean: DVector::zeros(n_in),
            in_std: DVector::from_element(n_in, 1.0),
            out_mean: DVector::zeros(n_out),
            out_std: DVector::from_element(n_out, 1.0),
        }
    }

    pub fn normalize_input(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_fn(x.len(), |i, _| (x[i] - self.in_mean[i]) / self.in_std[i])
    }

    pub fn normalize_output(&self, y: &[f64]) -> DVector<f64> {
        DVector::from_fn(y.len(), |i, _| (y[i] - self.out_mean[i]) / self.out_std[i])
    }

    pub fn denormalize_output(&self, y: &DVector<f64>) -> DVector<f64> {
        y.component_mul(&self.out_std) + &self.out_mean
    }
}

fn column_stats(rows: &[Vec<f64>]) -> (DVector<f64>, DVector<f64>) {
    let n = rows[0].len();
    let count = rows.len() as f64;
    let mean = DVector::from_fn(n, |j, _| rows.iter().map(|r| r[j]).sum::<f64>() / count);
    let std = DVector::from_fn(n, |j, _| {
        let var = rows.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / count;
        var.sqrt().max(STD_FLOOR)
    });
    (mean, std)
}

/// Per-dimension mean and standard deviation (floored) of inputs and
/// outputs.
pub fn fit_normalization(inputs: &[Vec<f64>], outputs: &[Vec<f64>]) -> Result<Normalization> {
    if inputs.is_empty() || outputs.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    let (in_mean, in_std) = column_stats(inputs);
    let (out_mean, out_std) = column_stats(outputs);
    Ok(Normalization {
        in_mean,
        in_std,
        out_mean,
        out_std,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `fan_in x fan_out`, so a batch `X` (rows are samples) maps to `X W`.
    pub w: DMatrix<f64>,
    pub b: RowDVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmulatorNet {
    pub sizes: Vec<usize>,
    pub layers: Vec<Layer>,
    pub norm: Normalization,
}

/// Gradients in the same shape as the layers.
pub type Gradients = Vec<Layer>;

struct Activations {
    /// Layer inputs: `acts[0]` is the batch, `acts[l]` the post-ReLU output
    /// of hidden layer `l`.
    acts: Vec<DMatrix<f64>>,
    out: DMatrix<f64>,
}

impl EmulatorNet {
    /// He-uniform weights (bound `sqrt(6 / fan_in)`), zero biases, identity
    /// normalization.
    pub fn new(sizes: &[usize], seed: u64) -> Result<Self> {
        if sizes.len() < 2 || sizes.iter().any(|s| *s == 0) {
            return Err(Error::Validation(format!("bad layer sizes {sizes:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = sizes
            .windows(2)
            .map(|p| {
                let bound = (6.0 / p[0] as f64).sqrt();
                Layer {
                    w: DMatrix::from_fn(p[0], p[1], |_, _| rng.gen_range(-bound..bound)),
                    b: RowDVector::zeros(p[1]),
                }
            })
            .collect();
        Ok(EmulatorNet {
            sizes: sizes.to_vec(),
            layers,
            norm: Normalization::identity(sizes[0], *sizes.last().unwrap()),
        })
    }

    pub fn n_in(&self) -> usize {
        self.sizes[0]
    }

    pub fn n_out(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    fn forward_batch(&self, x: &DMatrix<f64>) -> Activations {
        let mut acts = Vec::with_capacity(self.layers.len());
        let mut a = x.clone();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = &a * &layer.w;
            for mut row in z.row_iter_mut() {
                row += &layer.b;
            }
            acts.push(a);
            if l < last {
                z.apply(|v| *v = v.max(0.0));
            }
            a = z;
        }
        Activations { acts, out: a }
    }

    /// Network output in normalized units for a batch of normalized inputs.
    pub fn forward_normalized(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.forward_batch(x).out
    }

    /// Physical-units prediction for one raw input.
    pub fn predict(&self, s: &[f64]) -> Result<DVector<f64>> {
        if s.len() != self.n_in() {
            return Err(Error::DimensionMismatch {
                what: "emulator input",
                expected: self.n_in(),
                got: s.len(),
            });
        }
        if s.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("emulator input"));
        }
        let mut a = self.norm.normalize_input(s);
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = layer.w.tr_mul(&a);
            z += layer.b.transpose();
            if l < last {
                z.apply(|v| *v = v.max(0.0));
            }
            a = z;
        }
        let out = self.norm.denormalize_output(&a);
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("emulator output"));
        }
        Ok(out)
    }

    /// Mean over the batch of the squared error summed over outputs, and
    /// its gradient. Inputs and targets are in normalized units.
    pub fn loss_and_gradient(&self, x: &DMatrix<f64>, y: &DMatrix<f64>) -> (f64, Gradients) {
        let b = x.nrows() as f64;
        let act = self.forward_batch(x);
        let diff = &act.out - y;
        let loss = diff.norm_squared() / b;
        let mut dz = diff * (2.0 / b);
        let mut grads: Vec<Layer> = Vec::with_capacity(self.layers.len());
        for l in (0..self.layers.len()).rev() {
            let a_prev = &act.acts[l];
            let gw = a_prev.transpose() * &dz;
            let gb = RowDVector::from_fn(dz.ncols(), |_, j| dz.column(j).sum());
            if l > 0 {
                let mut da = &dz * self.layers[l].w.transpose();
                da.zip_apply(a_prev, |d, a| {
                    if a <= 0.0 {
                        *d = 0.0
                    }
                });
                dz = da;
            }
            grads.push(Layer { w: gw, b: gb });
        }
        grads.reverse();
        (loss, grads)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# feed-forward torque emulator\nformat = armlab-mlp\nversion = 1\n");
        let sizes: Vec<String> = self.sizes.iter().map(|s| s.to_string()).collect();
        out += &format!("sizes = {}\n", sizes.join(" "));
        let n = &self.norm;
        for (key, v) in [
            ("in_mean", &n.in_mean),
            ("in_std", &n.in_std),
            ("out_mean", &n.out_mean),
            ("out_std", &n.out_std),
        ] {
            out += &format!("{key} = {}\n", kv::join(v.iter().copied()));
        }
        for (l, layer) in self.layers.iter().enumerate() {
            // row-major fan_in x fan_out
            let w = (0..layer.w.nrows()).flat_map(|r| (0..layer.w.ncols()).map(move |c| (r, c)));
            out += &format!("w{l} = {}\n", kv::join(w.map(|(r, c)| layer.w[(r, c)])));
            out += &format!("b{l} = {}\n", kv::join(layer.b.iter().copied()));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let sections = kv::parse(text)?;
        let root = sections
            .iter()
            .find(|s| s.name.is_empty())
            .ok_or(Error::Empty("network file"))?;
        let format = root.require("format")?;
        if format.words() != ["armlab-mlp"] {
            return Err(Error::Parse {
                line: format.line,
                msg: "not an armlab-mlp file".into(),
            });
        }
        let version = root.require("version")?;
        if version.usize()? != 1 {
            return Err(Error::Parse {
                line: version.line,
                msg: "unsupported network file version".into(),
            });
        }
        let sizes_entry = root.require("sizes")?;
        let sizes: Vec<usize> = sizes_entry
            .words()
            .iter()
            .map(|w| w.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse {
                line: sizes_entry.line,
                msg: format!("bad layer size: {e}"),
            })?;
        let mut net = EmulatorNet::new(&sizes, 0)?;
        let n_in = net.n_in();
        let n_out = net.n_out();
        let vec_n = |key: &str, n: usize| -> Result<DVector<f64>> {
            Ok(DVector::from_vec(root.require(key)?.floats_n(n)?))
        };
        net.norm = Normalization {
            in_mean: vec_n("in_mean", n_in)?,
            in_std: vec_n("in_std", n_in)?,
            out_mean: vec_n("out_mean", n_out)?,
            out_std: vec_n("out_std", n_out)?,
        };
        if net.norm.in_std.iter().chain(net.norm.out_std.iter()).any(|s| !(*s > 0.0)) {
            return Err(Error::Validation("normalization std must be > 0".into()));
        }
        for (l, layer) in net.layers.iter_mut().enumerate() {
            let (r, c) = layer.w.shape();
            let w = root.require(&format!("w{l}"))?.floats_n(r * c)?;
            layer.w = DMatrix::from_row_slice(r, c, &w);
            layer.b = RowDVector::from_vec(root.require(&format!("b{l}"))?.floats_n(c)?);
        }
        Ok(net)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub hidden: Vec<usize>,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub epochs: usize,
    pub val_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden: vec![128, 128],
            batch_size: 256,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            epochs: 300,
            val_fraction: 0.1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Validation("batch size must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.adam_eps > 0.0) {
            return Err(Error::Validation("learning rate and epsilon must be > 0".into()));
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return Err(Error::Validation("Adam moments must be in [0, 1)".into()));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(Error::Validation("validation fraction must be in (0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train: f64,
    pub validation: f64,
}

/// Seeded split of `0..n` into (train, validation) index sets.
pub fn split_indices(n: usize, val_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5eed));
    let n_val = ((n as f64 * val_fraction).round() as usize).clamp(usize::from(n > 1), n.saturating_sub(1));
    let val = idx.split_off(n - n_val);
    (idx, val)
}

fn gather(rows: &[DVector<f64>], idx: &[usize]) -> DMatrix<f64> {
    let cols = rows[0].len();
    DMatrix::from_fn(idx.len(), cols, |r, c| rows[idx[r]][c])
}

fn batched_loss(net: &EmulatorNet, x: &[DVector<f64>], y: &[DVector<f64>], idx: &[usize]) -> f64 {
    if idx.is_empty() {
        return 0.0;
    }
    let mut total = 0.0;
    for chunk in idx.chunks(4096) {
        let out = net.forward_normalized(&gather(x, chunk));
        total += (out - gather(y, chunk)).norm_squared();
    }
    total / idx.len() as f64
}

struct Adam {
    m: Vec<Layer>,
    v: Vec<Layer>,
    t: i32,
}

impl Adam {
    fn new(net: &EmulatorNet) -> Self {
        let zero = |l: &Layer| Layer {
            w: DMatrix::zeros(l.w.nrows(), l.w.ncols()),
            b: RowDVector::zeros(l.b.len()),
        };
        Adam {
            m: net.layers.iter().map(zero).collect(),
            v: net.layers.iter().map(zero).collect(),
            t: 0,
        }
    }

    fn step(&mut self, net: &mut EmulatorNet, grads: &[Layer], cfg: &TrainConfig) {
        self.t += 1;
        let (b1, b2) = (cfg.beta1, cfg.beta2);
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        let lr = cfg.learning_rate;
        let eps = cfg.adam_eps;
        let update = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
            }
        };
        for (l, layer) in net.layers.iter_mut().enumerate() {
            update(
                layer.w.as_mut_slice(),
                grads[l].w.as_slice(),
                self.m[l].w.as_mut_slice(),
                self.v[l].w.as_mut_slice(),
            );
            update(
                layer.b.as_mut_slice(),
                grads[l].b.as_slice(),
                self.m[l].b.as_mut_slice(),
                self.v[l].b.as_mut_slice(),
            );
        }
    }
}

/// Trains `net` in place on raw (physical-unit) rows, using the net's
/// current normalization. Returns per-epoch train/validation losses in
/// normalized units.
pub fn train(
    inputs: &[Vec<f64>],
    outputs: &[Vec<f64>],
    net: &mut EmulatorNet,
    cfg: &TrainConfig,
) -> Result<Vec<EpochLoss>> {
    cfg.validate()?;
    if inputs.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    if inputs.len() != outputs.len() {
        return Err(Error::DimensionMismatch {
            what: "labels",
            expected: inputs.len(),
            got: outputs.len(),
        });
    }
    let x: Vec<DVector<f64>> = inputs.iter().map(|r| net.norm.normalize_input(r)).collect();
    let y: Vec<DVector<f64>> = outputs.iter().map(|r| net.norm.normalize_output(r)).collect();
    if x[0].len() != net.n_in() || y[0].len() != net.n_out() {
        return Err(Error::DimensionMismatch {
            what: "dataset row",
            expected: net.n_in() + net.n_out(),
            got: x[0].len() + y[0].len(),
        });
    }
    let (mut train_idx, val_idx) = split_indices(inputs.len(), cfg.val_fraction, cfg.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(net);
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        train_idx.shuffle(&mut rng);
        let mut sum = 0.0;
        for batch in train_idx.chunks(cfg.batch_size) {
            let (loss, grads) = net.loss_and_gradient(&gather(&x, batch), &gather(&y, batch));
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch });
            }
            sum += loss * batch.len() as f64;
            adam.step(net, &grads, cfg);
        }
        let validation = batched_loss(net, &x, &y, &val_idx);
        if !validation.is_finite() {
            return Err(Error::Divergence { epoch });
        }
        history.push(EpochLoss {
            epoch,
            train: sum / train_idx.len() as f64,
            validation,
        });
    }
    Ok(history)
}

/// Builds a net with `cfg.hidden`, fits normalization on the training split
/// and trains it.
pub fn fit(inputs: &[Vec<f64>], outputs: &[Vec<f64>], cfg: &TrainConfig) -> Result<(EmulatorNet, Vec<EpochLoss>)> {
    if inputs.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    let mut sizes = vec![inputs[0].len()];
    sizes.extend(&cfg.hidden);
    sizes.push(outputs[0].len());
    let mut net = EmulatorNet::new(&sizes, cfg.seed)?;
    let (train_idx, _) = split_indices(inputs.len(), cfg.val_fraction, cfg.seed);
    let pick = |rows: &[Vec<f64>]| train_idx.iter().map(|&i| rows[i].clone()).collect::<Vec<_>>();
    net.norm = fit_normalization(&pick(inputs), &pick(outputs))?;
    let history = train(inputs, outputs, &mut net, cfg)?;
    Ok((net, history))
}

/// Mean over rows of the squared prediction error summed over outputs, in
/// physical units.
pub fn evaluate(net: &EmulatorNet, inputs: &[Vec<f64>], outputs: &[Vec<f64>]) -> Result<f64> {
    if inputs.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    let mut total = 0.0;
    for (s, y) in inputs.iter().zip(outputs) {
        let p = net.predict(s)?;
        total += p.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
    }
    Ok(total / inputs.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn single_sample_path_matches_batch() {
        let mut net = EmulatorNet::new(&[5, 9, 7, 3], 4).unwrap();
        for l in &mut net.layers {
            l.b.iter_mut().enumerate().for_each(|(i, b)| *b = 0.1 * i as f64 - 0.2);
        }
        let rows = [[0.3, -1.0, 0.5, 2.0, -0.7], [1.5, 0.2, -0.3, 0.0, 0.9]];
        let x = DMatrix::from_fn(2, 5, |i, j| rows[i][j]);
        let batch = net.forward_normalized(&x);
        for (i, r) in rows.iter().enumerate() {
            let one = net.predict(r).unwrap();
            for j in 0..3 {
                assert_relative_eq!(one[j], batch[(i, j)], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn zero_net_outputs_mean() {
        let mut net = EmulatorNet::new(&[4, 8, 3], 1).unwrap();
        for l in &mut net.layers {
            l.w.fill(0.0);
            l.b.fill(0.0);
        }
        net.norm.out_mean = DVector::from_column_slice(&[1.0, -2.0, 3.0]);
        net.norm.out_std = DVector::from_element(3, 5.0);
        let out = net.predict(&[0.3, 0.1, -4.0, 2.0]).unwrap();
        assert_eq!(out, net.norm.out_mean);
    }

    #[test]
    fn passthrough_layer() {
        let mut net = EmulatorNet::new(&[3, 2], 0).unwrap();
        net.layers[0].w = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        let out = net.predict(&[0.5, 9.0, -1.5]).unwrap();
        assert_eq!(out.as_slice(), &[0.5, -1.5]);
    }

    #[test]
    fn normalization_floor_and_roundtrip() {
        let inputs: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 4.0]).collect();
        let outputs: Vec<Vec<f64>> = (0..10).map(|i| vec![2.0 * i as f64 - 3.0]).collect();
        let n = fit_normalization(&inputs, &outputs).unwrap();
        assert_eq!(n.in_std[1], STD_FLOOR);
        assert_eq!(n.normalize_input(&[3.0, 4.0])[1], 0.0);
        let y = n.normalize_output(&[5.5]);
        assert!((n.denormalize_output(&y)[0] - 5.5).abs() < 1e-10);
        assert!(fit_normalization(&[], &[]).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut net = EmulatorNet::new(&[5, 7, 6, 3], 4).unwrap();
        for l in &mut net.layers {
            l.b.apply(|b| *b = rng.gen_range(-0.5..0.5));
        }
        let x = DMatrix::from_fn(9, 5, |_, _| rng.gen_range(-1.0..1.0));
        let y = DMatrix::from_fn(9, 3, |_, _| rng.gen_range(-1.0..1.0));
        let (_, grads) = net.loss_and_gradient(&x, &y);
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        for l in 0..net.layers.len() {
            for i in 0..net.layers[l].w.len() {
                let mut p = net.clone();
                p.layers[l].w.as_mut_slice()[i] += h;
                let mut m = net.clone();
                m.layers[l].w.as_mut_slice()[i] -= h;
                let fd = (p.loss_and_gradient(&x, &y).0 - m.loss_and_gradient(&x, &y).0) / (2.0 * h);
                let g = grads[l].w.as_slice()[i];
                worst = worst.max((fd - g).abs() / g.abs().max(1e-3));
            }
        }
        assert!(worst < 1e-5, "{worst}");
    }

    #[test]
    fn zero_epochs_leave_net_unchanged() {
        let inputs: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, 1.0]).collect();
        let outputs: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64]).collect();
        let mut net = EmulatorNet::new(&[2, 4, 1], 3).unwrap();
        let before = net.clone();
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        assert!(train(&inputs, &outputs, &mut net, &cfg).unwrap().is_empty());
        assert_eq!(net, before);
    }

    #[test]
    fn overfits_single_sample() {
        let inputs = vec![vec![0.2, -0.4, 0.9]; 8];
        let outputs = vec![vec![1.5, -0.5]; 8];
        let mut net = EmulatorNet::new(&[3, 16, 2], 5).unwrap();
        let cfg = TrainConfig {
            hidden: vec![16],
            batch_size: 8,
            learning_rate: 1e-2,
            epochs: 300,
            val_fraction: 0.25,
            ..TrainConfig::default()
        };
        let hist = train(&inputs, &outputs, &mut net, &cfg).unwrap();
        assert!(hist.last().unwrap().train < 1e-6);
        let start = hist[0].train;
        assert!(hist.iter().all(|e| e.train <= start));
    }

    #[test]
    fn deterministic_training() {
        let inputs: Vec<Vec<f64>> = (0..200).map(|i| vec![(i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()]).collect();
        let outputs: Vec<Vec<f64>> = inputs.iter().map(|r| vec![r[0] * r[1]]).collect();
        let cfg = TrainConfig {
            hidden: vec![8],
            batch_size: 32,
            epochs: 5,
            seed: 9,
            ..TrainConfig::default()
        };
        let (a, ha) = fit(&inputs, &outputs, &cfg).unwrap();
        let (b, hb) = fit(&inputs, &outputs, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(ha, hb);
    }

    #[test]
    fn divergence_is_reported() {
        let inputs: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let outputs: Vec<Vec<f64>> = (0..10).map(|_| vec![f64::NAN]).collect();
        let mut net = EmulatorNet::new(&[1, 2, 1], 0).unwrap();
        let cfg = TrainConfig {
            epochs: 3,
            ..TrainConfig::default()
        };
        assert!(matches!(train(&inputs, &outputs, &mut net, &cfg), Err(Error::Divergence { epoch: 0 })));
    }

    #[test]
    fn text_roundtrip() {
        let mut net = EmulatorNet::new(&[3, 5, 2], 8).unwrap();
        net.norm.in_mean[1] = 0.123456789012345;
        let back = EmulatorNet::from_text(&net.to_text()).unwrap();
        assert_eq!(back, net);
        let x = [0.1, 0.2, 0.3];
        assert_relative_eq!(back.predict(&x).unwrap()[0], net.predict(&x).unwrap()[0]);
        assert!(EmulatorNet::from_text("format = other\nversion = 1\n").is_err());
        assert!(EmulatorNet::from_text(&net.to_text().replace("version = 1", "version = 2")).is_err());
    }
}
