//! Learned inverse map from limb kinematics to tendon activations.
//!
//! A one-hidden-layer perceptron with identity activations, trained with
//! mini-batch ADAM on the mean squared error over all outputs. Inputs are
//! divided by per-channel factors fitted once on calibration babbling.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::TrainError;
use crate::limb::clamp_unit;

pub const KINEMATIC_INPUTS: usize = 6;
pub const TENDONS: usize = 3;
pub const PER_LIMB_HIDDEN: usize = 6;
pub const WHOLE_BODY_HIDDEN: usize = 24;

/// Channels whose calibration spread falls below this get factor 1.
const DEGENERATE_SPREAD: f64 = 1e-9;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleMode {
    /// Divide by the sample standard deviation.
    #[default]
    StdDev,
    /// Divide by the sample variance.
    Variance,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scaler {
    pub factors: Vec<f64>,
    pub mode: ScaleMode,
}

impl Scaler {
    pub fn identity(channels: usize) -> Self {
        Scaler {
            factors: vec![1.0; channels],
            mode: ScaleMode::StdDev,
        }
    }

    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        for ((o, v), s) in out.iter_mut().zip(x).zip(&self.factors) {
            *o = v / s;
        }
    }
}

/// Fits per-channel factors on calibration data (n − 1 denominator).
pub fn calibrate_scaler(data: &Dataset, mode: ScaleMode) -> Result<Scaler, TrainError> {
    let n = data.len();
    if n == 0 {
        return Err(TrainError::EmptyDataset);
    }
    let mut factors = Vec::with_capacity(data.inputs());
    for ch in 0..data.inputs() {
        let mean = (0..n).map(|i| data.input(i)[ch]).sum::<f64>() / n as f64;
        let ss: f64 = (0..n).map(|i| (data.input(i)[ch] - mean).powi(2)).sum();
        let var = if n > 1 { ss / (n - 1) as f64 } else { 0.0 };
        let std = var.sqrt();
        if !(std >= DEGENERATE_SPREAD) {
            log::warn!("input channel {ch} has spread {std:e} in calibration data; leaving it unscaled");
            factors.push(1.0);
            continue;
        }
        factors.push(match mode {
            ScaleMode::StdDev => std,
            ScaleMode::Variance => var,
        });
    }
    Ok(Scaler { factors, mode })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Babble,
    Refinement(u32),
}

impl Phase {
    pub fn tag(self) -> String {
        match self {
            Phase::Babble => "babble".into(),
            Phase::Refinement(k) => format!("refinement-{k}"),
        }
    }

    pub fn parse(s: &str) -> Option<Phase> {
        if s == "babble" {
            return Some(Phase::Babble);
        }
        s.strip_prefix("refinement-")?.parse().ok().map(Phase::Refinement)
    }
}

/// Append-only collection of (kinematics → activation) training pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    inputs: usize,
    outputs: usize,
    x: Vec<f64>,
    y: Vec<f64>,
    phases: Vec<Phase>,
}

impl Dataset {
    pub fn new(inputs: usize, outputs: usize) -> Self {
        Dataset {
            inputs,
            outputs,
            x: Vec::new(),
            y: Vec::new(),
            phases: Vec::new(),
        }
    }

    pub fn per_limb() -> Self {
        Dataset::new(KINEMATIC_INPUTS, TENDONS)
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn len(&self) -> usize {
        self.phases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phases.is_empty()
    }

    /// Panics on shape mismatch or non-finite input; targets must lie in
    /// `[0, 1]`.
    pub fn push(&mut self, input: &[f64], target: &[f64], phase: Phase) {
        assert_eq!(input.len(), self.inputs, "input width");
        assert_eq!(target.len(), self.outputs, "target width");
        assert!(input.iter().all(|v| v.is_finite()), "non-finite input {input:?}");
        assert!(
            target.iter().all(|v| (0.0..=1.0).contains(v)),
            "target outside [0, 1]: {target:?}"
        );
        self.x.extend_from_slice(input);
        self.y.extend_from_slice(target);
        self.phases.push(phase);
    }

    pub fn extend(&mut self, other: &Dataset) {
        assert_eq!((self.inputs, self.outputs), (other.inputs, other.outputs));
        self.x.extend_from_slice(&other.x);
        self.y.extend_from_slice(&other.y);
        self.phases.extend_from_slice(&other.phases);
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.x[i * self.inputs..(i + 1) * self.inputs]
    }

    pub fn target(&self, i: usize) -> &[f64] {
        &self.y[i * self.outputs..(i + 1) * self.outputs]
    }

    pub fn phase(&self, i: usize) -> Phase {
        self.phases[i]
    }

    /// Copy of the first `n` samples.
    pub fn head(&self, n: usize) -> Dataset {
        let n = n.min(self.len());
        Dataset {
            inputs: self.inputs,
            outputs: self.outputs,
            x: self.x[..n * self.inputs].to_vec(),
            y: self.y[..n * self.outputs].to_vec(),
            phases: self.phases[..n].to_vec(),
        }
    }

    pub fn count_phase(&self, phase: Phase) -> usize {
        self.phases.iter().filter(|p| **p == phase).count()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 128,
            adam: AdamConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    /// Mean squared error over the whole dataset after the last epoch.
    pub final_mse: f64,
    /// Mean mini-batch loss of each epoch.
    pub epoch_losses: Vec<f64>,
}

/// ADAM moment accumulators over the flattened parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

/// Collapsed form `y = A x + c` of the network, in raw input units.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineMap {
    /// Row-major `outputs × inputs`.
    pub matrix: Vec<f64>,
    pub offset: Vec<f64>,
}

/// Parameters are stored flat as `[W₁ | b₁ | W₂ | b₂]`, matrices row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct InverseMap {
    inputs: usize,
    hidden: usize,
    outputs: usize,
    scaler: Scaler,
    params: Vec<f64>,
    adam: AdamState,
}

impl InverseMap {
    /// All weights and biases zero.
    pub fn zeros(inputs: usize, hidden: usize, outputs: usize) -> Self {
        let count = hidden * inputs + hidden + outputs * hidden + outputs;
        InverseMap {
            inputs,
            hidden,
            outputs,
            scaler: Scaler::identity(inputs),
            params: vec![0.0; count],
            adam: AdamState {
                step: 0,
                m: vec![0.0; count],
                v: vec![0.0; count],
            },
        }
    }

    /// Weights uniform in `±1/√fan_in`, biases zero.
    pub fn new(inputs: usize, hidden: usize, outputs: usize, seed: u64) -> Self {
        let mut map = InverseMap::zeros(inputs, hidden, outputs);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r1 = 1.0 / (inputs as f64).sqrt();
        for w in map.w1_mut() {
            *w = rng.gen_range(-r1..r1);
        }
        let r2 = 1.0 / (hidden as f64).sqrt();
        for w in map.w2_mut() {
            *w = rng.gen_range(-r2..r2);
        }
        map
    }

    pub fn per_limb(hidden: usize, seed: u64) -> Self {
        InverseMap::new(KINEMATIC_INPUTS, hidden, TENDONS, seed)
    }

    pub(crate) fn from_parts(
        inputs: usize,
        hidden: usize,
        outputs: usize,
        scaler: Scaler,
        params: Vec<f64>,
        adam: AdamState,
    ) -> Self {
        InverseMap {
            inputs,
            hidden,
            outputs,
            scaler,
            params,
            adam,
        }
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }
    pub fn hidden(&self) -> usize {
        self.hidden
    }
    pub fn outputs(&self) -> usize {
        self.outputs
    }
    pub fn scaler(&self) -> &Scaler {
        &self.scaler
    }
    pub fn adam_state(&self) -> &AdamState {
        &self.adam
    }
    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn set_scaler(&mut self, scaler: Scaler) {
        assert_eq!(scaler.factors.len(), self.inputs);
        self.scaler = scaler;
    }

    pub fn scaler_mut(&mut self) -> &mut Scaler {
        &mut self.scaler
    }

    fn offsets(&self) -> [usize; 4] {
        let w1 = self.hidden * self.inputs;
        let b1 = w1 + self.hidden;
        let w2 = b1 + self.outputs * self.hidden;
        [w1, b1, w2, w2 + self.outputs]
    }

    pub fn w1(&self) -> &[f64] {
        let [a, ..] = self.offsets();
        &self.params[..a]
    }
    pub fn b1(&self) -> &[f64] {
        let [a, b, ..] = self.offsets();
        &self.params[a..b]
    }
    pub fn w2(&self) -> &[f64] {
        let [_, b, c, _] = self.offsets();
        &self.params[b..c]
    }
    pub fn b2(&self) -> &[f64] {
        let [_, _, c, d] = self.offsets();
        &self.params[c..d]
    }
    pub fn w1_mut(&mut self) -> &mut [f64] {
        let [a, ..] = self.offsets();
        &mut self.params[..a]
    }
    pub fn b1_mut(&mut self) -> &mut [f64] {
        let [a, b, ..] = self.offsets();
        &mut self.params[a..b]
    }
    pub fn w2_mut(&mut self) -> &mut [f64] {
        let [_, b, c, _] = self.offsets();
        &mut self.params[b..c]
    }
    pub fn b2_mut(&mut self) -> &mut [f64] {
        let [_, _, c, d] = self.offsets();
        &mut self.params[c..d]
    }

    /// Network output before clamping.
    pub fn predict_raw(&self, x: &[f64]) -> Vec<f64> {
        let mut xs = vec![0.0; self.inputs];
        let mut h = vec![0.0; self.hidden];
        let mut y = vec![0.0; self.outputs];
        self.scaler.apply(x, &mut xs);
        self.forward(&xs, &mut h, &mut y);
        y
    }

    /// Activations for the given kinematics, clamped into `[0, 1]`.
    pub fn predict(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.predict_raw(x);
        for v in y.iter_mut() {
            *v = clamp_unit(*v);
        }
        y
    }

    fn forward(&self, xs: &[f64], h: &mut [f64], y: &mut [f64]) {
        let (w1, b1, w2, b2) = (self.w1(), self.b1(), self.w2(), self.b2());
        for (j, hj) in h.iter_mut().enumerate() {
            let row = &w1[j * self.inputs..(j + 1) * self.inputs];
            *hj = b1[j] + row.iter().zip(xs).map(|(w, x)| w * x).sum::<f64>();
        }
        for (k, yk) in y.iter_mut().enumerate() {
            let row = &w2[k * self.hidden..(k + 1) * self.hidden];
            *yk = b2[k] + row.iter().zip(h.iter()).map(|(w, v)| w * v).sum::<f64>();
        }
    }

    /// `A = W₂ W₁ diag(1/s)`, `c = W₂ b₁ + b₂`.
    pub fn collapsed(&self) -> AffineMap {
        let (w1, b1, w2, b2) = (self.w1(), self.b1(), self.w2(), self.b2());
        let mut matrix = vec![0.0; self.outputs * self.inputs];
        let mut offset = b2.to_vec();
        for k in 0..self.outputs {
            for j in 0..self.hidden {
                let w = w2[k * self.hidden + j];
                offset[k] += w * b1[j];
                for i in 0..self.inputs {
                    matrix[k * self.inputs + i] += w * w1[j * self.inputs + i];
                }
            }
            for i in 0..self.inputs {
                matrix[k * self.inputs + i] /= self.scaler.factors[i];
            }
        }
        AffineMap { matrix, offset }
    }

    /// Mean squared error over all outputs and samples, before clamping.
    pub fn mse(&self, data: &Dataset) -> f64 {
        if data.is_empty() {
            return 0.0;
        }
        let mut xs = vec![0.0; self.inputs];
        let mut h = vec![0.0; self.hidden];
        let mut y = vec![0.0; self.outputs];
        let mut sum = 0.0;
        for i in 0..data.len() {
            self.scaler.apply(data.input(i), &mut xs);
            self.forward(&xs, &mut h, &mut y);
            sum += y.iter().zip(data.target(i)).map(|(p, t)| (p - t) * (p - t)).sum::<f64>();
        }
        sum / (data.len() * self.outputs) as f64
    }

    /// Loss and gradient of the mean squared error over `indices`,
    /// accumulated into `grad` (overwritten).
    fn loss_and_grad(&self, data: &Dataset, indices: &[usize], grad: &mut [f64], scratch: &mut Scratch) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let [o1, o2, o3, _] = self.offsets();
        let norm = 1.0 / (indices.len() * self.outputs) as f64;
        let mut loss = 0.0;
        for &i in indices {
            self.scaler.apply(data.input(i), &mut scratch.xs);
            self.forward(&scratch.xs, &mut scratch.h, &mut scratch.y);
            for (k, t) in data.target(i).iter().enumerate() {
                let e = scratch.y[k] - t;
                loss += e * e;
                scratch.dy[k] = 2.0 * e * norm;
            }
            let w2 = self.w2();
            scratch.dh.iter_mut().for_each(|v| *v = 0.0);
            for k in 0..self.outputs {
                let dyk = scratch.dy[k];
                let row = o2 + k * self.hidden;
                for j in 0..self.hidden {
                    grad[row + j] += dyk * scratch.h[j];
                    scratch.dh[j] += w2[k * self.hidden + j] * dyk;
                }
                grad[o3 + k] += dyk;
            }
            for j in 0..self.hidden {
                let dhj = scratch.dh[j];
                let row = j * self.inputs;
                for (n, x) in scratch.xs.iter().enumerate() {
                    grad[row + n] += dhj * x;
                }
                grad[o1 + j] += dhj;
            }
        }
        loss * norm
    }

    fn adam_update(&mut self, grad: &[f64], cfg: &AdamConfig) {
        self.adam.step += 1;
        let t = self.adam.step as i32;
        let c1 = 1.0 - cfg.beta1.powi(t);
        let c2 = 1.0 - cfg.beta2.powi(t);
        for (((p, g), m), v) in self
            .params
            .iter_mut()
            .zip(grad)
            .zip(self.adam.m.iter_mut())
            .zip(self.adam.v.iter_mut())
        {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }

    /// Mini-batch ADAM, continuing from the current weights and optimizer
    /// state. The shuffle order is fixed by `seed`.
    pub fn train(&mut self, data: &Dataset, cfg: &TrainConfig, seed: u64) -> Result<TrainReport, TrainError> {
        if data.is_empty() {
            return Err(TrainError::EmptyDataset);
        }
        if data.inputs() != self.inputs || data.outputs() != self.outputs {
            return Err(TrainError::ShapeMismatch {
                expected: self.inputs,
                got: data.inputs(),
            });
        }
        if cfg.epochs == 0 || cfg.batch_size == 0 {
            return Err(TrainError::InvalidSetting(format!(
                "epochs ({}) and batch_size ({}) must be >= 1",
                cfg.epochs, cfg.batch_size
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..data.len()).collect();
        let mut grad = vec![0.0; self.params.len()];
        let mut scratch = Scratch::new(self);
        let mut epoch_losses = Vec::with_capacity(cfg.epochs);
        for epoch in 0..cfg.epochs {
            order.shuffle(&mut rng);
            let mut total = 0.0;
            for (batch, idx) in order.chunks(cfg.batch_size).enumerate() {
                let loss = self.loss_and_grad(data, idx, &mut grad, &mut scratch);
                if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                    return Err(TrainError::NonFiniteLoss { epoch, batch });
                }
                total += loss * idx.len() as f64;
                self.adam_update(&grad, &cfg.adam);
            }
            epoch_losses.push(total / data.len() as f64);
        }
        let final_mse = self.mse(data);
        if !final_mse.is_finite() {
            return Err(TrainError::NonFiniteLoss {
                epoch: cfg.epochs,
                batch: 0,
            });
        }
        Ok(TrainReport {
            final_mse,
            epoch_losses,
        })
    }

    /// Backpropagated gradient of the single-sample loss.
    pub fn gradient(&self, input: &[f64], target: &[f64]) -> Vec<f64> {
        let mut one = Dataset::new(self.inputs, self.outputs);
        one.x.extend_from_slice(input);
        one.y.extend_from_slice(target);
        one.phases.push(Phase::Babble);
        let mut grad = vec![0.0; self.params.len()];
        self.loss_and_grad(&one, &[0], &mut grad, &mut Scratch::new(self));
        grad
    }

    /// Single-sample loss (mean over outputs).
    pub fn sample_loss(&self, input: &[f64], target: &[f64]) -> f64 {
        let y = self.predict_raw(input);
        y.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / self.outputs as f64
    }
}

struct Scratch {
    xs: Vec<f64>,
    h: Vec<f64>,
    y: Vec<f64>,
    dy: Vec<f64>,
    dh: Vec<f64>,
}

impl Scratch {
    fn new(map: &InverseMap) -> Self {
        Scratch {
            xs: vec![0.0; map.inputs],
            h: vec![0.0; map.hidden],
            y: vec![0.0; map.outputs],
            dy: vec![0.0; map.outputs],
            dh: vec![0.0; map.hidden],
        }
    }
}

/// Largest relative disagreement between backpropagated gradients and
/// central finite differences (`h = 1e-5`) over every parameter.
///
/// Relative error is `|g − ĝ| / max(|g| + |ĝ|, 1e-4)`, the floor keeping
/// near-zero gradients from amplifying rounding noise.
pub fn analytic_gradient_check(map: &InverseMap, input: &[f64], target: &[f64]) -> f64 {
    const H: f64 = 1e-5;
    let analytic = map.gradient(input, target);
    let mut probe = map.clone();
    let mut worst: f64 = 0.0;
    for (i, g) in analytic.iter().enumerate() {
        let orig = probe.params[i];
        probe.params[i] = orig + H;
        let up = probe.sample_loss(input, target);
        probe.params[i] = orig - H;
        let down = probe.sample_loss(input, target);
        probe.params[i] = orig;
        let numeric = (up - down) / (2.0 * H);
        let rel = (g - numeric).abs() / (g.abs() + numeric.abs()).max(1e-4);
        worst = worst.max(rel);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_map(seed: u64, hidden: usize) -> InverseMap {
        let mut map = InverseMap::per_limb(hidden, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
        for b in map.b1_mut() {
            *b = rng.gen_range(-0.5..0.5);
        }
        for b in map.b2_mut() {
            *b = rng.gen_range(-0.5..0.5);
        }
        map.set_scaler(Scaler {
            factors: (0..6).map(|_| rng.gen_range(0.2..3.0)).collect(),
            mode: ScaleMode::StdDev,
        });
        map
    }

    #[test]
    fn sample_std_of_two_points() {
        let mut d = Dataset::new(1, 1);
        d.push(&[-1.0], &[0.0], Phase::Babble);
        d.push(&[1.0], &[0.0], Phase::Babble);
        let s = calibrate_scaler(&d, ScaleMode::StdDev).unwrap();
        assert!((s.factors[0] - 2f64.sqrt()).abs() < 1e-15);
        let v = calibrate_scaler(&d, ScaleMode::Variance).unwrap();
        assert!((v.factors[0] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn constant_channel_left_unscaled() {
        let mut d = Dataset::new(2, 1);
        for i in 0..10 {
            d.push(&[3.0, i as f64], &[0.5], Phase::Babble);
        }
        let s = calibrate_scaler(&d, ScaleMode::StdDev).unwrap();
        assert_eq!(s.factors[0], 1.0);
        assert!(s.factors[1] > 1.0);
    }

    #[test]
    fn empty_calibration_rejected() {
        assert_eq!(
            calibrate_scaler(&Dataset::per_limb(), ScaleMode::StdDev),
            Err(TrainError::EmptyDataset)
        );
    }

    #[test]
    fn scaled_calibration_data_has_unit_spread() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut d = Dataset::per_limb();
        for _ in 0..500 {
            let x: Vec<f64> = (0..6).map(|c| rng.gen_range(-1.0..1.0) * (c as f64 + 0.5) * 10.0).collect();
            d.push(&x, &[0.1, 0.2, 0.3], Phase::Babble);
        }
        let s = calibrate_scaler(&d, ScaleMode::StdDev).unwrap();
        let mut scaled = Dataset::per_limb();
        let mut buf = [0.0; 6];
        for i in 0..d.len() {
            s.apply(d.input(i), &mut buf);
            scaled.push(&buf, d.target(i), Phase::Babble);
        }
        let again = calibrate_scaler(&scaled, ScaleMode::StdDev).unwrap();
        for f in again.factors {
            assert!((f - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_map_predicts_zero() {
        let map = InverseMap::zeros(6, 6, 3);
        assert_eq!(map.predict(&[1.0, -2.0, 3.0, 0.5, 9.0, -7.0]), vec![0.0; 3]);
    }

    #[test]
    fn constructed_weights_pass_scaled_input_through() {
        let mut map = InverseMap::zeros(6, 6, 3);
        for j in 0..6 {
            map.w1_mut()[j * 6 + j] = 1.0;
        }
        for k in 0..3 {
            map.w2_mut()[k * 6 + k] = 1.0;
        }
        map.set_scaler(Scaler {
            factors: vec![2.0, 4.0, 0.5, 1.0, 1.0, 1.0],
            mode: ScaleMode::StdDev,
        });
        let y = map.predict_raw(&[0.6, 2.0, 0.1, 5.0, 5.0, 5.0]);
        assert_eq!(y, vec![0.3, 0.5, 0.2]);
    }

    #[test]
    fn prediction_is_clamped() {
        let mut map = InverseMap::zeros(6, 6, 3);
        map.b2_mut().copy_from_slice(&[-0.3, 0.4, 2.5]);
        assert_eq!(map.predict(&[0.0; 6]), vec![0.0, 0.4, 1.0]);
    }

    #[test]
    fn collapsed_affine_equals_network() {
        let map = random_map(9, 6);
        let aff = map.collapsed();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let x: Vec<f64> = (0..6).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let y = map.predict_raw(&x);
            for k in 0..3 {
                let lin: f64 = (0..6).map(|i| aff.matrix[k * 6 + i] * x[i]).sum::<f64>() + aff.offset[k];
                assert!((y[k] - lin).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for seed in 0..10 {
            let map = random_map(seed, 6);
            let x: Vec<f64> = (0..6).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let t: Vec<f64> = (0..3).map(|_| rng.gen_range(0.0..1.0)).collect();
            let err = analytic_gradient_check(&map, &x, &t);
            assert!(err < 1e-5, "seed {seed}: {err}");
        }
    }

    #[test]
    fn stationary_output_layer_at_zero_error() {
        let map = random_map(3, 6);
        let x = [0.3, -0.1, 0.7, 0.2, -1.0, 0.05];
        let t = map.predict_raw(&x);
        let g = map.gradient(&x, &t);
        let [_, b, c, _] = map.offsets();
        assert!(g[b..c].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn reparameterizing_a_channel_keeps_loss() {
        let map = random_map(5, 6);
        let x = [0.3, -0.1, 0.7, 0.2, -1.0, 0.05];
        let t = [0.2, 0.9, 0.4];
        let before = map.sample_loss(&x, &t);
        let mut other = map.clone();
        let ch = 2;
        other.scaler_mut().factors[ch] *= 4.0;
        for j in 0..6 {
            other.w1_mut()[j * 6 + ch] *= 4.0;
        }
        assert!((other.sample_loss(&x, &t) - before).abs() < 1e-14);
    }

    #[test]
    fn memorizes_single_sample() {
        let mut d = Dataset::per_limb();
        d.push(&[0.5, 1.0, -0.2, 0.3, 2.0, -1.0], &[0.25, 0.5, 0.75], Phase::Babble);
        let mut map = InverseMap::per_limb(6, 2);
        let cfg = TrainConfig {
            epochs: 4000,
            batch_size: 1,
            adam: AdamConfig::default(),
        };
        map.train(&d, &cfg, 0).unwrap();
        let y = map.predict_raw(d.input(0));
        for (p, t) in y.iter().zip(d.target(0)) {
            assert!((p - t).abs() < 1e-6, "{y:?}");
        }
    }

    #[test]
    fn training_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut d = Dataset::per_limb();
        for _ in 0..300 {
            let x: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let t: Vec<f64> = (0..3).map(|_| rng.gen_range(0.0..1.0)).collect();
            d.push(&x, &t, Phase::Babble);
        }
        let cfg = TrainConfig {
            epochs: 5,
            ..TrainConfig::default()
        };
        let mut a = InverseMap::per_limb(6, 8);
        let mut b = InverseMap::per_limb(6, 8);
        let ra = a.train(&d, &cfg, 31).unwrap();
        let rb = b.train(&d, &cfg, 31).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra, rb);
        let mut c = InverseMap::per_limb(6, 8);
        c.train(&d, &cfg, 32).unwrap();
        assert_ne!(a.params(), c.params());
    }

    #[test]
    fn train_rejects_bad_inputs() {
        let mut map = InverseMap::per_limb(6, 0);
        let cfg = TrainConfig::default();
        assert_eq!(map.train(&Dataset::per_limb(), &cfg, 0), Err(TrainError::EmptyDataset));
        let mut wrong = Dataset::new(4, 3);
        wrong.push(&[0.0; 4], &[0.0; 3], Phase::Babble);
        assert!(matches!(map.train(&wrong, &cfg, 0), Err(TrainError::ShapeMismatch { .. })));
    }

    #[test]
    fn diverging_training_reports_location() {
        let mut d = Dataset::per_limb();
        d.push(&[1e300, 1e300, 0.0, 0.0, 0.0, 0.0], &[0.5; 3], Phase::Babble);
        let mut map = InverseMap::per_limb(6, 1);
        let err = map.train(&d, &TrainConfig::default(), 0).unwrap_err();
        assert_eq!(err, TrainError::NonFiniteLoss { epoch: 0, batch: 0 });
    }

    #[test]
    fn phase_tags_round_trip() {
        for p in [Phase::Babble, Phase::Refinement(0), Phase::Refinement(14)] {
            assert_eq!(Phase::parse(&p.tag()), Some(p));
        }
        assert_eq!(Phase::parse("refinement-x"), None);
    }
}
