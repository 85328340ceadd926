//! Softmax classifiers with hand-derived gradients.
//!
//! Parameter layout, layer by layer, weights before biases. Weight matrices
//! are row-major with one row per output unit:
//!
//! * `logistic`: `W[K x d]`, `b[K]`
//! * `mlp1`: `W1[h x d]`, `b1[h]`, `W2[K x h]`, `b2[K]`
//!
//! Losses and gradients are means over the batch, accumulated in batch row
//! order.

use std::fmt;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::Batch;
use crate::error::{Error, Result};
use crate::params::ParamVector;
use crate::rng::{stream_rng, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Logistic,
    Mlp1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub input_dim: usize,
    pub num_classes: usize,
    /// Hidden width; ignored by `logistic`.
    pub hidden_dim: usize,
    /// Hidden activation; ignored by `logistic`.
    pub activation: Activation,
}

impl ModelSpec {
    pub fn logistic(input_dim: usize, num_classes: usize) -> Self {
        Self { kind: ModelKind::Logistic, input_dim, num_classes, hidden_dim: 0, activation: Activation::Relu }
    }

    pub fn mlp1(input_dim: usize, hidden_dim: usize, num_classes: usize, activation: Activation) -> Self {
        Self { kind: ModelKind::Mlp1, input_dim, num_classes, hidden_dim, activation }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::InvalidArgument("model needs at least two classes".into()));
        }
        if self.kind == ModelKind::Mlp1 && self.hidden_dim == 0 {
            return Err(Error::InvalidArgument("mlp1 needs hidden_dim >= 1".into()));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        let (d, k, h) = (self.input_dim, self.num_classes, self.hidden_dim);
        match self.kind {
            ModelKind::Logistic => (d + 1) * k,
            ModelKind::Mlp1 => (d + 1) * h + (h + 1) * k,
        }
    }

    /// Index ranges holding bias terms.
    pub fn bias_ranges(&self) -> Vec<std::ops::Range<usize>> {
        let (d, k, h) = (self.input_dim, self.num_classes, self.hidden_dim);
        match self.kind {
            ModelKind::Logistic => vec![std::ops::Range { start: d * k, end: (d + 1) * k }],
            ModelKind::Mlp1 => {
                let first = h * d..h * d + h;
                let second_start = (d + 1) * h + k * h;
                vec![first, second_start..second_start + k]
            }
        }
    }

    fn check_inputs(&self, params: &ParamVector, batch: &Batch<'_>) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::LengthMismatch { left: params.len(), right: self.param_count() });
        }
        if batch.dim() != self.input_dim || batch.num_classes() != self.num_classes {
            return Err(Error::InvalidArgument(format!(
                "batch shape (d={}, K={}) does not match model (d={}, K={})",
                batch.dim(),
                batch.num_classes(),
                self.input_dim,
                self.num_classes
            )));
        }
        Ok(())
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            ModelKind::Logistic => write!(f, "logistic(d={}, K={})", self.input_dim, self.num_classes),
            ModelKind::Mlp1 => write!(
                f,
                "mlp1(d={}, h={}, K={}, {:?})",
                self.input_dim, self.hidden_dim, self.num_classes, self.activation
            ),
        }
    }
}

/// Weights ~ N(0, 1) / sqrt(fan_in), biases zero.
pub fn init_params(spec: &ModelSpec, seed: u64) -> ParamVector {
    let mut rng = stream_rng(seed, Stream::Init, &[]);
    let mut out = Vec::with_capacity(spec.param_count());
    let mut layer = |out: &mut Vec<f64>, fan_in: usize, fan_out: usize| {
        let scale = 1.0 / (fan_in.max(1) as f64).sqrt();
        for _ in 0..fan_in * fan_out {
            let z: f64 = StandardNormal.sample(&mut rng);
            out.push(z * scale);
        }
        out.extend(std::iter::repeat_n(0.0, fan_out));
    };
    match spec.kind {
        ModelKind::Logistic => layer(&mut out, spec.input_dim, spec.num_classes),
        ModelKind::Mlp1 => {
            layer(&mut out, spec.input_dim, spec.hidden_dim);
            layer(&mut out, spec.hidden_dim, spec.num_classes);
        }
    }
    ParamVector::from_raw(out)
}

/// `out = W x + b` for a row-major `W[rows x x.len()]`.
fn affine(w: &[f64], b: &[f64], x: &[f64], out: &mut [f64]) {
    let cols = x.len();
    for (r, o) in out.iter_mut().enumerate() {
        let row = &w[r * cols..(r + 1) * cols];
        *o = b[r] + row.iter().zip(x).map(|(a, c)| a * c).sum::<f64>();
    }
}

/// Overwrites `logits` with softmax probabilities, returns `-ln p[label]`.
fn softmax_xent(logits: &mut [f64], label: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let shifted_label = logits[label] - max;
    let mut sum = 0.0;
    for l in logits.iter_mut() {
        *l = (*l - max).exp();
        sum += *l;
    }
    for l in logits.iter_mut() {
        *l /= sum;
    }
    sum.ln() - shifted_label
}

struct Scratch {
    hidden_pre: Vec<f64>,
    hidden: Vec<f64>,
    logits: Vec<f64>,
    dhidden: Vec<f64>,
}

impl Scratch {
    fn new(spec: &ModelSpec) -> Self {
        Self {
            hidden_pre: vec![0.0; spec.hidden_dim],
            hidden: vec![0.0; spec.hidden_dim],
            logits: vec![0.0; spec.num_classes],
            dhidden: vec![0.0; spec.hidden_dim],
        }
    }
}

/// Forward pass for one sample; leaves logits (pre-softmax) in `s.logits`.
fn forward(spec: &ModelSpec, p: &[f64], x: &[f64], s: &mut Scratch) {
    let (d, k, h) = (spec.input_dim, spec.num_classes, spec.hidden_dim);
    match spec.kind {
        ModelKind::Logistic => affine(&p[..k * d], &p[k * d..(d + 1) * k], x, &mut s.logits),
        ModelKind::Mlp1 => {
            let (w1, rest) = p.split_at(h * d);
            let (b1, rest) = rest.split_at(h);
            let (w2, b2) = rest.split_at(k * h);
            affine(w1, b1, x, &mut s.hidden_pre);
            for (a, &z) in s.hidden.iter_mut().zip(&s.hidden_pre) {
                *a = spec.activation.apply(z);
            }
            affine(w2, b2, &s.hidden, &mut s.logits);
        }
    }
}

/// Accumulates the gradient of one sample's loss into `g`, given softmax
/// probabilities in `s.logits`.
fn backward(spec: &ModelSpec, p: &[f64], x: &[f64], label: usize, s: &mut Scratch, g: &mut [f64]) {
    let (d, k, h) = (spec.input_dim, spec.num_classes, spec.hidden_dim);
    s.logits[label] -= 1.0;
    match spec.kind {
        ModelKind::Logistic => {
            let (gw, gb) = g.split_at_mut(k * d);
            for (c, &delta) in s.logits.iter().enumerate() {
                for (gw, &xi) in gw[c * d..(c + 1) * d].iter_mut().zip(x) {
                    *gw += delta * xi;
                }
                gb[c] += delta;
            }
        }
        ModelKind::Mlp1 => {
            let w2 = &p[(d + 1) * h..(d + 1) * h + k * h];
            let (g1, g2) = g.split_at_mut((d + 1) * h);
            let (gw1, gb1) = g1.split_at_mut(h * d);
            let (gw2, gb2) = g2.split_at_mut(k * h);
            s.dhidden.iter_mut().for_each(|v| *v = 0.0);
            for (c, &delta) in s.logits.iter().enumerate() {
                let w_row = &w2[c * h..(c + 1) * h];
                for j in 0..h {
                    gw2[c * h + j] += delta * s.hidden[j];
                    s.dhidden[j] += delta * w_row[j];
                }
                gb2[c] += delta;
            }
            for j in 0..h {
                let dz = s.dhidden[j] * spec.activation.derivative(s.hidden_pre[j], s.hidden[j]);
                for (gw, &xi) in gw1[j * d..(j + 1) * d].iter_mut().zip(x) {
                    *gw += dz * xi;
                }
                gb1[j] += dz;
            }
        }
    }
}

/// Mean cross-entropy over the batch.
pub fn loss(spec: &ModelSpec, params: &ParamVector, batch: &Batch<'_>) -> Result<f64> {
    spec.check_inputs(params, batch)?;
    let p = params.as_slice();
    let mut s = Scratch::new(spec);
    let mut total = 0.0;
    for j in 0..batch.len() {
        let (x, y) = batch.sample(j);
        forward(spec, p, x, &mut s);
        total += softmax_xent(&mut s.logits, y);
    }
    let loss = total / batch.len() as f64;
    if loss.is_finite() {
        Ok(loss)
    } else {
        Err(Error::NonFinite { op: "loss" })
    }
}

/// Mean cross-entropy and its exact gradient.
pub fn loss_and_grad(spec: &ModelSpec, params: &ParamVector, batch: &Batch<'_>) -> Result<(f64, ParamVector)> {
    spec.check_inputs(params, batch)?;
    let p = params.as_slice();
    let mut s = Scratch::new(spec);
    let mut grad = vec![0.0; p.len()];
    let mut total = 0.0;
    for j in 0..batch.len() {
        let (x, y) = batch.sample(j);
        forward(spec, p, x, &mut s);
        total += softmax_xent(&mut s.logits, y);
        backward(spec, p, x, y, &mut s, &mut grad);
    }
    let n = batch.len() as f64;
    grad.iter_mut().for_each(|g| *g /= n);
    let loss = total / n;
    let grad = ParamVector::from_raw(grad);
    if loss.is_finite() && grad.is_finite() {
        Ok((loss, grad))
    } else {
        Err(Error::NonFinite { op: "loss_and_grad" })
    }
}

/// Central-difference gradient, one coordinate at a time.
pub fn finite_diff_grad(spec: &ModelSpec, params: &ParamVector, batch: &Batch<'_>, h: f64) -> Result<ParamVector> {
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("step must be positive, got {h}")));
    }
    let mut probe = params.clone();
    let mut out = Vec::with_capacity(params.len());
    for i in 0..params.len() {
        let orig = probe.as_slice()[i];
        probe.as_mut_slice()[i] = orig + h;
        let up = loss(spec, &probe, batch)?;
        probe.as_mut_slice()[i] = orig - h;
        let down = loss(spec, &probe, batch)?;
        probe.as_mut_slice()[i] = orig;
        out.push((up - down) / (2.0 * h));
    }
    ParamVector::new(out)
}

/// Index of the largest logit; ties go to the lowest class.
fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Mean loss and accuracy over `batch`.
pub fn evaluate(spec: &ModelSpec, params: &ParamVector, batch: &Batch<'_>) -> Result<(f64, f64)> {
    spec.check_inputs(params, batch)?;
    let p = params.as_slice();
    let mut s = Scratch::new(spec);
    let mut total = 0.0;
    let mut correct = 0usize;
    for j in 0..batch.len() {
        let (x, y) = batch.sample(j);
        forward(spec, p, x, &mut s);
        if argmax(&s.logits) == y {
            correct += 1;
        }
        total += softmax_xent(&mut s.logits, y);
    }
    let n = batch.len() as f64;
    Ok((total / n, correct as f64 / n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Dataset;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_case(rng: &mut ChaCha8Rng, kind: ModelKind) -> (ModelSpec, ParamVector, Dataset) {
        let d = rng.random_range(1..6);
        let k = rng.random_range(2..5);
        let spec = match kind {
            ModelKind::Logistic => ModelSpec::logistic(d, k),
            ModelKind::Mlp1 => {
                let act = if rng.random_bool(0.5) { Activation::Relu } else { Activation::Tanh };
                ModelSpec::mlp1(d, rng.random_range(1..6), k, act)
            }
        };
        let params = ParamVector::new((0..spec.param_count()).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let n = rng.random_range(1..8);
        let features = (0..n * d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let labels = (0..n).map(|_| rng.random_range(0..k)).collect();
        (spec, params, Dataset::new(features, d, labels, k).unwrap())
    }

    #[test]
    fn param_counts() {
        assert_eq!(ModelSpec::logistic(4, 3).param_count(), 15);
        assert_eq!(ModelSpec::mlp1(4, 5, 3, Activation::Tanh).param_count(), 5 * 5 + 6 * 3);
    }

    #[test]
    fn init_layout_and_determinism() {
        let spec = ModelSpec::logistic(4, 3);
        let a = init_params(&spec, 7);
        assert_eq!(a.len(), 15);
        assert!(a.as_slice()[12..].iter().all(|&b| b == 0.0));
        assert!(a.as_slice()[..12].iter().all(|&w| w != 0.0));
        assert_eq!(a, init_params(&spec, 7));
        assert_ne!(a, init_params(&spec, 8));

        let mlp = ModelSpec::mlp1(3, 4, 2, Activation::Relu);
        let p = init_params(&mlp, 1);
        for r in mlp.bias_ranges() {
            assert!(p.as_slice()[r].iter().all(|&b| b == 0.0));
        }
    }

    #[test]
    fn zero_params_give_ln_k() {
        let ds = Dataset::new(vec![1.0, -2.0, 0.5, 3.0, 0.0, 1.0], 2, vec![0, 2, 1], 3).unwrap();
        let spec = ModelSpec::logistic(2, 3);
        let (l, _) = loss_and_grad(&spec, &ParamVector::zeros(9), &ds.all()).unwrap();
        assert!((l - 3f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn analytic_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for kind in [ModelKind::Logistic, ModelKind::Mlp1] {
            for _ in 0..25 {
                let (spec, params, ds) = random_case(&mut rng, kind);
                let (_, g) = loss_and_grad(&spec, &params, &ds.all()).unwrap();
                let fd = finite_diff_grad(&spec, &params, &ds.all(), 1e-5).unwrap();
                for (a, b) in g.as_slice().iter().zip(fd.as_slice()) {
                    assert!((a - b).abs() / b.abs().max(1.0) < 1e-5, "{spec}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn one_dimensional_logistic_by_hand() {
        // params [w0, w1, b0, b1], one sample x=2 with label 1
        let spec = ModelSpec::logistic(1, 2);
        let ds = Dataset::new(vec![2.0], 1, vec![1], 2).unwrap();
        let params = ParamVector::new(vec![0.3, -0.2, 0.1, 0.05]).unwrap();
        let z0: f64 = 0.3 * 2.0 + 0.1;
        let z1: f64 = -0.2 * 2.0 + 0.05;
        let p0 = z0.exp() / (z0.exp() + z1.exp());
        let p1 = 1.0 - p0;
        let hand = [p0 * 2.0, (p1 - 1.0) * 2.0, p0, p1 - 1.0];
        let fd = finite_diff_grad(&spec, &params, &ds.all(), 1e-4).unwrap();
        for (a, b) in fd.as_slice().iter().zip(hand) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
        let (_, g) = loss_and_grad(&spec, &params, &ds.all()).unwrap();
        for (a, b) in g.as_slice().iter().zip(hand) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn finite_difference_step_consistency() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (spec, params, ds) = random_case(&mut rng, ModelKind::Logistic);
        let a = finite_diff_grad(&spec, &params, &ds.all(), 1e-5).unwrap();
        let b = finite_diff_grad(&spec, &params, &ds.all(), 1e-6).unwrap();
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            assert!((x - y).abs() / y.abs().max(1.0) < 1e-6);
        }
        assert!(finite_diff_grad(&spec, &params, &ds.all(), 0.0).is_err());
    }

    #[test]
    fn balanced_zero_point_has_zero_gradient() {
        // d = 0: the model is bias-only
        let spec = ModelSpec::logistic(0, 2);
        let ds = Dataset::new(vec![], 0, vec![0, 1, 1, 0], 2).unwrap();
        let fd = finite_diff_grad(&spec, &ParamVector::zeros(2), &ds.all(), 1e-5).unwrap();
        assert!(fd.as_slice().iter().all(|g| g.abs() < 1e-10));
    }

    #[test]
    fn duplicated_batch_is_mean_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (spec, params, ds) = random_case(&mut rng, ModelKind::Mlp1);
        let rows: Vec<usize> = (0..ds.len()).flat_map(|i| [i, i]).collect();
        let (l1, g1) = loss_and_grad(&spec, &params, &ds.all()).unwrap();
        let (l2, g2) = loss_and_grad(&spec, &params, &ds.batch(&rows).unwrap()).unwrap();
        assert!((l1 - l2).abs() < 1e-14);
        assert!(g1.max_abs_diff(&g2).unwrap() < 1e-14);
    }

    #[test]
    fn row_permutation_changes_loss_negligibly() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let (spec, params, ds) = random_case(&mut rng, ModelKind::Logistic);
        let rev: Vec<usize> = (0..ds.len()).rev().collect();
        let a = loss(&spec, &params, &ds.all()).unwrap();
        let b = loss(&spec, &params, &ds.batch(&rev).unwrap()).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn evaluate_examples() {
        // two blobs at x = -1 and x = +1; w = [-1, 1] separates them
        let ds = Dataset::new(vec![-1.0, -1.1, -0.9, 1.0, 1.1, 0.9], 1, vec![0, 0, 0, 1, 1, 1], 2).unwrap();
        let spec = ModelSpec::logistic(1, 2);
        let sep = ParamVector::new(vec![-1.0, 1.0, 0.0, 0.0]).unwrap();
        assert_eq!(evaluate(&spec, &sep, &ds.all()).unwrap().1, 1.0);
        let (l, acc) = evaluate(&spec, &ParamVector::zeros(4), &ds.all()).unwrap();
        assert_eq!(acc, 0.5);
        assert!(l >= 0.0);
        let one = [4];
        assert_eq!(evaluate(&spec, &sep, &ds.batch(&one).unwrap()).unwrap().1, 1.0);
    }

    #[test]
    fn huge_logits_stay_finite() {
        let spec = ModelSpec::logistic(1, 2);
        let ds = Dataset::new(vec![1.0], 1, vec![0], 2).unwrap();
        let p = ParamVector::new(vec![800.0, -800.0, 0.0, 0.0]).unwrap();
        let (l, g) = loss_and_grad(&spec, &p, &ds.all()).unwrap();
        assert!(l.is_finite() && g.is_finite());
    }

    #[test]
    fn wrong_length_is_rejected() {
        let spec = ModelSpec::logistic(1, 2);
        let ds = Dataset::new(vec![1.0], 1, vec![0], 2).unwrap();
        assert!(loss_and_grad(&spec, &ParamVector::zeros(3), &ds.all()).is_err());
    }
}
