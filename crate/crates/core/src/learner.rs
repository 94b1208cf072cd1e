//! Feed-forward networks trained with plain SGD, an experience pool, and a
//! finite-difference gradient check.
//!
//! Hidden layers use a rectifier, the output layer is linear. Every training
//! sample targets one output unit, which covers both the single-output
//! regressor and Q-learning (only the taken action's value is regressed).

use std::collections::VecDeque;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major, `outputs x inputs`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    fn forward(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.outputs {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            let z: f64 = row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias[o];
            out.push(z);
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    dims: Vec<usize>,
    pub layers: Vec<Layer>,
}

/// Uniform Glorot initialization, zero biases.
pub fn init_model(dims: &[usize], seed: u64) -> Result<Model> {
    if dims.len() < 2 || dims.contains(&0) {
        return Err(Error::invalid(
            "dims",
            format!("need >= 2 positive sizes, got {dims:?}"),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = dims
        .windows(2)
        .map(|w| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            Layer {
                inputs: fan_in,
                outputs: fan_out,
                weights: (0..fan_in * fan_out)
                    .map(|_| rng.random_range(-limit..=limit))
                    .collect(),
                bias: vec![0.0; fan_out],
            }
        })
        .collect();
    Ok(Model {
        dims: dims.to_vec(),
        layers,
    })
}

/// One regression target on one output unit.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub input: Vec<f64>,
    pub output: usize,
    pub target: f64,
}

impl Sample {
    pub fn regression(input: Vec<f64>, target: f64) -> Self {
        Sample {
            input,
            output: 0,
            target,
        }
    }
}

struct Gradients {
    weights: Vec<Vec<f64>>,
    bias: Vec<Vec<f64>>,
}

impl Model {
    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().expect("at least two dims")
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// All parameters, layer by layer, weights before biases.
    pub fn parameters(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias).copied())
            .collect()
    }

    fn param_mut(&mut self, mut i: usize) -> &mut f64 {
        for l in &mut self.layers {
            if i < l.weights.len() {
                return &mut l.weights[i];
            }
            i -= l.weights.len();
            if i < l.bias.len() {
                return &mut l.bias[i];
            }
            i -= l.bias.len();
        }
        panic!("parameter index out of range");
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::Dimension {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Pre-activations of every layer.
    fn forward_trace(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut trace = Vec::with_capacity(self.layers.len());
        let mut act = x.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = Vec::with_capacity(layer.outputs);
            layer.forward(&act, &mut z);
            act = if i + 1 < self.layers.len() {
                z.iter().map(|v| v.max(0.0)).collect()
            } else {
                z.clone()
            };
            trace.push(z);
        }
        trace
    }

    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut act = x.to_vec();
        let mut z = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            layer.forward(&act, &mut z);
            if i + 1 < self.layers.len() {
                for v in &mut z {
                    *v = v.max(0.0);
                }
            }
            std::mem::swap(&mut act, &mut z);
        }
        Ok(act)
    }

    pub fn predict_batch(&self, xs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        xs.iter().map(|x| self.predict(x)).collect()
    }

    fn check_sample(&self, s: &Sample) -> Result<()> {
        self.check_input(&s.input)?;
        if s.output >= self.output_dim() {
            return Err(Error::Dimension {
                expected: self.output_dim(),
                got: s.output,
            });
        }
        Ok(())
    }

    /// Mean squared error of the targeted outputs.
    pub fn loss(&self, batch: &[Sample]) -> Result<f64> {
        let mut total = 0.0;
        for s in batch {
            self.check_sample(s)?;
            let y = self.predict(&s.input)?;
            total += (y[s.output] - s.target).powi(2);
        }
        Ok(total / batch.len().max(1) as f64)
    }

    /// Accumulates d(mean loss)/d(params) over `batch`; returns the loss.
    fn gradients(&self, batch: &[Sample]) -> (f64, Gradients) {
        let mut g = Gradients {
            weights: self.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            bias: self.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect(),
        };
        let scale = 1.0 / batch.len() as f64;
        let mut loss = 0.0;
        for s in batch {
            let trace = self.forward_trace(&s.input);
            let y = trace.last().expect("nonempty")[s.output];
            let err = y - s.target;
            loss += err * err * scale;
            // delta = dL/dz for the current layer
            let mut delta = vec![0.0; self.output_dim()];
            delta[s.output] = 2.0 * err * scale;
            for li in (0..self.layers.len()).rev() {
                let layer = &self.layers[li];
                let relu_in;
                let input: &[f64] = if li == 0 {
                    &s.input
                } else {
                    relu_in = trace[li - 1].iter().map(|v| v.max(0.0)).collect::<Vec<_>>();
                    &relu_in
                };
                let gw = &mut g.weights[li];
                for (o, &d) in delta.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    g.bias[li][o] += d;
                    let row = &mut gw[o * layer.inputs..(o + 1) * layer.inputs];
                    for (gv, &x) in row.iter_mut().zip(input) {
                        *gv += d * x;
                    }
                }
                if li > 0 {
                    let mut prev = vec![0.0; layer.inputs];
                    for (o, &d) in delta.iter().enumerate() {
                        if d == 0.0 {
                            continue;
                        }
                        let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                        for (p, &w) in prev.iter_mut().zip(row) {
                            *p += d * w;
                        }
                    }
                    for (p, &z) in prev.iter_mut().zip(&trace[li - 1]) {
                        if z <= 0.0 {
                            *p = 0.0;
                        }
                    }
                    delta = prev;
                }
            }
        }
        (loss, g)
    }

    fn flat_gradient(&self, sample: &Sample) -> Vec<f64> {
        let (_, g) = self.gradients(std::slice::from_ref(sample));
        g.weights
            .iter()
            .zip(&g.bias)
            .flat_map(|(w, b)| w.iter().chain(b).copied())
            .collect()
    }

    /// Writes a text checkpoint that round-trips bit-exactly.
    pub fn to_checkpoint(&self) -> String {
        let mut out = String::from("eelearn-model 1\ndims");
        for d in &self.dims {
            write!(out, " {d}").unwrap();
        }
        out.push('\n');
        for p in self.parameters() {
            writeln!(out, "{p:?}").unwrap();
        }
        out
    }

    pub fn from_checkpoint(text: &str) -> Result<Model> {
        let mut lines = text.lines();
        let bad = |line: usize, msg: &str| Error::Parse {
            line,
            msg: msg.to_string(),
        };
        if lines.next() != Some("eelearn-model 1") {
            return Err(bad(1, "missing checkpoint header"));
        }
        let dims: Vec<usize> = lines
            .next()
            .and_then(|l| l.strip_prefix("dims "))
            .ok_or_else(|| bad(2, "missing dims line"))?
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| bad(2, "bad dimension")))
            .collect::<Result<_>>()?;
        let mut model = init_model(&dims, 0)?;
        let n = model.parameter_count();
        let mut count = 0;
        for (i, line) in lines.enumerate() {
            if count >= n {
                return Err(bad(i + 3, "too many parameters"));
            }
            let v: f64 = line.trim().parse().map_err(|_| bad(i + 3, "bad parameter"))?;
            *model.param_mut(count) = v;
            count += 1;
        }
        if count != n {
            return Err(bad(count + 3, "too few parameters"));
        }
        Ok(model)
    }
}

/// One SGD step on the batch's mean squared error. Returns the loss before
/// the step. A non-finite loss or gradient leaves the model untouched.
pub fn train_batch(model: &mut Model, batch: &[Sample], learning_rate: f64) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::invalid("batch", "empty batch"));
    }
    for s in batch {
        model.check_sample(s)?;
    }
    let (loss, g) = model.gradients(batch);
    if !loss.is_finite() || g.weights.iter().chain(&g.bias).flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    if learning_rate != 0.0 {
        for (li, layer) in model.layers.iter_mut().enumerate() {
            for (w, gw) in layer.weights.iter_mut().zip(&g.weights[li]) {
                *w -= learning_rate * gw;
            }
            for (b, gb) in layer.bias.iter_mut().zip(&g.bias[li]) {
                *b -= learning_rate * gb;
            }
        }
    }
    Ok(loss)
}

/// Gradient magnitudes below this are compared absolutely.
const GRAD_FLOOR: f64 = 1e-4;

/// Worst relative disagreement between backprop and central differences
/// with step `h`, over every parameter.
pub fn gradient_check(model: &Model, sample: &Sample, h: f64) -> f64 {
    assert!(h > 0.0, "step must be positive");
    let analytic = model.flat_gradient(sample);
    let mut probe = model.clone();
    let one = std::slice::from_ref(sample);
    let mut worst: f64 = 0.0;
    for (i, &a) in analytic.iter().enumerate() {
        let orig = *probe.param_mut(i);
        *probe.param_mut(i) = orig + h;
        let up = probe.loss(one).unwrap_or(f64::NAN);
        *probe.param_mut(i) = orig - h;
        let down = probe.loss(one).unwrap_or(f64::NAN);
        *probe.param_mut(i) = orig;
        let numeric = (up - down) / (2.0 * h);
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(GRAD_FLOOR);
        worst = worst.max(if err.is_nan() { f64::INFINITY } else { err });
    }
    worst
}

/// Fixed-capacity FIFO replay buffer.
#[derive(Clone, Debug)]
pub struct ExperiencePool<T> {
    entries: VecDeque<T>,
    capacity: usize,
}

impl<T> ExperiencePool<T> {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::invalid("capacity", "must be at least 1"));
        }
        Ok(ExperiencePool {
            entries: VecDeque::with_capacity(capacity.min(1 << 16)),
            capacity,
        })
    }

    pub fn push(&mut self, entry: T) {
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(entry);
    }

    /// `k` entries drawn uniformly with replacement.
    pub fn sample<R: Rng>(&self, k: usize, rng: &mut R) -> Result<Vec<&T>> {
        if self.entries.is_empty() {
            return Err(Error::EmptyPool);
        }
        Ok((0..k)
            .map(|_| &self.entries[rng.random_range(0..self.entries.len())])
            .collect())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.entries.iter()
    }
}

/// One transition `(s, a, r, s')`.
#[derive(Clone, Debug, PartialEq)]
pub struct Experience {
    pub state: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_state: Vec<f64>,
}

/// One-step TD targets `r + gamma * max_a' Q(s', a')`, bootstrapped from the
/// same network being trained.
pub fn td_samples(model: &Model, batch: &[&Experience], gamma: f64) -> Result<Vec<Sample>> {
    batch
        .iter()
        .map(|e| {
            let next = model.predict(&e.next_state)?;
            let best = next.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            Ok(Sample {
                input: e.state.clone(),
                output: e.action,
                target: e.reward + gamma * best,
            })
        })
        .collect()
}

pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}
