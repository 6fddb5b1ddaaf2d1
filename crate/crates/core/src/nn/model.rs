use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const DEFAULT_LEAKY_SLOPE: f64 = 0.01;

/// Hidden-layer nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Activation {
    Relu,
    Tanh,
    LeakyRelu { slope: f64 },
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::LeakyRelu { slope } => {
                if z > 0.0 {
                    z
                } else {
                    slope * z
                }
            }
        }
    }

    /// Derivative at pre-activation `z`, given the post-activation `a`.
    #[inline]
    pub fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
            Activation::LeakyRelu { slope } => {
                if z > 0.0 {
                    1.0
                } else {
                    slope
                }
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::LeakyRelu { .. } => "leakyrelu",
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = Error;

    /// Accepts `relu`, `tanh`, `leakyrelu` (default slope) or `leakyrelu:<slope>`.
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        match lower.as_str() {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "leakyrelu" | "leaky_relu" => Ok(Activation::LeakyRelu {
                slope: DEFAULT_LEAKY_SLOPE,
            }),
            other => match other.strip_prefix("leakyrelu:") {
                Some(slope) => slope
                    .parse()
                    .map(|slope| Activation::LeakyRelu { slope })
                    .map_err(|_| Error::InvalidConfig(format!("bad leaky slope {slope:?}"))),
                None => Err(Error::InvalidConfig(format!("unknown activation {s:?}"))),
            },
        }
    }
}

/// Shape of a fully-connected classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureSpec {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub class_count: usize,
    pub activation: Activation,
}

impl ArchitectureSpec {
    /// `depth` hidden layers of equal `width`.
    pub fn uniform(
        input_dim: usize,
        depth: usize,
        width: usize,
        class_count: usize,
        activation: Activation,
    ) -> Self {
        Self {
            input_dim,
            hidden: vec![width; depth],
            class_count,
            activation,
        }
    }

    /// Six hidden layers of equal width.
    pub fn mlp6(input_dim: usize, width: usize, class_count: usize, activation: Activation) -> Self {
        Self::uniform(input_dim, 6, width, class_count, activation)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::InvalidConfig("input_dim must be >= 1".into()));
        }
        if let Some(k) = self.hidden.iter().position(|&w| w == 0) {
            return Err(Error::InvalidConfig(format!("hidden layer {} has width 0", k + 1)));
        }
        if self.class_count < 2 {
            return Err(Error::InvalidConfig(format!(
                "class_count must be >= 2, got {}",
                self.class_count
            )));
        }
        Ok(())
    }

    /// Layer widths from input to output.
    pub fn dims(&self) -> Vec<usize> {
        let mut d = Vec::with_capacity(self.hidden.len() + 2);
        d.push(self.input_dim);
        d.extend_from_slice(&self.hidden);
        d.push(self.class_count);
        d
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    /// `d_out × d_in`
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Linear {
    pub fn zeros_like(&self) -> Linear {
        Linear {
            weight: Matrix::zeros(self.weight.rows(), self.weight.cols()),
            bias: vec![0.0; self.bias.len()],
        }
    }

    /// `x · Wᵀ + b`, one output row per input row.
    pub fn affine(&self, x: &Matrix) -> Matrix {
        let d_out = self.weight.rows();
        let mut out = Matrix::zeros(x.rows(), d_out);
        for (i, xr) in x.row_iter().enumerate() {
            let out_row = out.row_mut(i);
            for (o, (dst, b)) in out_row.iter_mut().zip(&self.bias).enumerate() {
                let w = self.weight.row(o);
                *dst = b + dot(xr, w);
            }
        }
        out
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Fully-connected classifier: hidden layers with a shared nonlinearity, then
/// a linear output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub layers: Vec<Linear>,
    pub activation: Activation,
}

/// Post-activation of every hidden layer plus the output logits.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub hidden: Vec<Matrix>,
    pub logits: Matrix,
}

/// Parameter-shaped gradients, one entry per linear layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Linear>,
}

impl Gradients {
    pub fn norm(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| {
                l.weight.as_slice().iter().chain(&l.bias).map(|v| v * v).sum::<f64>()
            })
            .sum::<f64>()
            .sqrt()
    }
}

/// Uniform(±1/√d_in) weights, zero biases; deterministic per seed.
pub fn init_model(spec: &ArchitectureSpec, seed: u64) -> Result<MlpModel> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = spec.dims();
    let layers = dims
        .windows(2)
        .map(|w| {
            let (d_in, d_out) = (w[0], w[1]);
            let bound = 1.0 / (d_in as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
            let data = (0..d_in * d_out).map(|_| dist.sample(&mut rng)).collect();
            Linear {
                weight: Matrix::from_vec(d_out, d_in, data).expect("sized"),
                bias: vec![0.0; d_out],
            }
        })
        .collect();
    Ok(MlpModel {
        layers,
        activation: spec.activation,
    })
}

impl MlpModel {
    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.cols()
    }

    pub fn class_count(&self) -> usize {
        self.layers.last().expect("non-empty").weight.rows()
    }

    pub fn hidden_count(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn architecture(&self) -> ArchitectureSpec {
        ArchitectureSpec {
            input_dim: self.input_dim(),
            hidden: self.layers[..self.hidden_count()]
                .iter()
                .map(|l| l.weight.rows())
                .collect(),
            class_count: self.class_count(),
            activation: self.activation,
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.rows() * l.weight.cols() + l.bias.len())
            .sum()
    }

    fn check_input(&self, batch: &Matrix) -> Result<()> {
        if batch.cols() != self.input_dim() {
            return Err(Error::DimensionMismatch(format!(
                "batch has {} columns, model expects {}",
                batch.cols(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    fn activate(&self, z: &mut Matrix) {
        let act = self.activation;
        for v in z.as_mut_slice() {
            *v = act.apply(*v);
        }
    }

    /// Runs the batch through the network, keeping every hidden
    /// post-activation.
    pub fn forward(&self, batch: &Matrix) -> Result<ForwardTrace> {
        self.check_input(batch)?;
        let (hidden_layers, out_layer) = self.layers.split_at(self.hidden_count());
        let mut hidden: Vec<Matrix> = Vec::with_capacity(hidden_layers.len());
        for layer in hidden_layers {
            let mut z = layer.affine(hidden.last().unwrap_or(batch));
            self.activate(&mut z);
            hidden.push(z);
        }
        let logits = out_layer[0].affine(hidden.last().unwrap_or(batch));
        Ok(ForwardTrace { hidden, logits })
    }

    /// Logits only.
    pub fn predict_logits(&self, batch: &Matrix) -> Result<Matrix> {
        self.check_input(batch)?;
        let mut x = batch.clone();
        for layer in &self.layers[..self.hidden_count()] {
            x = layer.affine(&x);
            self.activate(&mut x);
        }
        Ok(self.layers[self.hidden_count()].affine(&x))
    }

    pub fn predict(&self, batch: &Matrix) -> Result<Vec<usize>> {
        Ok(argmax_rows(&self.predict_logits(batch)?))
    }

    /// MSE loss and its exact gradient with respect to every parameter.
    pub fn backward(&self, batch: &Matrix, labels: &[usize]) -> Result<(f64, Gradients)> {
        self.check_input(batch)?;
        let c = self.class_count();
        check_labels(batch.rows(), labels, c)?;

        // Forward keeping pre-activations.
        let n_hidden = self.hidden_count();
        let mut pre: Vec<Matrix> = Vec::with_capacity(n_hidden);
        let mut post: Vec<Matrix> = Vec::with_capacity(n_hidden);
        for layer in &self.layers[..n_hidden] {
            let z = layer.affine(post.last().unwrap_or(batch));
            let mut a = z.clone();
            self.activate(&mut a);
            pre.push(z);
            post.push(a);
        }
        let logits = self.layers[n_hidden].affine(post.last().unwrap_or(batch));
        let loss = mse_loss(&logits, labels)?;

        // dL/dlogits = 2 (y − t) / (B·C)
        let scale = 2.0 / (batch.rows() * c) as f64;
        let mut delta = logits;
        for (i, &label) in labels.iter().enumerate() {
            for (k, v) in delta.row_mut(i).iter_mut().enumerate() {
                let target = if k == label { 1.0 } else { 0.0 };
                *v = (*v - target) * scale;
            }
        }

        let mut grads: Vec<Linear> = self.layers.iter().map(Linear::zeros_like).collect();
        for k in (0..self.layers.len()).rev() {
            let input = if k == 0 { batch } else { &post[k - 1] };
            let g = &mut grads[k];
            for (dz, x) in delta.row_iter().zip(input.row_iter()) {
                for (o, &d) in dz.iter().enumerate() {
                    g.bias[o] += d;
                    if d == 0.0 {
                        continue;
                    }
                    for (w, xi) in g.weight.row_mut(o).iter_mut().zip(x) {
                        *w += d * xi;
                    }
                }
            }
            if k == 0 {
                break;
            }
            // Propagate through W_k and the activation of layer k−1.
            let weight = &self.layers[k].weight;
            let mut next = Matrix::zeros(delta.rows(), weight.cols());
            for (b, dz) in delta.row_iter().enumerate() {
                let dst = next.row_mut(b);
                for (o, &d) in dz.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    for (t, w) in dst.iter_mut().zip(weight.row(o)) {
                        *t += d * w;
                    }
                }
            }
            let act = self.activation;
            for ((t, z), a) in next
                .as_mut_slice()
                .iter_mut()
                .zip(pre[k - 1].as_slice())
                .zip(post[k - 1].as_slice())
            {
                *t *= act.derivative(*z, *a);
            }
            delta = next;
        }
        Ok((loss, Gradients { layers: grads }))
    }
}

fn check_labels(rows: usize, labels: &[usize], classes: usize) -> Result<()> {
    if labels.len() != rows {
        return Err(Error::DimensionMismatch(format!("{rows} rows but {} labels", labels.len())));
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::LabelOutOfRange { label, classes });
    }
    Ok(())
}

/// Mean over batch and class coordinates of the squared distance to one-hot targets.
pub fn mse_loss(logits: &Matrix, labels: &[usize]) -> Result<f64> {
    let c = logits.cols();
    check_labels(logits.rows(), labels, c)?;
    if logits.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (row, &label) in logits.row_iter().zip(labels) {
        for (k, &y) in row.iter().enumerate() {
            let d = if k == label { y - 1.0 } else { y };
            total += d * d;
        }
    }
    Ok(total / (logits.rows() * c) as f64)
}

/// Row-wise argmax; ties go to the lowest index.
pub fn argmax_rows(logits: &Matrix) -> Vec<usize> {
    logits
        .row_iter()
        .map(|row| {
            let mut best = 0;
            for (k, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = k;
                }
            }
            best
        })
        .collect()
}

/// Fraction of samples whose argmax prediction differs from the label.
pub fn train_error(model: &MlpModel, inputs: &Matrix, labels: &[usize]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::InvalidArgument("train_error of an empty dataset".into()));
    }
    let preds = model.predict(inputs)?;
    Ok(error_rate(&preds, labels))
}

pub fn error_rate(predictions: &[usize], labels: &[usize]) -> f64 {
    let wrong = predictions.iter().zip(labels).filter(|(p, l)| p != l).count();
    wrong as f64 / labels.len() as f64
}
