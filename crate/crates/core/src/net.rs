//! Fully-connected ReLU networks: definition, forward pass, exact input
//! gradients, SGD training, and a binary model container.
//!
//! All hidden layers apply ReLU; the output layer is affine. Arithmetic is
//! `f64` throughout so finite-difference gradient checks are meaningful.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const MODEL_MAGIC: &[u8] = b"RBP1\n";

/// A fully-connected ReLU network. `layer_dims` is
/// `[input, hidden_1, .., hidden_L, classes]`; `weights[i]` maps layer `i`
/// to layer `i + 1` and has shape `(layer_dims[i+1], layer_dims[i])`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    layer_dims: Vec<usize>,
    weights: Vec<Matrix>,
    biases: Vec<Vec<f64>>,
    seed: u64,
}

/// Per-layer record of one forward pass: hidden pre/post activations plus
/// the final logits.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationTrace {
    pub pre_activations: Vec<Vec<f64>>,
    pub post_activations: Vec<Vec<f64>>,
    pub logits: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub weight_init_scale: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.1,
            batch_size: 32,
            epochs: 10,
            seed: 0,
            weight_init_scale: 1.0,
        }
    }
}

/// Result of a training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub net: NetworkSpec,
    pub final_train_accuracy: f64,
    pub final_train_loss: f64,
}

impl NetworkSpec {
    /// Builds a network from explicit weights and biases, checking shape
    /// consistency and finiteness.
    pub fn new(
        layer_dims: Vec<usize>,
        weights: Vec<Matrix>,
        biases: Vec<Vec<f64>>,
        seed: u64,
    ) -> Result<Self> {
        if layer_dims.len() < 3 {
            return Err(Error::Shape(
                "need at least one hidden ReLU layer (layer_dims len >= 3)".into(),
            ));
        }
        if layer_dims.contains(&0) {
            return Err(Error::Shape("zero-width layer".into()));
        }
        let n_layers = layer_dims.len() - 1;
        if weights.len() != n_layers || biases.len() != n_layers {
            return Err(Error::Shape(format!(
                "expected {} weight/bias pairs, got {}/{}",
                n_layers,
                weights.len(),
                biases.len()
            )));
        }
        for (i, (w, b)) in weights.iter().zip(&biases).enumerate() {
            if w.rows() != layer_dims[i + 1] || w.cols() != layer_dims[i] {
                return Err(Error::Shape(format!(
                    "layer {}: weight shape ({}, {}) but expected ({}, {})",
                    i,
                    w.rows(),
                    w.cols(),
                    layer_dims[i + 1],
                    layer_dims[i]
                )));
            }
            if b.len() != layer_dims[i + 1] {
                return Err(Error::Shape(format!(
                    "layer {}: bias length {} but expected {}",
                    i,
                    b.len(),
                    layer_dims[i + 1]
                )));
            }
            if !w.is_finite() || b.iter().any(|v| !v.is_finite()) {
                return Err(Error::Domain(format!("layer {i}: non-finite parameter")));
            }
        }
        Ok(NetworkSpec {
            layer_dims,
            weights,
            biases,
            seed,
        })
    }

    /// Random initialization: each weight uniform in `[-s, s]` with
    /// `s = scale / sqrt(fan_in)`, biases zero, seeded.
    pub fn random(layer_dims: Vec<usize>, seed: u64, weight_init_scale: f64) -> Result<Self> {
        if layer_dims.len() < 3 {
            return Err(Error::Shape(
                "need at least one hidden ReLU layer (layer_dims len >= 3)".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for i in 0..layer_dims.len() - 1 {
            let fan_in = layer_dims[i];
            let s = weight_init_scale / (fan_in as f64).sqrt();
            let mut w = Matrix::zeros(layer_dims[i + 1], fan_in);
            for v in w.data_mut() {
                *v = rng.gen_range(-s..=s);
            }
            weights.push(w);
            biases.push(vec![0.0; layer_dims[i + 1]]);
        }
        NetworkSpec::new(layer_dims, weights, biases, seed)
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn class_count(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    /// Widths of the hidden ReLU layers.
    pub fn hidden_widths(&self) -> Vec<usize> {
        self.layer_dims[1..self.layer_dims.len() - 1].to_vec()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn weights(&self) -> &[Matrix] {
        &self.weights
    }

    pub fn biases(&self) -> &[Vec<f64>] {
        &self.biases
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(Error::Shape(format!(
                "input length {} but network expects {}",
                input.len(),
                self.input_dim()
            )));
        }
        if input.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite input".into()));
        }
        Ok(())
    }

    /// Forward pass recording every hidden layer's pre/post activations.
    pub fn forward(&self, input: &[f64]) -> Result<ActivationTrace> {
        self.check_input(input)?;
        let hidden = self.weights.len() - 1;
        let mut pre = Vec::with_capacity(hidden);
        let mut post = Vec::with_capacity(hidden);
        let mut x = input.to_vec();
        for i in 0..hidden {
            let mut z = self.weights[i].matvec(&x);
            for (zj, bj) in z.iter_mut().zip(&self.biases[i]) {
                *zj += bj;
            }
            let a: Vec<f64> = z.iter().map(|&v| v.max(0.0)).collect();
            pre.push(z);
            x = a.clone();
            post.push(a);
        }
        let mut logits = self.weights[hidden].matvec(&x);
        for (zj, bj) in logits.iter_mut().zip(&self.biases[hidden]) {
            *zj += bj;
        }
        Ok(ActivationTrace {
            pre_activations: pre,
            post_activations: post,
            logits,
        })
    }

    pub fn predict(&self, input: &[f64]) -> Result<usize> {
        let trace = self.forward(input)?;
        Ok(argmax(&trace.logits))
    }

    /// Gradient of the cross-entropy loss with respect to the input,
    /// by reverse-mode chain rule. ReLU kinks (`z == 0`) use subgradient 0.
    pub fn input_gradient(&self, input: &[f64], label: usize) -> Result<Vec<f64>> {
        let trace = self.forward(input)?;
        if label >= self.class_count() {
            return Err(Error::Index(format!(
                "label {} out of range for {} classes",
                label,
                self.class_count()
            )));
        }
        // dJ/dlogits = softmax - onehot
        let mut delta = softmax(&trace.logits);
        delta[label] -= 1.0;
        let hidden = self.weights.len() - 1;
        for i in (0..hidden).rev() {
            let mut g = self.weights[i + 1].matvec_transposed(&delta);
            for (gj, zj) in g.iter_mut().zip(&trace.pre_activations[i]) {
                if *zj <= 0.0 {
                    *gj = 0.0;
                }
            }
            delta = g;
        }
        Ok(self.weights[0].matvec_transposed(&delta))
    }

    /// Mini-batch SGD on softmax cross-entropy. Deterministic given the
    /// network, `cfg.seed`, and data order.
    pub fn train(&self, features: &[Vec<f64>], labels: &[usize], cfg: &TrainConfig) -> Result<TrainOutcome> {
        if features.is_empty() {
            return Err(Error::Domain("empty training dataset".into()));
        }
        if features.len() != labels.len() {
            return Err(Error::Shape(format!(
                "{} feature rows but {} labels",
                features.len(),
                labels.len()
            )));
        }
        for x in features {
            if x.len() != self.input_dim() {
                return Err(Error::Shape(format!(
                    "feature dim {} but network expects {}",
                    x.len(),
                    self.input_dim()
                )));
            }
        }
        if labels.iter().any(|&y| y >= self.class_count()) {
            return Err(Error::Index("label out of class range".into()));
        }
        let mut net = self.clone();
        let n = features.len();
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        for _ in 0..cfg.epochs {
            shuffle(&mut order, &mut rng);
            for batch in order.chunks(cfg.batch_size) {
                net.sgd_step(features, labels, batch, cfg.learning_rate)?;
            }
        }
        let mut correct = 0usize;
        let mut loss_sum = 0.0;
        for (x, &y) in features.iter().zip(labels) {
            let trace = net.forward(x)?;
            if argmax(&trace.logits) == y {
                correct += 1;
            }
            loss_sum += cross_entropy(&trace.logits, y)?;
        }
        Ok(TrainOutcome {
            net,
            final_train_accuracy: correct as f64 / n as f64,
            final_train_loss: loss_sum / n as f64,
        })
    }

    fn sgd_step(
        &mut self,
        features: &[Vec<f64>],
        labels: &[usize],
        batch: &[usize],
        lr: f64,
    ) -> Result<()> {
        let hidden = self.weights.len() - 1;
        let mut w_grads: Vec<Matrix> = self
            .weights
            .iter()
            .map(|w| Matrix::zeros(w.rows(), w.cols()))
            .collect();
        let mut b_grads: Vec<Vec<f64>> = self.biases.iter().map(|b| vec![0.0; b.len()]).collect();
        let scale = 1.0 / batch.len() as f64;
        for &j in batch {
            let x = &features[j];
            let trace = self.forward(x)?;
            let mut delta = softmax(&trace.logits);
            delta[labels[j]] -= 1.0;
            for i in (0..=hidden).rev() {
                let below: &[f64] = if i == 0 {
                    x
                } else {
                    &trace.post_activations[i - 1]
                };
                w_grads[i].add_outer(scale, &delta, below);
                for (g, d) in b_grads[i].iter_mut().zip(&delta) {
                    *g += scale * d;
                }
                if i > 0 {
                    let mut g = self.weights[i].matvec_transposed(&delta);
                    for (gj, zj) in g.iter_mut().zip(&trace.pre_activations[i - 1]) {
                        if *zj <= 0.0 {
                            *gj = 0.0;
                        }
                    }
                    delta = g;
                }
            }
        }
        for i in 0..self.weights.len() {
            for (w, g) in self.weights[i].data_mut().iter_mut().zip(w_grads[i].data()) {
                *w -= lr * g;
            }
            for (b, g) in self.biases[i].iter_mut().zip(&b_grads[i]) {
                *b -= lr * g;
            }
        }
        Ok(())
    }

    /// Writes the model container: magic, textual header, then per layer the
    /// weight matrix (row-major) and bias vector as little-endian `f64`.
    pub fn save<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = BufWriter::new(writer);
        w.write_all(MODEL_MAGIC)?;
        let dims: Vec<String> = self.layer_dims.iter().map(|d| d.to_string()).collect();
        writeln!(w, "layer_dims {}", dims.join(" "))?;
        writeln!(w, "seed {}", self.seed)?;
        writeln!(w, "end")?;
        for (wm, b) in self.weights.iter().zip(&self.biases) {
            for v in wm.data() {
                w.write_all(&v.to_le_bytes())?;
            }
            for v in b {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn load<R: Read>(reader: R) -> Result<Self> {
        let mut r = CountingReader::new(BufReader::new(reader));
        let mut magic = [0u8; 5];
        r.read_exact_at(&mut magic, "magic")?;
        if magic != MODEL_MAGIC {
            return Err(Error::Parse {
                offset: 0,
                msg: "bad magic, expected RBP1".into(),
            });
        }
        let mut layer_dims: Option<Vec<usize>> = None;
        let mut seed: Option<u64> = None;
        loop {
            let line = r.read_line()?;
            let line = line.trim_end();
            if line == "end" {
                break;
            }
            let mut parts = line.split_whitespace();
            match parts.next() {
                Some("layer_dims") => {
                    let dims: std::result::Result<Vec<usize>, _> =
                        parts.map(|p| p.parse::<usize>()).collect();
                    layer_dims = Some(dims.map_err(|_| r.parse_err("bad layer_dims"))?);
                }
                Some("seed") => {
                    let v = parts
                        .next()
                        .and_then(|p| p.parse::<u64>().ok())
                        .ok_or_else(|| r.parse_err("bad seed"))?;
                    seed = Some(v);
                }
                _ => return Err(r.parse_err("unknown header line")),
            }
        }
        let layer_dims = layer_dims.ok_or_else(|| r.parse_err("missing layer_dims"))?;
        let seed = seed.unwrap_or(0);
        if layer_dims.len() < 3 {
            return Err(r.parse_err("layer_dims too short"));
        }
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for i in 0..layer_dims.len() - 1 {
            let rows = layer_dims[i + 1];
            let cols = layer_dims[i];
            let mut data = vec![0.0f64; rows * cols];
            for v in data.iter_mut() {
                *v = r
                    .read_f64()
                    .map_err(|_| r.parse_err(&format!("truncated weights in layer {i}")))?;
            }
            let mut bias = vec![0.0f64; rows];
            for v in bias.iter_mut() {
                *v = r
                    .read_f64()
                    .map_err(|_| r.parse_err(&format!("truncated biases in layer {i}")))?;
            }
            weights.push(Matrix::from_flat(rows, cols, data));
            biases.push(bias);
        }
        NetworkSpec::new(layer_dims, weights, biases, seed)
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

/// Softmax cross-entropy `-log softmax(logits)[label]` via log-sum-exp.
pub fn cross_entropy(logits: &[f64], label: usize) -> Result<f64> {
    if label >= logits.len() {
        return Err(Error::Index(format!(
            "label {} out of range for {} logits",
            label,
            logits.len()
        )));
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite logits".into()));
    }
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|&z| (z - m).exp()).sum::<f64>().ln();
    Ok(lse - logits[label])
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Fisher-Yates driven by the caller's seeded generator.
fn shuffle<R: Rng>(order: &mut [usize], rng: &mut R) {
    for i in (1..order.len()).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
}

/// Reader wrapper tracking the byte offset for parse errors.
struct CountingReader<R> {
    inner: R,
    offset: u64,
}

impl<R: BufRead> CountingReader<R> {
    fn new(inner: R) -> Self {
        CountingReader { inner, offset: 0 }
    }

    fn parse_err(&self, msg: &str) -> Error {
        Error::Parse {
            offset: self.offset,
            msg: msg.into(),
        }
    }

    fn read_exact_at(&mut self, buf: &mut [u8], what: &str) -> Result<()> {
        self.inner.read_exact(buf).map_err(|_| Error::Parse {
            offset: self.offset,
            msg: format!("truncated while reading {what}"),
        })?;
        self.offset += buf.len() as u64;
        Ok(())
    }

    fn read_line(&mut self) -> Result<String> {
        let mut line = String::new();
        let n = self.inner.read_line(&mut line)?;
        if n == 0 {
            return Err(self.parse_err("unexpected end of header"));
        }
        self.offset += n as u64;
        Ok(line)
    }

    fn read_f64(&mut self) -> Result<f64> {
        let mut buf = [0u8; 8];
        self.read_exact_at(&mut buf, "f64")?;
        Ok(f64::from_le_bytes(buf))
    }
}
