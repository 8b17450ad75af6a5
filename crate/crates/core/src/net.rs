//! Dense feed-forward ReLU network.
//!
//! Every hidden layer applies `ReLU(W·h + b)`; the last layer emits raw
//! logits. The forward pass keeps each hidden layer's post-ReLU output so
//! that activation sign patterns can be read off directly.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::matrix::{dot, Matrix};

#[derive(Clone, Debug, PartialEq)]
pub struct MlpNetwork {
    layer_dims: Vec<usize>,
    weights: Vec<Matrix>,
    biases: Vec<Vec<f64>>,
}

/// Output of a forward pass: the input, each hidden layer's post-ReLU
/// output and the logits.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardTrace {
    pub input: Vec<f64>,
    pub layer_outputs: Vec<Vec<f64>>,
    pub logits: Vec<f64>,
}

impl MlpNetwork {
    pub fn new(layer_dims: Vec<usize>, weights: Vec<Matrix>, biases: Vec<Vec<f64>>) -> Result<Self> {
        validate_dims(&layer_dims)?;
        let transitions = layer_dims.len() - 1;
        if weights.len() != transitions || biases.len() != transitions {
            return Err(Error::Shape(format!(
                "{} layer widths need {transitions} weight matrices and bias vectors, got {} and {}",
                layer_dims.len(),
                weights.len(),
                biases.len()
            )));
        }
        for (t, (w, b)) in weights.iter().zip(&biases).enumerate() {
            let (fan_in, fan_out) = (layer_dims[t], layer_dims[t + 1]);
            if w.rows() != fan_out || w.cols() != fan_in {
                return Err(Error::Shape(format!(
                    "weight {t} is {}x{}, expected {fan_out}x{fan_in}",
                    w.rows(),
                    w.cols()
                )));
            }
            if b.len() != fan_out {
                return Err(Error::Shape(format!(
                    "bias {t} has length {}, expected {fan_out}",
                    b.len()
                )));
            }
        }
        Ok(MlpNetwork {
            layer_dims,
            weights,
            biases,
        })
    }

    /// Seeded Glorot-uniform initialization with zero biases.
    pub fn init(layer_dims: &[usize], seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::init_with(layer_dims, &mut rng)
    }

    fn init_with(layer_dims: &[usize], rng: &mut ChaCha8Rng) -> Result<Self> {
        validate_dims(layer_dims)?;
        let mut weights = Vec::with_capacity(layer_dims.len() - 1);
        let mut biases = Vec::with_capacity(layer_dims.len() - 1);
        for pair in layer_dims.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
            weights.push(Matrix::from_fn(fan_out, fan_in, |_, _| {
                rng.random_range(-a..a)
            }));
            biases.push(vec![0.0; fan_out]);
        }
        MlpNetwork::new(layer_dims.to_vec(), weights, biases)
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn weights(&self) -> &[Matrix] {
        &self.weights
    }

    pub fn biases(&self) -> &[Vec<f64>] {
        &self.biases
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn n_classes(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    /// Number of hidden ReLU layers.
    pub fn n_hidden(&self) -> usize {
        self.layer_dims.len() - 2
    }

    /// Width of hidden layer `layer` (1-based, as used on the command line).
    pub fn hidden_width(&self, layer: usize) -> Option<usize> {
        (1..=self.n_hidden())
            .contains(&layer)
            .then(|| self.layer_dims[layer])
    }

    pub fn forward(&self, x: &[f64]) -> Result<ForwardTrace> {
        let pass = self.run(x)?;
        let mut activations = pass.activations;
        let logits = activations.pop().unwrap();
        let input = activations.remove(0);
        Ok(ForwardTrace {
            input,
            layer_outputs: activations,
            logits,
        })
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.forward(x)?.logits))
    }

    /// Softmax cross-entropy of the logits against `label`, and its gradient
    /// with respect to the input.
    pub fn loss_and_input_gradient(&self, x: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
        self.check_label(label)?;
        let pass = self.run(x)?;
        Ok(self.backward(&pass, label, None))
    }

    fn check_label(&self, label: usize) -> Result<()> {
        if label >= self.n_classes() {
            return Err(Error::Label(format!(
                "label {label} with {} output classes",
                self.n_classes()
            )));
        }
        Ok(())
    }

    fn run(&self, x: &[f64]) -> Result<Pass> {
        if x.len() != self.input_dim() {
            return Err(Error::Shape(format!(
                "input has {} features, network expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        let last = self.weights.len() - 1;
        let mut activations = Vec::with_capacity(self.layer_dims.len());
        let mut pre_activations = Vec::with_capacity(last);
        activations.push(x.to_vec());
        for (t, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let prev = &activations[t];
            let z: Vec<f64> = w
                .row_iter()
                .zip(b)
                .map(|(row, bias)| dot(row, prev) + bias)
                .collect();
            if t == last {
                activations.push(z);
            } else {
                activations.push(z.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect());
                pre_activations.push(z);
            }
        }
        Ok(Pass {
            activations,
            pre_activations,
        })
    }

    /// Reverse-mode pass. Accumulates parameter gradients into `grads` when
    /// given and always returns `(loss, d loss / d input)`.
    fn backward(&self, pass: &Pass, label: usize, mut grads: Option<&mut Gradients>) -> (f64, Vec<f64>) {
        let logits = pass.activations.last().unwrap();
        let (loss, probs) = softmax_cross_entropy(logits, label);
        let mut delta = probs;
        delta[label] -= 1.0;

        for t in (0..self.weights.len()).rev() {
            let input = &pass.activations[t];
            if let Some(g) = grads.as_deref_mut() {
                let gw = &mut g.weights[t];
                for (o, &d) in delta.iter().enumerate() {
                    if d != 0.0 {
                        for (gwv, &a) in gw.row_mut(o).iter_mut().zip(input) {
                            *gwv += d * a;
                        }
                    }
                    g.biases[t][o] += d;
                }
            }
            let w = &self.weights[t];
            let mut prev = vec![0.0; w.cols()];
            for (o, &d) in delta.iter().enumerate() {
                if d != 0.0 {
                    for (p, &wv) in prev.iter_mut().zip(w.row(o)) {
                        *p += d * wv;
                    }
                }
            }
            if t > 0 {
                // ReLU subgradient is 0 at exactly zero pre-activation.
                for (p, &z) in prev.iter_mut().zip(&pass.pre_activations[t - 1]) {
                    if z <= 0.0 {
                        *p = 0.0;
                    }
                }
            }
            delta = prev;
        }
        (loss, delta)
    }

    /// Mean cross-entropy over a labelled set.
    pub fn mean_loss(&self, features: &Matrix, labels: &[usize]) -> Result<f64> {
        check_data(self, features, labels)?;
        let mut total = 0.0;
        for (x, &y) in features.row_iter().zip(labels) {
            let logits = self.forward(x)?.logits;
            total += softmax_cross_entropy(&logits, y).0;
        }
        Ok(total / labels.len() as f64)
    }

    pub fn accuracy(&self, features: &Matrix, labels: &[usize]) -> Result<f64> {
        check_data(self, features, labels)?;
        let mut correct = 0usize;
        for (x, &y) in features.row_iter().zip(labels) {
            if self.predict(x)? == y {
                correct += 1;
            }
        }
        Ok(correct as f64 / labels.len() as f64)
    }

    fn apply(&mut self, grads: &Gradients, scale: f64) {
        for (w, gw) in self.weights.iter_mut().zip(&grads.weights) {
            for i in 0..w.rows() {
                for (v, g) in w.row_mut(i).iter_mut().zip(gw.row(i)) {
                    *v -= scale * g;
                }
            }
        }
        for (b, gb) in self.biases.iter_mut().zip(&grads.biases) {
            for (v, g) in b.iter_mut().zip(gb) {
                *v -= scale * g;
            }
        }
    }
}

struct Pass {
    /// `[input, hidden_1 (post-ReLU), ..., hidden_L, logits]`
    activations: Vec<Vec<f64>>,
    pre_activations: Vec<Vec<f64>>,
}

struct Gradients {
    weights: Vec<Matrix>,
    biases: Vec<Vec<f64>>,
}

impl Gradients {
    fn zeros_like(net: &MlpNetwork) -> Self {
        Gradients {
            weights: net
                .weights
                .iter()
                .map(|w| Matrix::zeros(w.rows(), w.cols()))
                .collect(),
            biases: net.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }
}

fn validate_dims(layer_dims: &[usize]) -> Result<()> {
    if layer_dims.len() < 2 {
        return Err(Error::Shape(format!(
            "need at least input and output widths, got {layer_dims:?}"
        )));
    }
    if layer_dims.contains(&0) {
        return Err(Error::Shape(format!(
            "layer widths must be positive, got {layer_dims:?}"
        )));
    }
    Ok(())
}

fn check_data(net: &MlpNetwork, features: &Matrix, labels: &[usize]) -> Result<()> {
    if features.rows() != labels.len() {
        return Err(Error::Shape(format!(
            "{} samples but {} labels",
            features.rows(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::Data("empty dataset".into()));
    }
    if features.cols() != net.input_dim() {
        return Err(Error::Shape(format!(
            "samples have {} features, network expects {}",
            features.cols(),
            net.input_dim()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= net.n_classes()) {
        return Err(Error::Label(format!(
            "label {bad} with {} output classes",
            net.n_classes()
        )));
    }
    Ok(())
}

/// Returns the loss and the softmax probabilities.
pub fn softmax_cross_entropy(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let loss = sum.ln() + max - logits[label];
    (loss, exps.into_iter().map(|e| e / sum).collect())
}

/// First index of the maximum.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub layer_dims: Vec<usize>,
    pub seed: u64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            layer_dims: vec![16, 64, 64, 32, 2],
            seed: 7,
            epochs: 50,
            learning_rate: 0.05,
            batch_size: 16,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    /// 0 is the initialization.
    pub epoch: usize,
    pub mean_loss: f64,
    pub accuracy: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub network: MlpNetwork,
    pub log: Vec<EpochRecord>,
    /// Epoch whose parameters were returned (lowest full-data loss).
    pub selected_epoch: usize,
}

/// Mini-batch SGD on softmax cross-entropy.
///
/// Initialization and the per-epoch shuffle draw from one ChaCha stream
/// seeded by `config.seed`. The full-data loss is measured after every
/// epoch and the parameters with the lowest loss (initialization included)
/// are returned, so the result never has a higher training loss than the
/// seeded start.
pub fn train_sgd(features: &Matrix, labels: &[usize], config: &TrainConfig) -> Result<TrainOutcome> {
    if labels.is_empty() || features.rows() == 0 {
        return Err(Error::Data("training set is empty".into()));
    }
    if config.batch_size == 0 {
        return Err(Error::Param("batch size must be positive".into()));
    }
    if !(config.learning_rate.is_finite() && config.learning_rate > 0.0) {
        return Err(Error::Param(format!(
            "learning rate must be positive, got {}",
            config.learning_rate
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut net = MlpNetwork::init_with(&config.layer_dims, &mut rng)?;
    check_data(&net, features, labels)?;
    if features.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite feature value".into()));
    }

    let record = |net: &MlpNetwork, epoch| -> Result<EpochRecord> {
        Ok(EpochRecord {
            epoch,
            mean_loss: net.mean_loss(features, labels)?,
            accuracy: net.accuracy(features, labels)?,
        })
    };

    let mut log = vec![record(&net, 0)?];
    let mut best = (log[0].mean_loss, 0, net.clone());
    let mut order: Vec<usize> = (0..labels.len()).collect();
    let mut grads = Gradients::zeros_like(&net);
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            zero(&mut grads);
            for &i in batch {
                let pass = net.run(features.row(i))?;
                net.backward(&pass, labels[i], Some(&mut grads));
            }
            net.apply(&grads, config.learning_rate / batch.len() as f64);
        }
        let rec = record(&net, epoch)?;
        if rec.mean_loss < best.0 {
            best = (rec.mean_loss, epoch, net.clone());
        }
        log.push(rec);
    }
    Ok(TrainOutcome {
        network: best.2,
        log,
        selected_epoch: best.1,
    })
}

fn zero(grads: &mut Gradients) {
    for w in &mut grads.weights {
        for i in 0..w.rows() {
            w.row_mut(i).fill(0.0);
        }
    }
    for b in &mut grads.biases {
        b.fill(0.0);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AttackKind {
    Fgsm,
    Pgd,
}

/// L∞-bounded untargeted attack parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AttackConfig {
    pub kind: AttackKind,
    pub epsilon: f64,
    pub pgd_steps: usize,
    pub pgd_step_size: f64,
    pub clip_min: f64,
    pub clip_max: f64,
}

impl AttackConfig {
    pub fn fgsm(epsilon: f64) -> Self {
        AttackConfig {
            kind: AttackKind::Fgsm,
            epsilon,
            pgd_steps: 1,
            pgd_step_size: epsilon,
            clip_min: f64::NEG_INFINITY,
            clip_max: f64::INFINITY,
        }
    }

    pub fn pgd(epsilon: f64, steps: usize, step_size: f64) -> Self {
        AttackConfig {
            kind: AttackKind::Pgd,
            epsilon,
            pgd_steps: steps,
            pgd_step_size: step_size,
            clip_min: f64::NEG_INFINITY,
            clip_max: f64::INFINITY,
        }
    }

    pub fn with_clip(mut self, clip_min: f64, clip_max: f64) -> Self {
        self.clip_min = clip_min;
        self.clip_max = clip_max;
        self
    }

    /// `epsilon == 0` is accepted and makes the attack the identity.
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(Error::Config(format!(
                "epsilon must be finite and non-negative, got {}",
                self.epsilon
            )));
        }
        if self.clip_min.is_nan() || self.clip_max.is_nan() || self.clip_min >= self.clip_max {
            return Err(Error::Config(format!(
                "clip range [{}, {}] is empty",
                self.clip_min, self.clip_max
            )));
        }
        if self.kind == AttackKind::Pgd {
            if self.pgd_steps == 0 {
                return Err(Error::Config("PGD needs at least one step".into()));
            }
            if self.epsilon > 0.0
                && !(self.pgd_step_size > 0.0 && self.pgd_step_size <= self.epsilon)
            {
                return Err(Error::Config(format!(
                    "PGD step size must lie in (0, epsilon = {}], got {}",
                    self.epsilon, self.pgd_step_size
                )));
            }
        }
        Ok(())
    }
}

/// Generates an adversarial counterpart of `x` that increases the loss of
/// its true `label`.
pub fn attack(net: &MlpNetwork, x: &[f64], label: usize, cfg: &AttackConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    if let Some(v) = x.iter().find(|&&v| !(v >= cfg.clip_min && v <= cfg.clip_max)) {
        return Err(Error::Range(format!(
            "input value {v} outside clip range [{}, {}]",
            cfg.clip_min, cfg.clip_max
        )));
    }
    let clip = |v: f64| v.clamp(cfg.clip_min, cfg.clip_max);
    match cfg.kind {
        AttackKind::Fgsm => {
            let (_, grad) = net.loss_and_input_gradient(x, label)?;
            Ok(x.iter()
                .zip(&grad)
                .map(|(&xi, &g)| clip(xi + cfg.epsilon * sign(g)))
                .collect())
        }
        AttackKind::Pgd => {
            let mut adv = x.to_vec();
            for _ in 0..cfg.pgd_steps {
                let (_, grad) = net.loss_and_input_gradient(&adv, label)?;
                for ((a, &xi), &g) in adv.iter_mut().zip(x).zip(&grad) {
                    let stepped = *a + cfg.pgd_step_size * sign(g);
                    *a = clip(stepped.clamp(xi - cfg.epsilon, xi + cfg.epsilon));
                }
            }
            Ok(adv)
        }
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}
