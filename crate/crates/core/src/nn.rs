//! Dense feed-forward networks trained with Adam.
//!
//! Everything is f64 and batched: a batch is a row-major `batch × width`
//! buffer, weights are `outputs × inputs` row-major. Matrix products go
//! through `matrixmultiply::dgemm`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Linear,
}

impl Activation {
    pub fn code(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::Linear => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Activation::Relu),
            1 => Some(Activation::Linear),
            _ => None,
        }
    }
}

/// Shape and behaviour of one layer, without parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerSpec {
    pub inputs: usize,
    pub outputs: usize,
    pub activation: Activation,
    pub dropout: f64,
}

impl LayerSpec {
    pub fn new(inputs: usize, outputs: usize, activation: Activation, dropout: f64) -> Self {
        LayerSpec {
            inputs,
            outputs,
            activation,
            dropout,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub inputs: usize,
    pub outputs: usize,
    /// `outputs × inputs`, row-major.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
    pub activation: Activation,
    /// Drop probability in training mode, in [0, 1).
    pub dropout: f64,
}

impl DenseLayer {
    /// Uniform initialisation: ±sqrt(6/fan_in) for ReLU layers,
    /// ±sqrt(6/(fan_in+fan_out)) for linear ones. Biases start at zero.
    pub fn init(spec: LayerSpec, rng: &mut Rng) -> Self {
        let bound = match spec.activation {
            Activation::Relu => (6.0 / spec.inputs as f64).sqrt(),
            Activation::Linear => (6.0 / (spec.inputs + spec.outputs) as f64).sqrt(),
        };
        let weights = (0..spec.inputs * spec.outputs)
            .map(|_| rng.uniform(-bound, bound))
            .collect();
        DenseLayer {
            inputs: spec.inputs,
            outputs: spec.outputs,
            weights,
            biases: vec![0.0; spec.outputs],
            activation: spec.activation,
            dropout: spec.dropout,
        }
    }

    pub fn spec(&self) -> LayerSpec {
        LayerSpec::new(self.inputs, self.outputs, self.activation, self.dropout)
    }

    fn check(&self) -> Result<()> {
        if self.weights.len() != self.inputs * self.outputs || self.biases.len() != self.outputs {
            return Err(Error::Shape(format!(
                "layer {}→{} holds {} weights and {} biases",
                self.inputs,
                self.outputs,
                self.weights.len(),
                self.biases.len()
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Argument(format!(
                "dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        Ok(())
    }

    /// `out = x · Wᵀ + b` for a `batch × inputs` block.
    fn affine(&self, x: &[f64], batch: usize, out: &mut [f64]) {
        for row in out.chunks_exact_mut(self.outputs) {
            row.copy_from_slice(&self.biases);
        }
        unsafe {
            matrixmultiply::dgemm(
                batch,
                self.inputs,
                self.outputs,
                1.0,
                x.as_ptr(),
                self.inputs as isize,
                1,
                self.weights.as_ptr(),
                1,
                self.inputs as isize,
                1.0,
                out.as_mut_ptr(),
                self.outputs as isize,
                1,
            );
        }
    }
}

pub enum Mode<'a> {
    /// Dropout active; masks drawn from the generator.
    Train(&'a mut Rng),
    Eval,
}

/// Stack of dense layers. Every parameter update bumps the generation so
/// stale forward caches can be detected.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub layers: Vec<DenseLayer>,
    generation: u64,
}

/// Everything backward needs from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    generation: u64,
    pub batch: usize,
    /// Input block of every layer.
    inputs: Vec<Vec<f64>>,
    /// Pre-activation block of every layer.
    pre: Vec<Vec<f64>>,
    /// Scaled keep-masks (0 or 1/(1-p)) for layers that dropped units.
    masks: Vec<Option<Vec<f64>>>,
    pub output: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(net: &Network) -> Self {
        Gradients {
            weights: net.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            biases: net.layers.iter().map(|l| vec![0.0; l.biases.len()]).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.weights
            .iter()
            .chain(&self.biases)
            .flatten()
            .fold(0.0, |m, g| m.max(g.abs()))
    }
}

impl Network {
    pub fn new(specs: &[LayerSpec], rng: &mut Rng) -> Result<Self> {
        let layers = specs.iter().map(|s| DenseLayer::init(*s, rng)).collect();
        Network::from_layers(layers)
    }

    pub fn from_layers(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Shape("network needs at least one layer".into()));
        }
        for l in &layers {
            l.check()?;
        }
        for w in layers.windows(2) {
            if w[0].outputs != w[1].inputs {
                return Err(Error::Shape(format!(
                    "layer output {} does not feed layer input {}",
                    w[0].outputs, w[1].inputs
                )));
            }
        }
        Ok(Network {
            layers,
            generation: 0,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").outputs
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum()
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    /// Marks parameters as modified outside the optimizer.
    pub fn touch(&mut self) {
        self.generation += 1;
    }

    /// Forward pass over a `batch × input_dim` block.
    pub fn forward_batch(&self, x: &[f64], batch: usize, mut mode: Mode) -> Result<ForwardCache> {
        if batch == 0 || x.len() != batch * self.input_dim() {
            return Err(Error::Shape(format!(
                "input of {} values is not {batch} × {}",
                x.len(),
                self.input_dim()
            )));
        }
        let n = self.layers.len();
        let mut inputs = Vec::with_capacity(n);
        let mut pre = Vec::with_capacity(n);
        let mut masks = Vec::with_capacity(n);
        let mut current = x.to_vec();
        for layer in &self.layers {
            let mut z = vec![0.0; batch * layer.outputs];
            layer.affine(&current, batch, &mut z);
            let mut a = match layer.activation {
                Activation::Relu => z.iter().map(|v| v.max(0.0)).collect(),
                Activation::Linear => z.clone(),
            };
            let mask = match &mut mode {
                Mode::Train(rng) if layer.dropout > 0.0 => {
                    let keep = 1.0 / (1.0 - layer.dropout);
                    let m: Vec<f64> = (0..a.len())
                        .map(|_| if rng.next_f64() < layer.dropout { 0.0 } else { keep })
                        .collect();
                    for (v, k) in a.iter_mut().zip(&m) {
                        *v *= k;
                    }
                    Some(m)
                }
                _ => None,
            };
            inputs.push(std::mem::replace(&mut current, a));
            pre.push(z);
            masks.push(mask);
        }
        Ok(ForwardCache {
            generation: self.generation,
            batch,
            inputs,
            pre,
            masks,
            output: current,
        })
    }

    pub fn forward(&self, x: &[f64], mode: Mode) -> Result<ForwardCache> {
        self.forward_batch(x, 1, mode)
    }

    /// Eval-mode outputs for many inputs, without keeping a cache.
    pub fn predict_many(&self, xs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        self.predict_prefix(xs, self.layers.len())
    }

    /// Eval-mode outputs of the first `depth` layers.
    pub fn predict_prefix(&self, xs: &[Vec<f64>], depth: usize) -> Result<Vec<Vec<f64>>> {
        const CHUNK: usize = 32;
        if depth == 0 || depth > self.layers.len() {
            return Err(Error::Shape(format!(
                "prefix depth {depth} for a {}-layer network",
                self.layers.len()
            )));
        }
        let out_dim = self.layers[depth - 1].outputs;
        let mut out = Vec::with_capacity(xs.len());
        for chunk in xs.chunks(CHUNK) {
            let mut current: Vec<f64> = Vec::with_capacity(chunk.len() * self.input_dim());
            for x in chunk {
                if x.len() != self.input_dim() {
                    return Err(Error::Shape(format!(
                        "input of length {} for a network expecting {}",
                        x.len(),
                        self.input_dim()
                    )));
                }
                current.extend_from_slice(x);
            }
            for layer in &self.layers[..depth] {
                let mut z = vec![0.0; chunk.len() * layer.outputs];
                layer.affine(&current, chunk.len(), &mut z);
                if layer.activation == Activation::Relu {
                    z.iter_mut().for_each(|v| *v = v.max(0.0));
                }
                current = z;
            }
            out.extend(current.chunks_exact(out_dim).map(<[f64]>::to_vec));
        }
        Ok(out)
    }

    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(x, Mode::Eval)?.output)
    }

    /// Reverse-mode gradients of the loss with respect to every parameter,
    /// given the loss gradient with respect to the cached output.
    pub fn backward(&self, cache: &ForwardCache, grad_output: &[f64]) -> Result<Gradients> {
        let mut grads = Gradients::zeros_like(self);
        self.backward_into(cache, grad_output, &mut grads)?;
        Ok(grads)
    }

    /// Like [`Network::backward`], writing into a preallocated buffer.
    pub fn backward_into(
        &self,
        cache: &ForwardCache,
        grad_output: &[f64],
        grads: &mut Gradients,
    ) -> Result<()> {
        if cache.generation != self.generation || cache.inputs.len() != self.layers.len() {
            return Err(Error::State(
                "forward cache was produced before the last parameter update".into(),
            ));
        }
        let batch = cache.batch;
        if grad_output.len() != batch * self.output_dim() {
            return Err(Error::Shape(format!(
                "output gradient of {} values for {batch} × {} outputs",
                grad_output.len(),
                self.output_dim()
            )));
        }
        if grads.weights.len() != self.layers.len() {
            return Err(Error::Shape("gradient buffer does not match network".into()));
        }
        let mut g = grad_output.to_vec();
        for (idx, layer) in self.layers.iter().enumerate().rev() {
            if let Some(mask) = &cache.masks[idx] {
                for (v, m) in g.iter_mut().zip(mask) {
                    *v *= m;
                }
            }
            if layer.activation == Activation::Relu {
                for (v, z) in g.iter_mut().zip(&cache.pre[idx]) {
                    if *z <= 0.0 {
                        *v = 0.0;
                    }
                }
            }
            let x = &cache.inputs[idx];
            let dw = &mut grads.weights[idx];
            let db = &mut grads.biases[idx];
            // dW = gᵀ · x
            unsafe {
                matrixmultiply::dgemm(
                    layer.outputs,
                    batch,
                    layer.inputs,
                    1.0,
                    g.as_ptr(),
                    1,
                    layer.outputs as isize,
                    x.as_ptr(),
                    layer.inputs as isize,
                    1,
                    0.0,
                    dw.as_mut_ptr(),
                    layer.inputs as isize,
                    1,
                );
            }
            db.iter_mut().for_each(|v| *v = 0.0);
            for row in g.chunks_exact(layer.outputs) {
                for (b, v) in db.iter_mut().zip(row) {
                    *b += v;
                }
            }
            if idx > 0 {
                // dx = g · W
                let mut dx = vec![0.0; batch * layer.inputs];
                unsafe {
                    matrixmultiply::dgemm(
                        batch,
                        layer.outputs,
                        layer.inputs,
                        1.0,
                        g.as_ptr(),
                        layer.outputs as isize,
                        1,
                        layer.weights.as_ptr(),
                        layer.inputs as isize,
                        1,
                        0.0,
                        dx.as_mut_ptr(),
                        layer.inputs as isize,
                        1,
                    );
                }
                g = dx;
            }
        }
        Ok(())
    }
}

/// Mean squared error over all components and its gradient w.r.t. the prediction.
pub fn mse_loss(target: &[f64], prediction: &[f64]) -> Result<(f64, Vec<f64>)> {
    if target.len() != prediction.len() || target.is_empty() {
        return Err(Error::Shape(format!(
            "MSE of lengths {} and {}",
            target.len(),
            prediction.len()
        )));
    }
    let n = target.len() as f64;
    let mut loss = 0.0;
    let grad = target
        .iter()
        .zip(prediction)
        .map(|(t, p)| {
            let d = p - t;
            loss += d * d;
            2.0 * d / n
        })
        .collect();
    Ok((loss / n, grad))
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// `-ln softmax(logits)[label]` and its gradient `softmax - one_hot(label)`.
pub fn softmax_ce_loss(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    if label >= logits.len() {
        return Err(Error::Argument(format!(
            "label {label} out of range for {} logits",
            logits.len()
        )));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_sum = logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln() + max;
    let loss = log_sum - logits[label];
    let mut grad = softmax(logits);
    grad[label] -= 1.0;
    Ok((loss, grad))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    m_w: Vec<Vec<f64>>,
    v_w: Vec<Vec<f64>>,
    m_b: Vec<Vec<f64>>,
    v_b: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(net: &Network, lr: f64) -> Self {
        let zeros = Gradients::zeros_like(net);
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m_w: zeros.weights.clone(),
            v_w: zeros.weights,
            m_b: zeros.biases.clone(),
            v_b: zeros.biases,
        }
    }
}

#[derive(Clone, Copy)]
struct AdamCoeffs {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    // bias corrections 1 - β^t
    c1: f64,
    c2: f64,
}

fn adam_update(params: &mut [f64], grads: &[f64], m: &mut [f64], v: &mut [f64], k: AdamCoeffs) {
    for (((p, g), m), v) in params.iter_mut().zip(grads).zip(m).zip(v) {
        *m = k.beta1 * *m + (1.0 - k.beta1) * g;
        *v = k.beta2 * *v + (1.0 - k.beta2) * g * g;
        let m_hat = *m / k.c1;
        let v_hat = *v / k.c2;
        *p -= k.lr * m_hat / (v_hat.sqrt() + k.eps);
    }
}

/// One bias-corrected Adam update of every parameter.
pub fn adam_step(net: &mut Network, grads: &Gradients, state: &mut AdamState) -> Result<()> {
    let shapes_ok = grads.weights.len() == net.layers.len()
        && state.m_w.len() == net.layers.len()
        && net.layers.iter().enumerate().all(|(i, l)| {
            grads.weights[i].len() == l.weights.len()
                && grads.biases[i].len() == l.biases.len()
                && state.m_w[i].len() == l.weights.len()
                && state.m_b[i].len() == l.biases.len()
        });
    if !shapes_ok {
        return Err(Error::Shape(
            "gradients or optimizer state do not match the network".into(),
        ));
    }
    state.t += 1;
    let k = AdamCoeffs {
        lr: state.lr,
        beta1: state.beta1,
        beta2: state.beta2,
        eps: state.eps,
        c1: 1.0 - state.beta1.powi(state.t as i32),
        c2: 1.0 - state.beta2.powi(state.t as i32),
    };
    for (i, layer) in net.layers.iter_mut().enumerate() {
        adam_update(
            &mut layer.weights,
            &grads.weights[i],
            &mut state.m_w[i],
            &mut state.v_w[i],
            k,
        );
        adam_update(
            &mut layer.biases,
            &grads.biases[i],
            &mut state.m_b[i],
            &mut state.v_b[i],
            k,
        );
    }
    net.generation += 1;
    Ok(())
}

/// Backward pass fused with the Adam update, one weight row at a time.
///
/// Same result as [`Network::backward`] followed by [`adam_step`] (up to
/// summation order), but each weight row is read and written once instead
/// of materialising a full gradient buffer — the dominant cost for wide
/// layers, which are memory-bound.
pub fn backward_adam_step(
    net: &mut Network,
    cache: &ForwardCache,
    grad_output: &[f64],
    state: &mut AdamState,
) -> Result<()> {
    if cache.generation != net.generation || cache.inputs.len() != net.layers.len() {
        return Err(Error::State(
            "forward cache was produced before the last parameter update".into(),
        ));
    }
    let batch = cache.batch;
    if grad_output.len() != batch * net.output_dim() {
        return Err(Error::Shape(format!(
            "output gradient of {} values for {batch} × {} outputs",
            grad_output.len(),
            net.output_dim()
        )));
    }
    if state.m_w.len() != net.layers.len()
        || net.layers.iter().zip(&state.m_w).any(|(l, m)| m.len() != l.weights.len())
    {
        return Err(Error::Shape("optimizer state does not match the network".into()));
    }
    state.t += 1;
    let k = AdamCoeffs {
        lr: state.lr,
        beta1: state.beta1,
        beta2: state.beta2,
        eps: state.eps,
        c1: 1.0 - state.beta1.powi(state.t as i32),
        c2: 1.0 - state.beta2.powi(state.t as i32),
    };
    let mut g = grad_output.to_vec();
    let mut g_row = vec![0.0; batch];
    let mut gw_row = Vec::new();
    for idx in (0..net.layers.len()).rev() {
        let layer = &mut net.layers[idx];
        if let Some(mask) = &cache.masks[idx] {
            for (v, m) in g.iter_mut().zip(mask) {
                *v *= m;
            }
        }
        if layer.activation == Activation::Relu {
            for (v, z) in g.iter_mut().zip(&cache.pre[idx]) {
                if *z <= 0.0 {
                    *v = 0.0;
                }
            }
        }
        let (n_in, n_out) = (layer.inputs, layer.outputs);
        let x = &cache.inputs[idx];
        let mut dx = if idx > 0 { vec![0.0; batch * n_in] } else { Vec::new() };
        gw_row.resize(n_in, 0.0);
        let (m_w, v_w) = (&mut state.m_w[idx], &mut state.v_w[idx]);
        for o in 0..n_out {
            for (b, gr) in g_row.iter_mut().enumerate() {
                *gr = g[b * n_out + o];
            }
            let span = o * n_in..(o + 1) * n_in;
            let w = &mut layer.weights[span.clone()];
            // dx uses the weights before this step's update.
            if idx > 0 {
                for (b, &gb) in g_row.iter().enumerate() {
                    if gb != 0.0 {
                        for (d, &wi) in dx[b * n_in..(b + 1) * n_in].iter_mut().zip(w.iter()) {
                            *d += gb * wi;
                        }
                    }
                }
            }
            gw_row.iter_mut().for_each(|v| *v = 0.0);
            for (b, &gb) in g_row.iter().enumerate() {
                if gb != 0.0 {
                    for (d, &xi) in gw_row.iter_mut().zip(&x[b * n_in..(b + 1) * n_in]) {
                        *d += gb * xi;
                    }
                }
            }
            adam_update(w, &gw_row, &mut m_w[span.clone()], &mut v_w[span], k);
        }
        let mut db = vec![0.0; n_out];
        for row in g.chunks_exact(n_out) {
            for (b, v) in db.iter_mut().zip(row) {
                *b += v;
            }
        }
        adam_update(&mut layer.biases, &db, &mut state.m_b[idx], &mut state.v_b[idx], k);
        if idx > 0 {
            g = dx;
        }
    }
    net.generation += 1;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 4,
            learning_rate: 0.0005,
            seed: 7,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// What the network is trained to produce.
#[derive(Debug, Clone, Copy)]
pub enum Targets<'a> {
    /// Regression onto target vectors with MSE.
    Vectors(&'a [Vec<f64>]),
    /// Classification with softmax cross-entropy.
    Labels(&'a [usize]),
}

/// Per-epoch training record.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    /// Mean mini-batch loss of each epoch.
    pub loss: Vec<f64>,
    /// Training accuracy of each epoch; empty for regression.
    pub accuracy: Vec<f64>,
}

fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &x)| {
            if x > best.1 {
                (i, x)
            } else {
                best
            }
        })
        .0
}

/// Mini-batch Adam training. The final batch of an epoch may be short.
pub fn train(
    net: &mut Network,
    inputs: &[Vec<f64>],
    targets: Targets,
    cfg: &TrainConfig,
    rng: &mut Rng,
) -> Result<TrainHistory> {
    cfg.validate()?;
    if inputs.is_empty() {
        return Err(Error::Argument("training set is empty".into()));
    }
    let expected = match targets {
        Targets::Vectors(t) => t.len(),
        Targets::Labels(l) => l.len(),
    };
    if expected != inputs.len() {
        return Err(Error::Shape(format!(
            "{} inputs but {expected} targets",
            inputs.len()
        )));
    }
    let in_dim = net.input_dim();
    let out_dim = net.output_dim();
    if let Some(bad) = inputs.iter().find(|x| x.len() != in_dim) {
        return Err(Error::Shape(format!(
            "training input of length {} for network input {in_dim}",
            bad.len()
        )));
    }
    match targets {
        Targets::Vectors(t) => {
            if let Some(bad) = t.iter().find(|y| y.len() != out_dim) {
                return Err(Error::Shape(format!(
                    "target of length {} for network output {out_dim}",
                    bad.len()
                )));
            }
        }
        Targets::Labels(l) => {
            if let Some(bad) = l.iter().find(|&&y| y >= out_dim) {
                return Err(Error::Argument(format!(
                    "label {bad} out of range for {out_dim} outputs"
                )));
            }
        }
    }

    let mut adam = AdamState::new(net, cfg.learning_rate);
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut history = TrainHistory::default();
    let mut x = Vec::with_capacity(cfg.batch_size * in_dim);

    for _epoch in 0..cfg.epochs {
        if cfg.shuffle {
            rng.shuffle(&mut order);
        }
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        let mut correct = 0usize;
        for idx in order.chunks(cfg.batch_size) {
            let batch = idx.len();
            x.clear();
            for &i in idx {
                x.extend_from_slice(&inputs[i]);
            }
            let cache = net.forward_batch(&x, batch, Mode::Train(rng))?;
            let mut grad_out = vec![0.0; batch * out_dim];
            let mut loss = 0.0;
            for (row, &i) in idx.iter().enumerate() {
                let pred = &cache.output[row * out_dim..(row + 1) * out_dim];
                let (l, g) = match targets {
                    Targets::Vectors(t) => mse_loss(&t[i], pred)?,
                    Targets::Labels(labels) => {
                        if argmax(pred) == labels[i] {
                            correct += 1;
                        }
                        softmax_ce_loss(pred, labels[i])?
                    }
                };
                loss += l / batch as f64;
                for (dst, g) in grad_out[row * out_dim..(row + 1) * out_dim]
                    .iter_mut()
                    .zip(g)
                {
                    *dst = g / batch as f64;
                }
            }
            backward_adam_step(net, &cache, &grad_out, &mut adam)?;
            loss_sum += loss;
            batches += 1;
        }
        history.loss.push(loss_sum / batches as f64);
        if matches!(targets, Targets::Labels(_)) {
            history.accuracy.push(correct as f64 / inputs.len() as f64);
        }
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_layer(n: usize, activation: Activation) -> Network {
        let mut weights = vec![0.0; n * n];
        for i in 0..n {
            weights[i * n + i] = 1.0;
        }
        Network::from_layers(vec![DenseLayer {
            inputs: n,
            outputs: n,
            weights,
            biases: vec![0.0; n],
            activation,
            dropout: 0.0,
        }])
        .unwrap()
    }

    #[test]
    fn identity_and_relu_forward() {
        let net = identity_layer(3, Activation::Linear);
        assert_eq!(net.predict(&[1.0, -2.0, 3.5]).unwrap(), vec![1.0, -2.0, 3.5]);
        let net = identity_layer(2, Activation::Relu);
        assert_eq!(net.predict(&[-1.0, 2.0]).unwrap(), vec![0.0, 2.0]);
        assert!(matches!(net.predict(&[1.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn predict_many_matches_forward() {
        let mut rng = Rng::new(3);
        let net = Network::new(
            &[
                LayerSpec::new(5, 7, Activation::Relu, 0.1),
                LayerSpec::new(7, 3, Activation::Linear, 0.0),
            ],
            &mut rng,
        )
        .unwrap();
        let xs: Vec<Vec<f64>> = (0..40)
            .map(|_| (0..5).map(|_| rng.normal()).collect())
            .collect();
        let many = net.predict_many(&xs).unwrap();
        for (x, y) in xs.iter().zip(&many) {
            let single = net.predict(x).unwrap();
            for (a, b) in single.iter().zip(y) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mse_values() {
        assert_eq!(mse_loss(&[1.0, 2.0], &[1.0, 2.0]).unwrap().0, 0.0);
        let (l, g) = mse_loss(&[0.0, 0.0], &[1.0, 1.0]).unwrap();
        assert_eq!(l, 1.0);
        assert_eq!(g, vec![1.0, 1.0]);
        assert!(mse_loss(&[0.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn softmax_ce_values() {
        let (l, g) = softmax_ce_loss(&[0.0, 0.0], 0).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((g[0] + 0.5).abs() < 1e-15 && (g[1] - 0.5).abs() < 1e-15);
        let (l, g) = softmax_ce_loss(&[1000.0, 0.0], 0).unwrap();
        assert!(l.is_finite() && l.abs() < 1e-12);
        assert!(g.iter().all(|v| v.is_finite()));
        assert!(matches!(
            softmax_ce_loss(&[0.0, 1.0], 2),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn linear_weight_gradient_is_outer_product() {
        let mut rng = Rng::new(11);
        let net = Network::new(&[LayerSpec::new(3, 2, Activation::Linear, 0.0)], &mut rng).unwrap();
        let x = [0.3, -1.2, 2.0];
        let cache = net.forward(&x, Mode::Eval).unwrap();
        let g_out = [0.7, -0.4];
        let grads = net.backward(&cache, &g_out).unwrap();
        for j in 0..2 {
            for k in 0..3 {
                assert!((grads.weights[0][j * 3 + k] - g_out[j] * x[k]).abs() < 1e-15);
            }
            assert_eq!(grads.biases[0][j], g_out[j]);
        }
    }

    #[test]
    fn zero_loss_gradient_gives_zero_gradients() {
        let mut rng = Rng::new(4);
        let net = Network::new(
            &[
                LayerSpec::new(6, 4, Activation::Relu, 0.0),
                LayerSpec::new(4, 6, Activation::Linear, 0.0),
            ],
            &mut rng,
        )
        .unwrap();
        let x: Vec<f64> = (0..6).map(|_| rng.normal()).collect();
        let cache = net.forward(&x, Mode::Eval).unwrap();
        let grads = net.backward(&cache, &[0.0; 6]).unwrap();
        assert_eq!(grads.max_abs(), 0.0);
    }

    #[test]
    fn stale_cache_is_rejected() {
        let mut rng = Rng::new(4);
        let mut net =
            Network::new(&[LayerSpec::new(2, 2, Activation::Linear, 0.0)], &mut rng).unwrap();
        let cache = net.forward(&[1.0, 2.0], Mode::Eval).unwrap();
        let grads = net.backward(&cache, &[1.0, 1.0]).unwrap();
        let mut adam = AdamState::new(&net, 0.01);
        adam_step(&mut net, &grads, &mut adam).unwrap();
        assert!(matches!(
            net.backward(&cache, &[1.0, 1.0]),
            Err(Error::State(_))
        ));
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut rng = Rng::new(5);
        let mut net =
            Network::new(&[LayerSpec::new(3, 2, Activation::Linear, 0.0)], &mut rng).unwrap();
        let before = net.clone();
        let mut grads = Gradients::zeros_like(&net);
        for (i, g) in grads.weights[0].iter_mut().enumerate() {
            *g = if i % 2 == 0 { 3.0 } else { -0.02 };
        }
        let mut adam = AdamState::new(&net, 0.0005);
        adam_step(&mut net, &grads, &mut adam).unwrap();
        for ((a, b), g) in net.layers[0]
            .weights
            .iter()
            .zip(&before.layers[0].weights)
            .zip(&grads.weights[0])
        {
            let step = b - a;
            assert!((step - 0.0005 * g.signum()).abs() < 1e-9, "step {step}");
        }
        // zero bias gradients leave biases unchanged
        assert_eq!(net.layers[0].biases, before.layers[0].biases);
        assert_eq!(adam.t, 1);
    }

    #[test]
    fn adam_matches_hand_unrolled_recurrence() {
        let mut net = Network::from_layers(vec![DenseLayer {
            inputs: 1,
            outputs: 1,
            weights: vec![0.5],
            biases: vec![0.0],
            activation: Activation::Linear,
            dropout: 0.0,
        }])
        .unwrap();
        let mut grads = Gradients::zeros_like(&net);
        grads.weights[0][0] = 1.0;
        let mut adam = AdamState::new(&net, 0.0005);
        let (b1, b2, eps, lr) = (0.9f64, 0.999f64, 1e-8, 0.0005);
        let (mut m, mut v, mut p) = (0.0f64, 0.0f64, 0.5f64);
        for t in 1..=3 {
            adam_step(&mut net, &grads, &mut adam).unwrap();
            m = b1 * m + (1.0 - b1);
            v = b2 * v + (1.0 - b2);
            let m_hat = m / (1.0 - b1.powi(t));
            let v_hat = v / (1.0 - b2.powi(t));
            p -= lr * m_hat / (v_hat.sqrt() + eps);
            assert!((net.layers[0].weights[0] - p).abs() < 1e-12);
        }
    }

    #[test]
    fn adam_rejects_mismatched_gradients() {
        let mut rng = Rng::new(5);
        let mut net =
            Network::new(&[LayerSpec::new(3, 2, Activation::Linear, 0.0)], &mut rng).unwrap();
        let other = Network::new(&[LayerSpec::new(4, 2, Activation::Linear, 0.0)], &mut rng).unwrap();
        let grads = Gradients::zeros_like(&other);
        let mut adam = AdamState::new(&net, 0.001);
        assert!(matches!(
            adam_step(&mut net, &grads, &mut adam),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn mismatched_layer_chain_rejected() {
        let mut rng = Rng::new(1);
        let err = Network::new(
            &[
                LayerSpec::new(3, 4, Activation::Relu, 0.0),
                LayerSpec::new(5, 2, Activation::Linear, 0.0),
            ],
            &mut rng,
        );
        assert!(matches!(err, Err(Error::Shape(_))));
    }

    #[test]
    fn train_rejects_empty_dataset() {
        let mut rng = Rng::new(1);
        let mut net =
            Network::new(&[LayerSpec::new(2, 2, Activation::Linear, 0.0)], &mut rng).unwrap();
        let r = train(
            &mut net,
            &[],
            Targets::Vectors(&[]),
            &TrainConfig::default(),
            &mut rng,
        );
        assert!(matches!(r, Err(Error::Argument(_))));
    }

    #[test]
    fn fused_step_matches_backward_then_adam() {
        let specs = [
            LayerSpec::new(12, 9, Activation::Relu, 0.2),
            LayerSpec::new(9, 5, Activation::Relu, 0.0),
            LayerSpec::new(5, 12, Activation::Linear, 0.0),
        ];
        let mut rng = Rng::new(21);
        let mut a = Network::new(&specs, &mut rng).unwrap();
        let mut b = a.clone();
        let (mut sa, mut sb) = (AdamState::new(&a, 0.01), AdamState::new(&b, 0.01));
        for step in 0..5 {
            let x: Vec<f64> = (0..36).map(|_| rng.uniform(0.0, 1.0)).collect();
            let ca = a.forward_batch(&x, 3, Mode::Train(&mut Rng::new(step))).unwrap();
            let cb = b.forward_batch(&x, 3, Mode::Train(&mut Rng::new(step))).unwrap();
            let target: Vec<f64> = x.iter().map(|v| 1.0 - v).collect();
            let (_, grad) = mse_loss(&target, &ca.output).unwrap();
            let grads = a.backward(&ca, &grad).unwrap();
            adam_step(&mut a, &grads, &mut sa).unwrap();
            backward_adam_step(&mut b, &cb, &grad, &mut sb).unwrap();
        }
        for (la, lb) in a.layers.iter().zip(&b.layers) {
            for (p, q) in la.weights.iter().zip(&lb.weights).chain(la.biases.iter().zip(&lb.biases)) {
                assert!((p - q).abs() < 1e-12, "{p} vs {q}");
            }
        }
        assert_eq!(a.generation(), b.generation());
        let stale = b.forward(&[0.5; 12], Mode::Eval).unwrap();
        b.touch();
        assert!(backward_adam_step(&mut b, &stale, &[0.0; 12], &mut sb).is_err());
    }
}
