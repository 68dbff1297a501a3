//! Feature-only MLP base predictor.
//!
//! Hidden layers use ReLU and inverted dropout; the output layer is linear
//! and turned into class probabilities with a row-wise softmax. Training is
//! full batch over the training nodes and keeps the parameter snapshot with
//! the best validation accuracy.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::compat::{BeliefKind, Beliefs};
use crate::error::{ClpError, Result};
use crate::graph::SplitMask;
use crate::matrix::{argmax, Matrix};

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `in_dim x out_dim`
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn in_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.cols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub layers: Vec<Layer>,
    pub dropout: f64,
}

impl MlpParams {
    pub fn new(layers: Vec<Layer>, dropout: f64) -> Result<Self> {
        if layers.is_empty() {
            return Err(ClpError::InvalidArgument("an MLP needs at least one layer".into()));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(ClpError::DimensionMismatch(format!(
                    "layer {i} outputs {} but layer {} expects {}",
                    pair[0].out_dim(),
                    i + 1,
                    pair[1].in_dim()
                )));
            }
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.out_dim() {
                return Err(ClpError::DimensionMismatch(format!("layer {i} bias length")));
            }
        }
        if !(0.0..1.0).contains(&dropout) {
            return Err(ClpError::InvalidArgument(format!("dropout {dropout} outside [0, 1)")));
        }
        Ok(Self { layers, dropout })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn num_classes(&self) -> usize {
        self.layers.last().map_or(0, Layer::out_dim)
    }

    pub fn shapes(&self) -> Vec<(usize, usize)> {
        self.layers.iter().map(|l| (l.in_dim(), l.out_dim())).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.as_slice().len() + l.bias.len()).sum()
    }

    /// Binary checkpoint: magic, dropout, layer count, per-layer dims, then
    /// per layer the row-major weights followed by the bias, all little
    /// endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&self.dropout.to_le_bytes());
        out.extend_from_slice(&(self.layers.len() as u64).to_le_bytes());
        for l in &self.layers {
            out.extend_from_slice(&(l.in_dim() as u64).to_le_bytes());
            out.extend_from_slice(&(l.out_dim() as u64).to_le_bytes());
        }
        for l in &self.layers {
            for x in l.weights.as_slice().iter().chain(&l.bias) {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |msg: &str| ClpError::InvalidArgument(format!("checkpoint: {msg}"));
        let mut cursor = bytes.strip_prefix(CHECKPOINT_MAGIC.as_slice()).ok_or_else(|| bad("bad magic"))?;
        let mut take8 = || -> Result<[u8; 8]> {
            if cursor.len() < 8 {
                return Err(bad("truncated"));
            }
            let (head, rest) = cursor.split_at(8);
            cursor = rest;
            Ok(head.try_into().unwrap())
        };
        let dropout = f64::from_le_bytes(take8()?);
        let count = u64::from_le_bytes(take8()?) as usize;
        if count == 0 || count > 64 {
            return Err(bad("implausible layer count"));
        }
        let mut dims = Vec::with_capacity(count);
        for _ in 0..count {
            let i = u64::from_le_bytes(take8()?) as usize;
            let o = u64::from_le_bytes(take8()?) as usize;
            dims.push((i, o));
        }
        let mut layers = Vec::with_capacity(count);
        for (i, o) in dims {
            let mut w = Vec::with_capacity(i * o);
            for _ in 0..i * o {
                w.push(f64::from_le_bytes(take8()?));
            }
            let mut b = Vec::with_capacity(o);
            for _ in 0..o {
                b.push(f64::from_le_bytes(take8()?));
            }
            layers.push(Layer {
                weights: Matrix::from_vec(i, o, w)?,
                bias: b,
            });
        }
        if !cursor.is_empty() {
            return Err(bad("trailing bytes"));
        }
        MlpParams::new(layers, dropout)
    }

    /// sha256 of the checkpoint bytes, hex encoded.
    pub fn fingerprint(&self) -> String {
        Sha256::digest(self.to_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"CLPMLP01";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Optimizer {
    GradientDescent,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub early_stop_patience: usize,
    pub weight_decay: f64,
    pub dropout: f64,
    pub hidden_dim: usize,
    pub num_hidden_layers: usize,
    pub seed: u64,
    pub optimizer: Optimizer,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            epochs: 500,
            early_stop_patience: 50,
            weight_decay: 5e-5,
            dropout: 0.5,
            hidden_dim: 64,
            num_hidden_layers: 1,
            seed: 0,
            optimizer: Optimizer::adam(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(ClpError::InvalidArgument(format!("learning rate {}", self.learning_rate)));
        }
        if self.early_stop_patience > self.epochs {
            return Err(ClpError::InvalidArgument("patience exceeds epochs".into()));
        }
        if !(1..=3).contains(&self.num_hidden_layers) {
            return Err(ClpError::InvalidArgument("num_hidden_layers must be 1, 2 or 3".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ClpError::InvalidArgument(format!("dropout {}", self.dropout)));
        }
        Ok(())
    }
}

/// Glorot-uniform weights, zero biases.
pub fn init_mlp(
    feature_dim: usize,
    hidden_dim: usize,
    num_hidden_layers: usize,
    num_classes: usize,
    seed: u64,
) -> Result<MlpParams> {
    if feature_dim == 0 || num_classes == 0 || (num_hidden_layers > 0 && hidden_dim == 0) {
        return Err(ClpError::InvalidArgument("MLP dimensions must be positive".into()));
    }
    let mut dims = vec![feature_dim];
    dims.extend(std::iter::repeat(hidden_dim).take(num_hidden_layers));
    dims.push(num_classes);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = dims
        .windows(2)
        .map(|d| {
            let (i, o) = (d[0], d[1]);
            let s = (6.0 / (i + o) as f64).sqrt();
            let w: Vec<f64> = (0..i * o).map(|_| rng.gen_range(-s..=s)).collect();
            Layer {
                weights: Matrix::from_vec(i, o, w).unwrap(),
                bias: vec![0.0; o],
            }
        })
        .collect();
    MlpParams::new(layers, 0.0)
}

struct ForwardCache {
    /// Input to each layer (after activation and dropout of the previous one).
    inputs: Vec<Matrix>,
    /// Pre-activation of each hidden layer.
    pre_activations: Vec<Matrix>,
    /// Inverted-dropout multipliers per hidden layer (empty when unused).
    masks: Vec<Vec<f64>>,
    logits: Matrix,
}

fn affine(x: &Matrix, layer: &Layer) -> Result<Matrix> {
    let mut z = x.matmul(&layer.weights)?;
    for i in 0..z.rows() {
        for (v, b) in z.row_mut(i).iter_mut().zip(&layer.bias) {
            *v += b;
        }
    }
    Ok(z)
}

fn forward_cached(params: &MlpParams, x: &Matrix, dropout_seed: Option<u64>) -> Result<ForwardCache> {
    if x.cols() != params.input_dim() {
        return Err(ClpError::DimensionMismatch(format!(
            "features have {} columns, the first layer expects {}",
            x.cols(),
            params.input_dim()
        )));
    }
    let mut rng = dropout_seed.map(ChaCha8Rng::seed_from_u64);
    let last = params.layers.len() - 1;
    let mut inputs = Vec::with_capacity(params.layers.len());
    let mut pre_activations = Vec::with_capacity(last);
    let mut masks = Vec::with_capacity(last);
    let mut current = x.clone();
    for (l, layer) in params.layers.iter().enumerate() {
        let z = affine(&current, layer)?;
        inputs.push(current);
        if l == last {
            return Ok(ForwardCache {
                inputs,
                pre_activations,
                masks,
                logits: z,
            });
        }
        let mut a = z.clone();
        a.as_mut_slice().iter_mut().for_each(|v| *v = v.max(0.0));
        let mut mask = Vec::new();
        if let (Some(rng), true) = (rng.as_mut(), params.dropout > 0.0) {
            let keep = 1.0 - params.dropout;
            mask = (0..a.as_slice().len())
                .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
                .collect();
            a.as_mut_slice().iter_mut().zip(&mask).for_each(|(v, m)| *v *= m);
        }
        pre_activations.push(z);
        masks.push(mask);
        current = a;
    }
    unreachable!("the loop returns at the last layer")
}

/// Logits for every row of `x`. Dropout is active only in `train_mode`,
/// drawing its masks from `seed`.
pub fn forward(params: &MlpParams, x: &Matrix, train_mode: bool, seed: u64) -> Result<Matrix> {
    Ok(forward_cached(params, x, train_mode.then_some(seed))?.logits)
}

/// Row-wise softmax with max subtraction.
pub fn softmax(logits: &Matrix) -> Matrix {
    let mut p = logits.clone();
    for i in 0..p.rows() {
        let row = p.row_mut(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut s = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            s += *v;
        }
        row.iter_mut().for_each(|v| *v /= s);
    }
    p
}

/// Class probabilities for every node.
pub fn predict(params: &MlpParams, x: &Matrix) -> Result<Beliefs> {
    let logits = forward(params, x, false, 0)?;
    Ok(Beliefs {
        values: softmax(&logits),
        kind: BeliefKind::BasePrediction,
    })
}

fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Mean cross-entropy of `logits` against `labels`.
pub fn cross_entropy(logits: &Matrix, labels: &[usize]) -> f64 {
    let total: f64 = logits
        .iter_rows()
        .zip(labels)
        .map(|(row, &y)| log_sum_exp(row) - row[y])
        .sum();
    total / labels.len() as f64
}

/// Gradients with the same shapes as the layers.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub layers: Vec<(Matrix, Vec<f64>)>,
}

/// Mean cross-entropy over the rows of `x` and its gradient with respect to
/// every parameter. `dropout_seed = None` disables dropout.
pub fn loss_and_gradients(
    params: &MlpParams,
    x: &Matrix,
    labels: &[usize],
    dropout_seed: Option<u64>,
) -> Result<(f64, Gradients)> {
    if labels.len() != x.rows() || labels.is_empty() {
        return Err(ClpError::DimensionMismatch(format!("{} labels for {} rows", labels.len(), x.rows())));
    }
    let cache = forward_cached(params, x, dropout_seed)?;
    let loss = cross_entropy(&cache.logits, labels);
    let m = labels.len() as f64;

    let mut delta = softmax(&cache.logits);
    for (i, &y) in labels.iter().enumerate() {
        delta[(i, y)] -= 1.0;
    }
    delta.as_mut_slice().iter_mut().for_each(|v| *v /= m);

    let mut grads = Vec::with_capacity(params.layers.len());
    for l in (0..params.layers.len()).rev() {
        let input = &cache.inputs[l];
        let gw = input.transpose().matmul(&delta)?;
        let gb = delta.col_sums();
        grads.push((gw, gb));
        if l == 0 {
            break;
        }
        let mut back = delta.matmul(&params.layers[l].weights.transpose())?;
        let z = &cache.pre_activations[l - 1];
        let mask = &cache.masks[l - 1];
        for (idx, v) in back.as_mut_slice().iter_mut().enumerate() {
            if z.as_slice()[idx] <= 0.0 {
                *v = 0.0;
            } else if !mask.is_empty() {
                *v *= mask[idx];
            }
        }
        delta = back;
    }
    grads.reverse();
    Ok((loss, Gradients { layers: grads }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_acc: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_acc: f64,
}

impl TrainingLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_acc\n");
        for r in &self.epochs {
            out.push_str(&format!("{},{:.10},{:.6}\n", r.epoch, r.train_loss, r.val_acc));
        }
        out
    }
}

fn select_rows(x: &Matrix, rows: &[usize]) -> Matrix {
    let mut out = Matrix::zeros(rows.len(), x.cols());
    for (i, &r) in rows.iter().enumerate() {
        out.row_mut(i).copy_from_slice(x.row(r));
    }
    out
}

fn labels_on(labels: &[Option<usize>], rows: &[usize], what: &str) -> Result<Vec<usize>> {
    rows.iter()
        .map(|&v| labels[v].ok_or_else(|| ClpError::MissingLabels(format!("{what} node {v} is unlabelled"))))
        .collect()
}

struct AdamState {
    step: i32,
    m: Vec<(Matrix, Vec<f64>)>,
    v: Vec<(Matrix, Vec<f64>)>,
}

fn apply_update(
    params: &mut MlpParams,
    grads: &Gradients,
    config: &TrainConfig,
    adam: &mut Option<AdamState>,
) {
    let lr = config.learning_rate;
    let decay = 1.0 - lr * config.weight_decay;
    match (config.optimizer, adam.as_mut()) {
        (Optimizer::Adam { beta1, beta2, eps }, Some(state)) => {
            state.step += 1;
            let c1 = 1.0 - beta1.powi(state.step);
            let c2 = 1.0 - beta2.powi(state.step);
            for (l, layer) in params.layers.iter_mut().enumerate() {
                let (gw, gb) = &grads.layers[l];
                let (mw, mb) = &mut state.m[l];
                let (vw, vb) = &mut state.v[l];
                let w_iter = layer
                    .weights
                    .as_mut_slice()
                    .iter_mut()
                    .zip(gw.as_slice())
                    .zip(mw.as_mut_slice().iter_mut().zip(vw.as_mut_slice()));
                for ((w, g), (m, v)) in w_iter {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    *w = *w * decay - lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                }
                for ((b, g), (m, v)) in layer.bias.iter_mut().zip(gb).zip(mb.iter_mut().zip(vb.iter_mut())) {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    *b -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                }
            }
        }
        _ => {
            for (layer, (gw, gb)) in params.layers.iter_mut().zip(&grads.layers) {
                for (w, g) in layer.weights.as_mut_slice().iter_mut().zip(gw.as_slice()) {
                    *w = *w * decay - lr * g;
                }
                for (b, g) in layer.bias.iter_mut().zip(gb) {
                    *b -= lr * g;
                }
            }
        }
    }
}

/// Trains on `mask.train`, evaluating `mask.validation` after every update.
/// Returns the snapshot with the highest validation accuracy (earliest on
/// ties) and stops after `early_stop_patience` epochs without improvement.
pub fn train(
    params: &MlpParams,
    features: &Matrix,
    labels: &[Option<usize>],
    mask: &SplitMask,
    config: &TrainConfig,
) -> Result<(MlpParams, TrainingLog)> {
    config.validate()?;
    if mask.train.is_empty() {
        return Err(ClpError::Empty("training mask".into()));
    }
    if labels.len() != features.rows() {
        return Err(ClpError::DimensionMismatch(format!(
            "{} labels for {} feature rows",
            labels.len(),
            features.rows()
        )));
    }
    let x_train = select_rows(features, &mask.train);
    let y_train = labels_on(labels, &mask.train, "training")?;
    let x_val = select_rows(features, &mask.validation);
    let y_val = labels_on(labels, &mask.validation, "validation")?;

    let mut current = params.clone();
    current.dropout = config.dropout;
    let mut adam = matches!(config.optimizer, Optimizer::Adam { .. }).then(|| {
        let zeros: Vec<(Matrix, Vec<f64>)> = current
            .layers
            .iter()
            .map(|l| (Matrix::zeros(l.in_dim(), l.out_dim()), vec![0.0; l.out_dim()]))
            .collect();
        AdamState {
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    });

    let val_accuracy = |p: &MlpParams| -> Result<f64> {
        if y_val.is_empty() {
            return Ok(0.0);
        }
        let logits = forward(p, &x_val, false, 0)?;
        let hits = logits.iter_rows().zip(&y_val).filter(|(r, &y)| argmax(r) == y).count();
        Ok(hits as f64 / y_val.len() as f64)
    };

    let mut log = TrainingLog {
        epochs: Vec::new(),
        best_epoch: 0,
        best_val_acc: f64::NEG_INFINITY,
    };
    let mut best = current.clone();
    let mut since_best = 0;
    for epoch in 0..config.epochs {
        // one dropout stream per epoch, derived from the run seed
        let dropout_seed = (config.dropout > 0.0).then(|| config.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ epoch as u64);
        let (loss, grads) = loss_and_gradients(&current, &x_train, &y_train, dropout_seed)?;
        if !loss.is_finite() {
            return Err(ClpError::NonFiniteLoss { epoch });
        }
        apply_update(&mut current, &grads, config, &mut adam);
        let val_acc = val_accuracy(&current)?;
        log.epochs.push(EpochRecord {
            epoch,
            train_loss: loss,
            val_acc,
        });
        if val_acc > log.best_val_acc {
            log.best_val_acc = val_acc;
            log.best_epoch = epoch;
            best = current.clone();
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.early_stop_patience {
                break;
            }
        }
    }
    if log.epochs.is_empty() {
        log.best_val_acc = val_accuracy(&current)?;
    }
    Ok((best, log))
}

/// Column-wise z-scoring; constant columns are only centred.
pub fn standardize(features: &Matrix) -> Matrix {
    let n = features.rows().max(1) as f64;
    let means: Vec<f64> = features.col_sums().iter().map(|s| s / n).collect();
    let mut vars = vec![0.0; features.cols()];
    for row in features.iter_rows() {
        for ((v, x), m) in vars.iter_mut().zip(row).zip(&means) {
            *v += (x - m) * (x - m);
        }
    }
    let sds: Vec<f64> = vars.iter().map(|v| (v / n).sqrt()).collect();
    let mut out = features.clone();
    for i in 0..out.rows() {
        for ((x, m), sd) in out.row_mut(i).iter_mut().zip(&means).zip(&sds) {
            *x -= m;
            if *sd > 0.0 {
                *x /= sd;
            }
        }
    }
    out
}
