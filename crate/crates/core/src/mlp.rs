//! The MLP integrity monitor.
//!
//! A fully connected network (ReLU hidden layers, one sigmoid output) trained
//! as a regressor on binary in-tolerance labels with a weighted squared error
//! that multiplies the out-of-tolerance terms by `alpha`.
//!
//! Training happens on [`Network`] (f64 parameters). The finished
//! [`MlpModel`] stores f32 parameters so that the model file round-trips
//! exactly; inference widens them back to f64.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, ModelError};
use crate::featurizer::{CATALOGUE_VERSION, EPS, FEATURE_DIM};

/// Weighted mean squared error: out-of-tolerance terms (`label == false`)
/// are multiplied by `alpha`.
pub fn weighted_mse(labels: &[bool], predictions: &[f64], alpha: f64) -> Result<f64, ModelError> {
    if labels.len() != predictions.len() {
        return Err(ModelError::LengthMismatch(labels.len(), predictions.len()));
    }
    if labels.is_empty() {
        return Err(ModelError::Empty);
    }
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(ModelError::InvalidValue(format!("alpha = {alpha}")));
    }
    let mut total = 0.0;
    for (&p, &p_hat) in labels.iter().zip(predictions) {
        if !(0.0..=1.0).contains(&p_hat) {
            return Err(ModelError::InvalidValue(format!("prediction {p_hat} outside [0, 1]")));
        }
        let target = if p { 1.0 } else { 0.0 };
        let sq = (target - p_hat) * (target - p_hat);
        total += if p { sq } else { alpha * sq };
    }
    Ok(total / labels.len() as f64)
}

/// Reference operating points `(out-of-tolerance fraction, alpha)` used to
/// suggest a loss weight from the training label balance.
pub const ALPHA_OPERATING_POINTS: [(f64, f64); 3] = [(0.133, 35.0), (0.436, 6.0), (0.472, 3.0)];

/// Suggest `alpha` for a training set whose out-of-tolerance share is
/// `fraction`. Piecewise linear in `1 / fraction` through
/// [`ALPHA_OPERATING_POINTS`], extrapolated with the end segments and
/// clamped at 1.
pub fn choose_alpha_default(fraction: f64) -> Result<f64, ConfigError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(ConfigError(format!(
            "out-of-tolerance fraction must be in (0, 1), got {fraction}"
        )));
    }
    // knots sorted by inverse fraction, ascending
    let knots: Vec<(f64, f64)> = ALPHA_OPERATING_POINTS
        .iter()
        .rev()
        .map(|&(f, a)| (1.0 / f, a))
        .collect();
    let u = 1.0 / fraction;
    let seg = if u <= knots[1].0 {
        0
    } else {
        1
    };
    let (u0, a0) = knots[seg];
    let (u1, a1) = knots[seg + 1];
    let alpha = if u == u0 {
        a0
    } else if u == u1 {
        a1
    } else {
        a0 + (u - u0) * (a1 - a0) / (u1 - u0)
    };
    Ok(alpha.max(1.0))
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Dense layer with row-major `rows x cols` weights (`rows` outputs).
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub rows: usize,
    pub cols: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl DenseLayer {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            weights: vec![0.0; rows * cols],
            biases: vec![0.0; rows],
        }
    }

    fn affine(&self, x: &[f64], out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate() {
            let row = &self.weights[r * self.cols..(r + 1) * self.cols];
            *o = self.biases[r] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
    }

    fn param_count(&self) -> usize {
        self.weights.len() + self.biases.len()
    }
}

/// Layer widths of a monitor network.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            input_dim: FEATURE_DIM,
            hidden: vec![128; 4],
        }
    }
}

/// Per-sample dropout multipliers, one vector per hidden layer.
pub type DropoutMask = Vec<Vec<f64>>;

/// Trainable network with f64 parameters. Inputs are expected to be normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub layers: Vec<DenseLayer>,
}

struct Workspace {
    pre: Vec<Vec<f64>>,
    post: Vec<Vec<f64>>,
    delta: Vec<f64>,
    delta_prev: Vec<f64>,
}

impl Network {
    /// Seeded symmetric uniform initialization, limit `sqrt(6 / fan_in)`; zero biases.
    pub fn init<R: Rng>(arch: &Architecture, rng: &mut R) -> Result<Self, ModelError> {
        if arch.hidden.is_empty() {
            return Err(ModelError::Invariant("at least one hidden layer is required".into()));
        }
        if arch.input_dim == 0 || arch.hidden.contains(&0) {
            return Err(ModelError::Invariant("layer widths must be positive".into()));
        }
        let mut dims = vec![arch.input_dim];
        dims.extend(&arch.hidden);
        dims.push(1);
        let layers = dims
            .windows(2)
            .map(|w| {
                let (cols, rows) = (w[0], w[1]);
                let limit = (6.0 / cols as f64).sqrt();
                let mut layer = DenseLayer::zeros(rows, cols);
                for v in &mut layer.weights {
                    *v = rng.gen_range(-limit..limit);
                }
                layer
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].cols
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(DenseLayer::param_count).sum()
    }

    fn workspace(&self) -> Workspace {
        let max = self.layers.iter().map(|l| l.rows.max(l.cols)).max().unwrap_or(1);
        Workspace {
            pre: self.layers.iter().map(|l| vec![0.0; l.rows]).collect(),
            post: self.layers.iter().map(|l| vec![0.0; l.rows]).collect(),
            delta: vec![0.0; max],
            delta_prev: vec![0.0; max],
        }
    }

    fn forward_into(&self, x: &[f64], mask: Option<&DropoutMask>, ws: &mut Workspace) -> f64 {
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let (before, after) = ws.post.split_at_mut(l);
            let input: &[f64] = if l == 0 { x } else { &before[l - 1] };
            layer.affine(input, &mut ws.pre[l]);
            let out = &mut after[0];
            if l == last {
                out[0] = sigmoid(ws.pre[l][0]);
            } else {
                for (o, z) in out.iter_mut().zip(&ws.pre[l]) {
                    *o = z.max(0.0);
                }
                if let Some(m) = mask {
                    for (o, k) in out.iter_mut().zip(&m[l]) {
                        *o *= k;
                    }
                }
            }
        }
        ws.post[last][0]
    }

    /// Inference without dropout.
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut ws = self.workspace();
        self.forward_into(x, None, &mut ws)
    }

    /// Forward + backward for one sample. `dloss_dp` maps the prediction to
    /// the derivative of this sample's loss contribution.
    fn backprop_sample(
        &self,
        x: &[f64],
        mask: Option<&DropoutMask>,
        ws: &mut Workspace,
        grads: &mut [DenseLayer],
        dloss_dp: impl Fn(f64) -> f64,
    ) -> f64 {
        let p = self.forward_into(x, mask, ws);
        let last = self.layers.len() - 1;
        ws.delta[0] = dloss_dp(p) * p * (1.0 - p);
        for l in (0..=last).rev() {
            let layer = &self.layers[l];
            let input: &[f64] = if l == 0 { x } else { &ws.post[l - 1] };
            let g = &mut grads[l];
            for r in 0..layer.rows {
                let d = ws.delta[r];
                if d == 0.0 {
                    continue;
                }
                g.biases[r] += d;
                let grow = &mut g.weights[r * layer.cols..(r + 1) * layer.cols];
                for (gw, a) in grow.iter_mut().zip(input) {
                    *gw += d * a;
                }
            }
            if l == 0 {
                break;
            }
            let prev = &mut ws.delta_prev[..layer.cols];
            prev.iter_mut().for_each(|v| *v = 0.0);
            for r in 0..layer.rows {
                let d = ws.delta[r];
                if d == 0.0 {
                    continue;
                }
                let wrow = &layer.weights[r * layer.cols..(r + 1) * layer.cols];
                for (pv, w) in prev.iter_mut().zip(wrow) {
                    *pv += w * d;
                }
            }
            // through dropout and ReLU of layer l - 1
            let z = &ws.pre[l - 1];
            for j in 0..layer.cols {
                let mut d = if z[j] > 0.0 { prev[j] } else { 0.0 };
                if let Some(m) = mask {
                    d *= m[l - 1][j];
                }
                ws.delta[j] = d;
            }
        }
        p
    }

    /// Weighted MSE over the samples and its exact gradient with respect to
    /// every weight and bias.
    pub fn loss_and_gradient(
        &self,
        inputs: &[Vec<f64>],
        labels: &[bool],
        alpha: f64,
        masks: Option<&[DropoutMask]>,
    ) -> Result<(f64, Vec<DenseLayer>), ModelError> {
        if inputs.len() != labels.len() {
            return Err(ModelError::LengthMismatch(inputs.len(), labels.len()));
        }
        if inputs.is_empty() {
            return Err(ModelError::Empty);
        }
        let mut grads: Vec<DenseLayer> =
            self.layers.iter().map(|l| DenseLayer::zeros(l.rows, l.cols)).collect();
        let mut ws = self.workspace();
        let n = inputs.len() as f64;
        let mut preds = Vec::with_capacity(inputs.len());
        for (i, (x, &y)) in inputs.iter().zip(labels).enumerate() {
            if x.len() != self.input_dim() {
                return Err(ModelError::InputDimension {
                    expected: self.input_dim(),
                    found: x.len(),
                });
            }
            let (target, weight) = if y { (1.0, 1.0) } else { (0.0, alpha) };
            let mask = masks.map(|m| &m[i]);
            let p = self.backprop_sample(x, mask, &mut ws, &mut grads, |p| {
                2.0 * weight * (p - target) / n
            });
            preds.push(p);
        }
        let loss = weighted_mse(labels, &preds, alpha)?;
        Ok((loss, grads))
    }

    fn random_mask<R: Rng>(&self, dropout: f64, rng: &mut R) -> DropoutMask {
        let keep = 1.0 / (1.0 - dropout);
        self.layers[..self.layers.len() - 1]
            .iter()
            .map(|l| {
                (0..l.rows)
                    .map(|_| if rng.gen::<f64>() < dropout { 0.0 } else { keep })
                    .collect()
            })
            .collect()
    }
}

/// Frozen layer parameters stored at f32 precision.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub rows: usize,
    pub cols: usize,
    pub weights: Vec<f32>,
    pub biases: Vec<f32>,
}

/// Continuous and binarized monitor output for one query.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub raw: f64,
    /// `true` = predicted in tolerance.
    pub binary: bool,
}

/// Trained, immutable integrity monitor.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    layers: Vec<LayerParams>,
    input_mean: Vec<f32>,
    input_std: Vec<f32>,
    threshold: f64,
    catalogue_version: u32,
    alpha_used: f64,
}

impl MlpModel {
    /// Validate and assemble a model. The last layer must have one output and
    /// there must be at least one hidden layer.
    pub fn from_parts(
        layers: Vec<LayerParams>,
        input_mean: Vec<f32>,
        input_std: Vec<f32>,
        threshold: f64,
        catalogue_version: u32,
        alpha_used: f64,
    ) -> Result<Self, ModelError> {
        let bad = |m: String| Err(ModelError::Invariant(m));
        if layers.len() < 2 {
            return bad(format!(
                "a model needs at least one hidden layer, got {} layer(s)",
                layers.len()
            ));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.rows == 0 || l.cols == 0 {
                return bad(format!("layer {i} has a zero dimension"));
            }
            if l.weights.len() != l.rows * l.cols || l.biases.len() != l.rows {
                return bad(format!("layer {i} parameter count does not match {}x{}", l.rows, l.cols));
            }
            if i > 0 && l.cols != layers[i - 1].rows {
                return bad(format!(
                    "layer {i} expects {} inputs but layer {} has {} outputs",
                    l.cols,
                    i - 1,
                    layers[i - 1].rows
                ));
            }
            if l.weights.iter().chain(&l.biases).any(|v| !v.is_finite()) {
                return bad(format!("layer {i} has non-finite parameters"));
            }
        }
        if layers[layers.len() - 1].rows != 1 {
            return bad("output layer must have exactly one unit".into());
        }
        let dim = layers[0].cols;
        if input_mean.len() != dim || input_std.len() != dim {
            return bad(format!("normalization statistics must have length {dim}"));
        }
        if input_mean.iter().any(|v| !v.is_finite())
            || input_std.iter().any(|v| !(v.is_finite() && *v > 0.0))
        {
            return bad("normalization statistics must be finite with positive std".into());
        }
        if !(threshold > 0.0 && threshold < 1.0) {
            return bad(format!("threshold {threshold} outside (0, 1)"));
        }
        if !alpha_used.is_finite() {
            return bad("alpha must be finite".into());
        }
        Ok(Self {
            layers,
            input_mean,
            input_std,
            threshold,
            catalogue_version,
            alpha_used,
        })
    }

    pub fn layers(&self) -> &[LayerParams] {
        &self.layers
    }

    pub fn input_mean(&self) -> &[f32] {
        &self.input_mean
    }

    pub fn input_std(&self) -> &[f32] {
        &self.input_std
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn catalogue_version(&self) -> u32 {
        self.catalogue_version
    }

    pub fn alpha_used(&self) -> f64 {
        self.alpha_used
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].cols
    }

    /// Copy with a different decision threshold.
    pub fn with_threshold(&self, threshold: f64) -> Result<Self, ModelError> {
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(ModelError::Invariant(format!("threshold {threshold} outside (0, 1)")));
        }
        Ok(Self {
            threshold,
            ..self.clone()
        })
    }

    /// Raw monitor output, strictly inside `(0, 1)`.
    pub fn forward(&self, x: &[f64]) -> Result<f64, ModelError> {
        if x.len() != self.input_dim() {
            return Err(ModelError::InputDimension {
                expected: self.input_dim(),
                found: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::InvalidValue("non-finite input".into()));
        }
        let mut a: Vec<f64> = x
            .iter()
            .zip(self.input_mean.iter().zip(&self.input_std))
            .map(|(v, (m, s))| (v - *m as f64) / *s as f64)
            .collect();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut out = vec![0.0; layer.rows];
            for (r, o) in out.iter_mut().enumerate() {
                let row = &layer.weights[r * layer.cols..(r + 1) * layer.cols];
                let z = layer.biases[r] as f64
                    + row.iter().zip(&a).map(|(w, v)| *w as f64 * v).sum::<f64>();
                *o = if l == last { z } else { z.max(0.0) };
            }
            a = out;
        }
        let p = sigmoid(a[0]);
        Ok(p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0))
    }

    /// Forward pass that also checks the catalogue version of the input.
    pub fn forward_checked(&self, x: &[f64], catalogue_version: u32) -> Result<f64, ModelError> {
        if catalogue_version != self.catalogue_version {
            return Err(ModelError::CatalogueVersion {
                expected: self.catalogue_version,
                found: catalogue_version,
            });
        }
        self.forward(x)
    }

    pub fn predict(&self, x: &[f64]) -> Result<PredictionRecord, ModelError> {
        let raw = self.forward(x)?;
        Ok(PredictionRecord {
            raw,
            binary: raw >= self.threshold,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Optimizer {
    Sgd,
    /// Adaptive moment estimation with the usual (0.9, 0.999, 1e-8) coefficients.
    #[default]
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub alpha: f64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub dropout: f64,
    pub epochs: usize,
    pub seed: u64,
    pub optimizer: Optimizer,
    pub hidden: Vec<usize>,
    pub threshold: f64,
    /// Stop when the epoch loss has not improved by `plateau_tolerance`
    /// (relative) for this many epochs. 0 disables early stopping.
    pub plateau_epochs: usize,
    pub plateau_tolerance: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            alpha: 6.0,
            batch_size: 8,
            learning_rate: 1e-5,
            dropout: 0.10,
            epochs: 500,
            seed: 1,
            optimizer: Optimizer::Adam,
            hidden: vec![128; 4],
            threshold: 0.5,
            plateau_epochs: 50,
            plateau_tolerance: 1e-4,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.alpha.is_finite() && self.alpha >= 1.0) {
            return Err(ConfigError(format!("alpha must be at least 1, got {}", self.alpha)));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(ConfigError("batch size and epochs must be positive".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(ConfigError(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ConfigError(format!("dropout must be in [0, 1), got {}", self.dropout)));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(ConfigError("hidden layers must be non-empty with positive widths".into()));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(ConfigError(format!("threshold must be in (0, 1), got {}", self.threshold)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: MlpModel,
    pub log: Vec<EpochLog>,
    pub final_loss: f64,
}

/// Precision and recall of in-tolerance predictions. Precision is 0 when
/// nothing is predicted in tolerance; recall is 0 without positives.
pub fn precision_recall(labels: &[bool], predicted: &[bool]) -> (f64, f64) {
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut pos = 0usize;
    for (&y, &p) in labels.iter().zip(predicted) {
        pos += usize::from(y);
        if p {
            if y {
                tp += 1;
            } else {
                fp += 1;
            }
        }
    }
    let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
    let recall = if pos == 0 { 0.0 } else { tp as f64 / pos as f64 };
    (precision, recall)
}

/// z-score statistics per input column, rounded to f32. Columns with
/// std < EPS get std 1.
fn normalization(inputs: &[&[f64]], dim: usize) -> (Vec<f32>, Vec<f32>) {
    let n = inputs.len() as f64;
    let mut mean = vec![0.0f64; dim];
    for x in inputs {
        for (m, v) in mean.iter_mut().zip(x.iter()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0f64; dim];
    for x in inputs {
        for ((s, v), m) in var.iter_mut().zip(x.iter()).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let std: Vec<f32> = var
        .iter()
        .map(|s| {
            let sd = (s / n).sqrt() as f32;
            if (sd as f64) < EPS || !sd.is_finite() || sd == 0.0 {
                1.0
            } else {
                sd
            }
        })
        .collect();
    (mean.into_iter().map(|m| m as f32).collect(), std)
}

struct AdamState {
    m: Vec<DenseLayer>,
    v: Vec<DenseLayer>,
    t: i32,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

fn apply_update(net: &mut Network, grads: &[DenseLayer], cfg: &TrainConfig, adam: &mut AdamState) {
    match cfg.optimizer {
        Optimizer::Sgd => {
            for (layer, g) in net.layers.iter_mut().zip(grads) {
                for (w, d) in layer.weights.iter_mut().zip(&g.weights) {
                    *w -= cfg.learning_rate * d;
                }
                for (b, d) in layer.biases.iter_mut().zip(&g.biases) {
                    *b -= cfg.learning_rate * d;
                }
            }
        }
        Optimizer::Adam => {
            adam.t += 1;
            let c1 = 1.0 - ADAM_BETA1.powi(adam.t);
            let c2 = 1.0 - ADAM_BETA2.powi(adam.t);
            let lr = cfg.learning_rate;
            let step = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
                for i in 0..p.len() {
                    m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g[i];
                    v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
                    let mh = m[i] / c1;
                    let vh = v[i] / c2;
                    p[i] -= lr * mh / (vh.sqrt() + ADAM_EPS);
                }
            };
            for (l, layer) in net.layers.iter_mut().enumerate() {
                let (m, v) = (&mut adam.m[l], &mut adam.v[l]);
                step(&mut layer.weights, &grads[l].weights, &mut m.weights, &mut v.weights);
                step(&mut layer.biases, &grads[l].biases, &mut m.biases, &mut v.biases);
            }
        }
    }
}

fn freeze(net: &Network) -> Vec<LayerParams> {
    net.layers
        .iter()
        .map(|l| LayerParams {
            rows: l.rows,
            cols: l.cols,
            weights: l.weights.iter().map(|&w| w as f32).collect(),
            biases: l.biases.iter().map(|&b| b as f32).collect(),
        })
        .collect()
}

/// Train a monitor on `(input, in-tolerance label)` pairs. Deterministic for a
/// given `cfg.seed`: initialization, shuffling and dropout masks all come from
/// one seeded generator.
pub fn train(dataset: &[(Vec<f64>, bool)], cfg: &TrainConfig) -> Result<TrainOutcome, ModelError> {
    cfg.validate().map_err(|e| ModelError::InvalidValue(e.0))?;
    if dataset.is_empty() {
        return Err(ModelError::Empty);
    }
    let dim = dataset[0].0.len();
    if dim == 0 {
        return Err(ModelError::InputDimension { expected: 1, found: 0 });
    }
    if let Some((x, _)) = dataset.iter().find(|(x, _)| x.len() != dim) {
        return Err(ModelError::InputDimension {
            expected: dim,
            found: x.len(),
        });
    }
    if dataset.iter().any(|(x, _)| x.iter().any(|v| !v.is_finite())) {
        return Err(ModelError::InvalidValue("non-finite training input".into()));
    }
    let first = dataset[0].1;
    if dataset.iter().all(|(_, y)| *y == first) {
        return Err(ModelError::SingleClass(first));
    }

    let raw: Vec<&[f64]> = dataset.iter().map(|(x, _)| x.as_slice()).collect();
    let (mean, std) = normalization(&raw, dim);
    let inputs: Vec<Vec<f64>> = raw
        .iter()
        .map(|x| {
            x.iter()
                .zip(mean.iter().zip(&std))
                .map(|(v, (m, s))| (v - *m as f64) / *s as f64)
                .collect()
        })
        .collect();
    let labels: Vec<bool> = dataset.iter().map(|(_, y)| *y).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let arch = Architecture {
        input_dim: dim,
        hidden: cfg.hidden.clone(),
    };
    let mut net = Network::init(&arch, &mut rng)?;
    let zeros = || -> Vec<DenseLayer> {
        net.layers.iter().map(|l| DenseLayer::zeros(l.rows, l.cols)).collect()
    };
    let mut adam = AdamState {
        m: zeros(),
        v: zeros(),
        t: 0,
    };

    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut best_loss = f64::INFINITY;
    let mut best_epoch = 0usize;
    let mut batch_x: Vec<Vec<f64>> = Vec::with_capacity(cfg.batch_size);
    let mut batch_y: Vec<bool> = Vec::with_capacity(cfg.batch_size);
    let mut batch_masks: Vec<DropoutMask> = Vec::with_capacity(cfg.batch_size);
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            batch_x.clear();
            batch_y.clear();
            batch_masks.clear();
            for &i in chunk {
                batch_x.push(inputs[i].clone());
                batch_y.push(labels[i]);
                if cfg.dropout > 0.0 {
                    batch_masks.push(net.random_mask(cfg.dropout, &mut rng));
                }
            }
            let masks = (cfg.dropout > 0.0).then_some(batch_masks.as_slice());
            let (loss, grads) = net.loss_and_gradient(&batch_x, &batch_y, cfg.alpha, masks)?;
            loss_sum += loss * chunk.len() as f64;
            apply_update(&mut net, &grads, cfg, &mut adam);
        }
        let epoch_loss = loss_sum / inputs.len() as f64;
        let predicted: Vec<bool> = inputs.iter().map(|x| net.predict(x) >= cfg.threshold).collect();
        let (precision, recall) = precision_recall(&labels, &predicted);
        log.push(EpochLog {
            epoch,
            loss: epoch_loss,
            precision,
            recall,
        });
        if epoch_loss < best_loss * (1.0 - cfg.plateau_tolerance) {
            best_loss = epoch_loss;
            best_epoch = epoch;
        }
        if cfg.plateau_epochs > 0 && epoch - best_epoch >= cfg.plateau_epochs {
            break;
        }
    }

    let final_loss = log.last().map(|l| l.loss).unwrap_or(f64::NAN);
    let model = MlpModel::from_parts(
        freeze(&net),
        mean,
        std,
        cfg.threshold,
        CATALOGUE_VERSION,
        cfg.alpha,
    )?;
    Ok(TrainOutcome {
        model,
        log,
        final_loss,
    })
}
