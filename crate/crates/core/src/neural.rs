//! Two- and three-layer perceptrons with sigmoid or softmax outputs, trained
//! by full-batch gradient descent on cross-entropy, plus k-fold
//! cross-validated backward variable elimination.

use rand::{Rng, SeedableRng};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Facet;
use crate::glm::sigmoid;

pub const MODEL_VERSION: u32 = 1;
pub const PERCEPTRON_KIND: &str = "perceptron";

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("expected {expected} inputs, got {got}")]
    InputSize { expected: usize, got: usize },
    #[error("{0} targets for {1} rows")]
    TargetCount(usize, usize),
    #[error("target {target} at row {row} out of range for {classes} classes")]
    Target { row: usize, target: usize, classes: usize },
    #[error("probability {0} outside [0, 1]")]
    Probability(f64),
    #[error("training diverged: loss became {loss} at epoch {epoch}")]
    NonFinite { epoch: usize, loss: f64 },
    #[error("cross-validation needs k >= 2 and at least k rows (k = {k}, rows = {rows})")]
    Folds { k: usize, rows: usize },
    #[error("missing cue {0}")]
    MissingCue(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputKind {
    Sigmoid,
    Softmax,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MLPConfig {
    pub inputs: usize,
    pub hidden: Option<usize>,
    pub outputs: usize,
    pub output_kind: OutputKind,
    /// Initial step size, applied to the mean gradient.
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Step size multiplier after an accepted step; a rejected step halves it.
    #[serde(default = "default_growth")]
    pub step_growth: f64,
}

fn default_growth() -> f64 {
    1.05
}

impl MLPConfig {
    fn base(inputs: usize, classes: usize, hidden: bool) -> Self {
        let (outputs, output_kind) = if classes == 2 {
            (1, OutputKind::Sigmoid)
        } else {
            (classes, OutputKind::Softmax)
        };
        MLPConfig {
            inputs,
            hidden: hidden.then_some(3 * outputs),
            outputs,
            output_kind,
            learning_rate: 0.5,
            epochs: 2000,
            seed: 0,
            step_growth: default_growth(),
        }
    }

    /// Inputs wired straight to the outputs.
    pub fn two_layer(inputs: usize, classes: usize) -> Self {
        Self::base(inputs, classes, false)
    }

    /// One hidden layer three times the size of the output layer.
    pub fn three_layer(inputs: usize, classes: usize) -> Self {
        Self::base(inputs, classes, true)
    }

    pub fn classes(&self) -> usize {
        match self.output_kind {
            OutputKind::Sigmoid => 2,
            OutputKind::Softmax => self.outputs,
        }
    }

    pub fn validate(&self) -> Result<(), NeuralError> {
        let err = |m: String| Err(NeuralError::Config(m));
        match self.output_kind {
            OutputKind::Sigmoid if self.outputs != 1 => {
                return err(format!("sigmoid output needs 1 unit, got {}", self.outputs))
            }
            OutputKind::Softmax if self.outputs < 2 => {
                return err(format!("softmax output needs at least 2 units, got {}", self.outputs))
            }
            _ => {}
        }
        if let Some(h) = self.hidden {
            if h != 3 * self.outputs {
                return err(format!("hidden size {h} must be 3 x output size {}", self.outputs));
            }
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return err(format!("learning rate {} must be positive", self.learning_rate));
        }
        if !(self.step_growth >= 1.0 && self.step_growth.is_finite()) {
            return err(format!("step growth {} must be at least 1", self.step_growth));
        }
        Ok(())
    }

    fn with_inputs(&self, inputs: usize) -> Self {
        MLPConfig {
            inputs,
            ..self.clone()
        }
    }

    fn shapes(&self) -> Vec<(usize, usize)> {
        match self.hidden {
            Some(h) => vec![(h, self.inputs), (self.outputs, h)],
            None => vec![(self.outputs, self.inputs)],
        }
    }
}

/// A dense layer: `rows x cols` weights stored row-major, one bias per row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub rows: usize,
    pub cols: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Layer {
    fn zeros(rows: usize, cols: usize) -> Self {
        Layer {
            rows,
            cols,
            weights: vec![0.0; rows * cols],
            biases: vec![0.0; rows],
        }
    }

    fn apply(&self, input: &[f64]) -> Vec<f64> {
        (0..self.rows)
            .map(|r| {
                let w = &self.weights[r * self.cols..(r + 1) * self.cols];
                self.biases[r] + w.iter().zip(input).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MLPModel {
    pub config: MLPConfig,
    pub layers: Vec<Layer>,
    /// Summed training cross-entropy, one entry per accepted step (plus the initial loss).
    #[serde(default)]
    pub trace: Vec<f64>,
}

/// Softmax with max-subtraction.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln()
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Summed cross-entropy. A single-column prediction is read as `P(class 1)`
/// for a binary target; wider rows are class distributions and only the
/// true class contributes.
pub fn cross_entropy(predicted: &[Vec<f64>], actual: &[usize]) -> Result<f64, NeuralError> {
    if predicted.len() != actual.len() {
        return Err(NeuralError::TargetCount(actual.len(), predicted.len()));
    }
    let mut total = 0.0;
    for (row, (p, &t)) in predicted.iter().zip(actual).enumerate() {
        if let Some(&bad) = p.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(NeuralError::Probability(bad));
        }
        let classes = if p.len() == 1 { 2 } else { p.len() };
        if t >= classes {
            return Err(NeuralError::Target {
                row,
                target: t,
                classes,
            });
        }
        let q = if p.len() == 1 {
            if t == 1 {
                p[0]
            } else {
                1.0 - p[0]
            }
        } else {
            p[t]
        };
        total -= q.max(f64::MIN_POSITIVE).ln();
    }
    Ok(total)
}

fn check_data(x: &[Vec<f64>], y: &[usize], config: &MLPConfig) -> Result<(), NeuralError> {
    if x.len() != y.len() {
        return Err(NeuralError::TargetCount(y.len(), x.len()));
    }
    if let Some(r) = x.iter().find(|r| r.len() != config.inputs) {
        return Err(NeuralError::InputSize {
            expected: config.inputs,
            got: r.len(),
        });
    }
    let classes = config.classes();
    if let Some((row, &target)) = y.iter().enumerate().find(|(_, &t)| t >= classes) {
        return Err(NeuralError::Target { row, target, classes });
    }
    Ok(())
}

impl MLPModel {
    /// All-zero weights.
    pub fn zeros(config: MLPConfig) -> Result<Self, NeuralError> {
        config.validate()?;
        let layers = config.shapes().into_iter().map(|(r, c)| Layer::zeros(r, c)).collect();
        Ok(MLPModel {
            config,
            layers,
            trace: Vec::new(),
        })
    }

    /// Weights and biases drawn uniformly from [-0.1, 0.1] by a ChaCha8 generator.
    pub fn initialize(config: MLPConfig) -> Result<Self, NeuralError> {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut model = Self::zeros(config)?;
        for layer in &mut model.layers {
            for w in layer.weights.iter_mut().chain(layer.biases.iter_mut()) {
                *w = rng.gen_range(-0.1..=0.1);
            }
        }
        Ok(model)
    }

    pub fn n_parameters(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    /// Flattened parameters: per layer, weights (row-major) then biases.
    pub fn parameters(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.biases).copied())
            .collect()
    }

    pub fn set_parameters(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.n_parameters(), "parameter count mismatch");
        let mut it = params.iter().copied();
        for layer in &mut self.layers {
            for w in layer.weights.iter_mut().chain(layer.biases.iter_mut()) {
                *w = it.next().unwrap();
            }
        }
    }

    /// Hidden activations (if any) and output logits.
    fn forward(&self, x: &[f64]) -> (Option<Vec<f64>>, Vec<f64>) {
        match self.layers.as_slice() {
            [out] => (None, out.apply(x)),
            [hid, out] => {
                let h: Vec<f64> = hid.apply(x).into_iter().map(sigmoid).collect();
                let z = out.apply(&h);
                (Some(h), z)
            }
            _ => unreachable!("one or two layers"),
        }
    }

    fn probabilities_from_logits(&self, z: &[f64]) -> Vec<f64> {
        match self.config.output_kind {
            OutputKind::Sigmoid => vec![sigmoid(z[0])],
            OutputKind::Softmax => softmax(z),
        }
    }

    fn row_loss(&self, z: &[f64], target: usize) -> f64 {
        match self.config.output_kind {
            OutputKind::Sigmoid => softplus(z[0]) - target as f64 * z[0],
            OutputKind::Softmax => log_sum_exp(z) - z[target],
        }
    }

    /// Output probabilities: one value for sigmoid, a distribution for softmax.
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>, NeuralError> {
        if x.len() != self.config.inputs {
            return Err(NeuralError::InputSize {
                expected: self.config.inputs,
                got: x.len(),
            });
        }
        let (_, z) = self.forward(x);
        Ok(self.probabilities_from_logits(&z))
    }

    /// Predicted class; ties go to the lowest index.
    pub fn classify(&self, x: &[f64]) -> Result<usize, NeuralError> {
        let p = self.predict(x)?;
        Ok(match self.config.output_kind {
            OutputKind::Sigmoid => usize::from(p[0] > 0.5),
            OutputKind::Softmax => argmax(&p),
        })
    }

    /// Summed cross-entropy over `(x, y)`.
    pub fn loss(&self, x: &[Vec<f64>], y: &[usize]) -> f64 {
        x.iter()
            .zip(y)
            .map(|(r, &t)| self.row_loss(&self.forward(r).1, t))
            .sum()
    }

    /// Summed cross-entropy and its gradient with respect to [`MLPModel::parameters`].
    pub fn loss_and_gradient(&self, x: &[Vec<f64>], y: &[usize]) -> (f64, Vec<f64>) {
        let mut grads: Vec<Layer> = self.layers.iter().map(|l| Layer::zeros(l.rows, l.cols)).collect();
        let mut loss = 0.0;
        for (row, &target) in x.iter().zip(y) {
            let (hidden, z) = self.forward(row);
            loss += self.row_loss(&z, target);
            let mut delta = self.probabilities_from_logits(&z);
            match self.config.output_kind {
                OutputKind::Sigmoid => delta[0] -= target as f64,
                OutputKind::Softmax => delta[target] -= 1.0,
            }
            let out_idx = self.layers.len() - 1;
            let out_input: &[f64] = hidden.as_deref().unwrap_or(row);
            accumulate(&mut grads[out_idx], &delta, out_input);
            if let Some(h) = &hidden {
                let out = &self.layers[out_idx];
                let back: Vec<f64> = (0..out.cols)
                    .map(|j| {
                        let s: f64 = (0..out.rows).map(|r| out.weights[r * out.cols + j] * delta[r]).sum();
                        s * h[j] * (1.0 - h[j])
                    })
                    .collect();
                accumulate(&mut grads[0], &back, row);
            }
        }
        let flat = grads
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.biases).copied())
            .collect();
        (loss, flat)
    }

    /// Copy of this model with input column `index` removed.
    pub fn without_input(&self, index: usize) -> Self {
        let mut model = self.clone();
        model.config.inputs -= 1;
        let first = &mut model.layers[0];
        let cols = first.cols;
        first.weights = first
            .weights
            .chunks(cols)
            .flat_map(|row| row.iter().enumerate().filter(|&(j, _)| j != index).map(|(_, &w)| w))
            .collect();
        first.cols -= 1;
        model.trace.clear();
        model
    }
}

fn accumulate(grad: &mut Layer, delta: &[f64], input: &[f64]) {
    for (r, &d) in delta.iter().enumerate() {
        grad.biases[r] += d;
        for (c, &v) in input.iter().enumerate() {
            grad.weights[r * grad.cols + c] += d * v;
        }
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Trains from a seeded initialization.
pub fn train(x: &[Vec<f64>], y: &[usize], config: &MLPConfig) -> Result<MLPModel, NeuralError> {
    let model = MLPModel::initialize(config.clone())?;
    train_from(model, x, y)
}

/// Full-batch gradient descent starting from `model`'s current weights.
///
/// A step that would increase the loss is rejected and the step size halved;
/// an accepted step multiplies it by `step_growth`. The recorded loss trace is
/// therefore non-increasing.
pub fn train_from(mut model: MLPModel, x: &[Vec<f64>], y: &[usize]) -> Result<MLPModel, NeuralError> {
    let config = model.config.clone();
    config.validate()?;
    check_data(x, y, &config)?;
    let n = x.len().max(1) as f64;
    let mut params = model.parameters();
    let mut lr = config.learning_rate;
    let mut loss = model.loss(x, y);
    if !loss.is_finite() {
        return Err(NeuralError::NonFinite { epoch: 0, loss });
    }
    let mut trace = vec![loss];
    let mut candidate = model.clone();
    for epoch in 1..=config.epochs {
        model.set_parameters(&params);
        let (_, grad) = model.loss_and_gradient(x, y);
        if grad.iter().all(|g| g.abs() < 1e-12) {
            break;
        }
        let mut accepted = false;
        for _ in 0..60 {
            let next: Vec<f64> = params.iter().zip(&grad).map(|(p, g)| p - lr * g / n).collect();
            candidate.set_parameters(&next);
            let next_loss = candidate.loss(x, y);
            if next_loss.is_nan() {
                return Err(NeuralError::NonFinite { epoch, loss: next_loss });
            }
            if next_loss <= loss {
                params = next;
                loss = next_loss;
                lr *= config.step_growth;
                accepted = true;
                break;
            }
            lr *= 0.5;
        }
        if !accepted {
            break;
        }
        trace.push(loss);
    }
    model.set_parameters(&params);
    model.trace = trace;
    Ok(model)
}

/// Seeded shuffle, then round-robin assignment of rows to `k` folds.
pub fn fold_assignment(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold = vec![0; n];
    for (pos, &row) in order.iter().enumerate() {
        fold[row] = pos % k;
    }
    fold
}

#[derive(Debug, Clone, PartialEq)]
pub struct EliminationOptions {
    pub folds: usize,
    /// Retrain each candidate starting from the current fold models' weights
    /// instead of a fresh initialization.
    pub warm_start: bool,
}

impl Default for EliminationOptions {
    fn default() -> Self {
        EliminationOptions {
            folds: 3,
            warm_start: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EliminationStep {
    pub removed: String,
    pub error_before: f64,
    pub error_after: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Elimination {
    pub selected: Vec<String>,
    /// Summed validation cross-entropy of the final set.
    pub error: f64,
    pub steps: Vec<EliminationStep>,
}

struct CvData<'a> {
    x: &'a [Vec<f64>],
    y: &'a [usize],
    fold: Vec<usize>,
    k: usize,
}

impl CvData<'_> {
    fn split(&self, f: usize, cols: &[usize]) -> ((Vec<Vec<f64>>, Vec<usize>), (Vec<Vec<f64>>, Vec<usize>)) {
        let mut train = (Vec::new(), Vec::new());
        let mut valid = (Vec::new(), Vec::new());
        for (i, row) in self.x.iter().enumerate() {
            let target = if self.fold[i] == f { &mut valid } else { &mut train };
            target.0.push(cols.iter().map(|&c| row[c]).collect());
            target.1.push(self.y[i]);
        }
        (train, valid)
    }

    /// Summed validation loss over all folds, plus the per-fold models.
    fn evaluate(
        &self,
        cols: &[usize],
        config: &MLPConfig,
        warm: Option<&[MLPModel]>,
    ) -> Result<(f64, Vec<MLPModel>), NeuralError> {
        let mut total = 0.0;
        let mut models = Vec::with_capacity(self.k);
        for f in 0..self.k {
            let ((tx, ty), (vx, vy)) = self.split(f, cols);
            let model = match warm {
                Some(init) => train_from(init[f].clone(), &tx, &ty)?,
                None => train(&tx, &ty, &config.with_inputs(cols.len()))?,
            };
            total += model.loss(&vx, &vy);
            models.push(model);
        }
        Ok((total, models))
    }
}

/// Backward variable elimination scored by k-fold cross-validated cross-entropy.
///
/// Each cycle retrains with every remaining variable left out in turn and
/// removes the one whose removal gives the lowest summed validation error,
/// as long as that error is below the current one.
pub fn cv_eliminate(
    x: &[Vec<f64>],
    y: &[usize],
    names: &[String],
    config: &MLPConfig,
    options: &EliminationOptions,
) -> Result<Elimination, NeuralError> {
    let k = options.folds;
    if k < 2 || x.len() < k {
        return Err(NeuralError::Folds { k, rows: x.len() });
    }
    let full = config.with_inputs(names.len());
    full.validate()?;
    check_data(x, y, &full)?;
    let data = CvData {
        x,
        y,
        fold: fold_assignment(x.len(), k, config.seed),
        k,
    };
    let mut current: Vec<usize> = (0..names.len()).collect();
    let (mut error, mut models) = data.evaluate(&current, config, None)?;
    let mut steps = Vec::new();
    while !current.is_empty() {
        let results: Vec<(f64, Vec<MLPModel>)> = (0..current.len())
            .into_par_iter()
            .map(|drop| {
                let cols: Vec<usize> = current
                    .iter()
                    .enumerate()
                    .filter(|&(i, _)| i != drop)
                    .map(|(_, &c)| c)
                    .collect();
                let warm: Option<Vec<MLPModel>> = options
                    .warm_start
                    .then(|| models.iter().map(|m| m.without_input(drop)).collect());
                data.evaluate(&cols, config, warm.as_deref())
            })
            .collect::<Result<_, _>>()?;
        let best = (0..results.len())
            .reduce(|b, i| if results[i].0 < results[b].0 { i } else { b })
            .expect("non-empty candidate set");
        if results[best].0 >= error {
            break;
        }
        let removed = current.remove(best);
        let (next_error, next_models) = results.into_iter().nth(best).unwrap();
        steps.push(EliminationStep {
            removed: names[removed].clone(),
            error_before: error,
            error_after: next_error,
        });
        error = next_error;
        models = next_models;
    }
    Ok(Elimination {
        selected: current.iter().map(|&c| names[c].clone()).collect(),
        error,
        steps,
    })
}

/// A trained perceptron bound to a facet and a named list of input cues.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FacetPerceptron {
    pub version: u32,
    pub kind: String,
    pub facet: Facet,
    pub levels: Vec<String>,
    pub inputs: Vec<String>,
    #[serde(default)]
    pub train_counts: Vec<usize>,
    /// Per-input centering and scaling applied before the network; empty means none.
    #[serde(default)]
    pub input_mean: Vec<f64>,
    #[serde(default)]
    pub input_scale: Vec<f64>,
    pub model: MLPModel,
}

/// Column means and standard deviations (1 for constant columns).
pub fn standardization(x: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let p = x.first().map_or(0, Vec::len);
    let n = x.len().max(1) as f64;
    let mean: Vec<f64> = (0..p).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    let scale = (0..p)
        .map(|j| {
            let sd = (x.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n).sqrt();
            if sd > 1e-12 {
                sd
            } else {
                1.0
            }
        })
        .collect();
    (mean, scale)
}

/// Applies `(x - mean) / scale` column-wise.
pub fn standardize(x: &[Vec<f64>], mean: &[f64], scale: &[f64]) -> Vec<Vec<f64>> {
    x.iter()
        .map(|r| {
            r.iter()
                .enumerate()
                .map(|(j, v)| match (mean.get(j), scale.get(j)) {
                    (Some(m), Some(s)) => (v - m) / s,
                    _ => *v,
                })
                .collect()
        })
        .collect()
}

impl FacetPerceptron {
    pub fn new(
        facet: Facet,
        inputs: Vec<String>,
        labels: &[usize],
        (input_mean, input_scale): (Vec<f64>, Vec<f64>),
        model: MLPModel,
    ) -> Self {
        let levels: Vec<String> = facet.levels().iter().map(|s| s.to_string()).collect();
        let mut train_counts = vec![0; levels.len()];
        for &l in labels {
            if l < train_counts.len() {
                train_counts[l] += 1;
            }
        }
        FacetPerceptron {
            version: MODEL_VERSION,
            kind: PERCEPTRON_KIND.to_string(),
            facet,
            levels,
            inputs,
            train_counts,
            input_mean,
            input_scale,
            model,
        }
    }

    /// Column of each model input within `names`.
    pub fn bind(&self, names: &[String]) -> Result<Vec<usize>, NeuralError> {
        self.inputs
            .iter()
            .map(|s| {
                names
                    .iter()
                    .position(|n| n == s)
                    .ok_or_else(|| NeuralError::MissingCue(s.clone()))
            })
            .collect()
    }

    pub fn classify(&self, names: &[String], rows: &[Vec<f64>]) -> Result<Vec<usize>, NeuralError> {
        let cols = self.bind(names)?;
        rows.iter()
            .map(|r| {
                let x: Vec<f64> = cols
                    .iter()
                    .enumerate()
                    .map(|(j, &c)| match (self.input_mean.get(j), self.input_scale.get(j)) {
                        (Some(m), Some(s)) => (r[c] - m) / s,
                        _ => r[c],
                    })
                    .collect();
                self.model.classify(&x)
            })
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }
}
