//! Dataset splitting, target normalization, minibatch Adam training,
//! and evaluation metrics.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{loss, loss_gradient, GraphNetModel};
use crate::analysis;
use crate::cell::CellGraph;
use crate::error::Error;
use crate::Result;

/// Z-score normalization of training targets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetNormalization {
    pub mean: f64,
    pub std: f64,
}

impl TargetNormalization {
    pub fn normalize(&self, t: f64) -> f64 {
        (t - self.mean) / self.std
    }

    pub fn denormalize(&self, y: f64) -> f64 {
        y * self.std + self.mean
    }
}

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub train_fraction: f64,
    pub val_fraction: f64,
    pub test_fraction: f64,
    pub seed: u64,
    pub epochs: usize,
    pub num_message_passing_steps: usize,
    /// Filled in by [`train`] from the training split.
    pub target_normalization: Option<TargetNormalization>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 16,
            train_fraction: 0.6,
            val_fraction: 0.2,
            test_fraction: 0.2,
            seed: 0,
            epochs: 50,
            num_message_passing_steps: 7,
            target_normalization: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let sum = self.train_fraction + self.val_fraction + self.test_fraction;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "split fractions sum to {sum}, expected 1"
            )));
        }
        if self.train_fraction <= 0.0 || self.val_fraction < 0.0 || self.test_fraction < 0.0 {
            return Err(Error::InvalidConfig("invalid split fractions".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig("learning_rate must be positive".into()));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::InvalidConfig(
                "batch_size and epochs must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Split sizes: train takes `floor(train_fraction * n)`; the remainder
/// splits between validation and test proportionally, validation
/// rounding down.
pub fn split_sizes(n: usize, cfg: &TrainConfig) -> (usize, usize, usize) {
    let train = (cfg.train_fraction * n as f64).floor() as usize;
    let rest = n - train;
    let denom = cfg.val_fraction + cfg.test_fraction;
    let val = if denom > 0.0 {
        (rest as f64 * cfg.val_fraction / denom).floor() as usize
    } else {
        0
    };
    (train, val, rest - val)
}

/// Held-out quality metrics, computed in original target units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    /// 1 - mean absolute percentage error.
    pub accuracy: f64,
    pub spearman: f64,
    pub pearson: f64,
    pub mse: f64,
    pub count: usize,
}

/// Result of a training run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub model: GraphNetModel,
    pub config: TrainConfig,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub train_size: usize,
    pub val_size: usize,
    pub test_size: usize,
    pub test: EvalMetrics,
}

/// Saved model: parameters plus the configuration that produced them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub model: GraphNetModel,
    pub config: TrainConfig,
    /// Which performance metric the model predicts (e.g. latency_ms).
    pub metric: String,
    /// Which accelerator the training data came from.
    pub accel: String,
}

impl Checkpoint {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.config.target_normalization.is_none() {
            return Err(Error::BadCheckpoint(
                "checkpoint lacks target normalization".into(),
            ));
        }
        Ok(())
    }

    pub fn normalization(&self) -> TargetNormalization {
        self.config
            .target_normalization
            .expect("validated checkpoints carry normalization")
    }
}

struct Adam {
    m: GraphNetModel,
    v: GraphNetModel,
    t: u64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
}

impl Adam {
    fn new(model: &GraphNetModel) -> Self {
        Adam {
            m: model.zeros_like(),
            v: model.zeros_like(),
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    fn step(&mut self, model: &mut GraphNetModel, grads: &GraphNetModel, lr: f64, scale: f64) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let g_slices = grads.param_slices();
        let mut m_slices = self.m.param_slices_mut();
        let mut v_slices = self.v.param_slices_mut();
        for (k, p_slice) in model.param_slices_mut().into_iter().enumerate() {
            let g_slice = g_slices[k];
            let m_slice = &mut m_slices[k];
            let v_slice = &mut v_slices[k];
            for i in 0..p_slice.len() {
                let g = g_slice[i] * scale;
                m_slice[i] = self.beta1 * m_slice[i] + (1.0 - self.beta1) * g;
                v_slice[i] = self.beta2 * v_slice[i] + (1.0 - self.beta2) * g * g;
                let mhat = m_slice[i] / bc1;
                let vhat = v_slice[i] / bc2;
                p_slice[i] -= lr * mhat / (vhat.sqrt() + self.epsilon);
            }
        }
    }
}

fn add_model(acc: &mut GraphNetModel, delta: &GraphNetModel) {
    let d_slices = delta.param_slices();
    for (k, a_slice) in acc.param_slices_mut().into_iter().enumerate() {
        for (a, d) in a_slice.iter_mut().zip(d_slices[k]) {
            *a += d;
        }
    }
}

fn batch_gradient(
    model: &GraphNetModel,
    data: &[(CellGraph, f64)],
    indices: &[usize],
    norm: &TargetNormalization,
) -> GraphNetModel {
    let one = |&i: &usize| -> GraphNetModel {
        let (cell, target) = &data[i];
        let (preds, trace) = model.forward_traced(cell);
        model.backward(&trace, &loss_gradient(&preds, norm.normalize(*target)))
    };

    #[cfg(feature = "parallel")]
    let grads: Vec<GraphNetModel> = {
        use rayon::prelude::*;
        indices.par_iter().map(one).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let grads: Vec<GraphNetModel> = indices.iter().map(one).collect();

    let mut sum = model.zeros_like();
    for g in &grads {
        add_model(&mut sum, g);
    }
    sum
}

fn mean_loss(
    model: &GraphNetModel,
    data: &[(CellGraph, f64)],
    indices: &[usize],
    norm: &TargetNormalization,
) -> f64 {
    if indices.is_empty() {
        return f64::INFINITY;
    }
    let one = |&i: &usize| -> f64 {
        let (cell, target) = &data[i];
        loss(&model.predictions(cell), norm.normalize(*target))
    };
    #[cfg(feature = "parallel")]
    let losses: Vec<f64> = {
        use rayon::prelude::*;
        indices.par_iter().map(one).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let losses: Vec<f64> = indices.iter().map(one).collect();
    losses.iter().sum::<f64>() / indices.len() as f64
}

/// Evaluate a trained model on (cell, target) pairs in original units.
pub fn evaluate_model(
    model: &GraphNetModel,
    norm: &TargetNormalization,
    data: &[(CellGraph, f64)],
) -> Result<EvalMetrics> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let one = |(cell, _target): &(CellGraph, f64)| -> f64 { model.predict(cell, norm) };
    #[cfg(feature = "parallel")]
    let preds: Vec<f64> = {
        use rayon::prelude::*;
        data.par_iter().map(one).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let preds: Vec<f64> = data.iter().map(one).collect();

    let targets: Vec<f64> = data.iter().map(|(_, t)| *t).collect();
    let mape = preds
        .iter()
        .zip(&targets)
        .map(|(p, t)| ((p - t) / t).abs())
        .sum::<f64>()
        / data.len() as f64;
    let mse = preds
        .iter()
        .zip(&targets)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / data.len() as f64;
    Ok(EvalMetrics {
        accuracy: 1.0 - mape,
        spearman: analysis::spearman(&preds, &targets)?,
        pearson: analysis::pearson(&preds, &targets)?,
        mse,
        count: data.len(),
    })
}

/// Train a model on (cell, target) pairs.
///
/// Deterministic for a given (seed, dataset order): the split, the
/// initialization, the batch order and every floating-point reduction
/// are fixed.
pub fn train(dataset: &[(CellGraph, f64)], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if dataset.iter().any(|(_, t)| !t.is_finite()) {
        return Err(Error::InvalidConfig("targets must be finite".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut indices: Vec<usize> = (0..dataset.len()).collect();
    indices.shuffle(&mut rng);
    let (n_train, n_val, _) = split_sizes(dataset.len(), cfg);
    if n_train == 0 {
        return Err(Error::InvalidConfig("training split is empty".into()));
    }
    let mut train_idx: Vec<usize> = indices[..n_train].to_vec();
    let val_idx: Vec<usize> = indices[n_train..n_train + n_val].to_vec();
    let test_idx: Vec<usize> = indices[n_train + n_val..].to_vec();

    // Normalize targets to zero mean / unit variance on the train split.
    let mean = train_idx.iter().map(|&i| dataset[i].1).sum::<f64>() / n_train as f64;
    let var = train_idx
        .iter()
        .map(|&i| (dataset[i].1 - mean) * (dataset[i].1 - mean))
        .sum::<f64>()
        / n_train as f64;
    if var == 0.0 {
        return Err(Error::DegenerateTargets);
    }
    let norm = TargetNormalization {
        mean,
        std: var.sqrt(),
    };

    let mut model = GraphNetModel::init(cfg.seed, cfg.num_message_passing_steps);
    let mut adam = Adam::new(&model);
    let mut best_model = model.clone();
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0usize;

    for epoch in 0..cfg.epochs {
        train_idx.shuffle(&mut rng);
        for chunk in train_idx.chunks(cfg.batch_size) {
            let grads = batch_gradient(&model, dataset, chunk, &norm);
            adam.step(&mut model, &grads, cfg.learning_rate, 1.0 / chunk.len() as f64);
        }
        let val_loss = if val_idx.is_empty() {
            mean_loss(&model, dataset, &train_idx, &norm)
        } else {
            mean_loss(&model, dataset, &val_idx, &norm)
        };
        if val_loss < best_val {
            best_val = val_loss;
            best_model = model.clone();
            best_epoch = epoch;
        }
    }

    let test_data: Vec<(CellGraph, f64)> = test_idx
        .iter()
        .map(|&i| dataset[i].clone())
        .collect();
    let eval_data = if test_data.is_empty() {
        dataset.to_vec()
    } else {
        test_data
    };
    let test = evaluate_model(&best_model, &norm, &eval_data)?;

    let mut config = cfg.clone();
    config.target_normalization = Some(norm);
    Ok(TrainOutcome {
        model: best_model,
        config,
        best_epoch,
        best_val_loss: best_val,
        train_size: n_train,
        val_size: n_val,
        test_size: test_idx.len(),
        test,
    })
}
