use ndarray::Array2;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{RareError, Result};
use crate::gnn::adam::{adam_step, AdamState};
use crate::gnn::model::{forward, loss_and_grad, GcnModel, GraphInput};
use crate::graph::SplitMask;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainMetrics {
    pub accuracy: f64,
    pub loss: f64,
    pub epoch: usize,
}

/// Accuracy and mean cross-entropy over the masked rows. Argmax ties go to
/// the lowest class id.
pub fn metrics_from_logits(logits: &Array2<f64>, labels: &[usize], mask: &[bool]) -> Result<TrainMetrics> {
    let mut count = 0usize;
    let mut correct = 0usize;
    let mut loss = 0.0;
    for (v, row) in logits.outer_iter().enumerate() {
        if !mask[v] {
            continue;
        }
        count += 1;
        let mut best = 0;
        for c in 1..row.len() {
            if row[c] > row[best] {
                best = c;
            }
        }
        if best == labels[v] {
            correct += 1;
        }
        let max = row[best];
        let lse = max + row.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
        loss += lse - row[labels[v]];
    }
    if count == 0 {
        return Err(RareError::invalid("metrics over an empty mask"));
    }
    let m = TrainMetrics {
        accuracy: correct as f64 / count as f64,
        loss: loss / count as f64,
        epoch: 0,
    };
    if !m.loss.is_finite() {
        return Err(RareError::NonFinite("classification loss".into()));
    }
    Ok(m)
}

/// Eval-mode logits (no dropout).
pub fn predict(model: &GcnModel, input: &GraphInput) -> Result<Array2<f64>> {
    forward(model, input, None).map(|(logits, _)| logits)
}

pub fn evaluate(model: &GcnModel, input: &GraphInput, labels: &[usize], mask: &[bool]) -> Result<TrainMetrics> {
    metrics_from_logits(&predict(model, input)?, labels, mask)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// Training-pass metrics (dropout active).
    pub train: TrainMetrics,
    pub val: TrainMetrics,
}

/// Full-batch training with Adam. Stops early once validation loss has not
/// improved for `patience` consecutive epochs.
#[allow(clippy::too_many_arguments)]
pub fn train_epochs(
    model: &mut GcnModel,
    adam: &mut AdamState,
    input: &GraphInput,
    labels: &[usize],
    split: &SplitMask,
    epochs: usize,
    patience: usize,
    rng: &mut dyn RngCore,
) -> Result<Vec<EpochRecord>> {
    if epochs == 0 {
        return Err(RareError::invalid("epochs must be at least 1"));
    }
    let mut history = Vec::with_capacity(epochs);
    let mut best_val = f64::INFINITY;
    let mut stale = 0usize;
    for epoch in 0..epochs {
        let (logits, cache) = forward(model, input, Some(&mut *rng))?;
        let mut train = metrics_from_logits(&logits, labels, &split.train)?;
        let (_, grads) = loss_and_grad(model, input, &cache, &logits, labels, &split.train, adam.weight_decay)?;
        adam_step(model, &grads, adam);
        if !model.is_finite() {
            return Err(RareError::NonFinite("GNN weights after Adam step".into()));
        }
        let mut val = evaluate(model, input, labels, &split.val)?;
        train.epoch = epoch + 1;
        val.epoch = epoch + 1;
        history.push(EpochRecord { train, val });
        if val.loss < best_val {
            best_val = val.loss;
            stale = 0;
        } else {
            stale += 1;
        }
        if stale >= patience {
            break;
        }
    }
    Ok(history)
}
