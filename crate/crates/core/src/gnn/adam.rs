use ndarray::{Array, Array2, Dimension};

use crate::gnn::model::{GcnModel, GradientPair};

/// Bias-corrected Adam moments for both weight matrices.
///
/// `weight_decay` is carried here for the training loop, which folds it into
/// the gradient via [`loss_and_grad`](crate::gnn::loss_and_grad); the step
/// itself does not apply it a second time.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: [Array2<f64>; 2],
    pub v: [Array2<f64>; 2],
    pub step: u64,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(model: &GcnModel, learning_rate: f64, weight_decay: f64) -> Self {
        AdamState {
            m: [Array2::zeros(model.w1.dim()), Array2::zeros(model.w2.dim())],
            v: [Array2::zeros(model.w1.dim()), Array2::zeros(model.w2.dim())],
            step: 0,
            learning_rate,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn adam_update<D: Dimension>(
    param: &mut Array<f64, D>,
    grad: &Array<f64, D>,
    m: &mut Array<f64, D>,
    v: &mut Array<f64, D>,
    step: u64,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
) {
    let bc1 = 1.0 - beta1.powi(step as i32);
    let bc2 = 1.0 - beta2.powi(step as i32);
    ndarray::Zip::from(param)
        .and(grad)
        .and(m)
        .and(v)
        .for_each(|p, &g, m, v| {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        });
}

pub fn adam_step(model: &mut GcnModel, grads: &GradientPair, state: &mut AdamState) {
    assert_eq!(model.w1.dim(), grads.w1.dim(), "w1 gradient shape");
    assert_eq!(model.w2.dim(), grads.w2.dim(), "w2 gradient shape");
    state.step += 1;
    let [m1, m2] = &mut state.m;
    let [v1, v2] = &mut state.v;
    for (p, g, m, v) in [(&mut model.w1, &grads.w1, m1, v1), (&mut model.w2, &grads.w2, m2, v2)] {
        adam_update(
            p,
            g,
            m,
            v,
            state.step,
            state.learning_rate,
            state.beta1,
            state.beta2,
            state.eps,
        );
    }
}
