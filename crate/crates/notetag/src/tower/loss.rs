//! The training objective: binary cross-entropy on click labels, an
//! in-batch contrastive term, and L2 regularization.

use super::{dot, item_forward_trace, sigmoid, user_forward_trace, TowerParams, TrainConfig, TrainExample};
use crate::error::{Error, Result};

pub const BCE_EPS: f64 = 1e-7;

/// -[y log yhat + (1-y) log(1-yhat)] with yhat clamped to [eps, 1-eps].
pub fn bce_loss(y: f64, y_hat: f64) -> f64 {
    let p = y_hat.clamp(BCE_EPS, 1.0 - BCE_EPS);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

/// Softmax cross-entropy over the positive pair against in-batch negatives:
/// -log( e^{<u_pos, v_pos>} / (e^{<u_pos, v_pos>} + sum_k e^{<u_neg_k, v_pos>}) ).
///
/// With zero negatives the probability is 1 and the loss 0.
pub fn cl_loss(u_pos: &[f64], v_pos: &[f64], u_negs: &[Vec<f64>]) -> Result<f64> {
    if u_pos.len() != v_pos.len() {
        return Err(Error::DimensionMismatch { expected: u_pos.len(), got: v_pos.len() });
    }
    for n in u_negs {
        if n.len() != v_pos.len() {
            return Err(Error::DimensionMismatch { expected: v_pos.len(), got: n.len() });
        }
    }
    let pos_logit = dot(u_pos, v_pos);
    let mut logits = Vec::with_capacity(1 + u_negs.len());
    logits.push(pos_logit);
    for n in u_negs {
        logits.push(dot(n, v_pos));
    }
    // log-sum-exp for stability
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    Ok(lse - pos_logit)
}

/// Mean BCE over the batch + lambda1 * mean CL + lambda2 * ||Theta||^2.
///
/// The click probability is sigmoid of the tower dot product; negatives for
/// the contrastive term are the other examples' tag vectors within the
/// batch.
pub fn total_loss(
    batch: &[TrainExample],
    params: &TowerParams,
    config: &TrainConfig,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let n = batch.len() as f64;
    let mut bce_sum = 0.0;
    let mut cl_sum = 0.0;
    for (i, ex) in batch.iter().enumerate() {
        let u = user_forward_trace(params, &ex.z_pos, &ex.f_u, config)?.output;
        let v = item_forward_trace(params, &ex.z_pos, &ex.f_v, config)?.output;
        bce_sum += bce_loss(ex.y, sigmoid(dot(&u, &v)));

        let mut negs = Vec::with_capacity(batch.len() - 1);
        for (k, other) in batch.iter().enumerate() {
            if k != i {
                negs.push(user_forward_trace(params, &other.z_pos, &ex.f_u, config)?.output);
            }
        }
        cl_sum += cl_loss(&u, &v, &negs)?;
    }
    let loss = bce_sum / n + config.lambda1 * cl_sum / n + config.lambda2 * params.reg_norm_sq();
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss(format!("total loss = {loss}")));
    }
    Ok(loss)
}
