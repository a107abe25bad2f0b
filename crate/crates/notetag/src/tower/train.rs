//! Gradient training: exact backpropagation through both towers and the
//! embedding tables, plain SGD updates, and deterministic epoch shuffling.

use super::loss::{bce_loss, BCE_EPS};
use super::{
    dot, item_forward_trace, sigmoid, user_forward_trace, Tower, TowerParams, TowerTrace,
    TrainConfig, TrainExample,
};
use crate::error::{Error, Result};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// One id-level training example: static features arrive as embedding-table
/// indices, the tag vector as a dense input.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawExample {
    pub user_idx: usize,
    pub item_idx: usize,
    pub z: Vec<f64>,
    pub y: f64,
}

pub type RawBatch = [RawExample];

/// Looks up the embedding rows and yields the dense example form.
pub fn encode_example(params: &TowerParams, raw: &RawExample) -> Result<TrainExample> {
    if raw.user_idx >= params.user_embed.rows {
        return Err(Error::DimensionMismatch {
            expected: params.user_embed.rows,
            got: raw.user_idx,
        });
    }
    if raw.item_idx >= params.item_embed.rows {
        return Err(Error::DimensionMismatch {
            expected: params.item_embed.rows,
            got: raw.item_idx,
        });
    }
    Ok(TrainExample {
        f_u: params.user_embed.row(raw.user_idx).to_vec(),
        f_v: params.item_embed.row(raw.item_idx).to_vec(),
        z_pos: raw.z.clone(),
        y: raw.y,
    })
}

/// The objective evaluated on an id-level batch; this is exactly the
/// function `compute_gradients` differentiates.
pub fn batch_loss(params: &TowerParams, batch: &RawBatch, config: &TrainConfig) -> Result<f64> {
    let dense: Vec<TrainExample> = batch
        .iter()
        .map(|r| encode_example(params, r))
        .collect::<Result<_>>()?;
    super::loss::total_loss(&dense, params, config)
}

/// Backprop through one two-layer tower given the gradient at its output.
/// Returns the gradient with respect to the tower input.
fn backprop_tower(
    tower: &Tower,
    trace: &TowerTrace,
    grad_out: &[f64],
    config: &TrainConfig,
    grads: &mut Tower,
) -> Vec<f64> {
    let g2: Vec<f64> = grad_out
        .iter()
        .zip(&trace.pre2)
        .map(|(g, p)| g * config.act2.derivative(*p))
        .collect();
    grads.w2.add_outer(&g2, &trace.hidden, 1.0);
    for (b, g) in grads.b2.iter_mut().zip(&g2) {
        *b += g;
    }
    let gh = tower.w2.matvec_t(&g2);
    let g1: Vec<f64> = gh
        .iter()
        .zip(&trace.pre1)
        .map(|(g, p)| g * config.act1.derivative(*p))
        .collect();
    grads.w1.add_outer(&g1, &trace.input, 1.0);
    for (b, g) in grads.b1.iter_mut().zip(&g1) {
        *b += g;
    }
    tower.w1.matvec_t(&g1)
}

fn axpy(acc: &mut [f64], scale: f64, v: &[f64]) {
    for (a, x) in acc.iter_mut().zip(v) {
        *a += scale * x;
    }
}

/// Exact gradients of [`batch_loss`] with respect to every parameter
/// group, plus the loss value itself.
pub fn compute_gradients(
    params: &TowerParams,
    batch: &RawBatch,
    config: &TrainConfig,
) -> Result<(TowerParams, f64)> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    config.validate()?;
    let n = batch.len() as f64;
    let feat_dim = params.user_embed.cols;
    let mut grads = params.zeros_like();
    let mut bce_sum = 0.0;
    let mut cl_sum = 0.0;

    for (i, ex) in batch.iter().enumerate() {
        let dense = encode_example(params, ex)?;
        let u_trace = user_forward_trace(params, &dense.z_pos, &dense.f_u, config)?;
        let v_trace = item_forward_trace(params, &dense.z_pos, &dense.f_v, config)?;
        let u = &u_trace.output;
        let v = &v_trace.output;

        // negatives: the other examples' tag vectors through this user's features
        let mut neg_traces = Vec::with_capacity(batch.len() - 1);
        for (k, other) in batch.iter().enumerate() {
            if k != i {
                neg_traces.push(user_forward_trace(params, &other.z, &dense.f_u, config)?);
            }
        }

        // BCE
        let s = dot(u, v);
        let yhat = sigmoid(s);
        bce_sum += bce_loss(ex.y, yhat);
        let grad_s = if yhat <= BCE_EPS || yhat >= 1.0 - BCE_EPS {
            0.0 // clamped region: loss is locally constant
        } else {
            (yhat - ex.y) / n
        };

        let mut grad_u = vec![0.0; u.len()];
        let mut grad_v = vec![0.0; v.len()];
        axpy(&mut grad_u, grad_s, v);
        axpy(&mut grad_v, grad_s, u);

        // CL: softmax over [positive logit, negative logits]
        let mut logits = Vec::with_capacity(1 + neg_traces.len());
        logits.push(s);
        for t in &neg_traces {
            logits.push(dot(&t.output, v));
        }
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let denom: f64 = exps.iter().sum();
        cl_sum += denom.ln() + max - s;

        let scale = config.lambda1 / n;
        let p0 = exps[0] / denom;
        axpy(&mut grad_u, scale * (p0 - 1.0), v);
        axpy(&mut grad_v, scale * (p0 - 1.0), u);
        let mut neg_out_grads = Vec::with_capacity(neg_traces.len());
        for (k, t) in neg_traces.iter().enumerate() {
            let pk = exps[k + 1] / denom;
            axpy(&mut grad_v, scale * pk, &t.output);
            let mut g = vec![0.0; v.len()];
            axpy(&mut g, scale * pk, v);
            neg_out_grads.push(g);
        }

        // backprop all user-tower passes for this example
        let gin = backprop_tower(&params.user, &u_trace, &grad_u, config, &mut grads.user);
        axpy(grads.user_embed.row_mut(ex.user_idx), 1.0, &gin[..feat_dim]);
        for (t, g) in neg_traces.iter().zip(&neg_out_grads) {
            let gin = backprop_tower(&params.user, t, g, config, &mut grads.user);
            axpy(grads.user_embed.row_mut(ex.user_idx), 1.0, &gin[..feat_dim]);
        }

        // item tower pass
        let gin = backprop_tower(&params.item, &v_trace, &grad_v, config, &mut grads.item);
        axpy(grads.item_embed.row_mut(ex.item_idx), 1.0, &gin[..feat_dim]);
    }

    // L2 regularizer on weights and embedding tables, biases excluded
    let two_l2 = 2.0 * config.lambda2;
    for (gm, pm) in [
        (&mut grads.user.w1, &params.user.w1),
        (&mut grads.user.w2, &params.user.w2),
        (&mut grads.item.w1, &params.item.w1),
        (&mut grads.item.w2, &params.item.w2),
        (&mut grads.user_embed, &params.user_embed),
        (&mut grads.item_embed, &params.item_embed),
    ] {
        for (g, p) in gm.data.iter_mut().zip(&pm.data) {
            *g += two_l2 * p;
        }
    }

    let loss = bce_sum / n + config.lambda1 * cl_sum / n + config.lambda2 * params.reg_norm_sq();
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss(format!("loss = {loss}")));
    }
    Ok((grads, loss))
}

/// One SGD step on the batch; returns the pre-update loss.
pub fn train_step(
    params: &mut TowerParams,
    batch: &RawBatch,
    config: &TrainConfig,
) -> Result<f64> {
    let (grads, loss) = compute_gradients(params, batch, config)?;
    let lr = config.learning_rate;
    for ((_, p), (_, g)) in params.groups_mut().into_iter().zip(grads.groups()) {
        for (pv, gv) in p.iter_mut().zip(g) {
            *pv -= lr * gv;
        }
    }
    Ok(loss)
}

/// One pass over the data in deterministically shuffled minibatches;
/// returns the mean batch loss.
pub fn train_epoch(
    params: &mut TowerParams,
    examples: &[RawExample],
    config: &TrainConfig,
    epoch: usize,
) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(epoch as u64 * 0x9e37));
    order.shuffle(&mut rng);

    let mut loss_sum = 0.0;
    let mut batches = 0usize;
    for chunk in order.chunks(config.batch_size) {
        let batch: Vec<RawExample> = chunk.iter().map(|&i| examples[i].clone()).collect();
        loss_sum += train_step(params, &batch, config)?;
        batches += 1;
    }
    Ok(loss_sum / batches as f64)
}
