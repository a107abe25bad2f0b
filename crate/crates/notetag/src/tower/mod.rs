//! Dual-tower retrieval model: parameters, forward passes, losses, manual
//! backprop training, exact top-K retrieval, and binary serialization.

mod index;
mod loss;
mod serialize;
mod train;

pub use index::{build_item_index, retrieve_top_k, ItemIndex};
pub use loss::{bce_loss, cl_loss, total_loss, BCE_EPS};
pub use serialize::{load_params, save_params};
pub use train::{
    batch_loss, compute_gradients, encode_example, train_epoch, train_step, RawBatch, RawExample,
};

use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn random(rows: usize, cols: usize, scale: f64, rng: &mut impl Rng) -> Self {
        let data = (0..rows * cols).map(|_| rng.gen_range(-scale..scale)).collect();
        Self { rows, cols, data }
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn at_mut(&mut self, r: usize, c: usize) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// y = self * x
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        let mut y = vec![0.0; self.rows];
        for r in 0..self.rows {
            let row = self.row(r);
            let mut acc = 0.0;
            for (w, xv) in row.iter().zip(x) {
                acc += w * xv;
            }
            y[r] = acc;
        }
        y
    }

    /// y = self^T * x
    pub fn matvec_t(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.rows);
        let mut y = vec![0.0; self.cols];
        for r in 0..self.rows {
            let row = self.row(r);
            let xv = x[r];
            for (yc, w) in y.iter_mut().zip(row) {
                *yc += w * xv;
            }
        }
        y
    }

    /// self += scale * (a outer b)
    pub fn add_outer(&mut self, a: &[f64], b: &[f64], scale: f64) {
        debug_assert_eq!(a.len(), self.rows);
        debug_assert_eq!(b.len(), self.cols);
        for r in 0..self.rows {
            let row = self.row_mut(r);
            let av = a[r] * scale;
            for (w, bv) in row.iter_mut().zip(b) {
                *w += av * bv;
            }
        }
    }

    pub fn sum_sq(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
        }
    }

    #[inline]
    pub fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// One tower: two fully connected layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Tower {
    pub w1: Mat,
    pub b1: Vec<f64>,
    pub w2: Mat,
    pub b2: Vec<f64>,
}

impl Tower {
    pub fn zeros(in_dim: usize, hidden_dim: usize, out_dim: usize) -> Self {
        Self {
            w1: Mat::zeros(hidden_dim, in_dim),
            b1: vec![0.0; hidden_dim],
            w2: Mat::zeros(out_dim, hidden_dim),
            b2: vec![0.0; out_dim],
        }
    }

    pub fn random(in_dim: usize, hidden_dim: usize, out_dim: usize, rng: &mut impl Rng) -> Self {
        let s1 = (2.0 / in_dim as f64).sqrt();
        let s2 = (2.0 / hidden_dim as f64).sqrt();
        Self {
            w1: Mat::random(hidden_dim, in_dim, s1, rng),
            b1: vec![0.0; hidden_dim],
            w2: Mat::random(out_dim, hidden_dim, s2, rng),
            b2: vec![0.0; out_dim],
        }
    }

    pub fn in_dim(&self) -> usize {
        self.w1.cols
    }

    pub fn out_dim(&self) -> usize {
        self.w2.rows
    }
}

/// Everything the trainer updates: both towers plus the user and item
/// embedding tables.
#[derive(Debug, Clone, PartialEq)]
pub struct TowerParams {
    pub user: Tower,
    pub item: Tower,
    pub user_embed: Mat,
    pub item_embed: Mat,
}

/// Intermediate activations cached by a tower forward pass.
pub(crate) struct TowerTrace {
    pub input: Vec<f64>,
    pub pre1: Vec<f64>,
    pub hidden: Vec<f64>,
    pub pre2: Vec<f64>,
    pub output: Vec<f64>,
}

impl TowerParams {
    /// Random initialization. `feat_dim` is the width of the static
    /// feature embeddings, `z_dim` the tag-vector width.
    pub fn init(
        n_users: usize,
        n_items: usize,
        feat_dim: usize,
        z_dim: usize,
        hidden_dim: usize,
        output_dim: usize,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let in_dim = feat_dim + z_dim;
        Self {
            user: Tower::random(in_dim, hidden_dim, output_dim, &mut rng),
            item: Tower::random(in_dim, hidden_dim, output_dim, &mut rng),
            user_embed: Mat::random(n_users, feat_dim, 0.1, &mut rng),
            item_embed: Mat::random(n_items, feat_dim, 0.1, &mut rng),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            user: Tower::zeros(self.user.in_dim(), self.user.w1.rows, self.user.out_dim()),
            item: Tower::zeros(self.item.in_dim(), self.item.w1.rows, self.item.out_dim()),
            user_embed: Mat::zeros(self.user_embed.rows, self.user_embed.cols),
            item_embed: Mat::zeros(self.item_embed.rows, self.item_embed.cols),
        }
    }

    /// Named flat views over every parameter group, in a fixed order.
    pub fn groups_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        vec![
            ("user.w1", &mut self.user.w1.data[..]),
            ("user.b1", &mut self.user.b1[..]),
            ("user.w2", &mut self.user.w2.data[..]),
            ("user.b2", &mut self.user.b2[..]),
            ("item.w1", &mut self.item.w1.data[..]),
            ("item.b1", &mut self.item.b1[..]),
            ("item.w2", &mut self.item.w2.data[..]),
            ("item.b2", &mut self.item.b2[..]),
            ("user_embed", &mut self.user_embed.data[..]),
            ("item_embed", &mut self.item_embed.data[..]),
        ]
    }

    pub fn groups(&self) -> Vec<(&'static str, &[f64])> {
        vec![
            ("user.w1", &self.user.w1.data[..]),
            ("user.b1", &self.user.b1[..]),
            ("user.w2", &self.user.w2.data[..]),
            ("user.b2", &self.user.b2[..]),
            ("item.w1", &self.item.w1.data[..]),
            ("item.b1", &self.item.b1[..]),
            ("item.w2", &self.item.w2.data[..]),
            ("item.b2", &self.item.b2[..]),
            ("user_embed", &self.user_embed.data[..]),
            ("item_embed", &self.item_embed.data[..]),
        ]
    }

    /// Squared L2 norm of the regularized parameters: FC weights and both
    /// embedding tables; biases excluded.
    pub fn reg_norm_sq(&self) -> f64 {
        self.user.w1.sum_sq()
            + self.user.w2.sum_sq()
            + self.item.w1.sum_sq()
            + self.item.w2.sum_sq()
            + self.user_embed.sum_sq()
            + self.item_embed.sum_sq()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub output_dim: usize,
    pub k: usize,
    pub seed: u64,
    pub act1: Activation,
    pub act2: Activation,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda1: 0.5,
            lambda2: 1e-3,
            learning_rate: 0.15,
            batch_size: 16,
            epochs: 60,
            embed_dim: 4,
            hidden_dim: 32,
            output_dim: 16,
            k: 10,
            seed: 0,
            act1: Activation::Relu,
            act2: Activation::Identity,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambda1 < 0.0 || self.lambda2 < 0.0 {
            return Err(Error::InvalidInput("lambda1/lambda2 must be >= 0".into()));
        }
        if self.learning_rate < 0.0 {
            return Err(Error::InvalidInput("learning_rate must be >= 0".into()));
        }
        if self.batch_size == 0 || self.k == 0 {
            return Err(Error::InvalidInput("batch_size and k must be >= 1".into()));
        }
        Ok(())
    }
}

/// One dense training example.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainExample {
    pub f_u: Vec<f64>,
    pub f_v: Vec<f64>,
    pub z_pos: Vec<f64>,
    pub y: f64,
}

fn forward_tower(
    tower: &Tower,
    input: Vec<f64>,
    act1: Activation,
    act2: Activation,
) -> TowerTrace {
    let mut pre1 = tower.w1.matvec(&input);
    for (p, b) in pre1.iter_mut().zip(&tower.b1) {
        *p += b;
    }
    let hidden: Vec<f64> = pre1.iter().map(|&x| act1.apply(x)).collect();
    let mut pre2 = tower.w2.matvec(&hidden);
    for (p, b) in pre2.iter_mut().zip(&tower.b2) {
        *p += b;
    }
    let output: Vec<f64> = pre2.iter().map(|&x| act2.apply(x)).collect();
    TowerTrace { input, pre1, hidden, pre2, output }
}

fn concat(f: &[f64], z: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(f.len() + z.len());
    v.extend_from_slice(f);
    v.extend_from_slice(z);
    v
}

fn check_tower_input(tower: &Tower, f: &[f64], z: &[f64]) -> Result<()> {
    let got = f.len() + z.len();
    if got != tower.in_dim() {
        return Err(Error::DimensionMismatch { expected: tower.in_dim(), got });
    }
    Ok(())
}

pub(crate) fn user_forward_trace(
    params: &TowerParams,
    z: &[f64],
    f_u: &[f64],
    config: &TrainConfig,
) -> Result<TowerTrace> {
    check_tower_input(&params.user, f_u, z)?;
    Ok(forward_tower(&params.user, concat(f_u, z), config.act1, config.act2))
}

pub(crate) fn item_forward_trace(
    params: &TowerParams,
    z: &[f64],
    f_v: &[f64],
    config: &TrainConfig,
) -> Result<TowerTrace> {
    check_tower_input(&params.item, f_v, z)?;
    Ok(forward_tower(&params.item, concat(f_v, z), config.act1, config.act2))
}

/// User tower forward pass: act2(W2 act1(W1 concat(f_u, z) + b1) + b2).
pub fn user_forward(
    params: &TowerParams,
    z: &[f64],
    f_u: &[f64],
    config: &TrainConfig,
) -> Result<Vec<f64>> {
    Ok(user_forward_trace(params, z, f_u, config)?.output)
}

/// Item tower forward pass, mirroring [`user_forward`].
pub fn item_forward(
    params: &TowerParams,
    z: &[f64],
    f_v: &[f64],
    config: &TrainConfig,
) -> Result<Vec<f64>> {
    Ok(item_forward_trace(params, z, f_v, config)?.output)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
