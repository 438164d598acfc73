//! Residual MLP with BatchNorm and dropout, topped by a Cat or MTLR head.
//!
//! Layout:
//!
//! ```text
//! x ─ Linear(in→h) ─┬─ [Linear→BatchNorm→ReLU→Dropout] ─(+)─ … ─ Linear(h→out) ─ head
//!                   └──────────────────────────────────────┘
//! ```
//!
//! `forward` never mutates the parameters. In training mode the batch
//! statistics it observed are returned in the [`ForwardCache`] and folded
//! into the running averages with [`ModelParams::update_running_stats`].

mod checkpoint;
mod head;

pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint};
pub use head::{
    bin_midpoints, cat_head, cat_head_backward, mtlr_head, mtlr_head_backward, predict_risk,
    predict_survival, risk_gradient, Head, Pmf,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const BN_MOMENTUM: f64 = 0.1;
pub const BN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub n_blocks: usize,
    pub dropout_rate: f64,
    pub head: Head,
    pub k_bins: usize,
}

impl ModelConfig {
    pub fn output_dim(&self) -> usize {
        self.head.output_dim(self.k_bins)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden_dim == 0 {
            return Err(Error::Config("input_dim and hidden_dim must be positive".into()));
        }
        if self.k_bins < 3 {
            return Err(Error::Config(format!("k_bins must be >= 3, got {}", self.k_bins)));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!(
                "dropout must be in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        Ok(())
    }

    /// Number of trainable scalars.
    pub fn param_count(&self) -> usize {
        let (d, h, o) = (self.input_dim, self.hidden_dim, self.output_dim());
        (d * h + h) + self.n_blocks * (h * h + h + 2 * h) + (h * o + o)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    /// `(out, in)`.
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Linear {
    fn init(fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let data = (0..fan_in * fan_out)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        Self {
            weight: Matrix::from_vec(fan_out, fan_in, data).expect("sized above"),
            bias: vec![0.0; fan_out],
        }
    }

    fn apply(&self, x: &Matrix) -> Matrix {
        let mut z = x.matmul_t(&self.weight);
        z.add_row_vector(&self.bias);
        z
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub scale: Vec<f64>,
    pub shift: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

impl BatchNorm {
    fn new(dim: usize) -> Self {
        Self {
            scale: vec![1.0; dim],
            shift: vec![0.0; dim],
            running_mean: vec![0.0; dim],
            running_var: vec![1.0; dim],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualBlock {
    pub linear: Linear,
    pub norm: BatchNorm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub input: Linear,
    pub blocks: Vec<ResidualBlock>,
    pub output: Linear,
    /// Number of training-mode batches folded into the running statistics.
    pub updates: u64,
}

/// Scaled-uniform initialization, deterministic per seed.
pub fn init_params(config: &ModelConfig, seed: u64) -> Result<ModelParams> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = config.hidden_dim;
    let input = Linear::init(config.input_dim, h, &mut rng);
    let blocks = (0..config.n_blocks)
        .map(|_| ResidualBlock {
            linear: Linear::init(h, h, &mut rng),
            norm: BatchNorm::new(h),
        })
        .collect();
    let output = Linear::init(h, config.output_dim(), &mut rng);
    Ok(ModelParams {
        config: config.clone(),
        input,
        blocks,
        output,
        updates: 0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone)]
struct BlockCache {
    input: Matrix,
    x_hat: Matrix,
    inv_std: Vec<f64>,
    batch_mean: Vec<f64>,
    batch_var: Vec<f64>,
    /// Pre-activation `y = scale·x̂ + shift`; ReLU passes where `y > 0`.
    pre_act: Matrix,
    /// Inverted-dropout multipliers, `0` or `1/keep`.
    drop_mask: Matrix,
}

/// Everything `backward` needs from a training-mode forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    input: Matrix,
    blocks: Vec<BlockCache>,
    last_hidden: Matrix,
}

impl ForwardCache {
    pub fn batch_size(&self) -> usize {
        self.input.rows()
    }

    /// Biased batch mean and variance seen by each BatchNorm layer.
    pub fn batch_stats(&self) -> Vec<(Vec<f64>, Vec<f64>)> {
        self.blocks
            .iter()
            .map(|b| (b.batch_mean.clone(), b.batch_var.clone()))
            .collect()
    }
}

pub fn forward(
    params: &ModelParams,
    batch: &Matrix,
    mode: Mode,
    seed: u64,
) -> Result<(Matrix, Option<ForwardCache>)> {
    let cfg = &params.config;
    if batch.cols() != cfg.input_dim {
        return Err(Error::Shape(format!(
            "batch has {} features, model expects {}",
            batch.cols(),
            cfg.input_dim
        )));
    }
    let n = batch.rows();
    if mode == Mode::Train && n < 2 {
        return Err(Error::Shape(
            "training-mode forward needs a batch of at least 2 (BatchNorm)".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let keep = 1.0 - cfg.dropout_rate;

    let mut h = params.input.apply(batch);
    let mut caches = Vec::with_capacity(params.blocks.len());
    for block in &params.blocks {
        let a = block.linear.apply(&h);
        let dim = a.cols();
        let (mean, var) = match mode {
            Mode::Train => {
                let mean: Vec<f64> = a.column_sums().into_iter().map(|s| s / n as f64).collect();
                let mut var = vec![0.0; dim];
                for row in a.iter_rows() {
                    for ((v, x), m) in var.iter_mut().zip(row).zip(&mean) {
                        *v += (x - m) * (x - m);
                    }
                }
                var.iter_mut().for_each(|v| *v /= n as f64);
                (mean, var)
            }
            Mode::Eval => (block.norm.running_mean.clone(), block.norm.running_var.clone()),
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
        let mut x_hat = a;
        let mut y = Matrix::zeros(n, dim);
        for r in 0..n {
            let xr = x_hat.row_mut(r);
            for j in 0..dim {
                xr[j] = (xr[j] - mean[j]) * inv_std[j];
            }
            let yr = y.row_mut(r);
            for j in 0..dim {
                yr[j] = block.norm.scale[j] * x_hat.get(r, j) + block.norm.shift[j];
            }
        }
        let mut drop_mask = Matrix::zeros(n, dim);
        if mode == Mode::Train {
            for m in drop_mask.as_mut_slice() {
                *m = if cfg.dropout_rate == 0.0 || rng.random::<f64>() < keep {
                    1.0 / keep
                } else {
                    0.0
                };
            }
        }
        let mut next = h.clone();
        for r in 0..n {
            for j in 0..dim {
                let act = y.get(r, j).max(0.0);
                let act = if mode == Mode::Train {
                    act * drop_mask.get(r, j)
                } else {
                    act
                };
                next.row_mut(r)[j] += act;
            }
        }
        if mode == Mode::Train {
            caches.push(BlockCache {
                input: h,
                x_hat,
                inv_std,
                batch_mean: mean,
                batch_var: var,
                pre_act: y,
                drop_mask,
            });
        }
        h = next;
    }
    let out = params.output.apply(&h);
    let cache = (mode == Mode::Train).then(|| ForwardCache {
        input: batch.clone(),
        blocks: caches,
        last_hidden: h,
    });
    Ok((out, cache))
}

/// Gradients laid out like [`ModelParams::trainable`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    pub tensors: Vec<(String, Vec<f64>)>,
}

impl ParamGrads {
    pub fn is_finite(&self) -> std::result::Result<(), String> {
        for (name, g) in &self.tensors {
            if let Some(i) = g.iter().position(|x| !x.is_finite()) {
                return Err(format!("{name}[{i}] = {}", g[i]));
            }
        }
        Ok(())
    }
}

pub fn backward(params: &ModelParams, cache: &ForwardCache, grad_logits: &Matrix) -> Result<ParamGrads> {
    let n = cache.batch_size();
    if grad_logits.shape() != (n, params.config.output_dim()) {
        return Err(Error::Shape(format!(
            "grad_logits is {:?}, expected ({n}, {})",
            grad_logits.shape(),
            params.config.output_dim()
        )));
    }
    if cache.blocks.len() != params.blocks.len() {
        return Err(Error::Shape(format!(
            "cache has {} blocks, params have {}",
            cache.blocks.len(),
            params.blocks.len()
        )));
    }

    let out_w = grad_logits.t_matmul(&cache.last_hidden);
    let out_b = grad_logits.column_sums();
    let mut g_h = grad_logits.matmul(&params.output.weight);

    let mut block_grads = Vec::with_capacity(params.blocks.len());
    for (block, bc) in params.blocks.iter().zip(&cache.blocks).rev() {
        let dim = bc.x_hat.cols();
        // through dropout and ReLU
        let mut g_y = Matrix::zeros(n, dim);
        for r in 0..n {
            for j in 0..dim {
                if bc.pre_act.get(r, j) > 0.0 {
                    g_y.row_mut(r)[j] = g_h.get(r, j) * bc.drop_mask.get(r, j);
                }
            }
        }
        let mut g_scale = vec![0.0; dim];
        let g_shift = g_y.column_sums();
        let mut sum_gx = vec![0.0; dim];
        let mut sum_gx_xhat = vec![0.0; dim];
        for r in 0..n {
            for j in 0..dim {
                let gy = g_y.get(r, j);
                let xh = bc.x_hat.get(r, j);
                g_scale[j] += gy * xh;
                let gx = gy * block.norm.scale[j];
                sum_gx[j] += gx;
                sum_gx_xhat[j] += gx * xh;
            }
        }
        let nf = n as f64;
        let mut g_a = Matrix::zeros(n, dim);
        for r in 0..n {
            for j in 0..dim {
                let gx = g_y.get(r, j) * block.norm.scale[j];
                let xh = bc.x_hat.get(r, j);
                g_a.row_mut(r)[j] =
                    bc.inv_std[j] / nf * (nf * gx - sum_gx[j] - xh * sum_gx_xhat[j]);
            }
        }
        let g_w = g_a.t_matmul(&bc.input);
        let g_b = g_a.column_sums();
        let through = g_a.matmul(&block.linear.weight);
        for (acc, x) in g_h.as_mut_slice().iter_mut().zip(through.as_slice()) {
            *acc += x;
        }
        block_grads.push((g_w, g_b, g_scale, g_shift));
    }
    block_grads.reverse();

    let in_w = g_h.t_matmul(&cache.input);
    let in_b = g_h.column_sums();

    let mut tensors = vec![
        ("input.weight".to_string(), in_w.as_slice().to_vec()),
        ("input.bias".to_string(), in_b),
    ];
    for (l, (w, b, s, t)) in block_grads.into_iter().enumerate() {
        tensors.push((format!("block{l}.weight"), w.as_slice().to_vec()));
        tensors.push((format!("block{l}.bias"), b));
        tensors.push((format!("block{l}.bn_scale"), s));
        tensors.push((format!("block{l}.bn_shift"), t));
    }
    tensors.push(("output.weight".to_string(), out_w.as_slice().to_vec()));
    tensors.push(("output.bias".to_string(), out_b));
    Ok(ParamGrads { tensors })
}

impl ModelParams {
    /// Trainable tensors in a fixed order, paired with their names.
    pub fn trainable(&self) -> Vec<(String, &[f64])> {
        let mut v: Vec<(String, &[f64])> = vec![
            ("input.weight".into(), self.input.weight.as_slice()),
            ("input.bias".into(), &self.input.bias),
        ];
        for (l, b) in self.blocks.iter().enumerate() {
            v.push((format!("block{l}.weight"), b.linear.weight.as_slice()));
            v.push((format!("block{l}.bias"), &b.linear.bias));
            v.push((format!("block{l}.bn_scale"), &b.norm.scale));
            v.push((format!("block{l}.bn_shift"), &b.norm.shift));
        }
        v.push(("output.weight".into(), self.output.weight.as_slice()));
        v.push(("output.bias".into(), &self.output.bias));
        v
    }

    pub fn trainable_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v: Vec<&mut [f64]> = vec![self.input.weight.as_mut_slice(), &mut self.input.bias];
        for b in &mut self.blocks {
            v.push(b.linear.weight.as_mut_slice());
            v.push(&mut b.linear.bias);
            v.push(&mut b.norm.scale);
            v.push(&mut b.norm.shift);
        }
        v.push(self.output.weight.as_mut_slice());
        v.push(&mut self.output.bias);
        v
    }

    pub fn zero_grads(&self) -> ParamGrads {
        ParamGrads {
            tensors: self
                .trainable()
                .into_iter()
                .map(|(n, t)| (n, vec![0.0; t.len()]))
                .collect(),
        }
    }

    /// Fold a training batch's statistics into the running averages
    /// (unbiased variance, momentum [`BN_MOMENTUM`]).
    pub fn update_running_stats(&mut self, cache: &ForwardCache) {
        let n = cache.batch_size() as f64;
        let correction = n / (n - 1.0);
        for (block, bc) in self.blocks.iter_mut().zip(&cache.blocks) {
            for j in 0..bc.batch_mean.len() {
                let rm = &mut block.norm.running_mean[j];
                *rm = (1.0 - BN_MOMENTUM) * *rm + BN_MOMENTUM * bc.batch_mean[j];
                let rv = &mut block.norm.running_var[j];
                *rv = (1.0 - BN_MOMENTUM) * *rv + BN_MOMENTUM * bc.batch_var[j] * correction;
            }
        }
        self.updates += 1;
    }
}

/// Eval-mode forward followed by the head, one [`Pmf`] per row.
pub fn predict_pmfs(params: &ModelParams, features: &Matrix) -> Result<Vec<Pmf>> {
    let (out, _) = forward(params, features, Mode::Eval, 0)?;
    out.iter_rows().map(|r| params.config.head.pmf(r)).collect()
}

/// Eval-mode risk scores.
pub fn predict_risks(params: &ModelParams, features: &Matrix) -> Result<Vec<f64>> {
    Ok(predict_pmfs(params, features)?.iter().map(predict_risk).collect())
}
