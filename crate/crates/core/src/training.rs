//! Minibatch SGD with a cosine-annealed learning rate and model selection
//! by validation C-index.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{bin_samples, BinnedSample, SurvivalDataset, TimeGrid};
use crate::error::{Error, Result};
use crate::losses::{triplesurv_loss, LossWeights, TripleSurvLoss};
use crate::matrix::Matrix;
use crate::metrics::c_index;
use crate::model::{
    backward, forward, init_params, predict_risks, ForwardCache, Mode, ModelConfig, ModelParams, ParamGrads,
    Pmf,
};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_init: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub seed: u64,
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 256,
            lr_init: 1e-2,
            momentum: 0.0,
            weight_decay: 0.0,
            seed: 0,
            eval_every: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::Config(format!("batch_size must be >= 2, got {}", self.batch_size)));
        }
        if self.eval_every == 0 {
            return Err(Error::Config("eval_every must be >= 1".into()));
        }
        for (name, v) in [
            ("lr_init", self.lr_init),
            ("momentum", self.momentum),
            ("weight_decay", self.weight_decay),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if self.momentum >= 1.0 {
            return Err(Error::Config(format!("momentum must be < 1, got {}", self.momentum)));
        }
        Ok(())
    }
}

/// `lr_init · (1 + cos(π · epoch / total)) / 2`.
pub fn cosine_lr(epoch: usize, total_epochs: usize, lr_init: f64) -> f64 {
    if total_epochs == 0 {
        return lr_init;
    }
    let frac = epoch.min(total_epochs) as f64 / total_epochs as f64;
    lr_init * (1.0 + (PI * frac).cos()) / 2.0
}

/// One SGD step with heavy-ball momentum and L2 weight decay:
/// `v ← m·v + g + wd·w`, `w ← w − lr·v`.
///
/// Gradients are checked before anything is modified; a non-finite entry
/// aborts with the offending tensor's name.
pub fn sgd_step(
    params: &mut ModelParams,
    velocity: &mut [Vec<f64>],
    grads: &ParamGrads,
    lr: f64,
    momentum: f64,
    weight_decay: f64,
) -> Result<()> {
    grads.is_finite().map_err(|at| Error::NonFinite(format!("gradient {at}")))?;
    let tensors = params.trainable_mut();
    if tensors.len() != grads.tensors.len() || tensors.len() != velocity.len() {
        return Err(Error::Shape(format!(
            "{} parameter tensors, {} gradients, {} velocity buffers",
            tensors.len(),
            grads.tensors.len(),
            velocity.len()
        )));
    }
    for ((w, (name, g)), v) in tensors.into_iter().zip(&grads.tensors).zip(velocity.iter_mut()) {
        if w.len() != g.len() || w.len() != v.len() {
            return Err(Error::Shape(format!("tensor {name}: size mismatch")));
        }
        for ((wi, gi), vi) in w.iter_mut().zip(g).zip(v.iter_mut()) {
            *vi = momentum * *vi + gi + weight_decay * *wi;
            *wi -= lr * *vi;
        }
    }
    Ok(())
}

/// One epoch of the log.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub lr: f64,
    /// Mean over batches of the weighted objective.
    pub loss: f64,
    pub likelihood: f64,
    pub pairwise: f64,
    pub calibration: f64,
    pub batches: usize,
    /// Samples left out because the final batch held a single sample.
    pub dropped: usize,
    pub val_c_index: Option<f64>,
}

pub const HISTORY_HEADER: &str = "epoch,lr,loss,likelihood,pairwise,calibration,val_c_index";

pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut s = format!("{HISTORY_HEADER}\n");
    for r in history {
        let val = r.val_c_index.map(|c| c.to_string()).unwrap_or_default();
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.epoch, r.lr, r.loss, r.likelihood, r.pairwise, r.calibration, val
        );
    }
    s
}

#[derive(Debug, Clone)]
pub struct TrainState {
    pub params: ModelParams,
    /// One buffer per trainable tensor.
    pub velocity: Vec<Vec<f64>>,
    /// Completed epochs.
    pub epoch: usize,
    pub best_c_index: Option<f64>,
    pub best_epoch: Option<usize>,
    pub best_params: ModelParams,
    pub history: Vec<EpochRecord>,
}

impl TrainState {
    pub fn new(params: ModelParams) -> Self {
        let velocity = params.trainable().iter().map(|(_, t)| vec![0.0; t.len()]).collect();
        Self {
            best_params: params.clone(),
            params,
            velocity,
            epoch: 0,
            best_c_index: None,
            best_epoch: None,
            history: Vec::new(),
        }
    }

    /// Keep the current params if `c` beats every earlier score. Ties keep
    /// the earlier snapshot.
    pub fn record_validation(&mut self, epoch: usize, c: f64) {
        if self.best_c_index.is_none_or(|best| c > best) {
            self.best_c_index = Some(c);
            self.best_epoch = Some(epoch);
            self.best_params = self.params.clone();
        }
    }
}

pub fn features_matrix(batch: &[BinnedSample]) -> Result<Matrix> {
    let rows: Vec<&[f64]> = batch.iter().map(|s| s.features.as_slice()).collect();
    Matrix::from_rows(&rows)
}

fn epoch_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    rng
}

/// Objective and parameter gradients for one training-mode batch.
#[derive(Debug, Clone)]
pub struct BatchStep {
    pub loss: TripleSurvLoss,
    pub grads: ParamGrads,
    pub cache: ForwardCache,
}

/// Training-mode forward pass, head, loss, then the chain rule back
/// through the head and the network. `dropout_seed` fixes the mask.
pub fn loss_and_grads(
    params: &ModelParams,
    batch: &[BinnedSample],
    weights: &LossWeights,
    dropout_seed: u64,
) -> Result<BatchStep> {
    let head = params.config.head;
    let x = features_matrix(batch)?;
    let (out, cache) = forward(params, &x, Mode::Train, dropout_seed)?;
    let cache = cache.expect("training forward returns a cache");
    let pmfs = out.iter_rows().map(|r| head.pmf(r)).collect::<Result<Vec<Pmf>>>()?;
    let loss = triplesurv_loss(&pmfs, batch, weights)?;
    let mut grad_out = Matrix::zeros(out.rows(), out.cols());
    for (r, pmf) in pmfs.iter().enumerate() {
        grad_out.row_mut(r).copy_from_slice(&head.backward(pmf, loss.grad.row(r)));
    }
    let grads = backward(params, &cache, &grad_out)?;
    Ok(BatchStep { loss, grads, cache })
}

/// Run one pass over `data` in a shuffled order fixed by
/// `(config.seed, state.epoch)`, then append a record to the history.
pub fn train_epoch(
    state: &mut TrainState,
    data: &[BinnedSample],
    weights: &LossWeights,
    config: &TrainConfig,
) -> Result<()> {
    config.validate()?;
    let mut rng = epoch_rng(config.seed, state.epoch);
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut rng);
    let lr = cosine_lr(state.epoch, config.epochs, config.lr_init);
    let mut sums = [0.0; 4];
    let mut batches = 0;
    let mut dropped = 0;
    for chunk in order.chunks(config.batch_size) {
        if chunk.len() < 2 {
            dropped += chunk.len();
            continue;
        }
        let batch: Vec<BinnedSample> = chunk.iter().map(|&i| data[i].clone()).collect();
        let step = loss_and_grads(&state.params, &batch, weights, rng.next_u64())?;
        if !step.loss.value.is_finite() {
            return Err(Error::NonFinite(format!(
                "loss at epoch {} batch {batches}",
                state.epoch + 1
            )));
        }
        sgd_step(
            &mut state.params,
            &mut state.velocity,
            &step.grads,
            lr,
            config.momentum,
            config.weight_decay,
        )?;
        state.params.update_running_stats(&step.cache);

        let c = step.loss.components;
        for (acc, v) in sums.iter_mut().zip([step.loss.value, c.likelihood, c.pairwise, c.calibration]) {
            *acc += v;
        }
        batches += 1;
    }
    if batches == 0 {
        return Err(Error::Empty("no trainable batch (need at least 2 samples)".into()));
    }
    let mean = sums.map(|s| s / batches as f64);
    state.epoch += 1;
    state.history.push(EpochRecord {
        epoch: state.epoch,
        lr,
        loss: mean[0],
        likelihood: mean[1],
        pairwise: mean[2],
        calibration: mean[3],
        batches,
        dropped,
        val_c_index: None,
    });
    Ok(())
}

/// Eval-mode C-index of `params` on `data` (raw observed times).
pub fn validation_c_index(params: &ModelParams, data: &SurvivalDataset) -> Result<f64> {
    let rows: Vec<&[f64]> = data.samples.iter().map(|s| s.features.as_slice()).collect();
    let risks = predict_risks(params, &Matrix::from_rows(&rows)?)?;
    c_index(&risks, &data.times(), &data.events())
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub best_params: ModelParams,
    /// 1-based epoch of the snapshot; `None` when no epoch ran.
    pub best_epoch: Option<usize>,
    pub best_c_index: Option<f64>,
    pub history: Vec<EpochRecord>,
}

fn shared_grid<'a>(train: &'a SurvivalDataset, val: &SurvivalDataset) -> Result<&'a TimeGrid> {
    match (&train.grid, &val.grid) {
        (Some(a), Some(b)) if a == b => Ok(a),
        (Some(_), Some(_)) => Err(Error::Config(
            "validation data is binned on a different grid than training".into(),
        )),
        _ => Err(Error::Config("train and validation data must carry the training grid".into())),
    }
}

/// Train for `config.epochs` epochs, scoring the validation set every
/// `eval_every` epochs and after the last one, and return the best
/// snapshot.
///
/// Both datasets must carry the grid built from the training set.
pub fn fit(
    train: &SurvivalDataset,
    val: &SurvivalDataset,
    model: &ModelConfig,
    weights: &LossWeights,
    config: &TrainConfig,
) -> Result<FitResult> {
    config.validate()?;
    weights.validate()?;
    model.validate()?;
    let grid = shared_grid(train, val)?;
    if grid.k_bins != model.k_bins {
        return Err(Error::Config(format!(
            "grid has {} bins, model expects {}",
            grid.k_bins, model.k_bins
        )));
    }
    let binned = bin_samples(&train.samples, grid);
    let mut state = TrainState::new(init_params(model, config.seed)?);
    while state.epoch < config.epochs {
        train_epoch(&mut state, &binned, weights, config)?;
        let epoch = state.epoch;
        if epoch.is_multiple_of(config.eval_every) || epoch == config.epochs {
            let c = validation_c_index(&state.params, val)?;
            state.history.last_mut().expect("epoch just logged").val_c_index = Some(c);
            state.record_validation(epoch, c);
        }
    }
    Ok(FitResult {
        best_params: state.best_params,
        best_epoch: state.best_epoch,
        best_c_index: state.best_c_index,
        history: state.history,
    })
}
