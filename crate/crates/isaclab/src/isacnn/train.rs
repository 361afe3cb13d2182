//! Adam optimiser and the unsupervised training loop with validation-driven
//! learning-rate decay and early stopping.

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;

use crate::error::{IsacError, Result};
use crate::scene::{build_features, Dataset};

use super::layers::Mode;
use super::loss::{lambda_backward, lambda_forward, SceneEval};
use super::network::{ArchKind, Network, STREAM_SHUFFLE};
use crate::scene::derive_rng;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr_init: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub early_stop_patience: usize,
    pub plateau_patience: usize,
    pub plateau_factor: f64,
    pub val_split: f64,
    pub min_delta: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr_init: 1e-3,
            max_epochs: 500,
            batch_size: 256,
            early_stop_patience: 20,
            plateau_patience: 10,
            plateau_factor: 0.33,
            val_split: 0.2,
            min_delta: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.val_split) {
            return Err(IsacError::Config("val_split must be in [0, 1)".into()));
        }
        if self.lr_init <= 0.0 || self.batch_size == 0 || self.max_epochs == 0 {
            return Err(IsacError::Config(
                "lr_init, batch_size and max_epochs must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.plateau_factor) || self.plateau_factor == 0.0 {
            return Err(IsacError::Config("plateau_factor must be in (0, 1)".into()));
        }
        Ok(())
    }
}

/// First-moment/second-moment optimiser state over the flattened trainable
/// parameters, in network traversal order.
#[derive(Debug, Clone)]
pub struct Adam {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl Adam {
    pub fn new(param_count: usize, cfg: &TrainConfig) -> Self {
        Self {
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            t: 0,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.adam_eps,
        }
    }

    pub fn step(&mut self, net: &mut Network, lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let mut pos = 0;
        for layer in net.layers_mut() {
            for (p, g) in layer.param_grad_pairs() {
                for (pi, gi) in p.iter_mut().zip(g.iter()) {
                    let m = &mut self.m[pos];
                    let v = &mut self.v[pos];
                    *m = self.beta1 * *m + (1.0 - self.beta1) * gi;
                    *v = self.beta2 * *v + (1.0 - self.beta2) * gi * gi;
                    let m_hat = *m / bc1;
                    let v_hat = *v / bc2;
                    *pi -= lr * m_hat / (v_hat.sqrt() + self.eps);
                    pos += 1;
                }
            }
        }
        debug_assert_eq!(pos, self.m.len());
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr: f64,
}

/// Mutable optimiser/progress state; checkpointing it (plus the network
/// state vector) allows exact resumption.
#[derive(Debug, Clone)]
pub struct TrainState {
    /// Next epoch index to run (0-based).
    pub epoch: usize,
    pub adam: Adam,
    pub lr: f64,
    pub best_val: f64,
    pub best_epoch: usize,
    pub epochs_since_improve: usize,
    pub epochs_since_plateau: usize,
    pub best_state: Vec<f64>,
    pub history: Vec<EpochRecord>,
    pub stopped_early: bool,
}

impl TrainState {
    pub fn new(net: &Network, cfg: &TrainConfig) -> Self {
        let mut probe = net.clone();
        let count = probe.trainable_param_count();
        Self {
            epoch: 0,
            adam: Adam::new(count, cfg),
            lr: cfg.lr_init,
            best_val: f64::INFINITY,
            best_epoch: 0,
            epochs_since_improve: 0,
            epochs_since_plateau: 0,
            best_state: net.state_vec(),
            history: Vec::new(),
            stopped_early: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainRun {
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
}

/// Feature rows and per-scene loss caches for one dataset.
pub struct TrainingData {
    pub features: Array2<f64>,
    pub evals: Vec<SceneEval>,
    pub n_train: usize,
}

impl TrainingData {
    pub fn prepare(dataset: &Dataset, val_split: f64) -> Result<Self> {
        let n = dataset.samples.len();
        if n < 2 {
            return Err(IsacError::Config("need at least two samples to train".into()));
        }
        let width = dataset.config.feature_len();
        let mut features = Array2::zeros((n, width));
        let mut evals = Vec::with_capacity(n);
        for (i, scene) in dataset.samples.iter().enumerate() {
            let f = build_features(scene);
            for (j, v) in f.values.iter().enumerate() {
                features[(i, j)] = *v;
            }
            evals.push(SceneEval::new(scene)?);
        }
        let n_val = ((n as f64) * val_split).round() as usize;
        let n_train = n - n_val;
        if n_train == 0 || n_val == 0 {
            return Err(IsacError::Config(
                "validation split leaves an empty train or validation set".into(),
            ));
        }
        Ok(Self { features, evals, n_train })
    }
}

/// Trains a fresh network on the dataset. Returns the network restored to
/// its best-validation parameters, plus the per-epoch history.
pub fn train(
    dataset: &Dataset,
    arch: ArchKind,
    alpha: f64,
    cfg: &TrainConfig,
) -> Result<(Network, TrainRun)> {
    cfg.validate()?;
    let mut net = Network::new(arch, dataset.config.feature_len(), dataset.config.n_tx, cfg.seed);
    let mut state = TrainState::new(&net, cfg);
    let data = TrainingData::prepare(dataset, cfg.val_split)?;
    run_training(&mut net, &mut state, &data, alpha, cfg, None, &mut |_| {})?;
    finish(&mut net, &state)?;
    Ok((
        net,
        TrainRun {
            history: state.history.clone(),
            best_epoch: state.best_epoch,
            best_val_loss: state.best_val,
            stopped_early: state.stopped_early,
        },
    ))
}

/// Restores the best-validation snapshot into the live network.
pub fn finish(net: &mut Network, state: &TrainState) -> Result<()> {
    net.load_state_vec(&state.best_state)
}

/// Runs up to `stop_after` further epochs (all remaining when None),
/// invoking `on_epoch` after each epoch completes. The network is left at
/// its last-epoch parameters; use [`finish`] to restore the best snapshot.
pub fn run_training(
    net: &mut Network,
    state: &mut TrainState,
    data: &TrainingData,
    alpha: f64,
    cfg: &TrainConfig,
    stop_after: Option<usize>,
    on_epoch: &mut dyn FnMut(&EpochRecord),
) -> Result<()> {
    cfg.validate()?;
    let n_train = data.n_train;
    let n_val = data.evals.len() - n_train;
    let mut ran = 0usize;
    while state.epoch < cfg.max_epochs && !state.stopped_early {
        if let Some(limit) = stop_after {
            if ran >= limit {
                break;
            }
        }
        let epoch = state.epoch;
        let mut order: Vec<usize> = (0..n_train).collect();
        let mut rng = derive_rng(cfg.seed, STREAM_SHUFFLE, epoch as u64);
        order.shuffle(&mut rng);

        let mut train_loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            train_loss_sum += train_batch(net, state, data, batch, alpha)?;
        }
        let train_loss = train_loss_sum / n_train as f64;
        let val_idx: Vec<usize> = (n_train..n_train + n_val).collect();
        let val_loss = eval_loss(net, data, &val_idx, alpha, cfg.batch_size)?;
        if !train_loss.is_finite() || !val_loss.is_finite() {
            return Err(IsacError::Numeric(format!(
                "non-finite loss at epoch {epoch}: train {train_loss}, val {val_loss}"
            )));
        }

        if val_loss < state.best_val - cfg.min_delta {
            state.best_val = val_loss;
            state.best_epoch = epoch;
            state.best_state = net.state_vec();
            state.epochs_since_improve = 0;
            state.epochs_since_plateau = 0;
        } else {
            state.epochs_since_improve += 1;
            state.epochs_since_plateau += 1;
        }
        if state.epochs_since_plateau >= cfg.plateau_patience {
            state.lr *= cfg.plateau_factor;
            state.epochs_since_plateau = 0;
        }
        if state.epochs_since_improve >= cfg.early_stop_patience {
            state.stopped_early = true;
        }

        let record = EpochRecord { epoch, train_loss, val_loss, lr: state.lr };
        state.history.push(record.clone());
        on_epoch(&record);
        state.epoch += 1;
        ran += 1;
    }
    Ok(())
}

/// One optimiser step; returns the summed (not averaged) sample losses.
fn train_batch(
    net: &mut Network,
    state: &mut TrainState,
    data: &TrainingData,
    batch: &[usize],
    alpha: f64,
) -> Result<f64> {
    let b = batch.len();
    let width = data.features.shape()[1];
    let mut x = Array2::zeros((b, width));
    for (r, &i) in batch.iter().enumerate() {
        x.row_mut(r).assign(&data.features.row(i));
    }
    let pass = net.forward(&x, Mode::Train)?;

    let n_tx = pass.theta.shape()[1];
    let mut d_theta = Array2::zeros((b, n_tx));
    let mut d_eta = Array1::zeros(b);
    let mut loss_sum = 0.0;
    for (r, &i) in batch.iter().enumerate() {
        let eval = &data.evals[i];
        let theta_row: Vec<f64> = pass.theta.row(r).to_vec();
        let (sigma, cache) = lambda_forward(&theta_row, pass.eta[r], eval.scene.sense_power)?;
        let (wsnr, grad) = eval.wsnr_and_grad(&sigma, alpha);
        loss_sum += -wsnr;
        // d loss / d sigma for the batch-mean loss.
        let d_sigma: Vec<f64> = grad.iter().map(|g| -g / b as f64).collect();
        let (dt, de) = lambda_backward(&cache, &d_sigma);
        for (c, v) in dt.into_iter().enumerate() {
            d_theta[(r, c)] = v;
        }
        d_eta[r] = de;
    }

    net.zero_grads();
    net.backward(&pass, &d_theta, &d_eta);
    state.adam.step(net, state.lr);
    Ok(loss_sum)
}

/// Mean loss over the given sample indices in inference mode.
pub fn eval_loss(
    net: &mut Network,
    data: &TrainingData,
    indices: &[usize],
    alpha: f64,
    batch_size: usize,
) -> Result<f64> {
    let width = data.features.shape()[1];
    let mut total = 0.0;
    for chunk in indices.chunks(batch_size.max(1)) {
        let mut x = Array2::zeros((chunk.len(), width));
        for (r, &i) in chunk.iter().enumerate() {
            x.row_mut(r).assign(&data.features.row(i));
        }
        let pass = net.forward(&x, Mode::Infer)?;
        for (r, &i) in chunk.iter().enumerate() {
            let eval = &data.evals[i];
            let theta_row: Vec<f64> = pass.theta.row(r).to_vec();
            let (sigma, _) = lambda_forward(&theta_row, pass.eta[r], eval.scene.sense_power)?;
            total += -eval.wsnr(&sigma, alpha);
        }
    }
    Ok(total / indices.len() as f64)
}
