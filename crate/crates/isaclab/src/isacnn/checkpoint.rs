//! Binary checkpoints carrying the full network and optimiser state, so an
//! interrupted run resumes bit-for-bit identically.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{IsacError, Result};

use super::network::{ArchKind, Network};
use super::train::{Adam, EpochRecord, TrainConfig, TrainState};

const MAGIC: &[u8; 8] = b"ISACNNCK";
const VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub arch: ArchKind,
    pub input_len: usize,
    pub n_tx: usize,
    pub alpha: f64,
    pub config: TrainConfig,
    /// Live network state (parameters + batch-norm running stats).
    pub net_state: Vec<f64>,
    pub epoch: usize,
    pub lr: f64,
    pub best_val: f64,
    pub best_epoch: usize,
    pub epochs_since_improve: usize,
    pub epochs_since_plateau: usize,
    pub stopped_early: bool,
    pub adam_t: u64,
    pub adam_m: Vec<f64>,
    pub adam_v: Vec<f64>,
    pub best_state: Vec<f64>,
    pub history: Vec<EpochRecord>,
}

impl Checkpoint {
    pub fn capture(net: &Network, state: &TrainState, cfg: &TrainConfig, alpha: f64) -> Self {
        Self {
            arch: net.arch,
            input_len: net.input_len,
            n_tx: net.n_tx,
            alpha,
            config: cfg.clone(),
            net_state: net.state_vec(),
            epoch: state.epoch,
            lr: state.lr,
            best_val: state.best_val,
            best_epoch: state.best_epoch,
            epochs_since_improve: state.epochs_since_improve,
            epochs_since_plateau: state.epochs_since_plateau,
            stopped_early: state.stopped_early,
            adam_t: state.adam.t,
            adam_m: state.adam.m.clone(),
            adam_v: state.adam.v.clone(),
            best_state: state.best_state.clone(),
            history: state.history.clone(),
        }
    }

    /// Rebuilds the live network and optimiser state.
    pub fn restore(&self) -> Result<(Network, TrainState)> {
        let mut net = Network::new(self.arch, self.input_len, self.n_tx, self.config.seed);
        net.load_state_vec(&self.net_state)?;
        let mut adam = Adam::new(self.adam_m.len(), &self.config);
        adam.t = self.adam_t;
        adam.m = self.adam_m.clone();
        adam.v = self.adam_v.clone();
        let state = TrainState {
            epoch: self.epoch,
            adam,
            lr: self.lr,
            best_val: self.best_val,
            best_epoch: self.best_epoch,
            epochs_since_improve: self.epochs_since_improve,
            epochs_since_plateau: self.epochs_since_plateau,
            best_state: self.best_state.clone(),
            history: self.history.clone(),
            stopped_early: self.stopped_early,
        };
        Ok((net, state))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(MAGIC)?;
        put_u32(&mut w, VERSION)?;
        put_u32(&mut w, match self.arch {
            ArchKind::Cnn => 0,
            ArchKind::Fcnn => 1,
        })?;
        put_u64(&mut w, self.input_len as u64)?;
        put_u64(&mut w, self.n_tx as u64)?;
        put_f64(&mut w, self.alpha)?;
        let c = &self.config;
        put_f64(&mut w, c.lr_init)?;
        put_u64(&mut w, c.max_epochs as u64)?;
        put_u64(&mut w, c.batch_size as u64)?;
        put_u64(&mut w, c.early_stop_patience as u64)?;
        put_u64(&mut w, c.plateau_patience as u64)?;
        put_f64(&mut w, c.plateau_factor)?;
        put_f64(&mut w, c.val_split)?;
        put_f64(&mut w, c.min_delta)?;
        put_f64(&mut w, c.beta1)?;
        put_f64(&mut w, c.beta2)?;
        put_f64(&mut w, c.adam_eps)?;
        put_u64(&mut w, c.seed)?;
        put_vec(&mut w, &self.net_state)?;
        put_u64(&mut w, self.epoch as u64)?;
        put_f64(&mut w, self.lr)?;
        put_f64(&mut w, self.best_val)?;
        put_u64(&mut w, self.best_epoch as u64)?;
        put_u64(&mut w, self.epochs_since_improve as u64)?;
        put_u64(&mut w, self.epochs_since_plateau as u64)?;
        put_u64(&mut w, self.stopped_early as u64)?;
        put_u64(&mut w, self.adam_t)?;
        put_vec(&mut w, &self.adam_m)?;
        put_vec(&mut w, &self.adam_v)?;
        put_vec(&mut w, &self.best_state)?;
        put_u64(&mut w, self.history.len() as u64)?;
        for rec in &self.history {
            put_u64(&mut w, rec.epoch as u64)?;
            put_f64(&mut w, rec.train_loss)?;
            put_f64(&mut w, rec.val_loss)?;
            put_f64(&mut w, rec.lr)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(IsacError::Format("not a checkpoint file".into()));
        }
        let version = get_u32(&mut r)?;
        if version != VERSION {
            return Err(IsacError::Format(format!("unsupported checkpoint version {version}")));
        }
        let arch = match get_u32(&mut r)? {
            0 => ArchKind::Cnn,
            1 => ArchKind::Fcnn,
            other => return Err(IsacError::Format(format!("unknown architecture tag {other}"))),
        };
        let input_len = get_u64(&mut r)? as usize;
        let n_tx = get_u64(&mut r)? as usize;
        let alpha = get_f64(&mut r)?;
        let config = TrainConfig {
            lr_init: get_f64(&mut r)?,
            max_epochs: get_u64(&mut r)? as usize,
            batch_size: get_u64(&mut r)? as usize,
            early_stop_patience: get_u64(&mut r)? as usize,
            plateau_patience: get_u64(&mut r)? as usize,
            plateau_factor: get_f64(&mut r)?,
            val_split: get_f64(&mut r)?,
            min_delta: get_f64(&mut r)?,
            beta1: get_f64(&mut r)?,
            beta2: get_f64(&mut r)?,
            adam_eps: get_f64(&mut r)?,
            seed: get_u64(&mut r)?,
        };
        let net_state = get_vec(&mut r)?;
        let epoch = get_u64(&mut r)? as usize;
        let lr = get_f64(&mut r)?;
        let best_val = get_f64(&mut r)?;
        let best_epoch = get_u64(&mut r)? as usize;
        let epochs_since_improve = get_u64(&mut r)? as usize;
        let epochs_since_plateau = get_u64(&mut r)? as usize;
        let stopped_early = get_u64(&mut r)? != 0;
        let adam_t = get_u64(&mut r)?;
        let adam_m = get_vec(&mut r)?;
        let adam_v = get_vec(&mut r)?;
        let best_state = get_vec(&mut r)?;
        let n_hist = get_u64(&mut r)? as usize;
        let mut history = Vec::with_capacity(n_hist);
        for _ in 0..n_hist {
            history.push(EpochRecord {
                epoch: get_u64(&mut r)? as usize,
                train_loss: get_f64(&mut r)?,
                val_loss: get_f64(&mut r)?,
                lr: get_f64(&mut r)?,
            });
        }
        Ok(Self {
            arch,
            input_len,
            n_tx,
            alpha,
            config,
            net_state,
            epoch,
            lr,
            best_val,
            best_epoch,
            epochs_since_improve,
            epochs_since_plateau,
            stopped_early,
            adam_t,
            adam_m,
            adam_v,
            best_state,
            history,
        })
    }
}

fn put_u32<W: Write>(w: &mut W, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn put_u64<W: Write>(w: &mut W, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn put_f64<W: Write>(w: &mut W, v: f64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn put_vec<W: Write>(w: &mut W, v: &[f64]) -> Result<()> {
    put_u64(w, v.len() as u64)?;
    for x in v {
        put_f64(w, *x)?;
    }
    Ok(())
}

fn get_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn get_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn get_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn get_vec<R: Read>(r: &mut R) -> Result<Vec<f64>> {
    let n = get_u64(r)? as usize;
    if n > (1 << 30) {
        return Err(IsacError::Format("implausible vector length".into()));
    }
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(get_f64(r)?);
    }
    Ok(out)
}
