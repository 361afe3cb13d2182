//! Flat `key = value` configuration files with typed parsing and
//! unknown-key rejection.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{IsacError, Result};
use crate::isacnn::train::TrainConfig;
use crate::scene::SystemConfig;

/// Parsed key/value file. Keys are consumed by `take_*`; any key left over
/// at `finish` is an error, so typos never pass silently.
#[derive(Debug, Clone, Default)]
pub struct KvFile {
    map: BTreeMap<String, String>,
}

impl KvFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(IsacError::Config(format!(
                    "line {}: expected 'key = value', got '{raw}'",
                    lineno + 1
                )));
            };
            let key = key.trim().to_string();
            if key.is_empty() {
                return Err(IsacError::Config(format!("line {}: empty key", lineno + 1)));
            }
            if map.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(IsacError::Config(format!("duplicate key '{key}'")));
            }
        }
        Ok(Self { map })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn take(&mut self, key: &str) -> Option<String> {
        self.map.remove(key)
    }

    pub fn take_f64(&mut self, key: &str) -> Result<Option<f64>> {
        self.take(key)
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|_| IsacError::Config(format!("key '{key}': '{v}' is not a number")))
            })
            .transpose()
    }

    pub fn take_usize(&mut self, key: &str) -> Result<Option<usize>> {
        self.take(key)
            .map(|v| {
                v.parse::<usize>().map_err(|_| {
                    IsacError::Config(format!("key '{key}': '{v}' is not a nonnegative integer"))
                })
            })
            .transpose()
    }

    pub fn take_u64(&mut self, key: &str) -> Result<Option<u64>> {
        self.take(key)
            .map(|v| {
                v.parse::<u64>().map_err(|_| {
                    IsacError::Config(format!("key '{key}': '{v}' is not a nonnegative integer"))
                })
            })
            .transpose()
    }

    /// Comma-separated floats.
    pub fn take_f64_list(&mut self, key: &str) -> Result<Option<Vec<f64>>> {
        match self.take(key) {
            None => Ok(None),
            Some(v) => {
                let mut out = Vec::new();
                for part in v.split(',') {
                    let part = part.trim();
                    if part.is_empty() {
                        continue;
                    }
                    out.push(part.parse::<f64>().map_err(|_| {
                        IsacError::Config(format!("key '{key}': '{part}' is not a number"))
                    })?);
                }
                Ok(Some(out))
            }
        }
    }

    pub fn take_string_list(&mut self, key: &str) -> Option<Vec<String>> {
        self.take(key).map(|v| {
            v.split(',')
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .collect()
        })
    }

    /// Errors if any unconsumed keys remain.
    pub fn finish(self) -> Result<()> {
        if let Some(key) = self.map.keys().next() {
            return Err(IsacError::Config(format!("unknown key '{key}'")));
        }
        Ok(())
    }

    /// Consumes the scene/system keys, leaving any others in place.
    pub fn apply_system_config(&mut self, cfg: &mut SystemConfig) -> Result<()> {
        if let Some(v) = self.take_usize("n_tx")? {
            cfg.n_tx = v;
        }
        if let Some(v) = self.take_usize("n_rx")? {
            cfg.n_rx = v;
        }
        if let Some(v) = self.take_usize("n_cu")? {
            cfg.n_cu = v;
        }
        if let Some(v) = self.take_usize("wave_len")? {
            cfg.wave_len = v;
        }
        if let Some(v) = self.take_f64("alpha")? {
            cfg.alpha = v;
        }
        if let Some(v) = self.take_f64("snr_s_db")? {
            cfg.snr_s_db = v;
        }
        if let Some(v) = self.take_f64("snr_c_db")? {
            cfg.snr_c_db = v;
        }
        if let Some(v) = self.take_f64("cell_radius_km")? {
            cfg.cell_radius_km = v;
        }
        if let Some(v) = self.take_f64("noise_power")? {
            cfg.noise_power = v;
        }
        if let Some(v) = self.take_f64("csi_accuracy")? {
            cfg.csi_accuracy = v;
        }
        if let Some(v) = self.take_u64("seed")? {
            cfg.seed = v;
        }
        Ok(())
    }

    /// Consumes the training keys, leaving any others in place.
    pub fn apply_train_config(&mut self, cfg: &mut TrainConfig) -> Result<()> {
        if let Some(v) = self.take_f64("lr_init")? {
            cfg.lr_init = v;
        }
        if let Some(v) = self.take_usize("max_epochs")? {
            cfg.max_epochs = v;
        }
        if let Some(v) = self.take_usize("batch_size")? {
            cfg.batch_size = v;
        }
        if let Some(v) = self.take_usize("early_stop_patience")? {
            cfg.early_stop_patience = v;
        }
        if let Some(v) = self.take_usize("plateau_patience")? {
            cfg.plateau_patience = v;
        }
        if let Some(v) = self.take_f64("plateau_factor")? {
            cfg.plateau_factor = v;
        }
        if let Some(v) = self.take_f64("val_split")? {
            cfg.val_split = v;
        }
        if let Some(v) = self.take_f64("min_delta")? {
            cfg.min_delta = v;
        }
        if let Some(v) = self.take_f64("beta1")? {
            cfg.beta1 = v;
        }
        if let Some(v) = self.take_f64("beta2")? {
            cfg.beta2 = v;
        }
        if let Some(v) = self.take_f64("adam_eps")? {
            cfg.adam_eps = v;
        }
        if let Some(v) = self.take_u64("train_seed")? {
            cfg.seed = v;
        }
        Ok(())
    }
}

/// Loads a system configuration file over the built-in defaults.
pub fn load_system_config(path: &Path) -> Result<SystemConfig> {
    let mut kv = KvFile::load(path)?;
    let mut cfg = SystemConfig::default();
    kv.apply_system_config(&mut cfg)?;
    kv.finish()?;
    cfg.validate()?;
    Ok(cfg)
}

/// Loads a training configuration file over the protocol defaults. The file
/// may also contain system keys (ignored here only if absent); unknown keys
/// are rejected.
pub fn load_train_config(path: &Path) -> Result<TrainConfig> {
    let mut kv = KvFile::load(path)?;
    let mut cfg = TrainConfig::default();
    kv.apply_train_config(&mut cfg)?;
    kv.finish()?;
    cfg.validate()?;
    Ok(cfg)
}
