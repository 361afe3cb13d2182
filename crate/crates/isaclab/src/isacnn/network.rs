//! Two-headed network: a shared trunk feeding a spectrum-shape head and a
//! power-scale head, each ending in a sigmoid.

use ndarray::{Array1, Array2, Axis};
use rand_chacha::ChaCha12Rng;

use crate::error::{IsacError, Result};
use crate::scene::derive_rng;

use super::layers::{expect_width, Act, BatchNorm, Cache, Conv1d, Fc, Layer, Mode};

/// RNG stream reserved for weight initialisation.
pub const STREAM_INIT: u64 = 2;
/// RNG stream reserved for per-epoch shuffling (index = epoch).
pub const STREAM_SHUFFLE: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArchKind {
    /// Convolutional trunk.
    Cnn,
    /// Fully-connected trunk of the same depth, used as a capacity baseline.
    Fcnn,
}

impl ArchKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cnn" => Ok(ArchKind::Cnn),
            "fcnn" => Ok(ArchKind::Fcnn),
            other => Err(IsacError::Config(format!(
                "unknown architecture '{other}' (expected cnn or fcnn)"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ArchKind::Cnn => "cnn",
            ArchKind::Fcnn => "fcnn",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Network {
    pub arch: ArchKind,
    pub input_len: usize,
    pub n_tx: usize,
    pub trunk: Vec<Layer>,
    pub head_theta: Vec<Layer>,
    pub head_eta: Vec<Layer>,
}

/// Forward outputs plus the caches needed to run the backward pass.
pub struct ForwardPass {
    /// [batch, n_tx] raw spectrum-shape outputs in (0, 1).
    pub theta: Array2<f64>,
    /// [batch] power-scale outputs in (0, 1).
    pub eta: Array1<f64>,
    trunk_caches: Vec<Cache>,
    theta_caches: Vec<Cache>,
    eta_caches: Vec<Cache>,
}

impl Network {
    pub fn new(arch: ArchKind, input_len: usize, n_tx: usize, seed: u64) -> Self {
        let mut rng = derive_rng(seed, STREAM_INIT, 0);
        match arch {
            ArchKind::Cnn => Self::build_cnn(input_len, n_tx, &mut rng),
            ArchKind::Fcnn => Self::build_fcnn(input_len, n_tx, &mut rng),
        }
    }

    fn build_cnn(input_len: usize, n_tx: usize, rng: &mut ChaCha12Rng) -> Self {
        let trunk = vec![
            Layer::BatchNorm(BatchNorm::new(1)),
            Layer::Conv1d(Conv1d::new(1, 2, 5, rng)),
            Layer::Relu,
            Layer::BatchNorm(BatchNorm::new(2)),
            Layer::Conv1d(Conv1d::new(2, 4, 3, rng)),
            Layer::Relu,
            Layer::BatchNorm(BatchNorm::new(4)),
            Layer::Conv1d(Conv1d::new(4, 8, 3, rng)),
            Layer::Relu,
            Layer::Flatten,
        ];
        let width = 8 * input_len;
        let head_theta = vec![
            Layer::BatchNorm(BatchNorm::new(width)),
            Layer::Fc(Fc::new(width, n_tx, rng)),
            Layer::Sigmoid,
        ];
        let head_eta = vec![
            Layer::BatchNorm(BatchNorm::new(width)),
            Layer::Fc(Fc::new(width, 1, rng)),
            Layer::Sigmoid,
        ];
        Self { arch: ArchKind::Cnn, input_len, n_tx, trunk, head_theta, head_eta }
    }

    fn build_fcnn(input_len: usize, n_tx: usize, rng: &mut ChaCha12Rng) -> Self {
        let widths = [8 * n_tx, 4 * n_tx, 2 * n_tx];
        let mut trunk = Vec::new();
        let mut prev = input_len;
        for w in widths {
            trunk.push(Layer::BatchNorm(BatchNorm::new(prev)));
            trunk.push(Layer::Fc(Fc::new(prev, w, rng)));
            trunk.push(Layer::Relu);
            prev = w;
        }
        let head_theta = vec![
            Layer::BatchNorm(BatchNorm::new(prev)),
            Layer::Fc(Fc::new(prev, n_tx, rng)),
            Layer::Sigmoid,
        ];
        let head_eta = vec![
            Layer::BatchNorm(BatchNorm::new(prev)),
            Layer::Fc(Fc::new(prev, 1, rng)),
            Layer::Sigmoid,
        ];
        Self { arch: ArchKind::Fcnn, input_len, n_tx, trunk, head_theta, head_eta }
    }

    /// Runs a batch of feature rows [batch, input_len] through the network.
    pub fn forward(&mut self, features: &Array2<f64>, mode: Mode) -> Result<ForwardPass> {
        expect_width(&Act::Flat(features.clone()), self.input_len)?;
        let batch = features.shape()[0];
        let mut x = match self.arch {
            ArchKind::Cnn => Act::Seq(
                features
                    .clone()
                    .insert_axis(Axis(1)), // [batch, 1, input_len]
            ),
            ArchKind::Fcnn => Act::Flat(features.clone()),
        };
        let mut trunk_caches = Vec::with_capacity(self.trunk.len());
        for layer in &mut self.trunk {
            let (y, cache) = layer.forward(&x, mode);
            trunk_caches.push(cache);
            x = y;
        }
        let shared = x;

        let run_head = |layers: &mut Vec<Layer>| -> (Act, Vec<Cache>) {
            let mut h = shared.clone();
            let mut caches = Vec::with_capacity(layers.len());
            for layer in layers.iter_mut() {
                let (y, cache) = layer.forward(&h, mode);
                caches.push(cache);
                h = y;
            }
            (h, caches)
        };
        let (theta_act, theta_caches) = run_head(&mut self.head_theta);
        let (eta_act, eta_caches) = run_head(&mut self.head_eta);

        let Act::Flat(theta) = theta_act else { unreachable!() };
        let Act::Flat(eta2) = eta_act else { unreachable!() };
        debug_assert_eq!(theta.shape(), &[batch, self.n_tx]);
        debug_assert_eq!(eta2.shape(), &[batch, 1]);
        Ok(ForwardPass {
            theta,
            eta: eta2.column(0).to_owned(),
            trunk_caches,
            theta_caches,
            eta_caches,
        })
    }

    /// Accumulates parameter gradients from output cotangents.
    /// `d_theta` is [batch, n_tx]; `d_eta` is [batch].
    pub fn backward(&mut self, pass: &ForwardPass, d_theta: &Array2<f64>, d_eta: &Array1<f64>) {
        let back_head = |layers: &mut Vec<Layer>, caches: &[Cache], dy: Act| -> Act {
            let mut g = dy;
            for (layer, cache) in layers.iter_mut().zip(caches.iter()).rev() {
                g = layer.backward(&g, cache);
            }
            g
        };
        let g_theta = back_head(
            &mut self.head_theta,
            &pass.theta_caches,
            Act::Flat(d_theta.clone()),
        );
        let g_eta = back_head(
            &mut self.head_eta,
            &pass.eta_caches,
            Act::Flat(d_eta.clone().insert_axis(Axis(1))),
        );
        let mut g = add_acts(&g_theta, &g_eta);
        for (layer, cache) in self.trunk.iter_mut().zip(pass.trunk_caches.iter()).rev() {
            g = layer.backward(&g, cache);
        }
    }

    pub fn layers_mut(&mut self) -> impl Iterator<Item = &mut Layer> {
        self.trunk
            .iter_mut()
            .chain(self.head_theta.iter_mut())
            .chain(self.head_eta.iter_mut())
    }

    pub fn layers(&self) -> impl Iterator<Item = &Layer> {
        self.trunk
            .iter()
            .chain(self.head_theta.iter())
            .chain(self.head_eta.iter())
    }

    pub fn zero_grads(&mut self) {
        for layer in self.layers_mut() {
            layer.zero_grads();
        }
    }

    /// Flattens trainable parameters and batch-norm running statistics.
    pub fn state_vec(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for layer in self.layers() {
            for s in layer.state_slices() {
                out.extend_from_slice(s);
            }
        }
        out
    }

    pub fn load_state_vec(&mut self, state: &[f64]) -> Result<()> {
        let mut pos = 0;
        for layer in self.layers_mut() {
            for s in layer.state_slices_mut() {
                let end = pos + s.len();
                if end > state.len() {
                    return Err(IsacError::Format("state vector too short".into()));
                }
                s.copy_from_slice(&state[pos..end]);
                pos = end;
            }
        }
        if pos != state.len() {
            return Err(IsacError::Format(format!(
                "state vector length {} does not match network ({pos})",
                state.len()
            )));
        }
        Ok(())
    }

    pub fn trainable_param_count(&mut self) -> usize {
        let mut n = 0;
        for layer in self.layers_mut() {
            for (p, _) in layer.param_grad_pairs() {
                n += p.len();
            }
        }
        n
    }
}

fn add_acts(a: &Act, b: &Act) -> Act {
    match (a, b) {
        (Act::Flat(x), Act::Flat(y)) => Act::Flat(x + y),
        (Act::Seq(x), Act::Seq(y)) => Act::Seq(x + y),
        _ => panic!("activation kinds disagree"),
    }
}
