//! Layer implementations with manual reverse-mode gradients.

use ndarray::{Array1, Array2, Array3, Axis};
use rand::Rng;

use crate::error::{IsacError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Activations flowing between layers: channeled sequences for the
/// convolutional stage, plain feature matrices after flattening.
#[derive(Debug, Clone)]
pub enum Act {
    /// [batch, channels, length]
    Seq(Array3<f64>),
    /// [batch, features]
    Flat(Array2<f64>),
}

impl Act {
    pub fn batch(&self) -> usize {
        match self {
            Act::Seq(a) => a.shape()[0],
            Act::Flat(a) => a.shape()[0],
        }
    }

    fn zeros_like(&self) -> Act {
        match self {
            Act::Seq(a) => Act::Seq(Array3::zeros(a.raw_dim())),
            Act::Flat(a) => Act::Flat(Array2::zeros(a.raw_dim())),
        }
    }
}

#[derive(Debug, Clone)]
pub enum Cache {
    None,
    Bn { x_hat: Act, inv_std: Array1<f64>, batch_stats: bool },
    Conv { input: Array3<f64> },
    Relu { output: Act },
    Fc { input: Array2<f64> },
    Sigmoid { output: Act },
    Flatten { shape: (usize, usize, usize) },
}

#[derive(Debug, Clone)]
pub struct BatchNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
    pub d_gamma: Array1<f64>,
    pub d_beta: Array1<f64>,
    pub eps: f64,
    pub momentum: f64,
}

impl BatchNorm {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Array1::ones(channels),
            beta: Array1::zeros(channels),
            running_mean: Array1::zeros(channels),
            running_var: Array1::ones(channels),
            d_gamma: Array1::zeros(channels),
            d_beta: Array1::zeros(channels),
            eps: 1e-5,
            momentum: 0.9,
        }
    }

    /// Gathers per-channel values of `x` as rows of a [channels, group] view.
    fn group_values(x: &Act, c: usize) -> Vec<f64> {
        match x {
            Act::Seq(a) => {
                let (b, _, l) = (a.shape()[0], a.shape()[1], a.shape()[2]);
                let mut out = Vec::with_capacity(b * l);
                for bi in 0..b {
                    for li in 0..l {
                        out.push(a[(bi, c, li)]);
                    }
                }
                out
            }
            Act::Flat(a) => a.column(c).to_vec(),
        }
    }

    fn channels_of(x: &Act) -> usize {
        match x {
            Act::Seq(a) => a.shape()[1],
            Act::Flat(a) => a.shape()[1],
        }
    }

    fn forward(&mut self, x: &Act, mode: Mode) -> (Act, Cache) {
        let channels = Self::channels_of(x);
        assert_eq!(channels, self.gamma.len(), "batch-norm channel mismatch");
        let mut x_hat = x.clone();
        let mut inv_std = Array1::zeros(channels);
        for c in 0..channels {
            let vals = Self::group_values(x, c);
            let n = vals.len() as f64;
            let (mean, var) = match mode {
                Mode::Train => {
                    let mean = vals.iter().sum::<f64>() / n;
                    let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                    self.running_mean[c] = self.momentum * self.running_mean[c] + (1.0 - self.momentum) * mean;
                    self.running_var[c] = self.momentum * self.running_var[c] + (1.0 - self.momentum) * var;
                    (mean, var)
                }
                Mode::Infer => (self.running_mean[c], self.running_var[c]),
            };
            let istd = 1.0 / (var + self.eps).sqrt();
            inv_std[c] = istd;
            match &mut x_hat {
                Act::Seq(a) => {
                    let (b, l) = (a.shape()[0], a.shape()[2]);
                    for bi in 0..b {
                        for li in 0..l {
                            a[(bi, c, li)] = (a[(bi, c, li)] - mean) * istd;
                        }
                    }
                }
                Act::Flat(a) => {
                    for bi in 0..a.shape()[0] {
                        a[(bi, c)] = (a[(bi, c)] - mean) * istd;
                    }
                }
            }
        }
        let mut y = x_hat.clone();
        self.scale_shift(&mut y);
        (y, Cache::Bn { x_hat, inv_std, batch_stats: mode == Mode::Train })
    }

    fn scale_shift(&self, y: &mut Act) {
        match y {
            Act::Seq(a) => {
                let (b, c_n, l) = (a.shape()[0], a.shape()[1], a.shape()[2]);
                for bi in 0..b {
                    for c in 0..c_n {
                        for li in 0..l {
                            a[(bi, c, li)] = a[(bi, c, li)] * self.gamma[c] + self.beta[c];
                        }
                    }
                }
            }
            Act::Flat(a) => {
                for bi in 0..a.shape()[0] {
                    for c in 0..a.shape()[1] {
                        a[(bi, c)] = a[(bi, c)] * self.gamma[c] + self.beta[c];
                    }
                }
            }
        }
    }

    fn backward(&mut self, dy: &Act, cache: &Cache) -> Act {
        let Cache::Bn { x_hat, inv_std, batch_stats } = cache else {
            panic!("stale cache for batch norm")
        };
        let channels = self.gamma.len();
        let mut dx = dy.zeros_like();
        for c in 0..channels {
            let dy_vals = Self::group_values(dy, c);
            let xh_vals = Self::group_values(x_hat, c);
            let n = dy_vals.len() as f64;
            let sum_dy: f64 = dy_vals.iter().sum();
            let sum_dy_xh: f64 = dy_vals.iter().zip(&xh_vals).map(|(a, b)| a * b).sum();
            self.d_gamma[c] += sum_dy_xh;
            self.d_beta[c] += sum_dy;
            // With batch statistics, the mean/variance depend on x; with
            // running statistics they are constants.
            let put: Box<dyn Fn(usize) -> f64> = if *batch_stats {
                let scale = self.gamma[c] * inv_std[c] / n;
                Box::new(move |idx: usize| {
                    scale * (n * dy_vals[idx] - sum_dy - xh_vals[idx] * sum_dy_xh)
                })
            } else {
                let scale = self.gamma[c] * inv_std[c];
                Box::new(move |idx: usize| scale * dy_vals[idx])
            };
            match &mut dx {
                Act::Seq(a) => {
                    let (b, l) = (a.shape()[0], a.shape()[2]);
                    let mut idx = 0;
                    for bi in 0..b {
                        for li in 0..l {
                            a[(bi, c, li)] = put(idx);
                            idx += 1;
                        }
                    }
                }
                Act::Flat(a) => {
                    for bi in 0..a.shape()[0] {
                        a[(bi, c)] = put(bi);
                    }
                }
            }
        }
        dx
    }
}

/// 1-D convolution over the feature axis, stride 1, same zero padding.
#[derive(Debug, Clone)]
pub struct Conv1d {
    /// [out_ch, in_ch, kernel]
    pub weight: Array3<f64>,
    pub bias: Array1<f64>,
    pub d_weight: Array3<f64>,
    pub d_bias: Array1<f64>,
}

impl Conv1d {
    pub fn new<R: Rng>(in_ch: usize, out_ch: usize, kernel: usize, rng: &mut R) -> Self {
        let bound = 1.0 / ((in_ch * kernel) as f64).sqrt();
        let weight =
            Array3::from_shape_fn((out_ch, in_ch, kernel), |_| rng.gen_range(-bound..bound));
        Self {
            weight,
            bias: Array1::zeros(out_ch),
            d_weight: Array3::zeros((out_ch, in_ch, kernel)),
            d_bias: Array1::zeros(out_ch),
        }
    }

    fn forward(&self, x: &Act) -> (Act, Cache) {
        let Act::Seq(input) = x else { panic!("conv expects a channeled sequence") };
        let (b, in_ch, len) = (input.shape()[0], input.shape()[1], input.shape()[2]);
        let (out_ch, k) = (self.weight.shape()[0], self.weight.shape()[2]);
        assert_eq!(in_ch, self.weight.shape()[1], "conv channel mismatch");
        let pad = (k - 1) / 2;
        let mut out = Array3::zeros((b, out_ch, len));
        for bi in 0..b {
            for o in 0..out_ch {
                for li in 0..len {
                    let mut acc = self.bias[o];
                    for c in 0..in_ch {
                        for j in 0..k {
                            let src = li + j;
                            if src >= pad && src - pad < len {
                                acc += self.weight[(o, c, j)] * input[(bi, c, src - pad)];
                            }
                        }
                    }
                    out[(bi, o, li)] = acc;
                }
            }
        }
        (Act::Seq(out), Cache::Conv { input: input.clone() })
    }

    fn backward(&mut self, dy: &Act, cache: &Cache) -> Act {
        let (Act::Seq(dy), Cache::Conv { input }) = (dy, cache) else {
            panic!("stale cache for conv")
        };
        let (b, in_ch, len) = (input.shape()[0], input.shape()[1], input.shape()[2]);
        let (out_ch, k) = (self.weight.shape()[0], self.weight.shape()[2]);
        let pad = (k - 1) / 2;
        let mut dx = Array3::zeros((b, in_ch, len));
        for bi in 0..b {
            for o in 0..out_ch {
                for li in 0..len {
                    let g = dy[(bi, o, li)];
                    self.d_bias[o] += g;
                    for c in 0..in_ch {
                        for j in 0..k {
                            let src = li + j;
                            if src >= pad && src - pad < len {
                                self.d_weight[(o, c, j)] += g * input[(bi, c, src - pad)];
                                dx[(bi, c, src - pad)] += g * self.weight[(o, c, j)];
                            }
                        }
                    }
                }
            }
        }
        Act::Seq(dx)
    }
}

#[derive(Debug, Clone)]
pub struct Fc {
    /// [out, in]
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub d_weight: Array2<f64>,
    pub d_bias: Array1<f64>,
}

impl Fc {
    pub fn new<R: Rng>(in_features: usize, out_features: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (in_features as f64).sqrt();
        let weight =
            Array2::from_shape_fn((out_features, in_features), |_| rng.gen_range(-bound..bound));
        Self {
            weight,
            bias: Array1::zeros(out_features),
            d_weight: Array2::zeros((out_features, in_features)),
            d_bias: Array1::zeros(out_features),
        }
    }

    fn forward(&self, x: &Act) -> (Act, Cache) {
        let Act::Flat(input) = x else { panic!("fully-connected expects flat features") };
        let out = input.dot(&self.weight.t())
            + &self.bias.view().insert_axis(Axis(0));
        (Act::Flat(out), Cache::Fc { input: input.clone() })
    }

    fn backward(&mut self, dy: &Act, cache: &Cache) -> Act {
        let (Act::Flat(dy), Cache::Fc { input }) = (dy, cache) else { panic!("stale cache for fc") };
        self.d_weight += &dy.t().dot(input);
        self.d_bias += &dy.sum_axis(Axis(0));
        Act::Flat(dy.dot(&self.weight))
    }
}

#[derive(Debug, Clone)]
pub enum Layer {
    BatchNorm(BatchNorm),
    Conv1d(Conv1d),
    Relu,
    Flatten,
    Fc(Fc),
    Sigmoid,
}

impl Layer {
    pub fn forward(&mut self, x: &Act, mode: Mode) -> (Act, Cache) {
        match self {
            Layer::BatchNorm(bn) => bn.forward(x, mode),
            Layer::Conv1d(conv) => conv.forward(x),
            Layer::Fc(fc) => fc.forward(x),
            Layer::Relu => {
                let mut y = x.clone();
                for_each_value(&mut y, |v| *v = v.max(0.0));
                (y.clone(), Cache::Relu { output: y })
            }
            Layer::Sigmoid => {
                let mut y = x.clone();
                for_each_value(&mut y, |v| *v = 1.0 / (1.0 + (-*v).exp()));
                (y.clone(), Cache::Sigmoid { output: y })
            }
            Layer::Flatten => {
                let Act::Seq(a) = x else { panic!("flatten expects a channeled sequence") };
                let (b, c, l) = (a.shape()[0], a.shape()[1], a.shape()[2]);
                let flat = a
                    .to_shape((b, c * l))
                    .expect("contiguous reshape")
                    .to_owned();
                (Act::Flat(flat), Cache::Flatten { shape: (b, c, l) })
            }
        }
    }

    pub fn backward(&mut self, dy: &Act, cache: &Cache) -> Act {
        match self {
            Layer::BatchNorm(bn) => bn.backward(dy, cache),
            Layer::Conv1d(conv) => conv.backward(dy, cache),
            Layer::Fc(fc) => fc.backward(dy, cache),
            Layer::Relu => {
                let Cache::Relu { output } = cache else { panic!("stale cache for relu") };
                let mut dx = dy.clone();
                mask_by(&mut dx, output, |o| o > 0.0);
                dx
            }
            Layer::Sigmoid => {
                let Cache::Sigmoid { output } = cache else { panic!("stale cache for sigmoid") };
                let mut dx = dy.clone();
                scale_by(&mut dx, output, |o| o * (1.0 - o));
                dx
            }
            Layer::Flatten => {
                let Act::Flat(d) = dy else { panic!("flatten backward expects flat gradient") };
                let Cache::Flatten { shape: (b, c, l) } = *cache else {
                    panic!("stale cache for flatten")
                };
                let seq = d
                    .to_shape((b, c, l))
                    .expect("contiguous reshape")
                    .to_owned();
                Act::Seq(seq)
            }
        }
    }

    /// (trainable parameter slice, gradient slice) pairs.
    pub fn param_grad_pairs(&mut self) -> Vec<(&mut [f64], &mut [f64])> {
        match self {
            Layer::BatchNorm(bn) => vec![
                (bn.gamma.as_slice_mut().unwrap(), bn.d_gamma.as_slice_mut().unwrap()),
                (bn.beta.as_slice_mut().unwrap(), bn.d_beta.as_slice_mut().unwrap()),
            ],
            Layer::Conv1d(c) => vec![
                (c.weight.as_slice_mut().unwrap(), c.d_weight.as_slice_mut().unwrap()),
                (c.bias.as_slice_mut().unwrap(), c.d_bias.as_slice_mut().unwrap()),
            ],
            Layer::Fc(f) => vec![
                (f.weight.as_slice_mut().unwrap(), f.d_weight.as_slice_mut().unwrap()),
                (f.bias.as_slice_mut().unwrap(), f.d_bias.as_slice_mut().unwrap()),
            ],
            _ => Vec::new(),
        }
    }

    /// All persistent state (trainable params plus batch-norm running stats).
    pub fn state_slices(&self) -> Vec<&[f64]> {
        match self {
            Layer::BatchNorm(bn) => vec![
                bn.gamma.as_slice().unwrap(),
                bn.beta.as_slice().unwrap(),
                bn.running_mean.as_slice().unwrap(),
                bn.running_var.as_slice().unwrap(),
            ],
            Layer::Conv1d(c) => vec![c.weight.as_slice().unwrap(), c.bias.as_slice().unwrap()],
            Layer::Fc(f) => vec![f.weight.as_slice().unwrap(), f.bias.as_slice().unwrap()],
            _ => Vec::new(),
        }
    }

    pub fn state_slices_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            Layer::BatchNorm(bn) => vec![
                bn.gamma.as_slice_mut().unwrap(),
                bn.beta.as_slice_mut().unwrap(),
                bn.running_mean.as_slice_mut().unwrap(),
                bn.running_var.as_slice_mut().unwrap(),
            ],
            Layer::Conv1d(c) => {
                vec![c.weight.as_slice_mut().unwrap(), c.bias.as_slice_mut().unwrap()]
            }
            Layer::Fc(f) => {
                vec![f.weight.as_slice_mut().unwrap(), f.bias.as_slice_mut().unwrap()]
            }
            _ => Vec::new(),
        }
    }

    pub fn zero_grads(&mut self) {
        for (_, g) in self.param_grad_pairs() {
            for v in g.iter_mut() {
                *v = 0.0;
            }
        }
    }
}

fn for_each_value(act: &mut Act, f: impl Fn(&mut f64)) {
    match act {
        Act::Seq(a) => a.iter_mut().for_each(f),
        Act::Flat(a) => a.iter_mut().for_each(f),
    }
}

fn mask_by(dx: &mut Act, reference: &Act, keep: impl Fn(f64) -> bool) {
    match (dx, reference) {
        (Act::Seq(d), Act::Seq(o)) => {
            for (dv, &ov) in d.iter_mut().zip(o.iter()) {
                if !keep(ov) {
                    *dv = 0.0;
                }
            }
        }
        (Act::Flat(d), Act::Flat(o)) => {
            for (dv, &ov) in d.iter_mut().zip(o.iter()) {
                if !keep(ov) {
                    *dv = 0.0;
                }
            }
        }
        _ => panic!("activation kinds disagree"),
    }
}

fn scale_by(dx: &mut Act, reference: &Act, factor: impl Fn(f64) -> f64) {
    match (dx, reference) {
        (Act::Seq(d), Act::Seq(o)) => {
            for (dv, &ov) in d.iter_mut().zip(o.iter()) {
                *dv *= factor(ov);
            }
        }
        (Act::Flat(d), Act::Flat(o)) => {
            for (dv, &ov) in d.iter_mut().zip(o.iter()) {
                *dv *= factor(ov);
            }
        }
        _ => panic!("activation kinds disagree"),
    }
}

/// Validates that an activation matches the expected flat feature width.
pub fn expect_width(x: &Act, width: usize) -> Result<()> {
    let actual = match x {
        Act::Flat(a) => a.shape()[1],
        Act::Seq(a) => a.shape()[1] * a.shape()[2],
    };
    if actual != width {
        return Err(IsacError::Dimension(format!(
            "input has {actual} features, network expects {width}"
        )));
    }
    Ok(())
}
