//! From-scratch neural spectrum designer: a small two-headed network maps
//! scene features to a feasible sensing power spectrum, trained end-to-end
//! against the closed-form weighted objective (no labels).

pub mod checkpoint;
pub mod layers;
pub mod loss;
pub mod network;
pub mod train;

pub use checkpoint::Checkpoint;
pub use layers::{Act, Layer, Mode};
pub use loss::{lambda_backward, lambda_forward, loss_grad_sigma, LambdaCache, SceneEval};
pub use network::{ArchKind, ForwardPass, Network, STREAM_INIT, STREAM_SHUFFLE};
pub use train::{
    eval_loss, run_training, train, Adam, EpochRecord, TrainConfig, TrainRun, TrainState,
    TrainingData,
};

use ndarray::Array2;

use crate::error::Result;
use crate::metrics::{wsnr, PowerSpectrum, RatePair, Waveform};
use crate::scene::{build_features, Scene};
use crate::solvers::{recover_beams, recover_waveform, BeamformerSet, UnitaryChoice};

/// Full inference pipeline for one scene: features -> network -> constraint
/// layer -> waveform and beamformer recovery -> achieved rates.
pub fn predict(
    net: &mut Network,
    scene: &Scene,
    alpha: f64,
) -> Result<(PowerSpectrum, Waveform, BeamformerSet, RatePair)> {
    let f = build_features(scene);
    let x = Array2::from_shape_vec((1, f.values.len()), f.values)
        .expect("feature row is contiguous");
    let pass = net.forward(&x, Mode::Infer)?;
    let theta: Vec<f64> = pass.theta.row(0).to_vec();
    let (sigma, _) = lambda_forward(&theta, pass.eta[0], scene.sense_power)?;
    let waveform = recover_waveform(&sigma, &scene.tcm_eigvecs, scene.wave_len, UnitaryChoice::Identity)?;
    let beams = recover_beams(&sigma, scene)?;
    let rates = wsnr(&sigma, scene, alpha)?;
    Ok((sigma, waveform, beams, rates))
}

/// Convenience: predicted spectrum only.
pub fn predict_spectrum(net: &mut Network, scene: &Scene) -> Result<PowerSpectrum> {
    let f = build_features(scene);
    let x = Array2::from_shape_vec((1, f.values.len()), f.values)
        .expect("feature row is contiguous");
    let pass = net.forward(&x, Mode::Infer)?;
    let theta: Vec<f64> = pass.theta.row(0).to_vec();
    let (sigma, _) = lambda_forward(&theta, pass.eta[0], scene.sense_power)?;
    Ok(sigma)
}
