//! Constraint layer mapping raw head outputs to a feasible power spectrum,
//! plus the unsupervised training loss built on the closed-form rates.

use crate::error::{IsacError, Result};
use crate::metrics::{
    reduced_sense_rate, sense_leakage, wsnr_grad_with_profile, CommRateProfile, PowerSpectrum,
};
use crate::scene::Scene;

/// Cache of the constraint-layer forward pass, consumed by its backward pass.
#[derive(Debug, Clone)]
pub struct LambdaCache {
    /// perm[j] = index into the unsorted normalised vector that landed at
    /// output slot j (descending order, stable on ties).
    perm: Vec<usize>,
    /// Normalised (pre-sort) values u_i = theta_i / ||theta||_1.
    u: Vec<f64>,
    l1: f64,
    eta: f64,
    p_s: f64,
}

/// Maps raw outputs theta in (0,1)^N and eta in (0,1) to a feasible
/// descending spectrum: normalise theta to unit l1 mass, sort descending,
/// scale by eta times the power budget.
pub fn lambda_forward(theta: &[f64], eta: f64, p_s: f64) -> Result<(PowerSpectrum, LambdaCache)> {
    if theta.is_empty() {
        return Err(IsacError::Dimension("constraint layer got empty input".into()));
    }
    if !theta.iter().all(|v| v.is_finite() && *v >= 0.0) || !eta.is_finite() || eta < 0.0 {
        return Err(IsacError::Numeric(
            "constraint layer requires finite non-negative inputs".into(),
        ));
    }
    let l1: f64 = theta.iter().sum();
    if l1 <= 0.0 {
        return Err(IsacError::Numeric(
            "constraint layer requires a nonzero shape vector".into(),
        ));
    }
    let u: Vec<f64> = theta.iter().map(|v| v / l1).collect();
    let mut perm: Vec<usize> = (0..u.len()).collect();
    perm.sort_by(|&a, &b| u[b].partial_cmp(&u[a]).unwrap());
    let scale = eta * p_s;
    let sorted: Vec<f64> = perm.iter().map(|&i| u[i] * scale).collect();
    let spectrum = PowerSpectrum::new(sorted, p_s)?;
    Ok((spectrum, LambdaCache { perm, u, l1, eta, p_s }))
}

/// Pulls a cotangent on the sorted spectrum back to (d_theta, d_eta).
pub fn lambda_backward(cache: &LambdaCache, d_sigma: &[f64]) -> (Vec<f64>, f64) {
    let n = cache.u.len();
    assert_eq!(d_sigma.len(), n, "cotangent length mismatch");
    let scale = cache.eta * cache.p_s;
    // Undo the sort: slot j of the output came from unsorted index perm[j].
    let mut d_u = vec![0.0; n];
    for (j, &i) in cache.perm.iter().enumerate() {
        d_u[i] = d_sigma[j] * scale;
    }
    let d_eta: f64 = cache
        .perm
        .iter()
        .enumerate()
        .map(|(j, &i)| d_sigma[j] * cache.u[i] * cache.p_s)
        .sum();
    // u = theta / l1 with l1 = sum(theta):
    // d_theta_i = (d_u_i - sum_j d_u_j u_j) / l1.
    let dot: f64 = d_u.iter().zip(&cache.u).map(|(a, b)| a * b).sum();
    let d_theta: Vec<f64> = d_u.iter().map(|&g| (g - dot) / cache.l1).collect();
    (d_theta, d_eta)
}

/// Per-scene cache so the loss and its gradient are cheap to evaluate many
/// times during training: the communication rate reduces to K rational
/// functions of the scalar leakage, computed once per scene.
#[derive(Debug, Clone)]
pub struct SceneEval {
    pub scene: Scene,
    profile: CommRateProfile,
}

impl SceneEval {
    pub fn new(scene: &Scene) -> Result<Self> {
        Ok(Self { scene: scene.clone(), profile: CommRateProfile::new(scene)? })
    }

    /// Normalised weighted objective and its gradient w.r.t. the descending
    /// spectrum values.
    pub fn wsnr_and_grad(&self, sigma: &PowerSpectrum, alpha: f64) -> (f64, Vec<f64>) {
        let value = self.wsnr(sigma, alpha);
        let grad = wsnr_grad_with_profile(sigma, &self.scene, alpha, &self.profile);
        (value, grad)
    }

    pub fn wsnr(&self, sigma: &PowerSpectrum, alpha: f64) -> f64 {
        let sense = reduced_sense_rate(sigma, &self.scene);
        let comm = self.profile.rate(sense_leakage(sigma, &self.scene));
        alpha * sense / self.scene.norm_sense + (1.0 - alpha) * comm / self.scene.norm_comm
    }
}

/// Training loss over a batch: negative mean normalised weighted objective.
pub fn loss(spectra: &[PowerSpectrum], scenes: &[&SceneEval], alpha: f64) -> f64 {
    assert_eq!(spectra.len(), scenes.len());
    let n = spectra.len() as f64;
    let total: f64 = spectra.iter().zip(scenes).map(|(s, e)| e.wsnr(s, alpha)).sum();
    -total / n
}

/// Gradient of the single-sample loss contribution w.r.t. the spectrum.
pub fn loss_grad_sigma(sigma: &PowerSpectrum, scene: &SceneEval, alpha: f64) -> Vec<f64> {
    let (_, g) = scene.wsnr_and_grad(sigma, alpha);
    g.into_iter().map(|v| -v).collect()
}
