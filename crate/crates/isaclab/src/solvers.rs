//! Closed-form and iterative reference solutions: optimal receive
//! beamforming, water-filling normalizers, waveform recovery, baselines,
//! and brute-force oracles.

use num_complex::Complex64;

use crate::error::{IsacError, Result};
use crate::linalg::{haar_unitary, hpd_solve, CMat, CVec};
use crate::metrics::{
    interference_matrix, sense_leakage, wsnr, wsnr_grad_with_profile, CommRateProfile,
    PowerSpectrum, Waveform,
};
use crate::scene::{derive_rng, Scene};

/// One receive beamformer per user.
#[derive(Debug, Clone)]
pub struct BeamformerSet {
    pub beams: Vec<CVec>,
}

/// Outcome of the exhaustive grid search.
#[derive(Debug, Clone)]
pub struct OracleResult {
    pub best_sigma_s: PowerSpectrum,
    pub best_wsnr: f64,
    pub grid_resolution: f64,
}

/// Outcome of the projected-gradient reference optimizer.
#[derive(Debug, Clone)]
pub struct PgResult {
    pub spectrum: PowerSpectrum,
    pub best_wsnr: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Optimal receive beamformers w_k = R~_k^{-1} h_k^* / (sqrt(p_k) h_k^T R~_k^{-1} h_k^*).
pub fn mvdr_beams(sigma_s: &PowerSpectrum, scene: &Scene) -> Result<BeamformerSet> {
    let t = sense_leakage(sigma_s, scene);
    let mut beams = Vec::with_capacity(scene.n_cu());
    for k in 0..scene.n_cu() {
        let r = interference_matrix(scene, k, t);
        let hk_conj = scene.channel.column(k).map(|z| z.conj());
        let x = hpd_solve(&r, &hk_conj)?;
        let mut quad = Complex64::new(0.0, 0.0);
        for a in 0..scene.n_rx() {
            quad += scene.channel[(a, k)] * x[a];
        }
        let denom = quad * Complex64::new(scene.cu_power[k].sqrt(), 0.0);
        beams.push(x / denom);
    }
    Ok(BeamformerSet { beams })
}

/// Active-set water-filling over the interference-free sensing channels.
///
/// Returns the allocation and M_s = (N_r/L) sum_i log2(1 + sigma_t,i sigma_s,i / noise).
/// The single-shot water level is only valid when every channel is active, so
/// channels with negative allocations are dropped and the level recomputed.
pub fn waterfill_ms(
    sigma_t: &[f64],
    p_s: f64,
    noise: f64,
    n_rx: usize,
    wave_len: usize,
) -> (Vec<f64>, f64) {
    let alloc = waterfill(sigma_t, p_s, noise);
    let m_s = (n_rx as f64 / wave_len as f64)
        * sigma_t
            .iter()
            .zip(alloc.iter())
            .map(|(&t, &s)| (1.0 + t * s / noise).log2())
            .sum::<f64>();
    (alloc, m_s)
}

/// Water-filling allocation max(mu - noise/sigma_t_i, 0) summing exactly to p_s.
pub fn waterfill(sigma_t: &[f64], p_s: f64, noise: f64) -> Vec<f64> {
    assert!(p_s > 0.0 && noise > 0.0);
    assert!(sigma_t.iter().all(|&t| t > 0.0));
    let n = sigma_t.len();
    // sigma_t is descending, so inverse gains are ascending; deactivate from the end.
    let inv: Vec<f64> = sigma_t.iter().map(|&t| noise / t).collect();
    let mut active = n;
    loop {
        let mu = (p_s + inv[..active].iter().sum::<f64>()) / active as f64;
        if active == 1 || mu > inv[active - 1] {
            let mut alloc = vec![0.0; n];
            for i in 0..active {
                alloc[i] = mu - inv[i];
            }
            // Exact budget: absorb rounding into the largest allocation.
            let total: f64 = alloc.iter().sum();
            alloc[0] += p_s - total;
            return alloc;
        }
        active -= 1;
    }
}

/// Maximum communication rate M_c = R_c at sigma_s = 0.
pub fn max_comm_rate(scene: &Scene) -> Result<f64> {
    let zero = PowerSpectrum::zeros(scene.n_tx(), scene.sense_power);
    crate::metrics::reduced_comm_rate(&zero, scene)
}

/// How the left singular basis of the recovered waveform is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UnitaryChoice {
    /// First N_t columns of the L x L identity.
    Identity,
    /// First N_t columns of a seeded Haar unitary.
    Random(u64),
}

/// S = U_s Sigma_s U_T^H with squared singular values sigma_s.
pub fn recover_waveform(
    sigma_s: &PowerSpectrum,
    u_t: &CMat,
    wave_len: usize,
    choice: UnitaryChoice,
) -> Result<Waveform> {
    let n_t = u_t.nrows();
    if u_t.ncols() != n_t || sigma_s.values().len() != n_t {
        return Err(IsacError::Dimension("spectrum and eigenvector dims disagree".into()));
    }
    if wave_len < n_t {
        return Err(IsacError::Dimension("waveform length must be at least N_t".into()));
    }
    let u_s = match choice {
        UnitaryChoice::Identity => CMat::identity(wave_len, n_t),
        UnitaryChoice::Random(seed) => {
            let mut rng = derive_rng(seed, 0x5553, 0);
            haar_unitary(wave_len, &mut rng).columns(0, n_t).clone_owned()
        }
    };
    let mut scaled = u_s;
    for (j, &v) in sigma_s.values().iter().enumerate() {
        let s = Complex64::new(v.sqrt(), 0.0);
        for i in 0..wave_len {
            scaled[(i, j)] *= s;
        }
    }
    Ok(Waveform { matrix: scaled * u_t.adjoint() })
}

/// Beamformer recovery at a predicted spectrum; identical contract to mvdr_beams.
pub fn recover_beams(sigma_s_pred: &PowerSpectrum, scene: &Scene) -> Result<BeamformerSet> {
    mvdr_beams(sigma_s_pred, scene)
}

/// Uniform power spectrum P_s / N_t.
pub fn baseline_average(scene: &Scene) -> PowerSpectrum {
    PowerSpectrum::uniform(scene.n_tx(), scene.sense_power)
}

/// Zero-forcing receive beamforming with the uniform power spectrum.
pub fn baseline_zf(scene: &Scene) -> Result<(PowerSpectrum, BeamformerSet)> {
    let k_total = scene.n_cu();
    if k_total > scene.n_rx() {
        return Err(IsacError::Config("zero-forcing requires K <= N_r".into()));
    }
    let h_conj = scene.channel.map(|z| z.conj());
    let gram = scene.channel.transpose() * &h_conj; // H^T H^*
    let inv = gram
        .try_inverse()
        .ok_or_else(|| IsacError::Numeric("rank-deficient channel in zero-forcing".into()))?;
    let w_all = h_conj * inv; // columns satisfy h_i^T w_k = delta_ik
    let mut beams = Vec::with_capacity(k_total);
    for k in 0..k_total {
        let w = w_all.column(k) / Complex64::new(scene.cu_power[k].sqrt(), 0.0);
        beams.push(w.clone_owned());
    }
    Ok((baseline_average(scene), BeamformerSet { beams }))
}

/// Projection onto {sigma >= 0, ||sigma||_1 <= budget}, then descending sort.
pub fn project_spectrum(raw: &[f64], budget: f64) -> PowerSpectrum {
    let clamped: Vec<f64> = raw.iter().map(|&x| x.max(0.0)).collect();
    let total: f64 = clamped.iter().sum();
    let vals = if total <= budget {
        clamped
    } else {
        // Euclidean projection onto the simplex of radius `budget`.
        let mut sorted = raw.to_vec();
        sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let mut cumsum = 0.0;
        let mut tau = 0.0;
        for (i, &v) in sorted.iter().enumerate() {
            cumsum += v;
            let candidate = (cumsum - budget) / (i + 1) as f64;
            if i + 1 == sorted.len() || sorted[i + 1] <= candidate {
                tau = candidate;
                if v > candidate {
                    break;
                }
            }
            if v - candidate <= 0.0 {
                break;
            }
        }
        raw.iter().map(|&x| (x - tau).max(0.0)).collect()
    };
    PowerSpectrum::from_unsorted(vals, budget).expect("projection produces a feasible spectrum")
}

/// Projected gradient ascent on the wsnr objective with backtracking.
pub fn projected_gradient(
    scene: &Scene,
    alpha: f64,
    steps: usize,
    step_size: f64,
) -> Result<PgResult> {
    let profile = CommRateProfile::new(scene)?;
    let p_s = scene.sense_power;
    let mut sigma = baseline_average(scene);
    let objective = |s: &PowerSpectrum| -> Result<f64> { Ok(wsnr(s, scene, alpha)?.wsnr) };
    let mut best = objective(&sigma)?;
    // The all-zero point is a candidate too (optimal at alpha = 0).
    let zero = PowerSpectrum::zeros(scene.n_tx(), p_s);
    let zero_obj = objective(&zero)?;
    if zero_obj > best {
        best = zero_obj;
        sigma = zero;
    }
    let mut converged = false;
    let mut iterations = 0;
    let mut step = step_size * p_s;
    for _ in 0..steps {
        iterations += 1;
        let grad = wsnr_grad_with_profile(&sigma, scene, alpha, &profile);
        let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if gnorm == 0.0 {
            converged = true;
            break;
        }
        // Backtracking line search along the normalized gradient.
        let mut accepted = false;
        let mut trial_step = step;
        for _ in 0..60 {
            let raw: Vec<f64> = sigma
                .values()
                .iter()
                .zip(grad.iter())
                .map(|(&s, &g)| s + trial_step * g / gnorm)
                .collect();
            let cand = project_spectrum(&raw, p_s);
            let val = objective(&cand)?;
            if val > best {
                let moved: f64 = cand
                    .values()
                    .iter()
                    .zip(sigma.values())
                    .map(|(a, b)| (a - b).abs())
                    .sum();
                sigma = cand;
                if val - best < 1e-14 && moved < 1e-12 * p_s {
                    best = val;
                    converged = true;
                } else {
                    best = val;
                }
                accepted = true;
                break;
            }
            trial_step *= 0.5;
        }
        if !accepted {
            converged = true;
            break;
        }
        step = (trial_step * 2.0).min(step_size * p_s);
        if converged {
            break;
        }
    }
    Ok(PgResult { spectrum: sigma, best_wsnr: best, converged, iterations })
}

/// Exhaustive search over the descending simplex at the given resolution.
/// Refused for N_t > 3.
pub fn grid_oracle(scene: &Scene, alpha: f64, resolution: f64) -> Result<OracleResult> {
    let n_t = scene.n_tx();
    if n_t > 3 {
        return Err(IsacError::Config(format!(
            "grid oracle refused for N_t = {n_t} > 3 (combinatorial blow-up)"
        )));
    }
    if resolution <= 0.0 {
        return Err(IsacError::Config("resolution must be positive".into()));
    }
    let p_s = scene.sense_power;
    let profile = CommRateProfile::new(scene)?;
    let n_steps = (p_s / resolution).floor() as usize;
    let mut best_vals = vec![0.0; n_t];
    let mut best = f64::NEG_INFINITY;
    let eval = |vals: &[f64]| {
        let sp = PowerSpectrum::new(vals.to_vec(), p_s).expect("grid point is feasible");
        let t = sense_leakage(&sp, scene);
        let sense = crate::metrics::reduced_sense_rate(&sp, scene);
        let comm = profile.rate(t);
        let w = alpha * sense / scene.norm_sense + (1.0 - alpha) * comm / scene.norm_comm;
        (sp, w)
    };
    match n_t {
        1 => {
            for i in 0..=n_steps {
                let (sp, w) = eval(&[i as f64 * resolution]);
                if w > best {
                    best = w;
                    best_vals = sp.values().to_vec();
                }
            }
        }
        2 => {
            for i in 0..=n_steps {
                let s1 = i as f64 * resolution;
                let jmax = (n_steps - i).min(i);
                for j in 0..=jmax {
                    let (sp, w) = eval(&[s1, j as f64 * resolution]);
                    if w > best {
                        best = w;
                        best_vals = sp.values().to_vec();
                    }
                }
            }
        }
        3 => {
            for i in 0..=n_steps {
                let s1 = i as f64 * resolution;
                let jmax = (n_steps - i).min(i);
                for j in 0..=jmax {
                    let s2 = j as f64 * resolution;
                    let kmax = (n_steps - i - j).min(j);
                    for k in 0..=kmax {
                        let (sp, w) = eval(&[s1, s2, k as f64 * resolution]);
                        if w > best {
                            best = w;
                            best_vals = sp.values().to_vec();
                        }
                    }
                }
            }
        }
        _ => unreachable!(),
    }
    Ok(OracleResult {
        best_sigma_s: PowerSpectrum::new(best_vals, p_s)?,
        best_wsnr: best,
        grid_resolution: resolution,
    })
}
