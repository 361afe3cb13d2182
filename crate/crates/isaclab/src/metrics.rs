//! Rate and mutual-information computations, in both the full
//! log-determinant form and the reduced eigenvalue form, plus the two
//! Kronecker identities used as verifiable oracles.

use num_complex::Complex64;

use crate::error::{IsacError, Result};
use crate::linalg::{hpd_solve, vec_of, CMat, CVec};
use crate::scene::Scene;

/// The reduced decision vector: squared singular values of the sensing
/// waveform, nonnegative, descending, l1-bounded by the power budget.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSpectrum {
    values: Vec<f64>,
    budget: f64,
}

impl PowerSpectrum {
    pub fn new(values: Vec<f64>, budget: f64) -> Result<Self> {
        if budget <= 0.0 {
            return Err(IsacError::Config("power budget must be positive".into()));
        }
        if values.iter().any(|&v| v < 0.0 || !v.is_finite()) {
            return Err(IsacError::Config("spectrum entries must be nonnegative and finite".into()));
        }
        if values.windows(2).any(|w| w[0] < w[1]) {
            return Err(IsacError::Config("spectrum must be sorted descending".into()));
        }
        let l1: f64 = values.iter().sum();
        if l1 > budget * (1.0 + 1e-9) {
            return Err(IsacError::Config(format!(
                "spectrum l1 norm {l1:.6e} exceeds budget {budget:.6e}"
            )));
        }
        Ok(Self { values, budget })
    }

    /// Sorts the entries descending before validating.
    pub fn from_unsorted(mut values: Vec<f64>, budget: f64) -> Result<Self> {
        values.sort_by(|a, b| b.partial_cmp(a).unwrap());
        Self::new(values, budget)
    }

    pub fn zeros(n: usize, budget: f64) -> Self {
        Self { values: vec![0.0; n], budget }
    }

    pub fn uniform(n: usize, budget: f64) -> Self {
        Self { values: vec![budget / n as f64; n], budget }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn budget(&self) -> f64 {
        self.budget
    }

    pub fn total_power(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// The sensing transmit waveform S in C^{L x N_t}.
#[derive(Debug, Clone)]
pub struct Waveform {
    pub matrix: CMat,
}

impl Waveform {
    pub fn transmit_power(&self) -> f64 {
        self.matrix.iter().map(|z| z.norm_sqr()).sum()
    }
}

/// Sensing rate, communication rate, and their weighted normalized sum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatePair {
    pub sense_rate: f64,
    pub comm_rate: f64,
    pub wsnr: f64,
}

/// Relative residual of vec(ABC) = (C^T kron A) vec(B).
pub fn kron_vec_identity(a: &CMat, b: &CMat, c: &CMat) -> Result<f64> {
    if a.ncols() != b.nrows() || b.ncols() != c.nrows() {
        return Err(IsacError::Dimension(format!(
            "vec identity needs conformable dims, got {}x{}, {}x{}, {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols(),
            c.nrows(),
            c.ncols()
        )));
    }
    let lhs = vec_of(&(a * b * c));
    let rhs = c.transpose().kronecker(a) * vec_of(b);
    let scale = lhs.norm().max(rhs.norm()).max(f64::MIN_POSITIVE);
    Ok((lhs - rhs).norm() / scale)
}

/// Relative residual of |I + AB kron CD| = |I + BA kron DC|.
pub fn kron_det_identity(a: &CMat, b: &CMat, c: &CMat, d: &CMat) -> Result<f64> {
    let m = a.nrows();
    let n = c.nrows();
    for (x, rows, cols) in [(a, m, m), (b, m, m), (c, n, n), (d, n, n)] {
        if x.nrows() != rows || x.ncols() != cols {
            return Err(IsacError::Dimension("det identity needs square m,m,n,n matrices".into()));
        }
    }
    let eye = CMat::identity(m * n, m * n);
    let lhs = (&eye + (a * b).kronecker(&(c * d))).determinant();
    let rhs = (eye + (b * a).kronecker(&(d * c))).determinant();
    let scale = lhs.norm().max(rhs.norm()).max(f64::MIN_POSITIVE);
    Ok((lhs - rhs).norm() / scale)
}

/// Sensing MI in bits: log2 |I_{LN_r} + R_H kron S R_T S^H|, evaluated in the
/// eigen-domain so the LN_r-dimensional Kronecker product is never formed.
pub fn sensing_mi_full(s: &Waveform, scene: &Scene) -> Result<f64> {
    let l = scene.wave_len;
    let n_t = scene.n_tx();
    if s.matrix.nrows() != l || s.matrix.ncols() != n_t {
        return Err(IsacError::Dimension(format!(
            "waveform is {}x{}, scene expects {}x{}",
            s.matrix.nrows(),
            s.matrix.ncols(),
            l,
            n_t
        )));
    }
    if s.matrix.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(IsacError::Numeric("non-finite waveform entry".into()));
    }
    // M = S R_T S^H is Hermitian PSD and shares its nonzero spectrum with
    // B^H B for B = S U_T Sigma_T^{1/2}; eigenvalues of R_H kron M are the
    // pairwise products of the two spectra. Going through the SVD of B keeps
    // small eigenvalues accurate in a relative sense.
    let mut b = &s.matrix * &scene.tcm_eigvecs;
    for (j, &v) in scene.tcm_eigvals.iter().enumerate() {
        let root = Complex64::new(v.sqrt(), 0.0);
        for i in 0..l {
            b[(i, j)] *= root;
        }
    }
    let sv = b.svd(false, false).singular_values;
    let mut mi = 0.0;
    for &sh in &scene.interf_eigvals {
        for s in sv.iter() {
            mi += (sh * s * s).ln_1p() / std::f64::consts::LN_2;
        }
    }
    Ok(mi)
}

/// Reduced sensing rate (1/L) sum_i sum_j log2(1 + sigma_t,i sigma_s,i sigma_h,j).
pub fn reduced_sense_rate(sigma_s: &PowerSpectrum, scene: &Scene) -> f64 {
    let mut total = 0.0;
    for (&st, &ss) in scene.tcm_eigvals.iter().zip(sigma_s.values()) {
        for &sh in &scene.interf_eigvals {
            total += (st * ss * sh).ln_1p() / std::f64::consts::LN_2;
        }
    }
    total / scene.wave_len as f64
}

/// The sensing-interference scalar t = sigma_t . sigma_s / L.
pub fn sense_leakage(sigma_s: &PowerSpectrum, scene: &Scene) -> f64 {
    scene
        .tcm_eigvals
        .iter()
        .zip(sigma_s.values())
        .map(|(t, s)| t * s)
        .sum::<f64>()
        / scene.wave_len as f64
}

/// Interference-plus-noise matrix R~_k for the given leakage scalar t.
pub fn interference_matrix(scene: &Scene, k: usize, t: f64) -> CMat {
    let n_rx = scene.n_rx();
    let mut r = CMat::identity(n_rx, n_rx) * Complex64::new(t + scene.noise, 0.0);
    for i in 0..scene.n_cu() {
        if i == k {
            continue;
        }
        let col = scene.channel.column(i);
        for a in 0..n_rx {
            for b in 0..n_rx {
                // p_i h_i^* h_i^T
                r[(a, b)] += col[a].conj() * col[b] * scene.cu_power[i];
            }
        }
    }
    r
}

/// Direct SINR of beamformer w for user k at spectrum sigma_s.
pub fn sinr_direct(w: &CVec, k: usize, sigma_s: &PowerSpectrum, scene: &Scene) -> Result<f64> {
    if k >= scene.n_cu() {
        return Err(IsacError::Dimension(format!("user index {k} out of range")));
    }
    let w_norm_sq: f64 = w.iter().map(|z| z.norm_sqr()).sum();
    if w_norm_sq == 0.0 {
        return Err(IsacError::Config("zero beamformer".into()));
    }
    let t = sense_leakage(sigma_s, scene);
    let gain = |i: usize| -> f64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for a in 0..scene.n_rx() {
            acc += scene.channel[(a, i)] * w[a];
        }
        acc.norm_sqr()
    };
    let signal = scene.cu_power[k] * gain(k);
    let mut denom = (t + scene.noise) * w_norm_sq;
    for i in 0..scene.n_cu() {
        if i != k {
            denom += scene.cu_power[i] * gain(i);
        }
    }
    Ok(signal / denom)
}

/// Closed-form optimal SINR p_k h_k^T R~_k^{-1} h_k^* for the leakage scalar t.
pub fn gamma_opt(scene: &Scene, k: usize, t: f64) -> Result<f64> {
    let r = interference_matrix(scene, k, t);
    let hk_conj = scene.channel.column(k).map(|z| z.conj());
    let x = hpd_solve(&r, &hk_conj)?;
    let mut q = Complex64::new(0.0, 0.0);
    for a in 0..scene.n_rx() {
        q += scene.channel[(a, k)] * x[a];
    }
    // Hermitian quadratic form; the imaginary part is numerical noise.
    Ok(scene.cu_power[k] * q.re)
}

/// Communication rate at the optimal receive beamformers.
pub fn reduced_comm_rate(sigma_s: &PowerSpectrum, scene: &Scene) -> Result<f64> {
    let t = sense_leakage(sigma_s, scene);
    let k_total = scene.n_cu();
    let mut total = 0.0;
    for k in 0..k_total {
        total += gamma_opt(scene, k, t)?.ln_1p() / std::f64::consts::LN_2;
    }
    Ok(total / k_total as f64)
}

/// Per-scene cache that reduces the communication rate to K rational
/// functions of the scalar leakage t, via one Hermitian eigendecomposition
/// of each user's interference matrix.
#[derive(Debug, Clone)]
pub struct CommRateProfile {
    /// Per user: (lambda_j + noise, |c_j|^2) pairs and the power p_k.
    terms: Vec<(Vec<(f64, f64)>, f64)>,
    n_cu: usize,
}

impl CommRateProfile {
    pub fn new(scene: &Scene) -> Result<Self> {
        let n_rx = scene.n_rx();
        let mut terms = Vec::with_capacity(scene.n_cu());
        for k in 0..scene.n_cu() {
            // A_k = sum_{i != k} p_i h_i^* h_i^T (without the noise/leakage identity).
            let mut a = CMat::zeros(n_rx, n_rx);
            for i in 0..scene.n_cu() {
                if i == k {
                    continue;
                }
                let col = scene.channel.column(i);
                for r in 0..n_rx {
                    for c in 0..n_rx {
                        a[(r, c)] += col[r].conj() * col[c] * scene.cu_power[i];
                    }
                }
            }
            let sym = nalgebra::SymmetricEigen::new(a);
            let hk_conj = scene.channel.column(k).map(|z| z.conj());
            let coeff = sym.eigenvectors.adjoint() * hk_conj;
            let pairs = sym
                .eigenvalues
                .iter()
                .zip(coeff.iter())
                .map(|(&lam, c)| (lam.max(0.0) + scene.noise, c.norm_sqr()))
                .collect();
            terms.push((pairs, scene.cu_power[k]));
        }
        Ok(Self { terms, n_cu: scene.n_cu() })
    }

    pub fn gamma(&self, k: usize, t: f64) -> f64 {
        let (pairs, p) = &self.terms[k];
        p * pairs.iter().map(|(base, c)| c / (base + t)).sum::<f64>()
    }

    fn gamma_deriv(&self, k: usize, t: f64) -> f64 {
        let (pairs, p) = &self.terms[k];
        -p * pairs.iter().map(|(base, c)| c / ((base + t) * (base + t))).sum::<f64>()
    }

    pub fn rate(&self, t: f64) -> f64 {
        (0..self.n_cu).map(|k| self.gamma(k, t).ln_1p() / std::f64::consts::LN_2).sum::<f64>()
            / self.n_cu as f64
    }

    /// (rate, d rate / d t).
    pub fn rate_and_grad(&self, t: f64) -> (f64, f64) {
        let ln2 = std::f64::consts::LN_2;
        let mut rate = 0.0;
        let mut grad = 0.0;
        for k in 0..self.n_cu {
            let g = self.gamma(k, t);
            rate += g.ln_1p() / ln2;
            grad += self.gamma_deriv(k, t) / ((1.0 + g) * ln2);
        }
        let kf = self.n_cu as f64;
        (rate / kf, grad / kf)
    }
}

/// Weighted sum of normalized rates at the given spectrum.
pub fn wsnr(sigma_s: &PowerSpectrum, scene: &Scene, alpha: f64) -> Result<RatePair> {
    if scene.norm_sense <= 0.0 || scene.norm_comm <= 0.0 {
        return Err(IsacError::Config("scene normalizers must be positive".into()));
    }
    let sense_rate = reduced_sense_rate(sigma_s, scene);
    let comm_rate = reduced_comm_rate(sigma_s, scene)?;
    debug_assert!(sense_rate <= scene.norm_sense * (1.0 + 1e-9));
    debug_assert!(comm_rate <= scene.norm_comm * (1.0 + 1e-9));
    let wsnr = alpha * sense_rate / scene.norm_sense + (1.0 - alpha) * comm_rate / scene.norm_comm;
    Ok(RatePair { sense_rate, comm_rate, wsnr })
}

/// Gradient of the wsnr objective with respect to the spectrum entries,
/// holding the descending pairing with sigma_t fixed.
pub fn wsnr_grad(sigma_s: &PowerSpectrum, scene: &Scene, alpha: f64) -> Result<Vec<f64>> {
    let profile = CommRateProfile::new(scene)?;
    Ok(wsnr_grad_with_profile(sigma_s, scene, alpha, &profile))
}

pub fn wsnr_grad_with_profile(
    sigma_s: &PowerSpectrum,
    scene: &Scene,
    alpha: f64,
    profile: &CommRateProfile,
) -> Vec<f64> {
    let ln2 = std::f64::consts::LN_2;
    let l = scene.wave_len as f64;
    let t = sense_leakage(sigma_s, scene);
    let (_, dcomm_dt) = profile.rate_and_grad(t);
    sigma_s
        .values()
        .iter()
        .zip(scene.tcm_eigvals.iter())
        .map(|(&ss, &st)| {
            let mut dsense = 0.0;
            for &sh in &scene.interf_eigvals {
                dsense += st * sh / (1.0 + st * ss * sh);
            }
            dsense /= l * ln2;
            let dcomm = dcomm_dt * st / l;
            alpha * dsense / scene.norm_sense + (1.0 - alpha) * dcomm / scene.norm_comm
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::gaussian_cmat;
    use crate::scene::{derive_rng, gen_scene, SystemConfig};
    use crate::solvers::{recover_waveform, UnitaryChoice};
    use proptest::prelude::*;
    use rand::Rng;

    fn test_scene(n_tx: usize, n_rx: usize, n_cu: usize, wave_len: usize, seed: u64) -> Scene {
        let config = SystemConfig {
            n_tx,
            n_rx,
            n_cu,
            wave_len,
            seed,
            ..SystemConfig::default()
        };
        gen_scene(&config, 0, 0).unwrap()
    }

    fn random_spectrum<R: Rng>(n: usize, budget: f64, rng: &mut R) -> PowerSpectrum {
        let mut v: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        let total: f64 = v.iter().sum();
        let scale = budget * rng.gen::<f64>() / total;
        for x in v.iter_mut() {
            *x *= scale;
        }
        PowerSpectrum::from_unsorted(v, budget).unwrap()
    }

    #[test]
    fn spectrum_validation() {
        assert!(PowerSpectrum::new(vec![2.0, 1.0], 3.0).is_ok());
        assert!(PowerSpectrum::new(vec![1.0, 2.0], 3.0).is_err());
        assert!(PowerSpectrum::new(vec![-0.1, -0.2], 3.0).is_err());
        assert!(PowerSpectrum::new(vec![3.0, 1.0], 3.0).is_err());
    }

    #[test]
    fn kron_vec_scalar_and_identity_cases() {
        let one = |v: f64| CMat::from_fn(1, 1, |_, _| Complex64::new(v, 0.0));
        assert!(kron_vec_identity(&one(2.0), &one(3.0), &one(-1.5)).unwrap() < 1e-14);
        let b = CMat::from_fn(3, 3, |i, j| Complex64::new((i + 2 * j) as f64, j as f64));
        let eye = CMat::identity(3, 3);
        assert!(kron_vec_identity(&eye, &b, &eye).unwrap() < 1e-14);
        let bad = CMat::zeros(2, 2);
        assert!(kron_vec_identity(&bad, &b, &eye).is_err());
    }

    #[test]
    fn kron_vec_random_instances() {
        let mut rng = derive_rng(1, 7, 0);
        for _ in 0..100 {
            let a = gaussian_cmat(3, 2, &mut rng);
            let b = gaussian_cmat(2, 4, &mut rng);
            let c = gaussian_cmat(4, 3, &mut rng);
            assert!(kron_vec_identity(&a, &b, &c).unwrap() < 1e-12);
        }
    }

    #[test]
    fn kron_det_random_instances() {
        let mut rng = derive_rng(2, 7, 0);
        for _ in 0..100 {
            let a = gaussian_cmat(2, 2, &mut rng);
            let b = gaussian_cmat(2, 2, &mut rng);
            let c = gaussian_cmat(3, 3, &mut rng);
            let d = gaussian_cmat(3, 3, &mut rng);
            let eye = CMat::identity(6, 6);
            let lhs = (eye + (&a * &b).kronecker(&(&c * &d))).determinant().norm();
            let res = kron_det_identity(&a, &b, &c, &d).unwrap();
            assert!(res < 1e-10 * lhs.max(1.0), "residual {res}");
        }
        // B = D = I leaves both sides |I + A kron C|.
        let a = gaussian_cmat(2, 2, &mut rng);
        let c = gaussian_cmat(3, 3, &mut rng);
        let res = kron_det_identity(&a, &CMat::identity(2, 2), &c, &CMat::identity(3, 3)).unwrap();
        assert!(res < 1e-10);
    }

    #[test]
    fn sensing_mi_zero_waveform() {
        let scene = test_scene(3, 3, 2, 5, 1);
        let s = Waveform { matrix: CMat::zeros(5, 3) };
        assert!(sensing_mi_full(&s, &scene).unwrap().abs() < 1e-12);
    }

    #[test]
    fn sensing_mi_matches_reduced_form() {
        let mut rng = derive_rng(3, 7, 0);
        for seed in 0..5u64 {
            let scene = test_scene(4, 4, 2, 7, seed + 10);
            let sigma = random_spectrum(4, scene.sense_power, &mut rng);
            let s = recover_waveform(
                &sigma,
                &scene.tcm_eigvecs,
                scene.wave_len,
                UnitaryChoice::Random(seed),
            )
            .unwrap();
            let full = sensing_mi_full(&s, &scene).unwrap() / scene.wave_len as f64;
            let reduced = reduced_sense_rate(&sigma, &scene);
            assert!(
                (full - reduced).abs() / reduced.max(1e-12) < 1e-8,
                "full {full} reduced {reduced}"
            );
        }
    }

    #[test]
    fn reduced_sense_rate_small_case() {
        // N_t=1, N_r=2, L=2, sigma_t=1, sigma_h=[1,1], sigma_s=[3] -> 2 bits.
        let mut scene = test_scene(3, 2, 1, 4, 3);
        scene.tcm_eigvals = vec![1.0];
        scene.interf_eigvals = vec![1.0, 1.0];
        scene.wave_len = 2;
        let sigma = PowerSpectrum::new(vec![3.0], 10.0).unwrap();
        assert!((reduced_sense_rate(&sigma, &scene) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn sinr_matched_filter_and_scale_invariance() {
        let scene = test_scene(3, 4, 1, 5, 4);
        let sigma = PowerSpectrum::zeros(3, scene.sense_power);
        let w = scene.channel.column(0).map(|z| z.conj());
        let g = sinr_direct(&w, 0, &sigma, &scene).unwrap();
        let h_sq: f64 = scene.channel.column(0).iter().map(|z| z.norm_sqr()).sum();
        let expected = scene.cu_power[0] * h_sq / scene.noise;
        assert!((g - expected).abs() / expected < 1e-12);
        let g5 = sinr_direct(&(w * Complex64::new(5.0, 0.0)), 0, &sigma, &scene).unwrap();
        assert!((g - g5).abs() / g < 1e-12);
    }

    #[test]
    fn comm_rate_single_user_closed_form() {
        let scene = test_scene(3, 4, 1, 5, 5);
        let mut rng = derive_rng(4, 7, 0);
        let sigma = random_spectrum(3, scene.sense_power, &mut rng);
        let t = sense_leakage(&sigma, &scene);
        let h_sq: f64 = scene.channel.column(0).iter().map(|z| z.norm_sqr()).sum();
        let expected =
            (scene.cu_power[0] * h_sq / (t + scene.noise)).ln_1p() / std::f64::consts::LN_2;
        let got = reduced_comm_rate(&sigma, &scene).unwrap();
        assert!((got - expected).abs() / expected < 1e-12);
    }

    #[test]
    fn comm_rate_zero_spectrum_equals_normalizer() {
        let scene = test_scene(4, 4, 3, 6, 6);
        let zero = PowerSpectrum::zeros(4, scene.sense_power);
        let rc = reduced_comm_rate(&zero, &scene).unwrap();
        assert!((rc - scene.norm_comm).abs() / scene.norm_comm < 1e-12);
    }

    #[test]
    fn profile_matches_direct_comm_rate() {
        let scene = test_scene(4, 5, 3, 6, 7);
        let profile = CommRateProfile::new(&scene).unwrap();
        let mut rng = derive_rng(5, 7, 0);
        for _ in 0..10 {
            let sigma = random_spectrum(4, scene.sense_power, &mut rng);
            let t = sense_leakage(&sigma, &scene);
            let direct = reduced_comm_rate(&sigma, &scene).unwrap();
            assert!((profile.rate(t) - direct).abs() / direct < 1e-10);
            for k in 0..3 {
                let g_direct = gamma_opt(&scene, k, t).unwrap();
                assert!((profile.gamma(k, t) - g_direct).abs() / g_direct < 1e-10);
            }
        }
    }

    #[test]
    fn wsnr_endpoints() {
        let scene = test_scene(4, 4, 2, 6, 8);
        let zero = PowerSpectrum::zeros(4, scene.sense_power);
        let at0 = wsnr(&zero, &scene, 0.0).unwrap();
        assert!((at0.wsnr - 1.0).abs() < 1e-12);
        let at1 = wsnr(&zero, &scene, 1.0).unwrap();
        assert!(at1.wsnr.abs() < 1e-12);
        let mut rng = derive_rng(6, 7, 0);
        let sigma = random_spectrum(4, scene.sense_power, &mut rng);
        let half = wsnr(&sigma, &scene, 0.5).unwrap();
        let expect = 0.5 * half.sense_rate / scene.norm_sense + 0.5 * half.comm_rate / scene.norm_comm;
        assert!((half.wsnr - expect).abs() < 1e-14);
        assert!(half.wsnr >= 0.0 && half.wsnr <= 1.0 + 1e-9);
    }

    #[test]
    fn rates_monotone_along_rays() {
        let scene = test_scene(4, 4, 2, 6, 9);
        let mut rng = derive_rng(7, 7, 0);
        let base: Vec<f64> = {
            let s = random_spectrum(4, scene.sense_power * 0.25, &mut rng);
            s.values().to_vec()
        };
        let mut prev_s = f64::NEG_INFINITY;
        let mut prev_c = f64::INFINITY;
        for c in [1.0, 1.5, 2.0, 3.0] {
            let v: Vec<f64> = base.iter().map(|x| x * c).collect();
            let sp = PowerSpectrum::new(v, scene.sense_power).unwrap();
            let rs = reduced_sense_rate(&sp, &scene);
            let rc = reduced_comm_rate(&sp, &scene).unwrap();
            assert!(rs >= prev_s - 1e-12);
            assert!(rc <= prev_c + 1e-12);
            prev_s = rs;
            prev_c = rc;
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn kron_identities_hold_for_random_dims(
            m in 1usize..4,
            n in 1usize..4,
            seed in 0u64..1000,
        ) {
            let mut rng = derive_rng(seed, 99, 0);
            let a = gaussian_cmat(m, m, &mut rng);
            let b = gaussian_cmat(m, m, &mut rng);
            let c = gaussian_cmat(n, n, &mut rng);
            let d = gaussian_cmat(n, n, &mut rng);
            let eye = CMat::identity(m * n, m * n);
            let scale = (&eye + (&a * &b).kronecker(&(&c * &d))).determinant().norm();
            prop_assert!(kron_det_identity(&a, &b, &c, &d).unwrap() <= 1e-8 * scale.max(1.0));
            let x = gaussian_cmat(m, n, &mut rng);
            let y = gaussian_cmat(n, m, &mut rng);
            prop_assert!(kron_vec_identity(&a, &x, &y).unwrap() < 1e-10 * (1.0 + scale));
        }
    }
}
