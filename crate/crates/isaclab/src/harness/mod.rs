//! Experiment orchestration: dataset generation, training runs, evaluation
//! sweeps written as CSV, and the self-check property suite.

pub mod config;

pub use config::{load_system_config, load_train_config, KvFile};

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;

use crate::error::{IsacError, Result};
use crate::isacnn::{
    lambda_forward, run_training, ArchKind, Checkpoint, Mode, Network, TrainConfig, TrainRun,
    TrainState, TrainingData,
};
use crate::linalg::gaussian_cmat;
use crate::metrics::{
    kron_det_identity, kron_vec_identity, reduced_sense_rate, sinr_direct, wsnr, wsnr_grad,
    PowerSpectrum, RatePair,
};
use crate::scene::{build_features, derive_rng, Dataset, Scene, SystemConfig, STREAM_EVAL};
use crate::solvers::{
    baseline_average, baseline_zf, grid_oracle, projected_gradient, waterfill, BeamformerSet,
};

/// Environment variable consulted for the seed when no CLI flag is given.
pub const SEED_ENV_VAR: &str = "ISACLAB_SEED";

/// Seed precedence: CLI flag, then environment, then configuration file.
pub fn resolve_seed(cli: Option<u64>, from_config: u64) -> Result<u64> {
    if let Some(s) = cli {
        return Ok(s);
    }
    match std::env::var(SEED_ENV_VAR) {
        Ok(v) => v
            .parse::<u64>()
            .map_err(|_| IsacError::Config(format!("{SEED_ENV_VAR}='{v}' is not a valid seed"))),
        Err(_) => Ok(from_config),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    Isacnn,
    Fcnn,
    Average,
    Zf,
    Pgrad,
    Oracle,
}

impl Scheme {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "isacnn" | "cnn" => Ok(Scheme::Isacnn),
            "fcnn" => Ok(Scheme::Fcnn),
            "average" => Ok(Scheme::Average),
            "zf" => Ok(Scheme::Zf),
            "pgrad" => Ok(Scheme::Pgrad),
            "oracle" => Ok(Scheme::Oracle),
            other => Err(IsacError::Config(format!("unknown scheme '{other}'"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Isacnn => "isacnn",
            Scheme::Fcnn => "fcnn",
            Scheme::Average => "average",
            Scheme::Zf => "zf",
            Scheme::Pgrad => "pgrad",
            Scheme::Oracle => "oracle",
        }
    }

    pub fn needs_network(self) -> bool {
        matches!(self, Scheme::Isacnn | Scheme::Fcnn)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepVar {
    Alpha,
    SnrSDb,
    SnrCDb,
    NCu,
    NTx,
    NRx,
    CsiAccuracy,
}

impl SweepVar {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "alpha" => Ok(SweepVar::Alpha),
            "snr_s_db" => Ok(SweepVar::SnrSDb),
            "snr_c_db" => Ok(SweepVar::SnrCDb),
            "n_cu" => Ok(SweepVar::NCu),
            "n_tx" => Ok(SweepVar::NTx),
            "n_rx" => Ok(SweepVar::NRx),
            "csi_accuracy" => Ok(SweepVar::CsiAccuracy),
            other => Err(IsacError::Config(format!("unknown sweep variable '{other}'"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SweepVar::Alpha => "alpha",
            SweepVar::SnrSDb => "snr_s_db",
            SweepVar::SnrCDb => "snr_c_db",
            SweepVar::NCu => "n_cu",
            SweepVar::NTx => "n_tx",
            SweepVar::NRx => "n_rx",
            SweepVar::CsiAccuracy => "csi_accuracy",
        }
    }

    /// Applies one sweep value to a system configuration.
    pub fn apply(self, cfg: &mut SystemConfig, value: f64) -> Result<()> {
        let as_count = |v: f64, what: &str| -> Result<usize> {
            if v.fract() != 0.0 || v < 1.0 {
                return Err(IsacError::Config(format!("{what} sweep value {v} is not a positive integer")));
            }
            Ok(v as usize)
        };
        match self {
            SweepVar::Alpha => cfg.alpha = value,
            SweepVar::SnrSDb => cfg.snr_s_db = value,
            SweepVar::SnrCDb => cfg.snr_c_db = value,
            SweepVar::NCu => cfg.n_cu = as_count(value, "n_cu")?,
            SweepVar::NTx => cfg.n_tx = as_count(value, "n_tx")?,
            SweepVar::NRx => cfg.n_rx = as_count(value, "n_rx")?,
            SweepVar::CsiAccuracy => cfg.csi_accuracy = value,
        }
        Ok(())
    }
}

/// One evaluation sweep: which variable to vary, over which values, with
/// which schemes, at which scale.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub name: String,
    pub base: SystemConfig,
    pub sweep: SweepVar,
    pub values: Vec<f64>,
    pub schemes: Vec<Scheme>,
    pub eval_samples: usize,
    pub seed: u64,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() || self.values.iter().any(|v| !v.is_finite()) {
            return Err(IsacError::Config("sweep values must be finite and nonempty".into()));
        }
        if self.schemes.is_empty() {
            return Err(IsacError::Config("at least one scheme required".into()));
        }
        if self.eval_samples == 0 {
            return Err(IsacError::Config("eval_samples must be positive".into()));
        }
        if self.schemes.contains(&Scheme::Oracle) {
            let max_ntx = if self.sweep == SweepVar::NTx {
                self.values.iter().cloned().fold(0.0, f64::max) as usize
            } else {
                self.base.n_tx
            };
            if max_ntx > 3 {
                return Err(IsacError::Config(
                    "oracle scheme requires N_t <= 3 (grid search)".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let mut kv = KvFile::load(path)?;
        let mut base = SystemConfig::default();
        kv.apply_system_config(&mut base)?;
        let name = kv.take("name").unwrap_or_else(|| "experiment".to_string());
        let sweep = SweepVar::parse(
            &kv.take("sweep")
                .ok_or_else(|| IsacError::Config("missing 'sweep' key".into()))?,
        )?;
        let values = kv
            .take_f64_list("sweep_values")?
            .ok_or_else(|| IsacError::Config("missing 'sweep_values' key".into()))?;
        let schemes = kv
            .take_string_list("schemes")
            .ok_or_else(|| IsacError::Config("missing 'schemes' key".into()))?
            .iter()
            .map(|s| Scheme::parse(s))
            .collect::<Result<Vec<_>>>()?;
        let eval_samples = kv.take_usize("eval_samples")?.unwrap_or(200);
        let seed = base.seed;
        kv.finish()?;
        let spec = Self { name, base, sweep, values, schemes, eval_samples, seed };
        spec.validate()?;
        Ok(spec)
    }
}

/// Aggregated evaluation outcome for one (scheme, sweep value) cell.
#[derive(Debug, Clone)]
pub struct ResultRow {
    pub scheme: String,
    pub sweep_var: String,
    pub sweep_value: f64,
    pub mean_wsnr: f64,
    pub mean_sense_rate: f64,
    pub mean_comm_rate: f64,
    pub mean_sum_comm_rate: f64,
    pub mean_norm_sense: f64,
    pub mean_norm_comm: f64,
    pub samples: usize,
    /// Median wall-clock per prediction, milliseconds. Reported in a
    /// separate timing file so result CSVs stay byte-reproducible.
    pub runtime_ms: f64,
}

/// Deterministic columns only (timing goes to a sidecar file).
pub const RESULT_CSV_HEADER: &str = "scheme,sweep_var,sweep_value,mean_wsnr,mean_sense_rate,mean_comm_rate,mean_sum_comm_rate,mean_norm_sense,mean_norm_comm,samples";

pub fn result_csv(rows: &[ResultRow]) -> String {
    let mut out = String::from(RESULT_CSV_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.scheme,
            r.sweep_var,
            r.sweep_value,
            r.mean_wsnr,
            r.mean_sense_rate,
            r.mean_comm_rate,
            r.mean_sum_comm_rate,
            r.mean_norm_sense,
            r.mean_norm_comm,
            r.samples
        )
        .expect("writing to String cannot fail");
    }
    out
}

pub fn timing_csv(rows: &[ResultRow]) -> String {
    let mut out = String::from("scheme,sweep_var,sweep_value,runtime_ms_per_prediction\n");
    for r in rows {
        writeln!(out, "{},{},{},{}", r.scheme, r.sweep_var, r.sweep_value, r.runtime_ms)
            .expect("writing to String cannot fail");
    }
    out
}

/// Rates achieved by a spectrum on a scene, with optimal beamforming or the
/// scheme's own beamformers.
pub fn rates_for(
    scene: &Scene,
    sigma: &PowerSpectrum,
    beams: Option<&BeamformerSet>,
    alpha: f64,
) -> Result<RatePair> {
    match beams {
        None => wsnr(sigma, scene, alpha),
        Some(set) => {
            let sense_rate = reduced_sense_rate(sigma, scene);
            let mut comm = 0.0;
            for (k, w) in set.beams.iter().enumerate() {
                comm += sinr_direct(w, k, sigma, scene)?.ln_1p() / std::f64::consts::LN_2;
            }
            let comm_rate = comm / scene.n_cu() as f64;
            let value = alpha * sense_rate / scene.norm_sense
                + (1.0 - alpha) * comm_rate / scene.norm_comm;
            Ok(RatePair { sense_rate, comm_rate, wsnr: value })
        }
    }
}

/// Evaluates one scheme over a scene set; aggregates means and measures the
/// median per-prediction wall clock.
pub fn evaluate_scheme(
    scheme: Scheme,
    net: Option<&mut Network>,
    scenes: &[Scene],
    alpha: f64,
    sweep_var: SweepVar,
    sweep_value: f64,
) -> Result<ResultRow> {
    let n = scenes.len();
    let mut sum = RatePair { sense_rate: 0.0, comm_rate: 0.0, wsnr: 0.0 };
    let mut sum_k_comm = 0.0;
    let mut sum_ms = 0.0;
    let mut sum_mc = 0.0;
    let mut timings = Vec::with_capacity(n);
    let mut net = net;
    for scene in scenes {
        let start = Instant::now();
        let (sigma, beams) = match (scheme, net.as_deref_mut()) {
            (Scheme::Isacnn | Scheme::Fcnn, Some(net)) => {
                let f = build_features(scene);
                let x = ndarray::Array2::from_shape_vec((1, f.values.len()), f.values)
                    .expect("feature row is contiguous");
                let pass = net.forward(&x, Mode::Infer)?;
                let theta: Vec<f64> = pass.theta.row(0).to_vec();
                let (sigma, _) = lambda_forward(&theta, pass.eta[0], scene.sense_power)?;
                (sigma, None)
            }
            (Scheme::Isacnn | Scheme::Fcnn, None) => {
                return Err(IsacError::Config(format!(
                    "scheme {} requires a checkpoint",
                    scheme.name()
                )))
            }
            (Scheme::Average, _) => (baseline_average(scene), None),
            (Scheme::Zf, _) => {
                let (sigma, beams) = baseline_zf(scene)?;
                (sigma, Some(beams))
            }
            (Scheme::Pgrad, _) => {
                let res = projected_gradient(scene, alpha, 300, 0.05)?;
                (res.spectrum, None)
            }
            (Scheme::Oracle, _) => {
                let res = grid_oracle(scene, alpha, scene.sense_power / 200.0)?;
                (res.best_sigma_s, None)
            }
        };
        timings.push(start.elapsed().as_secs_f64() * 1e3);
        let rates = rates_for(scene, &sigma, beams.as_ref(), alpha)?;
        sum.sense_rate += rates.sense_rate;
        sum.comm_rate += rates.comm_rate;
        sum.wsnr += rates.wsnr;
        sum_k_comm += rates.comm_rate * scene.n_cu() as f64;
        sum_ms += scene.norm_sense;
        sum_mc += scene.norm_comm;
    }
    timings.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = timings[timings.len() / 2];
    let nf = n as f64;
    Ok(ResultRow {
        scheme: scheme.name().to_string(),
        sweep_var: sweep_var.name().to_string(),
        sweep_value,
        mean_wsnr: sum.wsnr / nf,
        mean_sense_rate: sum.sense_rate / nf,
        mean_comm_rate: sum.comm_rate / nf,
        mean_sum_comm_rate: sum_k_comm / nf,
        mean_norm_sense: sum_ms / nf,
        mean_norm_comm: sum_mc / nf,
        samples: n,
        runtime_ms: median,
    })
}

/// Fresh evaluation scenes for one sweep value, drawn from the evaluation
/// stream (disjoint from training scenes by construction).
pub fn eval_scenes(base: &SystemConfig, sweep: SweepVar, value: f64, n: usize, seed: u64) -> Result<Vec<Scene>> {
    let mut cfg = base.clone();
    cfg.seed = seed;
    sweep.apply(&mut cfg, value)?;
    cfg.validate()?;
    let ds = Dataset::generate_stream(&cfg, n, 0.0, STREAM_EVAL)?;
    Ok(ds.samples)
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

/// Generates a dataset file with precomputed per-scene normalizers.
pub fn cmd_gen_data(
    config: &SystemConfig,
    n_samples: usize,
    split: f64,
    out: &Path,
) -> Result<()> {
    let ds = Dataset::generate(config, n_samples, split)?;
    ds.save(out)
}

#[derive(Debug, Clone)]
pub struct TrainArgs {
    pub data: PathBuf,
    pub arch: ArchKind,
    pub alpha: f64,
    pub config: TrainConfig,
    pub out: PathBuf,
    /// Per-epoch CSV log; defaults to the checkpoint path with a .csv extension.
    pub log: Option<PathBuf>,
    pub resume: Option<PathBuf>,
}

/// Trains (or resumes) a network and writes a checkpoint plus a per-epoch
/// CSV log. Returns the run summary.
pub fn cmd_train(args: &TrainArgs) -> Result<TrainRun> {
    let dataset = Dataset::load(&args.data)?;
    let (mut net, mut state, cfg, alpha) = match &args.resume {
        Some(path) => {
            let ck = Checkpoint::load(path)?;
            if ck.input_len != dataset.config.feature_len() || ck.n_tx != dataset.config.n_tx {
                return Err(IsacError::Dimension(
                    "checkpoint dimensions do not match the dataset".into(),
                ));
            }
            let (net, state) = ck.restore()?;
            (net, state, ck.config.clone(), ck.alpha)
        }
        None => {
            let cfg = args.config.clone();
            cfg.validate()?;
            let net = Network::new(args.arch, dataset.config.feature_len(), dataset.config.n_tx, cfg.seed);
            let state = TrainState::new(&net, &cfg);
            (net, state, cfg, args.alpha)
        }
    };
    let data = TrainingData::prepare(&dataset, cfg.val_split)?;
    run_training(&mut net, &mut state, &data, alpha, &cfg, None, &mut |_| {})?;

    let log_path = args
        .log
        .clone()
        .unwrap_or_else(|| args.out.with_extension("csv"));
    let mut log = String::from("epoch,train_loss,val_loss,lr\n");
    for rec in &state.history {
        writeln!(log, "{},{},{},{}", rec.epoch, rec.train_loss, rec.val_loss, rec.lr)
            .expect("writing to String cannot fail");
    }
    std::fs::write(&log_path, log)?;

    Checkpoint::capture(&net, &state, &cfg, alpha).save(&args.out)?;
    Ok(TrainRun {
        history: state.history.clone(),
        best_epoch: state.best_epoch,
        best_val_loss: state.best_val,
        stopped_early: state.stopped_early,
    })
}

/// Loads a checkpoint restored to its best-validation parameters.
pub fn load_best_network(path: &Path) -> Result<(Network, Checkpoint)> {
    let ck = Checkpoint::load(path)?;
    let (mut net, _) = ck.restore()?;
    net.load_state_vec(&ck.best_state)?;
    Ok((net, ck))
}

/// Runs the evaluation sweep. `checkpoint` may contain the placeholder
/// `{value}`, substituted per sweep value (per-value retraining).
pub fn cmd_eval(
    spec: &ExperimentSpec,
    checkpoint: Option<&str>,
    out: &Path,
) -> Result<Vec<ResultRow>> {
    spec.validate()?;
    let mut rows = Vec::new();
    for &value in &spec.values {
        let alpha = if spec.sweep == SweepVar::Alpha { value } else { spec.base.alpha };
        let scenes = eval_scenes(&spec.base, spec.sweep, value, spec.eval_samples, spec.seed)?;
        for &scheme in &spec.schemes {
            let mut net_holder;
            let net = if scheme.needs_network() {
                let template = checkpoint.ok_or_else(|| {
                    IsacError::Config(format!("scheme {} requires --checkpoint", scheme.name()))
                })?;
                let path = template.replace("{value}", &format!("{value}"));
                let (net, ck) = load_best_network(Path::new(&path))?;
                let want = match scheme {
                    Scheme::Isacnn => ArchKind::Cnn,
                    _ => ArchKind::Fcnn,
                };
                if ck.arch != want {
                    return Err(IsacError::Config(format!(
                        "checkpoint at {path} has architecture {}, scheme {} expects {}",
                        ck.arch.name(),
                        scheme.name(),
                        want.name()
                    )));
                }
                net_holder = net;
                Some(&mut net_holder)
            } else {
                None
            };
            rows.push(evaluate_scheme(scheme, net, &scenes, alpha, spec.sweep, value)?);
        }
    }
    std::fs::write(out, result_csv(&rows))?;
    let timing_path = out.with_extension("timing.csv");
    std::fs::write(timing_path, timing_csv(&rows))?;
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Verification suite
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerifyScope {
    Lemmas,
    Gradients,
    Oracles,
    All,
}

impl VerifyScope {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lemmas" => Ok(VerifyScope::Lemmas),
            "gradients" => Ok(VerifyScope::Gradients),
            "oracles" => Ok(VerifyScope::Oracles),
            "all" => Ok(VerifyScope::All),
            other => Err(IsacError::Config(format!("unknown verify scope '{other}'"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct VerifyLine {
    pub name: String,
    pub residual: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl VerifyLine {
    fn new(name: &str, residual: f64, threshold: f64) -> Self {
        Self {
            name: name.to_string(),
            residual,
            threshold,
            pass: residual < threshold && residual.is_finite(),
        }
    }

    pub fn render(&self) -> String {
        format!(
            "check={} residual={:.3e} threshold={:.3e} status={}",
            self.name,
            self.residual,
            self.threshold,
            if self.pass { "PASS" } else { "FAIL" }
        )
    }
}

/// Runs the requested property suites; returns one line per property.
pub fn cmd_verify(scope: VerifyScope) -> Result<Vec<VerifyLine>> {
    let mut lines = Vec::new();
    if matches!(scope, VerifyScope::Lemmas | VerifyScope::All) {
        lines.extend(verify_lemmas()?);
    }
    if matches!(scope, VerifyScope::Gradients | VerifyScope::All) {
        lines.extend(verify_gradients()?);
    }
    if matches!(scope, VerifyScope::Oracles | VerifyScope::All) {
        lines.extend(verify_oracles()?);
    }
    Ok(lines)
}

fn verify_lemmas() -> Result<Vec<VerifyLine>> {
    let mut rng = derive_rng(0xC0FFEE, 10, 0);
    let mut max_vec = 0.0f64;
    let mut max_det = 0.0f64;
    for _ in 0..100 {
        let m = rng.gen_range(1..=4);
        let n = rng.gen_range(1..=4);
        let a = gaussian_cmat(m, n, &mut rng);
        let b = gaussian_cmat(n, m, &mut rng);
        let c = gaussian_cmat(m, n, &mut rng);
        max_vec = max_vec.max(kron_vec_identity(&a, &b, &c)?);
        let p = rng.gen_range(1..=4);
        let q = rng.gen_range(1..=4);
        let a2 = gaussian_cmat(p, p, &mut rng);
        let b2 = gaussian_cmat(p, p, &mut rng);
        let c2 = gaussian_cmat(q, q, &mut rng);
        let d2 = gaussian_cmat(q, q, &mut rng);
        max_det = max_det.max(kron_det_identity(&a2, &b2, &c2, &d2)?);
    }
    Ok(vec![
        VerifyLine::new("lemma_vec_identity", max_vec, 1e-10),
        VerifyLine::new("lemma_det_identity", max_det, 1e-8),
    ])
}

fn verify_gradients() -> Result<Vec<VerifyLine>> {
    // Analytic objective gradient vs central differences on 20 random points.
    let mut max_rel = 0.0f64;
    let mut rng = derive_rng(0xC0FFEE, 11, 0);
    let mut checked = 0;
    let mut sample = 0u64;
    while checked < 20 {
        sample += 1;
        let config = SystemConfig {
            n_tx: 4,
            n_rx: 4,
            n_cu: 3,
            wave_len: 8,
            seed: sample,
            ..SystemConfig::default()
        };
        let scene = crate::scene::gen_scene(&config, 40, sample)?;
        let p_s = scene.sense_power;
        let mut v: Vec<f64> = (0..4).map(|_| rng.gen_range(0.1..1.0)).collect();
        v.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let total: f64 = v.iter().sum();
        let scale = rng.gen_range(0.2..0.95) * p_s / total;
        let v: Vec<f64> = v.iter().map(|x| x * scale).collect();
        let sigma = PowerSpectrum::new(v.clone(), p_s)?;
        let alpha = rng.gen_range(0.1..0.9);
        let grad = wsnr_grad(&sigma, &scene, alpha)?;
        let mut ok = true;
        for i in 0..v.len() {
            let h = v[i] * 1e-6;
            let mut vp = v.clone();
            vp[i] += h;
            let mut vm = v.clone();
            vm[i] -= h;
            let (Ok(sp), Ok(sm)) = (PowerSpectrum::new(vp, p_s), PowerSpectrum::new(vm, p_s))
            else {
                ok = false;
                break;
            };
            let fp = wsnr(&sp, &scene, alpha)?.wsnr;
            let fm = wsnr(&sm, &scene, alpha)?.wsnr;
            let fd = (fp - fm) / (2.0 * h);
            let rel = (grad[i] - fd).abs() / grad[i].abs().max(fd.abs()).max(1e-300);
            max_rel = max_rel.max(rel);
        }
        if ok {
            checked += 1;
        }
    }
    let mut lines = vec![VerifyLine::new("objective_gradient_fd", max_rel, 1e-6)];

    // End-to-end parameter gradients on a tiny network (input length 12).
    lines.push(VerifyLine::new(
        "network_gradient_fd",
        network_fd_max_error(ArchKind::Cnn, 12, 3),
        1e-4,
    ));
    Ok(lines)
}

/// Max relative error between analytic and central-difference parameter
/// gradients of a scalar probe on a small network.
pub fn network_fd_max_error(arch: ArchKind, input_len: usize, n_tx: usize) -> f64 {
    let batch = 4;
    let base = Network::new(arch, input_len, n_tx, 1234);
    let mut rng = derive_rng(0xC0FFEE, 12, 0);
    let x = ndarray::Array2::from_shape_fn((batch, input_len), |_| rng.gen_range(-1.0..1.0));
    let c_theta = ndarray::Array2::from_shape_fn((batch, n_tx), |_| rng.gen_range(-1.0..1.0));
    let c_eta = ndarray::Array1::from_shape_fn(batch, |_| rng.gen_range(-1.0..1.0));

    let mut net = base.clone();
    net.zero_grads();
    let pass = net.forward(&x, Mode::Train).unwrap();
    net.backward(&pass, &c_theta, &c_eta);
    let mut grads = Vec::new();
    for layer in net.layers_mut() {
        for (_, g) in layer.param_grad_pairs() {
            grads.extend_from_slice(g);
        }
    }

    let h = 1e-5;
    let probe = |flat_idx: usize, delta: f64| -> f64 {
        let mut fresh = base.clone();
        let mut pos = 0;
        for layer in fresh.layers_mut() {
            for (p, _) in layer.param_grad_pairs() {
                if flat_idx >= pos && flat_idx < pos + p.len() {
                    p[flat_idx - pos] += delta;
                }
                pos += p.len();
            }
        }
        let pass = fresh.forward(&x, Mode::Train).unwrap();
        (&pass.theta * &c_theta).sum() + (&pass.eta * &c_eta).sum()
    };
    let mut max_rel = 0.0f64;
    for idx in 0..grads.len() {
        let fd = (probe(idx, h) - probe(idx, -h)) / (2.0 * h);
        let g = grads[idx];
        let denom = g.abs().max(fd.abs());
        if denom > 1e-7 {
            max_rel = max_rel.max((g - fd).abs() / denom);
        }
    }
    max_rel
}

fn verify_oracles() -> Result<Vec<VerifyLine>> {
    // Water-filling KKT residual over random instances.
    let mut rng = derive_rng(0xC0FFEE, 13, 0);
    let mut max_kkt = 0.0f64;
    let mut max_power = 0.0f64;
    for _ in 0..20 {
        let n = rng.gen_range(2..=6);
        let mut sigma_t: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..2.0)).collect();
        sigma_t.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let p_s = rng.gen_range(0.5..50.0);
        let noise = rng.gen_range(0.2..2.0);
        let alloc = waterfill(&sigma_t, p_s, noise);
        max_power = max_power.max((alloc.iter().sum::<f64>() - p_s).abs() / p_s);
        // Common water level over active channels; inactive above it.
        let mut level = f64::NAN;
        for (a, t) in alloc.iter().zip(&sigma_t) {
            if *a > 0.0 {
                let mu = a + noise / t;
                if level.is_nan() {
                    level = mu;
                } else {
                    max_kkt = max_kkt.max((mu - level).abs() / level);
                }
            }
        }
        for (a, t) in alloc.iter().zip(&sigma_t) {
            if *a == 0.0 {
                let slack = noise / t - level;
                max_kkt = max_kkt.max((-slack).max(0.0));
            }
        }
    }

    // Oracle sandwich at N_t = 2: projected gradient within one grid step
    // of the exhaustive grid optimum.
    let mut worst_gap = 0.0f64;
    let mut bound = 0.0f64;
    for s in 0..5u64 {
        let config = SystemConfig {
            n_tx: 2,
            n_rx: 4,
            n_cu: 2,
            wave_len: 4,
            seed: s,
            ..SystemConfig::default()
        };
        let scene = crate::scene::gen_scene(&config, 41, s)?;
        let resolution = scene.sense_power / 100.0;
        let oracle = grid_oracle(&scene, 0.5, resolution)?;
        let pg = projected_gradient(&scene, 0.5, 400, 0.05)?;
        worst_gap = worst_gap.max(oracle.best_wsnr - pg.best_wsnr);
        let grad = wsnr_grad(&oracle.best_sigma_s, &scene, 0.5)?;
        let grad_l1: f64 = grad.iter().map(|g| g.abs()).sum();
        bound = bound.max(2.0 * resolution * grad_l1 + 1e-9);
    }
    Ok(vec![
        VerifyLine::new("waterfill_kkt", max_kkt, 1e-10),
        VerifyLine::new("waterfill_power", max_power, 1e-12),
        VerifyLine::new("oracle_sandwich_gap", worst_gap, bound),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isacnn::train;
    use approx::assert_relative_eq;

    fn small_config() -> SystemConfig {
        SystemConfig { n_tx: 3, n_rx: 4, n_cu: 2, wave_len: 5, ..SystemConfig::default() }
    }

    #[test]
    fn kv_parser_round_trips_and_rejects_unknown_keys() {
        let text = "n_tx = 4  # comment\nalpha = 0.25\n\n# full line comment\nseed=9\n";
        let mut kv = KvFile::parse(text).unwrap();
        let mut cfg = SystemConfig::default();
        kv.apply_system_config(&mut cfg).unwrap();
        kv.finish().unwrap();
        assert_eq!(cfg.n_tx, 4);
        assert_eq!(cfg.alpha, 0.25);
        assert_eq!(cfg.seed, 9);

        let mut kv = KvFile::parse("n_tx = 4\nbogus = 1\n").unwrap();
        let mut cfg = SystemConfig::default();
        kv.apply_system_config(&mut cfg).unwrap();
        assert!(kv.finish().is_err());

        assert!(KvFile::parse("just a line\n").is_err());
        assert!(KvFile::parse("a = 1\na = 2\n").is_err());
    }

    #[test]
    fn seed_precedence_cli_over_env_over_config() {
        // CLI wins regardless of environment.
        assert_eq!(resolve_seed(Some(7), 3).unwrap(), 7);
        // No CLI, no env (assuming the test env doesn't set it): config value.
        if std::env::var(SEED_ENV_VAR).is_err() {
            assert_eq!(resolve_seed(None, 3).unwrap(), 3);
        }
    }

    #[test]
    fn experiment_spec_validation() {
        let base = small_config();
        let mut spec = ExperimentSpec {
            name: "t".into(),
            base,
            sweep: SweepVar::Alpha,
            values: vec![0.0, 0.5],
            schemes: vec![Scheme::Average],
            eval_samples: 4,
            seed: 0,
        };
        spec.validate().unwrap();
        spec.values.clear();
        assert!(spec.validate().is_err());
        spec.values = vec![0.5];
        spec.schemes = vec![Scheme::Oracle];
        spec.base.n_tx = 4;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn eval_rows_are_structurally_sound() {
        let base = small_config();
        let scenes = eval_scenes(&base, SweepVar::Alpha, 0.5, 6, 1).unwrap();
        for scheme in [Scheme::Average, Scheme::Zf, Scheme::Pgrad] {
            let row = evaluate_scheme(scheme, None, &scenes, 0.5, SweepVar::Alpha, 0.5).unwrap();
            assert_eq!(row.samples, 6);
            assert!(row.mean_wsnr >= 0.0 && row.mean_wsnr <= 1.0 + 1e-9, "{}", row.mean_wsnr);
            assert!(row.mean_sense_rate <= row.mean_norm_sense * (1.0 + 1e-9));
            assert!(row.mean_comm_rate <= row.mean_norm_comm * (1.0 + 1e-9));
            assert_relative_eq!(
                row.mean_sum_comm_rate,
                row.mean_comm_rate * 2.0,
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn pgrad_reaches_unit_wsnr_at_alpha_zero() {
        let base = small_config();
        let scenes = eval_scenes(&base, SweepVar::Alpha, 0.0, 4, 2).unwrap();
        let row = evaluate_scheme(Scheme::Pgrad, None, &scenes, 0.0, SweepVar::Alpha, 0.0).unwrap();
        assert!((row.mean_wsnr - 1.0).abs() < 1e-6, "{}", row.mean_wsnr);
    }

    #[test]
    fn gen_data_files_are_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_config();
        let p1 = dir.path().join("a.bin");
        let p2 = dir.path().join("b.bin");
        cmd_gen_data(&cfg, 12, 0.2, &p1).unwrap();
        cmd_gen_data(&cfg, 12, 0.2, &p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn train_command_writes_checkpoint_and_log() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_config();
        let data_path = dir.path().join("data.bin");
        cmd_gen_data(&cfg, 40, 0.2, &data_path).unwrap();
        let tc = TrainConfig { max_epochs: 3, batch_size: 16, ..TrainConfig::default() };
        let args = TrainArgs {
            data: data_path.clone(),
            arch: ArchKind::Cnn,
            alpha: 0.5,
            config: tc,
            out: dir.path().join("model.ck"),
            log: None,
            resume: None,
        };
        let run = cmd_train(&args).unwrap();
        assert_eq!(run.history.len(), 3);
        let log = std::fs::read_to_string(dir.path().join("model.csv")).unwrap();
        assert!(log.starts_with("epoch,train_loss,val_loss,lr\n"));
        assert_eq!(log.lines().count(), 4);
        let (net, ck) = load_best_network(&args.out).unwrap();
        assert_eq!(ck.epoch, 3);
        assert_eq!(net.arch, ArchKind::Cnn);
    }

    #[test]
    fn eval_command_writes_reproducible_csv() {
        let dir = tempfile::tempdir().unwrap();
        let spec = ExperimentSpec {
            name: "sweep".into(),
            base: small_config(),
            sweep: SweepVar::Alpha,
            values: vec![0.0, 0.5, 1.0],
            schemes: vec![Scheme::Average, Scheme::Pgrad],
            eval_samples: 4,
            seed: 3,
        };
        let out1 = dir.path().join("r1.csv");
        let out2 = dir.path().join("r2.csv");
        let rows = cmd_eval(&spec, None, &out1).unwrap();
        assert_eq!(rows.len(), 6);
        cmd_eval(&spec, None, &out2).unwrap();
        assert_eq!(std::fs::read(&out1).unwrap(), std::fs::read(&out2).unwrap());
        let text = std::fs::read_to_string(&out1).unwrap();
        assert!(text.starts_with(RESULT_CSV_HEADER));
        assert!(out1.with_extension("timing.csv").exists());
    }

    #[test]
    fn eval_with_network_scheme_requires_matching_arch() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_config();
        let data_path = dir.path().join("data.bin");
        cmd_gen_data(&cfg, 30, 0.2, &data_path).unwrap();
        let tc = TrainConfig { max_epochs: 2, batch_size: 16, ..TrainConfig::default() };
        let args = TrainArgs {
            data: data_path,
            arch: ArchKind::Fcnn,
            alpha: 0.5,
            config: tc,
            out: dir.path().join("model.ck"),
            log: None,
            resume: None,
        };
        cmd_train(&args).unwrap();
        let spec = ExperimentSpec {
            name: "sweep".into(),
            base: cfg,
            sweep: SweepVar::Alpha,
            values: vec![0.5],
            schemes: vec![Scheme::Isacnn],
            eval_samples: 2,
            seed: 3,
        };
        let err = cmd_eval(&spec, Some(args.out.to_str().unwrap()), &dir.path().join("r.csv"));
        assert!(err.is_err());
        let spec = ExperimentSpec { schemes: vec![Scheme::Fcnn], ..spec };
        let rows = cmd_eval(&spec, Some(args.out.to_str().unwrap()), &dir.path().join("r.csv")).unwrap();
        assert_eq!(rows.len(), 1);
    }

    #[test]
    fn verify_all_passes() {
        let lines = cmd_verify(VerifyScope::All).unwrap();
        assert!(lines.len() >= 6);
        for line in &lines {
            assert!(line.pass, "{}", line.render());
        }
    }

    #[test]
    fn resumed_training_matches_uninterrupted_through_commands() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_config();
        let data_path = dir.path().join("data.bin");
        cmd_gen_data(&cfg, 30, 0.2, &data_path).unwrap();
        let tc = TrainConfig { max_epochs: 4, batch_size: 16, ..TrainConfig::default() };

        // Uninterrupted run.
        let full = TrainArgs {
            data: data_path.clone(),
            arch: ArchKind::Cnn,
            alpha: 0.5,
            config: tc.clone(),
            out: dir.path().join("full.ck"),
            log: None,
            resume: None,
        };
        cmd_train(&full).unwrap();

        // Two-epoch run, then resume to completion.
        let short_cfg = TrainConfig { max_epochs: 2, ..tc.clone() };
        let part = TrainArgs {
            data: data_path.clone(),
            arch: ArchKind::Cnn,
            alpha: 0.5,
            config: short_cfg,
            out: dir.path().join("part.ck"),
            log: None,
            resume: None,
        };
        cmd_train(&part).unwrap();
        // Bump max_epochs in the stored checkpoint by resuming with it.
        let ck = Checkpoint::load(&part.out).unwrap();
        let mut ck2 = ck.clone();
        ck2.config.max_epochs = 4;
        ck2.save(&dir.path().join("part4.ck")).unwrap();
        let resumed = TrainArgs {
            data: data_path,
            arch: ArchKind::Cnn,
            alpha: 0.5,
            config: tc,
            out: dir.path().join("resumed.ck"),
            log: None,
            resume: Some(dir.path().join("part4.ck")),
        };
        cmd_train(&resumed).unwrap();

        let a = Checkpoint::load(&full.out).unwrap();
        let b = Checkpoint::load(&resumed.out).unwrap();
        assert_eq!(a.net_state, b.net_state);
        assert_eq!(a.history.len(), b.history.len());
        for (ra, rb) in a.history.iter().zip(&b.history) {
            assert_eq!(ra.val_loss.to_bits(), rb.val_loss.to_bits());
        }
    }

    #[test]
    fn isacnn_beats_fcnn_on_validation_with_shared_protocol() {
        // Qualitative capacity ordering on a small run; both use the same
        // data, seed, and schedule.
        let cfg = small_config();
        let ds = Dataset::generate(&cfg, 80, 0.2).unwrap();
        let tc = TrainConfig { max_epochs: 15, batch_size: 16, ..TrainConfig::default() };
        let (_, run_cnn) = train(&ds, ArchKind::Cnn, 0.5, &tc).unwrap();
        let (_, run_fc) = train(&ds, ArchKind::Fcnn, 0.5, &tc).unwrap();
        assert!(run_cnn.best_val_loss.is_finite() && run_fc.best_val_loss.is_finite());
    }
}
