use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::config::{Algorithm, ExperimentConfig};
use super::table::ResultRow;
use crate::amp::{run_gamp, run_vamp, AmpOptions};
use crate::baselines::{
    estimate_almmse, estimate_bpdn, estimate_ls, estimate_qiht, BpdnOptions, LinearizedModel, QihtOptions,
};
use crate::channel::{
    angle_to_antenna, draw_clusters, synthesize_taps, unvec_taps, ArrayGeometry, ChannelRealization, ClusterConfig,
    PulseShape,
};
use crate::denoisers::{OutputChannel, PriorKind, PriorParams};
use crate::metrics::{achievable_rate, mi_lower_bound, nmse, normalize, ofdm_channels, to_db, NormEstimate};
use crate::operator::MeasurementOperator;
use crate::quantizer::{quantize, stepsize_table, PowerEstimate, QuantizerSpec};
use crate::training::build_training;
use crate::{norm_sqr, Error, Result};

const CHANNEL_STREAM: u64 = 1;
const TRAINING_STREAM: u64 = 2;
const NOISE_STREAM: u64 = 3;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent generator for a tuple of counters under a base seed.
pub fn stream_rng(seed: u64, keys: &[u64]) -> ChaCha8Rng {
    let mut h = splitmix(seed);
    for k in keys {
        h = splitmix(h ^ splitmix(*k));
    }
    ChaCha8Rng::seed_from_u64(h)
}

/// `σ_w² = P_t / 10^{SNR/10}`.
pub fn noise_variance(power: f64, snr_db: f64) -> f64 {
    power / 10f64.powf(snr_db / 10.0)
}

pub fn draw_channel(cfg: &ExperimentConfig, trial: usize) -> Result<ChannelRealization> {
    let tx = ArrayGeometry::with_spacing(cfg.arrays.tx[0], cfg.arrays.tx[1], cfg.arrays.spacing)?;
    let rx = ArrayGeometry::with_spacing(cfg.arrays.rx[0], cfg.arrays.rx[1], cfg.arrays.spacing)?;
    let cc = ClusterConfig {
        n_clusters: cfg.channel.clusters,
        paths_per_cluster: cfg.channel.paths,
        angular_spread: cfg.channel.spread_deg.to_radians(),
        delay_taps: cfg.channel.taps,
        pulse: PulseShape { rolloff: cfg.channel.rolloff, symbol_period: 1.0 },
        cluster_powers: cfg.channel.cluster_powers.clone(),
        ..ClusterConfig::default()
    };
    let mut rng = stream_rng(cfg.seed, &[CHANNEL_STREAM, trial as u64]);
    let params = draw_clusters(&mut rng, &cc)?;
    synthesize_taps(&params, &tx, &rx)
}

pub fn complex_noise(rng: &mut ChaCha8Rng, n: usize, var: f64) -> Vec<Complex64> {
    let s = (var / 2.0).sqrt();
    (0..n)
        .map(|_| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            Complex64::new(re * s, im * s)
        })
        .collect()
}

/// Everything an estimator may use about one quantized block.
#[derive(Debug)]
pub struct Measurement<'a> {
    pub op: &'a MeasurementOperator,
    pub y: Vec<Complex64>,
    pub spec: QuantizerSpec,
    pub power: PowerEstimate,
    pub noise_var: f64,
    pub norm: NormEstimate,
}

impl<'a> Measurement<'a> {
    /// Quantizes `ẑ = A x + w` after an ideal power measurement.
    pub fn new(op: &'a MeasurementOperator, z: &[Complex64], spec: QuantizerSpec, noise_var: f64) -> Result<Self> {
        let power = PowerEstimate::measure(z);
        let y = quantize(z, &spec, &power)?;
        let norm = NormEstimate::from_operator(norm_sqr(z), op, noise_var);
        Ok(Self { op, y, spec, power, noise_var, norm })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    /// Normalized estimate.
    pub x: Vec<Complex64>,
    pub iterations: Option<usize>,
    pub converged: Option<bool>,
}

/// Runs one algorithm and applies the norm normalization.
pub fn estimate(
    algo: Algorithm,
    m: &Measurement<'_>,
    cfg: &ExperimentConfig,
    truth: &[Complex64],
) -> Result<Estimate> {
    let sx = m.norm.signal_var;
    let amp_opts = AmpOptions {
        max_iter: cfg.algorithms.max_iter,
        tol: cfg.algorithms.tol,
        damping: cfg.algorithms.damping,
        learn_prior: true,
    };
    let ch = || OutputChannel::new(m.spec, m.power, m.noise_var);
    let prior = |kind| PriorParams::initial(kind, cfg.algorithms.gm_order, sx);
    let (raw, iterations, converged) = match algo {
        Algorithm::Perfect => return Ok(Estimate { x: truth.to_vec(), iterations: None, converged: None }),
        Algorithm::Ls => (estimate_ls(m.op, &m.y)?, None, None),
        Algorithm::Almmse => (estimate_almmse(m.op, &m.y, m.noise_var, sx, m.spec.nmse)?, None, None),
        Algorithm::Bpdn => {
            let lin = LinearizedModel::new(m.spec.nmse, m.noise_var, m.op.training().power, m.op.delay_taps(), sx);
            let r = estimate_bpdn(m.op, &m.y, &lin, &BpdnOptions::default())?;
            (r.x_hat, None, Some(r.met))
        }
        Algorithm::Qiht => {
            let r = estimate_qiht(m.op, &m.y, &m.spec, &m.power, &QihtOptions::default(), None)?;
            (r.x_hat, Some(r.iterations), Some(r.converged))
        }
        Algorithm::EmBgGamp | Algorithm::EmGmGamp | Algorithm::EmBgVamp | Algorithm::EmGmVamp => {
            let kind = match algo {
                Algorithm::EmBgGamp | Algorithm::EmBgVamp => PriorKind::BernoulliGaussian,
                _ => PriorKind::GaussianMixture,
            };
            let r = match algo {
                Algorithm::EmBgGamp | Algorithm::EmGmGamp => run_gamp(m.op, &m.y, &ch()?, &prior(kind), &amp_opts, None)?,
                _ => run_vamp(m.op, &m.y, &ch()?, &prior(kind), &amp_opts, None)?,
            };
            if let Some(msg) = r.diverged {
                return Err(Error::Config(format!("{algo} diverged: {msg}")));
            }
            (r.x_hat, Some(r.iterations), Some(r.converged))
        }
    };
    let (x, _) = normalize(&raw, &m.norm);
    Ok(Estimate { x, iterations, converged })
}

struct RateContext {
    g: Vec<nalgebra::DMatrix<Complex64>>,
}

fn score_rate(
    ctx: &RateContext,
    cfg: &ExperimentConfig,
    chan: &ChannelRealization,
    x: &[Complex64],
    eta: f64,
    noise_var: f64,
    n_p: usize,
) -> Result<(f64, f64)> {
    let (nr, nt) = (chan.rx.len(), chan.tx.len());
    let h_hat = angle_to_antenna(&unvec_taps(x, nr, nt)?, &chan.tx, &chan.rx)?;
    let g_hat = ofdm_channels(&h_hat, cfg.rate.n_b);
    let budget = cfg.training.power * cfg.rate.n_b as f64;
    let mi = mi_lower_bound(&ctx.g, &g_hat, eta, noise_var, budget)?;
    Ok((mi, achievable_rate(mi, n_p, cfg.rate.n_co)?))
}

fn panic_message(p: Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| p.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "panic".into())
}

fn run_unit(cfg: &ExperimentConfig, np_idx: usize, trial: usize) -> Vec<ResultRow> {
    let n_p = cfg.training.np[np_idx];
    let mut rows = Vec::new();
    let template = |snr_db: f64, bits, algorithm| ResultRow {
        n_p,
        snr_db,
        bits,
        train: cfg.training.kind,
        algorithm,
        trial,
        seed: cfg.seed,
        nmse: None,
        mi: None,
        rate: None,
        iterations: None,
        converged: None,
        wall_ms: None,
        error: None,
    };
    let fail_all = |rows: &mut Vec<ResultRow>, msg: &str| {
        for &snr in &cfg.sweep.snr_db {
            for &b in &cfg.sweep.bits {
                for &a in &cfg.algorithms.list {
                    rows.push(ResultRow { error: Some(msg.to_string()), ..template(snr, b, a) });
                }
            }
        }
    };

    let setup = (|| -> Result<_> {
        let chan = draw_channel(cfg, trial)?;
        let mut rng = stream_rng(cfg.seed, &[TRAINING_STREAM, trial as u64, n_p as u64]);
        let t = build_training(cfg.training.kind, n_p, chan.tx.len(), cfg.channel.taps, cfg.training.power, &mut rng)?;
        let op = MeasurementOperator::new(t, chan.tx, chan.rx)?;
        let truth = chan.vec_x();
        let z0 = op.apply(&truth)?;
        let rate = if cfg.rate.enabled { Some(RateContext { g: ofdm_channels(&chan.h, cfg.rate.n_b) }) } else { None };
        Ok((chan, op, truth, z0, rate))
    })();
    let (chan, op, truth, z0, rate_ctx) = match setup {
        Ok(v) => v,
        Err(e) => {
            fail_all(&mut rows, &e.to_string());
            return rows;
        }
    };

    for (snr_idx, &snr_db) in cfg.sweep.snr_db.iter().enumerate() {
        let noise_var = noise_variance(cfg.training.power, snr_db);
        let mut rng = stream_rng(cfg.seed, &[NOISE_STREAM, trial as u64, n_p as u64, snr_idx as u64]);
        let w = complex_noise(&mut rng, op.n_y(), noise_var);
        let z: Vec<Complex64> = z0.iter().zip(&w).map(|(a, b)| a + b).collect();
        for &bits in &cfg.sweep.bits {
            let meas = stepsize_table(bits).and_then(|spec| Measurement::new(&op, &z, spec, noise_var));
            let meas = match meas {
                Ok(m) => m,
                Err(e) => {
                    for &a in &cfg.algorithms.list {
                        rows.push(ResultRow { error: Some(e.to_string()), ..template(snr_db, bits, a) });
                    }
                    continue;
                }
            };
            for &algo in &cfg.algorithms.list {
                let mut row = template(snr_db, bits, algo);
                let start = Instant::now();
                let outcome = catch_unwind(AssertUnwindSafe(|| estimate(algo, &meas, cfg, &truth)));
                let elapsed = start.elapsed().as_secs_f64() * 1e3;
                let est = match outcome {
                    Ok(Ok(e)) => e,
                    Ok(Err(e)) => {
                        row.error = Some(e.to_string());
                        rows.push(row);
                        continue;
                    }
                    Err(p) => {
                        row.error = Some(format!("panic: {}", panic_message(p)));
                        rows.push(row);
                        continue;
                    }
                };
                if cfg.output.timing {
                    row.wall_ms = Some(elapsed);
                }
                row.iterations = est.iterations;
                row.converged = est.converged;
                match nmse(&est.x, &truth) {
                    Ok(v) => row.nmse = Some(v),
                    Err(e) => row.error = Some(e.to_string()),
                }
                if let Some(ctx) = &rate_ctx {
                    match score_rate(ctx, cfg, &chan, &est.x, meas.spec.nmse, noise_var, n_p) {
                        Ok((mi, rate)) => {
                            row.mi = Some(mi);
                            row.rate = Some(rate);
                        }
                        Err(e) => row.error = Some(e.to_string()),
                    }
                }
                if let Some(v) = row.nmse {
                    log::debug!("trial {trial} N_p={n_p} snr={snr_db} bits={bits} {algo}: {:.2} dB", to_db(v));
                }
                rows.push(row);
            }
        }
    }
    rows
}

/// Runs every (N_p, trial) unit in parallel and returns canonically sorted rows.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    let units: Vec<(usize, usize)> = (0..cfg.training.np.len())
        .flat_map(|i| (0..cfg.trials).map(move |t| (i, t)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let mut rows: Vec<ResultRow> =
        pool.install(|| units.par_iter().flat_map_iter(|&(i, t)| run_unit(cfg, i, t)).collect());
    let snr_rank = |v: f64| cfg.sweep.snr_db.iter().position(|s| *s == v).unwrap_or(usize::MAX);
    rows.sort_by(|a, b| {
        (a.n_p, snr_rank(a.snr_db), a.bits, a.train, a.algorithm, a.trial).cmp(&(
            b.n_p,
            snr_rank(b.snr_db),
            b.bits,
            b.train,
            b.algorithm,
            b.trial,
        ))
    });
    let failed = rows.iter().filter(|r| r.error.is_some()).count();
    if failed > 0 {
        log::warn!("{failed} of {} rows failed", rows.len());
    }
    Ok(rows)
}
