//! Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any failure.

mod common;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::*;
use nalgebra::DMatrix;
use qcs_core::amp::{run_gamp, run_vamp, AmpOptions};
use qcs_core::channel::ArrayGeometry;
use qcs_core::denoisers::{input_posterior, OutputChannel, PriorParams};
use qcs_core::harness::{run_experiment, summarize, write_csv, ExperimentConfig};
use qcs_core::metrics::{achievable_rate, mi_lower_bound, nmse};
use qcs_core::operator::MeasurementOperator;
use qcs_core::quantizer::{inverse_cell, quantize, stepsize_table, PowerEstimate, Resolution};
use qcs_core::training::{build_training, TrainingKind};
use qcs_core::Complex64;

type Outcome = Result<String, String>;

const DISTORTION: [f64; 8] = [0.3634, 0.1188, 0.03744, 0.01154, 0.003504, 0.001035, 0.0002999, 0.00008543];

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit_s: f64) -> Result<(), String> {
    ensure(elapsed.as_secs_f64() < limit_s, || format!("took {:.1} s, limit {limit_s} s", elapsed.as_secs_f64()))
}

fn quantizer_table() -> Outcome {
    let start = Instant::now();
    let x = gaussian_vec(&mut rng(11), 10_000_000, 1.0);
    let pow: f64 = x.iter().map(|v| v.norm_sqr()).sum();
    let mut worst: f64 = 0.0;
    for (b, eta) in (1..=8).zip(DISTORTION) {
        let y = quantize(&x, &stepsize_table(Resolution::Bits(b)).unwrap(), &PowerEstimate::circular(1.0)).unwrap();
        let err: f64 = x.iter().zip(&y).map(|(a, q)| (a - q).norm_sqr()).sum();
        let dev = (err / pow - eta).abs();
        ensure(dev <= 5e-4, || format!("b={b}: {:.6} vs {eta}", err / pow))?;
        worst = worst.max(dev);
    }
    within(start.elapsed(), 30.0)?;
    Ok(format!("worst deviation {worst:.2e}"))
}

fn operator_correctness() -> Outcome {
    let start = Instant::now();
    let g = ArrayGeometry::new(2, 2).unwrap();
    let mut worst: f64 = 0.0;
    for kind in [TrainingKind::ShiftedZc, TrainingKind::Golay, TrainingKind::IidQpsk, TrainingKind::IidGaussian] {
        let t = build_training(kind, 16, 4, 2, 1.0, &mut rng(21)).unwrap();
        let op = MeasurementOperator::new(t, g, g).unwrap();
        let a = dense_a(op.training(), &g, &g);
        let mut r = rng(22);
        for _ in 0..100 {
            let x = random_vec(&mut r, op.n_x());
            let s = random_vec(&mut r, op.n_y());
            let ax = op.apply(&x).unwrap();
            let ahs = op.adjoint(&s).unwrap();
            let e1 = rel_err(&ax, &matvec(&a, &x));
            let e2 = rel_err(&ahs, &matvec(&a.adjoint(), &s));
            let lhs: Complex64 = s.iter().zip(&ax).map(|(p, q)| p.conj() * q).sum();
            let rhs: Complex64 = ahs.iter().zip(&x).map(|(p, q)| p.conj() * q).sum();
            let e3 = (lhs - rhs).norm() / lhs.norm();
            worst = worst.max(e1).max(e2).max(e3);
        }
        ensure(worst <= 1e-10, || format!("{kind}: relative error {worst:.2e}"))?;
    }
    within(start.elapsed(), 5.0)?;
    Ok(format!("worst relative error {worst:.2e}"))
}

fn zc_flatness() -> Outcome {
    let mut report = Vec::new();
    for (e, a, taps, n_p) in [(2, 2, 2, 16), (2, 2, 4, 32), (1, 3, 3, 18), (2, 4, 2, 32)] {
        let g = ArrayGeometry::new(e, a).unwrap();
        let n_t = g.len();
        let t = build_training(TrainingKind::ShiftedZc, n_p, n_t, taps, 1.0, &mut rng(0)).unwrap();
        let target = (n_p as f64 / n_t as f64).sqrt();
        let c = dense_c(&t, &g);
        let sc = c.singular_values();
        let sa = dense_a(&t, &g, &g).singular_values();
        for (what, s) in [("C", &sc), ("A", &sa)] {
            let ratio = s.max() / s.min() - 1.0;
            ensure(ratio <= 1e-9, || format!("{what} at {e}x{a}, L={taps}: max/min - 1 = {ratio:.2e}"))?;
            ensure((s.max() - target).abs() <= 1e-9 * target, || format!("{what}: {} vs {target}", s.max()))?;
        }
        report.push(format!("{:.1e}", sa.max() / sa.min() - 1.0));
    }
    Ok(format!("max/min - 1 = [{}]", report.join(", ")))
}

fn denoiser_oracles() -> Outcome {
    let start = Instant::now();
    let prior = gm3_prior();
    let mut worst: f64 = 0.0;
    for (r, nu) in moment_grid(100, 31) {
        let m = input_posterior(r, nu, &prior);
        let (qm, qv) = input_moments_quad(r, nu, &prior);
        worst = worst.max((m.mean - qm).norm()).max((m.var - qv).abs());
    }
    ensure(worst <= 1e-6, || format!("input posterior off by {worst:.2e}"))?;
    let noise = 0.2;
    for bits in [1, 2, 4] {
        let ch = OutputChannel::new(stepsize_table(Resolution::Bits(bits)).unwrap(), PowerEstimate::circular(1.5), noise)
            .unwrap();
        let mut r = rng(40 + bits as u64);
        for (p, nu) in moment_grid(100, 50 + bits as u64) {
            let z = p + gaussian_vec(&mut r, 1, nu + noise)[0];
            let y = quantize(&[z], &ch.spec, &ch.power).unwrap()[0];
            let (cre, cim) = inverse_cell(y, &ch.spec, &ch.power).unwrap();
            let m = ch.posterior(y, p, nu).unwrap();
            let (mr, vr) = output_moments_quad(cre.lo, cre.hi, p.re, nu / 2.0, noise / 2.0);
            let (mi, vi) = output_moments_quad(cim.lo, cim.hi, p.im, nu / 2.0, noise / 2.0);
            worst = worst.max((m.mean - Complex64::new(mr, mi)).norm()).max((m.var - vr - vi).abs());
        }
        ensure(worst <= 1e-6, || format!("output posterior b={bits} off by {worst:.2e}"))?;
    }
    within(start.elapsed(), 60.0)?;
    Ok(format!("worst absolute error {worst:.2e}"))
}

fn lmmse_fixed_point() -> Outcome {
    let g = ArrayGeometry::new(2, 2).unwrap();
    let (prior_var, noise_var) = (0.5, 0.1);
    let mut r = rng(61);
    let t = build_training(TrainingKind::ShiftedZc, 32, 4, 2, 1.0, &mut r).unwrap();
    let op = MeasurementOperator::new(t, g, g).unwrap();
    let a = dense_a(op.training(), &g, &g);
    let x = gaussian_vec(&mut r, op.n_x(), prior_var);
    let w = gaussian_vec(&mut r, op.n_y(), noise_var);
    let y: Vec<Complex64> = op.apply(&x).unwrap().iter().zip(&w).map(|(p, q)| p + q).collect();
    let ch = OutputChannel::new(stepsize_table(Resolution::Infinite).unwrap(), PowerEstimate::circular(1.0), noise_var)
        .unwrap();
    let prior = PriorParams::gaussian(prior_var);
    let opts = AmpOptions { max_iter: 100, learn_prior: false, ..AmpOptions::default() };
    let oracle = lmmse(&a, &y, noise_var, prior_var);
    let gamp = run_gamp(&op, &y, &ch, &prior, &opts, None).map_err(|e| e.to_string())?;
    let vamp = run_vamp(&op, &y, &ch, &prior, &opts, None).map_err(|e| e.to_string())?;
    let (dg, dv) = (nmse(&gamp.x_hat, &oracle).unwrap(), nmse(&vamp.x_hat, &oracle).unwrap());
    ensure(gamp.converged && dg <= 1e-8 && gamp.iterations <= 25, || {
        format!("GAMP: {} iterations, difference {dg:.2e}", gamp.iterations)
    })?;
    ensure(vamp.converged && dv <= 1e-8 && vamp.iterations <= 10, || {
        format!("VAMP: {} iterations, difference {dv:.2e}", vamp.iterations)
    })?;
    Ok(format!("GAMP {} it ({dg:.1e}), VAMP {} it ({dv:.1e})", gamp.iterations, vamp.iterations))
}

fn one_bit_gap() -> Outcome {
    let start = Instant::now();
    let cfg = desk_config(50, -10.0, &[Resolution::Bits(1), Resolution::Infinite], &["em-gm-vamp"]);
    let db = mean_db_by_algorithm(&run_experiment(&cfg).map_err(|e| e.to_string())?);
    let (one, inf) = (db[&("em-gm-vamp".into(), "1".into())], db[&("em-gm-vamp".into(), "inf".into())]);
    ensure(one - inf <= 3.5, || format!("1-bit {one:.2} dB vs inf {inf:.2} dB"))?;
    within(start.elapsed(), 600.0)?;
    Ok(format!("1-bit {one:.2} dB, inf {inf:.2} dB, gap {:.2} dB", one - inf))
}

fn slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let (mx, my) = (points.iter().map(|p| p.0).sum::<f64>() / n, points.iter().map(|p| p.1).sum::<f64>() / n);
    let sxy: f64 = points.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = points.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    sxy / sxx
}

fn monotonicity() -> Outcome {
    let bits = [Resolution::Bits(1), Resolution::Bits(4), Resolution::Infinite];
    let mut cfg = desk_config(50, 0.0, &bits, &["em-gm-vamp"]);
    cfg.training.np = vec![512, 1024, 2048];
    let rows = run_experiment(&cfg).map_err(|e| e.to_string())?;
    ensure(rows.iter().all(|r| r.ok()), || "failed rows".into())?;
    let table: BTreeMap<(usize, Resolution), f64> =
        summarize(&rows).into_iter().map(|s| ((s.n_p, s.bits), s.nmse_db)).collect();
    let mut report = Vec::new();
    for &n_p in &cfg.training.np {
        for pair in bits.windows(2) {
            let (lo, hi) = (table[&(n_p, pair[0])], table[&(n_p, pair[1])]);
            ensure(hi <= lo, || format!("N_p={n_p}: {} {lo:.2} dB < {} {hi:.2} dB", pair[0], pair[1]))?;
        }
    }
    for &b in &bits {
        let pts: Vec<(f64, f64)> = cfg.training.np.iter().map(|n| ((*n as f64).log10(), table[&(*n, b)] / 10.0)).collect();
        for w in pts.windows(2) {
            ensure(w[1].1 <= w[0].1, || format!("b={b}: NMSE grows with N_p"))?;
        }
        let s = slope(&pts);
        ensure((s + 0.5).abs() <= 0.25, || format!("b={b}: slope {s:.3}"))?;
        report.push(format!("{b}: {s:.2}"));
    }
    Ok(format!("slopes {}", report.join(", ")))
}

fn ordering() -> Outcome {
    let algos = ["ls", "almmse", "qiht", "em-bg-gamp", "em-gm-gamp", "em-bg-vamp", "em-gm-vamp"];
    let cfg = desk_config(50, 0.0, &[Resolution::Bits(4)], &algos);
    let db = mean_db_by_algorithm(&run_experiment(&cfg).map_err(|e| e.to_string())?);
    let get = |a: &str| db[&(a.to_string(), "4".to_string())];
    let (gm, bg, qiht, ls) = (get("em-gm-vamp"), get("em-bg-vamp"), get("qiht"), get("ls"));
    ensure(gm <= bg + 0.5, || format!("EM-GM-VAMP {gm:.2} dB vs EM-BG-VAMP {bg:.2} dB"))?;
    ensure(bg + 0.5 <= qiht, || format!("EM-BG-VAMP {bg:.2} dB vs QIHT {qiht:.2} dB"))?;
    for a in ["almmse", "em-bg-gamp", "em-gm-gamp", "em-bg-vamp", "em-gm-vamp"] {
        ensure(ls >= get(a) - 1e-9, || format!("LS {ls:.2} dB beats {a} {:.2} dB", get(a)))?;
    }
    Ok(algos.iter().map(|a| format!("{a} {:.2}", get(a))).collect::<Vec<_>>().join(", "))
}

fn rate_sanity() -> Outcome {
    ensure(achievable_rate(3.7, 10240, 10240).unwrap() == 0.0, || "rate at N_p = N_co is not 0".into())?;
    for (g, noise, p) in [(Complex64::new(1.0, 0.0), 1.0, 1.0), (Complex64::new(0.3, -1.2), 0.05, 2.5)] {
        let m = vec![DMatrix::from_element(1, 1, g)];
        let mi = mi_lower_bound(&m, &m, 0.0, noise, p).unwrap();
        let shannon = (1.0 + g.norm_sqr() / noise * p).log2();
        ensure((mi - shannon).abs() <= 1e-12, || format!("1x1 MI {mi} vs {shannon}"))?;
    }
    let grid = vec![128, 256, 512, 768, 1024, 1536, 2048, 3072, 4096, 5120];
    let mut cfg = desk_config(5, 10.0, &[Resolution::Bits(1)], &["em-gm-vamp"]);
    cfg.training.np = grid.clone();
    cfg.rate.enabled = true;
    cfg.rate.n_co = 10240;
    cfg.rate.n_b = 64;
    let rows = run_experiment(&cfg).map_err(|e| e.to_string())?;
    ensure(rows.iter().all(|r| r.ok()), || "failed rows".into())?;
    let rates: Vec<f64> = summarize(&rows).iter().map(|s| s.rate.unwrap()).collect();
    let best = (0..rates.len()).max_by(|a, b| rates[*a].total_cmp(&rates[*b])).unwrap();
    ensure(best != 0 && best != rates.len() - 1, || format!("maximizer at grid end N_p = {}", grid[best]))?;
    Ok(format!("peak {:.2} bit/s/Hz at N_p = {}", rates[best], grid[best]))
}

fn determinism() -> Outcome {
    let mut cfg: ExperimentConfig =
        desk_config(6, 0.0, &[Resolution::Bits(1), Resolution::Bits(3), Resolution::Infinite], &[
            "ls", "bpdn", "qiht", "em-gm-gamp", "em-bg-vamp",
        ]);
    cfg.sweep.snr_db = vec![-5.0, 10.0];
    cfg.training.np = vec![256, 512];
    let csv = |cfg: &ExperimentConfig| -> Result<Vec<u8>, String> {
        let mut buf = Vec::new();
        write_csv(&run_experiment(cfg).map_err(|e| e.to_string())?, &mut buf).map_err(|e| e.to_string())?;
        Ok(buf)
    };
    cfg.threads = 1;
    let (a, b) = (csv(&cfg)?, csv(&cfg)?);
    ensure(a == b, || "single-threaded runs differ".into())?;
    cfg.threads = 0;
    ensure(csv(&cfg)? == a, || "multi-threaded output differs".into())?;
    Ok(format!("{} bytes identical across 3 runs", a.len()))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("quantizer table", quantizer_table),
        ("operator correctness", operator_correctness),
        ("ZC spectrum flatness", zc_flatness),
        ("denoiser oracles", denoiser_oracles),
        ("LMMSE fixed point", lmmse_fixed_point),
        ("low-SNR 1-bit gap", one_bit_gap),
        ("monotonicity", monotonicity),
        ("algorithm ordering", ordering),
        ("rate sanity", rate_sanity),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail} [{secs:.1} s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail} [{secs:.1} s]", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
