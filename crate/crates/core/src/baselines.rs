//! Benchmark estimators: least squares, Bussgang-linearized MMSE, basis
//! pursuit denoising and quantized iterative hard thresholding.
//!
//! The linear estimators work on `X̄ = [X[0] … X[L-1]]` (`N_r × N_t L`) via
//! `unvec(A* y) = B_Nr* Y C*`, so only `C C*` is ever inverted.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::amp::{nmse_against, relative_change, AlgoResult, IterRecord};
use crate::operator::MeasurementOperator;
use crate::quantizer::{quantize, PowerEstimate, QuantizerSpec};
use crate::{norm_sqr, Error, Result};

/// `y ≈ (1 - η) A x + ŵ` with `ŵ` white of variance `noise_var`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearizedModel {
    pub gain: f64,
    pub noise_var: f64,
}

impl LinearizedModel {
    /// `σ_ŵ² = (1 - η)(σ_w² + η P_t L σ_x²)`.
    pub fn new(eta: f64, noise_var: f64, power: f64, delay_taps: usize, signal_var: f64) -> Self {
        let gain = 1.0 - eta;
        Self { gain, noise_var: gain * (noise_var + eta * power * delay_taps as f64 * signal_var) }
    }
}

fn right_solve(op: &MeasurementOperator, y: &[Complex64], shift: Option<(f64, f64)>) -> Result<Vec<Complex64>> {
    let back = op.adjoint(y)?;
    let nr = op.rx().len();
    let (gain, reg) = shift.unwrap_or((1.0, 0.0));
    if let Some(g) = op.gram_scalar() {
        let d = gain * g + reg;
        if !(d > 0.0) {
            return Err(Error::RankDeficient);
        }
        return Ok(back.iter().map(|v| v / d).collect());
    }
    let n = back.len() / nr;
    if n > op.n_p() && reg == 0.0 {
        return Err(Error::RankDeficient);
    }
    let mut g = op.gram() * Complex64::new(gain, 0.0);
    for i in 0..n {
        g[(i, i)] += reg;
    }
    let chol = g.cholesky().ok_or(Error::RankDeficient)?;
    let inv = chol.inverse();
    let xbar = DMatrix::from_column_slice(nr, n, &back);
    Ok((xbar * inv).as_slice().to_vec())
}

/// `X̂ = B_Nr* Y C* (C C*)⁻¹`.
pub fn estimate_ls(op: &MeasurementOperator, y: &[Complex64]) -> Result<Vec<Complex64>> {
    right_solve(op, y, None)
}

/// `X̂ = B_Nr* Y C* ((1 - η) C C* + (σ_w²/σ_x² + η P_t L) I)⁻¹`.
pub fn estimate_almmse(
    op: &MeasurementOperator,
    y: &[Complex64],
    noise_var: f64,
    signal_var: f64,
    eta: f64,
) -> Result<Vec<Complex64>> {
    if !(signal_var > 0.0) {
        return Err(Error::NonPositiveVariance("signal"));
    }
    let training = op.training();
    let reg = noise_var / signal_var + eta * training.power * op.delay_taps() as f64;
    right_solve(op, y, Some((1.0 - eta, reg)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BpdnOptions {
    pub outer_steps: usize,
    pub inner_iters: usize,
    /// Relative tolerance on the residual constraint.
    pub residual_tol: f64,
}

impl Default for BpdnOptions {
    fn default() -> Self {
        Self { outer_steps: 30, inner_iters: 500, residual_tol: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BpdnResult {
    pub x_hat: Vec<Complex64>,
    pub lambda: f64,
    pub residual_sqr: f64,
    /// `σ_ŵ² N_p N_r`.
    pub target: f64,
    /// Whether the residual landed within tolerance of the target.
    pub met: bool,
}

fn soft_threshold(v: Complex64, t: f64) -> Complex64 {
    let m = v.norm();
    if m <= t {
        Complex64::default()
    } else {
        v * ((m - t) / m)
    }
}

/// `min ½‖y - g A x‖² + λ‖x‖₁` by FISTA, warm-started at `x`.
pub fn lasso_fista(
    op: &MeasurementOperator,
    y: &[Complex64],
    gain: f64,
    lambda: f64,
    lipschitz: f64,
    x: &mut Vec<Complex64>,
    max_iter: usize,
) -> Result<()> {
    let step = 1.0 / lipschitz;
    let mut z = x.clone();
    let mut t = 1.0f64;
    for _ in 0..max_iter {
        let mut r = op.apply(&z)?;
        for (ri, yi) in r.iter_mut().zip(y) {
            *ri = *ri * gain - yi;
        }
        let grad = op.adjoint(&r)?;
        let next: Vec<Complex64> = z
            .iter()
            .zip(&grad)
            .map(|(zi, gi)| soft_threshold(zi - gi * (gain * step), lambda * step))
            .collect();
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let w = (t - 1.0) / t_next;
        let change = relative_change(&next, x);
        for ((zi, ni), xi) in z.iter_mut().zip(&next).zip(x.iter()) {
            *zi = ni + (ni - xi) * w;
        }
        *x = next;
        t = t_next;
        if change < 1e-7 {
            break;
        }
    }
    Ok(())
}

fn residual_sqr(op: &MeasurementOperator, y: &[Complex64], gain: f64, x: &[Complex64]) -> Result<f64> {
    let ax = op.apply(x)?;
    Ok(ax.iter().zip(y).map(|(a, b)| (a * gain - b).norm_sqr()).sum())
}

/// `min ‖x‖₁` subject to `‖y - (1 - η) A x‖² ≤ σ_ŵ² N_p N_r`.
///
/// The LASSO weight is bisected on a log scale until the residual meets the
/// constraint within `residual_tol`.
pub fn estimate_bpdn(
    op: &MeasurementOperator,
    y: &[Complex64],
    lin: &LinearizedModel,
    opts: &BpdnOptions,
) -> Result<BpdnResult> {
    if !(lin.noise_var > 0.0) {
        return Err(Error::NonPositiveVariance("linearized noise"));
    }
    let target = lin.noise_var * op.n_y() as f64;
    let zero = vec![Complex64::default(); op.n_x()];
    if norm_sqr(y) <= target {
        return Ok(BpdnResult { x_hat: zero, lambda: f64::INFINITY, residual_sqr: norm_sqr(y), target, met: true });
    }
    let g = lin.gain;
    let back = op.adjoint(y)?;
    let lambda_max = back.iter().map(|v| v.norm() * g).fold(0.0, f64::max);
    let lipschitz = g * g * op.spectral_norm_sqr();
    let (mut lo, mut hi) = ((lambda_max * 1e-6).ln(), lambda_max.ln());

    let mut x = zero;
    let mut best: Option<BpdnResult> = None;
    let mut nearest: Option<BpdnResult> = None;
    for _ in 0..opts.outer_steps {
        let lambda = (0.5 * (lo + hi)).exp();
        lasso_fista(op, y, g, lambda, lipschitz, &mut x, opts.inner_iters)?;
        let res = residual_sqr(op, y, g, &x)?;
        let rel = (res - target) / target;
        let candidate = BpdnResult { x_hat: x.clone(), lambda, residual_sqr: res, target, met: rel.abs() <= opts.residual_tol };
        if candidate.met {
            return Ok(candidate);
        }
        if rel < 0.0 {
            // feasible: keep the sparsest (largest λ) so far and push λ up
            if best.as_ref().is_none_or(|b| lambda > b.lambda) {
                best = Some(candidate.clone());
            }
            lo = lambda.ln();
        } else {
            hi = lambda.ln();
        }
        if nearest.as_ref().is_none_or(|n| (n.residual_sqr - target).abs() > (res - target).abs()) {
            nearest = Some(candidate);
        }
    }
    log::debug!("bpdn: residual target not met after {} steps", opts.outer_steps);
    Ok(best.or(nearest).expect("at least one bisection step"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct QihtOptions {
    /// Complex coefficients kept per step; default `N_x / 100`.
    pub sparsity: Option<usize>,
    /// Gradient step; default `0.1 N_t / (P_t N_p)`.
    pub step: Option<f64>,
    pub max_iter: usize,
    pub tol: f64,
    pub init: Option<Vec<Complex64>>,
}

impl Default for QihtOptions {
    fn default() -> Self {
        Self { sparsity: None, step: None, max_iter: 100, tol: 1e-6, init: None }
    }
}

/// Keeps the `k` largest-magnitude entries; ties go to the lower index.
pub fn hard_threshold(x: &mut [Complex64], k: usize) {
    if k >= x.len() {
        return;
    }
    let mut idx: Vec<usize> = (0..x.len()).collect();
    let key = |i: &usize| x[*i].norm_sqr();
    idx.select_nth_unstable_by(k, |a, b| key(b).total_cmp(&key(a)).then(a.cmp(b)));
    for &i in &idx[k..] {
        x[i] = Complex64::default();
    }
}

/// Iterates `x ← h_K(x + τ A* Q(y - A x))`, quantizing residuals with the
/// measurement quantizer and power.
pub fn estimate_qiht(
    op: &MeasurementOperator,
    y: &[Complex64],
    spec: &QuantizerSpec,
    power: &PowerEstimate,
    opts: &QihtOptions,
    truth: Option<&[Complex64]>,
) -> Result<AlgoResult> {
    let k = opts.sparsity.unwrap_or((op.n_x() / 100).max(1));
    let training = op.training();
    let tau = opts.step.unwrap_or(0.1 * training.n_t as f64 / (training.power * training.n_p as f64));
    if k == 0 || !(tau > 0.0) {
        return Err(Error::Config("QIHT needs K >= 1 and a positive step".into()));
    }
    let mut x = match &opts.init {
        Some(v) if v.len() == op.n_x() => v.clone(),
        Some(v) => return Err(Error::Dimension { expected: op.n_x(), got: v.len() }),
        None => vec![Complex64::default(); op.n_x()],
    };
    let mut trace = Vec::new();
    let mut converged = false;
    for _ in 0..opts.max_iter {
        let ax = op.apply(&x)?;
        let resid: Vec<Complex64> = y.iter().zip(&ax).map(|(a, b)| a - b).collect();
        let s = quantize(&resid, spec, power)?;
        let grad = op.adjoint(&s)?;
        let mut next: Vec<Complex64> = x.iter().zip(&grad).map(|(xi, gi)| xi + gi * tau).collect();
        hard_threshold(&mut next, k);
        let change = relative_change(&next, &x);
        x = next;
        trace.push(IterRecord { nmse: nmse_against(&x, truth), change, prior: None, clamps: 0 });
        if change <= opts.tol {
            converged = true;
            break;
        }
    }
    Ok(AlgoResult { iterations: trace.len(), x_hat: x, trace, converged, diverged: None, prior: None })
}
