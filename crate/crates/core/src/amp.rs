//! EM-GAMP and EM-VAMP with scalar (uniform) variances.

use num_complex::Complex64;

use crate::denoisers::{
    em_update, input_posterior_batch, output_posterior_batch, OutputChannel, PriorParams,
};
use crate::operator::MeasurementOperator;
use crate::{norm_sqr, Error, Result};

const VAR_FLOOR: f64 = 1e-30;
const ALPHA_MIN: f64 = 1e-10;
const ONE_MINUS_MIN: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct AmpOptions {
    pub max_iter: usize,
    pub tol: f64,
    /// Damping `ρ ∈ (0, 1]`; 1 means undamped.
    pub damping: f64,
    /// Run the EM update of the prior each iteration.
    pub learn_prior: bool,
}

impl Default for AmpOptions {
    fn default() -> Self {
        Self { max_iter: 50, tol: 1e-6, damping: 1.0, learn_prior: true }
    }
}

impl AmpOptions {
    fn validate(&self) -> Result<()> {
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::Config(format!("damping must lie in (0, 1], got {}", self.damping)));
        }
        if self.max_iter == 0 {
            return Err(Error::Config("max_iter must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterRecord {
    /// `‖x̂ - x‖² / ‖x‖²` when the truth was supplied.
    pub nmse: Option<f64>,
    /// `‖x̂ᵏ⁺¹ - x̂ᵏ‖ / ‖x̂ᵏ‖`.
    pub change: f64,
    pub prior: Option<PriorParams>,
    /// Number of variance or divisor clamps hit this iteration.
    pub clamps: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlgoResult {
    pub x_hat: Vec<Complex64>,
    pub trace: Vec<IterRecord>,
    pub iterations: usize,
    pub converged: bool,
    /// Set when a non-finite value stopped the iteration; `x_hat` is then the
    /// last finite estimate.
    pub diverged: Option<String>,
    /// Learned prior, for the message-passing algorithms.
    pub prior: Option<PriorParams>,
}

/// `p̂ = A x̂ - ν_p ŝ`.
pub fn onsager_prediction(
    op: &MeasurementOperator,
    x_hat: &[Complex64],
    nu_p: f64,
    s_hat: &[Complex64],
) -> Result<Vec<Complex64>> {
    let mut p = op.apply(x_hat)?;
    for (pi, si) in p.iter_mut().zip(s_hat) {
        *pi -= si * nu_p;
    }
    Ok(p)
}

pub(crate) fn relative_change(new: &[Complex64], old: &[Complex64]) -> f64 {
    let diff: f64 = new.iter().zip(old).map(|(a, b)| (a - b).norm_sqr()).sum();
    let base = norm_sqr(old);
    if base == 0.0 {
        if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (diff / base).sqrt()
    }
}

pub(crate) fn nmse_against(x: &[Complex64], truth: Option<&[Complex64]>) -> Option<f64> {
    let t = truth?;
    let base = norm_sqr(t);
    (base > 0.0).then(|| x.iter().zip(t).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>() / base)
}

fn all_finite(v: &[Complex64]) -> bool {
    v.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

fn check_inputs(op: &MeasurementOperator, y: &[Complex64], truth: Option<&[Complex64]>) -> Result<()> {
    if y.len() != op.n_y() {
        return Err(Error::Dimension { expected: op.n_y(), got: y.len() });
    }
    if let Some(t) = truth {
        if t.len() != op.n_x() {
            return Err(Error::Dimension { expected: op.n_x(), got: t.len() });
        }
    }
    Ok(())
}

fn damp(new: &mut [Complex64], old: &[Complex64], rho: f64) {
    if rho < 1.0 {
        for (n, o) in new.iter_mut().zip(old) {
            *n = *n * rho + *o * (1.0 - rho);
        }
    }
}

fn clamp_counted(v: f64, lo: f64, hi: f64, clamps: &mut u32) -> f64 {
    if v.is_nan() {
        return v;
    }
    if v < lo {
        *clamps += 1;
        lo
    } else if v > hi {
        *clamps += 1;
        hi
    } else {
        v
    }
}

/// EM-GAMP. `truth`, when given, is only used to fill the per-iteration NMSE.
pub fn run_gamp(
    op: &MeasurementOperator,
    y: &[Complex64],
    ch: &OutputChannel,
    prior: &PriorParams,
    opts: &AmpOptions,
    truth: Option<&[Complex64]>,
) -> Result<AlgoResult> {
    opts.validate()?;
    prior.validate()?;
    check_inputs(op, y, truth)?;
    let cells = ch.cells(y)?;
    let (nx, ny) = (op.n_x() as f64, op.n_y() as f64);
    let frob = op.frobenius_sqr();
    let rho = opts.damping;

    let mut theta = prior.clone();
    let mut x_hat = vec![theta.mean(); op.n_x()];
    let mut nu_x = theta.variance().max(VAR_FLOOR);
    let mut s_hat = vec![Complex64::default(); op.n_y()];
    let mut nu_s = 0.0;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut diverged = None;

    for k in 0..opts.max_iter {
        let mut clamps = 0;
        let nu_p = (frob * nu_x / ny).max(VAR_FLOOR);
        let p_hat = onsager_prediction(op, &x_hat, nu_p, &s_hat)?;
        let (z_hat, nu_z) = output_posterior_batch(ch, &cells, &p_hat, nu_p);

        let mut nu_s_new = (1.0 - nu_z / nu_p) / nu_p;
        if !(nu_s_new > VAR_FLOOR / nu_p) && nu_s_new.is_finite() {
            clamps += 1;
            nu_s_new = VAR_FLOOR / nu_p;
        }
        let mut s_new: Vec<Complex64> = z_hat.iter().zip(&p_hat).map(|(z, p)| (z - p) / nu_p).collect();
        if k > 0 {
            damp(&mut s_new, &s_hat, rho);
            nu_s_new = rho * nu_s_new + (1.0 - rho) * nu_s;
        }
        s_hat = s_new;
        nu_s = nu_s_new;

        let nu_r = nx / (frob * nu_s);
        let correction = op.adjoint(&s_hat)?;
        let r_hat: Vec<Complex64> = x_hat.iter().zip(&correction).map(|(x, c)| x + c * nu_r).collect();
        let (mut x_new, mut nu_x_new) = input_posterior_batch(&r_hat, nu_r, &theta);
        if k > 0 {
            damp(&mut x_new, &x_hat, rho);
            nu_x_new = rho * nu_x_new + (1.0 - rho) * nu_x;
        }
        if nu_x_new < VAR_FLOOR {
            clamps += 1;
            nu_x_new = VAR_FLOOR;
        }

        if !all_finite(&x_new) || !nu_x_new.is_finite() || !nu_r.is_finite() {
            diverged = Some(format!("non-finite state at iteration {}", k + 1));
            break;
        }
        if opts.learn_prior {
            theta = em_update(&theta, &r_hat, nu_r)?;
        }
        let change = relative_change(&x_new, &x_hat);
        x_hat = x_new;
        nu_x = nu_x_new;
        trace.push(IterRecord { nmse: nmse_against(&x_hat, truth), change, prior: Some(theta.clone()), clamps });
        if change <= opts.tol {
            converged = true;
            break;
        }
    }
    log::debug!("gamp: {} iterations, converged={converged}", trace.len());
    Ok(AlgoResult { iterations: trace.len(), x_hat, trace, converged, diverged, prior: Some(theta) })
}

/// `N_x⁻¹ Σ_n τ₂/(s_n² ν₂ + τ₂)`, where the `N_x - rank` missing singular
/// values count as zeros.
pub fn lmmse_alpha(singular: &[f64], n_x: usize, nu2: f64, tau2: f64) -> f64 {
    let missing = n_x.saturating_sub(singular.len()) as f64;
    let sum: f64 = singular.iter().map(|s| tau2 / (s * s * nu2 + tau2)).sum();
    (sum + missing) / n_x as f64
}

/// EM-VAMP; returns the denoiser-side estimate `x̂₁`.
pub fn run_vamp(
    op: &MeasurementOperator,
    y: &[Complex64],
    ch: &OutputChannel,
    prior: &PriorParams,
    opts: &AmpOptions,
    truth: Option<&[Complex64]>,
) -> Result<AlgoResult> {
    opts.validate()?;
    prior.validate()?;
    check_inputs(op, y, truth)?;
    let cells = ch.cells(y)?;
    let svd = op.svd_factors()?;
    let singular = svd.singular_values();
    let (nx, ny) = (op.n_x() as f64, op.n_y() as f64);
    let rho = opts.damping;

    let mut theta = prior.clone();
    let sigma_x = theta.variance().max(VAR_FLOOR);
    let mut r1 = vec![Complex64::default(); op.n_x()];
    let mut nu1 = sigma_x;
    let mut p1 = vec![Complex64::default(); op.n_y()];
    let mut tau1 = sigma_x * op.frobenius_sqr() / ny + ch.noise_var;
    let mut x1 = vec![Complex64::default(); op.n_x()];
    let mut trace = Vec::new();
    let mut converged = false;
    let mut diverged = None;

    for k in 0..opts.max_iter {
        let mut clamps = 0;
        let hi = 1.0 - ONE_MINUS_MIN;

        let (mut x1_new, var_x) = input_posterior_batch(&r1, nu1, &theta);
        if k > 0 {
            damp(&mut x1_new, &x1, rho);
        }
        let alpha1 = clamp_counted(var_x / nu1, ALPHA_MIN, hi, &mut clamps);
        let r2: Vec<Complex64> =
            x1_new.iter().zip(&r1).map(|(x, r)| (x - r * alpha1) / (1.0 - alpha1)).collect();
        let nu2 = nu1 * alpha1 / (1.0 - alpha1);

        let (z1, var_z) = output_posterior_batch(ch, &cells, &p1, tau1);
        let beta1 = clamp_counted(var_z / tau1, ALPHA_MIN, hi, &mut clamps);
        let p2: Vec<Complex64> = z1.iter().zip(&p1).map(|(z, p)| (z - p * beta1) / (1.0 - beta1)).collect();
        let tau2 = tau1 * beta1 / (1.0 - beta1);

        // LMMSE under x ~ CN(r2, ν2), z ~ CN(p2, τ2), z = A x
        let gamma = nu2 / tau2;
        let u_p = svd.u_adj(&p2)?;
        let v_r = svd.v_adj(&r2)?;
        let coords: Vec<Complex64> = singular
            .iter()
            .zip(&u_p)
            .zip(&v_r)
            .map(|((s, up), vr)| (up * (s * gamma) + vr) / (s * s * gamma + 1.0) - vr)
            .collect();
        let lift = svd.v(&coords)?;
        let x2: Vec<Complex64> = r2.iter().zip(&lift).map(|(r, l)| r + l).collect();
        let alpha2 = clamp_counted(lmmse_alpha(&singular, op.n_x(), nu2, tau2), ALPHA_MIN, hi, &mut clamps);
        r1 = x2.iter().zip(&r2).map(|(x, r)| (x - r * alpha2) / (1.0 - alpha2)).collect();
        nu1 = nu2 * alpha2 / (1.0 - alpha2);

        let z2 = op.apply(&x2)?;
        let beta2 = clamp_counted((1.0 - alpha2) * nx / ny, ALPHA_MIN, hi, &mut clamps);
        p1 = z2.iter().zip(&p2).map(|(z, p)| (z - p * beta2) / (1.0 - beta2)).collect();
        tau1 = tau2 * beta2 / (1.0 - beta2);

        if !all_finite(&x1_new) || !all_finite(&r1) || !all_finite(&p1) || !(nu1 > 0.0) || !(tau1 > 0.0) {
            diverged = Some(format!("non-finite state at iteration {}", k + 1));
            if all_finite(&x1_new) {
                x1 = x1_new;
            }
            break;
        }
        if opts.learn_prior {
            theta = em_update(&theta, &r1, nu1)?;
        }
        let change = relative_change(&x1_new, &x1);
        x1 = x1_new;
        trace.push(IterRecord { nmse: nmse_against(&x1, truth), change, prior: Some(theta.clone()), clamps });
        if k > 0 && change <= opts.tol {
            converged = true;
            break;
        }
    }
    log::debug!("vamp: {} iterations, converged={converged}", trace.len());
    Ok(AlgoResult { iterations: trace.len(), x_hat: x1, trace, converged, diverged, prior: Some(theta) })
}
