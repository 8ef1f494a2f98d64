//! Channel-norm estimation, NMSE, and OFDM mutual-information / rate bounds.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::operator::MeasurementOperator;
use crate::{norm_sqr, Error, Result};

/// Per-coefficient variance `σ_x²` and the implied channel norm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormEstimate {
    pub signal_var: f64,
    /// `σ_x √(N_r N_t L)`.
    pub norm: f64,
}

impl NormEstimate {
    /// `σ_x² = (‖ẑ‖² - N_y σ_w²) / ‖A‖_F²`, valid for any training.
    pub fn from_operator(z_energy: f64, op: &MeasurementOperator, noise_var: f64) -> Self {
        let var = ((z_energy - op.n_y() as f64 * noise_var) / op.frobenius_sqr()).max(0.0);
        Self { signal_var: var, norm: (var * op.n_x() as f64).sqrt() }
    }
}

/// `σ_x² = (‖ẑ‖² - N_p N_r σ_w²) / (P_t L N_p N_r)`, clamped at zero.
pub fn norm_estimate(
    z_energy: f64,
    n_p: usize,
    n_r: usize,
    noise_var: f64,
    power: f64,
    delay_taps: usize,
    n_t: usize,
) -> NormEstimate {
    let cells = (n_p * n_r) as f64;
    let var = ((z_energy - cells * noise_var) / (power * delay_taps as f64 * cells)).max(0.0);
    NormEstimate { signal_var: var, norm: (var * (n_r * n_t * delay_taps) as f64).sqrt() }
}

/// Rescales `x̂` to the estimated norm. Returns `false` (and `x̂` unchanged)
/// when `x̂ = 0`.
pub fn normalize(x_hat: &[Complex64], norm: &NormEstimate) -> (Vec<Complex64>, bool) {
    let n = norm_sqr(x_hat).sqrt();
    if n == 0.0 || !n.is_finite() {
        return (x_hat.to_vec(), false);
    }
    let scale = norm.norm / n;
    (x_hat.iter().map(|v| v * scale).collect(), true)
}

/// `‖x̃ - x‖² / ‖x‖²`.
pub fn nmse(x_tilde: &[Complex64], x: &[Complex64]) -> Result<f64> {
    if x_tilde.len() != x.len() {
        return Err(Error::Dimension { expected: x.len(), got: x_tilde.len() });
    }
    let base = norm_sqr(x);
    if base == 0.0 {
        return Err(Error::ZeroTruth);
    }
    Ok(x_tilde.iter().zip(x).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>() / base)
}

pub fn to_db(v: f64) -> f64 {
    10.0 * v.log10()
}

/// Mean of per-trial NMSE values (linear), in dB.
pub fn mean_nmse_db(values: &[f64]) -> f64 {
    to_db(values.iter().sum::<f64>() / values.len() as f64)
}

/// `G_k = Σ_ℓ H[ℓ] e^{-j2πkℓ/N_b}` for `k = 0 … N_b - 1`.
pub fn ofdm_channels(h: &[DMatrix<Complex64>], n_b: usize) -> Vec<DMatrix<Complex64>> {
    let (nr, nt) = h.first().map(|m| m.shape()).unwrap_or((0, 0));
    (0..n_b)
        .map(|k| {
            let mut g = DMatrix::<Complex64>::zeros(nr, nt);
            for (l, tap) in h.iter().enumerate() {
                let ph = -2.0 * PI * ((k * l) % n_b) as f64 / n_b as f64;
                g += tap * Complex64::from_polar(1.0, ph);
            }
            g
        })
        .collect()
}

/// Water-filling `p_i = max(0, μ - 1/g_i)` with `Σ p_i = budget`.
pub fn waterfill(gains: &[f64], budget: f64) -> Vec<f64> {
    let mut active: Vec<(usize, f64)> = gains
        .iter()
        .enumerate()
        .filter(|(_, g)| **g > 0.0)
        .map(|(i, g)| (i, 1.0 / g))
        .collect();
    let mut p = vec![0.0; gains.len()];
    if active.is_empty() || budget <= 0.0 {
        return p;
    }
    active.sort_by(|a, b| a.1.total_cmp(&b.1));
    let mut sum_inv = 0.0;
    let mut level = 0.0;
    let mut count = 0;
    for (n, (_, inv)) in active.iter().enumerate() {
        let candidate = (budget + sum_inv + inv) / (n + 1) as f64;
        if candidate <= *inv {
            break;
        }
        sum_inv += inv;
        level = candidate;
        count = n + 1;
    }
    for (i, inv) in &active[..count] {
        p[*i] = level - inv;
    }
    p
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateConfig {
    pub n_b: usize,
    pub n_co: usize,
    /// Data-phase noise variance `σ_wf²`.
    pub noise_var: f64,
    /// Total power over all subcarriers.
    pub budget: f64,
}

/// Lower bound on the per-subcarrier mutual information (bits/s/Hz) when
/// precoding with the SVD of `g_hat` while the true channel is `g`.
pub fn mi_lower_bound(
    g: &[DMatrix<Complex64>],
    g_hat: &[DMatrix<Complex64>],
    eta: f64,
    noise_var: f64,
    budget: f64,
) -> Result<f64> {
    if g.len() != g_hat.len() || g.is_empty() {
        return Err(Error::Dimension { expected: g.len(), got: g_hat.len() });
    }
    let n_b = g.len();
    let (nr, nt) = g[0].shape();
    let streams = nr.min(nt);
    let mut us = Vec::with_capacity(n_b);
    let mut vs = Vec::with_capacity(n_b);
    let mut gains = Vec::with_capacity(n_b * streams);
    for (gk, ghk) in g.iter().zip(g_hat) {
        if gk.shape() != (nr, nt) || ghk.shape() != (nr, nt) {
            return Err(Error::Dimension { expected: nr * nt, got: ghk.nrows() * ghk.ncols() });
        }
        let svd = ghk.clone().svd(true, true);
        // nalgebra does not sort singular values
        let mut order: Vec<usize> = (0..streams).collect();
        order.sort_by(|a, b| svd.singular_values[*b].total_cmp(&svd.singular_values[*a]));
        let u = svd.u.as_ref().unwrap();
        let v_t = svd.v_t.as_ref().unwrap();
        us.push(DMatrix::from_fn(nr, streams, |i, m| u[(i, order[m])]));
        vs.push(DMatrix::from_fn(nt, streams, |j, m| v_t[(order[m], j)].conj()));
        gains.extend(order.iter().map(|m| svd.singular_values[*m].powi(2) / noise_var));
    }
    let p = waterfill(&gains, budget);

    // diag((1/N_b) Σ_l G_l R_l G_l*)
    let mut spread = vec![0.0; nr];
    let mut couplings = Vec::with_capacity(n_b);
    for (k, gk) in g.iter().enumerate() {
        let gv = gk * &vs[k];
        for m in 0..streams {
            let pkm = p[k * streams + m];
            for i in 0..nr {
                spread[i] += pkm * gv[(i, m)].norm_sqr() / n_b as f64;
            }
        }
        couplings.push(us[k].adjoint() * gv);
    }

    let a2 = (1.0 - eta).powi(2);
    let mut total = 0.0;
    for k in 0..n_b {
        let c = &couplings[k];
        for m in 0..streams {
            let pkm = p[k * streams + m];
            if pkm == 0.0 {
                continue;
            }
            let u = us[k].column(m);
            let colored: f64 = u.iter().zip(&spread).map(|(ui, d)| ui.norm_sqr() * d).sum();
            let noise = (1.0 - eta) * (noise_var * u.norm_squared() + eta * colored);
            let interference: f64 = (0..streams)
                .filter(|n| *n != m)
                .map(|n| a2 * c[(m, n)].norm_sqr() * p[k * streams + n])
                .sum();
            let signal = a2 * c[(m, m)].norm_sqr() * pkm;
            total += (1.0 + signal / (noise + interference)).log2();
        }
    }
    Ok(total / n_b as f64)
}

/// `(N_co - N_p)/N_co · I`.
pub fn achievable_rate(mi: f64, n_p: usize, n_co: usize) -> Result<f64> {
    if n_p > n_co || n_co == 0 {
        return Err(Error::Config(format!("training length {n_p} exceeds coherence length {n_co}")));
    }
    Ok((n_co - n_p) as f64 / n_co as f64 * mi)
}
