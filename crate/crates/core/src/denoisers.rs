//! Scalar denoisers used inside the message-passing iterations.
//!
//! The input side models each angle-delay coefficient with a zero spike plus
//! a mixture of circular Gaussians and observes it through `r = x + CN(0, ν)`.
//! The output side models `y = Q(z + w)` with `z ~ CN(p, ν_p)` and
//! `w ~ CN(0, σ_w²)`; real and imaginary parts decouple into truncated
//! normal moments over the quantizer cell.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::quantizer::{inverse_cell, Cell, PowerEstimate, QuantizerSpec};
use crate::special::truncated_normal_moments;
use crate::{Error, Result};

const NU_FLOOR: f64 = 1e-14;
const REL_VAR_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PriorKind {
    /// One zero-mean Gaussian component.
    BernoulliGaussian,
    /// Several Gaussian components with free means.
    GaussianMixture,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Component {
    pub weight: f64,
    pub mean: Complex64,
    pub var: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PriorParams {
    pub kind: PriorKind,
    /// Probability `λ₀` of an exact zero.
    pub zero_mass: f64,
    pub components: Vec<Component>,
}

impl PriorParams {
    pub fn bernoulli_gaussian(zero_mass: f64, var: f64) -> Self {
        Self {
            kind: PriorKind::BernoulliGaussian,
            zero_mass,
            components: vec![Component { weight: 1.0 - zero_mass, mean: Complex64::default(), var }],
        }
    }

    /// Zero-mean circular Gaussian with variance `var` and no spike.
    pub fn gaussian(var: f64) -> Self {
        Self::bernoulli_gaussian(0.0, var)
    }

    /// Starting point for EM: `λ₀ = 0.9` and equally weighted zero-mean
    /// components whose variances step by a factor of 10, scaled so the prior
    /// variance equals `signal_var`.
    pub fn initial(kind: PriorKind, order: usize, signal_var: f64) -> Self {
        let zero_mass = 0.9;
        let active = 1.0 - zero_mass;
        let signal_var = signal_var.max(f64::MIN_POSITIVE.sqrt());
        match kind {
            PriorKind::BernoulliGaussian => Self::bernoulli_gaussian(zero_mass, signal_var / active),
            PriorKind::GaussianMixture => {
                let order = order.max(1);
                let weight = active / order as f64;
                let ratios: Vec<f64> = (0..order).map(|i| 10f64.powi(i as i32)).collect();
                let base = signal_var / (weight * ratios.iter().sum::<f64>());
                let components = ratios
                    .iter()
                    .map(|r| Component { weight, mean: Complex64::default(), var: base * r })
                    .collect();
                Self { kind, zero_mass, components }
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let total = self.zero_mass + self.components.iter().map(|c| c.weight).sum::<f64>();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("prior weights sum to {total}, not 1")));
        }
        if self.zero_mass < 0.0 || self.components.iter().any(|c| c.weight < 0.0) {
            return Err(Error::Config("prior weights must be nonnegative".into()));
        }
        if self.components.iter().any(|c| !(c.var > 0.0)) {
            return Err(Error::NonPositiveVariance("prior component"));
        }
        if self.kind == PriorKind::BernoulliGaussian
            && (self.components.len() != 1 || self.components[0].mean != Complex64::default())
        {
            return Err(Error::Config("Bernoulli-Gaussian prior needs one zero-mean component".into()));
        }
        Ok(())
    }

    pub fn mean(&self) -> Complex64 {
        self.components.iter().map(|c| c.mean * c.weight).sum()
    }

    /// `E|x - E x|²`.
    pub fn variance(&self) -> f64 {
        let second: f64 = self.components.iter().map(|c| c.weight * (c.mean.norm_sqr() + c.var)).sum();
        (second - self.mean().norm_sqr()).max(0.0)
    }

    fn var_floor(&self) -> f64 {
        let second: f64 = self.components.iter().map(|c| c.weight * (c.mean.norm_sqr() + c.var)).sum();
        REL_VAR_FLOOR * second.max(f64::MIN_POSITIVE)
    }
}

/// Posterior of `x` given `r = x + CN(0, ν)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub mean: Complex64,
    pub var: f64,
}

fn ln_cn(r: Complex64, mean: Complex64, var: f64) -> f64 {
    -(std::f64::consts::PI * var).ln() - (r - mean).norm_sqr() / var
}

// Fills `resp` with [spike, components...] responsibilities and returns the
// log-evidence of `r`.
fn responsibilities(r: Complex64, nu: f64, prior: &PriorParams, resp: &mut [f64]) -> f64 {
    resp[0] = if prior.zero_mass > 0.0 {
        prior.zero_mass.ln() + ln_cn(r, Complex64::default(), nu)
    } else {
        f64::NEG_INFINITY
    };
    for (i, c) in prior.components.iter().enumerate() {
        resp[i + 1] = if c.weight > 0.0 {
            c.weight.ln() + ln_cn(r, c.mean, c.var + nu)
        } else {
            f64::NEG_INFINITY
        };
    }
    let max = resp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in resp.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in resp.iter_mut() {
        *v /= sum;
    }
    max + sum.ln()
}

pub fn input_posterior(r: Complex64, nu: f64, prior: &PriorParams) -> Moments {
    let nu = nu.max(NU_FLOOR);
    let mut resp = vec![0.0; prior.components.len() + 1];
    input_posterior_with(r, nu, prior, &mut resp)
}

fn input_posterior_with(r: Complex64, nu: f64, prior: &PriorParams, resp: &mut [f64]) -> Moments {
    responsibilities(r, nu, prior, resp);
    let mut mean = Complex64::default();
    let mut second = 0.0;
    for (c, w) in prior.components.iter().zip(&resp[1..]) {
        if *w == 0.0 {
            continue;
        }
        let denom = c.var + nu;
        let m = (r * c.var + c.mean * nu) / denom;
        let v = c.var * nu / denom;
        mean += m * *w;
        second += w * (m.norm_sqr() + v);
    }
    Moments { mean, var: (second - mean.norm_sqr()).max(0.0) }
}

/// Posterior moments for a whole vector with a shared `ν`.
pub fn input_posterior_batch(r: &[Complex64], nu: f64, prior: &PriorParams) -> (Vec<Complex64>, f64) {
    let nu = nu.max(NU_FLOOR);
    let mut resp = vec![0.0; prior.components.len() + 1];
    let mut mean = Vec::with_capacity(r.len());
    let mut var = 0.0;
    for v in r {
        let m = input_posterior_with(*v, nu, prior, &mut resp);
        mean.push(m.mean);
        var += m.var;
    }
    (mean, var / r.len().max(1) as f64)
}

/// `Σ_i log ∫ p(x; θ) CN(x; r_i, ν) dx`.
pub fn batch_log_evidence(r: &[Complex64], nu: f64, prior: &PriorParams) -> f64 {
    let nu = nu.max(NU_FLOOR);
    let mut resp = vec![0.0; prior.components.len() + 1];
    r.iter().map(|v| responsibilities(*v, nu, prior, &mut resp)).sum()
}

/// One EM step on the prior given pseudo-measurements `r` with shared `ν`.
pub fn em_update(prior: &PriorParams, r: &[Complex64], nu: f64) -> Result<PriorParams> {
    if r.is_empty() {
        return Err(Error::Config("EM update needs a nonempty batch".into()));
    }
    let nu = nu.max(NU_FLOOR);
    let k = prior.components.len();
    let mut resp = vec![0.0; k + 1];
    let mut w_sum = vec![0.0; k + 1];
    let mut m_sum = vec![Complex64::default(); k];
    let mut sq_sum = vec![0.0; k];
    let mut v_sum = vec![0.0; k];
    for v in r {
        responsibilities(*v, nu, prior, &mut resp);
        w_sum[0] += resp[0];
        for (i, c) in prior.components.iter().enumerate() {
            let w = resp[i + 1];
            if w == 0.0 {
                continue;
            }
            let denom = c.var + nu;
            let m = (*v * c.var + c.mean * nu) / denom;
            w_sum[i + 1] += w;
            m_sum[i] += m * w;
            sq_sum[i] += w * m.norm_sqr();
            v_sum[i] += w * c.var * nu / denom;
        }
    }
    let n = r.len() as f64;
    let floor = prior.var_floor();
    let components = prior
        .components
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let w = w_sum[i + 1];
            if w <= f64::MIN_POSITIVE {
                return Component { weight: w / n, ..*c };
            }
            let mean = match prior.kind {
                PriorKind::BernoulliGaussian => Complex64::default(),
                PriorKind::GaussianMixture => m_sum[i] / w,
            };
            // Σ w (|m - μ'|² + v) = Σ w|m|² - 2 Re(μ'* Σ w m) + w|μ'|² + Σ w v
            let spread = sq_sum[i] - 2.0 * (mean.conj() * m_sum[i]).re + w * mean.norm_sqr() + v_sum[i];
            Component { weight: w / n, mean, var: (spread / w).max(floor) }
        })
        .collect();
    Ok(PriorParams { kind: prior.kind, zero_mass: w_sum[0] / n, components })
}

/// Known-noise quantized Gaussian channel `y = Q(z + w)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutputChannel {
    pub spec: QuantizerSpec,
    pub power: PowerEstimate,
    pub noise_var: f64,
}

impl OutputChannel {
    pub fn new(spec: QuantizerSpec, power: PowerEstimate, noise_var: f64) -> Result<Self> {
        if !(noise_var > 0.0) {
            return Err(Error::NonPositiveVariance("noise"));
        }
        Ok(Self { spec, power, noise_var })
    }

    /// Quantizer cells of every measurement.
    pub fn cells(&self, y: &[Complex64]) -> Result<Vec<(Cell, Cell)>> {
        y.iter().map(|v| inverse_cell(*v, &self.spec, &self.power)).collect()
    }

    pub fn posterior(&self, y: Complex64, p: Complex64, nu_p: f64) -> Result<Moments> {
        let (re, im) = inverse_cell(y, &self.spec, &self.power)?;
        Ok(self.posterior_in_cell(&re, &im, p, nu_p))
    }

    /// Posterior of `z` given that `Re(z + w)` and `Im(z + w)` fell in the cells.
    pub fn posterior_in_cell(&self, re: &Cell, im: &Cell, p: Complex64, nu_p: f64) -> Moments {
        let v = (nu_p / 2.0).max(NU_FLOOR);
        let s = self.noise_var / 2.0;
        let (m_re, v_re) = real_posterior(re, p.re, v, s);
        let (m_im, v_im) = real_posterior(im, p.im, v, s);
        Moments { mean: Complex64::new(m_re, m_im), var: v_re + v_im }
    }
}

// z ~ N(p, v), observation u = z + N(0, s) with u in [lo, hi); a degenerate
// cell lo == hi means u is observed exactly.
fn real_posterior(cell: &Cell, p: f64, v: f64, s: f64) -> (f64, f64) {
    let total = v + s;
    if cell.lo == cell.hi {
        return (p + v / total * (cell.lo - p), v * s / total);
    }
    let sd = total.sqrt();
    let (m, w) = truncated_normal_moments((cell.lo - p) / sd, (cell.hi - p) / sd);
    let mean = p + v / sd * m;
    let var = v * s / total + v * v / total * w;
    (mean, var.max(NU_FLOOR * v).min(v))
}

/// Posterior moments for every measurement with shared `ν_p`.
pub fn output_posterior_batch(
    ch: &OutputChannel,
    cells: &[(Cell, Cell)],
    p: &[Complex64],
    nu_p: f64,
) -> (Vec<Complex64>, f64) {
    let mut mean = Vec::with_capacity(p.len());
    let mut var = 0.0;
    for ((re, im), pv) in cells.iter().zip(p) {
        let m = ch.posterior_in_cell(re, im, *pv, nu_p);
        mean.push(m.mean);
        var += m.var;
    }
    (mean, var / p.len().max(1) as f64)
}
