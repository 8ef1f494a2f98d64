//! Uniform mid-rise quantization of complex samples.
//!
//! Each real dimension is quantized independently with stepsize
//! `√(power)·Δ_b`, where `Δ_b` is the MSE-optimal uniform stepsize for a
//! unit-variance Gaussian input.

use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const STEPSIZE: [f64; 8] = [
    1.595_769_121_605_730_7, // √(8/π)
    0.9957,
    0.586,
    0.3352,
    0.1881,
    0.1041,
    0.0569,
    0.0308,
];

const NMSE: [f64; 8] = [
    0.363_380_227_632_418_6, // (π − 2)/π
    0.1188,
    0.03744,
    0.01154,
    0.003504,
    0.001035,
    0.0002999,
    0.00008543,
];

const SQNR_DB: [f64; 8] = [4.40, 9.25, 14.27, 19.38, 24.55, 29.85, 35.23, 40.68];

/// ADC resolution per real dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Resolution {
    Bits(u32),
    Infinite,
}

impl fmt::Display for Resolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Resolution::Bits(b) => write!(f, "{b}"),
            Resolution::Infinite => f.write_str("inf"),
        }
    }
}

impl std::str::FromStr for Resolution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("inf") || s == "∞" {
            return Ok(Resolution::Infinite);
        }
        let b: u32 = s
            .parse()
            .map_err(|_| Error::Config(format!("invalid bit count {s:?}")))?;
        Ok(Resolution::Bits(b))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantizerSpec {
    pub resolution: Resolution,
    /// Unit-variance stepsize `Δ_b`; `None` for an ideal ADC.
    pub stepsize: Option<f64>,
    /// Normalized quantization MSE `η_b`.
    pub nmse: f64,
    pub sqnr_db: f64,
}

impl QuantizerSpec {
    pub fn is_ideal(&self) -> bool {
        self.stepsize.is_none()
    }

    /// Output levels per real dimension, or `None` when ideal.
    pub fn levels(&self) -> Option<u32> {
        match self.resolution {
            Resolution::Bits(b) => Some(1 << b),
            Resolution::Infinite => None,
        }
    }
}

/// Measured per-dimension signal power ahead of the ADC.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerEstimate {
    pub re_power: f64,
    pub im_power: f64,
}

impl PowerEstimate {
    /// Empirical `E[Re²]`, `E[Im²]` of a block.
    pub fn measure(z: &[Complex64]) -> Self {
        let n = z.len().max(1) as f64;
        let (re, im) = z.iter().fold((0.0, 0.0), |(a, b), v| (a + v.re * v.re, b + v.im * v.im));
        Self { re_power: re / n, im_power: im / n }
    }

    /// Circular signal with total variance `var`.
    pub fn circular(var: f64) -> Self {
        Self { re_power: var / 2.0, im_power: var / 2.0 }
    }

    fn check(&self) -> Result<()> {
        if self.re_power > 0.0 && self.im_power > 0.0 {
            Ok(())
        } else {
            Err(Error::NonPositivePower { re: self.re_power, im: self.im_power })
        }
    }
}

pub fn stepsize_table(resolution: Resolution) -> Result<QuantizerSpec> {
    match resolution {
        Resolution::Infinite => Ok(QuantizerSpec {
            resolution,
            stepsize: None,
            nmse: 0.0,
            sqnr_db: f64::INFINITY,
        }),
        Resolution::Bits(b @ 1..=8) => {
            let i = (b - 1) as usize;
            Ok(QuantizerSpec {
                resolution,
                stepsize: Some(STEPSIZE[i]),
                nmse: NMSE[i],
                sqnr_db: SQNR_DB[i],
            })
        }
        Resolution::Bits(b) => Err(Error::UnsupportedBits(b)),
    }
}

fn quantize_real(x: f64, delta: f64, max_index: i64) -> f64 {
    // cell k covers [(k-1)Δ, kΔ) for x ≥ 0 and [-kΔ, -(k-1)Δ) for x < 0
    let (k, sign) = if x >= 0.0 {
        ((x / delta).floor() as i64 + 1, 1.0)
    } else {
        ((-x / delta).ceil() as i64, -1.0)
    };
    let k = k.clamp(1, max_index);
    sign * (k as f64 - 0.5) * delta
}

/// Steps `(Δ_Re, Δ_Im)` actually applied for a given power measurement.
pub fn scaled_steps(spec: &QuantizerSpec, power: &PowerEstimate) -> Result<Option<(f64, f64)>> {
    power.check()?;
    Ok(spec
        .stepsize
        .map(|d| (power.re_power.sqrt() * d, power.im_power.sqrt() * d)))
}

pub fn quantize(x: &[Complex64], spec: &QuantizerSpec, power: &PowerEstimate) -> Result<Vec<Complex64>> {
    let Some((d_re, d_im)) = scaled_steps(spec, power)? else {
        return Ok(x.to_vec());
    };
    let max_index = (spec.levels().unwrap() / 2) as i64;
    Ok(x.iter()
        .map(|v| Complex64::new(quantize_real(v.re, d_re, max_index), quantize_real(v.im, d_im, max_index)))
        .collect())
}

/// Half-open quantizer cell `[lo, hi)` of one real output level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub lo: f64,
    pub hi: f64,
}

impl Cell {
    /// Midpoint for finite cells; `None` for the unbounded outer cells.
    pub fn midpoint(&self) -> Option<f64> {
        (self.lo.is_finite() && self.hi.is_finite()).then(|| 0.5 * (self.lo + self.hi))
    }
}

fn cell_real(y: f64, delta: f64, max_index: i64) -> Result<Cell> {
    let k = y.abs() / delta + 0.5;
    let kr = k.round();
    if y == 0.0 || (k - kr).abs() > 1e-6 * kr.max(1.0) || kr < 1.0 || kr as i64 > max_index {
        return Err(Error::OffGrid(y));
    }
    let k = kr as i64;
    let inner = (k - 1) as f64 * delta;
    let outer = if k == max_index { f64::INFINITY } else { k as f64 * delta };
    Ok(if y > 0.0 {
        Cell { lo: inner, hi: outer }
    } else {
        Cell { lo: -outer, hi: -inner }
    })
}

/// Cells `(re, im)` containing the pre-quantization value that produced `y`.
pub fn inverse_cell(y: Complex64, spec: &QuantizerSpec, power: &PowerEstimate) -> Result<(Cell, Cell)> {
    let Some((d_re, d_im)) = scaled_steps(spec, power)? else {
        return Ok((Cell { lo: y.re, hi: y.re }, Cell { lo: y.im, hi: y.im }));
    };
    let max_index = (spec.levels().unwrap() / 2) as i64;
    Ok((cell_real(y.re, d_re, max_index)?, cell_real(y.im, d_im, max_index)?))
}
