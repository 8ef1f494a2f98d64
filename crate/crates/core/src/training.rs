//! Training (pilot) matrices `T` of size `N_t × N_p`.
//!
//! With a delay spread of `L` taps the received block is
//! `Z = Σ_ℓ H[ℓ] T J_ℓ`, where `J_ℓ` delays every row circularly by `ℓ`
//! symbols. Stacking `T J_ℓ` gives `T̃` and, after the DFT of the transmit
//! array, the matrix `C = (I_L ⊗ B_Nt*) T̃`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::channel::ArrayGeometry;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainingKind {
    #[serde(rename = "zc")]
    ShiftedZc,
    Golay,
    #[serde(rename = "qpsk")]
    IidQpsk,
    #[serde(rename = "gauss")]
    IidGaussian,
}

impl TrainingKind {
    pub fn name(&self) -> &'static str {
        match self {
            TrainingKind::ShiftedZc => "zc",
            TrainingKind::Golay => "golay",
            TrainingKind::IidQpsk => "qpsk",
            TrainingKind::IidGaussian => "gauss",
        }
    }
}

impl std::fmt::Display for TrainingKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for TrainingKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "zc" => Ok(TrainingKind::ShiftedZc),
            "golay" => Ok(TrainingKind::Golay),
            "qpsk" => Ok(TrainingKind::IidQpsk),
            "gauss" | "gaussian" => Ok(TrainingKind::IidGaussian),
            other => Err(Error::Config(format!("unknown training kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Storage {
    /// Row `n` is the base sequence delayed by `n·L`.
    Shifted(Vec<Complex64>),
    Dense(DMatrix<Complex64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingMatrix {
    pub kind: TrainingKind,
    pub n_t: usize,
    pub n_p: usize,
    pub delay_taps: usize,
    /// Total transmit power per symbol `P_t`.
    pub power: f64,
    storage: Storage,
}

/// `t[k] = √(P_t/N_t)·exp(jπk(k+1)/N_p)` (odd `N_p`) or `exp(jπk²/N_p)` (even).
pub fn zc_sequence(n_p: usize, power: f64, n_t: usize) -> Vec<Complex64> {
    let amp = (power / n_t as f64).sqrt();
    let odd = n_p % 2 == 1;
    (0..n_p)
        .map(|k| {
            let k = k as u64;
            let n = n_p as u64;
            // reduce k(k+1) or k² modulo 2N_p before converting to a phase
            let q = if odd { (k * (k + 1)) % (2 * n) } else { (k * k) % (2 * n) };
            Complex64::from_polar(amp, PI * q as f64 / n_p as f64)
        })
        .collect()
}

/// Rudin-Shapiro complementary pair of length `2^m`.
pub fn golay_pair(m: u32) -> (Vec<i8>, Vec<i8>) {
    let mut a = vec![1i8];
    let mut b = vec![1i8];
    for _ in 0..m {
        let mut na = a.clone();
        na.extend_from_slice(&b);
        let mut nb = a.clone();
        nb.extend(b.iter().map(|v| -v));
        a = na;
        b = nb;
    }
    (a, b)
}

pub fn build_training<R: Rng + ?Sized>(
    kind: TrainingKind,
    n_p: usize,
    n_t: usize,
    delay_taps: usize,
    power: f64,
    rng: &mut R,
) -> Result<TrainingMatrix> {
    if n_p == 0 || n_t == 0 || delay_taps == 0 {
        return Err(Error::Config("N_p, N_t and L must be positive".into()));
    }
    if !(power > 0.0) {
        return Err(Error::Config(format!("training power must be positive, got {power}")));
    }
    let amp = (power / n_t as f64).sqrt();
    let storage = match kind {
        TrainingKind::ShiftedZc => {
            let block = n_t * delay_taps;
            if n_p % block != 0 {
                return Err(Error::Divisibility { n_p, block });
            }
            Storage::Shifted(zc_sequence(n_p, power, n_t))
        }
        TrainingKind::Golay => {
            let m = n_p.trailing_zeros();
            let (a, b) = golay_pair(m);
            let len = a.len();
            Storage::Dense(DMatrix::from_fn(n_t, n_p, |n, col| {
                let seq = if n % 2 == 0 { &a } else { &b };
                let k = (col + n_p - (n * delay_taps) % n_p) % n_p;
                Complex64::new(amp * seq[k % len] as f64, 0.0)
            }))
        }
        TrainingKind::IidQpsk => {
            let s = amp / std::f64::consts::SQRT_2;
            let mut m = DMatrix::zeros(n_t, n_p);
            for v in m.iter_mut() {
                let re = if rng.random::<bool>() { s } else { -s };
                let im = if rng.random::<bool>() { s } else { -s };
                *v = Complex64::new(re, im);
            }
            Storage::Dense(m)
        }
        TrainingKind::IidGaussian => {
            let s = amp / std::f64::consts::SQRT_2;
            let mut m = DMatrix::zeros(n_t, n_p);
            for v in m.iter_mut() {
                let re: f64 = StandardNormal.sample(rng);
                let im: f64 = StandardNormal.sample(rng);
                *v = Complex64::new(re * s, im * s);
            }
            Storage::Dense(m)
        }
    };
    Ok(TrainingMatrix { kind, n_t, n_p, delay_taps, power, storage })
}

impl TrainingMatrix {
    /// Wraps an arbitrary `N_t × N_p` matrix.
    pub fn from_dense(kind: TrainingKind, t: DMatrix<Complex64>, delay_taps: usize, power: f64) -> Self {
        Self { kind, n_t: t.nrows(), n_p: t.ncols(), delay_taps, power, storage: Storage::Dense(t) }
    }

    /// Base sequence when every row is a circular shift of it.
    pub fn base_sequence(&self) -> Option<&[Complex64]> {
        match &self.storage {
            Storage::Shifted(t) => Some(t),
            Storage::Dense(_) => None,
        }
    }

    pub fn entry(&self, n: usize, m: usize) -> Complex64 {
        match &self.storage {
            Storage::Shifted(t) => {
                let shift = (n * self.delay_taps) % self.n_p;
                t[(m + self.n_p - shift) % self.n_p]
            }
            Storage::Dense(d) => d[(n, m)],
        }
    }

    pub fn row(&self, n: usize) -> Vec<Complex64> {
        (0..self.n_p).map(|m| self.entry(n, m)).collect()
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        match &self.storage {
            Storage::Dense(d) => d.clone(),
            Storage::Shifted(_) => DMatrix::from_fn(self.n_t, self.n_p, |n, m| self.entry(n, m)),
        }
    }

    pub fn frobenius_sqr(&self) -> f64 {
        match &self.storage {
            Storage::Shifted(t) => self.n_t as f64 * t.iter().map(|v| v.norm_sqr()).sum::<f64>(),
            Storage::Dense(d) => d.norm_squared(),
        }
    }

    /// Peak-to-average power ratio of row `n` (linear).
    pub fn papr(&self, n: usize) -> f64 {
        let row = self.row(n);
        let peak = row.iter().map(|v| v.norm_sqr()).fold(0.0, f64::max);
        let mean = row.iter().map(|v| v.norm_sqr()).sum::<f64>() / row.len() as f64;
        peak / mean
    }

    /// `C = (I_L ⊗ B_Nt*) T̃`, of size `N_t L × N_p`.
    pub fn c_matrix(&self, tx: &ArrayGeometry) -> Result<DMatrix<Complex64>> {
        if tx.len() != self.n_t {
            return Err(Error::Dimension { expected: self.n_t, got: tx.len() });
        }
        let (stacked, _) = stacked_blocks(self);
        let dft = tx.dft();
        let nt = self.n_t;
        let mut c = stacked;
        let mut col = vec![Complex64::default(); nt];
        for l in 0..self.delay_taps {
            for m in 0..self.n_p {
                for (n, v) in col.iter_mut().enumerate() {
                    *v = c[(l * nt + n, m)];
                }
                dft.inverse(&mut col);
                for (n, v) in col.iter().enumerate() {
                    c[(l * nt + n, m)] = *v;
                }
            }
        }
        Ok(c)
    }
}

/// `J_ℓ`: right-multiplication delays each row circularly by `shift` places.
pub fn circulant_delay(n_p: usize, shift: usize) -> DMatrix<Complex64> {
    DMatrix::from_fn(n_p, n_p, |k, m| {
        if (k + shift) % n_p == m {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::default()
        }
    })
}

/// Returns `T̃ = [T J_0; …; T J_{L-1}]` and the row order `perm` with
/// `T̄[s] = T̃[perm[s]]`. For shifted-ZC training `T̄[s]` is `t` delayed by `s`.
pub fn stacked_blocks(t: &TrainingMatrix) -> (DMatrix<Complex64>, Vec<usize>) {
    let (nt, np, taps) = (t.n_t, t.n_p, t.delay_taps);
    let stacked = DMatrix::from_fn(nt * taps, np, |row, m| {
        let (l, n) = (row / nt, row % nt);
        t.entry(n, (m + np - l % np) % np)
    });
    let perm = (0..nt * taps).map(|s| (s % taps) * nt + s / taps).collect();
    (stacked, perm)
}
