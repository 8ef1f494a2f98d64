//! Broadband mmWave MIMO channel estimation with few-bit ADCs.
//!
//! The crate is organised bottom-up:
//!
//! - [`channel`]: clustered channel synthesis and antenna/angle-delay transforms
//! - [`quantizer`]: uniform mid-rise few-bit quantization
//! - [`training`]: shifted Zadoff-Chu, Golay and IID training matrices
//! - [`operator`]: the implicit FFT-based measurement operator `A = Cᵀ ⊗ B_Nr`
//! - [`denoisers`]: Bernoulli-Gaussian(-mixture) input and quantized-Gaussian output denoisers
//! - [`amp`]: EM-GAMP and EM-VAMP
//! - [`baselines`]: LS, ALMMSE, BPDN and QIHT
//! - [`metrics`]: norm estimation, NMSE, mutual-information and rate bounds
//! - [`harness`]: configuration, Monte-Carlo runner and CSV output

pub mod amp;
pub mod baselines;
pub mod channel;
pub mod denoisers;
mod error;
mod fft;
pub mod harness;
pub mod metrics;
pub mod operator;
pub mod quantizer;
pub mod special;
pub mod training;

pub use error::{Error, Result};
pub use fft::Dft2;

pub use num_complex::Complex64;

/// Squared Euclidean norm of a complex vector.
pub fn norm_sqr(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}
