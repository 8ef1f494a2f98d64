use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Unitary 2-D DFT over a uniform planar array, `F_a ⊗ F_e`.
///
/// Vectors are laid out column-major over an `n_elev × n_azim` grid, so the
/// elevation index runs fastest. Applying [`Dft2::forward`] to `vec(U)` yields
/// `vec(F_e U F_a)`; [`Dft2::inverse`] applies the adjoint. Plans are shared
/// behind `Arc` and every call allocates its own scratch, so one instance can
/// be used from many threads at once.
#[derive(Clone)]
pub struct Dft2 {
    n_elev: usize,
    n_azim: usize,
    scale: f64,
    elev_fwd: Arc<dyn Fft<f64>>,
    elev_inv: Arc<dyn Fft<f64>>,
    azim_fwd: Arc<dyn Fft<f64>>,
    azim_inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Dft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Dft2")
            .field("n_elev", &self.n_elev)
            .field("n_azim", &self.n_azim)
            .finish()
    }
}

impl Dft2 {
    pub fn new(n_elev: usize, n_azim: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n_elev,
            n_azim,
            scale: 1.0 / ((n_elev * n_azim) as f64).sqrt(),
            elev_fwd: planner.plan_fft_forward(n_elev),
            elev_inv: planner.plan_fft_inverse(n_elev),
            azim_fwd: planner.plan_fft_forward(n_azim),
            azim_inv: planner.plan_fft_inverse(n_azim),
        }
    }

    pub fn len(&self) -> usize {
        self.n_elev * self.n_azim
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        self.run(data, &self.elev_fwd, &self.azim_fwd);
    }

    pub fn inverse(&self, data: &mut [Complex64]) {
        self.run(data, &self.elev_inv, &self.azim_inv);
    }

    fn run(&self, data: &mut [Complex64], elev: &Arc<dyn Fft<f64>>, azim: &Arc<dyn Fft<f64>>) {
        assert_eq!(data.len(), self.len(), "Dft2 length mismatch");
        let ne = self.n_elev;
        let na = self.n_azim;
        if ne > 1 {
            let mut scratch = vec![Complex64::default(); elev.get_inplace_scratch_len()];
            // columns are contiguous
            elev.process_with_scratch(data, &mut scratch);
        }
        if na > 1 {
            let mut scratch = vec![Complex64::default(); azim.get_inplace_scratch_len()];
            let mut row = vec![Complex64::default(); na];
            for e in 0..ne {
                for (a, v) in row.iter_mut().enumerate() {
                    *v = data[e + ne * a];
                }
                azim.process_with_scratch(&mut row, &mut scratch);
                for (a, v) in row.iter().enumerate() {
                    data[e + ne * a] = *v;
                }
            }
        }
        for v in data.iter_mut() {
            *v *= self.scale;
        }
    }
}

/// Circular convolution / correlation against a fixed length-`n` sequence.
#[derive(Clone)]
pub(crate) struct CircularFilter {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    spectrum: Vec<Complex64>,
}

impl CircularFilter {
    pub fn new(seq: &[Complex64]) -> Self {
        let n = seq.len();
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let mut spectrum = seq.to_vec();
        fwd.process(&mut spectrum);
        Self { n, fwd, inv, spectrum }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    /// `out[m] = Σ_s g[s] t[(m - s) mod n]`; `buf` holds `g` zero-padded to `n`.
    pub fn convolve(&self, buf: &mut [Complex64], scratch: &mut Vec<Complex64>) {
        self.filter(buf, scratch, false);
    }

    /// `out[s] = Σ_m d[m] conj(t[(m - s) mod n])`.
    pub fn correlate(&self, buf: &mut [Complex64], scratch: &mut Vec<Complex64>) {
        self.filter(buf, scratch, true);
    }

    fn filter(&self, buf: &mut [Complex64], scratch: &mut Vec<Complex64>, conj: bool) {
        let need = self
            .fwd
            .get_inplace_scratch_len()
            .max(self.inv.get_inplace_scratch_len());
        if scratch.len() < need {
            scratch.resize(need, Complex64::default());
        }
        self.fwd.process_with_scratch(buf, &mut scratch[..need]);
        let inv_n = 1.0 / self.n as f64;
        for (b, h) in buf.iter_mut().zip(&self.spectrum) {
            let h = if conj { h.conj() } else { *h };
            *b *= h * inv_n;
        }
        self.inv.process_with_scratch(buf, &mut scratch[..need]);
    }
}
