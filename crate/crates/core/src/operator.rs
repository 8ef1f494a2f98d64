//! The measurement operator `A = Cᵀ ⊗ B_Nr`, applied without forming `A`.
//!
//! `A x = vec(B_Nr X̄ C)` with `X̄ = [X[0] … X[L-1]]`. For shifted-ZC training
//! `X̄ C` is a set of `N_r` circular convolutions with the base sequence, so a
//! full apply costs `O(N_r N_p log N_p + N_p N_r log N_r + L N_r N_t log N_t)`.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::channel::ArrayGeometry;
use crate::fft::CircularFilter;
use crate::training::TrainingMatrix;
use crate::{norm_sqr, Dft2, Error, Result};

/// Largest `N_p · N_t L` for which a dense SVD of `Cᵀ` is attempted.
pub const DENSE_SVD_LIMIT: usize = 1 << 22;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SvdMode {
    /// Shifted-ZC training: flat spectrum, FFT apply.
    FlatZc,
    /// Any training: `C` held explicitly.
    GeneralDense,
}

#[derive(Debug, Clone)]
enum Kernel {
    Fast(CircularFilter),
    Dense(DMatrix<Complex64>),
}

#[derive(Debug, Clone)]
pub struct MeasurementOperator {
    training: TrainingMatrix,
    tx: ArrayGeometry,
    rx: ArrayGeometry,
    tx_dft: Dft2,
    rx_dft: Dft2,
    kernel: Kernel,
    mode: SvdMode,
    frobenius_sqr: f64,
}

impl std::fmt::Debug for CircularFilter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CircularFilter").field("len", &self.len()).finish()
    }
}

impl MeasurementOperator {
    /// Picks the FFT path for shifted-ZC training and the dense path otherwise.
    pub fn new(training: TrainingMatrix, tx: ArrayGeometry, rx: ArrayGeometry) -> Result<Self> {
        let mode = if training.base_sequence().is_some() { SvdMode::FlatZc } else { SvdMode::GeneralDense };
        Self::with_mode(training, tx, rx, mode)
    }

    pub fn with_mode(training: TrainingMatrix, tx: ArrayGeometry, rx: ArrayGeometry, mode: SvdMode) -> Result<Self> {
        if training.n_t != tx.len() {
            return Err(Error::Dimension { expected: tx.len(), got: training.n_t });
        }
        let kernel = match mode {
            SvdMode::FlatZc => {
                let t = training.base_sequence().ok_or_else(|| {
                    Error::Mode(format!("flat-spectrum mode needs shifted-ZC training, got {}", training.kind))
                })?;
                Kernel::Fast(CircularFilter::new(t))
            }
            SvdMode::GeneralDense => Kernel::Dense(training.c_matrix(&tx)?),
        };
        let frobenius_sqr = (rx.len() * training.delay_taps) as f64 * training.frobenius_sqr();
        Ok(Self {
            tx_dft: tx.dft(),
            rx_dft: rx.dft(),
            training,
            tx,
            rx,
            kernel,
            mode,
            frobenius_sqr,
        })
    }

    pub fn mode(&self) -> SvdMode {
        self.mode
    }

    pub fn training(&self) -> &TrainingMatrix {
        &self.training
    }

    pub fn tx(&self) -> &ArrayGeometry {
        &self.tx
    }

    pub fn rx(&self) -> &ArrayGeometry {
        &self.rx
    }

    pub fn delay_taps(&self) -> usize {
        self.training.delay_taps
    }

    pub fn n_p(&self) -> usize {
        self.training.n_p
    }

    /// Input length `N_t N_r L`.
    pub fn n_x(&self) -> usize {
        self.tx.len() * self.rx.len() * self.delay_taps()
    }

    /// Output length `N_r N_p`.
    pub fn n_y(&self) -> usize {
        self.rx.len() * self.n_p()
    }

    /// `‖A‖_F² = N_r L ‖T‖_F²`.
    pub fn frobenius_sqr(&self) -> f64 {
        self.frobenius_sqr
    }

    fn check_len(expected: usize, got: usize) -> Result<()> {
        if expected == got {
            Ok(())
        } else {
            Err(Error::Dimension { expected, got })
        }
    }

    pub fn apply(&self, x: &[Complex64]) -> Result<Vec<Complex64>> {
        Self::check_len(self.n_x(), x.len())?;
        let (nr, nt, np, taps) = (self.rx.len(), self.tx.len(), self.n_p(), self.delay_taps());
        let mut y = vec![Complex64::default(); nr * np];
        match &self.kernel {
            Kernel::Fast(filter) => {
                // g[r·N_p + nL + ℓ] = (X[ℓ] B_Nt*)[r, n]
                let mut g = vec![Complex64::default(); nr * np];
                let mut row = vec![Complex64::default(); nt];
                for l in 0..taps {
                    for r in 0..nr {
                        for (n, v) in row.iter_mut().enumerate() {
                            *v = x[r + nr * (n + nt * l)];
                        }
                        self.tx_dft.inverse(&mut row);
                        for (n, v) in row.iter().enumerate() {
                            g[r * np + n * taps + l] = *v;
                        }
                    }
                }
                let mut scratch = Vec::new();
                for (r, chunk) in g.chunks_mut(np).enumerate() {
                    filter.convolve(chunk, &mut scratch);
                    for (m, v) in chunk.iter().enumerate() {
                        y[r + nr * m] = *v;
                    }
                }
            }
            Kernel::Dense(c) => {
                let xbar = DMatrix::from_column_slice(nr, nt * taps, x);
                y.copy_from_slice((xbar * c).as_slice());
            }
        }
        for col in y.chunks_mut(nr) {
            self.rx_dft.forward(col);
        }
        Ok(y)
    }

    pub fn adjoint(&self, s: &[Complex64]) -> Result<Vec<Complex64>> {
        Self::check_len(self.n_y(), s.len())?;
        let (nr, nt, np, taps) = (self.rx.len(), self.tx.len(), self.n_p(), self.delay_taps());
        let mut d = s.to_vec();
        for col in d.chunks_mut(nr) {
            self.rx_dft.inverse(col);
        }
        let mut x = vec![Complex64::default(); self.n_x()];
        match &self.kernel {
            Kernel::Fast(filter) => {
                let mut h = vec![Complex64::default(); nr * np];
                for (r, chunk) in h.chunks_mut(np).enumerate() {
                    for (m, v) in chunk.iter_mut().enumerate() {
                        *v = d[r + nr * m];
                    }
                }
                let mut scratch = Vec::new();
                for chunk in h.chunks_mut(np) {
                    filter.correlate(chunk, &mut scratch);
                }
                let mut row = vec![Complex64::default(); nt];
                for l in 0..taps {
                    for r in 0..nr {
                        for (n, v) in row.iter_mut().enumerate() {
                            *v = h[r * np + n * taps + l];
                        }
                        self.tx_dft.forward(&mut row);
                        for (n, v) in row.iter().enumerate() {
                            x[r + nr * (n + nt * l)] = *v;
                        }
                    }
                }
            }
            Kernel::Dense(c) => {
                let dm = DMatrix::from_column_slice(nr, np, &d);
                x.copy_from_slice((dm * c.adjoint()).as_slice());
            }
        }
        Ok(x)
    }

    /// `C C*` as a scalar multiple of the identity, when it is one.
    pub fn gram_scalar(&self) -> Option<f64> {
        match self.kernel {
            Kernel::Fast(_) => Some(self.training.frobenius_sqr() / self.tx.len() as f64),
            Kernel::Dense(_) => None,
        }
    }

    /// `C C*`, of size `N_t L × N_t L`.
    pub fn gram(&self) -> DMatrix<Complex64> {
        match &self.kernel {
            Kernel::Fast(_) => {
                let n = self.tx.len() * self.delay_taps();
                DMatrix::identity(n, n) * Complex64::new(self.gram_scalar().unwrap(), 0.0)
            }
            Kernel::Dense(c) => c * c.adjoint(),
        }
    }

    /// `‖A‖₂²`: exact for flat spectra, power iteration otherwise.
    pub fn spectral_norm_sqr(&self) -> f64 {
        if self.mode == SvdMode::FlatZc {
            return self.frobenius_sqr / self.n_x() as f64;
        }
        if let Kernel::Dense(c) = &self.kernel {
            let gram = c * c.adjoint();
            let mut v = vec![Complex64::new(1.0, 0.0); gram.nrows()];
            let mut lambda = 0.0;
            for _ in 0..200 {
                let w = &gram * nalgebra::DVector::from_column_slice(&v);
                let nw = w.norm();
                if nw == 0.0 {
                    return 0.0;
                }
                let next = nw / norm_sqr(&v).sqrt();
                v = (w / Complex64::new(nw, 0.0)).as_slice().to_vec();
                if (next - lambda).abs() <= 1e-12 * next {
                    lambda = next;
                    break;
                }
                lambda = next;
            }
            return lambda;
        }
        unreachable!()
    }

    /// Explicit `A`; only sensible for small dimensions.
    pub fn materialize(&self) -> Result<DMatrix<Complex64>> {
        let c = match &self.kernel {
            Kernel::Dense(c) => c.clone(),
            Kernel::Fast(_) => self.training.c_matrix(&self.tx)?,
        };
        Ok(c.transpose().kronecker(&dft_matrix(&self.rx_dft)))
    }

    pub fn svd_factors(&self) -> Result<SvdFactors<'_>> {
        match &self.kernel {
            Kernel::Fast(_) => {
                let s = (self.frobenius_sqr / self.n_x() as f64).sqrt();
                Ok(SvdFactors { op: self, kind: FactorKind::Flat { s } })
            }
            Kernel::Dense(c) => {
                if c.nrows() * c.ncols() > DENSE_SVD_LIMIT {
                    return Err(Error::Mode(format!(
                        "dense SVD of a {}x{} training matrix exceeds the size limit",
                        c.ncols(),
                        c.nrows()
                    )));
                }
                let svd = c.transpose().svd(true, true);
                let u = svd.u.ok_or_else(|| Error::Mode("SVD did not return U".into()))?;
                let v_t = svd.v_t.ok_or_else(|| Error::Mode("SVD did not return V".into()))?;
                let singular: Vec<f64> = svd.singular_values.iter().copied().collect();
                Ok(SvdFactors {
                    op: self,
                    kind: FactorKind::Dense { u, v: v_t.adjoint(), singular },
                })
            }
        }
    }
}

/// Explicit unitary 2-D DFT matrix.
pub fn dft_matrix(dft: &Dft2) -> DMatrix<Complex64> {
    let n = dft.len();
    let mut m = DMatrix::<Complex64>::identity(n, n);
    for mut col in m.column_iter_mut() {
        dft.forward(col.as_mut_slice());
    }
    m
}

#[derive(Debug)]
enum FactorKind {
    Flat { s: f64 },
    /// `Cᵀ = U diag(s) V*`, thin.
    Dense { u: DMatrix<Complex64>, v: DMatrix<Complex64>, singular: Vec<f64> },
}

/// `A = U_A diag(s) V_A*` in a coordinate space of length [`SvdFactors::rank_dim`].
///
/// In the dense case coordinates are ordered `i + N_r k` for receive index `i`
/// and singular value `k` of `Cᵀ`; each singular value repeats `N_r` times.
#[derive(Debug)]
pub struct SvdFactors<'a> {
    op: &'a MeasurementOperator,
    kind: FactorKind,
}

impl SvdFactors<'_> {
    pub fn rank_dim(&self) -> usize {
        match &self.kind {
            FactorKind::Flat { .. } => self.op.n_x(),
            FactorKind::Dense { singular, .. } => singular.len() * self.op.rx.len(),
        }
    }

    /// Singular values in coordinate order.
    pub fn singular_values(&self) -> Vec<f64> {
        match &self.kind {
            FactorKind::Flat { s } => vec![*s; self.op.n_x()],
            FactorKind::Dense { singular, .. } => {
                let nr = self.op.rx.len();
                singular.iter().flat_map(|s| std::iter::repeat_n(*s, nr)).collect()
            }
        }
    }

    pub fn u(&self, w: &[Complex64]) -> Result<Vec<Complex64>> {
        MeasurementOperator::check_len(self.rank_dim(), w.len())?;
        match &self.kind {
            FactorKind::Flat { s } => {
                let mut y = self.op.apply(w)?;
                y.iter_mut().for_each(|v| *v /= *s);
                Ok(y)
            }
            FactorKind::Dense { u, singular, .. } => {
                let nr = self.op.rx.len();
                let wm = DMatrix::from_column_slice(nr, singular.len(), w);
                let mut y = (wm * u.transpose()).as_slice().to_vec();
                for col in y.chunks_mut(nr) {
                    self.op.rx_dft.forward(col);
                }
                Ok(y)
            }
        }
    }

    pub fn u_adj(&self, y: &[Complex64]) -> Result<Vec<Complex64>> {
        MeasurementOperator::check_len(self.op.n_y(), y.len())?;
        match &self.kind {
            FactorKind::Flat { s } => {
                let mut w = self.op.adjoint(y)?;
                w.iter_mut().for_each(|v| *v /= *s);
                Ok(w)
            }
            FactorKind::Dense { u, .. } => {
                let nr = self.op.rx.len();
                let mut d = y.to_vec();
                for col in d.chunks_mut(nr) {
                    self.op.rx_dft.inverse(col);
                }
                let dm = DMatrix::from_column_slice(nr, self.op.n_p(), &d);
                Ok((dm * u.map(|v| v.conj())).as_slice().to_vec())
            }
        }
    }

    pub fn v(&self, w: &[Complex64]) -> Result<Vec<Complex64>> {
        MeasurementOperator::check_len(self.rank_dim(), w.len())?;
        match &self.kind {
            FactorKind::Flat { .. } => Ok(w.to_vec()),
            FactorKind::Dense { v, singular, .. } => {
                let nr = self.op.rx.len();
                let wm = DMatrix::from_column_slice(nr, singular.len(), w);
                Ok((wm * v.transpose()).as_slice().to_vec())
            }
        }
    }

    pub fn v_adj(&self, x: &[Complex64]) -> Result<Vec<Complex64>> {
        MeasurementOperator::check_len(self.op.n_x(), x.len())?;
        match &self.kind {
            FactorKind::Flat { .. } => Ok(x.to_vec()),
            FactorKind::Dense { v, .. } => {
                let nr = self.op.rx.len();
                let xm = DMatrix::from_column_slice(nr, v.nrows(), x);
                Ok((xm * v.map(|c| c.conj())).as_slice().to_vec())
            }
        }
    }
}
