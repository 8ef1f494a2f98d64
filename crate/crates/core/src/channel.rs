//! Clustered broadband mmWave MIMO channels.
//!
//! A realization holds the antenna-domain taps `H[ℓ]` and the angle-delay
//! coefficients `X[ℓ]`, related by `H[ℓ] = B_Nr X[ℓ] B_Nt*` where each `B` is
//! the unitary 2-D DFT of a uniform planar array. Array vectors are indexed
//! with the elevation element running fastest, `i = e + N_e·a`.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::{Dft2, Error, Result};

/// Uniform planar array with `rows_elev × cols_azim` elements.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrayGeometry {
    pub rows_elev: usize,
    pub cols_azim: usize,
    /// Element spacing in wavelengths.
    pub spacing: f64,
}

impl ArrayGeometry {
    /// Half-wavelength spaced UPA.
    pub fn new(rows_elev: usize, cols_azim: usize) -> Result<Self> {
        Self::with_spacing(rows_elev, cols_azim, 0.5)
    }

    pub fn with_spacing(rows_elev: usize, cols_azim: usize, spacing: f64) -> Result<Self> {
        if rows_elev == 0 || cols_azim == 0 {
            return Err(Error::Config("array dimensions must be positive".into()));
        }
        if !(spacing > 0.0) {
            return Err(Error::Config(format!("element spacing must be positive, got {spacing}")));
        }
        Ok(Self { rows_elev, cols_azim, spacing })
    }

    pub fn len(&self) -> usize {
        self.rows_elev * self.cols_azim
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dft(&self) -> Dft2 {
        Dft2::new(self.rows_elev, self.cols_azim)
    }

    /// Unit-norm array response for azimuth `azim` and zenith `zen` (radians).
    ///
    /// Broadside is `azim = 0`, `zen = π/2`.
    pub fn response(&self, azim: f64, zen: f64) -> Vec<Complex64> {
        let ne = self.rows_elev;
        let na = self.cols_azim;
        let k = 2.0 * PI * self.spacing;
        let elev_phase = k * zen.cos();
        let azim_phase = k * zen.sin() * azim.sin();
        let scale = 1.0 / (self.len() as f64).sqrt();
        let mut out = Vec::with_capacity(self.len());
        for a in 0..na {
            for e in 0..ne {
                let ph = elev_phase * e as f64 + azim_phase * a as f64;
                out.push(Complex64::from_polar(scale, ph));
            }
        }
        out
    }
}

/// Raised-cosine pulse `p(t)`; roll-off 0 gives a normalized sinc.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseShape {
    pub rolloff: f64,
    pub symbol_period: f64,
}

impl Default for PulseShape {
    fn default() -> Self {
        Self { rolloff: 0.0, symbol_period: 1.0 }
    }
}

impl PulseShape {
    pub fn eval(&self, t: f64) -> f64 {
        let u = t / self.symbol_period;
        let beta = self.rolloff;
        let sinc = if u.abs() < 1e-12 { 1.0 } else { (PI * u).sin() / (PI * u) };
        if beta == 0.0 {
            return sinc;
        }
        let denom = 1.0 - (2.0 * beta * u).powi(2);
        if denom.abs() < 1e-10 {
            let x = 1.0 / (2.0 * beta);
            return PI / 4.0 * (PI * x).sin() / (PI * x);
        }
        sinc * (PI * beta * u).cos() / denom
    }
}

/// One propagation path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathParams {
    pub cluster: usize,
    pub gain: Complex64,
    /// Delay in seconds.
    pub delay: f64,
    pub aoa_azim: f64,
    pub aoa_zen: f64,
    pub aod_azim: f64,
    pub aod_zen: f64,
}

/// Cluster-level parameters the paths were drawn around.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterCenter {
    pub delay: f64,
    pub aoa_azim: f64,
    pub aoa_zen: f64,
    pub aod_azim: f64,
    pub aod_zen: f64,
    /// Fraction of the total average power carried by this cluster.
    pub power: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterParams {
    pub clusters: Vec<ClusterCenter>,
    pub paths: Vec<PathParams>,
    pub pulse: PulseShape,
    /// Delay spread `L` in symbols.
    pub delay_taps: usize,
}

impl ClusterParams {
    pub fn validate(&self) -> Result<()> {
        if self.clusters.is_empty() || self.paths.is_empty() {
            return Err(Error::Config("channel needs at least one cluster and one path".into()));
        }
        let window = self.delay_taps as f64 * self.pulse.symbol_period;
        for p in &self.paths {
            if !(p.delay >= 0.0 && p.delay < window) {
                return Err(Error::Config(format!(
                    "path delay {} outside [0, L·T) = [0, {window})",
                    p.delay
                )));
            }
        }
        Ok(())
    }
}

/// Sampling law for [`draw_clusters`].
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterConfig {
    pub n_clusters: usize,
    pub paths_per_cluster: usize,
    /// Standard deviation of the per-path Laplacian angle offsets (radians).
    pub angular_spread: f64,
    pub delay_taps: usize,
    pub pulse: PulseShape,
    /// Half-width of the uniform cluster-center azimuth range (radians).
    pub azim_half_range: f64,
    /// Half-width of the uniform cluster-center zenith range around broadside (radians).
    pub zen_half_range: f64,
    /// Relative cluster powers; `None` means equal power.
    pub cluster_powers: Option<Vec<f64>>,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            n_clusters: 4,
            paths_per_cluster: 10,
            angular_spread: 7.5f64.to_radians(),
            delay_taps: 16,
            pulse: PulseShape::default(),
            azim_half_range: 60f64.to_radians(),
            zen_half_range: 30f64.to_radians(),
            cluster_powers: None,
        }
    }
}

fn laplacian<R: Rng + ?Sized>(rng: &mut R, std_dev: f64) -> f64 {
    if std_dev == 0.0 {
        return 0.0;
    }
    let scale = std_dev / std::f64::consts::SQRT_2;
    let u: f64 = rng.random::<f64>() - 0.5;
    -scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, var: f64) -> Complex64 {
    let s = (var / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re * s, im * s)
}

/// Draws cluster centers, per-path angle/delay offsets and gains.
///
/// Path gains are circularly-symmetric Gaussian with total average power one,
/// split across clusters by `cluster_powers`.
pub fn draw_clusters<R: Rng + ?Sized>(rng: &mut R, cfg: &ClusterConfig) -> Result<ClusterParams> {
    if cfg.n_clusters == 0 || cfg.paths_per_cluster == 0 {
        return Err(Error::Config("need at least one cluster with one path".into()));
    }
    if !(cfg.angular_spread >= 0.0) {
        return Err(Error::Config("angular spread must be nonnegative".into()));
    }
    if cfg.delay_taps < 5 {
        return Err(Error::Config(format!(
            "delay spread L = {} too short for the cluster delay layout (need L >= 5)",
            cfg.delay_taps
        )));
    }
    let powers = match &cfg.cluster_powers {
        Some(p) if p.len() == cfg.n_clusters && p.iter().all(|v| *v >= 0.0) => p.clone(),
        Some(p) => {
            return Err(Error::Config(format!(
                "expected {} nonnegative cluster powers, got {:?}",
                cfg.n_clusters, p
            )))
        }
        None => vec![1.0; cfg.n_clusters],
    };
    let total: f64 = powers.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Config("cluster powers sum to zero".into()));
    }

    let t_sym = cfg.pulse.symbol_period;
    let broadside = PI / 2.0;
    let mut clusters = Vec::with_capacity(cfg.n_clusters);
    let mut paths = Vec::with_capacity(cfg.n_clusters * cfg.paths_per_cluster);
    for (n, p) in powers.iter().enumerate() {
        let center = ClusterCenter {
            delay: rng.random::<f64>() * (cfg.delay_taps - 4) as f64 * t_sym,
            aoa_azim: rng.random_range(-1.0..=1.0) * cfg.azim_half_range,
            aoa_zen: broadside + rng.random_range(-1.0..=1.0) * cfg.zen_half_range,
            aod_azim: rng.random_range(-1.0..=1.0) * cfg.azim_half_range,
            aod_zen: broadside + rng.random_range(-1.0..=1.0) * cfg.zen_half_range,
            power: p / total,
        };
        let path_var = center.power / cfg.paths_per_cluster as f64;
        for _ in 0..cfg.paths_per_cluster {
            let spread = cfg.angular_spread;
            paths.push(PathParams {
                cluster: n,
                gain: complex_gaussian(rng, path_var),
                delay: center.delay + rng.random::<f64>() * 2.0 * t_sym,
                aoa_azim: center.aoa_azim + laplacian(rng, spread),
                aoa_zen: center.aoa_zen + laplacian(rng, spread),
                aod_azim: center.aod_azim + laplacian(rng, spread),
                aod_zen: center.aod_zen + laplacian(rng, spread),
            });
        }
        clusters.push(center);
    }
    Ok(ClusterParams { clusters, paths, pulse: cfg.pulse, delay_taps: cfg.delay_taps })
}

/// Antenna-domain taps and angle-delay coefficients of one channel draw.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub tx: ArrayGeometry,
    pub rx: ArrayGeometry,
    /// `H[ℓ]`, each `N_r × N_t`.
    pub h: Vec<DMatrix<Complex64>>,
    /// `X[ℓ]`, each `N_r × N_t`.
    pub x: Vec<DMatrix<Complex64>>,
}

impl ChannelRealization {
    pub fn from_angle(x: Vec<DMatrix<Complex64>>, tx: ArrayGeometry, rx: ArrayGeometry) -> Result<Self> {
        let h = angle_to_antenna(&x, &tx, &rx)?;
        Ok(Self { tx, rx, h, x })
    }

    pub fn from_antenna(h: Vec<DMatrix<Complex64>>, tx: ArrayGeometry, rx: ArrayGeometry) -> Result<Self> {
        let x = antenna_to_angle(&h, &tx, &rx)?;
        Ok(Self { tx, rx, h, x })
    }

    pub fn delay_taps(&self) -> usize {
        self.h.len()
    }

    /// `vec([X[0] X[1] … X[L-1]])`, i.e. entry `(r, t, ℓ)` at `r + N_r (t + N_t ℓ)`.
    pub fn vec_x(&self) -> Vec<Complex64> {
        self.x.iter().flat_map(|m| m.as_slice().iter().copied()).collect()
    }

    /// Total tap energy `Σ_ℓ ‖H[ℓ]‖²_F`.
    pub fn energy(&self) -> f64 {
        self.h.iter().map(|m| m.norm_squared()).sum()
    }

    /// Per-bin angle-domain energy `Σ_ℓ |X[ℓ]_{ij}|²`.
    pub fn angle_energy_map(&self) -> DMatrix<f64> {
        let (nr, nt) = (self.rx.len(), self.tx.len());
        let mut out = DMatrix::<f64>::zeros(nr, nt);
        for m in &self.x {
            out.zip_apply(m, |acc, v| *acc += v.norm_sqr());
        }
        out
    }

    /// Writes `domain,tap,row,col,re,im` rows for both `H` and `X`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["domain", "tap", "row", "col", "re", "im"])?;
        for (domain, taps) in [("H", &self.h), ("X", &self.x)] {
            for (l, m) in taps.iter().enumerate() {
                for j in 0..m.ncols() {
                    for i in 0..m.nrows() {
                        let v = m[(i, j)];
                        w.write_record([
                            domain.to_string(),
                            l.to_string(),
                            i.to_string(),
                            j.to_string(),
                            format!("{:.17e}", v.re),
                            format!("{:.17e}", v.im),
                        ])?;
                    }
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Evaluates the clustered tap model on `tx`/`rx` arrays.
///
/// Each path's pulse samples are divided by their in-window energy and the sum is
/// scaled by `√(N_t N_r)`, so `E[Σ_ℓ ‖H[ℓ]‖²_F] = N_t N_r` over the gain draws.
pub fn synthesize_taps(
    params: &ClusterParams,
    tx: &ArrayGeometry,
    rx: &ArrayGeometry,
) -> Result<ChannelRealization> {
    params.validate()?;
    let (nt, nr) = (tx.len(), rx.len());
    let taps = params.delay_taps;
    let t_sym = params.pulse.symbol_period;
    let scale = ((nt * nr) as f64).sqrt();
    let mut h = vec![DMatrix::<Complex64>::zeros(nr, nt); taps];
    let mut samples = vec![0.0; taps];
    for path in &params.paths {
        for (l, s) in samples.iter_mut().enumerate() {
            *s = params.pulse.eval(l as f64 * t_sym - path.delay);
        }
        let energy: f64 = samples.iter().map(|s| s * s).sum();
        if energy <= 0.0 {
            continue;
        }
        let ar = rx.response(path.aoa_azim, path.aoa_zen);
        let at = tx.response(path.aod_azim, path.aod_zen);
        let weight = path.gain * (scale / energy.sqrt());
        for (l, s) in samples.iter().enumerate() {
            if *s == 0.0 {
                continue;
            }
            let c = weight * *s;
            let tap = &mut h[l];
            for (j, atj) in at.iter().enumerate() {
                let cj = c * atj.conj();
                for (i, ari) in ar.iter().enumerate() {
                    tap[(i, j)] += ari * cj;
                }
            }
        }
    }
    ChannelRealization::from_antenna(h, *tx, *rx)
}

fn check_dims(taps: &[DMatrix<Complex64>], tx: &ArrayGeometry, rx: &ArrayGeometry) -> Result<()> {
    for m in taps {
        if m.nrows() != rx.len() {
            return Err(Error::Dimension { expected: rx.len(), got: m.nrows() });
        }
        if m.ncols() != tx.len() {
            return Err(Error::Dimension { expected: tx.len(), got: m.ncols() });
        }
    }
    Ok(())
}

// M ← Lr(M) applied to columns, then Rt(row) applied to each row.
fn transform_taps(
    taps: &[DMatrix<Complex64>],
    rx: &Dft2,
    rx_forward: bool,
    tx: &Dft2,
    tx_forward: bool,
) -> Vec<DMatrix<Complex64>> {
    let nt = tx.len();
    let mut row = vec![Complex64::default(); nt];
    taps.iter()
        .map(|m| {
            let mut out = m.clone();
            for mut col in out.column_iter_mut() {
                let s = col.as_mut_slice();
                if rx_forward {
                    rx.forward(s)
                } else {
                    rx.inverse(s)
                }
            }
            for i in 0..out.nrows() {
                for (j, v) in row.iter_mut().enumerate() {
                    *v = out[(i, j)];
                }
                if tx_forward {
                    tx.forward(&mut row)
                } else {
                    tx.inverse(&mut row)
                }
                for (j, v) in row.iter().enumerate() {
                    out[(i, j)] = *v;
                }
            }
            out
        })
        .collect()
}

/// `H[ℓ] = B_Nr X[ℓ] B_Nt*` via 2-D FFTs.
pub fn angle_to_antenna(
    x: &[DMatrix<Complex64>],
    tx: &ArrayGeometry,
    rx: &ArrayGeometry,
) -> Result<Vec<DMatrix<Complex64>>> {
    check_dims(x, tx, rx)?;
    // B is symmetric, so right-multiplying by B* applies B* to each row.
    Ok(transform_taps(x, &rx.dft(), true, &tx.dft(), false))
}

/// `X[ℓ] = B_Nr* H[ℓ] B_Nt` via 2-D FFTs.
pub fn antenna_to_angle(
    h: &[DMatrix<Complex64>],
    tx: &ArrayGeometry,
    rx: &ArrayGeometry,
) -> Result<Vec<DMatrix<Complex64>>> {
    check_dims(h, tx, rx)?;
    Ok(transform_taps(h, &rx.dft(), false, &tx.dft(), true))
}

/// Splits `vec([X[0] … X[L-1]])` back into per-tap matrices.
pub fn unvec_taps(x: &[Complex64], nr: usize, nt: usize) -> Result<Vec<DMatrix<Complex64>>> {
    let block = nr * nt;
    if block == 0 || x.len() % block != 0 {
        return Err(Error::Dimension { expected: block, got: x.len() });
    }
    Ok(x.chunks(block).map(|c| DMatrix::from_column_slice(nr, nt, c)).collect())
}
