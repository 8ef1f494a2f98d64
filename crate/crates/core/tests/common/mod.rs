//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use qcs_core::channel::ArrayGeometry;
use qcs_core::denoisers::PriorParams;
use qcs_core::training::TrainingMatrix;
use qcs_core::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<Complex64> {
    (0..n).map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect()
}

pub fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize, var: f64) -> Vec<Complex64> {
    use rand_distr::{Distribution, StandardNormal};
    let s = (var / 2.0).sqrt();
    (0..n)
        .map(|_| {
            let a: f64 = StandardNormal.sample(rng);
            let b: f64 = StandardNormal.sample(rng);
            Complex64::new(a * s, b * s)
        })
        .collect()
}

pub fn rel_err(a: &[Complex64], b: &[Complex64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
    let den: f64 = b.iter().map(|y| y.norm_sqr()).sum();
    (num / den.max(f64::MIN_POSITIVE)).sqrt()
}

/// Unitary DFT matrix `exp(-j2πnk/N)/√N` written out entry by entry.
pub fn dft(n: usize) -> DMatrix<Complex64> {
    let s = 1.0 / (n as f64).sqrt();
    DMatrix::from_fn(n, n, |r, c| Complex64::from_polar(s, -2.0 * PI * ((r * c) % n) as f64 / n as f64))
}

pub fn kron(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    DMatrix::from_fn(ar * br, ac * bc, |i, j| a[(i / br, j / bc)] * b[(i % br, j % bc)])
}

/// `B = F_azim ⊗ F_elev` for a UPA.
pub fn upa_dft(g: &ArrayGeometry) -> DMatrix<Complex64> {
    kron(&dft(g.cols_azim), &dft(g.rows_elev))
}

/// `J_ℓ` with `(T J_ℓ)[n, m] = T[n, m - ℓ]`.
pub fn delay(n: usize, l: usize) -> DMatrix<Complex64> {
    DMatrix::from_fn(n, n, |k, m| if (k + l) % n == m { Complex64::new(1.0, 0.0) } else { Complex64::default() })
}

/// `C = (I_L ⊗ B_Nt*) [T J_0; …; T J_{L-1}]` from explicit matrices.
pub fn dense_c(t: &TrainingMatrix, tx: &ArrayGeometry) -> DMatrix<Complex64> {
    let tm = t.to_dense();
    let (nt, np, taps) = (t.n_t, t.n_p, t.delay_taps);
    let bt = upa_dft(tx).adjoint();
    let mut c = DMatrix::zeros(nt * taps, np);
    for l in 0..taps {
        let block = &bt * &tm * delay(np, l);
        c.view_mut((l * nt, 0), (nt, np)).copy_from(&block);
    }
    c
}

/// `A = Cᵀ ⊗ B_Nr`.
pub fn dense_a(t: &TrainingMatrix, tx: &ArrayGeometry, rx: &ArrayGeometry) -> DMatrix<Complex64> {
    kron(&dense_c(t, tx).transpose(), &upa_dft(rx))
}

pub fn matvec(a: &DMatrix<Complex64>, x: &[Complex64]) -> Vec<Complex64> {
    (a * DVector::from_column_slice(x)).as_slice().to_vec()
}

/// `(A*A + (σ_w²/φ) I)⁻¹ A* y`.
pub fn lmmse(a: &DMatrix<Complex64>, y: &[Complex64], noise_var: f64, prior_var: f64) -> Vec<Complex64> {
    let n = a.ncols();
    let gram = a.adjoint() * a + DMatrix::identity(n, n) * Complex64::new(noise_var / prior_var, 0.0);
    let rhs = a.adjoint() * DVector::from_column_slice(y);
    gram.lu().solve(&rhs).unwrap().as_slice().to_vec()
}

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
// Gauss weights for the odd Kronrod nodes XGK[1], XGK[3], XGK[5], XGK[7]
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15<const N: usize>(f: &dyn Fn(f64) -> [f64; N], a: f64, b: f64) -> ([f64; N], f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut k = [0.0; N];
    let mut g = [0.0; N];
    for i in 0..8 {
        let nodes: &[f64] = if i == 7 { &[0.0] } else { &[-XGK[i], XGK[i]] };
        for x in nodes {
            let v = f(c + h * x);
            for j in 0..N {
                k[j] += WGK[i] * v[j];
                if i % 2 == 1 {
                    g[j] += WG[i / 2] * v[j];
                }
            }
        }
    }
    let mut err = 0.0f64;
    for j in 0..N {
        k[j] *= h;
        g[j] *= h;
        err = err.max((k[j] - g[j]).abs());
    }
    (k, err)
}

fn adapt<const N: usize>(f: &dyn Fn(f64) -> [f64; N], a: f64, b: f64, tol: f64, depth: u32) -> [f64; N] {
    let (k, err) = gk15(f, a, b);
    let scale = k.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if err <= tol.max(1e-14 * scale) || depth == 0 {
        return k;
    }
    let m = 0.5 * (a + b);
    let l = adapt(f, a, m, tol / 2.0, depth - 1);
    let r = adapt(f, m, b, tol / 2.0, depth - 1);
    std::array::from_fn(|j| l[j] + r[j])
}

/// Adaptive Gauss-Kronrod (7/15) quadrature of a vector-valued integrand on
/// `[a, b]`, split into `panels` first; `tol` is absolute per component.
pub fn integrate_vec<const N: usize>(f: &dyn Fn(f64) -> [f64; N], a: f64, b: f64, tol: f64, panels: usize) -> [f64; N] {
    let h = (b - a) / panels as f64;
    let mut out = [0.0; N];
    for i in 0..panels {
        let part = adapt(f, a + i as f64 * h, a + (i + 1) as f64 * h, tol / panels as f64, 16);
        for j in 0..N {
            out[j] += part[j];
        }
    }
    out
}

pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, panels: usize) -> f64 {
    integrate_vec(&|x| [f(x)], a, b, tol, panels)[0]
}

fn cn_density(x: Complex64, mean: Complex64, var: f64) -> f64 {
    (-(x - mean).norm_sqr() / var).exp() / (PI * var)
}

/// Posterior mean and variance of `x` under spike + Gaussian-mixture prior given
/// `r = x + CN(0, ν)`, by 2-D quadrature of the continuous part.
pub fn input_moments_quad(r: Complex64, nu: f64, prior: &PriorParams) -> (Complex64, f64) {
    let mut lo = [r.re - 12.0 * nu.sqrt(), r.im - 12.0 * nu.sqrt()];
    let mut hi = [r.re + 12.0 * nu.sqrt(), r.im + 12.0 * nu.sqrt()];
    for c in &prior.components {
        let w = 12.0 * c.var.sqrt();
        lo = [lo[0].min(c.mean.re - w), lo[1].min(c.mean.im - w)];
        hi = [hi[0].max(c.mean.re + w), hi[1].max(c.mean.im + w)];
    }
    let density = |x: Complex64| -> f64 {
        let prior_c: f64 = prior.components.iter().map(|c| c.weight * cn_density(x, c.mean, c.var)).sum();
        prior_c * cn_density(r, x, nu)
    };
    let tol = 1e-13;
    let outer = |a: f64| -> [f64; 4] {
        integrate_vec(
            &|b: f64| {
                let d = density(Complex64::new(a, b));
                [d, a * d, b * d, (a * a + b * b) * d]
            },
            lo[1],
            hi[1],
            tol,
            64,
        )
    };
    let [z, mr, mi, sq] = integrate_vec(&outer, lo[0], hi[0], tol, 64);
    let z = z + prior.zero_mass * cn_density(r, Complex64::default(), nu);
    let mean = Complex64::new(mr, mi) / z;
    (mean, sq / z - mean.norm_sqr())
}

/// Posterior mean and variance of one real dimension `z ~ N(p, v)` given
/// `z + N(0, s)` in `[lo, hi)`, by 1-D quadrature.
pub fn output_moments_quad(lo: f64, hi: f64, p: f64, v: f64, s: f64) -> (f64, f64) {
    let sd = s.sqrt();
    let f = |z: f64| {
        let prior = (-(z - p).powi(2) / (2.0 * v)).exp() / (2.0 * PI * v).sqrt();
        let upper = if hi.is_finite() { norm_cdf((hi - z) / sd) } else { 1.0 };
        let lower = if lo.is_finite() { norm_cdf((lo - z) / sd) } else { 0.0 };
        let d = prior * (upper - lower);
        [d, z * d, z * z * d]
    };
    let w = 14.0 * v.sqrt();
    let [z, m, sq] = integrate_vec(&f, p - w, p + w, 1e-12, 32);
    let mean = m / z;
    (mean, sq / z - mean * mean)
}

pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Complex LASSO `min ½‖y - A x‖² + λ‖x‖₁` by cyclic coordinate descent.
pub fn lasso_cd(a: &DMatrix<Complex64>, y: &[Complex64], lambda: f64, sweeps: usize) -> Vec<Complex64> {
    let n = a.ncols();
    let mut x = vec![Complex64::default(); n];
    let mut r = DVector::from_column_slice(y);
    let col_norm: Vec<f64> = (0..n).map(|j| a.column(j).norm_squared()).collect();
    for _ in 0..sweeps {
        let mut moved = 0.0f64;
        for j in 0..n {
            if col_norm[j] == 0.0 {
                continue;
            }
            let col = a.column(j);
            let rho = col.dotc(&r) + x[j] * col_norm[j];
            let mag = rho.norm();
            let new = if mag <= lambda { Complex64::default() } else { rho * ((mag - lambda) / mag) / col_norm[j] };
            let d = new - x[j];
            if d != Complex64::default() {
                r -= col * d;
                moved = moved.max(d.norm());
                x[j] = new;
            }
        }
        if moved < 1e-13 {
            break;
        }
    }
    x
}

pub fn gm3_prior() -> PriorParams {
    use qcs_core::denoisers::{Component, PriorKind};
    PriorParams {
        kind: PriorKind::GaussianMixture,
        zero_mass: 0.55,
        components: vec![
            Component { weight: 0.25, mean: Complex64::new(0.3, -0.2), var: 0.2 },
            Component { weight: 0.15, mean: Complex64::new(-0.8, 0.5), var: 1.0 },
            Component { weight: 0.05, mean: Complex64::new(0.0, 0.0), var: 4.0 },
        ],
    }
}

/// `n` deterministic (point, variance) pairs spread over a moderate range.
pub fn moment_grid(n: usize, seed: u64) -> Vec<(Complex64, f64)> {
    let mut r = rng(seed);
    (0..n)
        .map(|_| {
            let p = Complex64::new(4.0 * r.random::<f64>() - 2.0, 4.0 * r.random::<f64>() - 2.0);
            let v = 10f64.powf(-1.3 + 1.6 * r.random::<f64>());
            (p, v)
        })
        .collect()
}

/// One desk-scale block: 4×4 UPAs, two clusters, `L = 8`, shifted-ZC
/// training, noise at `snr_db`.
pub struct DeskBlock {
    pub op: qcs_core::operator::MeasurementOperator,
    pub z: Vec<Complex64>,
    pub x: Vec<Complex64>,
    pub noise_var: f64,
}

pub fn desk_block(n_p: usize, snr_db: f64, seed: u64) -> DeskBlock {
    use qcs_core::channel::{draw_clusters, synthesize_taps, ClusterConfig};
    use qcs_core::operator::MeasurementOperator;
    use qcs_core::training::{build_training, TrainingKind};
    let g = ArrayGeometry::new(4, 4).unwrap();
    let mut r = rng(seed);
    let cfg = ClusterConfig { n_clusters: 2, delay_taps: 8, ..ClusterConfig::default() };
    let ch = synthesize_taps(&draw_clusters(&mut r, &cfg).unwrap(), &g, &g).unwrap();
    let t = build_training(TrainingKind::ShiftedZc, n_p, g.len(), 8, 1.0, &mut r).unwrap();
    let op = MeasurementOperator::new(t, g, g).unwrap();
    let x = ch.vec_x();
    let noise_var = 10f64.powf(-snr_db / 10.0);
    let w = gaussian_vec(&mut r, op.n_y(), noise_var);
    let z = op.apply(&x).unwrap().iter().zip(&w).map(|(a, b)| a + b).collect();
    DeskBlock { op, z, x, noise_var }
}

/// Harness configuration at desk scale: 4×4 UPAs both ends, two clusters,
/// `L = 8`, `N_p = 512`.
pub fn desk_config(trials: usize, snr_db: f64, bits: &[qcs_core::quantizer::Resolution], algos: &[&str]) -> qcs_core::harness::ExperimentConfig {
    let mut cfg = qcs_core::harness::ExperimentConfig::default();
    cfg.arrays.tx = [4, 4];
    cfg.arrays.rx = [4, 4];
    cfg.channel.clusters = 2;
    cfg.channel.taps = 8;
    cfg.training.np = vec![512];
    cfg.trials = trials;
    cfg.sweep.snr_db = vec![snr_db];
    cfg.sweep.bits = bits.to_vec();
    cfg.algorithms.list = algos.iter().map(|a| a.parse().unwrap()).collect();
    cfg.output.timing = false;
    cfg
}

/// Mean NMSE in dB per algorithm name, failing on any failed row.
pub fn mean_db_by_algorithm(rows: &[qcs_core::harness::ResultRow]) -> std::collections::BTreeMap<(String, String), f64> {
    assert!(rows.iter().all(|r| r.ok()), "failed rows: {:?}", rows.iter().find(|r| !r.ok()));
    qcs_core::harness::summarize(rows)
        .into_iter()
        .map(|s| ((s.algorithm.to_string(), s.bits.to_string()), s.nmse_db))
        .collect()
}
