//! Low-rank signals from Gaussian latent factors, noisy masked observations,
//! and the spectral quantities the error guarantees are stated in.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::estimator::truncated_svd;
use crate::sampling::Mask;

/// Relative threshold below which `sigma_r / sigma_1` counts as rank deficient.
pub const RANK_DEFICIENCY_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct SignalInstance {
    /// n×r row factors.
    pub a: DMatrix<f64>,
    /// m×r column factors.
    pub b: DMatrix<f64>,
    /// n×m signal `a bᵀ`.
    pub m_star: DMatrix<f64>,
}

impl SignalInstance {
    pub fn generate<R: Rng + ?Sized>(n: usize, m: usize, r: usize, rng: &mut R) -> Result<Self> {
        let (a, b) = generate_latent_factors(n, m, r, rng)?;
        let m_star = signal_matrix(&a, &b)?;
        Ok(Self { a, b, m_star })
    }

    pub fn rank(&self) -> usize {
        self.a.ncols()
    }
}

/// I.i.d. standard normal factors, `a` drawn before `b`, each column-major.
pub fn generate_latent_factors<R: Rng + ?Sized>(
    n: usize,
    m: usize,
    r: usize,
    rng: &mut R,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if n == 0 || m == 0 || r == 0 || r > n.min(m) {
        return Err(Error::InvalidRank {
            rank: r,
            rows: n,
            cols: m,
        });
    }
    let a = DMatrix::from_fn(n, r, |_, _| rng.sample(StandardNormal));
    let b = DMatrix::from_fn(m, r, |_, _| rng.sample(StandardNormal));
    Ok((a, b))
}

pub fn signal_matrix(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if a.ncols() != b.ncols() {
        return Err(Error::DimensionMismatch {
            expected: format!("inner dimension {}", a.ncols()),
            found: format!("inner dimension {}", b.ncols()),
        });
    }
    Ok(a * b.transpose())
}

/// Masked noisy observations. Unobserved entries hold 0 and a cleared mask bit.
#[derive(Debug, Clone)]
pub struct ObservationSet {
    pub y: DMatrix<f64>,
    pub mask: Mask,
    pub sigma: f64,
}

/// `Y = mask ∘ (M* + E)` with `E_ij ~ N(0, sigma²)`.
///
/// A noise value is drawn for every entry, observed or not, so the noise
/// stream does not depend on the mask.
pub fn observe<R: Rng + ?Sized>(
    m_star: &DMatrix<f64>,
    mask: &Mask,
    sigma: f64,
    rng: &mut R,
) -> Result<ObservationSet> {
    if mask.shape() != m_star.shape() {
        return Err(Error::dims(m_star.shape(), mask.shape()));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::Config(format!("noise level must be >= 0, got {sigma}")));
    }
    let (n, m) = m_star.shape();
    let mut y = DMatrix::zeros(n, m);
    for j in 0..m {
        for i in 0..n {
            let z: f64 = rng.sample(StandardNormal);
            if mask.observed(i, j) {
                y[(i, j)] = m_star[(i, j)] + sigma * z;
            }
        }
    }
    Ok(ObservationSet {
        y,
        mask: mask.clone(),
        sigma,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDiagnostics {
    /// Larger of the 2→∞ norms of the rank-r left and right singular factors.
    pub eta: f64,
    /// `sigma_1 / sigma_r`.
    pub kappa: f64,
    /// Top-r singular values, descending.
    pub singular_values: Vec<f64>,
    /// Entrywise max-abs of the matrix.
    pub max_abs: f64,
}

pub fn spectral_diagnostics(m: &DMatrix<f64>, r: usize) -> Result<SpectralDiagnostics> {
    let svd = truncated_svd(m, r)?;
    let s = &svd.singular_values;
    let ratio = if s[0] > 0.0 { s[r - 1] / s[0] } else { 0.0 };
    if ratio < RANK_DEFICIENCY_TOL {
        return Err(Error::RankDeficient { ratio });
    }
    let eta = two_to_inf(&svd.u).max(two_to_inf(&svd.v));
    Ok(SpectralDiagnostics {
        eta,
        kappa: s[0] / s[r - 1],
        singular_values: s.iter().copied().collect(),
        max_abs: m.amax(),
    })
}

/// Largest Euclidean row norm.
pub fn two_to_inf(x: &DMatrix<f64>) -> f64 {
    x.row_iter().map(|row| row.norm()).fold(0.0, f64::max)
}

/// `2 r log(n m r² / delta)`, the high-probability bound on `‖M*‖∞`.
pub fn signal_bound_threshold(n: usize, m: usize, r: usize, delta: f64) -> f64 {
    let r = r as f64;
    2.0 * r * ((n as f64) * (m as f64) * r * r / delta).ln()
}

pub fn check_signal_bounded(m_star: &DMatrix<f64>, r: usize, delta: f64) -> bool {
    let (n, m) = m_star.shape();
    m_star.amax() <= signal_bound_threshold(n, m, r, delta)
}

/// Number of singular values above `rel_tol · sigma_1`.
pub fn numerical_rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    let s = m.clone().singular_values();
    let top = s.max();
    if top <= 0.0 {
        return 0;
    }
    s.iter().filter(|&&v| v > rel_tol * top).count()
}
