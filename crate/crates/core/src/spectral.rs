//! Perron roots of truncated first-moment matrices.
//!
//! The first-moment matrix has `m(x, x-1) = mu_minus(x)`, `m(x, x) = mu_zero(x)`
//! and `m(x, x+1) = mu_plus(x)`. Its spectral radius is the supremum of the
//! Perron roots of its finite restrictions, and restrictions to nested windows
//! give nondecreasing roots.

use rayon::prelude::*;
use serde::Serialize;

use crate::envmodel::{realize_window, EnvironmentLaw, EnvironmentWindow};
use crate::error::{Error, Result};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: u64 = 1_000_000;

/// `M` restricted to the sites of a window.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruncatedMomentMatrix {
    pub window: EnvironmentWindow,
    /// `mu_minus` of each site: the entry `(x, x-1)`. The first one points
    /// outside the window and is not part of the matrix.
    pub sub: Vec<f64>,
    pub diag: Vec<f64>,
    /// `mu_plus` of each site: the entry `(x, x+1)`. The last one is unused.
    pub sup: Vec<f64>,
}

impl TruncatedMomentMatrix {
    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    /// Dense copy, row `i` is site `lo + i`.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.dim();
        let mut m = vec![vec![0.0; n]; n];
        for i in 0..n {
            m[i][i] = self.diag[i];
            if i > 0 {
                m[i][i - 1] = self.sub[i];
            }
            if i + 1 < n {
                m[i][i + 1] = self.sup[i];
            }
        }
        m
    }
}

pub fn truncated_matrix(window: &EnvironmentWindow, envlaw: &EnvironmentLaw) -> TruncatedMomentMatrix {
    let moments = envlaw.moments();
    let per_site = window.states().iter().map(|&s| moments[s]);
    let (mut sub, mut diag, mut sup) = (vec![], vec![], vec![]);
    for m in per_site {
        sub.push(m.mu_minus);
        diag.push(m.mu_zero);
        sup.push(m.mu_plus);
    }
    TruncatedMomentMatrix {
        window: window.clone(),
        sub,
        diag,
        sup,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectralEstimate {
    pub rho: f64,
    pub iterations: u64,
    /// Relative eigen-residual `|Tx - rho x| / (rho |x|)` at return.
    pub residual: f64,
}

/// Perron root by shifted power iteration.
///
/// The eigenvalues of a tridiagonal matrix depend only on its diagonal and on
/// the products `sup[i] * sub[i+1]`, so the iteration runs on the symmetric
/// matrix with off-diagonal `sqrt(sup[i] * sub[i+1])`. For a symmetric matrix
/// the relative residual bounds the relative eigenvalue error. The shift makes
/// the spectrum nonnegative so the Perron root strictly dominates even when
/// `-rho` is also an eigenvalue (zero diagonal).
pub fn spectral_radius(tm: &TruncatedMomentMatrix, tol: f64) -> Result<SpectralEstimate> {
    spectral_radius_capped(tm, tol, DEFAULT_MAX_ITER)
}

pub fn spectral_radius_capped(
    tm: &TruncatedMomentMatrix,
    tol: f64,
    max_iter: u64,
) -> Result<SpectralEstimate> {
    let n = tm.dim();
    if n == 1 {
        return Ok(SpectralEstimate {
            rho: tm.diag[0],
            iterations: 0,
            residual: 0.0,
        });
    }
    let off: Vec<f64> = (0..n - 1).map(|i| (tm.sup[i] * tm.sub[i + 1]).sqrt()).collect();
    let diag = &tm.diag;

    let radius = (0..n)
        .map(|i| {
            let left = if i > 0 { off[i - 1] } else { 0.0 };
            let right = if i + 1 < n { off[i] } else { 0.0 };
            left + right
        })
        .fold(0.0, f64::max);
    let min_diag = diag.iter().copied().fold(f64::INFINITY, f64::min);
    let shift = (radius - min_diag).max(0.0);

    let apply = |x: &[f64], y: &mut [f64]| {
        for i in 0..n {
            let mut s = diag[i] * x[i];
            if i > 0 {
                s += off[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                s += off[i] * x[i + 1];
            }
            y[i] = s;
        }
    };

    let mut x = vec![1.0 / (n as f64).sqrt(); n];
    let mut y = vec![0.0; n];
    let mut residual = f64::INFINITY;
    for it in 1..=max_iter {
        apply(&x, &mut y);
        // x has unit norm.
        let theta: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
        let r2: f64 = x
            .iter()
            .zip(&y)
            .map(|(a, b)| (b - theta * a).powi(2))
            .sum();
        residual = if theta > 0.0 { r2.sqrt() / theta } else { r2.sqrt() };
        if residual <= tol {
            return Ok(SpectralEstimate {
                rho: theta,
                iterations: it,
                residual,
            });
        }
        let mut norm = 0.0;
        for i in 0..n {
            x[i] = y[i] + shift * x[i];
            norm += x[i] * x[i];
        }
        let norm = norm.sqrt();
        x.iter_mut().for_each(|v| *v /= norm);
    }
    Err(Error::NotConverged {
        iterations: max_iter,
        residual,
    })
}

/// One point of a window sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepPoint {
    /// Half-width: the window is `[-n, n]`.
    pub n: u64,
    pub rho: f64,
    pub iterations: u64,
}

/// Perron roots on the windows `[-N, N]` of the quenched environment `seed`.
pub fn rho_sweep(
    envlaw: &EnvironmentLaw,
    seed: u64,
    n_values: &[u64],
    tol: f64,
) -> Result<Vec<SweepPoint>> {
    if n_values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(
            "sweep half-widths must be strictly increasing".into(),
        ));
    }
    n_values
        .par_iter()
        .map(|&n| {
            let half = i64::try_from(n)
                .map_err(|_| Error::InvalidArgument(format!("half-width {n} too large")))?;
            let window = realize_window(envlaw, seed, -half, half)?;
            let est = spectral_radius(&truncated_matrix(&window, envlaw), tol)?;
            Ok(SweepPoint {
                n,
                rho: est.rho,
                iterations: est.iterations,
            })
        })
        .collect()
}
