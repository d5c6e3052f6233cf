//! Reference estimators: delay-and-sum (CBF), MVDR, MUSIC and a multi-snapshot
//! group-Lasso sparse estimator.

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::error::{DoaError, Result};
use crate::linalg::hermitian_eigen;
use crate::manifold::ManifoldMatrix;
use crate::ssfns::SpatialSpectrum;
use crate::{CMatrix, C64};

/// Floor applied to the MUSIC denominator.
pub const MUSIC_FLOOR: f64 = 1e-12;

/// Relative eigenvalue level below which an unloaded covariance counts as singular.
pub const SINGULAR_REL: f64 = 1e-12;

fn check_snapshots(manifold: &ManifoldMatrix, x: &CMatrix) -> Result<()> {
    if x.nrows() != manifold.sensors() {
        return Err(DoaError::ShapeMismatch(format!(
            "snapshots have {} rows, manifold has {} sensors",
            x.nrows(),
            manifold.sensors()
        )));
    }
    if x.ncols() == 0 {
        return Err(DoaError::InvalidArgument("no snapshots".into()));
    }
    Ok(())
}

fn wrap(manifold: &ManifoldMatrix, power: Vec<f64>, t: usize) -> SpatialSpectrum {
    SpatialSpectrum {
        power,
        grid: manifold.grid,
        snapshots_averaged: t,
    }
}

/// Delay-and-sum: `power[i] = (1/T) sum_t |a_i^H x_t|^2 / M^2`.
pub fn cbf_spectrum(manifold: &ManifoldMatrix, x: &CMatrix) -> Result<SpatialSpectrum> {
    check_snapshots(manifold, x)?;
    let m = manifold.sensors() as f64;
    let t = x.ncols();
    let y = manifold.entries.adjoint() * x;
    let power = (0..y.nrows())
        .map(|i| y.row(i).iter().map(|z| z.norm_sqr()).sum::<f64>() / (t as f64 * m * m))
        .collect();
    Ok(wrap(manifold, power, t))
}

/// Sample covariance `X X^H / T` with its diagonal loading.
#[derive(Debug, Clone)]
pub struct CovarianceEstimate {
    pub r_hat: CMatrix,
    pub snapshots: usize,
    pub loading: f64,
}

impl CovarianceEstimate {
    pub fn from_snapshots(x: &CMatrix) -> Self {
        let t = x.ncols().max(1);
        let mut r_hat = x * x.adjoint() / C64::new(t as f64, 0.0);
        // symmetrize away rounding
        let sym = (&r_hat + r_hat.adjoint()) * C64::new(0.5, 0.0);
        r_hat.copy_from(&sym);
        Self {
            r_hat,
            snapshots: x.ncols(),
            loading: 0.0,
        }
    }

    /// `1e-3 * trace(R) / M`.
    pub fn default_loading(&self) -> f64 {
        1e-3 * self.r_hat.trace().re / self.r_hat.nrows() as f64
    }

    pub fn with_loading(mut self, eps: f64) -> Self {
        self.loading = eps;
        self
    }

    /// Loaded matrix `R + eps I`.
    pub fn loaded(&self) -> CMatrix {
        let m = self.r_hat.nrows();
        &self.r_hat + CMatrix::identity(m, m) * C64::new(self.loading, 0.0)
    }

    /// Fewer snapshots than sensors, or numerically rank deficient.
    pub fn is_rank_deficient(&self) -> bool {
        if self.snapshots < self.r_hat.nrows() {
            return true;
        }
        let (vals, _) = hermitian_eigen(&self.r_hat);
        let top = vals.last().copied().unwrap_or(0.0);
        vals.first().is_none_or(|&lo| lo <= SINGULAR_REL * top)
    }
}

/// Diagonal loading choice for MVDR.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loading {
    /// `1e-3 * trace(R) / M`.
    Default,
    Fixed(f64),
}

/// MVDR: `power[i] = 1 / (a_i^H (R + eps I)^{-1} a_i)`.
pub fn mvdr_spectrum(manifold: &ManifoldMatrix, x: &CMatrix, loading: Loading) -> Result<(SpatialSpectrum, CovarianceEstimate)> {
    check_snapshots(manifold, x)?;
    let mut cov = CovarianceEstimate::from_snapshots(x);
    let eps = match loading {
        Loading::Default => cov.default_loading(),
        Loading::Fixed(e) if e >= 0.0 => e,
        Loading::Fixed(e) => return Err(DoaError::InvalidArgument(format!("negative loading {e}"))),
    };
    cov.loading = eps;
    let (vals, vecs) = hermitian_eigen(&cov.loaded());
    let top = vals.last().copied().unwrap_or(0.0);
    if vals.first().is_none_or(|&lo| lo <= SINGULAR_REL * top.max(f64::MIN_POSITIVE)) {
        if eps == 0.0 {
            return Err(DoaError::SingularCovariance);
        }
        warn!("loaded covariance is numerically singular (eps = {eps:.3e})");
    }
    debug!("mvdr loading eps = {eps:.4e}");
    // a^H R^{-1} a = sum_k |v_k^H a|^2 / lambda_k
    let proj = vecs.adjoint() * &manifold.entries;
    let power = (0..manifold.directions())
        .map(|i| {
            let denom: f64 = proj
                .column(i)
                .iter()
                .zip(&vals)
                .map(|(z, &l)| z.norm_sqr() / l)
                .sum();
            1.0 / denom
        })
        .collect();
    Ok((wrap(manifold, power, x.ncols()), cov))
}

/// MUSIC pseudo-spectrum with a caller-supplied source count:
/// `power[i] = 1 / max(||E_n^H a_i||^2, MUSIC_FLOOR)`.
pub fn music_spectrum(manifold: &ManifoldMatrix, x: &CMatrix, k: usize) -> Result<SpatialSpectrum> {
    check_snapshots(manifold, x)?;
    let m = manifold.sensors();
    if k == 0 || k >= m {
        return Err(DoaError::BadSourceCount { k, sensors: m });
    }
    let cov = CovarianceEstimate::from_snapshots(x);
    let (_, vecs) = hermitian_eigen(&cov.r_hat);
    let noise = vecs.columns(0, m - k);
    let proj = noise.adjoint() * &manifold.entries;
    let power = (0..manifold.directions())
        .map(|i| 1.0 / proj.column(i).norm_squared().max(MUSIC_FLOOR))
        .collect();
    Ok(wrap(manifold, power, x.ncols()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct L1Config {
    /// Regularization weight; `None` picks the noise-scaled default.
    pub lambda: Option<f64>,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for L1Config {
    fn default() -> Self {
        Self {
            lambda: None,
            max_iter: 500,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct L1Output {
    pub spectrum: SpatialSpectrum,
    pub lambda: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after every accepted step, starting with the zero iterate.
    pub objective: Vec<f64>,
}

/// Default regularization: `sigma * sqrt(2 ln R) * sqrt(T)`, with `sigma` the
/// noise standard deviation estimated from the residual of the strongest CBF atom.
pub fn default_lambda(manifold: &ManifoldMatrix, x: &CMatrix) -> Result<f64> {
    let cbf = cbf_spectrum(manifold, x)?;
    let (peak, _) = cbf.argmax().ok_or(DoaError::EmptySpectrum)?;
    let a = manifold.entries.column(peak);
    let gain = a.norm_squared();
    let coeffs = a.adjoint() * x / C64::new(gain, 0.0);
    let resid = x - a * coeffs;
    let mut mags: Vec<f64> = resid.iter().map(|z| z.norm()).collect();
    mags.sort_by(|p, q| p.total_cmp(q));
    let median = mags[mags.len() / 2];
    // |circular Gaussian| is Rayleigh with median sigma * sqrt(ln 2)
    let sigma = median / std::f64::consts::LN_2.sqrt();
    let r = manifold.directions() as f64;
    Ok(sigma * (2.0 * r.ln()).sqrt() * (x.ncols() as f64).sqrt())
}

fn group_norms(s: &CMatrix) -> impl Iterator<Item = f64> + '_ {
    (0..s.nrows()).map(|i| s.row(i).norm())
}

fn objective(a: &CMatrix, s: &CMatrix, x: &CMatrix, lambda: f64) -> f64 {
    (a * s - x).norm_squared() + lambda * group_norms(s).sum::<f64>()
}

/// Row-wise soft threshold: the proximal map of `tau * sum_i ||S_i||`.
fn group_shrink(v: &mut CMatrix, tau: f64) {
    for i in 0..v.nrows() {
        let n = v.row(i).norm();
        let scale = if n > tau { 1.0 - tau / n } else { 0.0 };
        v.row_mut(i).scale_mut(scale);
    }
}

/// Multi-snapshot group Lasso
/// `min ||A S - X||_F^2 + lambda sum_i ||S_i||_2` by proximal gradient with
/// backtracking. `power[i] = ||S_i||^2 / T`.
pub fn l1_spectrum(manifold: &ManifoldMatrix, x: &CMatrix, config: &L1Config) -> Result<L1Output> {
    check_snapshots(manifold, x)?;
    let lambda = match config.lambda {
        Some(l) if l > 0.0 && l.is_finite() => l,
        Some(l) => return Err(DoaError::InvalidArgument(format!("lambda must be positive, got {l}"))),
        None => default_lambda(manifold, x)?,
    };
    let a = &manifold.entries;
    let (r, t) = (manifold.directions(), x.ncols());

    // spectral norm of A by power iteration; the gradient of ||AS - X||^2 is 2L-Lipschitz
    let mut v = CMatrix::from_element(r, 1, C64::new(1.0, 0.0));
    let mut sigma2 = 0.0;
    for _ in 0..30 {
        let w = a.adjoint() * (a * &v);
        sigma2 = w.norm() / v.norm();
        v = &w / C64::new(w.norm(), 0.0);
    }
    let mut step_l = (2.0 * sigma2).max(f64::MIN_POSITIVE);

    let mut s = CMatrix::zeros(r, t);
    let mut resid = -x.clone();
    let mut smooth = resid.norm_squared();
    let mut f_cur = smooth;
    let mut objective_trace = vec![f_cur];
    let mut best = (f_cur, s.clone());
    let mut converged = false;
    let mut iterations = 0;

    while iterations < config.max_iter {
        iterations += 1;
        let grad = a.adjoint() * &resid * C64::new(2.0, 0.0);
        let (next, next_resid, next_smooth) = loop {
            let mut cand = &s - &grad / C64::new(step_l, 0.0);
            group_shrink(&mut cand, lambda / step_l);
            let diff = &cand - &s;
            let cand_resid = a * &cand - x;
            let cand_smooth = cand_resid.norm_squared();
            let inner: f64 = grad.iter().zip(diff.iter()).map(|(g, d)| (g.conj() * d).re).sum();
            let bound = smooth + inner + 0.5 * step_l * diff.norm_squared();
            if cand_smooth <= bound * (1.0 + 1e-14) + 1e-300 || step_l > 1e300 {
                break (cand, cand_resid, cand_smooth);
            }
            step_l *= 2.0;
        };
        let change = (&next - &s).norm();
        let scale = s.norm().max(1.0);
        s = next;
        resid = next_resid;
        smooth = next_smooth;
        f_cur = smooth + lambda * group_norms(&s).sum::<f64>();
        objective_trace.push(f_cur);
        if f_cur < best.0 {
            best = (f_cur, s.clone());
        }
        if change <= config.tol * scale {
            converged = true;
            break;
        }
    }
    if !converged {
        warn!("group lasso did not converge in {} iterations; returning best iterate", config.max_iter);
    }
    let s_best = best.1;
    debug_assert!((objective(a, &s_best, x, lambda) - best.0).abs() <= 1e-9 * best.0.max(1.0));
    let power = group_norms(&s_best).map(|n| n * n / t as f64).collect();
    Ok(L1Output {
        spectrum: wrap(manifold, power, t),
        lambda,
        iterations,
        converged,
        objective: objective_trace,
    })
}
