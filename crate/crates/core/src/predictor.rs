//! Finite-lag best linear prediction of `X_0` from `{X_n : 0 < |n|_inf <= M}`.
//!
//! The residual variance `sigma^2_M` is nonincreasing in `M` and converges to
//! the squared interpolation distance. One-dimensional problems use the
//! Toeplitz structure of the two-sided Gram matrix: with `T x = e_center`,
//! `sigma^2_M = 1 / x_center` and `a_n = -x_n / x_center`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::spectral::{lattice_points, CovarianceSequence};

/// Relative diagonal jitter added to every Gram matrix.
pub const JITTER: f64 = 1e-10;
/// Relative residual a solve must reach.
pub const SOLVE_TOLERANCE: f64 = 1e-10;
/// Smallest admissible Levinson reflection pivot `1 - rho^2`.
const PIVOT_FLOOR: f64 = 1e-13;
const REFINEMENT_STEPS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToeplitzSolution {
    pub x: Vec<f64>,
    /// Smallest normalized prediction error met by the recursion.
    pub min_pivot: f64,
    pub dense_fallback: bool,
    pub relative_residual: f64,
}

fn toeplitz_apply(t: &[f64], x: &[f64]) -> Vec<f64> {
    let n = x.len();
    (0..n).map(|i| (0..n).map(|j| t[i.abs_diff(j)] * x[j]).sum()).collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn relative_residual(t: &[f64], x: &[f64], rhs: &[f64]) -> f64 {
    let tx = toeplitz_apply(t, x);
    let r: Vec<f64> = rhs.iter().zip(&tx).map(|(b, y)| b - y).collect();
    let scale = norm(rhs).max(f64::MIN_POSITIVE);
    norm(&r) / scale
}

/// Levinson recursion; `Err(pivot)` when a reflection pivot collapses.
fn levinson(t: &[f64], rhs: &[f64]) -> std::result::Result<(Vec<f64>, f64), f64> {
    let n = rhs.len();
    if !(t[0] > 0.0) {
        return Err(t[0]);
    }
    let mut f = vec![1.0 / t[0]];
    let mut x = vec![rhs[0] / t[0]];
    let mut min_pivot = 1.0f64;
    let mut p = 1.0;
    for k in 1..n {
        let eps: f64 = (0..k).map(|i| t[k - i] * f[i]).sum();
        let pivot = 1.0 - eps * eps;
        p *= pivot;
        min_pivot = min_pivot.min(p);
        if !(pivot > PIVOT_FLOOR) {
            return Err(p);
        }
        // backward vector is the reversed forward vector
        let mut nf = vec![0.0; k + 1];
        for i in 0..=k {
            let fi = if i < k { f[i] } else { 0.0 };
            let bi = if i > 0 { f[k - i] } else { 0.0 };
            nf[i] = (fi - eps * bi) / pivot;
        }
        f = nf;
        let ex: f64 = (0..k).map(|i| t[k - i] * x[i]).sum();
        let gain = rhs[k] - ex;
        x.push(0.0);
        for i in 0..=k {
            x[i] += gain * f[k - i];
        }
    }
    Ok((x, min_pivot))
}

fn dense_toeplitz(t: &[f64], n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| t[i.abs_diff(j)])
}

fn cholesky_solve(m: DMatrix<f64>, rhs: &[f64]) -> Result<Vec<f64>> {
    let diag_min = m.diagonal().min();
    match m.cholesky() {
        Some(c) => Ok(c.solve(&DVector::from_column_slice(rhs)).as_slice().to_vec()),
        None => Err(Error::NotPositiveDefinite { pivot: diag_min.min(0.0) }),
    }
}

/// Solves `T x = rhs` for the symmetric Toeplitz matrix with first row `first_row`.
pub fn toeplitz_solve_detailed(first_row: &[f64], rhs: &[f64]) -> Result<ToeplitzSolution> {
    let n = rhs.len();
    if n == 0 {
        return invalid("empty Toeplitz system");
    }
    if first_row.len() < n {
        return Err(Error::DimensionMismatch { expected: n, got: first_row.len() });
    }
    if n > 10_000 {
        return invalid(format!("Toeplitz system of size {n} exceeds 10000"));
    }
    if let Ok((mut x, min_pivot)) = levinson(first_row, rhs) {
        let mut res = relative_residual(first_row, &x, rhs);
        for _ in 0..REFINEMENT_STEPS {
            if res <= 1e-3 * SOLVE_TOLERANCE {
                break;
            }
            let tx = toeplitz_apply(first_row, &x);
            let r: Vec<f64> = rhs.iter().zip(&tx).map(|(b, y)| b - y).collect();
            match levinson(first_row, &r) {
                Ok((dx, _)) => {
                    let cand: Vec<f64> = x.iter().zip(&dx).map(|(a, b)| a + b).collect();
                    let cand_res = relative_residual(first_row, &cand, rhs);
                    if cand_res >= res {
                        break;
                    }
                    x = cand;
                    res = cand_res;
                }
                Err(_) => break,
            }
        }
        if res <= SOLVE_TOLERANCE {
            return Ok(ToeplitzSolution { x, min_pivot, dense_fallback: false, relative_residual: res });
        }
    }
    let x = cholesky_solve(dense_toeplitz(first_row, n), rhs)?;
    let res = relative_residual(first_row, &x, rhs);
    if res > SOLVE_TOLERANCE {
        return Err(Error::NotPositiveDefinite { pivot: res });
    }
    Ok(ToeplitzSolution { x, min_pivot: f64::NAN, dense_fallback: true, relative_residual: res })
}

pub fn toeplitz_solve(first_row: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    Ok(toeplitz_solve_detailed(first_row, rhs)?.x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionResult {
    pub lag_radius: usize,
    /// `(n, a_n)` for `0 < |n|_inf <= M` in lattice order.
    pub coefficients: Vec<(Vec<i64>, f64)>,
    pub residual_variance: f64,
    pub condition_estimate: f64,
    pub jitter: f64,
}

impl PredictionResult {
    pub fn coefficient(&self, n: &[i64]) -> Option<f64> {
        self.coefficients.iter().find(|(k, _)| k.as_slice() == n).map(|(_, a)| *a)
    }
}

/// Best linear predictor of `X_0` from the lags `0 < |n|_inf <= M`.
pub fn best_linear_predictor(cov: &CovarianceSequence, m: usize) -> Result<PredictionResult> {
    if m == 0 {
        return invalid("lag radius must be positive");
    }
    if cov.radius() < 2 * m {
        return Err(Error::RadiusTooSmall { needed: 2 * m, available: cov.radius() });
    }
    let c0 = cov.variance();
    if c0 == 0.0 {
        let coefficients = lattice_points(cov.dim(), m).filter(|n| n.iter().any(|k| *k != 0)).map(|n| (n, 0.0)).collect();
        return Ok(PredictionResult { lag_radius: m, coefficients, residual_variance: 0.0, condition_estimate: 1.0, jitter: 0.0 });
    }
    let jitter = JITTER * c0;
    match cov.dim() {
        1 => predict_1d(cov, m, jitter),
        2 => predict_dense(cov, m, jitter),
        d => Err(Error::DimensionMismatch { expected: 2, got: d }),
    }
}

fn predict_1d(cov: &CovarianceSequence, m: usize, jitter: f64) -> Result<PredictionResult> {
    let size = 2 * m + 1;
    let mut t: Vec<f64> = (0..size as i64).map(|k| cov.get(&[k])).collect();
    t[0] += jitter;
    let mut rhs = vec![0.0; size];
    rhs[m] = 1.0;
    let sol = toeplitz_solve_detailed(&t, &rhs)?;
    let xc = sol.x[m];
    if !(xc > 0.0) {
        return Err(Error::NotPositiveDefinite { pivot: xc });
    }
    let coefficients = (0..size)
        .filter(|i| *i != m)
        .map(|i| (vec![i as i64 - m as i64], -sol.x[i] / xc))
        .collect();
    let condition_estimate = if sol.dense_fallback { t[0] * xc } else { 1.0 / sol.min_pivot };
    Ok(PredictionResult {
        lag_radius: m,
        coefficients,
        residual_variance: 1.0 / xc,
        condition_estimate,
        jitter,
    })
}

fn predict_dense(cov: &CovarianceSequence, m: usize, jitter: f64) -> Result<PredictionResult> {
    let lags: Vec<Vec<i64>> = lattice_points(cov.dim(), m).filter(|n| n.iter().any(|k| *k != 0)).collect();
    let k = lags.len();
    let diff = |a: &[i64], b: &[i64]| -> Vec<i64> { a.iter().zip(b).map(|(x, y)| x - y).collect() };
    let mut gram = DMatrix::from_fn(k, k, |i, j| cov.get(&diff(&lags[i], &lags[j])));
    for i in 0..k {
        gram[(i, i)] += jitter;
    }
    let g: Vec<f64> = lags.iter().map(|n| cov.get(n)).collect();
    let chol = gram.clone().cholesky().ok_or(Error::NotPositiveDefinite { pivot: gram.diagonal().min() })?;
    let l_diag = chol.l_dirty().diagonal();
    let (dmin, dmax) = (l_diag.min(), l_diag.max());
    let a = chol.solve(&DVector::from_column_slice(&g));
    let c0 = cov.variance() + jitter;
    let residual_variance = (c0 - a.dot(&DVector::from_column_slice(&g))).max(0.0);
    Ok(PredictionResult {
        lag_radius: m,
        coefficients: lags.into_iter().zip(a.iter().cloned()).collect(),
        residual_variance,
        condition_estimate: (dmax / dmin).powi(2),
        jitter,
    })
}

/// `(M, sigma^2_M)` for `M = 1..=m_max`.
pub fn residual_variance_profile(cov: &CovarianceSequence, m_max: usize) -> Result<Vec<(usize, f64)>> {
    let ms: Vec<usize> = (1..=m_max).collect();
    ms.par_iter().map(|&m| Ok((m, best_linear_predictor(cov, m)?.residual_variance))).collect()
}

/// `E (X_0 - sum a_n X_n)^2` for arbitrary coefficients.
pub fn prediction_error(cov: &CovarianceSequence, coefficients: &[(Vec<i64>, f64)]) -> f64 {
    let diff = |a: &[i64], b: &[i64]| -> Vec<i64> { a.iter().zip(b).map(|(x, y)| x - y).collect() };
    let mut e = cov.variance();
    for (n, a) in coefficients {
        e -= 2.0 * a * cov.get(n);
        for (k, b) in coefficients {
            e += a * b * cov.get(&diff(n, k));
        }
    }
    e
}
