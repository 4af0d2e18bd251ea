//! Spectral densities of stationary processes and the Kolmogorov criterion.
//!
//! The torus `T^d` is identified with `[-1/2, 1/2)^d` and carries normalized
//! Lebesgue measure. For absolutely summable covariances the spectral measure
//! is `mean^2 * delta_0 + omega * m`, and only `omega` enters the
//! reciprocal-density integral that decides rigidity.

mod analytic;
mod profile;

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub use analytic::AnalyticFamily;
pub use profile::{
    classify_rigidity, detect_zeros, inverse_density_profile, kolmogorov_distance, Rationale, RigidityVerdict,
    ShellProfile, Verdict,
};

/// Covariances `Cov(X_0, X_n)` for lattice points with `|n|_inf <= radius`.
///
/// Entries are stored densely in row-major order over `[-radius, radius]^dim`
/// (first axis slowest).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceSequence {
    dim: usize,
    radius: usize,
    values: Vec<f64>,
    mean: f64,
    tail_bound: f64,
}

impl CovarianceSequence {
    pub fn new(dim: usize, radius: usize, values: Vec<f64>, mean: f64, tail_bound: f64) -> Result<Self> {
        if dim == 0 {
            return invalid("dimension must be positive");
        }
        let side = 2 * radius + 1;
        let expected = side.pow(dim as u32);
        if values.len() != expected {
            return invalid(format!("expected {expected} covariance entries, got {}", values.len()));
        }
        if tail_bound.is_nan() || tail_bound < 0.0 {
            return invalid(format!("tail bound must be nonnegative, got {tail_bound}"));
        }
        if values.iter().any(|v| !v.is_finite()) || !mean.is_finite() {
            return invalid("covariances and mean must be finite");
        }
        let seq = Self { dim, radius, values, mean, tail_bound };
        let c0 = seq.variance();
        if c0 < 0.0 {
            return invalid(format!("variance {c0} is negative"));
        }
        let scale = seq.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (i, n) in seq.lattice().enumerate() {
            let neg: Vec<i64> = n.iter().map(|x| -x).collect();
            if (seq.values[i] - seq.get(&neg)).abs() > 1e-12 * scale {
                return invalid(format!("covariances are not symmetric at {n:?}"));
            }
        }
        Ok(seq)
    }

    pub fn from_fn<F: Fn(&[i64]) -> f64>(
        dim: usize,
        radius: usize,
        mean: f64,
        tail_bound: f64,
        f: F,
    ) -> Result<Self> {
        let values = lattice_points(dim, radius).map(|n| f(&n)).collect();
        Self::new(dim, radius, values, mean, tail_bound)
    }

    /// One-dimensional sequence from `c_0, c_1, ..., c_R` (symmetric extension).
    pub fn from_one_sided(one_sided: &[f64], mean: f64, tail_bound: f64) -> Result<Self> {
        if one_sided.is_empty() {
            return invalid("need at least c_0");
        }
        let r = one_sided.len() - 1;
        Self::from_fn(1, r, mean, tail_bound, |n| one_sided[n[0].unsigned_abs() as usize])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn tail_bound(&self) -> f64 {
        self.tail_bound
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn variance(&self) -> f64 {
        self.get(&vec![0; self.dim])
    }

    /// Lattice points in storage order.
    pub fn lattice(&self) -> impl Iterator<Item = Vec<i64>> {
        lattice_points(self.dim, self.radius)
    }

    fn index(&self, n: &[i64]) -> Option<usize> {
        let r = self.radius as i64;
        let side = 2 * r + 1;
        let mut idx = 0i64;
        for &c in n {
            if c.abs() > r {
                return None;
            }
            idx = idx * side + (c + r);
        }
        Some(idx as usize)
    }

    /// Covariance at lag `n`; zero outside the stored radius.
    pub fn get(&self, n: &[i64]) -> f64 {
        assert_eq!(n.len(), self.dim, "lattice point has wrong dimension");
        self.index(n).map_or(0.0, |i| self.values[i])
    }

    /// Restriction to a smaller radius; dropped entries move into the tail bound.
    pub fn truncate(&self, radius: usize) -> Result<Self> {
        if radius > self.radius {
            return Err(Error::RadiusTooSmall { needed: radius, available: self.radius });
        }
        let mut dropped = 0.0;
        let mut values = Vec::new();
        for (n, v) in self.lattice().zip(&self.values) {
            if n.iter().all(|c| c.unsigned_abs() as usize <= radius) {
                values.push(*v);
            } else {
                dropped += v.abs();
            }
        }
        Self::new(self.dim, radius, values, self.mean, self.tail_bound + dropped)
    }

    /// Multiplies every covariance (and the tail bound) by `c > 0`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v * c).collect(),
            tail_bound: self.tail_bound * c,
            ..self.clone()
        }
    }

    /// Smallest eigenvalue of the Gram matrix on the window `[0, w]^d`.
    pub fn min_window_eigenvalue(&self, window: usize) -> f64 {
        let w = window.min(self.radius);
        let pts: Vec<Vec<i64>> = lattice_points(self.dim, w)
            .filter(|p| p.iter().all(|&c| c >= 0))
            .collect();
        let m = pts.len();
        let gram = DMatrix::from_fn(m, m, |i, j| {
            let diff: Vec<i64> = pts[i].iter().zip(&pts[j]).map(|(a, b)| a - b).collect();
            self.get(&diff)
        });
        SymmetricEigen::new(gram).eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Checks positive semidefiniteness on a small window up to `eps_psd`.
    pub fn check_psd(&self, eps_psd: f64) -> Result<()> {
        let window = if self.dim == 1 { 16 } else { 4 };
        let min = self.min_window_eigenvalue(window);
        if min < -eps_psd {
            return Err(Error::NotPositiveDefinite { pivot: min });
        }
        Ok(())
    }

    /// Tolerance used by [`check_psd`](Self::check_psd) when none is configured.
    pub fn default_psd_tolerance(&self) -> f64 {
        1e-9 * self.variance() + if self.tail_bound.is_finite() { self.tail_bound } else { 0.0 }
    }
}

pub(crate) fn lattice_points(dim: usize, radius: usize) -> impl Iterator<Item = Vec<i64>> {
    let r = radius as i64;
    let side = (2 * radius + 1) as u64;
    let total = side.pow(dim as u32);
    (0..total).map(move |mut k| {
        let mut p = vec![0i64; dim];
        for slot in p.iter_mut().rev() {
            *slot = (k % side) as i64 - r;
            k /= side;
        }
        p
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    FromCovariances,
    Analytic,
    FromKernel,
}

type DensityFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Source {
    Cosine(Arc<CovarianceSequence>),
    Function(DensityFn),
}

/// Spectral density `omega` on the torus plus the atom at zero.
#[derive(Clone)]
pub struct SpectralDensity {
    dim: usize,
    source: Source,
    scale: f64,
    atom_at_zero: f64,
    provenance: Provenance,
    uncertainty: f64,
    zero_process: bool,
}

impl fmt::Debug for SpectralDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpectralDensity")
            .field("dim", &self.dim)
            .field("provenance", &self.provenance)
            .field("atom_at_zero", &self.atom_at_zero)
            .field("uncertainty", &self.uncertainty)
            .finish()
    }
}

/// Spectral density of a process with the given covariances: the cosine sum
/// over the stored lags, with the mean squared as the atom at zero.
pub fn density_from_covariances(cov: &CovarianceSequence) -> Result<SpectralDensity> {
    if !cov.tail_bound.is_finite() {
        return Err(Error::NonSummable(cov.tail_bound));
    }
    Ok(SpectralDensity {
        dim: cov.dim,
        zero_process: cov.variance() == 0.0,
        source: Source::Cosine(Arc::new(cov.clone())),
        scale: 1.0,
        atom_at_zero: cov.mean * cov.mean,
        provenance: Provenance::FromCovariances,
        uncertainty: cov.tail_bound,
    })
}

impl SpectralDensity {
    pub fn analytic<F>(dim: usize, f: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Self::from_function(dim, Provenance::Analytic, 0.0, 0.0, f)
    }

    pub fn from_function<F>(dim: usize, provenance: Provenance, atom_at_zero: f64, uncertainty: f64, f: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Self {
            dim,
            source: Source::Function(Arc::new(f)),
            scale: 1.0,
            atom_at_zero,
            provenance,
            uncertainty,
            zero_process: false,
        }
    }

    pub fn with_atom(mut self, atom: f64) -> Self {
        self.atom_at_zero = atom;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn atom_at_zero(&self) -> f64 {
        self.atom_at_zero
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    /// Certified bound on the pointwise evaluation error.
    pub fn uncertainty(&self) -> f64 {
        self.uncertainty
    }

    pub fn is_zero_process(&self) -> bool {
        self.zero_process
    }

    /// `c * omega` for `c > 0`.
    pub fn scaled(&self, c: f64) -> Self {
        Self { scale: self.scale * c, uncertainty: self.uncertainty * c, ..self.clone() }
    }

    /// Unclamped value at `theta`.
    pub fn eval_raw(&self, theta: &[f64]) -> f64 {
        assert_eq!(theta.len(), self.dim, "point has wrong dimension");
        let v = match &self.source {
            Source::Cosine(cov) => cosine_sum(cov, theta),
            Source::Function(f) => f(theta),
        };
        self.scale * v
    }

    /// Density value at `theta`, clamped at zero.
    pub fn eval(&self, theta: &[f64]) -> f64 {
        self.eval_raw(theta).max(0.0)
    }

    /// Values on the uniform grid `-1/2 + i/n` per axis, in row-major order.
    pub fn grid(&self, points_per_axis: usize) -> Vec<(Vec<f64>, f64)> {
        let n = points_per_axis as u64;
        let total = n.pow(self.dim as u32);
        (0..total)
            .map(|mut k| {
                let mut theta = vec![0.0; self.dim];
                for slot in theta.iter_mut().rev() {
                    *slot = -0.5 + (k % n) as f64 / n as f64;
                    k /= n;
                }
                let v = self.eval(&theta);
                (theta, v)
            })
            .collect()
    }

    /// Largest negativity of the raw cosine sum on a grid (clamp magnitude).
    pub fn clamp_magnitude(&self, points_per_axis: usize) -> f64 {
        let n = points_per_axis as u64;
        let total = n.pow(self.dim as u32);
        (0..total)
            .map(|mut k| {
                let mut theta = vec![0.0; self.dim];
                for slot in theta.iter_mut().rev() {
                    *slot = -0.5 + (k % n) as f64 / n as f64;
                    k /= n;
                }
                (-self.eval_raw(&theta)).max(0.0)
            })
            .fold(0.0, f64::max)
    }
}

fn cosine_sum(cov: &CovarianceSequence, theta: &[f64]) -> f64 {
    let r = cov.radius as i64;
    match cov.dim {
        1 => {
            let mut acc = cov.get(&[0]);
            for n in 1..=r {
                acc += 2.0 * cov.get(&[n]) * (2.0 * PI * n as f64 * theta[0]).cos();
            }
            acc
        }
        2 => {
            let side = (2 * r + 1) as usize;
            let mut c2 = Vec::with_capacity(side);
            let mut s2 = Vec::with_capacity(side);
            for k in -r..=r {
                let a = 2.0 * PI * k as f64 * theta[1];
                c2.push(a.cos());
                s2.push(a.sin());
            }
            let mut acc = 0.0;
            for (jj, j) in (-r..=r).enumerate() {
                let a = 2.0 * PI * j as f64 * theta[0];
                let (sj, cj) = a.sin_cos();
                let row = &cov.values[jj * side..(jj + 1) * side];
                let mut cc = 0.0;
                let mut ss = 0.0;
                for ((c, ck), sk) in row.iter().zip(&c2).zip(&s2) {
                    cc += c * ck;
                    ss += c * sk;
                }
                acc += cj * cc - sj * ss;
            }
            acc
        }
        _ => {
            let mut acc = 0.0;
            for (n, c) in cov.lattice().zip(&cov.values) {
                let dot: f64 = n.iter().zip(theta).map(|(a, b)| *a as f64 * b).sum();
                acc += c * (2.0 * PI * dot).cos();
            }
            acc
        }
    }
}
