//! Monte Carlo sampling of projection DPPs restricted to a box
//! `[-L/2, L/2)^d`, via a Nyström discretization on a uniform grid.
//!
//! Grid points sit at cell centres `x_i = -L/2 + (i + 1/2) h`. A sampled grid
//! point is placed uniformly inside its cell, so window counts see the
//! discretized intensity exactly.

use nalgebra::{Complex, DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::kernels::ProjectionKernel;

/// Tolerance on eigenvalues outside `[0, 1]` before clipping.
pub const EIG_TOLERANCE: f64 = 1e-8;
pub const MIN_GRID_POINTS: usize = 16;

const BATCH_MAGIC: &[u8; 8] = b"RGDPPSB1";

#[derive(Debug, Clone)]
struct Eigenpairs {
    dim: usize,
    values: Vec<f64>,
    /// Orthonormal eigenvectors as columns.
    vectors: DMatrix<Complex<f64>>,
}

/// Nyström discretization `K(x_i, x_j) h^d` with its eigendecomposition.
/// Tensor kernels keep one factor per tensor component.
#[derive(Debug, Clone)]
pub struct DiscretizedKernel {
    side: f64,
    points_per_axis: usize,
    factors: Vec<Eigenpairs>,
}

fn discretize_box(k: &ProjectionKernel, side: f64, n: usize) -> Result<Eigenpairs> {
    let d = k.dim();
    let h = side / n as f64;
    let total = n.pow(d as u32);
    let coords = |mut idx: usize| -> Vec<f64> {
        let mut p = vec![0.0; d];
        for slot in p.iter_mut().rev() {
            *slot = -0.5 * side + ((idx % n) as f64 + 0.5) * h;
            idx /= n;
        }
        p
    };
    let points: Vec<Vec<f64>> = (0..total).map(coords).collect();
    let cell = h.powi(d as i32);
    let m = DMatrix::from_fn(total, total, |i, j| {
        let z: Vec<f64> = points[i].iter().zip(&points[j]).map(|(a, b)| a - b).collect();
        k.at_displacement(&z) * cell
    });
    let eig = SymmetricEigen::try_new(m, 1e-14, 0).ok_or_else(|| Error::EigFailure("no convergence".into()))?;
    let mut values = Vec::with_capacity(total);
    for v in eig.eigenvalues.iter() {
        if *v < -EIG_TOLERANCE || *v > 1.0 + EIG_TOLERANCE {
            return Err(Error::EigFailure(format!("eigenvalue {v} outside [0, 1]")));
        }
        values.push(v.clamp(0.0, 1.0));
    }
    Ok(Eigenpairs { dim: d, values, vectors: eig.eigenvectors })
}

fn flatten(k: &ProjectionKernel) -> Vec<ProjectionKernel> {
    match k {
        ProjectionKernel::Tensor(f) => f.iter().flat_map(flatten).collect(),
        b => vec![b.clone()],
    }
}

pub fn nystrom_discretize(k: &ProjectionKernel, side: f64, points_per_axis: usize) -> Result<DiscretizedKernel> {
    if points_per_axis < MIN_GRID_POINTS {
        return invalid(format!("need at least {MIN_GRID_POINTS} grid points per axis"));
    }
    if !(side > 0.0 && side.is_finite()) {
        return invalid(format!("box side must be positive, got {side}"));
    }
    let h = side / points_per_axis as f64;
    let bandlimit = k.bandlimit();
    if h * bandlimit >= 0.5 {
        return Err(Error::NyquistViolation { spacing: h, bandlimit });
    }
    let factors = flatten(k)
        .iter()
        .map(|f| discretize_box(f, side, points_per_axis))
        .collect::<Result<Vec<_>>>()?;
    Ok(DiscretizedKernel { side, points_per_axis, factors })
}

impl DiscretizedKernel {
    pub fn dim(&self) -> usize {
        self.factors.iter().map(|f| f.dim).sum()
    }

    pub fn side(&self) -> f64 {
        self.side
    }

    pub fn points_per_axis(&self) -> usize {
        self.points_per_axis
    }

    pub fn spacing(&self) -> f64 {
        self.side / self.points_per_axis as f64
    }

    /// All eigenvalues; tensor kernels give Kronecker products in factor order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut out = vec![1.0];
        for f in &self.factors {
            out = out.iter().flat_map(|a| f.values.iter().map(move |b| a * b)).collect();
        }
        out
    }

    pub fn trace(&self) -> f64 {
        self.factors.iter().map(|f| f.values.iter().sum::<f64>()).product()
    }

    /// Replaces the eigenvalues of a single-factor discretization.
    pub fn with_eigenvalues(mut self, values: Vec<f64>) -> Result<Self> {
        if self.factors.len() != 1 || values.len() != self.factors[0].values.len() {
            return invalid("eigenvalue override needs a single factor of matching size");
        }
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return invalid("eigenvalues must lie in [0, 1]");
        }
        self.factors[0].values = values;
        Ok(self)
    }

    fn factor_sizes(&self) -> Vec<usize> {
        self.factors.iter().map(|f| f.values.len()).collect()
    }

    /// Grid index (row-major over the full grid) to coordinates of the cell corner.
    fn cell_corner(&self, mut idx: usize) -> Vec<f64> {
        let n = self.points_per_axis;
        let h = self.spacing();
        let mut p = vec![0.0; self.dim()];
        for slot in p.iter_mut().rev() {
            *slot = -0.5 * self.side + (idx % n) as f64 * h;
            idx /= n;
        }
        p
    }
}

/// Column of the (Kronecker) eigenvector basis for a multi-index.
fn eigenvector(dk: &DiscretizedKernel, multi: &[usize]) -> Vec<Complex<f64>> {
    let mut v = vec![Complex::new(1.0, 0.0)];
    for (f, &c) in dk.factors.iter().zip(multi) {
        let col = f.vectors.column(c);
        v = v.iter().flat_map(|a| col.iter().map(move |b| a * b)).collect();
    }
    v
}

/// One configuration (flat coordinates, `dim` per point) from a seeded RNG.
pub fn sample_with_rng(dk: &DiscretizedKernel, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let sizes = dk.factor_sizes();
    let mut selected: Vec<Vec<Complex<f64>>> = Vec::new();
    let mut multi = vec![0usize; sizes.len()];
    let total: usize = sizes.iter().product();
    for _ in 0..total {
        let lam: f64 = dk.factors.iter().zip(&multi).map(|(f, &c)| f.values[c]).product();
        if rng.gen::<f64>() < lam {
            selected.push(eigenvector(dk, &multi));
        }
        for k in (0..multi.len()).rev() {
            multi[k] += 1;
            if multi[k] < sizes[k] {
                break;
            }
            multi[k] = 0;
        }
    }
    let grid = total_grid(dk);
    let mut points = Vec::with_capacity(selected.len() * dk.dim());
    let mut basis = selected;
    while !basis.is_empty() {
        let k = basis.len();
        // P(i) = sum_c |V_ic|^2 / k
        let weights: Vec<f64> = (0..grid).map(|i| basis.iter().map(|v| v[i].norm_sqr()).sum::<f64>()).collect();
        let total_w: f64 = weights.iter().sum();
        let mut u = rng.gen::<f64>() * total_w;
        let mut pick = grid - 1;
        for (i, w) in weights.iter().enumerate() {
            if u < *w {
                pick = i;
                break;
            }
            u -= w;
        }
        let corner = dk.cell_corner(pick);
        let h = dk.spacing();
        for c in corner {
            points.push(c + rng.gen::<f64>() * h);
        }
        // Remove the direction e_pick from the span, then re-orthonormalize.
        let (j, _) = basis
            .iter()
            .enumerate()
            .map(|(j, v)| (j, v[pick].norm()))
            .fold((0, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        let pivot = basis.swap_remove(j);
        let pv = pivot[pick];
        for v in basis.iter_mut() {
            let factor = v[pick] / pv;
            for (a, b) in v.iter_mut().zip(&pivot) {
                *a -= factor * b;
            }
        }
        for a in 0..basis.len() {
            for b in 0..a {
                let proj: Complex<f64> = basis[b].iter().zip(&basis[a]).map(|(x, y)| x.conj() * y).sum();
                let (head, tail) = basis.split_at_mut(a);
                for (y, x) in tail[0].iter_mut().zip(&head[b]) {
                    *y -= proj * x;
                }
            }
            let nrm = basis[a].iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
            for y in basis[a].iter_mut() {
                *y /= nrm;
            }
        }
        debug_assert!(k > basis.len());
    }
    points
}

fn total_grid(dk: &DiscretizedKernel) -> usize {
    dk.factor_sizes().iter().product()
}

/// Configuration for sample `index` of the seed sequence of `seed`.
pub fn sample_configuration(dk: &DiscretizedKernel, seed: u64, index: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    sample_with_rng(dk, &mut rng)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleBatch {
    pub seed: u64,
    pub dim: usize,
    /// Side of the box `[-side/2, side/2)^dim`.
    pub side: f64,
    /// Flat coordinates per configuration, `dim` values per point.
    pub configurations: Vec<Vec<f64>>,
}

pub fn sample_batch(dk: &DiscretizedKernel, samples: usize, seed: u64) -> SampleBatch {
    let configurations = (0..samples as u64).into_par_iter().map(|i| sample_configuration(dk, seed, i)).collect();
    SampleBatch { seed, dim: dk.dim(), side: dk.side(), configurations }
}

fn take<'a>(bytes: &mut &'a [u8], n: usize) -> Result<&'a [u8]> {
    if bytes.len() < n {
        return Err(Error::Parse("truncated sample batch".into()));
    }
    let (head, rest) = bytes.split_at(n);
    *bytes = rest;
    Ok(head)
}

fn take_u64(bytes: &mut &[u8]) -> Result<u64> {
    Ok(u64::from_le_bytes(take(bytes, 8)?.try_into().expect("8 bytes")))
}

fn take_f64(bytes: &mut &[u8]) -> Result<f64> {
    Ok(f64::from_le_bytes(take(bytes, 8)?.try_into().expect("8 bytes")))
}

impl SampleBatch {
    pub fn len(&self) -> usize {
        self.configurations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.configurations.is_empty()
    }

    pub fn cardinalities(&self) -> Vec<f64> {
        self.configurations.iter().map(|c| (c.len() / self.dim) as f64).collect()
    }

    /// Magic, seed, dim, side, count, then per configuration the point count
    /// followed by coordinates; all little-endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(BATCH_MAGIC);
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&(self.dim as u64).to_le_bytes());
        out.extend_from_slice(&self.side.to_le_bytes());
        out.extend_from_slice(&(self.configurations.len() as u64).to_le_bytes());
        for c in &self.configurations {
            out.extend_from_slice(&((c.len() / self.dim) as u64).to_le_bytes());
            for x in c {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(mut bytes: &[u8]) -> Result<Self> {
        let b = &mut bytes;
        if take(b, 8)? != BATCH_MAGIC {
            return Err(Error::Parse("not a sample batch".into()));
        }
        let seed = take_u64(b)?;
        let dim = take_u64(b)? as usize;
        let side = take_f64(b)?;
        let count = take_u64(b)? as usize;
        if dim == 0 {
            return Err(Error::Parse("sample batch has dimension 0".into()));
        }
        let mut configurations = Vec::with_capacity(count.min(1 << 20));
        for _ in 0..count {
            let n = take_u64(b)? as usize;
            let coords = (0..n * dim).map(|_| take_f64(b)).collect::<Result<Vec<_>>>()?;
            configurations.push(coords);
        }
        if !b.is_empty() {
            return Err(Error::Parse("trailing bytes after sample batch".into()));
        }
        Ok(Self { seed, dim, side, configurations })
    }
}

/// Counts in `Q_n = n lambda + [-lambda/2, lambda/2)^d` per configuration.
pub fn window_counts(batch: &SampleBatch, lambda: f64, n: &[i64]) -> Result<Vec<f64>> {
    if n.len() != batch.dim {
        return Err(Error::DimensionMismatch { expected: batch.dim, got: n.len() });
    }
    if !(lambda > 0.0) {
        return invalid("window side must be positive");
    }
    let half = 0.5 * batch.side;
    let lo: Vec<f64> = n.iter().map(|k| *k as f64 * lambda - 0.5 * lambda).collect();
    if lo.iter().any(|l| l - lambda < -half || l + 2.0 * lambda > half) {
        return Err(Error::WindowOutOfBox { window: n.to_vec(), margin: lambda });
    }
    Ok(batch
        .configurations
        .iter()
        .map(|c| {
            c.chunks(batch.dim)
                .filter(|p| p.iter().zip(&lo).all(|(x, l)| *x >= *l && *x < l + lambda))
                .count() as f64
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub estimate: f64,
    pub stderr: f64,
}

pub fn mean_with_stderr(x: &[f64]) -> Estimate {
    let s = x.len() as f64;
    let mean = x.iter().sum::<f64>() / s;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (s - 1.0);
    Estimate { estimate: mean, stderr: (var / s).sqrt() }
}

/// Sample covariance with a leave-one-out jackknife standard error.
pub fn covariance_with_jackknife(x: &[f64], y: &[f64]) -> Estimate {
    let s = x.len() as f64;
    let (sx, sy) = (x.iter().sum::<f64>(), y.iter().sum::<f64>());
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let cov = |sx: f64, sy: f64, sxy: f64, n: f64| (sxy - sx * sy / n) / (n - 1.0);
    let full = cov(sx, sy, sxy, s);
    let loo: Vec<f64> = x.iter().zip(y).map(|(a, b)| cov(sx - a, sy - b, sxy - a * b, s - 1.0)).collect();
    let mean_loo = loo.iter().sum::<f64>() / s;
    let var = (s - 1.0) / s * loo.iter().map(|t| (t - mean_loo).powi(2)).sum::<f64>();
    Estimate { estimate: full, stderr: var.sqrt() }
}

/// `Cov(N_0, N_n)` across the batch.
pub fn empirical_covariance(batch: &SampleBatch, lambda: f64, n: &[i64]) -> Result<Estimate> {
    if batch.len() < 3 {
        return invalid("need at least three configurations");
    }
    let zero = vec![0i64; batch.dim];
    let a = window_counts(batch, lambda, &zero)?;
    let b = window_counts(batch, lambda, n)?;
    Ok(covariance_with_jackknife(&a, &b))
}

/// Mean count in `Q_n`.
pub fn empirical_mean(batch: &SampleBatch, lambda: f64, n: &[i64]) -> Result<Estimate> {
    if batch.len() < 2 {
        return invalid("need at least two configurations");
    }
    Ok(mean_with_stderr(&window_counts(batch, lambda, n)?))
}
