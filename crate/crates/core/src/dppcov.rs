//! Count-process moments of stationary projection DPPs.
//!
//! For a window side `lambda`, `N_n` counts points in
//! `Q_n = n lambda + [-lambda/2, lambda/2)^d`. Second moments reduce to
//! integrals of `|K(z)|^2` against tent weights in the displacement
//! coordinate `z = y - x`:
//!
//! `A(n) = int |K(z)|^2 prod_i (lambda - |z_i - n_i lambda|)_+ dz`,
//! `Cov(N_0, N_n) = lambda^d K(0,0) [n = 0] - A(n)`.
//!
//! Since `sum_n A(n) = lambda^d K(0,0)` for a projection kernel, the mass
//! missing from a truncated table is known exactly and serves as the tail bound.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::kernels::{indicator_ft, sinc, tail_energy, Bounded, BoxUnion, ProjectionKernel};
use crate::quadrature::{GaussLegendre, QuadratureSpec};
use crate::spectral::{density_from_covariances, lattice_points, CovarianceSequence, Provenance, SpectralDensity};

/// Cell refinements attempted before a tent integral is declared unresolved.
const MAX_REFINEMENTS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountProcessSpec {
    pub kernel: ProjectionKernel,
    pub lambda: f64,
}

impl CountProcessSpec {
    pub fn new(kernel: ProjectionKernel, lambda: f64) -> Result<Self> {
        let spec = Self { kernel, lambda };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return invalid(format!("window side must be positive, got {}", self.lambda));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.kernel.dim()
    }
}

/// `E N_0 = lambda^d K(0,0)`.
pub fn count_mean(spec: &CountProcessSpec) -> f64 {
    spec.lambda.powi(spec.dim() as i32) * spec.kernel.diagonal()
}

/// Gauss nodes on `[lo, hi]` split at `breaks`, cells no wider than `h`,
/// with weights multiplied by `weight(x)`.
fn axis_nodes(lo: f64, hi: f64, breaks: &[f64], h: f64, gl: &GaussLegendre, weight: impl Fn(f64) -> f64) -> Vec<(f64, f64)> {
    let mut cuts = vec![lo];
    cuts.extend(breaks.iter().filter(|b| **b > lo && **b < hi));
    cuts.push(hi);
    let mut out = Vec::new();
    for seg in cuts.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        let cells = ((b - a) / h).ceil().max(1.0) as usize;
        let step = (b - a) / cells as f64;
        for k in 0..cells {
            let mid = a + step * (k as f64 + 0.5);
            for (x, w) in gl.nodes().iter().zip(gl.weights()) {
                let z = mid + 0.5 * step * x;
                out.push((z, 0.5 * step * w * weight(z)));
            }
        }
    }
    out
}

fn tensor_sum(b: &BoxUnion, axes: &[Vec<(f64, f64)>]) -> (f64, usize) {
    let d = axes.len();
    let mut idx = vec![0usize; d];
    let mut z = vec![0.0; d];
    let mut acc = 0.0;
    let mut evals = 0;
    loop {
        let mut w = 1.0;
        for i in 0..d {
            let (x, wi) = axes[i][idx[i]];
            z[i] = x;
            w *= wi;
        }
        if w != 0.0 {
            acc += w * indicator_ft(b, &z).norm_sqr();
            evals += 1;
        }
        let mut k = d;
        loop {
            if k == 0 {
                return (acc, evals);
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < axes[k].len() {
                break;
            }
            idx[k] = 0;
        }
    }
}

/// `int_{box} |FT[chi_B](z)|^2 prod_i weight_i(z_i) dz` by tensor Gauss rules
/// on cells, refined until two rules of different degree agree.
fn weighted_energy(
    b: &BoxUnion,
    ranges: &[(f64, f64)],
    breaks: &[Vec<f64>],
    weight: &(dyn Fn(usize, f64) -> f64 + Sync),
    quad: &QuadratureSpec,
) -> Result<Bounded> {
    quad.validate()?;
    let ext = b.extent();
    let lo_rule = quad.rule();
    let hi_rule = GaussLegendre::new(quad.degree + 4);
    let mut evals = 0;
    for level in 0..MAX_REFINEMENTS {
        let scale = 0.5f64.powi(level as i32);
        let build = |gl: &GaussLegendre| -> Vec<Vec<(f64, f64)>> {
            (0..b.dim())
                .map(|i| {
                    let (lo, hi) = ranges[i];
                    let h = (0.25 / ext[i]).min(hi - lo) * scale;
                    axis_nodes(lo, hi, &breaks[i], h, gl, |x| weight(i, x))
                })
                .collect()
        };
        let (coarse, e1) = tensor_sum(b, &build(&lo_rule));
        let (fine, e2) = tensor_sum(b, &build(&hi_rule));
        evals += e1 + e2;
        let err = (fine - coarse).abs();
        if err <= quad.abs_tol.max(quad.rel_tol * fine.abs()) {
            return Ok(Bounded { value: fine, error_bound: err });
        }
        if evals > quad.max_evals {
            break;
        }
    }
    Err(Error::QuadratureFailure { evals })
}

/// `A(n)` for a box-union symbol.
fn box_tent_integral(b: &BoxUnion, n: &[i64], lambda: f64, quad: &QuadratureSpec) -> Result<Bounded> {
    let centers: Vec<f64> = n.iter().map(|k| *k as f64 * lambda).collect();
    let ranges: Vec<(f64, f64)> = centers.iter().map(|c| (c - lambda, c + lambda)).collect();
    let breaks: Vec<Vec<f64>> = centers.iter().map(|c| vec![*c]).collect();
    let weight = |i: usize, z: f64| (lambda - (z - centers[i]).abs()).max(0.0);
    weighted_energy(b, &ranges, &breaks, &weight, quad)
}

fn product_bounded(parts: &[Bounded]) -> Bounded {
    let value = parts.iter().map(|p| p.value).product();
    let mut error_bound = 0.0;
    for (i, p) in parts.iter().enumerate() {
        let others: f64 = parts
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, q)| q.value.abs() + q.error_bound)
            .product();
        error_bound += p.error_bound * others;
    }
    Bounded { value, error_bound }
}

/// Tent integral `A(n)` for any projection kernel; tensor kernels factorize.
fn tent_integral(k: &ProjectionKernel, n: &[i64], lambda: f64, quad: &QuadratureSpec) -> Result<Bounded> {
    match k {
        ProjectionKernel::Box(b) => box_tent_integral(b, n, lambda, quad),
        ProjectionKernel::Tensor(factors) => {
            let mut parts = Vec::with_capacity(factors.len());
            let mut offset = 0;
            for f in factors {
                let d = f.dim();
                parts.push(tent_integral(f, &n[offset..offset + d], lambda, quad)?);
                offset += d;
            }
            Ok(product_bounded(&parts))
        }
    }
}

/// Row-major table of `A(n)` over `[-R, R]^d`.
fn tent_table(k: &ProjectionKernel, radius: usize, lambda: f64, quad: &QuadratureSpec) -> Result<Vec<Bounded>> {
    match k {
        ProjectionKernel::Box(b) => {
            // |K|^2 is even, so A(-n) = A(n); compute the first half and mirror.
            let points: Vec<Vec<i64>> = lattice_points(b.dim(), radius).collect();
            let half = points.len() / 2 + 1;
            let mut table: Vec<Bounded> =
                points[..half].par_iter().map(|n| box_tent_integral(b, n, lambda, quad)).collect::<Result<_>>()?;
            for i in half..points.len() {
                table.push(table[points.len() - 1 - i]);
            }
            Ok(table)
        }
        ProjectionKernel::Tensor(factors) => {
            let mut table = vec![Bounded { value: 1.0, error_bound: 0.0 }];
            for f in factors {
                let t = tent_table(f, radius, lambda, quad)?;
                let mut next = Vec::with_capacity(table.len() * t.len());
                for a in &table {
                    for b in &t {
                        next.push(product_bounded(&[*a, *b]));
                    }
                }
                table = next;
            }
            Ok(table)
        }
    }
}

/// `Cov(N_0, N_n)` with a bound on the quadrature error.
pub fn count_covariance_with_error(spec: &CountProcessSpec, n: &[i64], quad: &QuadratureSpec) -> Result<Bounded> {
    spec.validate()?;
    if n.len() != spec.dim() {
        return Err(Error::DimensionMismatch { expected: spec.dim(), got: n.len() });
    }
    let a = tent_integral(&spec.kernel, n, spec.lambda, quad)?;
    let value = if n.iter().all(|k| *k == 0) { count_mean(spec) - a.value } else { -a.value };
    Ok(Bounded { value, error_bound: a.error_bound })
}

pub fn count_covariance(spec: &CountProcessSpec, n: &[i64], quad: &QuadratureSpec) -> Result<f64> {
    Ok(count_covariance_with_error(spec, n, quad)?.value)
}

/// Covariances on `|n|_inf <= R`. The tail bound is the mass the table misses
/// from `sum_n A(n) = lambda^d K(0,0)`, plus accumulated quadrature error.
pub fn covariance_sequence(spec: &CountProcessSpec, radius: usize, quad: &QuadratureSpec) -> Result<CovarianceSequence> {
    spec.validate()?;
    let table = tent_table(&spec.kernel, radius, spec.lambda, quad)?;
    let mean = count_mean(spec);
    let center = table.len() / 2;
    let values: Vec<f64> = table
        .iter()
        .enumerate()
        .map(|(i, a)| if i == center { mean - a.value } else { -a.value })
        .collect();
    let captured: f64 = table.iter().map(|a| a.value).sum();
    let quad_err: f64 = table.iter().map(|a| a.error_bound).sum();
    let tail = (mean - captured).max(0.0) + quad_err;
    CovarianceSequence::new(spec.dim(), radius, values, mean, tail)
}

/// `int_{[-a, a]^d} |K(z)|^2 dz`.
fn inner_energy(k: &ProjectionKernel, a: f64, quad: &QuadratureSpec) -> Result<Bounded> {
    match k {
        ProjectionKernel::Box(b) if b.dim() == 1 => {
            let t = tail_energy(b, a, quad)?;
            Ok(Bounded { value: b.volume() - t.value, error_bound: t.error_bound })
        }
        ProjectionKernel::Box(b) => {
            let ranges = vec![(-a, a); b.dim()];
            let breaks = vec![Vec::new(); b.dim()];
            weighted_energy(b, &ranges, &breaks, &|_, _| 1.0, quad)
        }
        ProjectionKernel::Tensor(factors) => {
            let parts = factors.iter().map(|f| inner_energy(f, a, quad)).collect::<Result<Vec<_>>>()?;
            Ok(product_bounded(&parts))
        }
    }
}

/// `K(0,0) - sum_{|n| <= R} int_{Q_n} |K(0, y)|^2 dy`.
pub fn projection_identity_residual_with_error(
    spec: &CountProcessSpec,
    radius: usize,
    quad: &QuadratureSpec,
) -> Result<Bounded> {
    spec.validate()?;
    if spec.dim() > 2 {
        return Err(Error::DimensionMismatch { expected: 2, got: spec.dim() });
    }
    let inner = inner_energy(&spec.kernel, (radius as f64 + 0.5) * spec.lambda, quad)?;
    Ok(Bounded { value: spec.kernel.diagonal() - inner.value, error_bound: inner.error_bound })
}

pub fn projection_identity_residual(spec: &CountProcessSpec, radius: usize, quad: &QuadratureSpec) -> Result<f64> {
    Ok(projection_identity_residual_with_error(spec, radius, quad)?.value)
}

/// Spectral density of the count process from its truncated covariances.
pub fn count_spectral_density(spec: &CountProcessSpec, radius: usize, quad: &QuadratureSpec) -> Result<SpectralDensity> {
    density_from_covariances(&covariance_sequence(spec, radius, quad)?)
}

/// Spectral density of the count process in closed form:
///
/// `omega(theta) = lambda^d |B| - lambda^-d sum_m prod_i lambda^2 sinc^2(theta_i + m_i) a((theta + m) / lambda)`
///
/// with `a(xi) = |B ∩ (B + xi)|`. The sum is finite because `a` has compact
/// support, and `omega(0) = 0` exactly.
pub fn kernel_count_density(spec: &CountProcessSpec) -> Result<SpectralDensity> {
    spec.validate()?;
    let symbol = spec.kernel.symbol();
    let lambda = spec.lambda;
    let d = symbol.dim();
    let ext = symbol.extent();
    let mean = count_mean(spec);
    let inv = lambda.powi(-(d as i32));
    let f = move |theta: &[f64]| {
        let ranges: Vec<(i64, i64)> = (0..d)
            .map(|i| {
                let reach = ext[i] * lambda;
                ((-reach - theta[i]).ceil() as i64, (reach - theta[i]).floor() as i64)
            })
            .collect();
        if ranges.iter().any(|(lo, hi)| lo > hi) {
            return mean;
        }
        let mut m: Vec<i64> = ranges.iter().map(|r| r.0).collect();
        let mut xi = vec![0.0; d];
        let mut acc = 0.0;
        loop {
            let mut w = 1.0;
            for i in 0..d {
                let s = theta[i] + m[i] as f64;
                xi[i] = s / lambda;
                w *= lambda * lambda * sinc(s).powi(2);
            }
            if w != 0.0 {
                acc += w * symbol.autocorrelation(&xi);
            }
            let mut k = d;
            loop {
                if k == 0 {
                    return mean - inv * acc;
                }
                k -= 1;
                m[k] += 1;
                if m[k] <= ranges[k].1 {
                    break;
                }
                m[k] = ranges[k].0;
            }
        }
    };
    Ok(SpectralDensity::from_function(d, Provenance::FromKernel, mean * mean, 0.0, f))
}

/// `min omega(theta) / sum_i |theta_i|` over the nonzero points of a uniform grid.
pub fn linear_lower_constant(omega: &SpectralDensity, points_per_axis: usize) -> f64 {
    omega
        .grid(points_per_axis)
        .into_iter()
        .filter_map(|(t, w)| {
            let norm: f64 = t.iter().map(|x| x.abs()).sum();
            (norm > 0.0).then_some(w / norm)
        })
        .fold(f64::INFINITY, f64::min)
}

/// `|alpha| = 1/4 - (2 / pi^2) sum_{j >= 1} cos(2 (2j - 1) pi alpha) / (2j - 1)^2` on
/// `[-1/2, 1/2]`, by partial sums with the remainder bounded by the tail of
/// `sum (2j - 1)^-2`.
pub fn abs_cosine_series(alpha: f64, terms: usize) -> Bounded {
    let mut s = 0.0;
    for j in (1..=terms).rev() {
        let k = (2 * j - 1) as f64;
        s += (2.0 * k * PI * alpha).cos() / (k * k);
    }
    let tail = 1.0 / (2.0 * (2 * terms + 1) as f64 - 2.0);
    Bounded { value: 0.25 - 2.0 / (PI * PI) * s, error_bound: 2.0 / (PI * PI) * tail }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(lambda: f64) -> CountProcessSpec {
        CountProcessSpec::new(ProjectionKernel::sine(), lambda).unwrap()
    }

    fn tensor(lambda: f64) -> CountProcessSpec {
        CountProcessSpec::new(ProjectionKernel::tensor_sine(), lambda).unwrap()
    }

    fn q() -> QuadratureSpec {
        QuadratureSpec::default()
    }

    fn sinc2(x: f64) -> f64 {
        sinc(x).powi(2)
    }

    #[test]
    fn means() {
        assert_eq!(count_mean(&sine(1.0)), 1.0);
        assert_eq!(count_mean(&sine(2.0)), 2.0);
        assert_eq!(count_mean(&tensor(1.0)), 1.0);
        assert!(CountProcessSpec::new(ProjectionKernel::sine(), 0.0).is_err());
    }

    #[test]
    fn variance_matches_riemann_sum() {
        let n = 2000;
        let h = 1.0 / n as f64;
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                s += sinc2((i as f64 - j as f64) * h);
            }
        }
        let oracle = 1.0 - s * h * h;
        let v = count_covariance(&sine(1.0), &[0], &q()).unwrap();
        assert!((v - oracle).abs() < 1e-6, "{v} vs {oracle}");
    }

    #[test]
    fn off_diagonal_covariances_are_negative_and_symmetric() {
        for n in 1..8 {
            let a = count_covariance(&sine(1.0), &[n], &q()).unwrap();
            let b = count_covariance(&sine(1.0), &[-n], &q()).unwrap();
            assert!(a < 0.0);
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn lag_one_matches_riemann_sum() {
        let n = 1000;
        let h = 1.0 / n as f64;
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                s += sinc2(1.0 + (j as f64 - i as f64) * h);
            }
        }
        let c1 = count_covariance(&sine(1.0), &[1], &q()).unwrap();
        assert!((c1 + s * h * h).abs() < 1e-6);
    }

    #[test]
    fn tensor_covariances_factorize() {
        let s = sine(1.0);
        let a = |k: i64| -count_covariance(&s, &[k], &q()).unwrap() + if k == 0 { 1.0 } else { 0.0 };
        let t = tensor(1.0);
        for (j, k) in [(0i64, 1i64), (2, -3), (1, 1), (0, 0)] {
            let got = count_covariance(&t, &[j, k], &q()).unwrap();
            let expect = if (j, k) == (0, 0) { 1.0 - a(0) * a(0) } else { -a(j) * a(k) };
            assert!((got - expect).abs() < 1e-12);
        }
        // a genuinely two-dimensional box union agrees with the tensor path
        let square = CountProcessSpec::new(
            ProjectionKernel::Box(BoxUnion::new(vec![vec![(-0.5, 0.5), (-0.5, 0.5)]]).unwrap()),
            1.0,
        )
        .unwrap();
        for n in [[0i64, 0i64], [1, 2]] {
            let a = count_covariance(&square, &n, &q()).unwrap();
            let b = count_covariance(&t, &n, &q()).unwrap();
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn sequence_sums_to_zero_within_tail() {
        let cov = covariance_sequence(&sine(1.0), 50, &q()).unwrap();
        let total: f64 = cov.values().iter().sum();
        assert!(total.abs() <= cov.tail_bound() * (1.0 + 1e-9));
        assert!(cov.tail_bound() < 0.05);
        assert_eq!(cov.mean(), 1.0);
        for n in 1..=50 {
            assert_eq!(cov.get(&[n]), cov.get(&[-n]));
        }
    }

    #[test]
    fn tensor_sequence_has_inverse_square_decay() {
        let cov = covariance_sequence(&tensor(1.0), 16, &q()).unwrap();
        let mut lo = f64::INFINITY;
        let mut hi: f64 = 0.0;
        for j in 0..=16i64 {
            for k in 0..=16i64 {
                if (j, k) == (0, 0) {
                    continue;
                }
                let r = cov.get(&[j, k]).abs() * ((1 + j * j) * (1 + k * k)) as f64;
                lo = lo.min(r);
                hi = hi.max(r);
            }
        }
        // far lags approach (2 pi^2)^-2 from above; near lags stay below 1
        let far = (2.0 * PI * PI).powi(-2);
        assert!(lo > 0.95 * far && hi < 1.0, "{lo} {hi}");
    }

    #[test]
    fn projection_residual_decays_like_inverse_radius() {
        let r10 = projection_identity_residual(&sine(1.0), 10, &q()).unwrap();
        let r100 = projection_identity_residual(&sine(1.0), 100, &q()).unwrap();
        assert!(r10 > 0.0 && r10 < 0.1);
        let ratio = r100 / r10;
        assert!((ratio - 0.1).abs() < 0.02, "{ratio}");
        let r0 = projection_identity_residual(&sine(1.0), 0, &q()).unwrap();
        assert!(r0 <= 1.0 && r0 > r10);
        // tensor residual from the 1-D factor
        let t = projection_identity_residual(&tensor(1.0), 10, &q()).unwrap();
        assert!((t - (1.0 - (1.0 - r10).powi(2))).abs() < 1e-12);
    }

    #[test]
    fn closed_form_density_matches_cosine_sum() {
        for lambda in [0.5, 1.0, 2.0] {
            let spec = sine(lambda);
            let exact = kernel_count_density(&spec).unwrap();
            let cov = count_spectral_density(&spec, 60, &q()).unwrap();
            assert!(exact.eval_raw(&[0.0]).abs() < 1e-14);
            for t in [-0.45, -0.2, 0.05, 0.3, 0.5] {
                let diff = (exact.eval_raw(&[t]) - cov.eval_raw(&[t])).abs();
                assert!(diff <= cov.uncertainty(), "lambda {lambda} theta {t}: {diff}");
            }
            assert_eq!(exact.atom_at_zero(), count_mean(&spec).powi(2));
        }
    }

    #[test]
    fn sine_density_is_linear_at_zero() {
        let w = kernel_count_density(&sine(1.0)).unwrap();
        for t in [1e-2, 1e-3, 1e-4] {
            let slope = w.eval(&[t]) / t;
            assert!((slope - 1.0).abs() < 10.0 * t, "{slope}");
        }
    }

    #[test]
    fn tensor_density_has_linear_lower_bound() {
        let w = kernel_count_density(&tensor(1.0)).unwrap();
        let c32 = linear_lower_constant(&w, 32);
        let c64 = linear_lower_constant(&w, 64);
        assert!(c32 > 0.0 && (c64 / c32 - 1.0).abs() < 0.2);
        // 1 - omega = (1 - omega_1) (1 - omega_1)
        let w1 = kernel_count_density(&sine(1.0)).unwrap();
        for (a, b) in [(0.1, 0.3), (-0.4, 0.05)] {
            let lhs = 1.0 - w.eval_raw(&[a, b]);
            let rhs = (1.0 - w1.eval_raw(&[a])) * (1.0 - w1.eval_raw(&[b]));
            assert!((lhs - rhs).abs() < 1e-14);
        }
    }

    #[test]
    fn white_noise_covariances_give_flat_density() {
        let w = density_from_covariances(&CovarianceSequence::from_one_sided(&[1.0], 0.0, 0.0).unwrap()).unwrap();
        assert!(w.grid(16).iter().all(|(_, v)| *v == 1.0));
    }

    #[test]
    fn classical_series() {
        let terms = 100_000_000usize;
        let mut s = 0.0;
        for j in (1..=terms).rev() {
            let k = (2 * j - 1) as f64;
            s += 1.0 / (k * k);
        }
        let tail = 1.0 / (2.0 * (2 * terms - 1) as f64);
        let target = PI * PI / 8.0;
        assert!(s <= target && target <= s + tail + 1e-15);
        assert!(tail < 1e-8);
        for alpha in [0.1, 0.25, 0.4] {
            let b = abs_cosine_series(alpha, 20_000_000);
            assert!(b.error_bound < 1e-8);
            assert!((b.value - alpha).abs() <= b.error_bound + 1e-14);
        }
    }
}
