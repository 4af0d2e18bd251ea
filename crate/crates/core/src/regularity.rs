//! Sufficient conditions for rigidity: covariance tail statistics, the total
//! covariance sum, and Zygmund-class difference estimates in one and two
//! dimensions.
//!
//! None of these computations proves membership in a function class. A tail
//! statistic or difference ratio that keeps growing falsifies the condition;
//! one that stabilizes is reported as evidence.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::Bounded;
use crate::spectral::{CovarianceSequence, SpectralDensity};

/// Relative growth allowed over the last quarter of a range.
pub const PLATEAU_TOLERANCE: f64 = 0.01;
/// Relative growth of a difference ratio at fine scales still counted as stable.
pub const ZYGMUND_STABILITY: f64 = 0.1;

/// True when the series grows by at most 1% over its last quarter.
pub fn plateau_holds(series: &[f64]) -> bool {
    let n = series.len();
    if n < 2 {
        return true;
    }
    let start = (3 * n / 4).min(n - 2);
    let base = series[start];
    let top = series[start..].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if base == 0.0 {
        return top <= 0.0;
    }
    (top - base) / base.abs() <= PLATEAU_TOLERANCE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailStatistic {
    pub dim: usize,
    pub n_max: usize,
    /// 1-D: `N * sum_{|n| >= N} |c_n|` for `N = 1..=n_max`.
    /// 2-D: `N * M * sum_{|j| >= N, |k| >= M} |c_jk|`, row-major over `(N, M)`.
    /// Each value includes the certified tail beyond the stored radius.
    pub values: Vec<f64>,
    /// Running supremum over the square `max(N, M) <= K`, `K = 1..=n_max`.
    pub running_sup: Vec<f64>,
    pub sup_estimate: f64,
    pub bounded: bool,
}

pub fn tail_sup_statistic(cov: &CovarianceSequence, n_max: usize) -> Result<TailStatistic> {
    if !cov.tail_bound().is_finite() {
        return Err(Error::NonSummable(cov.tail_bound()));
    }
    if n_max > cov.radius() {
        return Err(Error::RadiusTooSmall { needed: n_max, available: cov.radius() });
    }
    if n_max == 0 {
        return Err(Error::InvalidInput("n_max must be positive".into()));
    }
    let r = cov.radius() as i64;
    let tail = cov.tail_bound();
    let (values, running_sup) = match cov.dim() {
        1 => {
            // suffix[k] = sum_{k <= |n| <= R} |c_n|
            let mut suffix = vec![0.0; cov.radius() + 2];
            for k in (1..=r).rev() {
                suffix[k as usize] = suffix[k as usize + 1] + cov.get(&[k]).abs() + cov.get(&[-k]).abs();
            }
            let values: Vec<f64> = (1..=n_max).map(|n| n as f64 * (suffix[n] + tail)).collect();
            let mut running = Vec::with_capacity(n_max);
            let mut sup = f64::NEG_INFINITY;
            for v in &values {
                sup = sup.max(*v);
                running.push(sup);
            }
            (values, running)
        }
        2 => {
            let side = cov.radius() + 2;
            // suffix[j][k] = sum over |j'| >= j, |k'| >= k of |c|
            let mut suffix = vec![0.0; side * side];
            for j in (1..=r).rev() {
                for k in (1..=r).rev() {
                    let own: f64 = [(j, k), (-j, k), (j, -k), (-j, -k)]
                        .iter()
                        .map(|(a, b)| cov.get(&[*a, *b]).abs())
                        .sum();
                    let (ju, ku) = (j as usize, k as usize);
                    suffix[ju * side + ku] = own + suffix[(ju + 1) * side + ku] + suffix[ju * side + ku + 1]
                        - suffix[(ju + 1) * side + ku + 1];
                }
            }
            let mut values = Vec::with_capacity(n_max * n_max);
            for n in 1..=n_max {
                for m in 1..=n_max {
                    values.push((n * m) as f64 * (suffix[n * side + m] + tail));
                }
            }
            let mut running = Vec::with_capacity(n_max);
            let mut sup = f64::NEG_INFINITY;
            for k in 1..=n_max {
                for i in 0..k {
                    sup = sup.max(values[i * n_max + (k - 1)]).max(values[(k - 1) * n_max + i]);
                }
                running.push(sup);
            }
            (values, running)
        }
        d => return Err(Error::DimensionMismatch { expected: 2, got: d }),
    };
    let sup_estimate = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let bounded = plateau_holds(&running_sup);
    Ok(TailStatistic { dim: cov.dim(), n_max, values, running_sup, sup_estimate, bounded })
}

/// `sum_{|n| <= R} c_n` with the tail bound as error bar.
pub fn total_covariance_sum(cov: &CovarianceSequence) -> Bounded {
    Bounded { value: cov.values().iter().sum(), error_bound: cov.tail_bound() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SufficiencyReport {
    pub passes: bool,
    pub tail: TailStatistic,
    pub sum: Bounded,
}

/// Bounded tail statistic together with a vanishing covariance sum.
pub fn sufficient_rigidity_check(cov: &CovarianceSequence, n_max: usize) -> Result<SufficiencyReport> {
    if cov.dim() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, got: cov.dim() });
    }
    let tail = tail_sup_statistic(cov, n_max)?;
    let sum = total_covariance_sum(cov);
    Ok(SufficiencyReport { passes: tail.bounded && sum.value.abs() <= sum.error_bound, tail, sum })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeGrid {
    pub points_per_axis: usize,
    /// Dyadic steps `h = 2^-j` for `j = 1..=j_max`.
    pub j_max: u32,
}

impl ProbeGrid {
    pub fn one_dimensional() -> Self {
        Self { points_per_axis: 512, j_max: 12 }
    }

    pub fn two_dimensional() -> Self {
        Self { points_per_axis: 64, j_max: 8 }
    }

    fn xs(&self) -> impl Iterator<Item = f64> + '_ {
        let n = self.points_per_axis;
        (0..n).map(move |i| -0.5 + i as f64 / n as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZygmundReport {
    pub constant_estimate: f64,
    /// Probe attaining the maximum: `[x.., h..]`.
    pub worst_point: Vec<f64>,
    /// Largest ratio among probes whose finest step is `2^-j`, `j = 1..=j_max`.
    pub per_level: Vec<f64>,
    /// No growth beyond 10% at the finest quarter of the levels.
    pub stable: bool,
}

pub fn second_difference<F: Fn(f64) -> f64>(f: F, x: f64, h: f64) -> f64 {
    f(x + h) - 2.0 * f(x) + f(x - h)
}

/// Nine-point mixed second difference.
pub fn double_difference<F: Fn(f64, f64) -> f64>(f: F, x1: f64, x2: f64, h1: f64, h2: f64) -> f64 {
    f(x1 + h1, x2 + h2) + f(x1 - h1, x2 + h2) + f(x1 + h1, x2 - h2) + f(x1 - h1, x2 - h2)
        - 2.0 * f(x1 + h1, x2)
        - 2.0 * f(x1 - h1, x2)
        - 2.0 * f(x1, x2 + h2)
        - 2.0 * f(x1, x2 - h2)
        + 4.0 * f(x1, x2)
}

fn stability(per_level: &[f64]) -> bool {
    let n = per_level.len();
    if n < 2 {
        return true;
    }
    let start = (3 * n / 4).min(n - 1);
    let head = per_level[..start].iter().cloned().fold(0.0, f64::max);
    let tail = per_level[start..].iter().cloned().fold(0.0, f64::max);
    tail <= (1.0 + ZYGMUND_STABILITY) * head
}

/// `max |phi(x+h) - 2 phi(x) + phi(x-h)| / h` over the probe grid.
pub fn zygmund_constant_estimate(phi: &SpectralDensity, probe: &ProbeGrid) -> Result<ZygmundReport> {
    if phi.dim() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, got: phi.dim() });
    }
    let f = |t: f64| phi.eval_raw(&[t]);
    let mut best = 0.0;
    let mut worst = vec![0.0, 0.0];
    let mut per_level = Vec::with_capacity(probe.j_max as usize);
    for j in 1..=probe.j_max {
        let h = 0.5f64.powi(j as i32);
        let mut level = 0.0f64;
        for x in probe.xs() {
            let ratio = second_difference(f, x, h).abs() / h;
            level = level.max(ratio);
            if ratio > best {
                best = ratio;
                worst = vec![x, h];
            }
        }
        per_level.push(level);
    }
    Ok(ZygmundReport { constant_estimate: best, worst_point: worst, stable: stability(&per_level), per_level })
}

/// `max |Delta_{2,2} phi| / (h1 h2)` over the probe grid.
pub fn zygmund2_constant_estimate(phi: &SpectralDensity, probe: &ProbeGrid) -> Result<ZygmundReport> {
    if phi.dim() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, got: phi.dim() });
    }
    let f = |a: f64, b: f64| phi.eval_raw(&[a, b]);
    let xs: Vec<f64> = probe.xs().collect();
    let jm = probe.j_max as usize;
    let mut per_level = vec![0.0f64; jm];
    let mut best = 0.0;
    let mut worst = vec![0.0; 4];
    for j1 in 1..=jm {
        for j2 in 1..=jm {
            let h1 = 0.5f64.powi(j1 as i32);
            let h2 = 0.5f64.powi(j2 as i32);
            let lvl = j1.max(j2) - 1;
            for &x1 in &xs {
                for &x2 in &xs {
                    let ratio = double_difference(f, x1, x2, h1, h2).abs() / (h1 * h2);
                    per_level[lvl] = per_level[lvl].max(ratio);
                    if ratio > best {
                        best = ratio;
                        worst = vec![x1, x2, h1, h2];
                    }
                }
            }
        }
    }
    Ok(ZygmundReport { constant_estimate: best, worst_point: worst, stable: stability(&per_level), per_level })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossTermReport {
    pub max_ratio: f64,
    pub worst_point: Vec<f64>,
}

/// `max |phi(t1, t2) - phi(t1, 0) - phi(0, t2) + phi(0, 0)| / |t1 t2|` over
/// the off-axis points of a uniform grid.
pub fn cross_term_ratio(phi: &SpectralDensity, points_per_axis: usize) -> Result<CrossTermReport> {
    if phi.dim() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, got: phi.dim() });
    }
    let n = points_per_axis;
    let f = |a: f64, b: f64| phi.eval_raw(&[a, b]);
    let f00 = f(0.0, 0.0);
    let mut out = CrossTermReport { max_ratio: 0.0, worst_point: vec![0.0, 0.0] };
    for i in 0..n {
        let t1 = -0.5 + i as f64 / n as f64;
        if t1 == 0.0 {
            continue;
        }
        let f10 = f(t1, 0.0);
        for k in 0..n {
            let t2 = -0.5 + k as f64 / n as f64;
            if t2 == 0.0 {
                continue;
            }
            let ratio = (f(t1, t2) - f10 - f(0.0, t2) + f00).abs() / (t1 * t2).abs();
            if ratio > out.max_ratio {
                out = CrossTermReport { max_ratio: ratio, worst_point: vec![t1, t2] };
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{density_from_covariances, AnalyticFamily};
    use std::f64::consts::PI;

    fn seq(one_sided: &[f64], tail: f64) -> CovarianceSequence {
        CovarianceSequence::from_one_sided(one_sided, 0.0, tail).unwrap()
    }

    #[test]
    fn white_noise_has_empty_tails() {
        let mut c = vec![0.0; 11];
        c[0] = 1.0;
        let t = tail_sup_statistic(&seq(&c, 0.0), 10).unwrap();
        assert!(t.values.iter().all(|v| *v == 0.0));
        assert!(t.bounded);
    }

    #[test]
    fn inverse_square_tails_are_bounded() {
        let r = 200;
        let c: Vec<f64> = (0..=r).map(|n| 1.0 / (1.0 + (n * n) as f64)).collect();
        // tail beyond R bounded by 2 / R
        let t = tail_sup_statistic(&seq(&c, 2.0 / r as f64), 100).unwrap();
        assert!(t.bounded, "{:?}", &t.running_sup[70..]);
        // exact partial sums: N * 2 * sum_{n >= N} 1/(1+n^2) -> 2
        let n = 100usize;
        let exact: f64 = n as f64 * 2.0 * (n..=200_000).map(|k| 1.0 / (1.0 + (k * k) as f64)).sum::<f64>();
        assert!((t.values[n - 1] - exact).abs() < 0.02 * exact);
    }

    #[test]
    fn log_squared_tails_are_unbounded() {
        let r = 2000;
        let mut c: Vec<f64> = (0..=r).map(|n| 1.0 / (n as f64 * ((n + 2) as f64).ln().powi(2))).collect();
        c[0] = 10.0;
        let tail = 2.0 / (r as f64).ln();
        let t = tail_sup_statistic(&seq(&c, tail), 2000).unwrap();
        assert!(!t.bounded);
    }

    #[test]
    fn radius_guard() {
        assert!(matches!(tail_sup_statistic(&seq(&[1.0, 0.5], 0.0), 2), Err(Error::RadiusTooSmall { .. })));
    }

    #[test]
    fn total_sums() {
        let s = total_covariance_sum(&seq(&[2.0, -1.0], 0.0));
        assert_eq!((s.value, s.error_bound), (0.0, 0.0));
        assert_eq!(total_covariance_sum(&seq(&[1.0], 0.0)).value, 1.0);
    }

    #[test]
    fn sufficiency_decisions() {
        let mut ma = vec![0.0; 9];
        ma[0] = 2.0;
        ma[1] = -1.0;
        assert!(sufficient_rigidity_check(&seq(&ma, 0.0), 8).unwrap().passes);
        let mut wn = vec![0.0; 9];
        wn[0] = 1.0;
        assert!(!sufficient_rigidity_check(&seq(&wn, 0.0), 8).unwrap().passes);
    }

    #[test]
    fn two_dimensional_statistic_matches_brute_force() {
        let cov = CovarianceSequence::from_fn(2, 6, 0.0, 0.01, |n| {
            if n == [0, 0] {
                4.0
            } else {
                -1.0 / ((1 + n[0] * n[0]) * (1 + n[1] * n[1])) as f64
            }
        })
        .unwrap();
        let t = tail_sup_statistic(&cov, 4).unwrap();
        for nn in 1..=4i64 {
            for mm in 1..=4i64 {
                let brute: f64 = cov
                    .lattice()
                    .filter(|p| p[0].abs() >= nn && p[1].abs() >= mm)
                    .map(|p| cov.get(&p).abs())
                    .sum();
                let expect = (nn * mm) as f64 * (brute + 0.01);
                let got = t.values[((nn - 1) * 4 + (mm - 1)) as usize];
                assert!((got - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn plateau_rule() {
        assert!(plateau_holds(&[1.0, 2.0, 3.0, 3.0, 3.0, 3.0, 3.0, 3.01]));
        assert!(!plateau_holds(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]));
        assert!(plateau_holds(&[5.0]));
    }

    #[test]
    fn stencils_annihilate_constants_and_linear_terms() {
        let c = |_: f64| 3.7;
        assert_eq!(second_difference(c, 0.3, 0.125), 0.0);
        let lin = |x: f64| 2.0 - 0.5 * x;
        assert_eq!(second_difference(lin, 0.25, 0.125), 0.0);
        let bilinear = |a: f64, b: f64| 1.0 + 2.0 * a - 3.0 * b + 0.5 * a * b;
        assert_eq!(double_difference(bilinear, 0.25, -0.125, 0.0625, 0.25), 0.0);
        let separable = |a: f64, b: f64| (3.0 * a).sin() + b * b;
        assert!(double_difference(separable, 0.1, 0.2, 0.05, 0.03).abs() < 1e-15);
    }

    #[test]
    fn zygmund_of_constant_is_zero() {
        let w = AnalyticFamily::Constant { level: 1.0 }.density();
        assert_eq!(zygmund_constant_estimate(&w, &ProbeGrid::one_dimensional()).unwrap().constant_estimate, 0.0);
        let w2 = SpectralDensity::analytic(2, |_| 1.0);
        let probe = ProbeGrid { points_per_axis: 16, j_max: 4 };
        assert_eq!(zygmund2_constant_estimate(&w2, &probe).unwrap().constant_estimate, 0.0);
    }

    #[test]
    fn sin_squared_constant_within_second_derivative_bound() {
        let w = AnalyticFamily::SinSquared.density();
        let coarse = zygmund_constant_estimate(&w, &ProbeGrid { points_per_axis: 512, j_max: 6 }).unwrap();
        let fine = zygmund_constant_estimate(&w, &ProbeGrid::one_dimensional()).unwrap();
        assert!(fine.constant_estimate <= 4.0 * PI * PI);
        assert_eq!(coarse.constant_estimate, fine.constant_estimate);
        assert!(fine.stable);
        let r = fine.worst_point;
        let ratio = second_difference(|t| w.eval_raw(&[t]), r[0], r[1]).abs() / r[1];
        assert_eq!(ratio, fine.constant_estimate);
    }

    #[test]
    fn mixed_product_has_finite_constant() {
        // Delta_{2,2}[sin sin] = 16 sin^2(pi h1) sin^2(pi h2) sin sin
        let w = SpectralDensity::analytic(2, |t| (2.0 * PI * t[0]).sin() * (2.0 * PI * t[1]).sin());
        let probe = ProbeGrid { points_per_axis: 32, j_max: 6 };
        let r = zygmund2_constant_estimate(&w, &probe).unwrap();
        // sin^2(pi h) / h peaks at h = 1/2 among dyadic steps
        let bound = 16.0 * 2.0 * 2.0;
        assert!(r.constant_estimate <= bound + 1e-9, "{}", r.constant_estimate);
        assert!(r.stable);
    }

    #[test]
    fn square_root_cusp_is_flagged() {
        let w = SpectralDensity::analytic(1, |t| t[0].abs().sqrt());
        assert!(!zygmund_constant_estimate(&w, &ProbeGrid::one_dimensional()).unwrap().stable);
        let k = SpectralDensity::analytic(1, |t| t[0].abs());
        assert!(zygmund_constant_estimate(&k, &ProbeGrid::one_dimensional()).unwrap().stable);
    }

    #[test]
    fn cross_term_of_separable_density_vanishes() {
        let w = AnalyticFamily::AbsSum.density();
        assert!(cross_term_ratio(&w, 32).unwrap().max_ratio < 1e-12);
    }

    #[test]
    fn bounded_tails_give_stable_zygmund_estimates() {
        let r = 400;
        let c: Vec<f64> = (0..=r).map(|n| 1.0 / (1.0 + (n * n) as f64)).collect();
        let w = density_from_covariances(&seq(&c, 2.0 / r as f64)).unwrap();
        let a = zygmund_constant_estimate(&w, &ProbeGrid { points_per_axis: 512, j_max: 6 }).unwrap();
        let b = zygmund_constant_estimate(&w, &ProbeGrid { points_per_axis: 512, j_max: 12 }).unwrap();
        assert!(b.constant_estimate <= 1.1 * a.constant_estimate);
    }
}
