//! Quadrature primitives: Gauss-Legendre rules, oscillation-aware cell
//! splitting in one dimension, and adaptive cubature on dyadic cubes.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scheme {
    GaussLegendreTensor,
    AdaptiveSimpson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadratureSpec {
    pub scheme: Scheme,
    /// Points per axis of the tensor rule.
    pub degree: usize,
    /// Number of dyadic exclusion shells around density zeros.
    pub shell_depth: usize,
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Integrand evaluation budget for a single adaptive integral.
    pub max_evals: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            scheme: Scheme::GaussLegendreTensor,
            degree: 8,
            shell_depth: 10,
            abs_tol: 1e-10,
            rel_tol: 1e-10,
            max_evals: 50_000_000,
        }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.degree < 2 {
            return invalid(format!("quadrature degree {} < 2", self.degree));
        }
        if self.shell_depth < 1 {
            return invalid("shell_depth must be at least 1");
        }
        if !(self.abs_tol > 0.0 && self.rel_tol > 0.0) {
            return invalid("quadrature tolerances must be positive");
        }
        Ok(())
    }

    pub fn rule(&self) -> GaussLegendre {
        GaussLegendre::new(self.degree)
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            // Tricomi initial guess, then Newton on P_n.
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut acc = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(mid + half * x);
        }
        acc * half
    }

    /// Integrates over `[a, b]` split into cells no wider than `width`.
    pub fn integrate_cells<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, width: f64, mut f: F) -> f64 {
        if b <= a {
            return 0.0;
        }
        let cells = ((b - a) / width).ceil().max(1.0) as usize;
        let step = (b - a) / cells as f64;
        (0..cells)
            .map(|k| {
                let lo = a + step * k as f64;
                let hi = if k + 1 == cells { b } else { lo + step };
                self.integrate(lo, hi, &mut f)
            })
            .sum()
    }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let dp = n as f64 * (x * p - p0) / (x * x - 1.0);
    (p, dp)
}

/// Axis-aligned cube `[lo, lo + size]^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cube {
    pub lo: Vec<f64>,
    pub size: f64,
}

impl Cube {
    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn volume(&self) -> f64 {
        self.size.powi(self.dim() as i32)
    }

    pub fn children(&self) -> Vec<Cube> {
        let d = self.dim();
        let half = 0.5 * self.size;
        (0..1usize << d)
            .map(|mask| Cube {
                lo: (0..d)
                    .map(|i| self.lo[i] + if mask >> i & 1 == 1 { half } else { 0.0 })
                    .collect(),
                size: half,
            })
            .collect()
    }
}

/// Value of an integral over a region together with the smallest integrand
/// value seen at any evaluation node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellEstimate {
    pub value: f64,
    pub min_integrand: f64,
    pub max_integrand: f64,
}

impl CellEstimate {
    fn zero() -> Self {
        Self { value: 0.0, min_integrand: f64::INFINITY, max_integrand: f64::NEG_INFINITY }
    }

    fn add(&mut self, other: CellEstimate) {
        self.value += other.value;
        self.min_integrand = self.min_integrand.min(other.min_integrand);
        self.max_integrand = self.max_integrand.max(other.max_integrand);
    }
}

/// Adaptive integrator over cubes in one or two dimensions.
pub struct Cubature<'a> {
    spec: &'a QuadratureSpec,
    rule: GaussLegendre,
    evals: usize,
    max_level: u32,
}

impl<'a> Cubature<'a> {
    pub fn new(spec: &'a QuadratureSpec) -> Self {
        Self { spec, rule: spec.rule(), evals: 0, max_level: 30 }
    }

    pub fn evals(&self) -> usize {
        self.evals
    }

    /// Integrates `f` over `cube`, with an absolute tolerance proportional to
    /// the cube volume (`abs_tol` is the tolerance over unit volume).
    pub fn integrate<F: Fn(&[f64]) -> f64>(&mut self, f: &F, cube: &Cube) -> Result<CellEstimate> {
        let tol = self.spec.abs_tol * cube.volume();
        match self.spec.scheme {
            Scheme::GaussLegendreTensor => {
                let est = self.tensor_rule(f, cube)?;
                self.refine(f, cube, est, tol, 0)
            }
            Scheme::AdaptiveSimpson => self.simpson(f, cube, tol),
        }
    }

    fn charge(&mut self, n: usize) -> Result<()> {
        self.evals += n;
        if self.evals > self.spec.max_evals {
            return Err(Error::QuadratureFailure { evals: self.evals });
        }
        Ok(())
    }

    fn tensor_rule<F: Fn(&[f64]) -> f64>(&mut self, f: &F, cube: &Cube) -> Result<CellEstimate> {
        let d = cube.dim();
        let n = self.rule.len();
        self.charge(n.pow(d as u32))?;
        let half = 0.5 * cube.size;
        let mut out = CellEstimate::zero();
        let mut point = vec![0.0; d];
        let mut idx = vec![0usize; d];
        loop {
            let mut w = 1.0;
            for i in 0..d {
                point[i] = cube.lo[i] + half * (1.0 + self.rule.nodes[idx[i]]);
                w *= self.rule.weights[idx[i]];
            }
            let v = f(&point);
            out.value += w * v;
            out.min_integrand = out.min_integrand.min(v);
            out.max_integrand = out.max_integrand.max(v);
            let mut axis = 0;
            loop {
                if axis == d {
                    out.value *= half.powi(d as i32);
                    return Ok(out);
                }
                idx[axis] += 1;
                if idx[axis] < n {
                    break;
                }
                idx[axis] = 0;
                axis += 1;
            }
        }
    }

    fn refine<F: Fn(&[f64]) -> f64>(
        &mut self,
        f: &F,
        cube: &Cube,
        coarse: CellEstimate,
        tol: f64,
        level: u32,
    ) -> Result<CellEstimate> {
        let kids = cube.children();
        let mut fine = CellEstimate::zero();
        let mut kid_est = Vec::with_capacity(kids.len());
        for k in &kids {
            let e = self.tensor_rule(f, k)?;
            fine.add(e);
            kid_est.push(e);
        }
        let err = (fine.value - coarse.value).abs();
        if err <= tol.max(self.spec.rel_tol * fine.value.abs()) || level >= self.max_level {
            return Ok(fine);
        }
        let kid_tol = tol / kids.len() as f64;
        let mut out = CellEstimate::zero();
        for (k, e) in kids.iter().zip(kid_est) {
            out.add(self.refine(f, k, e, kid_tol, level + 1)?);
        }
        Ok(out)
    }

    fn simpson<F: Fn(&[f64]) -> f64>(&mut self, f: &F, cube: &Cube, tol: f64) -> Result<CellEstimate> {
        match cube.dim() {
            1 => {
                let a = cube.lo[0];
                let b = a + cube.size;
                let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
                let v = self.simpson_1d(
                    &mut |x| {
                        let y = f(&[x]);
                        min = min.min(y);
                        max = max.max(y);
                        y
                    },
                    a,
                    b,
                    tol,
                )?;
                Ok(CellEstimate { value: v, min_integrand: min, max_integrand: max })
            }
            2 => {
                let (a0, a1) = (cube.lo[0], cube.lo[1]);
                let s = cube.size;
                let inner_tol = tol / s;
                let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
                let spec = self.spec;
                // Iterated integration; inner integrals share the evaluation budget.
                let mut inner = Cubature { spec, rule: self.rule.clone(), evals: self.evals, max_level: self.max_level };
                let mut outer_int = Cubature { spec, rule: self.rule.clone(), evals: 0, max_level: self.max_level };
                let mut failure = None;
                let v = {
                    let mut outer = |x: f64| -> f64 {
                        if failure.is_some() {
                            return 0.0;
                        }
                        let r = inner.simpson_1d(
                            &mut |y| {
                                let v = f(&[x, y]);
                                min = min.min(v);
                                max = max.max(v);
                                v
                            },
                            a1,
                            a1 + s,
                            inner_tol,
                        );
                        r.unwrap_or_else(|e| {
                            failure = Some(e);
                            0.0
                        })
                    };
                    outer_int.simpson_1d(&mut outer, a0, a0 + s, tol)
                };
                self.evals = inner.evals + outer_int.evals;
                if let Some(e) = failure {
                    return Err(e);
                }
                let v = v?;
                if self.evals > self.spec.max_evals {
                    return Err(Error::QuadratureFailure { evals: self.evals });
                }
                Ok(CellEstimate { value: v, min_integrand: min, max_integrand: max })
            }
            d => invalid(format!("adaptive Simpson supports dimensions 1 and 2, got {d}")),
        }
    }

    fn simpson_1d<F: FnMut(f64) -> f64>(&mut self, f: &mut F, a: f64, b: f64, tol: f64) -> Result<f64> {
        let fa = f(a);
        let fb = f(b);
        let m = 0.5 * (a + b);
        let fm = f(m);
        self.charge(3)?;
        let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
        self.simpson_step(f, a, b, fa, fm, fb, whole, tol, 0)
    }

    #[allow(clippy::too_many_arguments)]
    fn simpson_step<F: FnMut(f64) -> f64>(
        &mut self,
        f: &mut F,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        level: u32,
    ) -> Result<f64> {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        self.charge(2)?;
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if level >= 48 || delta.abs() <= 15.0 * tol.max(self.spec.rel_tol * (left + right).abs()) {
            return Ok(left + right + delta / 15.0);
        }
        Ok(self.simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, level + 1)?
            + self.simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, level + 1)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let rule = GaussLegendre::new(6);
        // degree 11 polynomial is exact for 6 points
        let v = rule.integrate(-1.0, 2.0, |x| x.powi(11) + 3.0 * x.powi(4));
        let exact = (2f64.powi(12) - 1.0) / 12.0 + 3.0 * (32.0 + 1.0) / 5.0;
        assert!((v - exact).abs() < 1e-10 * exact.abs());
        let wsum: f64 = rule.weights().iter().sum();
        assert!((wsum - 2.0).abs() < 1e-14);
    }

    #[test]
    fn odd_degree_rule_has_center_node() {
        let rule = GaussLegendre::new(5);
        assert_eq!(rule.nodes()[2], 0.0);
        assert!((rule.weights()[2] - 128.0 / 225.0).abs() < 1e-14);
    }

    #[test]
    fn cells_resolve_oscillation() {
        let rule = GaussLegendre::new(10);
        let v = rule.integrate_cells(0.0, 50.0, 0.5, |x| (2.0 * std::f64::consts::PI * x).sin().powi(2));
        assert!((v - 25.0).abs() < 1e-10);
    }

    #[test]
    fn both_schemes_agree_on_peaked_integrand() {
        let f = |p: &[f64]| 1.0 / (1e-2 + p[0] * p[0]);
        let exact = 2.0 * (0.5f64 / 0.1).atan() / 0.1;
        for scheme in [Scheme::GaussLegendreTensor, Scheme::AdaptiveSimpson] {
            let spec = QuadratureSpec { scheme, abs_tol: 1e-11, ..Default::default() };
            let mut c = Cubature::new(&spec);
            let e = c.integrate(&f, &Cube { lo: vec![-0.5], size: 1.0 }).unwrap();
            assert!((e.value - exact).abs() < 1e-8, "{scheme:?}: {}", e.value);
            assert!((e.min_integrand - 1.0 / (1e-2 + 0.25)).abs() < 0.2);
        }
    }

    #[test]
    fn two_dimensional_cubature() {
        let f = |p: &[f64]| (p[0] * p[1]).cos();
        // ∫_0^1∫_0^1 cos(xy) = Si(1)
        let si1 = 0.946_083_070_367_183_f64;
        for scheme in [Scheme::GaussLegendreTensor, Scheme::AdaptiveSimpson] {
            let spec = QuadratureSpec { scheme, abs_tol: 1e-11, ..Default::default() };
            let mut c = Cubature::new(&spec);
            let e = c.integrate(&f, &Cube { lo: vec![0.0, 0.0], size: 1.0 }).unwrap();
            assert!((e.value - si1).abs() < 1e-8, "{scheme:?}");
        }
    }

    #[test]
    fn budget_exhaustion_is_reported() {
        let spec = QuadratureSpec { max_evals: 100, abs_tol: 1e-14, ..Default::default() };
        let mut c = Cubature::new(&spec);
        let f = |p: &[f64]| 1.0 / p[0].abs().sqrt().max(1e-300);
        let r = c.integrate(&f, &Cube { lo: vec![-0.5], size: 1.0 });
        assert!(matches!(r, Err(Error::QuadratureFailure { .. })));
    }

    #[test]
    fn spec_validation() {
        assert!(QuadratureSpec::default().validate().is_ok());
        assert!(QuadratureSpec { degree: 1, ..Default::default() }.validate().is_err());
        assert!(QuadratureSpec { shell_depth: 0, ..Default::default() }.validate().is_err());
        assert!(QuadratureSpec { abs_tol: 0.0, ..Default::default() }.validate().is_err());
    }
}
