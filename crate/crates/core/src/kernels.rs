//! Translation-invariant projection kernels `K_B(x, y) = FT[chi_B](x - y)`
//! for finite unions of half-open boxes `B`.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::quadrature::QuadratureSpec;
use crate::regularity::plateau_holds;

/// Disjoint union of axis-aligned boxes `[a_1, b_1) x ... x [a_d, b_d)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxUnion {
    dim: usize,
    boxes: Vec<Vec<(f64, f64)>>,
}

impl BoxUnion {
    pub fn new(boxes: Vec<Vec<(f64, f64)>>) -> Result<Self> {
        let Some(first) = boxes.first() else {
            return invalid("box union needs at least one box");
        };
        let dim = first.len();
        if dim == 0 {
            return invalid("boxes must have positive dimension");
        }
        for (i, b) in boxes.iter().enumerate() {
            if b.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: b.len() });
            }
            if b.iter().any(|(lo, hi)| !(lo.is_finite() && hi.is_finite() && hi > lo)) {
                return Err(Error::DegenerateBox(i));
            }
        }
        for i in 0..boxes.len() {
            for j in i + 1..boxes.len() {
                if overlap_volume(&boxes[i], &boxes[j], None) > 0.0 {
                    return Err(Error::OverlappingBoxes(i, j));
                }
            }
        }
        Ok(Self { dim, boxes })
    }

    /// Union of one-dimensional intervals.
    pub fn intervals(intervals: &[(f64, f64)]) -> Result<Self> {
        Self::new(intervals.iter().map(|iv| vec![*iv]).collect())
    }

    /// `(-1/2, 1/2)`, the symbol of the sine kernel.
    pub fn unit_interval() -> Self {
        Self::intervals(&[(-0.5, 0.5)]).expect("valid interval")
    }

    /// Parses `[[a, b], ...]` (intervals) or `[[[a1, b1], [a2, b2]], ...]` (boxes).
    pub fn parse(literal: &str) -> Result<Self> {
        if let Ok(iv) = serde_json::from_str::<Vec<[f64; 2]>>(literal) {
            return Self::intervals(&iv.iter().map(|p| (p[0], p[1])).collect::<Vec<_>>());
        }
        match serde_json::from_str::<Vec<Vec<[f64; 2]>>>(literal) {
            Ok(b) => Self::new(b.into_iter().map(|bx| bx.into_iter().map(|p| (p[0], p[1])).collect()).collect()),
            Err(e) => Err(Error::Parse(format!("box union literal {literal:?}: {e}"))),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn boxes(&self) -> &[Vec<(f64, f64)>] {
        &self.boxes
    }

    pub fn volume(&self) -> f64 {
        self.boxes.iter().map(|b| b.iter().map(|(lo, hi)| hi - lo).product::<f64>()).sum()
    }

    /// Largest `|coordinate|` of the set, i.e. the bandlimit of the kernel.
    pub fn bandlimit(&self) -> f64 {
        self.boxes
            .iter()
            .flat_map(|b| b.iter().flat_map(|(lo, hi)| [lo.abs(), hi.abs()]))
            .fold(0.0, f64::max)
    }

    /// Per-axis extent `max b - min a`.
    pub fn extent(&self) -> Vec<f64> {
        (0..self.dim)
            .map(|i| {
                let lo = self.boxes.iter().map(|b| b[i].0).fold(f64::INFINITY, f64::min);
                let hi = self.boxes.iter().map(|b| b[i].1).fold(f64::NEG_INFINITY, f64::max);
                hi - lo
            })
            .collect()
    }

    /// `|B ∩ (B + shift)|`.
    pub fn autocorrelation(&self, shift: &[f64]) -> f64 {
        let mut acc = 0.0;
        for p in &self.boxes {
            for q in &self.boxes {
                acc += overlap_volume(p, q, Some(shift));
            }
        }
        acc
    }

    /// Cartesian product of two box unions.
    pub fn product(&self, other: &BoxUnion) -> BoxUnion {
        let mut boxes = Vec::new();
        for p in &self.boxes {
            for q in &other.boxes {
                boxes.push(p.iter().chain(q).cloned().collect());
            }
        }
        BoxUnion { dim: self.dim + other.dim, boxes }
    }
}

fn overlap_volume(p: &[(f64, f64)], q: &[(f64, f64)], shift: Option<&[f64]>) -> f64 {
    let mut v = 1.0;
    for (i, ((a, b), (c, d))) in p.iter().zip(q).enumerate() {
        let s = shift.map_or(0.0, |s| s[i]);
        let len = b.min(d + s) - a.max(c + s);
        if len <= 0.0 {
            return 0.0;
        }
        v *= len;
    }
    v
}

/// `sin(pi x) / (pi x)` with the removable singularity filled in.
pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - (PI * x).powi(2) / 6.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Fourier transform of the indicator of `B` at `xi`, with the convention
/// `f^(xi) = int f(x) e^{-i 2 pi x.xi} dx`.
pub fn indicator_ft(b: &BoxUnion, xi: &[f64]) -> Complex<f64> {
    assert_eq!(xi.len(), b.dim, "frequency has wrong dimension");
    let mut acc = Complex::new(0.0, 0.0);
    for bx in &b.boxes {
        let mut term = Complex::new(1.0, 0.0);
        for ((lo, hi), x) in bx.iter().zip(xi) {
            // (e^{-i2πxa} - e^{-i2πxb}) / (i2πx) = e^{-iπx(a+b)} (b-a) sinc(x(b-a))
            let phase = Complex::from_polar(1.0, -PI * x * (lo + hi));
            term *= phase * ((hi - lo) * sinc(x * (hi - lo)));
        }
        acc += term;
    }
    acc
}

/// Projection kernel determined by its symbol set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ProjectionKernel {
    Box(BoxUnion),
    Tensor(Vec<ProjectionKernel>),
}

impl ProjectionKernel {
    /// Dyson sine kernel `sin(pi z) / (pi z)`.
    pub fn sine() -> Self {
        ProjectionKernel::Box(BoxUnion::unit_interval())
    }

    pub fn tensor_sine() -> Self {
        ProjectionKernel::Tensor(vec![Self::sine(), Self::sine()])
    }

    pub fn dim(&self) -> usize {
        match self {
            ProjectionKernel::Box(b) => b.dim(),
            ProjectionKernel::Tensor(f) => f.iter().map(|k| k.dim()).sum(),
        }
    }

    /// The symbol set as a single box union (products expanded).
    pub fn symbol(&self) -> BoxUnion {
        match self {
            ProjectionKernel::Box(b) => b.clone(),
            ProjectionKernel::Tensor(f) => {
                let mut it = f.iter().map(|k| k.symbol());
                let first = it.next().expect("tensor kernel has factors");
                it.fold(first, |acc, s| acc.product(&s))
            }
        }
    }

    pub fn factors(&self) -> Option<&[ProjectionKernel]> {
        match self {
            ProjectionKernel::Tensor(f) => Some(f),
            ProjectionKernel::Box(_) => None,
        }
    }

    /// `K(0, 0) = |B|`.
    pub fn diagonal(&self) -> f64 {
        match self {
            ProjectionKernel::Box(b) => b.volume(),
            ProjectionKernel::Tensor(f) => f.iter().map(|k| k.diagonal()).product(),
        }
    }

    pub fn bandlimit(&self) -> f64 {
        match self {
            ProjectionKernel::Box(b) => b.bandlimit(),
            ProjectionKernel::Tensor(f) => f.iter().map(|k| k.bandlimit()).fold(0.0, f64::max),
        }
    }

    /// Kernel as a function of the displacement `z = x - y`.
    pub fn at_displacement(&self, z: &[f64]) -> Complex<f64> {
        match self {
            ProjectionKernel::Box(b) => indicator_ft(b, z),
            ProjectionKernel::Tensor(f) => {
                let mut offset = 0;
                let mut acc = Complex::new(1.0, 0.0);
                for k in f {
                    let d = k.dim();
                    acc *= k.at_displacement(&z[offset..offset + d]);
                    offset += d;
                }
                acc
            }
        }
    }

    pub fn abs2_at_displacement(&self, z: &[f64]) -> f64 {
        self.at_displacement(z).norm_sqr()
    }
}

/// `K(x, y)`.
pub fn kernel_eval(k: &ProjectionKernel, x: &[f64], y: &[f64]) -> Result<Complex<f64>> {
    let d = k.dim();
    for p in [x, y] {
        if p.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: p.len() });
        }
    }
    let z: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    Ok(k.at_displacement(&z))
}

/// Value with a bound on its absolute error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounded {
    pub value: f64,
    pub error_bound: f64,
}

/// Number of half-period cells integrated explicitly before the analytic
/// remainder takes over.
const TAIL_CELLS: usize = 4000;

/// `int_{|xi| >= r} |FT[chi_B](xi)|^2 dxi` for one-dimensional `B`.
pub fn tail_energy(b: &BoxUnion, r: f64, quad: &QuadratureSpec) -> Result<Bounded> {
    quad.validate()?;
    if b.dim() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, got: b.dim() });
    }
    if !(r >= 0.0) {
        return invalid(format!("tail radius must be nonnegative, got {r}"));
    }
    let width = 0.5 / b.extent()[0];
    let r_max = r + width * TAIL_CELLS as f64;
    let rule = quad.rule();
    let f = |x: f64| indicator_ft(b, &[x]).norm_sqr();
    let inner = rule.integrate_cells(r, r_max, width, f);
    let check = crate::quadrature::GaussLegendre::new(quad.degree + 4).integrate_cells(r, r_max, width, f);

    // Beyond r_max, |FT|^2 = P(xi) / (4 pi^2 xi^2) with P a trigonometric
    // polynomial whose mean is the sum of squared endpoint coefficients.
    let mut coef: BTreeMap<i64, f64> = BTreeMap::new();
    for bx in b.boxes() {
        let (lo, hi) = bx[0];
        *coef.entry((lo * 1e12).round() as i64).or_default() += 1.0;
        *coef.entry((hi * 1e12).round() as i64).or_default() -= 1.0;
    }
    let mean_p: f64 = coef.values().map(|c| c * c).sum();
    let max_p: f64 = coef.values().map(|c| c.abs()).sum::<f64>().powi(2);
    let remainder = mean_p / (4.0 * PI * PI * r_max);
    let envelope = max_p / (4.0 * PI * PI * r_max);

    Ok(Bounded {
        value: 2.0 * (inner + remainder),
        error_bound: 2.0 * ((inner - check).abs() + envelope),
    })
}

/// `int |FT[chi_B]|^2`, which equals `|B|` for a projection symbol.
pub fn plancherel_energy(b: &BoxUnion, quad: &QuadratureSpec) -> Result<Bounded> {
    tail_energy(b, 0.0, quad)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailCondition {
    /// `(R, R * tail_energy(R))` over the probe grid.
    pub values: Vec<(f64, f64)>,
    pub sup_estimate: f64,
    pub holds: bool,
}

/// `sup_R R * tail_energy(B, R)` over `r_grid`, bounded by the plateau rule.
pub fn fourier_tail_condition(b: &BoxUnion, r_grid: &[f64], quad: &QuadratureSpec) -> Result<TailCondition> {
    let mut values = Vec::with_capacity(r_grid.len());
    for &r in r_grid {
        values.push((r, r * tail_energy(b, r, quad)?.value));
    }
    let series: Vec<f64> = values.iter().map(|v| v.1).collect();
    Ok(TailCondition {
        sup_estimate: series.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        holds: plateau_holds(&series),
        values,
    })
}
