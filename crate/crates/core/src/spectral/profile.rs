//! Reciprocal-density integrals over the torus with dyadic exclusion shells
//! around the zeros of the density, and the divergence classifier built on
//! top of them.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::SpectralDensity;
use crate::error::{Error, Result};
use crate::quadrature::{Cubature, Cube, QuadratureSpec};

/// Fraction of scan points allowed at the zero level before the density is
/// declared to vanish on a set of positive measure.
const ZERO_EVERYWHERE_FRACTION: f64 = 0.25;
/// A shell layer counts as resolved when the density on it stays above this
/// multiple of the density's certified evaluation error.
const RESOLUTION_FACTOR: f64 = 4.0;
/// Divergence threshold on increments, relative to the first shell integral.
const DIVERGENCE_FRACTION: f64 = 0.05;
/// Increment ratios below this value count as geometric decay.
const DECAY_RATIO: f64 = 0.75;
/// Relative agreement required between successive extrapolated limits.
const RICHARDSON_AGREEMENT: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Rigid,
    NonRigid,
    Inconclusive,
}

/// Which rule produced a verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Rationale {
    ZeroProcess,
    NoZeros,
    DivergentProfile,
    ConvergentProfile,
    InsufficientResolution,
    Undecided,
}

impl fmt::Display for Rationale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Rationale::ZeroProcess => "ZERO_PROCESS",
            Rationale::NoZeros => "NO_ZEROS",
            Rationale::DivergentProfile => "DIVERGENT_PROFILE",
            Rationale::ConvergentProfile => "CONVERGENT_PROFILE",
            Rationale::InsufficientResolution => "INSUFFICIENT_RESOLUTION",
            Rationale::Undecided => "UNDECIDED",
        };
        f.write_str(s)
    }
}

/// Reciprocal-density integrals `I_k` over the torus minus the sup-norm
/// neighbourhoods of radius `radii[k-1]` around the detected zeros.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShellProfile {
    pub zeros: Vec<Vec<f64>>,
    pub radii: Vec<f64>,
    pub cumulative: Vec<f64>,
    /// Smallest density value seen on each layer; layer 0 lies outside the
    /// first shell, layer `k` between shells `k` and `k + 1`.
    pub layer_min_density: Vec<f64>,
    pub evals: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RigidityVerdict {
    pub verdict: Verdict,
    pub distance: f64,
    pub profile: Vec<f64>,
    /// Number of leading profile entries the classifier was allowed to use.
    pub resolved_depth: usize,
    /// Estimate of the full reciprocal-density integral (convergent case).
    pub inverse_integral: Option<f64>,
    pub zeros: Vec<Vec<f64>>,
    pub rationale: Rationale,
}

fn scan_points(dim: usize, n: usize) -> Vec<Vec<f64>> {
    let total = n.pow(dim as u32);
    (0..total)
        .map(|mut k| {
            let mut t = vec![0.0; dim];
            for slot in t.iter_mut().rev() {
                *slot = -0.5 + (k % n) as f64 / n as f64;
                k /= n;
            }
            t
        })
        .collect()
}

fn wrap(t: f64) -> f64 {
    (t + 0.5).rem_euclid(1.0) - 0.5
}

fn axis_dist(t: f64, z: f64) -> f64 {
    let d = (t - z).rem_euclid(1.0);
    d.min(1.0 - d)
}

fn torus_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| axis_dist(*x, *y)).fold(0.0, f64::max)
}

/// Zeros of the density: local minima of a grid scan, refined by a compass
/// search, kept when the refined value is within the certified error of zero.
pub fn detect_zeros(omega: &SpectralDensity, quad: &QuadratureSpec) -> Result<Vec<Vec<f64>>> {
    let d = omega.dim();
    let floor = if d == 1 { 64 } else { 32 };
    let n = (2 * quad.degree).max(floor);
    let pts = scan_points(d, n);
    let vals: Vec<f64> = pts.iter().map(|p| omega.eval_raw(p)).collect();
    let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max <= 0.0 {
        return Err(Error::ZeroEverywhere { fraction: 1.0 });
    }
    let tol = 2.0 * omega.uncertainty() + 1e-12 * max;
    let at_zero = vals.iter().filter(|v| **v <= tol).count();
    let fraction = at_zero as f64 / vals.len() as f64;
    if fraction > ZERO_EVERYWHERE_FRACTION {
        return Err(Error::ZeroEverywhere { fraction });
    }

    let idx_of = |coords: &[usize]| coords.iter().fold(0usize, |acc, c| acc * n + c);
    let mut zeros: Vec<(Vec<f64>, f64)> = Vec::new();
    for (k, p) in pts.iter().enumerate() {
        let mut coords = vec![0usize; d];
        let mut rem = k;
        for slot in coords.iter_mut().rev() {
            *slot = rem % n;
            rem /= n;
        }
        let v = vals[k];
        let mut is_min = true;
        for off in 0..3usize.pow(d as u32) {
            let mut o = off;
            let mut nb = coords.clone();
            let mut centre = true;
            for slot in nb.iter_mut() {
                let step = o % 3;
                o /= 3;
                if step != 1 {
                    centre = false;
                }
                *slot = (*slot + n + step - 1) % n;
            }
            if !centre && vals[idx_of(&nb)] < v {
                is_min = false;
                break;
            }
        }
        if !is_min {
            continue;
        }
        let (x, fx) = compass_search(omega, p.clone(), v, 1.0 / n as f64);
        if fx > tol {
            continue;
        }
        match zeros.iter_mut().find(|(z, _)| torus_dist(z, &x) < 1.0 / n as f64) {
            Some(existing) if existing.1 <= fx => {}
            Some(existing) => *existing = (x, fx),
            None => zeros.push((x, fx)),
        }
    }
    Ok(zeros.into_iter().map(|(z, _)| z).collect())
}

fn compass_search(omega: &SpectralDensity, mut x: Vec<f64>, mut fx: f64, mut step: f64) -> (Vec<f64>, f64) {
    let mut iters = 0;
    while step > 1e-13 && iters < 20_000 {
        iters += 1;
        let mut moved = false;
        for axis in 0..x.len() {
            for sign in [-1.0, 1.0] {
                let mut y = x.clone();
                y[axis] = wrap(y[axis] + sign * step);
                let fy = omega.eval_raw(&y);
                if fy < fx {
                    x = y;
                    fx = fy;
                    moved = true;
                }
            }
        }
        if !moved {
            step *= 0.5;
        }
    }
    (x, fx)
}

/// Range of the distance-to-zero-set function over a cell: exact lower
/// bound, upper bound from the nearest zero's farthest corner.
fn distance_range(cube: &Cube, zeros: &[Vec<f64>]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::INFINITY;
    for z in zeros {
        let mut zmin = 0.0f64;
        let mut zmax = 0.0f64;
        for (i, &zi) in z.iter().enumerate() {
            let a = cube.lo[i];
            let b = a + cube.size;
            let contains = |t: f64| (-1..=1).any(|k| {
                let s = t + k as f64;
                s >= a && s <= b
            });
            let amin = if contains(zi) { 0.0 } else { axis_dist(a, zi).min(axis_dist(b, zi)) };
            let amax = if contains(zi + 0.5) { 0.5 } else { axis_dist(a, zi).max(axis_dist(b, zi)) };
            zmin = zmin.max(amin);
            zmax = zmax.max(amax);
        }
        lo = lo.min(zmin);
        hi = hi.min(zmax);
    }
    (lo, hi)
}

fn layer_of(d: f64, radii: &[f64]) -> usize {
    radii.iter().position(|r| d >= *r).unwrap_or(radii.len())
}

/// Nondecreasing sequence `I_1 <= ... <= I_K` of reciprocal-density integrals
/// with shrinking exclusion shells (`K = quad.shell_depth`).
pub fn inverse_density_profile(omega: &SpectralDensity, quad: &QuadratureSpec) -> Result<ShellProfile> {
    quad.validate()?;
    let d = omega.dim();
    let depth = quad.shell_depth;
    let radii: Vec<f64> = (1..=depth).map(|k| 0.5f64.powi(k as i32 + 1)).collect();
    let snap = 0.5f64.powi(depth as i32 + 2);
    let zeros: Vec<Vec<f64>> = detect_zeros(omega, quad)?
        .into_iter()
        .map(|z| z.into_iter().map(|t| wrap((t / snap).round() * snap)).collect())
        .collect();

    let integrand = |t: &[f64]| 1.0 / omega.eval(t).max(1e-300);
    let mut cubature = Cubature::new(quad);
    let root = Cube { lo: vec![-0.5; d], size: 1.0 };

    if zeros.is_empty() {
        let e = cubature.integrate(&integrand, &root)?;
        return Ok(ShellProfile {
            zeros,
            radii,
            cumulative: vec![e.value; depth],
            layer_min_density: vec![1.0 / e.max_integrand; depth],
            evals: cubature.evals(),
        });
    }

    let cap = depth as u32 + 12;
    let mut layer_sum = vec![0.0; depth];
    let mut layer_max = vec![f64::NEG_INFINITY; depth];
    let mut stack = vec![(root, 0u32)];
    while let Some((cube, level)) = stack.pop() {
        let (mind, maxd) = distance_range(&cube, &zeros);
        let outer = layer_of(maxd * (1.0 - 1e-12), &radii);
        if outer == depth {
            continue;
        }
        let inner = layer_of(mind, &radii);
        let split = level < cap && (inner != outer || cube.size > 0.5 * mind);
        if split {
            // Reverse so that children are visited in their natural order.
            for kid in cube.children().into_iter().rev() {
                stack.push((kid, level + 1));
            }
            continue;
        }
        let layer = if inner == outer {
            inner
        } else {
            let centre: Vec<f64> = cube.lo.iter().map(|a| a + 0.5 * cube.size).collect();
            let dc = zeros.iter().map(|z| torus_dist(z, &centre)).fold(f64::INFINITY, f64::min);
            layer_of(dc, &radii)
        };
        if layer == depth {
            continue;
        }
        let e = cubature.integrate(&integrand, &cube)?;
        layer_sum[layer] += e.value;
        layer_max[layer] = layer_max[layer].max(e.max_integrand);
    }
    let mut cumulative = Vec::with_capacity(depth);
    let mut acc = 0.0;
    for s in &layer_sum {
        acc += s;
        cumulative.push(acc);
    }
    Ok(ShellProfile {
        zeros,
        radii,
        cumulative,
        layer_min_density: layer_max.iter().map(|m| 1.0 / m).collect(),
        evals: cubature.evals(),
    })
}

/// Rigid when the reciprocal-density integral diverges, non-rigid with the
/// interpolation distance otherwise.
pub fn classify_rigidity(omega: &SpectralDensity, quad: &QuadratureSpec) -> Result<RigidityVerdict> {
    if omega.is_zero_process() {
        return Ok(RigidityVerdict {
            verdict: Verdict::Rigid,
            distance: 0.0,
            profile: Vec::new(),
            resolved_depth: 0,
            inverse_integral: None,
            zeros: Vec::new(),
            rationale: Rationale::ZeroProcess,
        });
    }
    let profile = inverse_density_profile(omega, quad)?;
    let mut out = RigidityVerdict {
        verdict: Verdict::Inconclusive,
        distance: 0.0,
        profile: profile.cumulative.clone(),
        resolved_depth: profile.cumulative.len(),
        inverse_integral: None,
        zeros: profile.zeros.clone(),
        rationale: Rationale::Undecided,
    };
    if profile.zeros.is_empty() {
        let total = profile.cumulative[0];
        out.verdict = Verdict::NonRigid;
        out.distance = total.powf(-0.5);
        out.inverse_integral = Some(total);
        out.rationale = Rationale::NoZeros;
        return Ok(out);
    }

    let unc = omega.uncertainty();
    let resolved = if unc > 0.0 {
        profile
            .layer_min_density
            .iter()
            .take_while(|m| **m >= RESOLUTION_FACTOR * unc)
            .count()
    } else {
        profile.cumulative.len()
    };
    out.resolved_depth = resolved;
    let usable = &profile.cumulative[..resolved];
    let increments: Vec<f64> = usable.windows(2).map(|w| w[1] - w[0]).collect();
    if increments.len() < 3 {
        out.rationale = Rationale::InsufficientResolution;
        return Ok(out);
    }
    let m = 3.max(resolved / 2).min(increments.len());
    let window = &increments[increments.len() - m..];
    let ratios: Vec<f64> = window.windows(2).map(|w| w[1] / w[0]).collect();
    let threshold = DIVERGENCE_FRACTION * usable[0];

    if window.iter().all(|d| *d >= threshold) && ratios.iter().all(|r| *r >= DECAY_RATIO) {
        out.verdict = Verdict::Rigid;
        out.rationale = Rationale::DivergentProfile;
        return Ok(out);
    }
    if window.iter().all(|d| *d > 0.0) && ratios.iter().all(|r| *r < DECAY_RATIO) {
        let rho = ratios.iter().map(|r| r.ln()).sum::<f64>() / ratios.len() as f64;
        let rho = rho.exp();
        let tail = rho / (1.0 - rho);
        let k = usable.len();
        let last = usable[k - 1] + window[m - 1] * tail;
        let prev = usable[k - 2] + window[m - 2] * tail;
        if (last - prev).abs() <= RICHARDSON_AGREEMENT * last {
            out.verdict = Verdict::NonRigid;
            out.distance = last.powf(-0.5);
            out.inverse_integral = Some(last);
            out.rationale = Rationale::ConvergentProfile;
        }
    }
    Ok(out)
}

/// `(int omega^{-1} dm)^{-1/2}`, zero when the integral diverges.
pub fn kolmogorov_distance(omega: &SpectralDensity, quad: &QuadratureSpec) -> Result<f64> {
    let v = classify_rigidity(omega, quad)?;
    match v.verdict {
        Verdict::Rigid => Ok(0.0),
        Verdict::NonRigid => Ok(v.distance),
        Verdict::Inconclusive => Err(Error::Inconclusive(v.rationale.to_string())),
    }
}
