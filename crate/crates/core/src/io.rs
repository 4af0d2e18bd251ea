//! File formats: covariance column files (text and binary), density grids,
//! residual-variance profiles and sample batches.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::sampler::SampleBatch;
use crate::spectral::{lattice_points, CovarianceSequence, SpectralDensity};

const COV_MAGIC: &[u8; 8] = b"RGDCOV01";

/// Text column file: a `dim,radius,mean,tail_bound` header and its values,
/// then one `n1,...,nd,value` row per lattice point.
pub fn covariance_to_text(cov: &CovarianceSequence) -> String {
    let mut out = String::from("dim,radius,mean,tail_bound\n");
    writeln!(out, "{},{},{:.16e},{:.16e}", cov.dim(), cov.radius(), cov.mean(), cov.tail_bound()).unwrap();
    let names: Vec<String> = (1..=cov.dim()).map(|i| format!("n{i}")).collect();
    writeln!(out, "{},value", names.join(",")).unwrap();
    for (n, v) in lattice_points(cov.dim(), cov.radius()).zip(cov.values()) {
        let idx: Vec<String> = n.iter().map(|k| k.to_string()).collect();
        writeln!(out, "{},{:.16e}", idx.join(","), v).unwrap();
    }
    out
}

fn parse_err(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Parse(format!("covariance file line {line}: {msg}"))
}

pub fn covariance_from_text(text: &str) -> Result<CovarianceSequence> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'));
    let (_, header) = lines.next().ok_or_else(|| parse_err(1, "empty file"))?;
    if header.replace(' ', "") != "dim,radius,mean,tail_bound" {
        return Err(parse_err(1, "missing header"));
    }
    let (ln, meta) = lines.next().ok_or_else(|| parse_err(2, "missing metadata"))?;
    let fields: Vec<&str> = meta.split(',').map(str::trim).collect();
    if fields.len() != 4 {
        return Err(parse_err(ln + 1, "expected four metadata fields"));
    }
    let dim: usize = fields[0].parse().map_err(|e| parse_err(ln + 1, e))?;
    let radius: usize = fields[1].parse().map_err(|e| parse_err(ln + 1, e))?;
    let mean: f64 = fields[2].parse().map_err(|e| parse_err(ln + 1, e))?;
    let tail: f64 = match fields[3] {
        "inf" | "Infinity" => f64::INFINITY,
        s => s.parse().map_err(|e| parse_err(ln + 1, e))?,
    };
    if dim == 0 || dim > 3 {
        return Err(parse_err(ln + 1, format!("unsupported dimension {dim}")));
    }
    let side = 2 * radius + 1;
    let total = side.pow(dim as u32);
    let mut values = vec![f64::NAN; total];
    let (_, columns) = lines.next().ok_or_else(|| parse_err(3, "missing column header"))?;
    if columns.split(',').count() != dim + 1 {
        return Err(parse_err(3, "column header does not match dimension"));
    }
    for (ln, row) in lines {
        let f: Vec<&str> = row.split(',').map(str::trim).collect();
        if f.len() != dim + 1 {
            return Err(parse_err(ln + 1, "wrong number of columns"));
        }
        let mut idx = 0usize;
        for s in &f[..dim] {
            let k: i64 = s.parse().map_err(|e| parse_err(ln + 1, e))?;
            if k.unsigned_abs() as usize > radius {
                return Err(parse_err(ln + 1, format!("lag {k} outside radius {radius}")));
            }
            idx = idx * side + (k + radius as i64) as usize;
        }
        values[idx] = f[dim].parse().map_err(|e| parse_err(ln + 1, e))?;
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::Parse("covariance file does not cover every lag".into()));
    }
    CovarianceSequence::new(dim, radius, values, mean, tail)
}

pub fn covariance_to_bytes(cov: &CovarianceSequence) -> Vec<u8> {
    let mut out = Vec::with_capacity(48 + 8 * cov.values().len());
    out.extend_from_slice(COV_MAGIC);
    out.extend_from_slice(&(cov.dim() as u64).to_le_bytes());
    out.extend_from_slice(&(cov.radius() as u64).to_le_bytes());
    out.extend_from_slice(&cov.mean().to_le_bytes());
    out.extend_from_slice(&cov.tail_bound().to_le_bytes());
    for v in cov.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn covariance_from_bytes(bytes: &[u8]) -> Result<CovarianceSequence> {
    if bytes.len() < 40 || &bytes[..8] != COV_MAGIC || (bytes.len() - 40) % 8 != 0 {
        return Err(Error::Parse("not a binary covariance file".into()));
    }
    let word = |i: usize| -> [u8; 8] { bytes[8 + 8 * i..16 + 8 * i].try_into().expect("8 bytes") };
    let dim = u64::from_le_bytes(word(0)) as usize;
    let radius = u64::from_le_bytes(word(1)) as usize;
    let mean = f64::from_le_bytes(word(2));
    let tail = f64::from_le_bytes(word(3));
    let values: Vec<f64> = bytes[40..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    CovarianceSequence::new(dim, radius, values, mean, tail)
}

/// Reads either format, recognising the binary magic.
pub fn read_covariance(path: &Path) -> Result<CovarianceSequence> {
    let bytes = fs::read(path)?;
    if bytes.starts_with(COV_MAGIC) {
        covariance_from_bytes(&bytes)
    } else {
        let text = String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))?;
        covariance_from_text(&text)
    }
}

pub fn write_covariance(path: &Path, cov: &CovarianceSequence, binary: bool) -> Result<()> {
    if binary {
        fs::write(path, covariance_to_bytes(cov))?;
    } else {
        fs::write(path, covariance_to_text(cov))?;
    }
    Ok(())
}

pub fn grid_to_csv(dim: usize, grid: &[(Vec<f64>, f64)]) -> String {
    let mut out = String::new();
    let names: Vec<String> = (1..=dim).map(|i| format!("theta{i}")).collect();
    writeln!(out, "{},omega", names.join(",")).unwrap();
    for (t, w) in grid {
        let coords: Vec<String> = t.iter().map(|x| format!("{x:.16e}")).collect();
        writeln!(out, "{},{:.16e}", coords.join(","), w).unwrap();
    }
    out
}

/// Density on the uniform grid `theta_i = -1/2 + i / n`.
pub fn density_to_csv(omega: &SpectralDensity, points_per_axis: usize) -> String {
    grid_to_csv(omega.dim(), &omega.grid(points_per_axis))
}

pub fn profile_to_csv(profile: &[(usize, f64)]) -> String {
    let mut out = String::from("M,sigma2\n");
    for (m, s) in profile {
        writeln!(out, "{m},{s:.16e}").unwrap();
    }
    out
}

pub fn write_batch(path: &Path, batch: &SampleBatch) -> Result<()> {
    fs::write(path, batch.to_bytes())?;
    Ok(())
}

pub fn read_batch(path: &Path) -> Result<SampleBatch> {
    SampleBatch::from_bytes(&fs::read(path)?)
}
