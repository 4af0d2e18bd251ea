//! Experiment configuration, orchestration and report emission.
//!
//! A configuration names a scenario; the driver runs the spectral verdict,
//! the covariance route, the regularity check and the finite-lag predictor,
//! then cross-checks them before writing a versioned report.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dppcov::{count_covariance, count_mean, covariance_sequence, kernel_count_density, CountProcessSpec};
use crate::error::{invalid, Error, Result};
use crate::io;
use crate::kernels::{BoxUnion, ProjectionKernel};
use crate::predictor::residual_variance_profile;
use crate::quadrature::QuadratureSpec;
use crate::regularity::{sufficient_rigidity_check, SufficiencyReport};
use crate::sampler::{empirical_covariance, mean_with_stderr, nystrom_discretize, sample_batch, window_counts, Estimate};
use crate::spectral::{
    classify_rigidity, density_from_covariances, AnalyticFamily, CovarianceSequence, Provenance, RigidityVerdict,
    SpectralDensity, Verdict,
};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scenario {
    Sine1D,
    TensorSine2D,
    AnalyticDensity,
    CustomKernel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonteCarloConfig {
    pub samples: usize,
    pub side: f64,
    pub grid: usize,
    /// Lags `0..=lags` along the first axis.
    pub lags: usize,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        Self { samples: 2000, side: 20.0, grid: 512, lags: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
    pub format: ReportFormat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    /// Covariance radius; defaults to `2 * m_max`.
    #[serde(default)]
    pub radius: Option<usize>,
    /// Largest predictor lag radius; defaults to 32 in 1-D and 8 in 2-D.
    #[serde(default)]
    pub m_max: Option<usize>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Density grid points per axis in the report.
    #[serde(default)]
    pub density_points: Option<usize>,
    /// Relative tolerance between `sigma^2_{M_max}` and `distance^2`.
    #[serde(default = "default_consistency")]
    pub consistency_tolerance: f64,
    /// Box-union literal for `CustomKernel`.
    #[serde(default)]
    pub kernel: Option<String>,
    /// Density family for `AnalyticDensity`.
    #[serde(default)]
    pub density: Option<AnalyticFamily>,
    #[serde(default)]
    pub quadrature: QuadratureSpec,
    #[serde(default)]
    pub monte_carlo: Option<MonteCarloConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_lambda() -> f64 {
    1.0
}

fn default_seed() -> u64 {
    42
}

fn default_consistency() -> f64 {
    0.1
}

/// `sine`, `tensor-sine`, or a box-union literal.
pub fn parse_kernel(s: &str) -> Result<ProjectionKernel> {
    match s.trim() {
        "sine" => Ok(ProjectionKernel::sine()),
        "tensor-sine" | "tensor_sine" => Ok(ProjectionKernel::tensor_sine()),
        lit => Ok(ProjectionKernel::Box(BoxUnion::parse(lit)?)),
    }
}

enum Pipeline {
    Kernel(CountProcessSpec),
    Analytic(AnalyticFamily),
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Parse(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn for_scenario(scenario: Scenario) -> Self {
        Self {
            scenario,
            lambda: default_lambda(),
            radius: None,
            m_max: None,
            seed: default_seed(),
            density_points: None,
            consistency_tolerance: default_consistency(),
            kernel: None,
            density: None,
            quadrature: QuadratureSpec::default(),
            monte_carlo: None,
            output: OutputConfig::default(),
        }
    }

    fn pipeline(&self) -> Result<Pipeline> {
        let kernel = |k: ProjectionKernel| Ok(Pipeline::Kernel(CountProcessSpec::new(k, self.lambda)?));
        match self.scenario {
            Scenario::Sine1D => kernel(ProjectionKernel::sine()),
            Scenario::TensorSine2D => kernel(ProjectionKernel::tensor_sine()),
            Scenario::CustomKernel => match &self.kernel {
                Some(s) => kernel(parse_kernel(s)?),
                None => invalid("CustomKernel needs a `kernel` box-union literal"),
            },
            Scenario::AnalyticDensity => match self.density {
                Some(f) => {
                    f.validate()?;
                    Ok(Pipeline::Analytic(f))
                }
                None => invalid("AnalyticDensity needs a [density] table"),
            },
        }
    }

    fn dim(&self) -> Result<usize> {
        Ok(match self.pipeline()? {
            Pipeline::Kernel(s) => s.dim(),
            Pipeline::Analytic(f) => f.dim(),
        })
    }

    pub fn m_max(&self) -> Result<usize> {
        Ok(self.m_max.unwrap_or(if self.dim()? == 1 { 32 } else { 8 }))
    }

    pub fn radius(&self) -> Result<usize> {
        Ok(self.radius.unwrap_or(2 * self.m_max()?))
    }

    pub fn density_points(&self) -> Result<usize> {
        Ok(self.density_points.unwrap_or(if self.dim()? == 1 { 256 } else { 64 }))
    }

    pub fn validate(&self) -> Result<()> {
        self.quadrature.validate()?;
        if !(self.lambda > 0.0 && self.lambda <= 64.0) {
            return invalid(format!("lambda must lie in (0, 64], got {}", self.lambda));
        }
        let dim = self.dim()?;
        if dim > 2 {
            return Err(Error::DimensionMismatch { expected: 2, got: dim });
        }
        let m = self.m_max()?;
        let r = self.radius()?;
        if m == 0 || (dim == 1 && m > 4096) || (dim == 2 && m > 16) {
            return invalid(format!("m_max {m} outside the supported range"));
        }
        if r < 2 * m {
            return Err(Error::RadiusTooSmall { needed: 2 * m, available: r });
        }
        if r > if dim == 1 { 8192 } else { 64 } {
            return invalid(format!("radius {r} outside the supported range"));
        }
        let pts = self.density_points()?;
        if !(4..=4096).contains(&pts) {
            return invalid(format!("density_points {pts} outside [4, 4096]"));
        }
        if !(self.consistency_tolerance > 0.0) {
            return invalid("consistency_tolerance must be positive");
        }
        if let Some(mc) = &self.monte_carlo {
            if mc.samples < 3 {
                return invalid("monte_carlo.samples must be at least 3");
            }
            if matches!(self.pipeline()?, Pipeline::Analytic(_)) {
                return invalid("Monte Carlo comparison needs a kernel scenario");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceRoute {
    pub verdict: Option<Verdict>,
    pub resolved_depth: Option<usize>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagComparison {
    pub lag: Vec<i64>,
    pub estimate: Estimate,
    pub exact: f64,
    pub within_3_stderr: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloSummary {
    pub samples: usize,
    pub seed: u64,
    pub side: f64,
    pub grid: usize,
    pub mean_count: Estimate,
    pub expected_mean: f64,
    pub mean_cardinality: Estimate,
    pub covariances: Vec<LagComparison>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RigidityReportBundle {
    pub schema_version: u32,
    pub scenario: Option<Scenario>,
    pub seed: Option<u64>,
    pub lambda: Option<f64>,
    pub verdict: Option<Verdict>,
    pub distance: Option<f64>,
    /// Cumulative shell integrals `I_k`.
    pub profile: Option<Vec<f64>>,
    pub sigma2_profile: Option<Vec<(usize, f64)>>,
    pub rigidity: Option<RigidityVerdict>,
    pub density_provenance: Option<Provenance>,
    pub covariance_route: Option<CovarianceRoute>,
    pub sufficiency: Option<SufficiencyReport>,
    pub covariances: Option<CovarianceSequence>,
    pub density_grid: Option<Vec<(Vec<f64>, f64)>>,
    pub monte_carlo: Option<MonteCarloSummary>,
    pub consistency: Vec<ConsistencyCheck>,
}

impl Default for RigidityReportBundle {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            scenario: None,
            seed: None,
            lambda: None,
            verdict: None,
            distance: None,
            profile: None,
            sigma2_profile: None,
            rigidity: None,
            density_provenance: None,
            covariance_route: None,
            sufficiency: None,
            covariances: None,
            density_grid: None,
            monte_carlo: None,
            consistency: Vec::new(),
        }
    }
}

impl RigidityReportBundle {
    pub fn consistent(&self) -> bool {
        self.consistency.iter().all(|c| c.passed)
    }

    /// 0 for a consistent Rigid/NonRigid verdict, 2 for Inconclusive,
    /// 1 for a failed cross-module check.
    pub fn exit_code(&self) -> i32 {
        if !self.consistent() {
            return 1;
        }
        match self.verdict {
            Some(Verdict::Rigid) | Some(Verdict::NonRigid) => 0,
            _ => 2,
        }
    }
}

fn context(step: &str, e: Error) -> Error {
    match e {
        Error::InvalidInput(m) => Error::InvalidInput(format!("{step}: {m}")),
        Error::Inconclusive(m) => Error::Inconclusive(format!("{step}: {m}")),
        other => other,
    }
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RigidityReportBundle> {
    cfg.validate()?;
    let quad = &cfg.quadrature;
    let m_max = cfg.m_max()?;
    let radius = cfg.radius()?;
    let mut bundle = RigidityReportBundle {
        scenario: Some(cfg.scenario),
        seed: Some(cfg.seed),
        ..Default::default()
    };

    let (primary, cov): (SpectralDensity, Option<CovarianceSequence>) = match cfg.pipeline()? {
        Pipeline::Kernel(spec) => {
            bundle.lambda = Some(spec.lambda);
            let cov = covariance_sequence(&spec, radius, quad).map_err(|e| context("covariances", e))?;
            if let Some(mc) = &cfg.monte_carlo {
                bundle.monte_carlo = Some(monte_carlo(&spec, mc, cfg.seed, quad).map_err(|e| context("monte carlo", e))?);
            }
            (kernel_count_density(&spec)?, Some(cov))
        }
        Pipeline::Analytic(fam) => {
            let cov = fam.covariances(radius).transpose()?;
            (fam.density(), cov)
        }
    };

    let verdict = classify_rigidity(&primary, quad).map_err(|e| context("classification", e))?;
    bundle.density_provenance = Some(primary.provenance());
    bundle.density_grid = Some(primary.grid(cfg.density_points()?));

    if let Some(cov) = &cov {
        if primary.provenance() != Provenance::FromCovariances {
            bundle.covariance_route = Some(match density_from_covariances(cov).and_then(|w| classify_rigidity(&w, quad)) {
                Ok(v) => CovarianceRoute { verdict: Some(v.verdict), resolved_depth: Some(v.resolved_depth), error: None },
                Err(e) => CovarianceRoute { verdict: None, resolved_depth: None, error: Some(e.to_string()) },
            });
        }
        if cov.dim() == 1 {
            bundle.sufficiency = Some(sufficient_rigidity_check(cov, radius.min(cov.radius()))?);
        }
        bundle.sigma2_profile = Some(residual_variance_profile(cov, m_max).map_err(|e| context("prediction", e))?);
    }

    bundle.verdict = Some(verdict.verdict);
    bundle.distance = Some(verdict.distance);
    bundle.profile = Some(verdict.profile.clone());
    bundle.rigidity = Some(verdict);
    bundle.covariances = cov;
    bundle.consistency = consistency_checks(&bundle, cfg.consistency_tolerance);
    Ok(bundle)
}

fn consistency_checks(b: &RigidityReportBundle, tol: f64) -> Vec<ConsistencyCheck> {
    let mut out = Vec::new();
    let verdict = b.verdict;
    if let Some(s) = &b.sufficiency {
        let passed = !s.passes || verdict == Some(Verdict::Rigid);
        out.push(ConsistencyCheck {
            name: "sufficiency_implies_rigid".into(),
            passed,
            detail: format!("sufficient condition {}, verdict {:?}", s.passes, verdict),
        });
    }
    if let (Some(Verdict::NonRigid), Some(d), Some(prof)) = (verdict, b.distance, &b.sigma2_profile) {
        if let Some((m, s2)) = prof.last() {
            let d2 = d * d;
            let rel = (s2 - d2).abs() / d2.max(f64::MIN_POSITIVE);
            out.push(ConsistencyCheck {
                name: "sigma2_matches_distance".into(),
                passed: rel <= tol,
                detail: format!("sigma2_{m} = {s2:.6e}, distance^2 = {d2:.6e}, relative gap {rel:.3e}"),
            });
        }
    }
    if let (Some(v), Some(route)) = (verdict, &b.covariance_route) {
        let clash = matches!(
            (v, route.verdict),
            (Verdict::Rigid, Some(Verdict::NonRigid)) | (Verdict::NonRigid, Some(Verdict::Rigid))
        );
        out.push(ConsistencyCheck {
            name: "covariance_route_agrees".into(),
            passed: !clash,
            detail: format!("kernel route {:?}, covariance route {:?}", v, route.verdict),
        });
    }
    if let Some(prof) = &b.sigma2_profile {
        let monotone = prof.windows(2).all(|w| w[1].1 <= w[0].1 + 1e-9 * w[0].1.abs().max(1.0));
        out.push(ConsistencyCheck {
            name: "sigma2_nonincreasing".into(),
            passed: monotone,
            detail: format!("{} lag radii", prof.len()),
        });
    }
    out
}

fn monte_carlo(spec: &CountProcessSpec, mc: &MonteCarloConfig, seed: u64, quad: &QuadratureSpec) -> Result<MonteCarloSummary> {
    let dk = nystrom_discretize(&spec.kernel, mc.side, mc.grid)?;
    let batch = sample_batch(&dk, mc.samples, seed);
    let d = spec.dim();
    let zero = vec![0i64; d];
    let mean_count = mean_with_stderr(&window_counts(&batch, spec.lambda, &zero)?);
    let mut covariances = Vec::new();
    for k in 0..=mc.lags as i64 {
        let mut lag = zero.clone();
        lag[0] = k;
        let estimate = empirical_covariance(&batch, spec.lambda, &lag)?;
        let exact = count_covariance(spec, &lag, quad)?;
        let within_3_stderr = (estimate.estimate - exact).abs() <= 3.0 * estimate.stderr;
        covariances.push(LagComparison { lag, estimate, exact, within_3_stderr });
    }
    Ok(MonteCarloSummary {
        samples: mc.samples,
        seed,
        side: mc.side,
        grid: mc.grid,
        mean_count,
        expected_mean: count_mean(spec),
        mean_cardinality: mean_with_stderr(&batch.cardinalities()),
        covariances,
    })
}

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

fn summary_csv(b: &RigidityReportBundle) -> String {
    let mut rows = vec![
        ("schema_version".to_string(), b.schema_version.to_string()),
        ("scenario".into(), opt(b.scenario.map(|s| format!("{s:?}")))),
        ("seed".into(), opt(b.seed)),
        ("lambda".into(), opt(b.lambda)),
        ("verdict".into(), opt(b.verdict.map(|v| format!("{v:?}")))),
        ("distance".into(), opt(b.distance)),
        ("rationale".into(), opt(b.rigidity.as_ref().map(|r| r.rationale))),
        ("sufficient_condition".into(), opt(b.sufficiency.as_ref().map(|s| s.passes))),
    ];
    for c in &b.consistency {
        rows.push((format!("check.{}", c.name), c.passed.to_string()));
    }
    let mut out = String::from("key,value\n");
    for (k, v) in rows {
        out.push_str(&format!("{k},{v}\n"));
    }
    out
}

fn shell_profile_csv(profile: &[f64]) -> String {
    let mut out = String::from("k,radius,cumulative\n");
    for (i, v) in profile.iter().enumerate() {
        let k = i + 1;
        out.push_str(&format!("{k},{:.16e},{v:.16e}\n", 0.5f64.powi(k as i32 + 1)));
    }
    out
}

/// Writes the report into `dir`: CSV grids always, plus `report.json` or
/// `summary.csv` depending on `format`. Returns the written paths in order.
pub fn emit_report(bundle: &RigidityReportBundle, dir: &Path, format: ReportFormat) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut files: Vec<(&str, String)> = Vec::new();
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(bundle)?;
            s.push('\n');
            files.push(("report.json", s));
        }
        ReportFormat::Csv => files.push(("summary.csv", summary_csv(bundle))),
    }
    if let Some(p) = &bundle.profile {
        files.push(("shell_profile.csv", shell_profile_csv(p)));
    }
    if let Some(p) = &bundle.sigma2_profile {
        files.push(("sigma2.csv", io::profile_to_csv(p)));
    }
    if let Some(g) = &bundle.density_grid {
        let dim = g.first().map_or(1, |(t, _)| t.len());
        files.push(("density.csv", io::grid_to_csv(dim, g)));
    }
    if let Some(c) = &bundle.covariances {
        files.push(("covariances.csv", io::covariance_to_text(c)));
    }
    let mut out = Vec::new();
    for (name, body) in files {
        let path = dir.join(name);
        fs::write(&path, body)?;
        out.push(path);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_parses_with_defaults() {
        let cfg = ExperimentConfig::from_toml("scenario = \"Sine1D\"\n").unwrap();
        assert_eq!(cfg.lambda, 1.0);
        assert_eq!(cfg.m_max().unwrap(), 32);
        assert_eq!(cfg.radius().unwrap(), 64);
        let cfg = ExperimentConfig::from_toml(
            "scenario = \"AnalyticDensity\"\n[density]\nfamily = \"moving_average\"\na = 0.5\n",
        )
        .unwrap();
        assert_eq!(cfg.density, Some(AnalyticFamily::MovingAverage { a: 0.5 }));
    }

    #[test]
    fn bad_configs_are_rejected() {
        assert!(ExperimentConfig::from_toml("scenario = \"Sine1D\"\nlambda = -1\n").is_err());
        assert!(ExperimentConfig::from_toml("scenario = \"Sine1D\"\nradius = 10\nm_max = 8\n").is_err());
        assert!(ExperimentConfig::from_toml("scenario = \"CustomKernel\"\n").is_err());
        assert!(ExperimentConfig::from_toml("scenario = \"Nope\"\n").is_err());
        assert!(ExperimentConfig::from_toml("scenario = \"Sine1D\"\nunknown = 3\n").is_err());
    }

    #[test]
    fn white_noise_scenario() {
        let mut cfg = ExperimentConfig::for_scenario(Scenario::AnalyticDensity);
        cfg.density = Some(AnalyticFamily::Constant { level: 1.0 });
        cfg.m_max = Some(8);
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(b.verdict, Some(Verdict::NonRigid));
        assert!((b.distance.unwrap() - 1.0).abs() < 1e-9);
        assert!(b.consistent());
        assert_eq!(b.exit_code(), 0);
    }

    #[test]
    fn empty_bundle_serializes_with_nulls() {
        let v: serde_json::Value = serde_json::to_value(RigidityReportBundle::default()).unwrap();
        assert_eq!(v["schema_version"], 1);
        assert!(v["verdict"].is_null() && v["distance"].is_null() && v["sigma2_profile"].is_null());
        assert_eq!(RigidityReportBundle::default().exit_code(), 2);
    }

    #[test]
    fn kernel_literals() {
        assert_eq!(parse_kernel("sine").unwrap(), ProjectionKernel::sine());
        assert_eq!(parse_kernel("tensor-sine").unwrap().dim(), 2);
        assert_eq!(parse_kernel("[[-1,-0.2],[0.1,0.9]]").unwrap().dim(), 1);
        assert!(parse_kernel("[[0,1],[0.5,2]]").is_err());
    }
}
