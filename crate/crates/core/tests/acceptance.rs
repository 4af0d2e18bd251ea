//! Acceptance suite: one line per criterion, nonzero exit if any fails.

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use rigidity::dppcov::{
    abs_cosine_series, count_covariance, covariance_sequence, kernel_count_density, linear_lower_constant,
    projection_identity_residual, CountProcessSpec,
};
use rigidity::driver::{emit_report, run_experiment, ExperimentConfig, MonteCarloConfig, ReportFormat, Scenario};
use rigidity::kernels::{fourier_tail_condition, plancherel_energy, BoxUnion, ProjectionKernel};
use rigidity::predictor::{best_linear_predictor, residual_variance_profile};
use rigidity::quadrature::QuadratureSpec;
use rigidity::regularity::{
    double_difference, second_difference, sufficient_rigidity_check, tail_sup_statistic, zygmund2_constant_estimate,
    ProbeGrid,
};
use rigidity::sampler::{empirical_covariance, empirical_mean, nystrom_discretize, sample_batch};
use rigidity::spectral::{
    classify_rigidity, density_from_covariances, kolmogorov_distance, AnalyticFamily, CovarianceSequence, Verdict,
};

/// Outcome of one sub-check: label, pass flag, measured detail.
struct Check(String, bool, String);

fn check(label: &str, ok: bool, detail: impl Into<String>) -> Check {
    Check(label.to_string(), ok, detail.into())
}

fn quad() -> QuadratureSpec {
    QuadratureSpec::default()
}

fn sine() -> CountProcessSpec {
    CountProcessSpec::new(ProjectionKernel::sine(), 1.0).unwrap()
}

fn tensor() -> CountProcessSpec {
    CountProcessSpec::new(ProjectionKernel::tensor_sine(), 1.0).unwrap()
}

fn ma_covariances(a: f64, radius: usize) -> CovarianceSequence {
    AnalyticFamily::MovingAverage { a }.covariances(radius).unwrap().unwrap()
}

fn criterion_1() -> Vec<Check> {
    let mut out = Vec::new();
    for a in [0.0, 0.3, 0.5, 0.9] {
        let fam = AnalyticFamily::MovingAverage { a };
        let d = kolmogorov_distance(&fam.density(), &quad()).unwrap();
        let exact = (1.0 - a * a).sqrt();
        out.push(check(&format!("distance a={a}"), (d - exact).abs() <= 1e-6, format!("{:.2e}", (d - exact).abs())));
        let prof = residual_variance_profile(&ma_covariances(a, 128), 64).unwrap();
        let s = prof.last().unwrap().1;
        out.push(check(
            &format!("sigma2_64 a={a}"),
            (s - (1.0 - a * a)).abs() <= 1e-3,
            format!("{:.2e}", (s - (1.0 - a * a)).abs()),
        ));
    }
    out
}

fn criterion_2() -> Vec<Check> {
    let cov = CovarianceSequence::from_one_sided(
        &(0..=512).map(|n| [2.0, -1.0].get(n).copied().unwrap_or(0.0)).collect::<Vec<_>>(),
        0.0,
        0.0,
    )
    .unwrap();
    let suff = sufficient_rigidity_check(&cov, 50).unwrap();
    let v = classify_rigidity(&density_from_covariances(&cov).unwrap(), &quad()).unwrap();
    let s = best_linear_predictor(&cov, 256).unwrap().residual_variance;
    vec![
        check("sufficient condition", suff.passes, format!("sup {:.3}", suff.tail.sup_estimate)),
        check("verdict Rigid", v.verdict == Verdict::Rigid, format!("{:?}", v.verdict)),
        check("sigma2_256 < 1e-2", s < 1e-2, format!("{s:.3e}")),
    ]
}

fn criterion_3() -> Vec<Check> {
    let cov = covariance_sequence(&sine(), 50, &quad()).unwrap();
    let total: f64 = cov.values().iter().sum();
    let tail = cov.tail_bound();
    let stat = tail_sup_statistic(&cov, 50).unwrap();
    let omega = density_from_covariances(&cov).unwrap();
    let w0 = omega.eval_raw(&[0.0]);
    let cov_route = classify_rigidity(&omega, &quad()).unwrap();
    let kernel_route = classify_rigidity(&kernel_count_density(&sine()).unwrap(), &quad()).unwrap();

    let cov64 = covariance_sequence(&sine(), 64, &quad()).unwrap();
    let prof = residual_variance_profile(&cov64, 32).unwrap();
    let strictly = prof.windows(2).all(|w| w[1].1 < w[0].1);
    let (s4, s32) = (prof[3].1, prof[31].1);
    vec![
        check("(a) |sum| <= tail", total.abs() <= tail, format!("|sum| {:.3e}, tail {tail:.3e}", total.abs())),
        check("(a) tail <= 0.05", tail <= 0.05, format!("{tail:.3e}")),
        check(
            "(b) tail statistic plateau",
            stat.bounded,
            format!("sup {:.4} at N=38 {:.4}", stat.running_sup[49], stat.running_sup[37]),
        ),
        check("(c) omega(0) <= tail", w0 <= tail, format!("{w0:.3e}")),
        check(
            "(d) verdict Rigid",
            cov_route.verdict == Verdict::Rigid && kernel_route.verdict == Verdict::Rigid,
            format!("covariance route {:?}, kernel route {:?}", cov_route.verdict, kernel_route.verdict),
        ),
        check("(e) sigma2 strictly decreasing", strictly, format!("{} radii", prof.len())),
        check("(e) sigma2_32 < sigma2_4 / 2", s32 < 0.5 * s4, format!("sigma2_4 {s4:.4}, sigma2_32 {s32:.4}")),
    ]
}

fn criterion_4() -> Vec<Check> {
    let omega = kernel_count_density(&tensor()).unwrap();
    let c32 = linear_lower_constant(&omega, 32);
    let c64 = linear_lower_constant(&omega, 64);
    let v = classify_rigidity(&omega, &quad()).unwrap();
    let d2 = v.distance * v.distance;
    let inv = v.inverse_integral.unwrap_or(f64::NAN);
    let cov = covariance_sequence(&tensor(), 16, &quad()).unwrap();
    let prof = residual_variance_profile(&cov, 8).unwrap();
    let s8 = prof.last().unwrap().1;
    let decreasing = prof.windows(2).all(|w| w[1].1 <= w[0].1);
    vec![
        check(
            "(a) lower constant stable",
            c32 > 0.0 && (c64 / c32 - 1.0).abs() <= 0.2,
            format!("c32 {c32:.4}, c64 {c64:.4}"),
        ),
        check(
            "(b) NonRigid, distance^2 = 1/I",
            v.verdict == Verdict::NonRigid && d2 > 0.0 && (d2 * inv - 1.0).abs() < 1e-12,
            format!("{:?}, distance^2 {d2:.4}", v.verdict),
        ),
        check(
            "(c) sigma2_8 within 10% of distance^2",
            decreasing && (s8 - d2).abs() <= 0.1 * d2,
            format!("sigma2_8 {s8:.4}"),
        ),
    ]
}

fn criterion_5() -> Vec<Check> {
    let r10 = projection_identity_residual(&sine(), 10, &quad()).unwrap();
    let r100 = projection_identity_residual(&sine(), 100, &quad()).unwrap();
    let ratio = r100 / r10;
    vec![check("residual ratio in [0.05, 0.2]", (0.05..=0.2).contains(&ratio), format!("{ratio:.4}"))]
}

fn criterion_6() -> Vec<Check> {
    let grid: Vec<f64> = (0..=6).map(|k| 2f64.powi(k)).collect();
    let mut out = Vec::new();
    for (name, b) in [
        ("interval", BoxUnion::unit_interval()),
        ("three intervals", BoxUnion::intervals(&[(-1.0, -0.5), (0.0, 0.5), (1.0, 1.5)]).unwrap()),
    ] {
        let t = fourier_tail_condition(&b, &grid, &quad()).unwrap();
        out.push(check(&format!("{name} tail bounded"), t.holds, format!("sup {:.4}", t.sup_estimate)));
        let e = plancherel_energy(&b, &quad()).unwrap();
        let gap = (e.value - b.volume()).abs();
        out.push(check(&format!("{name} Plancherel"), gap <= 1e-4, format!("{gap:.2e}")));
    }
    out
}

fn criterion_7() -> Vec<Check> {
    let terms = 100_000_000usize;
    let mut s = 0.0;
    for j in (1..=terms).rev() {
        let k = (2 * j - 1) as f64;
        s += 1.0 / (k * k);
    }
    let tail = 1.0 / (2.0 * (2 * terms - 1) as f64);
    let target = PI * PI / 8.0;
    let mut out = vec![check(
        "sum (2j-1)^-2 = pi^2/8",
        s <= target && target <= s + tail + 1e-15 && tail <= 1e-8,
        format!("gap {:.2e}, certified {tail:.2e}", target - s),
    )];
    for alpha in [0.1, 0.25, 0.4] {
        let b = abs_cosine_series(alpha, 20_000_000);
        out.push(check(
            &format!("|alpha| series at {alpha}"),
            b.error_bound <= 1e-8 && (b.value - alpha).abs() <= b.error_bound,
            format!("gap {:.2e}", (b.value - alpha).abs()),
        ));
    }
    out
}

fn criterion_8() -> Vec<Check> {
    let start = Instant::now();
    let dk = nystrom_discretize(&ProjectionKernel::sine(), 20.0, 512).unwrap();
    let batch = sample_batch(&dk, 2000, 42);
    let mean = empirical_mean(&batch, 1.0, &[0]).unwrap();
    let mut out = vec![check(
        "mean count",
        (mean.estimate - 1.0).abs() <= 3.0 * mean.stderr,
        format!("{:.4} +- {:.4}", mean.estimate, mean.stderr),
    )];
    for n in 0..=1i64 {
        let e = empirical_covariance(&batch, 1.0, &[n]).unwrap();
        let exact = count_covariance(&sine(), &[n], &quad()).unwrap();
        out.push(check(
            &format!("Cov(N0,N{n})"),
            (e.estimate - exact).abs() <= 3.0 * e.stderr,
            format!("{:.4} +- {:.4} vs {exact:.4}", e.estimate, e.stderr),
        ));
    }
    for n in 1..=5i64 {
        let e = empirical_covariance(&batch, 1.0, &[n]).unwrap();
        out.push(check(&format!("Cov(N0,N{n}) <= 3 se"), e.estimate <= 3.0 * e.stderr, format!("{:.4}", e.estimate)));
    }
    let secs = start.elapsed().as_secs_f64();
    out.push(check("runtime <= 300 s", secs <= 300.0, format!("{secs:.1} s")));
    out
}

fn criterion_9() -> Vec<Check> {
    let c = |_: f64| 0.731;
    let c2 = |_: f64, _: f64| -1.25;
    let mut worst: f64 = 0.0;
    for x in [-0.4, 0.0, 0.17, 0.5] {
        for h in [0.5, 0.125, 1e-3] {
            worst = worst.max(second_difference(c, x, h).abs());
            worst = worst.max(double_difference(c2, x, -x, h, 0.5 * h).abs());
        }
    }
    let omega = kernel_count_density(&tensor()).unwrap();
    let z = zygmund2_constant_estimate(&omega, &ProbeGrid::two_dimensional()).unwrap();

    let r = 4000usize;
    let mut one_sided: Vec<f64> = (0..=r).map(|n| 1.0 / (n as f64 * ((n + 2) as f64).ln().powi(2))).collect();
    one_sided[0] = 10.0;
    let cov = CovarianceSequence::from_one_sided(&one_sided, 0.0, 2.0 / (r as f64).ln()).unwrap();
    let stat = tail_sup_statistic(&cov, r).unwrap();
    vec![
        check("stencils annihilate constants", worst <= 1e-15, format!("{worst:.1e}")),
        check(
            "tensor-sine double-difference ratio bounded",
            z.constant_estimate.is_finite() && z.stable,
            format!("{:.4}", z.constant_estimate),
        ),
        check("1/(n log^2 n) flagged unbounded", !stat.bounded, format!("sup {:.2}", stat.sup_estimate)),
    ]
}

fn run_to_dir(cfg: &ExperimentConfig, dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let bundle = run_experiment(cfg).unwrap();
    let mut files = Vec::new();
    for format in [ReportFormat::Json, ReportFormat::Csv] {
        for p in emit_report(&bundle, dir, format).unwrap() {
            files.push((p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()));
        }
    }
    files
}

fn criterion_10() -> Vec<Check> {
    let mut mc = ExperimentConfig::for_scenario(Scenario::Sine1D);
    mc.monte_carlo = Some(MonteCarloConfig { samples: 200, side: 12.0, grid: 128, lags: 3 });
    let mut analytic = ExperimentConfig::for_scenario(Scenario::AnalyticDensity);
    analytic.density = Some(AnalyticFamily::MovingAverage { a: 0.5 });
    let mut out = Vec::new();
    for (name, cfg) in [
        ("Sine1D", mc),
        ("TensorSine2D", ExperimentConfig::for_scenario(Scenario::TensorSine2D)),
        ("AnalyticDensity", analytic),
    ] {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let fa = run_to_dir(&cfg, a.path());
        let fb = run_to_dir(&cfg, b.path());
        out.push(check(&format!("{name} byte-identical"), !fa.is_empty() && fa == fb, format!("{} files", fa.len())));
    }
    out
}

type Criterion = (&'static str, fn() -> Vec<Check>);

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("1 Kolmogorov criterion, moving-average family", criterion_1),
        ("2 rigid discrete example", criterion_2),
        ("3 sine DPP, one dimension", criterion_3),
        ("4 tensor sine DPP, two dimensions", criterion_4),
        ("5 projection identity", criterion_5),
        ("6 Fourier tail condition", criterion_6),
        ("7 classical series", criterion_7),
        ("8 Monte Carlo agreement", criterion_8),
        ("9 Zygmund machinery", criterion_9),
        ("10 determinism", criterion_10),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(f));
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(checks) => {
                let ok = checks.iter().all(|c| c.1);
                let details: Vec<String> = checks
                    .iter()
                    .map(|c| format!("{} [{}] {}", c.0, if c.1 { "ok" } else { "FAILED" }, c.2))
                    .collect();
                println!("criterion {name}: {} ({secs:.1} s) | {}", if ok { "PASS" } else { "FAIL" }, details.join("; "));
                if !ok {
                    failed += 1;
                }
            }
            Err(_) => {
                println!("criterion {name}: FAIL ({secs:.1} s) | panicked");
                failed += 1;
            }
        }
    }
    println!("acceptance: {} of 10 criteria passed", 10 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
