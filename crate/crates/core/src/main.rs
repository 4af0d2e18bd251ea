use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use rigidity::driver::{emit_report, parse_kernel, run_experiment, ExperimentConfig, ReportFormat};
use rigidity::dppcov::{count_spectral_density, covariance_sequence, kernel_count_density, CountProcessSpec};
use rigidity::quadrature::QuadratureSpec;
use rigidity::regularity::{sufficient_rigidity_check, tail_sup_statistic};
use rigidity::sampler::{nystrom_discretize, sample_batch};
use rigidity::spectral::{classify_rigidity, density_from_covariances, SpectralDensity, Verdict};
use rigidity::{io, predictor, Result};

#[derive(Parser)]
#[command(name = "rigidity", version, about = "Linear rigidity of stationary processes and projection DPPs")]
struct Cli {
    /// Master seed for randomized steps.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for output files.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<ReportFormat>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct KernelArgs {
    /// `sine`, `tensor-sine`, or a box-union literal such as `[[-1,-0.2],[0.1,0.9]]`.
    #[arg(long, default_value = "sine")]
    kernel: String,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Route {
    Kernel,
    Covariances,
}

#[derive(Subcommand)]
enum Command {
    /// Run a configured experiment and write its report.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Export the spectral density on a uniform grid.
    Density {
        #[command(flatten)]
        kernel: KernelArgs,
        /// Read covariances from a file instead of a kernel.
        #[arg(long)]
        cov: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "kernel")]
        route: Route,
        #[arg(long, default_value_t = 64)]
        radius: usize,
        #[arg(long, default_value_t = 256)]
        points: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Count-process covariances of a projection DPP.
    #[command(alias = "dppcov")]
    Covariances {
        #[command(flatten)]
        kernel: KernelArgs,
        #[arg(long, default_value_t = 50)]
        radius: usize,
        /// Write the little-endian binary format.
        #[arg(long)]
        binary: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Residual variance profile of finite-lag linear prediction.
    Predict {
        #[arg(long)]
        cov: PathBuf,
        #[arg(long, default_value_t = 32)]
        mmax: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sample a projection DPP on a box.
    Sample {
        #[arg(long, default_value = "sine")]
        kernel: String,
        #[arg(long = "L", default_value_t = 20.0)]
        side: f64,
        #[arg(long, default_value_t = 512)]
        grid: usize,
        #[arg(long, default_value_t = 2000)]
        nsamples: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Classify rigidity from covariances or a kernel.
    Check {
        #[command(flatten)]
        kernel: KernelArgs,
        #[arg(long)]
        cov: Option<PathBuf>,
    },
    /// Sufficient-condition checks on covariance sequences.
    Regularity {
        #[command(subcommand)]
        command: RegularityCommand,
    },
}

#[derive(Subcommand)]
enum RegularityCommand {
    /// Tail statistic and total-sum check.
    Check {
        #[arg(long)]
        cov: PathBuf,
        #[arg(long, default_value_t = 50)]
        nmax: usize,
    },
}

fn resolve(out_dir: &Option<PathBuf>, p: &Path) -> PathBuf {
    match out_dir {
        Some(d) if p.is_relative() => d.join(p),
        _ => p.to_path_buf(),
    }
}

fn emit(out_dir: &Option<PathBuf>, out: &Option<PathBuf>, body: &[u8]) -> Result<()> {
    match out {
        Some(p) => {
            let path = resolve(out_dir, p);
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent)?;
            }
            std::fs::write(path, body)?;
        }
        None => {
            use std::io::Write;
            match std::io::stdout().write_all(body) {
                Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => {}
                other => other?,
            }
        }
    }
    Ok(())
}

fn verdict_code(v: Verdict) -> u8 {
    match v {
        Verdict::Inconclusive => 2,
        _ => 0,
    }
}

fn run(cli: Cli) -> Result<u8> {
    let quad = QuadratureSpec::default();
    match cli.command {
        Command::Run { config } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            let dir = cli.out_dir.or(cfg.output.dir.clone()).unwrap_or_else(|| PathBuf::from("."));
            let format = cli.format.unwrap_or(cfg.output.format);
            let bundle = run_experiment(&cfg)?;
            for path in emit_report(&bundle, &dir, format)? {
                eprintln!("wrote {}", path.display());
            }
            for c in bundle.consistency.iter().filter(|c| !c.passed) {
                eprintln!("consistency check {} failed: {}", c.name, c.detail);
            }
            eprintln!("verdict {:?}, distance {:e}", bundle.verdict.unwrap_or(Verdict::Inconclusive), bundle.distance.unwrap_or(f64::NAN));
            Ok(bundle.exit_code() as u8)
        }
        Command::Density { kernel, cov, route, radius, points, out } => {
            let omega: SpectralDensity = match cov {
                Some(path) => density_from_covariances(&io::read_covariance(&path)?)?,
                None => {
                    let spec = CountProcessSpec::new(parse_kernel(&kernel.kernel)?, kernel.lambda)?;
                    match route {
                        Route::Kernel => kernel_count_density(&spec)?,
                        Route::Covariances => count_spectral_density(&spec, radius, &quad)?,
                    }
                }
            };
            emit(&cli.out_dir, &out, io::density_to_csv(&omega, points).as_bytes())?;
            Ok(0)
        }
        Command::Covariances { kernel, radius, binary, out } => {
            let spec = CountProcessSpec::new(parse_kernel(&kernel.kernel)?, kernel.lambda)?;
            let cov = covariance_sequence(&spec, radius, &quad)?;
            let body = if binary {
                io::covariance_to_bytes(&cov)
            } else if cli.format == Some(ReportFormat::Json) {
                let mut s = serde_json::to_string_pretty(&cov)?;
                s.push('\n');
                s.into_bytes()
            } else {
                io::covariance_to_text(&cov).into_bytes()
            };
            emit(&cli.out_dir, &out, &body)?;
            Ok(0)
        }
        Command::Predict { cov, mmax, out } => {
            let cov = io::read_covariance(&cov)?;
            let profile = predictor::residual_variance_profile(&cov, mmax)?;
            let body = match cli.format {
                Some(ReportFormat::Json) => serde_json::to_string_pretty(&profile)? + "\n",
                _ => io::profile_to_csv(&profile),
            };
            emit(&cli.out_dir, &out, body.as_bytes())?;
            Ok(0)
        }
        Command::Sample { kernel, side, grid, nsamples, out } => {
            let dk = nystrom_discretize(&parse_kernel(&kernel)?, side, grid)?;
            let batch = sample_batch(&dk, nsamples, cli.seed.unwrap_or(42));
            let path = resolve(&cli.out_dir, &out);
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent)?;
            }
            io::write_batch(&path, &batch)?;
            eprintln!("wrote {} configurations to {}", batch.len(), path.display());
            Ok(0)
        }
        Command::Check { kernel, cov } => {
            let omega = match cov {
                Some(path) => density_from_covariances(&io::read_covariance(&path)?)?,
                None => kernel_count_density(&CountProcessSpec::new(parse_kernel(&kernel.kernel)?, kernel.lambda)?)?,
            };
            let v = classify_rigidity(&omega, &quad)?;
            emit(&None, &None, (serde_json::to_string_pretty(&v)? + "\n").as_bytes())?;
            Ok(verdict_code(v.verdict))
        }
        Command::Regularity { command: RegularityCommand::Check { cov, nmax } } => {
            let cov = io::read_covariance(&cov)?;
            let body = if cov.dim() == 1 {
                serde_json::to_string_pretty(&sufficient_rigidity_check(&cov, nmax)?)?
            } else {
                serde_json::to_string_pretty(&tail_sup_statistic(&cov, nmax)?)?
            };
            emit(&None, &None, (body + "\n").as_bytes())?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
