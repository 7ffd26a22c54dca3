//! Command-line pipeline: simulate, fit, residuals, gof, calibrate.
//!
//! Every run is fully determined by (config, seed, inputs); reports are
//! JSON, tabular outputs CSV. Failures exit with a stage-specific code and
//! print a machine-readable error object to stdout.

mod config;

use clap::{Parser, Subcommand};
use config::{build_test_kind, parse_test_function_list, RunConfig};
use gibbsgof::{
    calibrate_null, pattern_io, sample_batch, CalibrationSpec, Configuration, Error, GofParams,
    Workspace,
};
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "gibbsgof",
    about = "Residual diagnostics and goodness-of-fit tests for stationary marked Gibbs point processes"
)]
struct Cli {
    /// Cap the worker-thread count (replicate-level parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate replicates of the configured model; one CSV per replicate
    /// plus a manifest.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Maximum pseudolikelihood fit of the configured model to a pattern.
    Fit {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        pattern: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// h-residuals of a pattern under the configured model: JSON report
    /// plus a per-cell CSV.
    Residuals {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        pattern: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a goodness-of-fit test on a pattern.
    Gof {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        pattern: PathBuf,
        /// t1 | t1tilde | t2tilde (overrides the config).
        #[arg(long)]
        test: Option<String>,
        /// Test function tokens, e.g. raw, inverse, empty:0.05,0.1.
        #[arg(long = "h")]
        test_functions: Vec<String>,
        #[arg(long)]
        subdomains: Option<usize>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte-Carlo null calibration: simulate → fit → test, repeatedly.
    Calibrate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// CLI failure carrying its exit code: 2 config, 3 fit, 4 degenerate
/// normalization, 5 I/O.
#[derive(Debug)]
pub struct CliError {
    pub stage: &'static str,
    pub kind: &'static str,
    pub message: String,
    pub code: u8,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        CliError {
            stage: "config",
            kind: "config_error",
            message: message.into(),
            code: 2,
        }
    }

    pub fn io(message: impl Into<String>) -> Self {
        CliError {
            stage: "io",
            kind: "io_error",
            message: message.into(),
            code: 5,
        }
    }

    fn from_core(stage: &'static str, err: Error) -> Self {
        let (kind, code) = match &err {
            Error::FitFailed { .. } | Error::SingularHessian { .. } => ("fit_failure", 3),
            Error::DegenerateNormalization { .. } => ("degenerate_normalization", 4),
            Error::CalibrationFailed { .. } => ("calibration_failure", 4),
            Error::Io(_) | Error::PatternFormat { .. } => ("io_error", 5),
            _ => ("config_error", 2),
        };
        CliError {
            stage,
            kind,
            message: err.to_string(),
            code,
        }
    }
}

#[derive(Serialize)]
struct ErrorReport<'a> {
    error: ErrorBody<'a>,
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    stage: &'a str,
    kind: &'a str,
    message: &'a str,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let report = ErrorReport {
                error: ErrorBody {
                    stage: err.stage,
                    kind: err.kind,
                    message: &err.message,
                },
            };
            println!("{}", serde_json::to_string_pretty(&report).unwrap());
            ExitCode::from(err.code)
        }
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Simulate { config, out } => simulate(&config, &out),
        Command::Fit {
            config,
            pattern,
            out,
        } => fit(&config, &pattern, out.as_deref()),
        Command::Residuals {
            config,
            pattern,
            out,
        } => residuals(&config, &pattern, out.as_deref()),
        Command::Gof {
            config,
            pattern,
            test,
            test_functions,
            subdomains,
            alpha,
            out,
        } => gof(
            &config,
            &pattern,
            test.as_deref(),
            &test_functions,
            subdomains,
            alpha,
            out.as_deref(),
        ),
        Command::Calibrate { config, out } => calibrate(&config, out.as_deref()),
    }
}

fn write_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::io(format!("serializing report: {e}")))?;
    match out {
        Some(path) => std::fs::write(path, text + "\n")
            .map_err(|e| CliError::io(format!("writing {}: {e}", path.display()))),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn read_pattern_checked(path: &Path, dim: usize) -> Result<Configuration, CliError> {
    let config = pattern_io::read_pattern_file(path)
        .map_err(|e| CliError::from_core("io", e))?;
    if config.dim() != dim {
        return Err(CliError::config(format!(
            "pattern {} has dimension {}, config says {dim}",
            path.display(),
            config.dim()
        )));
    }
    Ok(config)
}

#[derive(Serialize)]
struct Manifest<'a> {
    model: &'a str,
    theta: &'a [f64],
    seed: u64,
    sweeps: u32,
    replicates: usize,
    window_side: f64,
    guard: f64,
    dimension: usize,
    reference_intensity: f64,
    files: Vec<String>,
}

fn simulate(config_path: &Path, out_dir: &Path) -> Result<(), CliError> {
    let config = RunConfig::load(config_path)?;
    let model = config.build_model()?;
    let domain = config.domain();
    let theta = config
        .sampler
        .theta
        .clone()
        .ok_or_else(|| CliError::config("simulate needs sampler.theta"))?;
    std::fs::create_dir_all(out_dir)
        .map_err(|e| CliError::io(format!("creating {}: {e}", out_dir.display())))?;
    let sampler_config = config.sampler_config();
    let replicates = sample_batch(
        model.as_ref(),
        &theta,
        &domain,
        config.sampler.replicates,
        config.sampler.seed,
        &sampler_config,
    )
    .map_err(|e| CliError::from_core("simulate", e))?;
    let mut files = Vec::new();
    for (i, pattern) in replicates.iter().enumerate() {
        let name = format!("replicate_{i:04}.csv");
        pattern_io::write_pattern_file(&out_dir.join(&name), pattern)
            .map_err(|e| CliError::from_core("io", e))?;
        files.push(name);
    }
    let manifest = Manifest {
        model: &config.model,
        theta: &theta,
        seed: config.sampler.seed,
        sweeps: config.sampler.sweeps,
        replicates: config.sampler.replicates,
        window_side: config.window.side,
        guard: config.window.guard,
        dimension: config.window.dimension,
        reference_intensity: config.sampler.reference_intensity,
        files,
    };
    write_json(&manifest, Some(&out_dir.join("manifest.json")))
}

fn fit(config_path: &Path, pattern_path: &Path, out: Option<&Path>) -> Result<(), CliError> {
    let config = RunConfig::load(config_path)?;
    let model = config.build_model()?;
    let domain = config.domain();
    let pattern = read_pattern_checked(pattern_path, config.window.dimension)?;
    let ws = Workspace::new(model.as_ref(), &pattern, &domain, config.quadrature_spec())
        .map_err(|e| CliError::from_core("fit", e))?;
    let theta0 = config
        .estimation
        .theta0
        .clone()
        .unwrap_or_else(|| vec![0.0; model.param_len()]);
    let result = ws
        .fit_mple(&theta0, &config.fit_options())
        .map_err(|e| CliError::from_core("fit", e))?;
    #[derive(Serialize)]
    struct FitReport<'a> {
        fit: &'a gibbsgof::FitResult,
        h_hat: Vec<Vec<f64>>,
    }
    if !result.converged {
        return Err(CliError {
            stage: "fit",
            kind: "fit_failure",
            message: result
                .diagnostic
                .unwrap_or_else(|| "fit did not converge".into()),
            code: 3,
        });
    }
    let h_hat = ws
        .estimate_h_hat(&result.theta_hat)
        .map_err(|e| CliError::from_core("fit", e))?;
    let p = model.param_len();
    let report = FitReport {
        fit: &result,
        h_hat: (0..p)
            .map(|i| (0..p).map(|j| h_hat[(i, j)]).collect())
            .collect(),
    };
    write_json(&report, out)
}

fn residuals(config_path: &Path, pattern_path: &Path, out: Option<&Path>) -> Result<(), CliError> {
    let config = RunConfig::load(config_path)?;
    let model = config.build_model()?;
    let domain = config.domain();
    let pattern = read_pattern_checked(pattern_path, config.window.dimension)?;
    let ws = Workspace::new(model.as_ref(), &pattern, &domain, config.quadrature_spec())
        .map_err(|e| CliError::from_core("residuals", e))?;
    let hs = parse_test_function_list(&config.residuals.h)?;

    let theta = match &config.residuals.theta {
        Some(theta) => theta.clone(),
        None => {
            let theta0 = config
                .estimation
                .theta0
                .clone()
                .unwrap_or_else(|| vec![0.0; model.param_len()]);
            let fit = ws
                .fit_mple(&theta0, &config.fit_options())
                .map_err(|e| CliError::from_core("fit", e))?;
            if !fit.converged {
                return Err(CliError {
                    stage: "fit",
                    kind: "fit_failure",
                    message: fit
                        .diagnostic
                        .unwrap_or_else(|| "fit did not converge".into()),
                    code: 3,
                });
            }
            fit.theta_hat
        }
    };

    #[derive(Serialize)]
    struct ResidualEntry {
        test_function: String,
        integral_term: f64,
        sum_term: f64,
        value: f64,
    }
    #[derive(Serialize)]
    struct ResidualReport {
        theta: Vec<f64>,
        window_side: f64,
        entries: Vec<ResidualEntry>,
    }

    let window = domain.window();
    let mut entries = Vec::new();
    for (token, h) in config.residuals.h.iter().zip(hs.iter()) {
        let value = ws
            .residuals(&theta, h, &window)
            .map_err(|e| CliError::from_core("residuals", e))?;
        entries.push(ResidualEntry {
            test_function: token.clone(),
            integral_term: value.integral_term,
            sum_term: value.sum_term,
            value: value.value,
        });
    }

    // per-cell residuals for plotting, on the covariance grid when one is
    // configured
    let cells_csv = if let Some(delta) = config.cov.delta {
        let grid = gibbsgof::partition_window(&domain, delta, 1)
            .map_err(|e| CliError::from_core("residuals", Error::from(e)))?;
        let mut csv = String::from("cell_index,center_coords,value\n");
        for k in 0..grid.cell_count() {
            let cube = grid.cell_cube(k);
            let value = ws
                .residuals(&theta, &hs[0], &cube)
                .map_err(|e| CliError::from_core("residuals", e))?;
            let center: Vec<String> = cube.center().iter().map(|c| format!("{c}")).collect();
            csv.push_str(&format!("{k},{},{}\n", center.join(";"), value.value));
        }
        Some(csv)
    } else {
        None
    };

    let report = ResidualReport {
        theta,
        window_side: config.window.side,
        entries,
    };
    match out {
        Some(dir) => {
            std::fs::create_dir_all(dir)
                .map_err(|e| CliError::io(format!("creating {}: {e}", dir.display())))?;
            write_json(&report, Some(&dir.join("residuals.json")))?;
            if let Some(csv) = cells_csv {
                std::fs::write(dir.join("cells.csv"), csv)
                    .map_err(|e| CliError::io(format!("writing cells.csv: {e}")))?;
            }
            Ok(())
        }
        None => write_json(&report, None),
    }
}

#[allow(clippy::too_many_arguments)]
fn gof(
    config_path: &Path,
    pattern_path: &Path,
    test_override: Option<&str>,
    h_override: &[String],
    subdomains_override: Option<usize>,
    alpha_override: Option<f64>,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let config = RunConfig::load(config_path)?;
    let model = config.build_model()?;
    let domain = config.domain();
    let pattern = read_pattern_checked(pattern_path, config.window.dimension)?;
    let ws = Workspace::new(model.as_ref(), &pattern, &domain, config.quadrature_spec())
        .map_err(|e| CliError::from_core("gof", e))?;

    let name = test_override.unwrap_or(&config.test.name);
    let h_tokens: Vec<String> = if h_override.is_empty() {
        config.test.h.clone()
    } else {
        h_override.to_vec()
    };
    let hs = parse_test_function_list(&h_tokens)?;
    let subdomains = subdomains_override
        .or(config.test.subdomains)
        .or(config.cov.subdomains);
    let kind = build_test_kind(name, hs, subdomains)?;
    let alpha = alpha_override.unwrap_or(config.test.alpha);
    let params: GofParams = config.gof_params(alpha);
    let report = ws
        .run_gof(&kind, &params)
        .map_err(|e| CliError::from_core("gof", e))?;
    write_json(&report, out)
}

fn calibrate(config_path: &Path, out: Option<&Path>) -> Result<(), CliError> {
    let config = RunConfig::load(config_path)?;
    let model = config.build_model()?;
    let domain = config.domain();
    let theta = config
        .sampler
        .theta
        .clone()
        .ok_or_else(|| CliError::config("calibrate needs sampler.theta (the null θ*)"))?;
    let hs = parse_test_function_list(&config.test.h)?;
    let subdomains = config.test.subdomains.or(config.cov.subdomains);
    let kind = build_test_kind(&config.test.name, hs, subdomains)?;
    let spec = CalibrationSpec {
        n_replicates: config.sampler.replicates,
        base_seed: config.sampler.seed,
        sampler: config.sampler_config(),
        quadrature: config.quadrature_spec(),
        params: config.gof_params(config.test.alpha),
    };
    let report = calibrate_null(model.as_ref(), &theta, &domain, &kind, &spec)
        .map_err(|e| CliError::from_core("calibrate", e))?;
    match out {
        Some(dir) => {
            std::fs::create_dir_all(dir)
                .map_err(|e| CliError::io(format!("creating {}: {e}", dir.display())))?;
            write_json(&report, Some(&dir.join("calibration.json")))?;
            let mut csv = String::from("statistic\n");
            for s in &report.statistics {
                csv.push_str(&format!("{s}\n"));
            }
            std::fs::write(dir.join("statistics.csv"), csv)
                .map_err(|e| CliError::io(format!("writing statistics.csv: {e}")))?;
            Ok(())
        }
        None => write_json(&report, None),
    }
}
