//! `bahadur`: run remainder experiments from a TOML config, or evaluate the
//! rate functions and constants directly.
//!
//! Exit codes: 0 success, 2 config or argument error, 3 runtime failure.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bahadur_core::linear_process::SlowlyVarying;
use bahadur_core::{
    kiefer_limit, rate_function, run_experiment, simulate_process, ExperimentConfig, ExperimentKind, Outcome,
    RateKind, RateParams, Report, RunOptions,
};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use config::{load_config, CONFIG_HELP};

const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(name = "bahadur", version, about = "Monte Carlo checks of Bahadur remainder rates for dependent sequences")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Pointwise remainder |xi_np - xi_p - linear term| at one level p
    #[command(after_help = CONFIG_HELP)]
    Rate(RunArgs),
    /// Supremum of the remainder over p in [p0, p1]
    #[command(after_help = CONFIG_HELP)]
    UniformRate(RunArgs),
    /// Local oscillation modulus of F_n - F_n* and F_n - F in windows b_n
    #[command(after_help = CONFIG_HELP)]
    Oscillation(RunArgs),
    /// Distribution of normalised increments S_n(x + delta_n) - S_n(x)
    #[command(after_help = CONFIG_HELP)]
    Dichotomy(RunArgs),
    /// Distribution of sqrt(n) (trimmed mean - target)
    #[command(after_help = CONFIG_HELP)]
    TrimmedClt(RunArgs),
    /// Geometric-moment contraction rate of an iterated map
    #[command(after_help = CONFIG_HELP)]
    Gmc(RunArgs),
    /// Evaluate a rate function or the i.i.d. limsup constant and print it
    EvalRateFn(EvalArgs),
    /// Write one simulated path of length max(n_grid) as CSV
    #[command(after_help = CONFIG_HELP)]
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config file (TOML)
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Override a config key; repeatable
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    set: Vec<String>,
    /// Base seed (overrides experiment.seed)
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for replicates; outputs do not depend on it
    #[arg(long)]
    jobs: Option<usize>,
    /// Output directory (overrides output.dir; default "out")
    #[arg(long, value_name = "DIR")]
    out_dir: Option<PathBuf>,
    /// Suppress the summary on stdout
    #[arg(long, short)]
    quiet: bool,
}

#[derive(Args)]
struct SimulateArgs {
    /// Experiment config file (TOML)
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Override a config key; repeatable
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    set: Vec<String>,
    /// Base seed (overrides experiment.seed)
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides output.dir; default "out")
    #[arg(long, value_name = "DIR")]
    out_dir: Option<PathBuf>,
    /// Do not print the output path
    #[arg(long, short)]
    quiet: bool,
}

#[derive(Args)]
struct EvalArgs {
    /// ell_q, iota_q, psi, sigma_n1_asym, sigma_n1_exact, A_beta, b_thm3, c_beta,
    /// lrd_exponent, kiefer_scale, or kiefer (needs --p and --f)
    #[arg(long)]
    kind: String,
    /// Sample size (n >= 16 for n-dependent kinds)
    #[arg(long)]
    n: Option<u64>,
    /// Memory exponent in (1/2, 1)
    #[arg(long, default_value_t = 0.75)]
    beta: f64,
    /// Moment order q >= 2
    #[arg(long, default_value_t = 3.0)]
    q: f64,
    /// Slowly varying constant c in L(x) = c log(e + x)^g
    #[arg(long, default_value_t = 1.0)]
    l_const: f64,
    /// Slowly varying log power g
    #[arg(long, default_value_t = 0.0)]
    l_log_power: f64,
    /// Innovation variance
    #[arg(long, default_value_t = 1.0)]
    sigma2: f64,
    /// Innovation moment order (sigma kinds need at least 2)
    #[arg(long)]
    alpha_moment: Option<f64>,
    /// Filter truncation lag (sigma_n1_exact, b_thm3)
    #[arg(long)]
    truncation: Option<usize>,
    /// Quantile level (kiefer)
    #[arg(long)]
    p: Option<f64>,
    /// Density at the quantile (kiefer)
    #[arg(long)]
    f: Option<f64>,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn config(message: impl Into<String>) -> Self {
        Self { code: EXIT_CONFIG, message: message.into() }
    }

    fn runtime(message: impl Into<String>) -> Self {
        Self { code: EXIT_RUNTIME, message: message.into() }
    }
}

#[derive(Serialize)]
struct RunManifest {
    artifact_version: &'static str,
    command: &'static str,
    experiment_id: String,
    /// SHA-256 of the JSON config echo.
    config_hash: String,
    seed: u64,
    started_at: String,
    finished_at: String,
    /// `ok`, `partial` (some replicates failed) or `failed`.
    status: &'static str,
    failures: usize,
    outputs: Vec<String>,
    warnings: Vec<String>,
    error: Option<String>,
}

fn now() -> String {
    time::OffsetDateTime::now_utc()
        .format(&time::format_description::well_known::Rfc3339)
        .unwrap_or_else(|_| "unknown".into())
}

fn config_hash(config: &ExperimentConfig) -> String {
    let json = serde_json::to_string(config).expect("config serialises");
    Sha256::digest(json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

fn load(path: &Path, sets: &[String], seed: Option<u64>, out_dir: Option<&PathBuf>) -> Result<(ExperimentConfig, PathBuf), Failure> {
    let mut config = load_config(path, sets).map_err(Failure::config)?;
    if let Some(s) = seed {
        config.experiment.seed = s;
    }
    let dir = out_dir.cloned().or_else(|| config.output.dir.as_ref().map(PathBuf::from)).unwrap_or_else(|| "out".into());
    Ok((config, dir))
}

fn write_manifest(dir: &Path, manifest: &RunManifest) -> Result<PathBuf, Failure> {
    std::fs::create_dir_all(dir).map_err(|e| Failure::runtime(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(format!("{}.manifest.json", manifest.experiment_id));
    let mut text = serde_json::to_string_pretty(manifest).expect("manifest serialises");
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| Failure::runtime(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}

fn summarize(outcome: &Outcome) {
    for report in &outcome.reports {
        match report {
            Report::Rate(r) => {
                let slope = r.slope.map_or("none".into(), |s| format!("{s:.4}"));
                let se = r.slope_stderr.map_or(String::new(), |s| format!(" (se {s:.4})"));
                let theory = r.theoretical_exponent.map_or("none".into(), |t| format!("{t:.4}"));
                println!("{}: slope {slope}{se}, theoretical exponent {theory}", r.statistic_name);
            }
            Report::Dist(d) => {
                let s = &d.summary;
                let opt = |v: Option<f64>| v.map_or("undefined".into(), |v| format!("{v:.4}"));
                println!(
                    "{} n={}: mean {:.4}, variance {:.4}, skewness {}, excess kurtosis {}",
                    d.statistic_name,
                    d.n,
                    s.mean,
                    s.variance,
                    opt(s.skewness),
                    opt(s.excess_kurtosis)
                );
            }
            Report::Gmc(g) => println!("{}: r_hat {:.4} (R^2 {:.4})", g.statistic_name, g.gmc.r_hat, g.gmc.r_squared),
        }
    }
}

fn run(kind: ExperimentKind, command: &'static str, args: &RunArgs) -> Result<(), Failure> {
    let (config, dir) = load(&args.config, &args.set, args.seed, args.out_dir.as_ref())?;
    config.validate(kind).map_err(|e| Failure::config(format!("{}: {e}", args.config.display())))?;
    let started_at = now();
    let mut manifest = RunManifest {
        artifact_version: env!("CARGO_PKG_VERSION"),
        command,
        experiment_id: config.experiment_id(kind),
        config_hash: config_hash(&config),
        seed: config.experiment.seed,
        started_at,
        finished_at: String::new(),
        status: "ok",
        failures: 0,
        outputs: Vec::new(),
        warnings: Vec::new(),
        error: None,
    };
    let result = run_experiment(kind, &config, RunOptions { jobs: args.jobs })
        .and_then(|o| o.write(&dir).map(|paths| (o, paths)));
    manifest.finished_at = now();
    match result {
        Ok((outcome, paths)) => {
            manifest.outputs = paths.iter().map(|p| p.display().to_string()).collect();
            manifest.warnings = outcome.reports.iter().flat_map(|r| r.warnings().iter().cloned()).collect();
            manifest.warnings.extend(outcome.warnings.iter().cloned());
            manifest.warnings.sort();
            manifest.warnings.dedup();
            manifest.failures = outcome.failures;
            if outcome.failures > 0 {
                manifest.status = "partial";
            }
            let path = write_manifest(&dir, &manifest)?;
            for w in &manifest.warnings {
                eprintln!("warning: {w}");
            }
            if !args.quiet {
                summarize(&outcome);
                println!("manifest: {}", path.display());
            }
            if outcome.failures > 0 {
                return Err(Failure::runtime(format!("{} replicate(s) failed; see {}", outcome.failures, path.display())));
            }
            Ok(())
        }
        Err(e) => {
            manifest.status = "failed";
            manifest.error = Some(e.to_string());
            let path = write_manifest(&dir, &manifest)?;
            Err(Failure::runtime(format!("{e}; see {}", path.display())))
        }
    }
}

fn simulate(args: &SimulateArgs) -> Result<(), Failure> {
    let (config, dir) = load(&args.config, &args.set, args.seed, args.out_dir.as_ref())?;
    let draw = simulate_process(&config).map_err(|e| match e {
        bahadur_core::Error::Config(_) => Failure::config(format!("{}: {e}", args.config.display())),
        e => Failure::runtime(e.to_string()),
    })?;
    std::fs::create_dir_all(&dir).map_err(|e| Failure::runtime(format!("cannot create {}: {e}", dir.display())))?;
    let id = config.experiment.id.clone().unwrap_or_else(|| "simulate".into());
    let path = dir.join(format!("{id}.path.csv"));
    draw.write_csv(&path).map_err(|e| Failure::runtime(e.to_string()))?;
    if !args.quiet {
        println!("{}", path.display());
    }
    Ok(())
}

/// Shortest decimal that survives rounding to 15 significant digits.
fn format_number(v: f64) -> String {
    let rounded: f64 = format!("{v:.14e}").parse().unwrap_or(v);
    format!("{rounded}")
}

fn eval_rate_fn(args: &EvalArgs) -> Result<(), Failure> {
    let value = if args.kind == "kiefer" {
        let p = args.p.ok_or_else(|| Failure::config("kiefer needs --p"))?;
        let f = args.f.ok_or_else(|| Failure::config("kiefer needs --f"))?;
        kiefer_limit(p, f)
    } else {
        let kind = RateKind::parse(&args.kind).ok_or_else(|| Failure::config(format!("unknown --kind {}", args.kind)))?;
        let params = RateParams {
            q: args.q,
            beta: args.beta,
            slowly_varying: SlowlyVarying { constant: args.l_const, log_power: args.l_log_power },
            sigma2: args.sigma2,
            alpha_moment: args.alpha_moment.unwrap_or(f64::INFINITY),
            truncation: args.truncation,
        };
        rate_function(kind, args.n, &params)
    }
    .map_err(|e| Failure::config(e.to_string()))?;
    println!("{}", format_number(value));
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Rate(a) => run(ExperimentKind::Rate, "rate", a),
        Command::UniformRate(a) => run(ExperimentKind::UniformRate, "uniform-rate", a),
        Command::Oscillation(a) => run(ExperimentKind::Oscillation, "oscillation", a),
        Command::Dichotomy(a) => run(ExperimentKind::Dichotomy, "dichotomy", a),
        Command::TrimmedClt(a) => run(ExperimentKind::TrimmedClt, "trimmed-clt", a),
        Command::Gmc(a) => run(ExperimentKind::Gmc, "gmc", a),
        Command::EvalRateFn(a) => eval_rate_fn(a),
        Command::Simulate(a) => simulate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_print_without_float_noise() {
        assert_eq!(format_number(1.5 - 3.0 * 0.6), "-0.3");
        assert_eq!(format_number(0.5216948600244291), "0.521694860024429");
        assert_eq!(format_number(-0.75), "-0.75");
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
