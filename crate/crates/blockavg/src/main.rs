//! Command-line front end: timescale reports, replicated experiment runs,
//! mixing-time estimation, reference-curve emission and validation suites.
//!
//! Exit codes: 0 success, 1 a validation suite failed, 2 malformed
//! configuration or domain error, 3 resource cap (a refused budget, or a
//! run delivered with a truncation marker).

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use blockavg::config::ExperimentConfig;
use blockavg::experiment::{estimate_tmix, run_experiment, write_outputs};
use blockavg::profiles::ProfileCurve;
use blockavg::sizespec::{BlockSizeSpec, RegimeThresholds};
use blockavg::validate;
use blockavg::{Error, Result};

#[derive(Parser)]
#[command(name = "blockavg", version, about = "Block-averaging dynamics toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the timescales and regime diagnostics of a block-size spec.
    Timescales(TimescalesArgs),
    /// Run a replicated experiment; aggregate CSV goes to stdout, files to
    /// the configured output directory.
    Simulate(ConfigArgs),
    /// Scan an experiment's schedule for the eps-crossing of the mean
    /// total-variation distance.
    Tmix(TmixArgs),
    /// Emit a reference profile curve over a beta grid as `beta,value` CSV.
    Profile(ProfileArgs),
    /// Run validation suites and report measured values against limits.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct TimescalesArgs {
    /// Spec document (TOML); alternative to the inline options.
    #[arg(long, value_name = "FILE", conflicts_with_all = ["n", "fixed", "two_point_a", "table"])]
    spec: Option<PathBuf>,
    /// Number of sites for an inline spec.
    #[arg(long)]
    n: Option<usize>,
    /// Deterministic block size k.
    #[arg(long, value_name = "K", group = "law")]
    fixed: Option<usize>,
    /// Two-point parameter a: size 2 with probability 1-a/n, size n with a/n.
    #[arg(long = "two-point-a", value_name = "A", group = "law")]
    two_point_a: Option<f64>,
    /// Size table as `k:p` pairs, e.g. `2:0.5,3:0.5`.
    #[arg(long, value_name = "LIST", group = "law")]
    table: Option<String>,
}

#[derive(Args)]
struct ConfigArgs {
    /// Experiment configuration (TOML).
    #[arg(long, value_name = "FILE")]
    config: PathBuf,
}

#[derive(Args)]
struct TmixArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Distance threshold in (0, 1).
    #[arg(long)]
    eps: f64,
}

#[derive(Args)]
struct ProfileArgs {
    /// Curve family.
    #[arg(long, value_enum)]
    curve: CurveKind,
    /// Shape parameter rho (gaussian-cutoff).
    #[arg(long)]
    rho: Option<f64>,
    /// Block-size exponent delta (poisson-noncutoff).
    #[arg(long)]
    delta: Option<f64>,
    /// Emit the mean profile instead of the realized-limit staircase.
    #[arg(long)]
    expected: bool,
    /// Jump-rate constant c (half-cutoff).
    #[arg(long)]
    c: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    beta_min: f64,
    #[arg(long, allow_hyphen_values = true)]
    beta_max: f64,
    #[arg(long, default_value_t = 0.1)]
    step: f64,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum CurveKind {
    GaussianCutoff,
    PoissonNoncutoff,
    MetastableExp,
    HalfCutoff,
}

#[derive(Args)]
struct ValidateArgs {
    /// Suite to run; see --all for the full set.
    suite: Option<String>,
    /// Run every suite.
    #[arg(long, conflicts_with = "suite")]
    all: bool,
}

fn main() {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    std::process::exit(code);
}

/// Write to stdout, treating a closed pipe (e.g. `blockavg ... | head`) as a
/// clean exit rather than a panic.
fn emit(text: &str) {
    use std::io::Write;
    if let Err(e) = std::io::stdout().write_all(text.as_bytes()) {
        if e.kind() == std::io::ErrorKind::BrokenPipe {
            std::process::exit(0);
        }
        eprintln!("error: stdout: {e}");
        std::process::exit(2);
    }
}

fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Timescales(args) => timescales(args),
        Command::Simulate(args) => simulate(args),
        Command::Tmix(args) => tmix(args),
        Command::Profile(args) => profile(args),
        Command::Validate(args) => validate_cmd(args),
    }
}

fn parse_table(n: usize, list: &str) -> Result<BlockSizeSpec> {
    let mut entries = Vec::new();
    for item in list.split(',') {
        let (k, p) = item.split_once(':').ok_or_else(|| {
            Error::InvalidSpec(format!("table entry \"{item}\" is not of the form k:p"))
        })?;
        let k = k.trim().parse::<usize>().map_err(|e| {
            Error::InvalidSpec(format!("table size \"{k}\": {e}"))
        })?;
        let p = p.trim().parse::<f64>().map_err(|e| {
            Error::InvalidSpec(format!("table probability \"{p}\": {e}"))
        })?;
        entries.push((k, p));
    }
    BlockSizeSpec::from_table(n, &entries)
}

fn timescales(args: TimescalesArgs) -> Result<i32> {
    let spec = match (args.spec, args.n) {
        (Some(path), _) => BlockSizeSpec::from_document_file(&path)?,
        (None, Some(n)) => match (args.fixed, args.two_point_a, args.table) {
            (Some(k), None, None) => BlockSizeSpec::deterministic(n, k)?,
            (None, Some(a), None) => BlockSizeSpec::two_point(n, a)?,
            (None, None, Some(list)) => parse_table(n, &list)?,
            _ => {
                return Err(Error::InvalidConfig(
                    "with --n, give exactly one of --fixed, --two-point-a, --table".into(),
                ))
            }
        },
        (None, None) => {
            return Err(Error::InvalidConfig("give either --spec FILE or --n with a law".into()))
        }
    };
    let ts = spec.timescales();
    let d = spec.classify_regime(&RegimeThresholds::default());
    let mut out = String::new();
    let mut line = |key: &str, value: String| {
        out.push_str(key);
        out.push_str(" = ");
        out.push_str(&value);
        out.push('\n');
    };
    line("n", spec.n().to_string());
    line("mean_block", spec.mean().to_string());
    line("t_rel", ts.relaxation.to_string());
    line("t_ent", ts.entropic.to_string());
    line("t_window", ts.window.to_string());
    line("mu", ts.mu.to_string());
    line("sigma_sq", ts.sigma_sq.to_string());
    line("rho", ts.rho.to_string());
    line("entropic_over_relaxation", (ts.entropic / ts.relaxation).to_string());
    line("mu_over_log_n", d.mu_over_log_n.to_string());
    line("window_ratio", d.window_ratio.to_string());
    line("lindeberg", d.lindeberg.to_string());
    line("regime", d.label.to_string());
    emit(&out);
    Ok(0)
}

fn simulate(args: ConfigArgs) -> Result<i32> {
    let config = ExperimentConfig::from_file(&args.config)?;
    let plan = config.plan()?;
    let result = run_experiment(&plan)?;
    if let Some(dir) = &plan.config.output.dir {
        write_outputs(&plan, &result, dir)?;
        eprintln!("wrote outputs to {}", dir.display());
    }
    let mut csv = Vec::new();
    result.aggregate.write_csv(&mut csv)?;
    emit(&String::from_utf8(csv).expect("CSV is UTF-8"));
    if result.truncated {
        eprintln!(
            "truncated: {} of {} replicas contributed (resource cap)",
            result.completed, plan.config.replicas
        );
        return Ok(3);
    }
    Ok(0)
}

fn tmix(args: TmixArgs) -> Result<i32> {
    let config = ExperimentConfig::from_file(&args.config.config)?;
    let plan = config.plan()?;
    let report = estimate_tmix(&plan, args.eps)?;
    let mut out = String::from("t,d_tv_mean,d_tv_stderr\n");
    for (t, mean, stderr) in &report.rows {
        out.push_str(&format!("{t},{mean},{stderr}\n"));
    }
    match report.crossing {
        Some(c) => {
            out.push_str(&format!("t_mix = {}\n", c.t_mix));
            match c.lower {
                Some(lower) => out.push_str(&format!("bracket = [{}, {}]\n", lower, c.t_mix)),
                None => out.push_str(&format!("bracket = [start, {}]\n", c.t_mix)),
            }
            out.push_str(&format!("confident = {}\n", c.confident));
        }
        None => out.push_str("no-crossing = true\n"),
    }
    emit(&out);
    if report.truncated {
        eprintln!("truncated: scan ran under a resource cap");
        return Ok(3);
    }
    Ok(0)
}

fn profile(args: ProfileArgs) -> Result<i32> {
    let need = |value: Option<f64>, name: &str, curve: &str| {
        value.ok_or_else(|| Error::InvalidConfig(format!("--curve {curve} requires --{name}")))
    };
    let curve = match args.curve {
        CurveKind::GaussianCutoff => {
            ProfileCurve::GaussianCutoff { rho: need(args.rho, "rho", "gaussian-cutoff")? }
        }
        CurveKind::PoissonNoncutoff => ProfileCurve::PoissonNoncutoff {
            delta: need(args.delta, "delta", "poisson-noncutoff")?,
            expected: args.expected,
        },
        CurveKind::MetastableExp => ProfileCurve::MetastableExp,
        CurveKind::HalfCutoff => {
            ProfileCurve::HalfCutoff { c: need(args.c, "c", "half-cutoff")? }
        }
    };
    let rows = curve.grid(args.beta_min, args.beta_max, args.step)?;
    let mut out = String::from("beta,value\n");
    for (beta, value) in rows {
        out.push_str(&format!("{beta},{value}\n"));
    }
    emit(&out);
    Ok(0)
}

fn validate_cmd(args: ValidateArgs) -> Result<i32> {
    let reports = match (args.suite, args.all) {
        (Some(name), false) => vec![validate::run_suite(&name)?],
        (None, true) => validate::run_all()?,
        (None, false) => {
            return Err(Error::InvalidConfig(format!(
                "give a suite name or --all; suites: {}",
                validate::SUITE_NAMES.join(", ")
            )))
        }
        (Some(_), true) => unreachable!("clap enforces the conflict"),
    };
    emit(&validate::render_reports(&reports));
    if reports.iter().all(|r| r.passed()) {
        Ok(0)
    } else {
        Ok(1)
    }
}
