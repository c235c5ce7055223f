//! Argument parsing and report assembly for the `niq` command.

use std::ffi::OsString;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};

use crate::commands::{self, Ctx, Figure, Finding, IqcArgs, Rule, StabilityArgs};
use crate::config::ExperimentConfig;
use crate::exit::{self, CliError};
use crate::output::{Output, ReportDocument, DEFAULT_OUT, OUT_ENV};

#[derive(Debug, Parser)]
#[command(name = "niq", version, about = "Negative-imaginary and IQC analysis of feedback loops")]
struct Cli {
    /// JSON experiment configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the battery seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (default: $NIQ_OUT, then ./niq-out).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for independent experiments.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Channel {
    D1,
    D2,
}

#[derive(Debug, clap::Args)]
struct XiArgs {
    /// Ξ preset (xi1 or xi2); defaults to the config's `xi`.
    #[arg(long)]
    xi: Option<String>,
    #[arg(long)]
    epsilon: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Classify a system as SNI, NI or not NI.
    CheckNi {
        #[arg(long)]
        system: String,
    },
    /// Test the counterclockwise input-output property.
    CheckCcw {
        #[arg(long)]
        system: String,
    },
    /// Test membership in B(Ξ, ε) and B_C(Ξ, ε).
    CheckIqc {
        #[arg(long)]
        system: String,
        #[command(flatten)]
        xi: XiArgs,
        /// Use the complementary constraint.
        #[arg(long)]
        complement: bool,
        /// Also check the frequency-domain multiplier inequalities against this system.
        #[arg(long)]
        against: Option<String>,
    },
    /// Certify stability of the positive feedback loop of `p` and `c`.
    CheckStability {
        #[arg(long)]
        p: String,
        #[arg(long)]
        c: String,
        #[arg(long, value_enum)]
        rule: Rule,
        #[command(flatten)]
        xi: XiArgs,
        /// Ξ∞ preset for corollary-lti; defaults to the config's `xi_inf`.
        #[arg(long)]
        xi_inf: Option<String>,
        /// Skip the impulse experiments attached to the verdict.
        #[arg(long)]
        no_diagnostics: bool,
    },
    /// Impulse response of the loop, written as CSV.
    Simulate {
        #[arg(long)]
        p: String,
        #[arg(long)]
        c: String,
        #[arg(long, value_enum, default_value = "d1")]
        inject: Channel,
        #[arg(long)]
        horizon: Option<f64>,
    },
    /// Regenerate the traces of a figure and compare labels.
    Reproduce {
        #[arg(value_enum)]
        figure: Figure,
        #[arg(long)]
        horizon: Option<f64>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::CheckNi { .. } => "check-ni",
            Command::CheckCcw { .. } => "check-ccw",
            Command::CheckIqc { .. } => "check-iqc",
            Command::CheckStability { .. } => "check-stability",
            Command::Simulate { .. } => "simulate",
            Command::Reproduce { figure, .. } => match figure {
                Figure::Fig2 => "reproduce-fig2",
                Figure::Fig3 => "reproduce-fig3",
            },
        }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.battery.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(cli: &Cli) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn dispatch(cli: &Cli, ctx: &Ctx) -> Result<Finding, CliError> {
    let cfg = ctx.cfg;
    match &cli.command {
        Command::CheckNi { system } => commands::check_ni(ctx, system),
        Command::CheckCcw { system } => commands::check_ccw_cmd(ctx, system),
        Command::CheckIqc { system, xi, complement, against } => {
            let xi = commands::xi_from(xi.xi.as_deref(), xi.epsilon, cfg.xi.as_ref(), "Ξ")?;
            commands::check_iqc(ctx, IqcArgs { system, xi, complement: *complement, against: against.as_deref() })
        }
        Command::CheckStability { p, c, rule, xi, xi_inf, no_diagnostics } => {
            let xi = commands::xi_from(xi.xi.as_deref(), xi.epsilon, cfg.xi.as_ref(), "Ξ")?;
            let xi_inf = match (xi_inf, &cfg.xi_inf) {
                (None, None) => None,
                (flag, def) => Some(commands::xi_from(flag.as_deref(), None, def.as_ref(), "Ξ∞")?),
            };
            commands::check_stability(ctx, StabilityArgs { p, c, rule: *rule, xi, xi_inf, diagnostics: !no_diagnostics })
        }
        Command::Simulate { p, c, inject, horizon } => {
            commands::simulate(ctx, p, c, *inject == Channel::D2, *horizon)
        }
        Command::Reproduce { figure, horizon } => commands::reproduce(ctx.out, *figure, *horizon),
    }
}

fn run(cli: &Cli) -> Result<(i32, String), CliError> {
    let started = chrono::Utc::now();
    let clock = Instant::now();
    let cfg = load_config(cli)?;
    if cli.jobs == 0 {
        return Err(CliError::config("--jobs must be at least 1"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build()
        .map_err(|e| CliError::numeric(format!("cannot start worker threads: {e}")))?;
    let out = Output::new(out_dir(cli))?;
    let ctx = Ctx { cfg: &cfg, out: &out };
    let finding = pool.install(|| dispatch(cli, &ctx))?;

    let doc = ReportDocument {
        tool: "niq",
        version: env!("CARGO_PKG_VERSION"),
        command: cli.command.name().to_string(),
        config: &cfg,
        results: finding.results,
        flags: finding.flags,
        exit_code: finding.exit_code,
        timing: format!(
            "started {} elapsed {:.3} s",
            started.to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
            clock.elapsed().as_secs_f64()
        ),
    };
    let text = doc.render();
    out.write(&format!("{}.json", cli.command.name()), &text)?;
    Ok((finding.exit_code, text))
}

/// Exit code and console text of one command line.
#[derive(Debug, Clone, PartialEq)]
pub struct Invocation {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

/// Runs a full command line, program name first.
pub fn invoke<I, T>(args: I) -> Invocation
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { exit::CONFIG } else { exit::PASS };
            let text = e.render().to_string();
            let (stdout, stderr) = if e.use_stderr() { (String::new(), text) } else { (text, String::new()) };
            return Invocation { code, stdout, stderr };
        }
    };
    match run(&cli) {
        Ok((code, stdout)) => Invocation { code, stdout, stderr: String::new() },
        Err(e) => Invocation { code: e.code, stdout: String::new(), stderr: format!("error: {e}\n") },
    }
}
