//! `brwre`: run survival-regime experiments from a JSON config.
//!
//! Exit status: 0 on success, 2 when the config or the standing conditions
//! fail validation, 3 for an inconclusive verdict under `--strict`, 1 on any
//! other error.

mod config;
mod error;
mod output;
mod pipeline;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::Config;
use crate::error::{CliError, Result};
use crate::output::Format;
use crate::pipeline::{Stage, Status};
use crate::report::RunReport;

#[derive(Parser)]
#[command(name = "brwre", version, about = "Classify branching random walks in random environment")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the standing conditions and compute the feasible lambda set.
    Validate(RunArgs),
    /// Decide the survival regime.
    Classify(RunArgs),
    /// Estimate the Lyapunov exponents of the transfer matrices.
    Lyapunov(RunArgs),
    /// Perron roots of the truncated first-moment matrices.
    Spectral(RunArgs),
    /// Monte Carlo survival frequencies.
    Simulate(RunArgs),
    /// Frozen-progeny profile and supermartingale trace.
    Frozen(RunArgs),
    /// Everything, plus the table of consistency checks.
    Crosscheck(RunArgs),
    /// Alias of crosscheck.
    All(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Exit with status 3 when the verdict is Inconclusive.
    #[arg(long)]
    strict: bool,
    #[arg(long)]
    quiet: bool,
}

impl Command {
    fn split(&self) -> (Stage, &RunArgs) {
        match self {
            Command::Validate(a) => (Stage::Validate, a),
            Command::Classify(a) => (Stage::Classify, a),
            Command::Lyapunov(a) => (Stage::Lyapunov, a),
            Command::Spectral(a) => (Stage::Spectral, a),
            Command::Simulate(a) => (Stage::Simulate, a),
            Command::Frozen(a) => (Stage::Frozen, a),
            Command::Crosscheck(a) => (Stage::Crosscheck, a),
            Command::All(a) => (Stage::All, a),
        }
    }
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var("BRWRE_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| CliError::Threads(format!("expected a thread count, got {raw:?}")))?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Threads(e.to_string()))?;
    }
    Ok(())
}

fn summarize(report: &RunReport) {
    let c = &report.condition_report;
    println!(
        "conditions: E={} B={} S={}",
        c.cond_e, c.cond_b, c.cond_s
    );
    if let Some(set) = &report.lambda_set {
        match set.bounds() {
            Some((lo, hi)) => println!("feasible lambda: [{lo:.6}, {hi:.6}]"),
            None => println!("feasible lambda: empty"),
        }
    }
    if let Some(r) = &report.regime_report {
        let margin = match r.margin {
            Some(m) if m.abs() > 1e6 => format!(", margin {m:.1e} sigma"),
            Some(m) => format!(", margin {m:.2} sigma"),
            None => String::new(),
        };
        println!("regime: {:?} (vanishing {:?}{margin})", r.regime, r.vanishing_direction);
    }
    if let Some(l) = &report.lyapunov {
        if let Some(g) = l.gamma1 {
            println!("gamma1 = {:.6} +- {:.6}, drift = {:.6}", g.value, g.stderr, l.drift);
        }
    }
    if let Some(rho) = report.rho_series.as_ref().and_then(|r| r.last()) {
        println!("rho(B_{}) = {:.10}", rho.n, rho.rho);
    }
    if let Some(s) = &report.survival {
        println!(
            "survival: global {:.4} +- {:.4}, local proxy {:.4} +- {:.4}",
            s.estimate.global.freq,
            s.estimate.global.stderr,
            s.estimate.local_proxy.freq,
            s.estimate.local_proxy.stderr
        );
    }
    if let Some(f) = &report.frozen {
        println!(
            "frozen: log_average {:.6} +- {:.6}{}",
            f.profile.log_average,
            f.profile.log_average_stderr,
            if f.mirrored { " (mirrored law)" } else { "" }
        );
    }
    if let Some(rows) = &report.crosscheck {
        for r in rows {
            println!(
                "  [{}] {}: {:.6} vs {:.6}",
                if r.pass { "pass" } else { "FAIL" },
                r.identity,
                r.lhs,
                r.rhs
            );
        }
        let passed = rows.iter().filter(|r| r.pass).count();
        println!("crosscheck: {passed}/{} rows pass", rows.len());
    }
    for n in &report.notes {
        println!("note: {n}");
    }
}

fn run(cli: &Cli) -> Result<ExitCode> {
    configure_threads()?;
    let (stage, args) = cli.command.split();
    let config = Config::load(&args.config)?;
    let (report, status) = pipeline::run(stage, &config)?;
    let written = output::write_all(&report, &args.out, args.format)?;
    if !args.quiet {
        summarize(&report);
        for p in written {
            println!("wrote {}", p.display());
        }
    }
    Ok(match status {
        Status::Ok => ExitCode::SUCCESS,
        Status::ConditionsViolated => {
            eprintln!("error: standing conditions violated: {}", report.condition_report.summary());
            ExitCode::from(2)
        }
        Status::Inconclusive if args.strict => {
            eprintln!("error: verdict is Inconclusive (--strict)");
            ExitCode::from(3)
        }
        Status::Inconclusive => ExitCode::SUCCESS,
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
