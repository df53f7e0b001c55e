mod commands;
mod config;

use clap::{Parser, Subcommand};
use commands::{Failure, VerifyArgs};
use std::path::PathBuf;
use std::process::ExitCode;

/// Degenerate parabolic complex Monge-Ampère flows on flat periodic tori.
///
/// Exit codes: 0 success, 1 configuration or usage error, 2 numerical
/// failure or a failed check.
#[derive(Parser)]
#[command(name = "maflow", version, after_long_help = config::KEYS)]
struct Cli {
    /// Worker threads (default: machine parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Override a config key, e.g. --set grid.m=64 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    sets: Vec<String>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one Cauchy problem; writes the trajectory and a manifest.
    Solve { config: PathBuf },
    /// Solve the static equation on the time-zero background.
    Static { config: PathBuf },
    /// Certificate checks on a trajectory directory or a built-in barrier.
    Verify {
        config: PathBuf,
        /// Trajectory directory as written by `solve`.
        field: Option<PathBuf>,
        /// envelopes | subbarrier | superbarrier
        #[arg(long)]
        builtin: Option<String>,
        /// sub | super | both
        #[arg(long, default_value = "both")]
        kind: String,
        /// Residual tolerance (default 10(h² + snapshot spacing), or 10h² for built-ins).
        #[arg(long)]
        tol: Option<f64>,
        /// Closeness to the datum for built-in barriers.
        #[arg(long, default_value_t = 0.01)]
        eps: f64,
    },
    /// Run a named scenario and print its pass/fail table.
    Scenario { name: String, config: Option<PathBuf> },
    /// Print T_max, the regularity modulus table and the very-regular report.
    Cohomology { config: PathBuf },
}

fn run(cli: Cli) -> Result<bool, Failure> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::User(anyhow::anyhow!("--threads: {e}")))?;
    }
    let sets = &cli.sets;
    match cli.cmd {
        Cmd::Solve { config } => commands::solve(&config, sets),
        Cmd::Static { config } => commands::static_solve(&config, sets),
        Cmd::Verify { config, field, builtin, kind, tol, eps } => {
            commands::verify(&VerifyArgs { config, field, builtin, kind, tol, eps }, sets)
        }
        Cmd::Scenario { name, config } => commands::scenario(&name, config.as_deref(), sets),
        Cmd::Cohomology { config } => commands::cohomology(&config, sets),
    }
}

fn panic_message(info: &std::panic::PanicHookInfo) -> String {
    let p = info.payload();
    p.downcast_ref::<&str>().map(|s| s.to_string()).or_else(|| p.downcast_ref::<String>().cloned()).unwrap_or_default()
}

fn main() -> ExitCode {
    std::panic::set_hook(Box::new(|info| {
        let msg = panic_message(info);
        // Closed stdout (e.g. piped into `head`): stop quietly.
        if msg.contains("Broken pipe") {
            std::process::exit(0);
        }
        eprintln!("error: internal failure: {msg}");
    }));
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(true)) => ExitCode::SUCCESS,
        Ok(Ok(false)) => {
            eprintln!("error: one or more checks failed");
            ExitCode::from(2)
        }
        Ok(Err(f)) => {
            eprintln!("error: {:#}", f.error());
            ExitCode::from(f.code() as u8)
        }
        Err(_) => ExitCode::from(2),
    }
}
