// SPDX-License-Identifier: Apache-2.0

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use urc_cli::commands::{self, resolve_runs, Source};
use urc_cli::CliError;

/// Robust pulse optimization, minimal-control-time scans and robustness
/// verification.
#[derive(Parser)]
#[command(name = "urc", version)]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// TOML experiment configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Named preset (`fig1.urc`) or preset group (`fig2`).
    #[arg(long)]
    preset: Option<String>,
    /// Output directory.
    #[arg(long, default_value = "urc-out")]
    out: PathBuf,
    /// Master seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
}

impl RunArgs {
    fn source(&self) -> Source {
        Source {
            config: self.config.clone(),
            preset: self.preset.clone(),
            seed: self.seed,
        }
    }
}

#[derive(Subcommand)]
enum FixtureCmd {
    /// Sorted fixture names.
    List,
    /// Full-precision matrices of one fixture.
    Dump { name: String },
}

#[derive(Subcommand)]
enum Verb {
    /// Multistart optimization of one experiment or a preset group.
    Optimize(RunArgs),
    /// Minimal-control-time scan over the configured time grid.
    ScanMct(RunArgs),
    /// Perturbation sweeps, curvature fits, 1-design and noise checks.
    Verify {
        #[command(flatten)]
        run: RunArgs,
        /// Pulse table; defaults to `pulse.csv` in the run directory.
        #[arg(long)]
        pulse: Option<PathBuf>,
        /// Accept a pulse built for a different model.
        #[arg(long)]
        force: bool,
    },
    /// Named targets.
    Fixtures {
        #[command(subcommand)]
        cmd: FixtureCmd,
    },
    /// Print the preset catalog in Markdown.
    Docs,
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be ≥ 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    match cli.verb {
        Verb::Optimize(args) => {
            let runs = resolve_runs(&args.source(), &args.out)?;
            if !commands::cmd_optimize(&runs)? {
                log::warn!("at least one optimization stayed above its threshold");
            }
        }
        Verb::ScanMct(args) => {
            let runs = resolve_runs(&args.source(), &args.out)?;
            commands::cmd_scan_mct(&runs)?;
        }
        Verb::Verify { run, pulse, force } => {
            let runs = resolve_runs(&run.source(), &run.out)?;
            commands::cmd_verify(&runs, &run.out, pulse.as_deref(), force)?;
        }
        Verb::Fixtures { cmd } => match cmd {
            FixtureCmd::List => println!("{}", commands::fixtures_list()?),
            FixtureCmd::Dump { name } => println!("{}", commands::fixtures_dump(&name)?),
        },
        Verb::Docs => print!("{}", urc_core::docs::generate_preset_catalog()?),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("urc: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
