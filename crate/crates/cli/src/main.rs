use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, ValueEnum};
use tugobs_cli::{parse_config, run, RunError, RunOptions, Subcommand};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Command {
    Solve,
    Simulate,
    Converge,
    Validate,
}

impl From<Command> for Subcommand {
    fn from(c: Command) -> Self {
        match c {
            Command::Solve => Subcommand::Solve,
            Command::Simulate => Subcommand::Simulate,
            Command::Converge => Subcommand::Converge,
            Command::Validate => Subcommand::Validate,
        }
    }
}

/// DPP solver and tug-of-war simulator for the parabolic obstacle problem.
#[derive(Debug, Parser)]
#[command(version)]
struct Cli {
    command: Command,
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output.directory`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed; overrides the simulation and study seeds.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads, 0 for one per core.
    #[arg(long, default_value_t = 0)]
    threads: usize,
    #[arg(long)]
    quiet: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.downcast_ref::<RunError>().map(RunError::exit_code).unwrap_or(1);
            ExitCode::from(code as u8)
        }
    }
}

fn execute(cli: &Cli) -> anyhow::Result<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global()
        .context("configuring the thread pool")?;
    let text = std::fs::read_to_string(&cli.config)
        .with_context(|| format!("reading {}", cli.config.display()))?;
    let config = parse_config(&text).map_err(RunError::from)?;
    let options = RunOptions {
        out_dir: cli.out.clone(),
        seed: cli.seed,
    };
    let manifest = run(cli.command.into(), &config, &options).map_err(|f| f.error)?;
    if !cli.quiet {
        println!(
            "{} finished: {} file(s) in {}",
            manifest.subcommand.as_str(),
            manifest.files.len(),
            manifest.config.output.directory
        );
        for (key, value) in &manifest.results {
            println!("  {key}: {value}");
        }
    }
    Ok(())
}
