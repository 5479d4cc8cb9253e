use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use qmon_cli::{execute, replay, suite_config, CliError, CliResult, Manifest, RunRequest};

#[derive(Parser)]
#[command(
    name = "qmon",
    version,
    about = "Continuous-monitoring simulations and acceptance suite"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment described by a TOML config.
    Run {
        config: PathBuf,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
        /// Output directory (default: config `output`, else runs/<experiment>-<seed>).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the manifest of a run directory.
    Manifest { dir: PathBuf },
    /// Re-run a recorded run and compare output checksums.
    Replay {
        dir: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Run the acceptance criteria A1-A14.
    Verify {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Subset of criteria, e.g. `--criteria A1,A10`.
        #[arg(long, value_delimiter = ',')]
        criteria: Vec<String>,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Run {
            config,
            seed,
            threads,
            out,
        } => {
            let config_text = fs::read_to_string(&config).map_err(|e| {
                CliError::config("<file>", format!("cannot read {}: {e}", config.display()))
            })?;
            finish(execute(&RunRequest {
                config_text,
                seed,
                out,
                threads,
                quiet: false,
            })?)
        }
        Command::Manifest { dir } => {
            let m = Manifest::load(&dir)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&m).map_err(|e| CliError::Manifest(e.to_string()))?
            );
            Ok(())
        }
        Command::Replay { dir, out, threads } => {
            let r = replay(&dir, out.as_deref(), threads)?;
            if r.identical() {
                println!("replay identical: {}", r.dir.display());
                Ok(())
            } else {
                for m in &r.mismatches {
                    eprintln!("{m}");
                }
                Err(CliError::Mismatch(format!(
                    "{} file(s) differ",
                    r.mismatches.len()
                )))
            }
        }
        Command::Verify {
            seed,
            threads,
            out,
            criteria,
        } => {
            let criteria: Vec<String> = criteria.iter().map(|c| c.trim().to_uppercase()).collect();
            finish(execute(&RunRequest {
                config_text: suite_config(&criteria),
                seed,
                out,
                threads,
                quiet: false,
            })?)
        }
    }
}

fn finish(run: qmon_cli::RunSummary) -> CliResult<()> {
    println!(
        "wrote {} ({} files)",
        run.dir.display(),
        run.manifest.outputs.len()
    );
    match run.manifest.failed_criteria {
        0 => Ok(()),
        n => Err(CliError::SuiteFailed(n)),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("qmon: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
