use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use plateau_cli::config::ExperimentConfig;
use plateau_cli::plots::emit_plots;
use plateau_cli::{run_experiment, RunOptions};

#[derive(Parser)]
#[command(name = "plateau", version, about = "Finite-shot training and concentration experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Source {
    /// TOML experiment file.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in experiment: fig3, fig4-gd, fig4-qng, fig4-cvar, fig4-nn, fig4-rps, hypotest-demo, concentration-scan.
    #[arg(long)]
    preset: Option<String>,
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its artifacts.
    Run {
        #[command(flatten)]
        source: Source,
        /// Output directory (default: the config's output_dir, else runs/<name>).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads (default: all cores).
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        no_plots: bool,
    },
    /// Check a configuration and print it fully resolved.
    Validate {
        #[command(flatten)]
        source: Source,
    },
    /// Render SVG plots for a finished run directory.
    Plot {
        #[arg(long)]
        out: PathBuf,
    },
}

fn load(source: &Source) -> Result<ExperimentConfig, String> {
    let mut config = match (&source.config, &source.preset) {
        (Some(path), None) => ExperimentConfig::load(path).map_err(|e| format!("{}: {e}", path.display()))?,
        (None, Some(name)) => ExperimentConfig::from_preset(name).map_err(|e| e.to_string())?,
        _ => return Err("pass exactly one of --config or --preset".into()),
    };
    if let Some(seed) = source.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Validate { source } => match load(&source) {
            Ok(c) => {
                print!("{}", c.to_toml());
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(2)
            }
        },
        Command::Run { source, out, workers, no_plots } => {
            let config = match load(&source) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            let out_dir = out
                .or_else(|| config.output_dir.clone())
                .unwrap_or_else(|| PathBuf::from("runs").join(&config.name));
            let opts = RunOptions { out_dir: out_dir.clone(), plots: !no_plots, workers };
            match run_experiment(&config, &opts) {
                Ok(outcome) if outcome.record.status == "ok" => {
                    println!(
                        "{}: {} files, {} plots in {:.1}s -> {}",
                        config.name,
                        outcome.record.files.len(),
                        outcome.record.plots.len(),
                        outcome.record.elapsed_seconds,
                        out_dir.display()
                    );
                    ExitCode::SUCCESS
                }
                Ok(outcome) => {
                    eprintln!("error: {}", outcome.record.error.unwrap_or_default());
                    eprintln!("partial artifacts kept in {}", out_dir.display());
                    ExitCode::from(1)
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(1)
                }
            }
        }
        Command::Plot { out } => match emit_plots(&out) {
            Ok(files) => {
                for f in files {
                    println!("{f}");
                }
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(1)
            }
        },
    }
}
