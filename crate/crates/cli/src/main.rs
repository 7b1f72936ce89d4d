use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use morphevo::stats::PAdjust;
use morphevo_cli::commands::{self, Outcome, RunOptions};
use morphevo_cli::config::{ExperimentConfig, LatticeSpec};
use morphevo_cli::{CliError, CliResult};

#[derive(Parser)]
#[command(
    name = "morphevo",
    version,
    about = "Evolve and evaluate morphology-robust generalist controllers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base seed, overriding the config
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of runs, overriding the config
    #[arg(long, global = true)]
    runs: Option<usize>,
    /// Output directory (or file for render)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; 0 uses every core
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// No progress output
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run seeded evolution runs and summarize them on the test sets
    Evolve {
        #[arg(long, hide = true)]
        halt_after: Option<u64>,
    },
    /// Evaluate a saved archive over a morphology lattice
    Sweep {
        archive: PathBuf,
        /// ox,oy,sx,sy,nx,ny; defaults to the archive's global lattice
        #[arg(long)]
        lattice: Option<LatticeSpec>,
        #[arg(long, default_value_t = 3)]
        n_eval: usize,
    },
    /// Kruskal-Wallis, Dunn and medians over run summaries grouped by `group`
    Stats {
        #[arg(required = true)]
        summaries: Vec<PathBuf>,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// none, bonferroni or holm
        #[arg(long, default_value = "none")]
        adjust: PAdjust,
    },
    /// Run the config under all four training schedules and compare them
    ScheduleCompare {
        #[arg(long, hide = true)]
        halt_after: Option<u64>,
    },
    /// Render a sweep CSV as an SVG heatmap
    Render { csv: PathBuf },
}

fn load_config(common: &Common) -> CliResult<ExperimentConfig> {
    let path = common
        .config
        .as_deref()
        .ok_or_else(|| CliError::Config("--config is required for this command".into()))?;
    let mut config = ExperimentConfig::load(path)?;
    if let Some(seed) = common.seed {
        config.experiment.base_seed = seed;
    }
    if let Some(runs) = common.runs {
        config.experiment.runs = runs;
    }
    if let Some(jobs) = common.jobs {
        config.experiment.jobs = jobs;
    }
    if let Some(out) = &common.out {
        config.experiment.output = out.display().to_string();
    }
    Ok(config)
}

fn halted(quiet: bool) {
    if !quiet {
        eprintln!("halted; rerun the same command to resume from the checkpoints");
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let common = &cli.common;
    match cli.command {
        Command::Evolve { halt_after } => {
            let config = load_config(common)?;
            let options = RunOptions {
                quiet: common.quiet,
                halt_after,
            };
            let group = config.training.size.to_string();
            let out = PathBuf::from(&config.experiment.output);
            match commands::evolve(&config, &out, &group, &options)? {
                Outcome::Done(rows) => {
                    if !common.quiet {
                        println!("{} run(s) written to {}", rows.len(), out.display());
                    }
                }
                Outcome::Halted => halted(common.quiet),
            }
        }
        Command::Sweep {
            archive,
            lattice,
            n_eval,
        } => {
            let out = common.out.clone().unwrap_or_else(|| PathBuf::from("."));
            let grid = commands::sweep(&archive, lattice, n_eval, common.seed, &out)?;
            if !common.quiet {
                println!(
                    "{} cells written to {}",
                    grid.grid.len(),
                    out.join("sweep.csv").display()
                );
            }
        }
        Command::Stats {
            summaries,
            alpha,
            adjust,
        } => {
            let text = commands::stats(&summaries, alpha, adjust, common.out.as_deref())?;
            print!("{text}");
        }
        Command::ScheduleCompare { halt_after } => {
            let config = load_config(common)?;
            let options = RunOptions {
                quiet: common.quiet,
                halt_after,
            };
            let out = PathBuf::from(&config.experiment.output);
            match commands::schedule_compare(&config, &out, &options)? {
                Outcome::Done(text) => print!("{text}"),
                Outcome::Halted => halted(common.quiet),
            }
        }
        Command::Render { csv } => {
            let out = common
                .out
                .clone()
                .unwrap_or_else(|| Path::new(&csv).with_extension("svg"));
            commands::render(&csv, &out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
