//! `faciesgan`: synthesize datasets, train, evaluate, sweep and summarize
//! conditional facies GAN experiments from a TOML config.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use faciesgan::experiment::{
    cmd_eval, cmd_report, cmd_sweep, cmd_synth, cmd_train, EvalOptions, LoadedConfig, TrainOptions,
};
use faciesgan::Error;

#[derive(Parser)]
#[command(name = "faciesgan", version, about = "Conditional GANs for facies proportions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArg {
    /// Experiment config (TOML).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Build the configured training dataset and plot its label histogram.
    Synth {
        #[command(flatten)]
        cfg: ConfigArg,
        /// Replace an existing dataset.
        #[arg(long)]
        force: bool,
    },
    /// Train one run per configured seed (or just `--seed`).
    Train {
        #[command(flatten)]
        cfg: ConfigArg,
        #[arg(long, value_name = "N")]
        seed: Option<u64>,
        /// Continue from a trainer checkpoint.
        #[arg(long, value_name = "PATH")]
        resume: Option<PathBuf>,
        /// Discard an existing run directory.
        #[arg(long)]
        force: bool,
    },
    /// Sample a trained generator and write figures and metric reports.
    Eval {
        #[command(flatten)]
        cfg: ConfigArg,
        /// Run to evaluate; defaults to the first configured seed.
        #[arg(long, value_name = "N")]
        seed: Option<u64>,
        /// Checkpoint to load instead of the run's best.
        #[arg(long, value_name = "PATH")]
        checkpoint: Option<PathBuf>,
        /// Latent truncation threshold for the paired outlier report.
        #[arg(long, value_name = "T")]
        truncation: Option<f64>,
        /// Permit conditions outside the training range.
        #[arg(long)]
        allow_extrapolation: bool,
        /// Output directory; defaults to `<run>/eval`.
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Train every variant of the config's sweep, then report.
    Sweep {
        #[command(flatten)]
        cfg: ConfigArg,
        /// Retrain finished runs.
        #[arg(long)]
        force: bool,
    },
    /// Summarize the best outlier percentage of finished runs.
    Report {
        #[command(flatten)]
        cfg: ConfigArg,
    },
}

fn progress(line: &str) {
    eprintln!("{line}");
}

fn run(cli: Cli) -> faciesgan::Result<()> {
    match cli.command {
        Command::Synth { cfg, force } => {
            let cfg = LoadedConfig::load(&cfg.config)?;
            let out = cmd_synth(&cfg, force)?;
            println!("wrote {} grids to {}", out.entries, out.dir.display());
            println!("{}", out.histogram_svg.display());
        }
        Command::Train {
            cfg,
            seed,
            resume,
            force,
        } => {
            let cfg = LoadedConfig::load(&cfg.config)?;
            let opts = TrainOptions { seed, resume, force };
            for run in cmd_train(&cfg, &opts, &mut progress)? {
                match run.best_average_outlier_pct {
                    Some(b) => println!(
                        "seed {}: {} epochs, best average outlier {:.3}% at epoch {}",
                        run.seed,
                        run.epochs_completed,
                        b,
                        run.best_epoch.unwrap_or(0)
                    ),
                    None => println!("seed {}: {} epochs", run.seed, run.epochs_completed),
                }
                println!("{}", run.run_dir.display());
            }
        }
        Command::Eval {
            cfg,
            seed,
            checkpoint,
            truncation,
            allow_extrapolation,
            out,
        } => {
            let cfg = LoadedConfig::load(&cfg.config)?;
            let opts = EvalOptions {
                seed,
                checkpoint,
                truncation,
                allow_extrapolation,
                out,
            };
            let report = cmd_eval(&cfg, &opts, &mut progress)?;
            for c in &report.conditions {
                println!(
                    "{:<12} y={:<8} mean {:.4} std {:.4} outliers {:.2}%",
                    c.set, c.condition, c.mean, c.std, c.outlier_pct
                );
            }
            println!("average outlier percentage {:.3}%", report.average_outlier_pct);
            if let Some(t) = report.truncated_average_outlier_pct {
                println!("truncated average outlier percentage {t:.3}%");
            }
            println!("{}", report.out_dir.display());
        }
        Command::Sweep { cfg, force } => {
            let cfg = LoadedConfig::load(&cfg.config)?;
            print_report(&cmd_sweep(&cfg, force, &mut progress)?);
        }
        Command::Report { cfg } => {
            let cfg = LoadedConfig::load(&cfg.config)?;
            print_report(&cmd_report(&cfg)?);
        }
    }
    Ok(())
}

fn print_report(report: &faciesgan::experiment::Report) {
    for v in &report.variants {
        println!("{:<36} {:.3} ± {:.3} ({} seeds)", v.variant, v.mean, v.std, v.seeds.len());
    }
    for f in &report.files {
        println!("{}", f.display());
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn exit_code(e: &Error) -> ExitCode {
    if e.is_validation() {
        ExitCode::from(1)
    } else {
        ExitCode::from(2)
    }
}
