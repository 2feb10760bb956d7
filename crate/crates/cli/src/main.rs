use clap::{Args, Parser, Subcommand};
use rescnn_cli::commands::{
    cmd_eval, cmd_inspect, cmd_synth_check, cmd_train, EvalArgs, InspectArgs, SynthCheckArgs,
    SYNTH_CHECK_THRESHOLD,
};
use rescnn_cli::config::{resolve_config, CliOverrides};
use rescnn_cli::{exit, exit_code_for};
use std::path::PathBuf;
use std::process::ExitCode;

/// Residual 1D CNN for epileptic EEG classification.
#[derive(Parser)]
#[command(name = "rescnn", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write run artifacts (checkpoints, logs, metrics).
    Train(TrainCli),
    /// Evaluate a checkpoint on a split part; metrics JSON to stdout + file.
    Eval(EvalCli),
    /// Export hidden-unit activation heatmap data and top-k input tables.
    Inspect(InspectCli),
    /// Train on the built-in synthetic task and verify test accuracy >= 95%.
    SynthCheck(SynthCheckCli),
}

#[derive(Args)]
struct TrainCli {
    /// JSON config file; CLI flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset: bonn, bern or synthetic.
    #[arg(long)]
    dataset: Option<String>,
    /// Dataset root directory (or set $RESCNN_DATA_ROOT).
    #[arg(long)]
    data_root: Option<PathBuf>,
    /// Output directory for run artifacts.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
}

#[derive(Args)]
struct EvalCli {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Split manifest written by `train`.
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    data_root: Option<PathBuf>,
    /// Part to evaluate: train, val or test.
    #[arg(long, default_value = "test")]
    part: String,
    /// Metrics JSON output path (default: next to the checkpoint).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    batch_size: usize,
}

#[derive(Args)]
struct InspectCli {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    data_root: Option<PathBuf>,
    #[arg(long, default_value = "test")]
    part: String,
    /// How many top inputs to report per unit.
    #[arg(long, default_value_t = 4)]
    top_k: usize,
    /// Restrict the top-k table to these unit indices (0-based).
    #[arg(long, value_delimiter = ',')]
    units: Option<Vec<usize>>,
    /// Output directory for heatmap.csv, heatmap_groups.json and topk.csv.
    #[arg(long, default_value = "inspect")]
    out: PathBuf,
    #[arg(long, default_value_t = 20)]
    batch_size: usize,
}

#[derive(Args)]
struct SynthCheckCli {
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    /// Keep artifacts here instead of the system temp directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run and report without asserting the accuracy bar.
    #[arg(long)]
    report_only: bool,
}

fn run(cli: Cli) -> Result<i32, rescnn_core::error::Error> {
    match cli.command {
        Command::Train(args) => {
            let overrides = CliOverrides {
                data_root: args.data_root,
                output_dir: args.out,
                seed: args.seed,
                epochs: args.epochs,
            };
            let cfg = resolve_config(args.dataset.as_deref(), args.config.as_deref(), &overrides)?;
            let artifacts = cmd_train(&cfg, true)?;
            println!(
                "trained {} epochs; best val acc {:.4} (epoch {}); test acc {:.4}",
                artifacts.rows.len(),
                artifacts.best_val_acc,
                artifacts.best_epoch,
                artifacts.test_metrics.accuracy
            );
            println!("artifacts in {}", artifacts.out_dir.display());
            Ok(exit::OK)
        }
        Command::Eval(args) => {
            let (doc, out_path) = cmd_eval(&EvalArgs {
                checkpoint: args.checkpoint,
                manifest: args.manifest,
                data_root: args.data_root,
                part: args.part,
                out: args.out,
                batch_size: args.batch_size,
            })?;
            println!("{}", doc.to_json_pretty()?);
            eprintln!("metrics written to {}", out_path.display());
            Ok(exit::OK)
        }
        Command::Inspect(args) => {
            let outputs = cmd_inspect(&InspectArgs {
                checkpoint: args.checkpoint,
                manifest: args.manifest,
                data_root: args.data_root,
                part: args.part,
                top_k: args.top_k,
                units: args.units,
                out_dir: args.out,
                batch_size: args.batch_size,
            })?;
            println!(
                "wrote {} ({} examples x {} units), {}, {}",
                outputs.heatmap_csv.display(),
                outputs.n_examples,
                outputs.n_units,
                outputs.groups_json.display(),
                outputs.topk_csv.display()
            );
            Ok(exit::OK)
        }
        Command::SynthCheck(args) => {
            let outcome = cmd_synth_check(&SynthCheckArgs {
                seed: args.seed,
                epochs: args.epochs,
                out_dir: args.out,
                report_only: args.report_only,
            })?;
            println!(
                "synthetic test accuracy {:.4} after {} epochs (bar {:.2})",
                outcome.test_accuracy, outcome.epochs_run, SYNTH_CHECK_THRESHOLD
            );
            if args.report_only || outcome.passed {
                Ok(exit::OK)
            } else {
                println!("accuracy bar missed");
                Ok(exit::FAILURE)
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e) as u8)
        }
    }
}
