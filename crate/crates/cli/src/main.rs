use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ventric::commands;
use ventric::config::PipelineConfig;
use ventric::verify;

/// Direct 3D biventricular shape prediction pipeline.
#[derive(Parser)]
#[command(name = "ventric", version, about)]
struct Cli {
    /// Configuration file (key = value lines); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads; 1 is the fully deterministic baseline and other
    /// counts produce identical outputs.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Override the report/output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic phantom cohort.
    GenSynthetic,
    /// Fit the template to each subject's contours.
    Register,
    /// Align training shapes and build the shape model.
    BuildPdm,
    /// Train the prediction network.
    Train,
    /// Predict test-subject shapes from a checkpoint.
    Predict {
        /// Checkpoint file; defaults to <model_dir>/checkpoint.nnet.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Compare predictions against reference shapes.
    Evaluate {
        /// Voxel spacing in mm for the Dice overlap.
        #[arg(long)]
        voxel_mm: Option<f64>,
    },
    /// Run the oracle suite; exits non-zero on any failure.
    Verify,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut config = match &cli.config {
        Some(path) => match PipelineConfig::load(path) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(1);
            }
        },
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(threads) = cli.threads {
        config.threads = threads;
    }
    if let Some(out) = cli.out {
        config.report_dir = out;
    }

    let result = match cli.command {
        Command::GenSynthetic => commands::gen_synthetic(&config),
        Command::Register => commands::register(&config),
        Command::BuildPdm => commands::build_pdm(&config),
        Command::Train => commands::train(&config),
        Command::Predict { checkpoint } => commands::predict(&config, checkpoint.as_deref()),
        Command::Evaluate { voxel_mm } => {
            if let Some(v) = voxel_mm {
                config.voxel_mm = v;
            }
            if let Err(e) = config.validate() {
                eprintln!("error: {e}");
                return ExitCode::from(1);
            }
            commands::evaluate(&config)
        }
        Command::Verify => {
            let failures = verify::run_all();
            return if failures == 0 {
                ExitCode::SUCCESS
            } else {
                eprintln!("error: {failures} verification check(s) failed");
                ExitCode::from(1)
            };
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
