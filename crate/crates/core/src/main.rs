use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use tokprune::harness::config::parse_rho_list;
use tokprune::harness::cost::{cost_report, CostModel};
use tokprune::harness::eval::held_out_set;
use tokprune::harness::manifest::{self, MANIFEST_NAME};
use tokprune::harness::{self, exit_code, HarnessError, Result, Schedule, TrainConfig};
use tokprune::oracle::FrozenReadout;
use tokprune::synthgen::{ClassBasis, Stage};

#[derive(Parser)]
#[command(name = "tokprune", version, about = "Residual-aware token gating trained with group rollouts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the pseudo -> drift curriculum.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value = "both")]
        stage: Schedule,
        #[arg(long, default_value = "gate.ckpt")]
        checkpoint: PathBuf,
        /// Metrics log (JSON lines).
        #[arg(long, default_value = "metrics.jsonl")]
        out: PathBuf,
    },
    /// Score a checkpoint with top-K selection on held-out or materialized videos.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Held-out split to generate when `--data` is absent.
        #[arg(long, default_value = "pseudo")]
        stage: Stage,
        /// Directory holding a `manifest.jsonl` written by `gen`.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value_t = 200)]
        videos: usize,
        #[arg(long, default_value = "0.10,0.25,0.40")]
        rho: String,
        /// `dCE` threshold; defaults to the stage's configured tau.
        #[arg(long)]
        tau: Option<f64>,
        /// Write the reports as JSON here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the top-K mask of a `.tok` file.
    Compress {
        tok: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "0.25")]
        rho: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Prefill cost and speedup of the analytic transformer model.
    Cost {
        #[arg(long, default_value_t = 28)]
        layers: u32,
        #[arg(long, default_value_t = 3584)]
        width: u32,
        #[arg(long, default_value_t = 4.0)]
        expansion: f64,
        #[arg(long, default_value_t = 42657)]
        full: u64,
        #[arg(long, default_value_t = 4439)]
        compressed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Materialize synthetic videos as `.tok` files plus a manifest.
    Gen {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides `[data] seed`.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "pseudo")]
        stage: Stage,
        #[arg(long, default_value_t = 100)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        first: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(path: Option<&Path>) -> Result<TrainConfig> {
    match path {
        Some(p) => TrainConfig::load(p),
        None => Ok(TrainConfig::default()),
    }
}

fn single_rho(text: &str) -> Result<f64> {
    match parse_rho_list(text)?.as_slice() {
        [rho] => Ok(*rho),
        _ => Err(HarnessError::Config(format!("expected one rho value, got {text:?}"))),
    }
}

fn emit(value: &impl serde::Serialize, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(p) => std::fs::write(p, text + "\n")?,
        None => println!("{text}"),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { config, seed, stage, checkpoint, out } => {
            let mut cfg = load_config(config.as_deref())?;
            cfg.seed = seed;
            let outcome = harness::train(&cfg, stage, &checkpoint, &out)?;
            for (stage, path) in &outcome.stage_checkpoints {
                eprintln!("{} checkpoint: {}", stage.name(), path.display());
            }
            eprintln!(
                "trained {} groups; final checkpoint {}; {} metrics records in {}",
                outcome.iteration,
                checkpoint.display(),
                outcome.metric_records,
                out.display()
            );
        }
        Command::Eval { checkpoint, config, stage, data, videos, rho, tau, out } => {
            let cfg = load_config(config.as_deref())?;
            let rhos = parse_rho_list(&rho)?;
            let ckpt = harness::load_checkpoint(&checkpoint)?;
            let (basis, readout) =
                FrozenReadout::from_config(cfg.data.classes, cfg.data.dim, &cfg.oracle)?;
            let set = match data {
                Some(dir) => manifest::read_manifest(dir.join(MANIFEST_NAME))?
                    .iter()
                    .map(|e| manifest::load_video(&dir, e))
                    .collect::<Result<Vec<_>>>()?,
                None => held_out_set(&cfg.data, &basis, stage, videos)?,
            };
            let tau = tau.unwrap_or(cfg.stage(stage).tau);
            let reports = harness::evaluate(&ckpt.params, &readout, &set, &rhos, tau)?;
            emit(&reports, out.as_deref())?;
        }
        Command::Compress { tok, checkpoint, rho, out } => {
            let mask = harness::compress(&checkpoint, &tok, single_rho(&rho)?, &out)?;
            eprintln!("kept {} of {} tokens -> {}", mask.retained(), mask.len(), out.display());
        }
        Command::Cost { layers, width, expansion, full, compressed, out } => {
            let model = CostModel::from_architecture(layers, width, expansion)?;
            emit(&cost_report(&model, full, compressed)?, out.as_deref())?;
        }
        Command::Gen { config, seed, stage, count, first, out } => {
            let mut cfg = load_config(config.as_deref())?;
            if let Some(s) = seed {
                cfg.data.seed = s;
            }
            cfg.validate()?;
            let basis = ClassBasis::new(cfg.data.classes, cfg.data.dim, cfg.oracle.seed);
            let entries = manifest::materialize(&cfg.data, &basis, stage, first, count, &out)?;
            eprintln!("wrote {} videos to {}", entries.len(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { exit_code::CONFIG as u8 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
