use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use seer::analysis::{export_pgm, observation_attention};
use seer::env::Env;
use seer::harness::{compare_dirs, run::seed_dir, run::write_run_summary, train_seed, Checkpoint, Mode, RunConfig};

#[derive(Parser)]
#[command(name = "seer", version, about = "Pixel DQN with encoder freezing and latent replay")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one seed and write metrics, checkpoint and summary under --out.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Master seed; defaults to every seed listed in the config.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        mode: Option<Mode>,
        /// Byte budget for stored observations.
        #[arg(long)]
        memory_budget: Option<u64>,
    },
    /// Compare eval returns of two runs at equal MACs and equal steps.
    Compare {
        dir_a: PathBuf,
        dir_b: PathBuf,
        #[arg(long)]
        at_macs: f64,
        #[arg(long)]
        at_steps: f64,
        /// Print JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Write the spatial attention map of a checkpoint's encoder as PGM.
    Analyze {
        #[arg(long)]
        checkpoint: PathBuf,
        /// The observation is the first frame stack of an environment seeded
        /// with this index.
        #[arg(long, default_value_t = 0)]
        obs: u64,
        /// Conv layer index; defaults to the last encoder convolution.
        #[arg(long)]
        layer: Option<usize>,
        #[arg(long, default_value = "attention.pgm")]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> seer::Result<()> {
    match cli.command {
        Command::Train {
            config,
            seed,
            out,
            mode,
            memory_budget,
        } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(m) = mode {
                cfg.mode = m;
            }
            if memory_budget.is_some() {
                cfg.memory_budget = memory_budget;
            }
            if let Some(s) = seed {
                cfg.seeds = vec![s];
            }
            cfg.validate()?;
            std::fs::create_dir_all(&out)?;
            std::fs::write(out.join("config.json"), cfg.to_json())?;
            let mut failed = false;
            for &s in &cfg.seeds {
                let summary = train_seed(&cfg, s, &out)?;
                println!(
                    "seed {s}: {} steps, final eval {}, {} MACs -> {}",
                    summary.steps,
                    summary.final_eval_mean.map_or("n/a".into(), |m| format!("{m:.3}")),
                    summary.cumulative_macs,
                    seed_dir(&out, s).display()
                );
                if let Some(f) = &summary.failure {
                    eprintln!("seed {s} failed: {f}");
                    failed = true;
                }
            }
            write_run_summary(&out, cfg.mode)?;
            if failed {
                return Err(seer::Error::NonFinite("at least one seed aborted".into()));
            }
            Ok(())
        }
        Command::Compare {
            dir_a,
            dir_b,
            at_macs,
            at_steps,
            json,
        } => {
            let c = compare_dirs(&dir_a, &dir_b, at_macs, at_steps)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&c)?);
            } else {
                print!("{c}");
            }
            Ok(())
        }
        Command::Analyze {
            checkpoint,
            obs,
            layer,
            out,
        } => {
            let ck = Checkpoint::load(&checkpoint)?;
            let spec = ck.meta.config.network_spec()?;
            let params = ck.params(&spec, "online")?;
            let (_, observation) = Env::new(ck.meta.config.env_config(), obs)?;
            let map = observation_attention(&observation, &spec, &params, layer)?;
            export_pgm(&map, &out)?;
            println!("{}x{} attention map -> {}", map.width(), map.height(), out.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
