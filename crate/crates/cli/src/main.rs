use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use jam_core::harness::{
    compare_frameworks, emit_report, evaluate_checkpoint, load_checkpoint, read_results_csv, render_plots, train,
    trajectory_svg, RunConfig,
};
use jam_core::model::Variant;
use jam_core::scene::{generate_dataset, parse_mix, read_dataset, uniform_mix, write_dataset, DatasetSpec, SceneDims};
use jam_core::taxonomy::fit_anchor_set;

#[derive(Parser)]
#[command(name = "jam", version, about = "Two-stage interactive trajectory prediction lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Profile {
    Micro,
    Full,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic interactive-scene dataset.
    Datagen {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2000)]
        scenes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.2)]
        uturn_rate: f64,
        /// e.g. `crossing:0.4,merge:0.6`; uniform when omitted.
        #[arg(long)]
        mix: Option<String>,
        #[arg(long, value_enum, default_value_t = Profile::Micro)]
        profile: Profile,
    },
    /// Fit per-type k-means endpoint anchors.
    Anchors {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value_t = 64)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the default run config of a variant.
    Config {
        #[arg(long, default_value = "jam")]
        variant: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train from a run config.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Evaluate a checkpoint on a dataset.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train and evaluate several variants over several seeds.
    Compare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "marginal-free,marginal-aware,joint-onestep,jam")]
        variants: Vec<String>,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
        seeds: Vec<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-render plots from a results CSV, optionally with trajectory
    /// overlays of a checkpoint.
    Report {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, requires = "dataset")]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long, default_value_t = 4)]
        scenes: usize,
    },
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Datagen {
            out,
            scenes,
            seed,
            uturn_rate,
            mix,
            profile,
        } => {
            let spec = DatasetSpec {
                n_scenes: scenes,
                dims: match profile {
                    Profile::Micro => SceneDims::micro(),
                    Profile::Full => SceneDims::full(),
                },
                mix: match mix {
                    Some(m) => parse_mix(&m)?,
                    None => uniform_mix(),
                },
                uturn_rate,
                seed,
            };
            let ds = generate_dataset(&spec)?;
            write_dataset(&out, &ds)?;
            log::info!("wrote {} scenes to {}", ds.scenes.len(), out.display());
        }
        Command::Anchors { dataset, k, seed, out } => {
            let ds = read_dataset(&dataset)?;
            fit_anchor_set(&ds, k, seed)?.write(&out)?;
            log::info!("wrote anchors to {}", out.display());
        }
        Command::Config { variant, out } => {
            let v: Variant = variant.parse()?;
            std::fs::write(&out, RunConfig::desk(v).to_toml()).with_context(|| out.display().to_string())?;
        }
        Command::Train { config } => {
            let cfg = RunConfig::load(&config)?;
            let outcome = train(&cfg)?;
            log::info!(
                "{} parameters, final epoch loss {:.4}, last checkpoint {}",
                outcome.model.num_params(),
                outcome.epoch_loss.last().copied().unwrap_or(f64::NAN),
                outcome.checkpoints.last().map(|p| p.display().to_string()).unwrap_or_default()
            );
        }
        Command::Eval {
            checkpoint,
            dataset,
            out,
        } => {
            let ev = evaluate_checkpoint(&checkpoint, &dataset, &out)?;
            for r in &ev.summary {
                println!(
                    "{:<16} minADE {:.4}  minFDE {:.4}  MR {:.4}  mAP {:.4}  soft mAP {:.4}",
                    r.agent_type, r.min_ade, r.min_fde, r.miss_rate, r.map, r.soft_map
                );
            }
        }
        Command::Compare {
            config,
            variants,
            seeds,
            out,
        } => {
            let cfg = RunConfig::load(&config)?;
            let variants: Vec<Variant> = variants.iter().map(|v| v.parse()).collect::<Result<_, _>>()?;
            let train_ds = read_dataset(&cfg.data.train)?;
            let valid_ds = read_dataset(&cfg.data.valid)?;
            let anchors = match &cfg.data.anchors {
                Some(p) => Some(jam_core::taxonomy::AnchorSet::read(p)?),
                None => None,
            };
            let table = compare_frameworks(&cfg, &variants, &seeds, &train_ds, &valid_ds, anchors.as_ref(), Some(&out))?;
            for v in &table.variants {
                let o = v.mean_overall();
                println!(
                    "{:<22} minADE {:.4}  minFDE {:.4}  MR {:.4}  mAP {:.4}  params {}  {:.2} ms",
                    v.variant.name(),
                    o.min_ade,
                    o.min_fde,
                    o.miss_rate,
                    o.map,
                    v.params,
                    v.latency_ms
                );
            }
            emit_report(&table, &[], &out)?;
            if !table.complete {
                bail!("comparison incomplete: {:?}", table.failures);
            }
        }
        Command::Report {
            results,
            out,
            checkpoint,
            dataset,
            scenes,
        } => {
            let lines = read_results_csv(&results)?;
            for f in render_plots(&lines, &out)? {
                log::info!("wrote {}", f.display());
            }
            if let (Some(ck), Some(ds)) = (checkpoint, dataset) {
                let (_, model) = load_checkpoint(&ck)?;
                let ds = read_dataset(&ds)?;
                for (i, s) in ds.scenes.iter().take(scenes).enumerate() {
                    let pred = model.predict(s)?;
                    let path = out.join(format!("overlay-{i:03}.svg"));
                    std::fs::write(&path, trajectory_svg(s, &pred.joint)).with_context(|| path.display().to_string())?;
                }
            }
        }
    }
    Ok(())
}
