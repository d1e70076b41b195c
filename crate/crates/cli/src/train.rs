use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use dsacd_core::envs::Environment;
use dsacd_core::trainer::{append_metrics, load_checkpoint, save_checkpoint, Trainer};

use crate::config::RunConfig;
use crate::TrainArgs;

pub const METRICS_FILE: &str = "metrics.jsonl";
pub const CHECKPOINT_FILE: &str = "checkpoint.ckpt";
pub const CONFIG_FILE: &str = "config.toml";

pub fn run(args: TrainArgs) -> Result<()> {
    let mut overrides = args.overrides.clone();
    if let Some(seed) = args.seed {
        overrides.push(format!("trainer.seed={seed}"));
    }
    if let Some(n) = args.iterations {
        overrides.push(format!("iterations={n}"));
    }
    if args.deterministic {
        overrides.push("trainer.record_wall_time=false".into());
    }
    let config = RunConfig::load(&args.config, &overrides)?;
    let out = config.output_dir(args.output.out.as_deref(), args.output.out_root.as_deref());
    fs::create_dir_all(out.join("checkpoints"))
        .with_context(|| format!("cannot create output directory {}", out.display()))?;

    let resolved = config.resolved(&out)?;
    fs::write(out.join(CONFIG_FILE), resolved.to_toml()?)
        .with_context(|| format!("cannot write to {}", out.display()))?;

    let metrics = out.join(METRICS_FILE);
    let mut trainer = match &args.checkpoint {
        Some(path) => {
            let mut t = load_checkpoint(path)
                .with_context(|| format!("cannot resume from {}", path.display()))?;
            if t.spec != config.make_env()?.spec() {
                bail!(
                    "checkpoint environment does not match config env `{}`",
                    config.env
                );
            }
            t.config.record_wall_time = resolved.trainer.record_wall_time;
            t
        }
        None => {
            fs::write(&metrics, "")?;
            Trainer::new(config.make_env()?, resolved.trainer)?
        }
    };
    if !metrics.exists() {
        fs::write(&metrics, "")?;
    }

    log::info!(
        "training {} for {} iterations into {}",
        config.env,
        config.iterations,
        out.display()
    );
    let every = config.checkpoint_every;
    for i in 1..=config.iterations {
        let record = trainer.train_iteration();
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                // keep the last good state for post-mortems
                let _ = save_checkpoint(&trainer, &out.join("aborted.ckpt"), false);
                return Err(e.into());
            }
        };
        append_metrics(&metrics, &record)?;
        if every > 0 && i % every == 0 {
            checkpoint(&trainer, &out, config.checkpoint_buffer)?;
            log::info!(
                "iteration {} updates {} return {:?} alpha {:.4}",
                record.iteration,
                record.updates,
                record.episode_return_mean,
                record.alpha
            );
        }
    }
    checkpoint(&trainer, &out, config.checkpoint_buffer)?;
    Ok(())
}

fn checkpoint(trainer: &Trainer, out: &Path, buffer: bool) -> Result<()> {
    let name = format!("iter_{:07}.ckpt", trainer.iteration());
    save_checkpoint(trainer, &out.join("checkpoints").join(name), buffer)?;
    save_checkpoint(trainer, &out.join(CHECKPOINT_FILE), buffer)?;
    Ok(())
}
