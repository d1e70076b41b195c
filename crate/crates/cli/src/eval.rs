use std::fs;

use anyhow::{bail, Context, Result};
use dsacd_core::envs::{Environment, ToyEnv};
use dsacd_core::policy::ActionSampler;
use dsacd_core::rng::sub_seed;
use dsacd_core::trainer::{load_checkpoint, rollout, EntropyMode, Trainer};
use dsacd_core::value::{evaluate_bias, BiasConfig, BiasReport};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::EvalArgs;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub env: String,
    pub episodes: usize,
    pub deterministic: bool,
    pub seed: u64,
    pub returns: Vec<f64>,
    pub mean_return: Option<f64>,
    pub std_return: Option<f64>,
    pub bias: Option<BiasReport>,
}

pub fn run(args: EvalArgs) -> Result<()> {
    let trainer = load_checkpoint(&args.checkpoint)
        .with_context(|| format!("cannot load {}", args.checkpoint.display()))?;
    let env = match &args.config {
        Some(path) => RunConfig::load(path, &args.overrides)?.make_env()?,
        None => trainer.pool.envs[0].clone(),
    };
    let report = evaluate(
        &trainer,
        env,
        args.episodes,
        args.seed,
        args.deterministic,
        args.bias,
    )?;
    let text = serde_json::to_string_pretty(&report)?;
    if let Some(dir) = &args.out {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("eval.json"), &text)?;
    }
    println!("{text}");
    Ok(())
}

pub fn evaluate(
    trainer: &Trainer,
    mut env: ToyEnv,
    episodes: usize,
    seed: u64,
    deterministic: bool,
    bias: bool,
) -> Result<EvalReport> {
    let spec = env.spec();
    if spec.state_dim != trainer.spec.state_dim || spec.action_dim != trainer.spec.action_dim {
        bail!(
            "environment `{}` has state/action dims {}/{}, checkpoint expects {}/{}",
            spec.name,
            spec.state_dim,
            spec.action_dim,
            trainer.spec.state_dim,
            trainer.spec.action_dim
        );
    }
    let sampler = if deterministic {
        trainer.policy.deterministic_sampler()
    } else {
        trainer.policy.sampler()
    };
    let returns = (0..episodes)
        .map(|e| Ok(rollout(&mut env, &sampler, sub_seed(seed, e as u64))?.total_reward()))
        .collect::<Result<Vec<f64>>>()?;
    let (mean_return, std_return) = if returns.is_empty() {
        (None, None)
    } else {
        let n = returns.len() as f64;
        let m = returns.iter().sum::<f64>() / n;
        let v = returns.iter().map(|r| (r - m).powi(2)).sum::<f64>() / n;
        (Some(m), Some(v.sqrt()))
    };
    let bias = if bias && episodes > 0 {
        Some(bias_report(trainer, &mut env, &sampler, episodes, seed)?)
    } else {
        None
    };
    Ok(EvalReport {
        env: spec.name,
        episodes,
        deterministic,
        seed,
        returns,
        mean_return,
        std_return,
        bias,
    })
}

fn bias_report(
    trainer: &Trainer,
    env: &mut ToyEnv,
    sampler: &dyn ActionSampler,
    episodes: usize,
    seed: u64,
) -> Result<BiasReport> {
    let cfg = &trainer.config;
    // The log-density bonus is the only one the rollout can reproduce.
    let alpha = match cfg.entropy.mode {
        EntropyMode::GmmLogDensity => trainer.alpha.alpha,
        _ => 0.0,
    };
    let bias_cfg = BiasConfig {
        n_episodes: episodes,
        gamma: cfg.gamma,
        n_q_samples: cfg.n_q_samples.max(32),
        alpha,
        n_actions: cfg.entropy.n_actions,
        em: cfg.entropy.em,
        seed,
        ..BiasConfig::default()
    };
    Ok(evaluate_bias(&trainer.value, env, sampler, &bias_cfg)?)
}
