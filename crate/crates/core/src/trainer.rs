//! The training loop: parallel collection into a replay buffer, value and
//! policy updates on a delayed schedule, temperature control, target-network
//! tracking, metrics, and checkpoints.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use ndarray::Array2;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::buffer::{ReplayBuffer, Transition};
use crate::entropy::{estimate_policy_entropy, AlphaConfig, AlphaController, AlphaStep, EmConfig};
use crate::envs::{EnvSpec, Environment, Step, ToyEnv};
use crate::error::{Error, Result};
use crate::nn::{Adam, AdamConfig, Params};
use crate::policy::{
    policy_loss, ActionSampler, ExplorationConfig, PolicyConfig, PolicyEntropyConfig, PolicyModel,
    UniformSampler,
};
use crate::rng::{rng_from_seed, sub_seed, StdRng};
use crate::stats::{mean, std_dev};
use crate::value::{
    build_bellman_targets, dvn_loss, EntropyBonus, ReturnDistributionModel, ValueConfig,
};

/// `target ← target + τ·(online − target)`, computed so that `τ = 0` and
/// `online == target` leave `target` bit-identical and `τ = 1` copies.
pub fn soft_update(target: &mut Params, online: &Params, tau: f64) -> Result<()> {
    target.check_same_shape(online)?;
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::Config(format!("tau must lie in [0, 1], got {tau}")));
    }
    if tau == 1.0 {
        target.0.clone_from(&online.0);
        return Ok(());
    }
    for (t, o) in target.0.iter_mut().zip(&online.0) {
        ndarray::Zip::from(t)
            .and(o)
            .for_each(|t, &o| *t += tau * (o - *t));
    }
    Ok(())
}

/// How the entropy bonus enters the Bellman targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EntropyMode {
    /// `−α·log π̂(a′|s′)` from a mixture fitted at every next state.
    #[default]
    GmmLogDensity,
    /// `+α·Ĥ(s′)` from a mixture fitted at every next state.
    StateEntropy,
    /// `+α·Ĥ` using the latest batch entropy estimate.
    BatchEntropy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EntropyConfig {
    pub n_actions: usize,
    /// Batch states used for each entropy estimate.
    pub states: usize,
    pub em: EmConfig,
    pub mode: EntropyMode,
}

impl Default for EntropyConfig {
    fn default() -> Self {
        Self {
            n_actions: 32,
            states: 16,
            em: EmConfig::default(),
            mode: EntropyMode::GmmLogDensity,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainerConfig {
    pub gamma: f64,
    pub tau: f64,
    pub value_lr: f64,
    pub policy_lr: f64,
    pub alpha: AlphaConfig,
    /// Policy, temperature and target updates run when the update counter is
    /// divisible by this.
    pub delayed_update_interval: u64,
    /// Updates that train only the value network before the policy,
    /// temperature and targets start moving.
    pub value_only_updates: u64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    /// Buffer size before updates start; `None` means ten batches.
    pub warmup: Option<usize>,
    /// Fill the warm-up portion of the buffer with uniformly random actions
    /// instead of policy actions.
    pub uniform_warmup: bool,
    pub samplers: usize,
    /// Environment steps collected per iteration, across all samplers.
    pub steps_per_iteration: usize,
    /// Gradient updates per collected step.
    pub updates_per_step: f64,
    pub n_q_samples: usize,
    pub entropy: EntropyConfig,
    pub exploration: ExplorationConfig,
    pub policy_entropy: PolicyEntropyConfig,
    pub adam: AdamConfig,
    pub value: ValueConfig,
    pub policy: PolicyConfig,
    pub seed: u64,
    pub record_wall_time: bool,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            tau: 0.005,
            value_lr: 3e-4,
            policy_lr: 3e-4,
            alpha: AlphaConfig::default(),
            delayed_update_interval: 2,
            value_only_updates: 0,
            batch_size: 256,
            buffer_capacity: 100_000,
            warmup: None,
            uniform_warmup: false,
            samplers: 1,
            steps_per_iteration: 1,
            updates_per_step: 1.0,
            n_q_samples: 2,
            entropy: EntropyConfig::default(),
            exploration: ExplorationConfig::default(),
            policy_entropy: PolicyEntropyConfig::default(),
            adam: AdamConfig::default(),
            value: ValueConfig::default(),
            policy: PolicyConfig::default(),
            seed: 0,
            record_wall_time: true,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(0.0..1.0).contains(&self.gamma) {
            return bad(format!("gamma must lie in [0, 1), got {}", self.gamma));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad(format!("tau must lie in (0, 1], got {}", self.tau));
        }
        if self.delayed_update_interval == 0 {
            return bad("delayed_update_interval must be at least 1".into());
        }
        if self.batch_size == 0 || self.samplers == 0 || self.n_q_samples == 0 {
            return bad("batch_size, samplers and n_q_samples must be positive".into());
        }
        if self.value_lr < 0.0 || self.policy_lr < 0.0 || !(self.updates_per_step >= 0.0) {
            return bad("learning rates and updates_per_step must be non-negative".into());
        }
        if self.entropy.n_actions < self.entropy.em.components || self.entropy.states == 0 {
            return bad(format!(
                "entropy estimate needs states > 0 and n_actions >= components ({} < {})",
                self.entropy.n_actions, self.entropy.em.components
            ));
        }
        self.policy_entropy.validate()?;
        if self.exploration.lambda < 0.0 {
            return bad("exploration lambda must be non-negative".into());
        }
        Ok(())
    }

    pub fn warmup_size(&self) -> usize {
        self.warmup.unwrap_or(10 * self.batch_size)
    }
}

/// One environment per sampler plus their running episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvPool {
    pub envs: Vec<ToyEnv>,
    states: Vec<Vec<f64>>,
    episode_return: Vec<f64>,
    episode_len: Vec<usize>,
    /// Episodes started so far; the next reset uses `sub_seed(seed, episodes)`.
    episodes: u64,
    seed: u64,
}

impl EnvPool {
    pub fn new(env: &ToyEnv, n: usize, seed: u64) -> Self {
        let mut pool = Self {
            envs: vec![env.clone(); n],
            states: vec![Vec::new(); n],
            episode_return: vec![0.0; n],
            episode_len: vec![0; n],
            episodes: 0,
            seed,
        };
        for i in 0..n {
            pool.reset(i);
        }
        pool
    }

    fn reset(&mut self, i: usize) {
        self.states[i] = self.envs[i].reset(sub_seed(self.seed, self.episodes));
        self.episodes += 1;
        self.episode_return[i] = 0.0;
        self.episode_len[i] = 0;
    }

    pub fn len(&self) -> usize {
        self.envs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.envs.is_empty()
    }

    pub fn spec(&self) -> EnvSpec {
        self.envs[0].spec()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CollectStats {
    pub steps: usize,
    pub episode_returns: Vec<f64>,
    pub episode_lengths: Vec<usize>,
}

/// Steps every sampler's environment with actions from `sampler` until
/// `n_steps` transitions are stored. Samplers run in parallel; their results
/// are appended in sampler order, so the outcome does not depend on thread
/// scheduling.
pub fn collect(
    pool: &mut EnvPool,
    sampler: &dyn ActionSampler,
    n_steps: usize,
    buffer: &mut ReplayBuffer,
    seed: u64,
) -> Result<CollectStats> {
    let mut stats = CollectStats::default();
    let n = pool.len();
    let mut round = 0u64;
    while stats.steps < n_steps {
        let k = n.min(n_steps - stats.steps);
        let results: Vec<Result<(Vec<f64>, Step)>> = pool.envs[..k]
            .par_iter_mut()
            .zip(pool.states[..k].par_iter())
            .enumerate()
            .map(|(i, (env, s))| {
                let row = Array2::from_shape_vec((1, s.len()), s.clone()).expect("row");
                let a = sampler
                    .sample_rows(&row, &[sub_seed(seed, round * n as u64 + i as u64)])?
                    .row(0)
                    .to_vec();
                let step = env.step(&a).map_err(|e| Error::Env {
                    index: i,
                    message: e.to_string(),
                })?;
                Ok((a, step))
            })
            .collect();
        for (i, res) in results.into_iter().enumerate() {
            let (action, step) = res?;
            let t = Transition {
                state: std::mem::take(&mut pool.states[i]),
                action,
                reward: step.reward,
                next_state: step.next_state.clone(),
                terminal: step.terminal,
            };
            if !t.is_finite() {
                return Err(Error::Env {
                    index: i,
                    message: format!("non-finite transition {t:?}"),
                });
            }
            buffer.push(t);
            pool.episode_return[i] += step.reward;
            pool.episode_len[i] += 1;
            stats.steps += 1;
            if step.terminal || step.truncated {
                stats.episode_returns.push(pool.episode_return[i]);
                stats.episode_lengths.push(pool.episode_len[i]);
                pool.reset(i);
            } else {
                pool.states[i] = step.next_state;
            }
        }
        round += 1;
    }
    Ok(stats)
}

/// One line of the metrics stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub iteration: u64,
    /// Gradient updates performed so far.
    pub updates: u64,
    pub value_loss: Option<f64>,
    /// Mean `Q̂` at policy actions (the ascended objective).
    pub policy_objective: Option<f64>,
    pub entropy: Option<f64>,
    pub alpha: f64,
    pub target_mean: Option<f64>,
    pub episodes: usize,
    pub episode_return_mean: Option<f64>,
    pub episode_return_std: Option<f64>,
    pub alpha_steps: Vec<AlphaStep>,
    pub wall_time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trainer {
    pub config: TrainerConfig,
    pub spec: EnvSpec,
    pub value: ReturnDistributionModel,
    pub policy: PolicyModel,
    pub alpha: AlphaController,
    value_opt: Adam,
    policy_opt: Adam,
    pub buffer: ReplayBuffer,
    pub pool: EnvPool,
    rng: StdRng,
    iteration: u64,
    updates: u64,
    update_credit: f64,
    last_entropy: Option<f64>,
}

/// What one gradient update did.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateOutcome {
    pub value_loss: f64,
    pub target_mean: f64,
    /// Policy objective, entropy estimate and temperature step, when the
    /// delayed gate was open.
    pub policy: Option<(f64, f64, AlphaStep)>,
}

impl Trainer {
    pub fn new(env: ToyEnv, config: TrainerConfig) -> Result<Self> {
        config.validate()?;
        let spec = env.spec();
        let seed = config.seed;
        let value = ReturnDistributionModel::new(
            spec.state_dim,
            spec.action_dim,
            &config.value,
            &mut rng_from_seed(sub_seed(seed, 1)),
        )?;
        let policy = PolicyModel::new(
            spec.state_dim,
            &spec.action_low,
            &spec.action_high,
            &config.policy,
            &mut rng_from_seed(sub_seed(seed, 2)),
        )?;
        Ok(Self {
            alpha: AlphaController::new(&config.alpha, spec.action_dim)?,
            value_opt: Adam::new(&value.net.mlp.params, config.adam),
            policy_opt: Adam::new(&policy.net.mlp.params, config.adam),
            buffer: ReplayBuffer::new(config.buffer_capacity)?,
            pool: EnvPool::new(&env, config.samplers, sub_seed(seed, 3)),
            rng: rng_from_seed(sub_seed(seed, 4)),
            iteration: 0,
            updates: 0,
            update_credit: 0.0,
            last_entropy: None,
            value,
            policy,
            spec,
            config,
        })
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn last_entropy(&self) -> Option<f64> {
        self.last_entropy
    }

    fn non_finite(&self, what: &str, k: u64) -> Error {
        Error::NonFinite {
            what: what.into(),
            update: k,
            snapshot: format!(
                "iteration={} alpha={} buffer={} normalizer=({}, {})",
                self.iteration,
                self.alpha.alpha,
                self.buffer.len(),
                self.value.normalizer.mean,
                self.value.normalizer.var
            ),
        }
    }

    fn entropy_bonus(&self) -> EntropyBonus {
        let e = &self.config.entropy;
        match e.mode {
            EntropyMode::GmmLogDensity => EntropyBonus::LogDensity {
                em: e.em,
                n_actions: e.n_actions,
            },
            EntropyMode::StateEntropy => EntropyBonus::StateEntropy {
                em: e.em,
                n_actions: e.n_actions,
            },
            EntropyMode::BatchEntropy => EntropyBonus::Fixed(self.last_entropy.unwrap_or(0.0)),
        }
    }

    /// One gradient update with update counter `k`.
    fn update(&mut self, k: u64) -> Result<UpdateOutcome> {
        let cfg = self.config;
        let batch = self.buffer.sample(cfg.batch_size, &mut self.rng)?;
        let target_seed: u64 = self.rng.random();
        let targets = build_bellman_targets(
            &batch,
            &self.value,
            &self.policy.target_sampler(),
            self.alpha.alpha,
            cfg.gamma,
            &self.entropy_bonus(),
            target_seed,
        )?;
        self.value.normalizer.update(&targets.targets);
        let (value_loss, grads) = dvn_loss(&self.value, &targets, &batch, &mut self.rng)?;
        if !value_loss.is_finite() || grads.iter().any(|g| g.iter().any(|x| !x.is_finite())) {
            return Err(self.non_finite("value loss", k));
        }
        self.value_opt
            .step(&mut self.value.net.mlp.params, &grads, cfg.value_lr)?;

        let mut policy = None;
        if k >= cfg.value_only_updates && k.is_multiple_of(cfg.delayed_update_interval) {
            let loss = policy_loss(
                &self.policy,
                &self.value.critic(),
                &batch.states,
                self.alpha.alpha,
                cfg.n_q_samples,
                &cfg.policy_entropy,
                &mut self.rng,
            )?;
            if !loss.value.is_finite()
                || loss.grads.iter().any(|g| g.iter().any(|x| !x.is_finite()))
            {
                return Err(self.non_finite("policy objective", k));
            }
            let ascent: Vec<Array2<f64>> = loss.grads.iter().map(|g| -g).collect();
            self.policy_opt
                .step(&mut self.policy.net.mlp.params, &ascent, cfg.policy_lr)?;

            let m = cfg.entropy.states.min(batch.len());
            let states = batch.states.slice(ndarray::s![..m, ..]).to_owned();
            let entropy_seed: u64 = self.rng.random();
            let h = estimate_policy_entropy(
                &self
                    .policy
                    .exploring_sampler(self.alpha.alpha, &cfg.exploration),
                &states,
                cfg.entropy.n_actions,
                &cfg.entropy.em,
                entropy_seed,
            )?;
            if !h.is_finite() {
                return Err(self.non_finite("entropy estimate", k));
            }
            let step = self.alpha.update(h);
            self.last_entropy = Some(h);

            let online = self.value.net.mlp.params.clone();
            soft_update(&mut self.value.target, &online, cfg.tau)?;
            let online = self.policy.net.mlp.params.clone();
            soft_update(&mut self.policy.target, &online, cfg.tau)?;
            policy = Some((loss.value, h, step));
        }
        Ok(UpdateOutcome {
            value_loss,
            target_mean: mean(&targets.targets),
            policy,
        })
    }

    /// One gradient update on the current buffer, advancing the update counter.
    pub fn gradient_step(&mut self) -> Result<UpdateOutcome> {
        let out = self.update(self.updates)?;
        self.updates += 1;
        Ok(out)
    }

    /// Collects `steps_per_iteration` transitions, then runs the updates the
    /// collection has paid for once the buffer is past warm-up.
    pub fn train_iteration(&mut self) -> Result<MetricsRecord> {
        let start = Instant::now();
        let cfg = self.config;
        let collect_seed: u64 = self.rng.random();
        let uniform = UniformSampler {
            low: self.spec.action_low.clone(),
            high: self.spec.action_high.clone(),
        };
        let exploring = self
            .policy
            .exploring_sampler(self.alpha.alpha, &cfg.exploration);
        let sampler: &dyn ActionSampler =
            if cfg.uniform_warmup && self.buffer.len() < cfg.warmup_size() {
                &uniform
            } else {
                &exploring
            };
        let stats = collect(
            &mut self.pool,
            sampler,
            cfg.steps_per_iteration,
            &mut self.buffer,
            collect_seed,
        )?;

        let mut value_losses = Vec::new();
        let mut objectives = Vec::new();
        let mut entropies = Vec::new();
        let mut target_means = Vec::new();
        let mut alpha_steps = Vec::new();
        if self.buffer.len() >= cfg.warmup_size() {
            self.update_credit += stats.steps as f64 * cfg.updates_per_step;
            let n = self.update_credit.floor();
            self.update_credit -= n;
            for _ in 0..n as u64 {
                let out = self.gradient_step()?;
                value_losses.push(out.value_loss);
                target_means.push(out.target_mean);
                if let Some((j, h, step)) = out.policy {
                    objectives.push(j);
                    entropies.push(h);
                    alpha_steps.push(step);
                }
            }
        }
        self.iteration += 1;
        let avg = |v: &[f64]| (!v.is_empty()).then(|| mean(v));
        Ok(MetricsRecord {
            iteration: self.iteration,
            updates: self.updates,
            value_loss: avg(&value_losses),
            policy_objective: avg(&objectives),
            entropy: avg(&entropies),
            alpha: self.alpha.alpha,
            target_mean: avg(&target_means),
            episodes: stats.episode_returns.len(),
            episode_return_mean: avg(&stats.episode_returns),
            episode_return_std: (!stats.episode_returns.is_empty())
                .then(|| std_dev(&stats.episode_returns)),
            alpha_steps,
            wall_time: cfg.record_wall_time.then(|| start.elapsed().as_secs_f64()),
        })
    }

    /// Runs `n` iterations, passing every record to `sink`.
    pub fn train<F>(&mut self, n: u64, mut sink: F) -> Result<()>
    where
        F: FnMut(&MetricsRecord) -> Result<()>,
    {
        for _ in 0..n {
            let record = self.train_iteration()?;
            sink(&record)?;
        }
        Ok(())
    }
}

/// Appends one JSON line per record.
pub fn append_metrics(path: &Path, record: &MetricsRecord) -> Result<()> {
    let mut f = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)?;
    let mut line = serde_json::to_vec(record)?;
    line.push(b'\n');
    f.write_all(&line)?;
    Ok(())
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRecord>> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"DSACDCKP";
const HEADER_LEN: usize = 8 + 4 + 8 + 32;

/// Header (magic, version, payload length, SHA-256 of the payload) followed by
/// the JSON-encoded trainer.
pub fn encode_checkpoint(trainer: &Trainer, include_buffer: bool) -> Result<Vec<u8>> {
    let payload = if include_buffer {
        serde_json::to_vec(trainer)?
    } else {
        let mut t = trainer.clone();
        t.buffer.clear();
        serde_json::to_vec(&t)?
    };
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(&Sha256::digest(&payload));
    out.extend_from_slice(&payload);
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Trainer> {
    if bytes.len() < HEADER_LEN || &bytes[..8] != MAGIC {
        return Err(Error::CorruptCheckpoint(
            "missing or truncated header".into(),
        ));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(Error::CheckpointVersion {
            expected: CHECKPOINT_VERSION,
            found: version,
        });
    }
    let len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != len {
        return Err(Error::CorruptCheckpoint(format!(
            "payload is {} bytes, header says {len}",
            payload.len()
        )));
    }
    if Sha256::digest(payload).as_slice() != &bytes[20..52] {
        return Err(Error::CorruptCheckpoint("checksum mismatch".into()));
    }
    serde_json::from_slice(payload)
        .map_err(|e| Error::CorruptCheckpoint(format!("payload does not parse: {e}")))
}

/// Writes to a sibling temporary file and renames it into place.
pub fn save_checkpoint(trainer: &Trainer, path: &Path, include_buffer: bool) -> Result<()> {
    let bytes = encode_checkpoint(trainer, include_buffer)?;
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    fs::write(&tmp, &bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Trainer> {
    decode_checkpoint(&fs::read(path)?)
}

/// One policy rollout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    pub terminal: bool,
}

impl Episode {
    pub fn total_reward(&self) -> f64 {
        self.rewards.iter().sum()
    }
}

/// Rolls out `sampler` from `env.reset(seed)`; step `t` draws its action
/// with `sub_seed(seed, t)`.
pub fn rollout(
    env: &mut dyn Environment,
    sampler: &dyn ActionSampler,
    seed: u64,
) -> Result<Episode> {
    let mut s = env.reset(seed);
    let mut ep = Episode {
        states: Vec::new(),
        actions: Vec::new(),
        rewards: Vec::new(),
        terminal: false,
    };
    let limit = env.spec().max_episode_len.max(1);
    for t in 0..limit {
        let row = Array2::from_shape_vec((1, s.len()), s.clone()).expect("row");
        let a = sampler
            .sample_rows(&row, &[sub_seed(seed, t as u64)])?
            .row(0)
            .to_vec();
        let step = env.step(&a)?;
        ep.states.push(std::mem::replace(&mut s, step.next_state));
        ep.actions.push(a);
        ep.rewards.push(step.reward);
        if step.terminal {
            ep.terminal = true;
            break;
        }
        if step.truncated {
            break;
        }
    }
    ep.states.push(s);
    Ok(ep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{make_env, EnvParams};

    fn p(v: f64) -> Params {
        Params(vec![Array2::from_elem((1, 1), v)])
    }

    #[test]
    fn soft_update_cases() {
        let mut t = p(0.0);
        soft_update(&mut t, &p(1.0), 0.005).unwrap();
        assert_eq!(t.0[0][[0, 0]], 0.005);
        let mut t = p(0.3);
        soft_update(&mut t, &p(0.7), 1.0).unwrap();
        assert_eq!(t, p(0.7));
        let mut t = p(0.3);
        soft_update(&mut t, &p(0.7), 0.0).unwrap();
        assert_eq!(t, p(0.3));
        let mut t = p(0.1);
        assert!(soft_update(&mut t, &Params(vec![Array2::zeros((2, 1))]), 0.5).is_err());
    }

    #[test]
    fn zero_steps_collects_nothing() {
        let env = make_env("bimodal_bandit", &EnvParams::default()).unwrap();
        let trainer = Trainer::new(env.clone(), TrainerConfig::default()).unwrap();
        let mut pool = EnvPool::new(&env, 2, 0);
        let mut buffer = ReplayBuffer::new(4).unwrap();
        let stats = collect(&mut pool, &trainer.policy.sampler(), 0, &mut buffer, 1).unwrap();
        assert_eq!(stats.steps, 0);
        assert!(buffer.is_empty());
    }

    #[test]
    fn config_validation() {
        let bad = [
            TrainerConfig {
                gamma: 1.0,
                ..TrainerConfig::default()
            },
            TrainerConfig {
                tau: 0.0,
                ..TrainerConfig::default()
            },
            TrainerConfig {
                delayed_update_interval: 0,
                ..TrainerConfig::default()
            },
            TrainerConfig {
                samplers: 0,
                ..TrainerConfig::default()
            },
        ];
        for c in bad {
            assert!(c.validate().is_err());
        }
        assert_eq!(TrainerConfig::default().warmup_size(), 2560);
    }

    #[test]
    fn checkpoint_header_errors() {
        let env = make_env("bimodal_bandit", &EnvParams::default()).unwrap();
        let t = Trainer::new(env, TrainerConfig::default()).unwrap();
        let bytes = encode_checkpoint(&t, true).unwrap();
        let mut wrong = bytes.clone();
        wrong[8] = 9;
        assert!(matches!(
            decode_checkpoint(&wrong),
            Err(Error::CheckpointVersion {
                expected: 1,
                found: 9
            })
        ));
        let mut flipped = bytes.clone();
        let last = flipped.len() - 2;
        flipped[last] ^= 1;
        assert!(matches!(
            decode_checkpoint(&flipped),
            Err(Error::CorruptCheckpoint(_))
        ));
        assert!(matches!(
            decode_checkpoint(&bytes[..bytes.len() / 2]),
            Err(Error::CorruptCheckpoint(_))
        ));
        assert_eq!(decode_checkpoint(&bytes).unwrap(), t);
    }
}
