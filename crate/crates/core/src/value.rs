//! The diffusion value network: a conditional sampler of scalar soft returns,
//! its Bellman targets and loss, and Monte-Carlo bias evaluation.

use ndarray::Array2;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::buffer::TransitionBatch;
use crate::diffusion::{
    denoising_loss_grad, denoising_loss_with, reverse_sample_seeded, run_chain_tape, ChainNoise,
    DenoiseDraws, EpsNet, NetConfig, NoiseSchedule, ScheduleConfig, TapePredictor,
};
use crate::entropy::{fit_policy_gmm, gmm_entropy, gmm_log_density, EmConfig};
use crate::envs::Environment;
use crate::error::{Error, Result};
use crate::nn::{Mlp, Params};
use crate::policy::{ActionSampler, Critic};
use crate::rng::{sub_seed, StdRng};
use crate::tape::{Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValueConfig {
    pub net: NetConfig,
    pub schedule: ScheduleConfig,
    /// Standardise targets with running statistics before diffusion training.
    pub normalize: bool,
    pub norm_momentum: f64,
    pub norm_min_std: f64,
}

impl Default for ValueConfig {
    fn default() -> Self {
        Self {
            net: NetConfig::default(),
            schedule: ScheduleConfig::default(),
            normalize: true,
            norm_momentum: 0.999,
            norm_min_std: 0.05,
        }
    }
}

/// Exponential moving mean/variance of returns. The first batch sets the
/// statistics directly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnNormalizer {
    pub enabled: bool,
    pub mean: f64,
    pub var: f64,
    pub momentum: f64,
    pub min_std: f64,
    pub initialized: bool,
}

impl ReturnNormalizer {
    pub fn new(enabled: bool, momentum: f64, min_std: f64) -> Self {
        Self {
            enabled,
            mean: 0.0,
            var: 1.0,
            momentum,
            min_std,
            initialized: false,
        }
    }

    pub fn identity() -> Self {
        Self::new(false, 0.0, 1.0)
    }

    pub fn update(&mut self, values: &[f64]) {
        if !self.enabled || values.is_empty() {
            return;
        }
        let n = values.len() as f64;
        let m = values.iter().sum::<f64>() / n;
        let v = values.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
        if self.initialized {
            let k = self.momentum;
            self.mean = k * self.mean + (1.0 - k) * m;
            self.var = k * self.var + (1.0 - k) * v;
        } else {
            self.mean = m;
            self.var = v;
            self.initialized = true;
        }
    }

    /// `(shift, scale)` such that `value = shift + scale·z`.
    pub fn affine(&self) -> (f64, f64) {
        if self.enabled {
            (self.mean, self.var.sqrt().max(self.min_std))
        } else {
            (0.0, 1.0)
        }
    }

    pub fn normalize(&self, x: f64) -> f64 {
        let (m, s) = self.affine();
        (x - m) / s
    }

    pub fn denormalize(&self, z: f64) -> f64 {
        let (m, s) = self.affine();
        m + s * z
    }
}

/// Anything that estimates `Q(s, a)` for a batch of pairs.
pub trait ReturnModel: Sync {
    fn q_values(
        &self,
        states: &Array2<f64>,
        actions: &Array2<f64>,
        n_samples: usize,
        seed: u64,
    ) -> Result<Vec<f64>>;
}

/// Online and target networks over scalar returns conditioned on `[s, a]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnDistributionModel {
    pub net: EpsNet,
    pub target: Params,
    pub schedule: NoiseSchedule,
    pub normalizer: ReturnNormalizer,
    state_dim: usize,
    action_dim: usize,
}

impl ReturnDistributionModel {
    pub fn new<R: Rng + ?Sized>(
        state_dim: usize,
        action_dim: usize,
        config: &ValueConfig,
        rng: &mut R,
    ) -> Result<Self> {
        let schedule = config.schedule.build()?;
        let net = EpsNet::new(1, state_dim + action_dim, &schedule, &config.net, rng);
        Ok(Self {
            target: net.params().clone(),
            net,
            schedule,
            normalizer: ReturnNormalizer::new(
                config.normalize,
                config.norm_momentum,
                config.norm_min_std,
            ),
            state_dim,
            action_dim,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    fn conditioning(&self, states: &Array2<f64>, actions: &Array2<f64>) -> Result<Array2<f64>> {
        if states.ncols() != self.state_dim || actions.ncols() != self.action_dim {
            return Err(Error::Shape(format!(
                "value model conditions on {}+{} dims, got {}+{}",
                self.state_dim,
                self.action_dim,
                states.ncols(),
                actions.ncols()
            )));
        }
        if states.nrows() != actions.nrows() {
            return Err(Error::Shape(format!(
                "{} states for {} actions",
                states.nrows(),
                actions.nrows()
            )));
        }
        Ok(
            ndarray::concatenate(ndarray::Axis(1), &[states.view(), actions.view()])
                .expect("rows agree"),
        )
    }

    /// One return draw per row with the given parameters; row `i` uses
    /// `row_seeds[i]`.
    pub fn sample_with(
        &self,
        params: &Params,
        states: &Array2<f64>,
        actions: &Array2<f64>,
        row_seeds: &[u64],
    ) -> Result<Vec<f64>> {
        let cond = self.conditioning(states, actions)?;
        if cond.nrows() != row_seeds.len() && cond.nrows() != 1 {
            return Err(Error::Shape(format!(
                "{} conditioning rows for {} seeds",
                cond.nrows(),
                row_seeds.len()
            )));
        }
        let net = self.net.with_params(params);
        let z = reverse_sample_seeded(row_seeds, &cond, true, &net, &self.schedule)?;
        Ok(z.column(0)
            .iter()
            .map(|&v| self.normalizer.denormalize(v))
            .collect())
    }

    /// `n` independent return draws at `(state, action)` from the online
    /// network; draw `i` uses `sub_seed(seed, i)`.
    pub fn sample_returns(
        &self,
        state: &[f64],
        action: &[f64],
        n: usize,
        seed: u64,
    ) -> Result<Vec<f64>> {
        if n == 0 {
            return Err(Error::Config("need at least one return sample".into()));
        }
        let s = Array2::from_shape_vec((1, state.len()), state.to_vec()).expect("row");
        let a = Array2::from_shape_vec((1, action.len()), action.to_vec()).expect("row");
        let seeds: Vec<u64> = (0..n as u64).map(|i| sub_seed(seed, i)).collect();
        self.sample_with(self.net.params(), &s, &a, &seeds)
    }

    /// One draw per row from the target network.
    pub fn sample_target(
        &self,
        states: &Array2<f64>,
        actions: &Array2<f64>,
        row_seeds: &[u64],
    ) -> Result<Vec<f64>> {
        self.sample_with(&self.target, states, actions, row_seeds)
    }

    /// The online network as a frozen critic.
    pub fn critic(&self) -> DvnCritic<'_> {
        DvnCritic { model: self }
    }
}

impl ReturnModel for ReturnDistributionModel {
    /// Mean of `n_samples` online draws per pair. Pair `i`, draw `j` uses
    /// `sub_seed(sub_seed(seed, i), j)`.
    fn q_values(
        &self,
        states: &Array2<f64>,
        actions: &Array2<f64>,
        n_samples: usize,
        seed: u64,
    ) -> Result<Vec<f64>> {
        if n_samples == 0 {
            return Err(Error::Config("need at least one return sample".into()));
        }
        let n = states.nrows();
        let rep = |m: &Array2<f64>| {
            let views: Vec<_> = (0..n_samples).map(|_| m.view()).collect();
            ndarray::concatenate(ndarray::Axis(0), &views).expect("same shape")
        };
        // copy-major: row c·n + i is pair i, draw c
        let seeds: Vec<u64> = (0..n_samples as u64)
            .flat_map(|c| (0..n as u64).map(move |i| sub_seed(sub_seed(seed, i), c)))
            .collect();
        let draws = self.sample_with(self.net.params(), &rep(states), &rep(actions), &seeds)?;
        Ok((0..n)
            .map(|i| (0..n_samples).map(|c| draws[c * n + i]).sum::<f64>() / n_samples as f64)
            .collect())
    }
}

/// The online value network seen as a differentiable, frozen `Q̂(s, a)`.
pub struct DvnCritic<'a> {
    model: &'a ReturnDistributionModel,
}

impl Critic for DvnCritic<'_> {
    fn param_shapes(&self) -> Vec<(usize, usize)> {
        self.model.net.params().shapes()
    }

    fn q_tape(
        &self,
        tape: &mut Tape,
        group: usize,
        states: &Array2<f64>,
        actions: Var,
        n_q: usize,
        rng: &mut StdRng,
    ) -> Result<Var> {
        let m = self.model;
        let rows = states.nrows();
        if tape.value(actions).dim() != (rows, m.action_dim) || states.ncols() != m.state_dim {
            return Err(Error::Shape(format!(
                "critic expects {}+{} dims, got states {:?} and actions {:?}",
                m.state_dim,
                m.action_dim,
                states.dim(),
                tape.value(actions).dim()
            )));
        }
        let views: Vec<_> = (0..n_q).map(|_| states.view()).collect();
        let s = tape.input(ndarray::concatenate(ndarray::Axis(0), &views).expect("same shape"));
        let a = tape.tile_rows(actions, n_q);
        let cond = tape.concat(&[s, a]);
        let bound = Mlp::bind(tape, m.net.params(), group, false);
        let noise = ChainNoise::draw(rng, rows * n_q, 1, m.schedule.steps(), true);
        let z = run_chain_tape(tape, &m.net, &bound, cond, &m.schedule, &noise);
        let (shift, scale) = m.normalizer.affine();
        let q = tape.affine_cols(z, &[scale], &[shift]);
        Ok(tape.mean_groups(q, n_q))
    }
}

/// Bellman targets, detached from every network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BellmanTargetBatch {
    pub targets: Vec<f64>,
    pub gamma: f64,
    pub alpha: f64,
}

/// How `−α·log π(a′|s′)` enters the target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EntropyBonus {
    /// `−α·log π̂(a′|s′)` under a mixture fitted at each `s′`.
    LogDensity { em: EmConfig, n_actions: usize },
    /// `+α·Ĥ(s′)`, the expectation of the above over `a′`.
    StateEntropy { em: EmConfig, n_actions: usize },
    /// `+α·Ĥ` with one entropy value for every row.
    Fixed(f64),
}

/// `z₀ = r + γ·(z′ − α·log π̂(a′|s′))`, with `a′` from `policy`, `z′` one draw
/// from the target value network, and `z₀ = r` for terminal transitions.
pub fn build_bellman_targets(
    batch: &TransitionBatch,
    model: &ReturnDistributionModel,
    policy: &dyn ActionSampler,
    alpha: f64,
    gamma: f64,
    bonus: &EntropyBonus,
    seed: u64,
) -> Result<BellmanTargetBatch> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::Config(format!(
            "gamma must lie in [0, 1), got {gamma}"
        )));
    }
    if alpha < 0.0 {
        return Err(Error::Config(format!(
            "alpha must be non-negative, got {alpha}"
        )));
    }
    let mut targets = batch.rewards.clone();
    let live: Vec<usize> = (0..batch.len()).filter(|&i| !batch.terminals[i]).collect();
    if live.is_empty() || gamma == 0.0 {
        return Ok(BellmanTargetBatch {
            targets,
            gamma,
            alpha,
        });
    }
    let next = batch.next_states.select(ndarray::Axis(0), &live);
    let action_seeds: Vec<u64> = live
        .iter()
        .map(|&i| sub_seed(sub_seed(seed, 0), i as u64))
        .collect();
    let return_seeds: Vec<u64> = live
        .iter()
        .map(|&i| sub_seed(sub_seed(seed, 1), i as u64))
        .collect();
    let next_actions = policy.sample_rows(&next, &action_seeds)?;
    let z_next = model.sample_target(&next, &next_actions, &return_seeds)?;

    let fit_seed = sub_seed(seed, 2);
    let bonus_terms: Vec<f64> = if alpha == 0.0 {
        vec![0.0; live.len()]
    } else {
        match *bonus {
            EntropyBonus::Fixed(h) => vec![alpha * h; live.len()],
            EntropyBonus::LogDensity { em, n_actions } => (0..live.len())
                .into_par_iter()
                .map(|r| {
                    let s = next.row(r).to_vec();
                    let fit = fit_policy_gmm(policy, &s, n_actions, &em, fit_seed)?;
                    Ok(-alpha * gmm_log_density(&fit, &next_actions.row(r).to_vec())?)
                })
                .collect::<Result<Vec<f64>>>()?,
            EntropyBonus::StateEntropy { em, n_actions } => (0..live.len())
                .into_par_iter()
                .map(|r| {
                    let s = next.row(r).to_vec();
                    let fit = fit_policy_gmm(policy, &s, n_actions, &em, fit_seed)?;
                    Ok(alpha * gmm_entropy(&fit)?)
                })
                .collect::<Result<Vec<f64>>>()?,
        }
    };
    for (r, &i) in live.iter().enumerate() {
        targets[i] += gamma * (z_next[r] + bonus_terms[r]);
    }
    if let Some(i) = targets.iter().position(|t| !t.is_finite()) {
        return Err(Error::NonFinite {
            what: "Bellman target".into(),
            update: 0,
            snapshot: format!("row {i}: reward {}", batch.rewards[i]),
        });
    }
    Ok(BellmanTargetBatch {
        targets,
        gamma,
        alpha,
    })
}

fn normalized_targets(
    model: &ReturnDistributionModel,
    targets: &BellmanTargetBatch,
) -> Array2<f64> {
    Array2::from_shape_fn((targets.targets.len(), 1), |(i, _)| {
        model.normalizer.normalize(targets.targets[i])
    })
}

fn check_aligned(targets: &BellmanTargetBatch, batch: &TransitionBatch) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if targets.targets.len() != batch.len() {
        return Err(Error::Shape(format!(
            "{} targets for {} transitions",
            targets.targets.len(),
            batch.len()
        )));
    }
    Ok(())
}

/// Denoising loss of the online network on (standardised) targets
/// conditioned on `[s, a]`, with injected `(t, ε)`.
pub fn dvn_loss_with(
    model: &ReturnDistributionModel,
    targets: &BellmanTargetBatch,
    batch: &TransitionBatch,
    draws: &DenoiseDraws,
) -> Result<f64> {
    check_aligned(targets, batch)?;
    let x0 = normalized_targets(model, targets);
    let cond = model.conditioning(&batch.states, &batch.actions)?;
    denoising_loss_with(&x0, &model.net, &cond, &model.schedule, draws)
}

/// Loss and `∂J_z/∂θ`; targets are constants.
pub fn dvn_loss_grad(
    model: &ReturnDistributionModel,
    targets: &BellmanTargetBatch,
    batch: &TransitionBatch,
    draws: &DenoiseDraws,
) -> Result<(f64, Vec<Array2<f64>>)> {
    check_aligned(targets, batch)?;
    let x0 = normalized_targets(model, targets);
    let cond = model.conditioning(&batch.states, &batch.actions)?;
    denoising_loss_grad(&model.net, &x0, &cond, &model.schedule, draws)
}

/// [`dvn_loss_grad`] with `(t, ε)` drawn from `rng`.
pub fn dvn_loss<R: Rng + ?Sized>(
    model: &ReturnDistributionModel,
    targets: &BellmanTargetBatch,
    batch: &TransitionBatch,
    rng: &mut R,
) -> Result<(f64, Vec<Array2<f64>>)> {
    let draws = DenoiseDraws::draw(rng, batch.len(), 1, &model.schedule);
    dvn_loss_grad(model, targets, batch, &draws)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BiasConfig {
    pub n_episodes: usize,
    pub horizon: usize,
    pub gamma: f64,
    /// Largest tolerated truncation error of a Monte-Carlo return.
    pub tolerance: f64,
    pub n_q_samples: usize,
    /// Entropy bonus weight; 0 disables the bonus terms.
    pub alpha: f64,
    pub n_actions: usize,
    pub em: EmConfig,
    pub seed: u64,
}

impl Default for BiasConfig {
    fn default() -> Self {
        Self {
            n_episodes: 20,
            horizon: 1000,
            gamma: 0.99,
            tolerance: 1e-3,
            n_q_samples: 64,
            alpha: 0.0,
            n_actions: 32,
            em: EmConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasReport {
    pub pairs: usize,
    pub mean_q_true: f64,
    pub mean_q_hat: f64,
    /// `mean(Q̂ − Q)`.
    pub mean_bias: f64,
    /// `mean(Q̂ − Q) / mean(|Q|)`.
    pub relative_bias: f64,
}

/// Compares `Q̂` with discounted sums of sampled rewards along policy
/// rollouts. A pair enters the statistic only if its episode terminated or
/// the discounted tail left out is below `tolerance`.
pub fn evaluate_bias(
    model: &dyn ReturnModel,
    env: &mut dyn Environment,
    policy: &dyn ActionSampler,
    config: &BiasConfig,
) -> Result<BiasReport> {
    if config.n_episodes == 0 {
        return Err(Error::EmptyBatch);
    }
    let spec = env.spec();
    let gamma = config.gamma;
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::Config(format!(
            "gamma must lie in [0, 1), got {gamma}"
        )));
    }
    let tail_bound = |steps: usize| gamma.powi(steps as i32) * spec.reward_bound() / (1.0 - gamma);
    if spec.max_episode_len > config.horizon && tail_bound(config.horizon) > config.tolerance {
        return Err(Error::Horizon(format!(
            "horizon {} leaves a discounted tail up to {:.3e}, above tolerance {:.1e}",
            config.horizon,
            tail_bound(config.horizon),
            config.tolerance
        )));
    }

    let mut states = Vec::new();
    let mut actions = Vec::new();
    let mut q_true = Vec::new();
    for e in 0..config.n_episodes {
        let ep_seed = sub_seed(config.seed, e as u64);
        let mut s = env.reset(ep_seed);
        // (state, action, reward, entropy bonus)
        let mut traj: Vec<(Vec<f64>, Vec<f64>, f64, f64)> = Vec::new();
        let mut terminated = false;
        for t in 0..config.horizon {
            let row = Array2::from_shape_vec((1, s.len()), s.clone()).expect("row");
            let a = policy
                .sample_rows(&row, &[sub_seed(ep_seed, t as u64 + 1)])?
                .row(0)
                .to_vec();
            let step = env.step(&a)?;
            let bonus = if config.alpha > 0.0 && t > 0 {
                let fit = fit_policy_gmm(policy, &s, config.n_actions, &config.em, ep_seed)?;
                -config.alpha * gmm_log_density(&fit, &a)?
            } else {
                0.0
            };
            traj.push((s, a, step.reward, bonus));
            s = step.next_state;
            if step.terminal {
                terminated = true;
                break;
            }
            if step.truncated {
                break;
            }
        }
        let len = traj.len();
        // Q(j) = r_j + Σ_{i>j} γ^{i−j}·(r_i + b_i)
        let mut tail = 0.0;
        let mut q = vec![0.0; len];
        for j in (0..len).rev() {
            let (_, _, r, b) = traj[j];
            q[j] = r + gamma * tail;
            tail = r + b + gamma * tail;
        }
        for (j, (st, ac, _, _)) in traj.into_iter().enumerate() {
            if terminated || tail_bound(len - j) <= config.tolerance {
                q_true.push(q[j]);
                states.push(st);
                actions.push(ac);
            }
        }
    }
    if q_true.is_empty() {
        return Err(Error::Horizon(
            "no visited pair has a short enough discounted tail; lengthen the horizon".into(),
        ));
    }
    let n = q_true.len();
    let to_matrix = |rows: &[Vec<f64>]| {
        Array2::from_shape_vec((rows.len(), rows[0].len()), rows.concat()).expect("rectangular")
    };
    let q_hat = model.q_values(
        &to_matrix(&states),
        &to_matrix(&actions),
        config.n_q_samples,
        sub_seed(config.seed, u64::MAX),
    )?;
    let mean_q_true = q_true.iter().sum::<f64>() / n as f64;
    let mean_q_hat = q_hat.iter().sum::<f64>() / n as f64;
    let mean_bias = mean_q_hat - mean_q_true;
    let mean_abs = q_true.iter().map(|q| q.abs()).sum::<f64>() / n as f64;
    Ok(BiasReport {
        pairs: n,
        mean_q_true,
        mean_q_hat,
        mean_bias,
        relative_bias: mean_bias / mean_abs,
    })
}
