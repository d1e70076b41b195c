//! Diffusion policy over bounded actions, its exploration wrapper, and the
//! reparameterised policy objective.

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::diffusion::{
    expand_conditioning, run_chain, run_chain_tape, ChainNoise, EpsNet, NetConfig, NoiseSchedule,
    ScheduleConfig, TapePredictor,
};
use crate::error::{Error, Result};
use crate::nn::Params;
use crate::rng::{rng_from_seed, sub_seed, StdRng};
use crate::tape::{Tape, Var};

/// Anything that draws actions for states.
pub trait ActionSampler: Sync {
    fn action_dim(&self) -> usize;

    /// One action per seed. `states` has one row per seed, or a single row
    /// shared by all of them. Row `i` depends only on its state and
    /// `row_seeds[i]`.
    fn sample_rows(&self, states: &Array2<f64>, row_seeds: &[u64]) -> Result<Array2<f64>>;

    /// `n` draws at one state; draw `i` uses `sub_seed(seed, i)`.
    fn sample_actions(&self, state: &[f64], n: usize, seed: u64) -> Result<Array2<f64>> {
        if n == 0 {
            return Err(Error::Config("need at least one action".into()));
        }
        let seeds: Vec<u64> = (0..n as u64).map(|i| sub_seed(seed, i)).collect();
        let row = Array2::from_shape_vec((1, state.len()), state.to_vec()).expect("row vector");
        self.sample_rows(&row, &seeds)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExplorationConfig {
    pub lambda: f64,
    pub enabled: bool,
}

impl Default for ExplorationConfig {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            enabled: true,
        }
    }
}

impl ExplorationConfig {
    /// Standard deviation of the additive noise at temperature `alpha`.
    pub fn noise_std(&self, alpha: f64) -> f64 {
        if self.enabled {
            self.lambda * alpha
        } else {
            0.0
        }
    }
}

/// Optional kernel-entropy term `α·Ĥ` in the policy objective. Without it the
/// reparameterised objective drives every sample toward a single optimum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicyEntropyConfig {
    pub enabled: bool,
    /// Batch states the estimate is taken at.
    pub states: usize,
    pub actions_per_state: usize,
    pub bandwidth: f64,
}

impl Default for PolicyEntropyConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            states: 8,
            actions_per_state: 16,
            bandwidth: 0.1,
        }
    }
}

impl PolicyEntropyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.enabled
            && (self.states == 0 || self.actions_per_state < 2 || !(self.bandwidth > 0.0))
        {
            return Err(Error::Config(
                "policy entropy needs states >= 1, actions_per_state >= 2 and bandwidth > 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicyConfig {
    pub net: NetConfig,
    pub schedule: ScheduleConfig,
    /// Inject per-step noise when sampling (the initial draw is always random).
    pub stochastic: bool,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            net: NetConfig::default(),
            schedule: ScheduleConfig::default(),
            stochastic: true,
        }
    }
}

/// Conditional diffusion sampler over actions, squashed into the bounds with
/// `mid + half·tanh(z_0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyModel {
    pub net: EpsNet,
    pub target: Params,
    pub schedule: NoiseSchedule,
    pub stochastic: bool,
    state_dim: usize,
    low: Vec<f64>,
    high: Vec<f64>,
}

impl PolicyModel {
    pub fn new<R: Rng + ?Sized>(
        state_dim: usize,
        low: &[f64],
        high: &[f64],
        config: &PolicyConfig,
        rng: &mut R,
    ) -> Result<Self> {
        if low.is_empty() || low.len() != high.len() {
            return Err(Error::Config(format!(
                "action bounds need matching, non-empty low/high (got {} and {})",
                low.len(),
                high.len()
            )));
        }
        if low
            .iter()
            .zip(high)
            .any(|(l, h)| !(l.is_finite() && h.is_finite() && l < h))
        {
            return Err(Error::Config(format!(
                "action bounds must be finite with low < high, got {low:?} / {high:?}"
            )));
        }
        let schedule = config.schedule.build()?;
        let net = EpsNet::new(low.len(), state_dim, &schedule, &config.net, rng);
        Ok(Self {
            target: net.params().clone(),
            net,
            schedule,
            stochastic: config.stochastic,
            state_dim,
            low: low.to_vec(),
            high: high.to_vec(),
        })
    }

    pub fn action_dim(&self) -> usize {
        self.low.len()
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn bounds(&self) -> (&[f64], &[f64]) {
        (&self.low, &self.high)
    }

    fn mid_half(&self) -> (Vec<f64>, Vec<f64>) {
        let mid = self
            .low
            .iter()
            .zip(&self.high)
            .map(|(l, h)| 0.5 * (l + h))
            .collect();
        let half = self
            .low
            .iter()
            .zip(&self.high)
            .map(|(l, h)| 0.5 * (h - l))
            .collect();
        (mid, half)
    }

    /// Maps raw chain outputs into the action box.
    pub fn squash(&self, raw: &Array2<f64>) -> Array2<f64> {
        let (mid, half) = self.mid_half();
        let mut out = raw.clone();
        for mut row in out.rows_mut() {
            for (j, x) in row.iter_mut().enumerate() {
                *x = mid[j] + half[j] * x.tanh();
            }
        }
        out
    }

    pub fn clip(&self, actions: &mut Array2<f64>) {
        for mut row in actions.rows_mut() {
            for (j, x) in row.iter_mut().enumerate() {
                *x = x.clamp(self.low[j], self.high[j]);
            }
        }
    }

    /// Sampler using the online parameters.
    pub fn sampler(&self) -> PolicySampler<'_> {
        PolicySampler {
            model: self,
            params: self.net.params(),
            stochastic: self.stochastic,
            noise_std: 0.0,
        }
    }

    /// Online sampler with the per-step chain noise switched off.
    pub fn deterministic_sampler(&self) -> PolicySampler<'_> {
        PolicySampler {
            stochastic: false,
            ..self.sampler()
        }
    }

    /// Sampler using the target parameters.
    pub fn target_sampler(&self) -> PolicySampler<'_> {
        PolicySampler {
            params: &self.target,
            ..self.sampler()
        }
    }

    /// Online sampler plus `λα·N(0, I)` noise, hard-clipped to the bounds.
    pub fn exploring_sampler(&self, alpha: f64, cfg: &ExplorationConfig) -> PolicySampler<'_> {
        PolicySampler {
            noise_std: cfg.noise_std(alpha),
            ..self.sampler()
        }
    }

    /// One action; `deterministic` zeroes the per-step noise of the chain.
    pub fn sample_action(&self, state: &[f64], seed: u64, deterministic: bool) -> Result<Vec<f64>> {
        let s = PolicySampler {
            stochastic: self.stochastic && !deterministic,
            ..self.sampler()
        };
        s.sample_one(state, seed)
    }

    /// [`PolicyModel::sample_action`] plus exploration noise.
    pub fn explore_action(
        &self,
        state: &[f64],
        alpha: f64,
        cfg: &ExplorationConfig,
        seed: u64,
    ) -> Result<Vec<f64>> {
        if alpha < 0.0 {
            return Err(Error::Config(format!(
                "alpha must be non-negative, got {alpha}"
            )));
        }
        self.exploring_sampler(alpha, cfg).sample_one(state, seed)
    }

    /// Differentiable batch of actions: the whole reverse chain and the
    /// squashing are recorded on the tape.
    pub fn actions_tape<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        bound: &[Var],
        states: &Array2<f64>,
        rng: &mut R,
    ) -> Var {
        let noise = ChainNoise::draw(
            rng,
            states.nrows(),
            self.action_dim(),
            self.schedule.steps(),
            self.stochastic,
        );
        let cond = tape.input(states.clone());
        let raw = run_chain_tape(tape, &self.net, bound, cond, &self.schedule, &noise);
        let squashed = tape.tanh(raw);
        let (mid, half) = self.mid_half();
        tape.affine_cols(squashed, &half, &mid)
    }
}

/// A [`PolicyModel`] bound to one parameter set and noise setting.
#[derive(Clone, Copy)]
pub struct PolicySampler<'a> {
    model: &'a PolicyModel,
    params: &'a Params,
    stochastic: bool,
    noise_std: f64,
}

/// Seed offset for the exploration noise stream of a row.
const EXPLORE_STREAM: u64 = 0x5EED_E8B1_0000_0001;

impl PolicySampler<'_> {
    fn sample_one(&self, state: &[f64], seed: u64) -> Result<Vec<f64>> {
        let row = Array2::from_shape_vec((1, state.len()), state.to_vec()).expect("row vector");
        Ok(self.sample_rows(&row, &[seed])?.row(0).to_vec())
    }
}

impl ActionSampler for PolicySampler<'_> {
    fn action_dim(&self) -> usize {
        self.model.action_dim()
    }

    fn sample_rows(&self, states: &Array2<f64>, row_seeds: &[u64]) -> Result<Array2<f64>> {
        if states.ncols() != self.model.state_dim {
            return Err(Error::Shape(format!(
                "state has {} dims, policy expects {}",
                states.ncols(),
                self.model.state_dim
            )));
        }
        if row_seeds.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let cond = expand_conditioning(states, row_seeds.len())?;
        let noise = ChainNoise::per_row(
            row_seeds,
            self.model.action_dim(),
            self.model.schedule.steps(),
            self.stochastic,
        );
        let net = self.model.net.with_params(self.params);
        let raw = run_chain(&net, &cond, &self.model.schedule, &noise)?;
        let mut actions = self.model.squash(&raw);
        if self.noise_std > 0.0 {
            for (i, mut row) in actions.rows_mut().into_iter().enumerate() {
                let mut rng = rng_from_seed(sub_seed(row_seeds[i], EXPLORE_STREAM));
                for x in row.iter_mut() {
                    let n: f64 = rng.sample(StandardNormal);
                    *x += self.noise_std * n;
                }
            }
            self.model.clip(&mut actions);
        }
        Ok(actions)
    }
}

/// Actions drawn uniformly inside box bounds, independent of the state.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformSampler {
    pub low: Vec<f64>,
    pub high: Vec<f64>,
}

impl ActionSampler for UniformSampler {
    fn action_dim(&self) -> usize {
        self.low.len()
    }

    fn sample_rows(&self, _states: &Array2<f64>, row_seeds: &[u64]) -> Result<Array2<f64>> {
        if row_seeds.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let d = self.low.len();
        let mut out = Array2::zeros((row_seeds.len(), d));
        for (i, &seed) in row_seeds.iter().enumerate() {
            let mut rng = rng_from_seed(seed);
            for j in 0..d {
                out[[i, j]] = rng.random_range(self.low[j]..=self.high[j]);
            }
        }
        Ok(out)
    }
}

/// A state-action value usable inside a differentiable graph.
pub trait Critic {
    /// Shapes of the critic's own parameters.
    fn param_shapes(&self) -> Vec<(usize, usize)>;

    /// `Q̂(s, a)` for every row as a rows×1 node, averaging `n_q` draws.
    /// The critic's parameters are bound under `group`.
    fn q_tape(
        &self,
        tape: &mut Tape,
        group: usize,
        states: &Array2<f64>,
        actions: Var,
        n_q: usize,
        rng: &mut StdRng,
    ) -> Result<Var>;
}

/// Value and gradients of the policy objective.
#[derive(Debug, Clone)]
pub struct PolicyLoss {
    /// The ascended objective: mean `Q̂`, plus `α·Ĥ` when the entropy term is on.
    pub value: f64,
    pub q_mean: f64,
    /// Kernel entropy estimate, when the entropy term is on.
    pub entropy: Option<f64>,
    /// `∂J/∂ω`.
    pub grads: Vec<Array2<f64>>,
    /// `∂J/∂θ` for the critic, identically zero since it is frozen.
    pub critic_grads: Vec<Array2<f64>>,
}

pub const POLICY_GROUP: usize = 0;
pub const CRITIC_GROUP: usize = 1;

/// `J_π(ω) = mean_s Q̂(s, a_ω(s)) [+ α·mean_s Ĥ(s)]` with `a_ω` produced by a
/// differentiable reverse chain and `Q̂` the mean of `n_q` frozen-critic draws.
pub fn policy_loss(
    policy: &PolicyModel,
    critic: &dyn Critic,
    states: &Array2<f64>,
    alpha: f64,
    n_q: usize,
    entropy: &PolicyEntropyConfig,
    rng: &mut StdRng,
) -> Result<PolicyLoss> {
    entropy.validate()?;
    if states.nrows() == 0 {
        return Err(Error::EmptyBatch);
    }
    if n_q == 0 {
        return Err(Error::Config("n_q_samples must be at least 1".into()));
    }
    if states.ncols() != policy.state_dim() {
        return Err(Error::Shape(format!(
            "states have {} dims, policy expects {}",
            states.ncols(),
            policy.state_dim()
        )));
    }
    let mut tape = Tape::new();
    let bound = policy.net.bind(&mut tape, POLICY_GROUP, true);
    let actions = policy.actions_tape(&mut tape, &bound, states, rng);
    let q = critic.q_tape(&mut tape, CRITIC_GROUP, states, actions, n_q, rng)?;
    let q_mean = tape.mean(q);
    let mut j = q_mean;
    let mut h = None;
    if entropy.enabled && alpha > 0.0 {
        let k = entropy.states.min(states.nrows());
        let block = states.slice(ndarray::s![..k, ..]);
        let views = vec![block; entropy.actions_per_state];
        let tiled = ndarray::concatenate(ndarray::Axis(0), &views).expect("same width");
        let draws = policy.actions_tape(&mut tape, &bound, &tiled, rng);
        let per_state = tape.kde_entropy(draws, k, entropy.bandwidth);
        let hm = tape.mean(per_state);
        h = Some(tape.scalar(hm));
        let bonus = tape.scale(hm, alpha);
        j = tape.add(q_mean, bonus);
    }
    let grads = tape.backward(j);
    Ok(PolicyLoss {
        value: tape.scalar(j),
        q_mean: tape.scalar(q_mean),
        entropy: h,
        grads: grads.group(POLICY_GROUP, &policy.net.params().shapes()),
        critic_grads: grads.group(CRITIC_GROUP, &critic.param_shapes()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::ScheduleShape;
    use crate::nn::Activation;

    fn small_policy(seed: u64) -> PolicyModel {
        let mut rng = rng_from_seed(seed);
        PolicyModel::new(
            2,
            &[-1.0, -2.0],
            &[1.0, 0.5],
            &PolicyConfig {
                net: NetConfig {
                    hidden: [16, 16],
                    ..NetConfig::default()
                },
                schedule: ScheduleConfig {
                    steps: 5,
                    ..ScheduleConfig::default()
                },
                stochastic: true,
            },
            &mut rng,
        )
        .unwrap()
    }

    /// `Q(s, a) = −Σ_j (a_j − c)²`, exact on the tape.
    struct QuadraticCritic(f64);

    impl Critic for QuadraticCritic {
        fn param_shapes(&self) -> Vec<(usize, usize)> {
            Vec::new()
        }

        fn q_tape(
            &self,
            tape: &mut Tape,
            _group: usize,
            _states: &Array2<f64>,
            actions: Var,
            _n_q: usize,
            _rng: &mut StdRng,
        ) -> Result<Var> {
            let (rows, cols) = tape.value(actions).dim();
            let c = tape.input(Array2::from_elem((rows, cols), self.0));
            let d = tape.sub(actions, c);
            let sq = tape.square(d);
            let s = tape.sum_cols(sq);
            Ok(tape.scale(s, -1.0))
        }
    }

    #[test]
    fn policy_gradient_matches_central_differences() {
        let mut rng = rng_from_seed(3);
        let policy = PolicyModel::new(
            1,
            &[-1.0],
            &[1.0],
            &PolicyConfig {
                net: NetConfig {
                    layers: 0,
                    time_features: 1,
                    out_scale: 1.0,
                    ..NetConfig::default()
                },
                schedule: ScheduleConfig {
                    steps: 3,
                    ..ScheduleConfig::default()
                },
                stochastic: true,
            },
            &mut rng,
        )
        .unwrap();
        assert!(policy.net.params().num_scalars() <= 10);
        let states = Array2::from_shape_vec((4, 1), vec![-0.5, 0.0, 0.3, 1.0]).unwrap();
        let critic = QuadraticCritic(0.25);
        let entropy = PolicyEntropyConfig {
            enabled: true,
            states: 2,
            actions_per_state: 3,
            bandwidth: 0.5,
        };
        let j = |p: &PolicyModel| {
            policy_loss(p, &critic, &states, 0.3, 1, &entropy, &mut rng_from_seed(9)).unwrap()
        };
        let loss = j(&policy);
        assert!(loss.critic_grads.is_empty());
        assert!(loss.entropy.is_some());
        let h = 1e-5;
        for (l, g) in loss.grads.iter().enumerate() {
            for ((r, c), &analytic) in g.indexed_iter() {
                let mut plus = policy.clone();
                plus.net.params_mut().0[l][[r, c]] += h;
                let mut minus = policy.clone();
                minus.net.params_mut().0[l][[r, c]] -= h;
                let fd = (j(&plus).value - j(&minus).value) / (2.0 * h);
                let rel = (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1e-8);
                assert!(rel <= 1e-3, "param {l}[{r},{c}]: {analytic} vs {fd}");
            }
        }
    }

    #[test]
    fn rejects_missing_bounds() {
        let mut rng = rng_from_seed(0);
        let cfg = PolicyConfig::default();
        assert!(PolicyModel::new(1, &[], &[], &cfg, &mut rng).is_err());
        assert!(PolicyModel::new(1, &[f64::NEG_INFINITY], &[1.0], &cfg, &mut rng).is_err());
        assert!(PolicyModel::new(1, &[1.0], &[1.0], &cfg, &mut rng).is_err());
    }

    #[test]
    fn zero_net_single_step_reduces_to_scaled_prior() {
        let mut rng = rng_from_seed(0);
        let mut p = PolicyModel::new(
            1,
            &[-1.0],
            &[1.0],
            &PolicyConfig {
                net: NetConfig {
                    prior_skip: false,
                    ..NetConfig::default()
                },
                schedule: ScheduleConfig {
                    steps: 1,
                    beta_min: 0.1,
                    beta_max: 0.1,
                    shape: ScheduleShape::Linear,
                },
                stochastic: true,
            },
            &mut rng,
        )
        .unwrap();
        for t in p.net.params_mut().0.iter_mut() {
            t.fill(0.0);
        }
        let a = p.sample_action(&[0.3], 11, true).unwrap();
        let z_t = crate::rng::normal_vec(&mut rng_from_seed(11), 1)[0];
        assert_eq!(a[0], (z_t / 0.9f64.sqrt()).tanh());
    }

    #[test]
    fn deterministic_sampling_is_repeatable() {
        let p = small_policy(1);
        let a = p.sample_action(&[0.1, -0.2], 5, true).unwrap();
        assert_eq!(a, p.sample_action(&[0.1, -0.2], 5, true).unwrap());
        let b = p.sample_action(&[0.1, -0.2], 5, false).unwrap();
        assert_eq!(b, p.sample_action(&[0.1, -0.2], 5, false).unwrap());
    }

    #[test]
    fn n_equals_one_matches_single_draw() {
        let p = small_policy(2);
        let batch = p.sampler().sample_actions(&[0.5, 0.5], 1, 9).unwrap();
        let one = p.sample_action(&[0.5, 0.5], sub_seed(9, 0), false).unwrap();
        assert_eq!(batch.row(0).to_vec(), one);
    }

    #[test]
    fn permuting_seeds_permutes_rows() {
        let p = small_policy(3);
        let state = Array2::from_shape_vec((1, 2), vec![0.2, -0.4]).unwrap();
        let seeds = [4u64, 8, 15, 16];
        let a = p.sampler().sample_rows(&state, &seeds).unwrap();
        let b = p.sampler().sample_rows(&state, &[16, 4, 15, 8]).unwrap();
        assert_eq!(a.row(0), b.row(1));
        assert_eq!(a.row(1), b.row(3));
        assert_eq!(a.row(2), b.row(2));
        assert_eq!(a.row(3), b.row(0));
    }

    #[test]
    fn no_noise_exploration_is_identity() {
        let p = small_policy(4);
        let s = [0.0, 1.0];
        let base = p.sample_action(&s, 77, false).unwrap();
        let off = ExplorationConfig {
            lambda: 0.0,
            enabled: true,
        };
        assert_eq!(p.explore_action(&s, 0.5, &off, 77).unwrap(), base);
        assert_eq!(
            p.explore_action(&s, 0.0, &ExplorationConfig::default(), 77)
                .unwrap(),
            base
        );
        assert!(p.explore_action(&s, -1.0, &off, 77).is_err());
    }

    #[test]
    fn exploration_noise_scale() {
        let mut rng = rng_from_seed(0);
        // Narrow output so clipping never triggers.
        let mut p = PolicyModel::new(
            1,
            &[-10.0],
            &[10.0],
            &PolicyConfig {
                schedule: ScheduleConfig {
                    steps: 3,
                    ..ScheduleConfig::default()
                },
                ..PolicyConfig::default()
            },
            &mut rng,
        )
        .unwrap();
        p.stochastic = false;
        let cfg = ExplorationConfig {
            lambda: 0.5,
            enabled: true,
        };
        let n = 10_000;
        let diffs: Vec<f64> = (0..n)
            .map(|i| {
                let a = p.explore_action(&[0.0], 0.4, &cfg, i).unwrap()[0];
                a - p.sample_action(&[0.0], i, false).unwrap()[0]
            })
            .collect();
        let mean = diffs.iter().sum::<f64>() / n as f64;
        let sd = (diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        // standard error of a sample sd is about sd/√(2n)
        assert!(
            (sd - 0.2).abs() < 3.0 * 0.2 / (2.0 * n as f64).sqrt(),
            "sd {sd}"
        );
    }

    #[test]
    fn actions_respect_bounds_under_extreme_params() {
        let mut p = small_policy(5);
        for t in p.net.params_mut().0.iter_mut() {
            t.mapv_inplace(|x| x * 1e3);
        }
        let cfg = ExplorationConfig {
            lambda: 5.0,
            enabled: true,
        };
        let s = Array2::from_shape_vec((1, 2), vec![3.0, -3.0]).unwrap();
        for sampler in [p.sampler(), p.exploring_sampler(2.0, &cfg)] {
            let a = sampler
                .sample_rows(&s, &(0..50).collect::<Vec<_>>())
                .unwrap();
            for row in a.rows() {
                assert!(row[0] >= -1.0 && row[0] <= 1.0);
                assert!(row[1] >= -2.0 && row[1] <= 0.5);
            }
        }
    }

    #[test]
    fn tape_actions_match_sampler_rows() {
        let p = small_policy(6);
        let states = Array2::from_shape_fn((3, 2), |(i, j)| i as f64 * 0.3 - j as f64 * 0.1);
        let mut tape = Tape::new();
        let bound = p.net.bind(&mut tape, 0, true);
        let mut r1 = rng_from_seed(3);
        let a = p.actions_tape(&mut tape, &bound, &states, &mut r1);
        let mut r2 = rng_from_seed(3);
        let noise = ChainNoise::draw(&mut r2, 3, 2, p.schedule.steps(), true);
        let raw = run_chain(&p.net, &states, &p.schedule, &noise).unwrap();
        let plain = p.squash(&raw);
        for (x, y) in tape.value(a).iter().zip(plain.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn mish_and_tanh_nets_both_work() {
        for act in [Activation::Mish, Activation::Tanh] {
            let mut rng = rng_from_seed(0);
            let p = PolicyModel::new(
                1,
                &[-1.0],
                &[1.0],
                &PolicyConfig {
                    net: NetConfig {
                        activation: act,
                        ..NetConfig::default()
                    },
                    ..PolicyConfig::default()
                },
                &mut rng,
            )
            .unwrap();
            assert!(p.sample_action(&[0.0], 1, false).unwrap()[0].is_finite());
        }
    }
}
