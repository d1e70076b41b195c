//! Small environments with known ground truth.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{rng_from_seed, StdRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub name: String,
    pub state_dim: usize,
    pub action_dim: usize,
    pub action_low: Vec<f64>,
    pub action_high: Vec<f64>,
    pub max_episode_len: usize,
    /// Nominal per-step reward range, excluding observation noise.
    pub reward_range: (f64, f64),
}

impl EnvSpec {
    /// Largest absolute per-step reward.
    pub fn reward_bound(&self) -> f64 {
        self.reward_range.0.abs().max(self.reward_range.1.abs())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub next_state: Vec<f64>,
    pub reward: f64,
    pub terminal: bool,
    pub truncated: bool,
}

pub trait Environment {
    fn spec(&self) -> EnvSpec;
    fn reset(&mut self, seed: u64) -> Vec<f64>;
    fn step(&mut self, action: &[f64]) -> Result<Step>;
}

fn check_action(spec: &EnvSpec, action: &[f64]) -> Result<()> {
    if action.len() != spec.action_dim {
        return Err(Error::Shape(format!(
            "{} takes {}-dimensional actions, got {}",
            spec.name,
            spec.action_dim,
            action.len()
        )));
    }
    if action.iter().any(|a| !a.is_finite()) {
        return Err(Error::Config(format!("non-finite action {action:?}")));
    }
    Ok(())
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BanditConfig {
    pub noise_std: f64,
    pub optimum: f64,
}

impl Default for BanditConfig {
    fn default() -> Self {
        Self {
            noise_std: 0.05,
            optimum: 0.6,
        }
    }
}

/// One-step bandit on `[-1, 1]` with optima at `±optimum`:
/// `r = 1 − min((a−c)², (a+c)²) + σ·ξ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BimodalBandit {
    pub config: BanditConfig,
    rng: StdRng,
}

impl BimodalBandit {
    pub fn new(config: BanditConfig) -> Self {
        Self {
            config,
            rng: rng_from_seed(0),
        }
    }

    pub fn expected_reward(&self, a: f64) -> f64 {
        let c = self.config.optimum;
        1.0 - (a - c).powi(2).min((a + c).powi(2))
    }
}

impl Environment for BimodalBandit {
    fn spec(&self) -> EnvSpec {
        let c = self.config.optimum;
        EnvSpec {
            name: "bimodal_bandit".into(),
            state_dim: 1,
            action_dim: 1,
            action_low: vec![-1.0],
            action_high: vec![1.0],
            max_episode_len: 1,
            reward_range: (1.0 - (c * c).max((1.0 - c).powi(2)), 1.0),
        }
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        self.rng = rng_from_seed(seed);
        vec![0.0]
    }

    fn step(&mut self, action: &[f64]) -> Result<Step> {
        check_action(&self.spec(), action)?;
        let mut a = action[0];
        if !(-1.0..=1.0).contains(&a) {
            log::warn!("bandit action {a} clipped to [-1, 1]");
            a = a.clamp(-1.0, 1.0);
        }
        let noise: f64 = self.rng.sample(StandardNormal);
        Ok(Step {
            next_state: vec![0.0],
            reward: self.expected_reward(a) + self.config.noise_std * noise,
            terminal: true,
            truncated: false,
        })
    }
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PointMassConfig {
    pub dt: f64,
    pub accel_scale: f64,
    pub goals: [[f64; 2]; 2],
    pub goal_radius: f64,
    pub obstacle_center: [f64; 2],
    pub obstacle_radius: f64,
    pub obstacle_penalty: f64,
    pub action_cost: f64,
    pub max_steps: usize,
}

impl Default for PointMassConfig {
    fn default() -> Self {
        Self {
            dt: 0.1,
            accel_scale: 4.0,
            goals: [[-0.8, 2.0], [0.8, 2.0]],
            goal_radius: 0.2,
            obstacle_center: [0.0, 1.0],
            obstacle_radius: 0.5,
            obstacle_penalty: 10.0,
            action_cost: 0.01,
            max_steps: 30,
        }
    }
}

/// Planar double integrator starting at the origin at rest, with a disc
/// obstacle on the `x = 0` axis between the start and two mirrored goals.
/// State is `[x, y, vx, vy]`, action is a bounded acceleration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoGoalPointMass {
    pub config: PointMassConfig,
    state: [f64; 4],
    steps: usize,
}

impl TwoGoalPointMass {
    pub fn new(config: PointMassConfig) -> Self {
        Self {
            config,
            state: [0.0; 4],
            steps: 0,
        }
    }

    pub fn state(&self) -> [f64; 4] {
        self.state
    }

    /// Index of the nearest goal and the distance to it.
    pub fn nearest_goal(&self, p: [f64; 2]) -> (usize, f64) {
        let d: Vec<f64> = self
            .config
            .goals
            .iter()
            .map(|g| ((p[0] - g[0]).powi(2) + (p[1] - g[1]).powi(2)).sqrt())
            .collect();
        if d[0] <= d[1] {
            (0, d[0])
        } else {
            (1, d[1])
        }
    }

    pub fn penetration(&self, p: [f64; 2]) -> f64 {
        let c = self.config.obstacle_center;
        let r = ((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2)).sqrt();
        (self.config.obstacle_radius - r).max(0.0)
    }

    /// Reward for arriving at position `p` after applying `action`.
    pub fn reward_at(&self, p: [f64; 2], action: &[f64]) -> f64 {
        let effort: f64 = action.iter().map(|a| a * a).sum();
        -self.nearest_goal(p).1
            - self.config.obstacle_penalty * self.penetration(p)
            - self.config.action_cost * effort
    }

    pub fn set_state(&mut self, state: [f64; 4]) {
        self.state = state;
    }
}

impl Environment for TwoGoalPointMass {
    fn spec(&self) -> EnvSpec {
        let c = &self.config;
        let far = 4.0;
        EnvSpec {
            name: "two_goal_pointmass".into(),
            state_dim: 4,
            action_dim: 2,
            action_low: vec![-1.0; 2],
            action_high: vec![1.0; 2],
            max_episode_len: c.max_steps,
            reward_range: (
                -(far + c.obstacle_penalty * c.obstacle_radius + 2.0 * c.action_cost),
                0.0,
            ),
        }
    }

    fn reset(&mut self, _seed: u64) -> Vec<f64> {
        self.state = [0.0; 4];
        self.steps = 0;
        self.state.to_vec()
    }

    fn step(&mut self, action: &[f64]) -> Result<Step> {
        check_action(&self.spec(), action)?;
        let c = &self.config;
        let a: Vec<f64> = action.iter().map(|x| x.clamp(-1.0, 1.0)).collect();
        let [x, y, vx, vy] = self.state;
        let vx = vx + c.accel_scale * a[0] * c.dt;
        let vy = vy + c.accel_scale * a[1] * c.dt;
        let p = [x + vx * c.dt, y + vy * c.dt];
        self.state = [p[0], p[1], vx, vy];
        self.steps += 1;
        let reward = self.reward_at(p, &a);
        let terminal = self.nearest_goal(p).1 <= c.goal_radius;
        Ok(Step {
            next_state: self.state.to_vec(),
            reward,
            terminal,
            truncated: !terminal && self.steps >= c.max_steps,
        })
    }
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChainConfig {
    pub reward: f64,
    pub max_steps: usize,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            reward: 1.0,
            max_steps: 200,
        }
    }
}

/// Never terminates; pays a constant reward each step until the time limit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantChain {
    pub config: ChainConfig,
    steps: usize,
}

impl ConstantChain {
    pub fn new(config: ChainConfig) -> Self {
        Self { config, steps: 0 }
    }
}

impl Environment for ConstantChain {
    fn spec(&self) -> EnvSpec {
        EnvSpec {
            name: "constant_chain".into(),
            state_dim: 1,
            action_dim: 1,
            action_low: vec![-1.0],
            action_high: vec![1.0],
            max_episode_len: self.config.max_steps,
            reward_range: (self.config.reward, self.config.reward),
        }
    }

    fn reset(&mut self, _seed: u64) -> Vec<f64> {
        self.steps = 0;
        vec![0.0]
    }

    fn step(&mut self, action: &[f64]) -> Result<Step> {
        check_action(&self.spec(), action)?;
        self.steps += 1;
        Ok(Step {
            next_state: vec![0.0],
            reward: self.config.reward,
            terminal: false,
            truncated: self.steps >= self.config.max_steps,
        })
    }
}

// ---------------------------------------------------------------------------

/// A finite MDP with finitely supported rewards. States are observed one-hot;
/// actions are scalars snapped to the nearest entry of `actions`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleMdp {
    pub actions: Vec<f64>,
    /// `transitions[s][a][s']`.
    pub transitions: Vec<Vec<Vec<f64>>>,
    /// `rewards[s][a]` as `(value, probability)` atoms.
    pub rewards: Vec<Vec<Vec<(f64, f64)>>>,
    pub gamma: f64,
    pub start_state: usize,
}

impl OracleMdp {
    /// Two states, actions `{−1, +1}`, each reward a base value `±1` with
    /// equal probability. Every constant is a dyadic rational so enumerated
    /// returns merge exactly.
    pub fn two_state() -> Self {
        let pm = |base: f64| vec![(base - 1.0, 0.5), (base + 1.0, 0.5)];
        Self {
            actions: vec![-1.0, 1.0],
            transitions: vec![
                vec![vec![0.75, 0.25], vec![0.25, 0.75]],
                vec![vec![0.75, 0.25], vec![0.25, 0.75]],
            ],
            rewards: vec![vec![pm(0.0), pm(0.5)], vec![pm(-0.5), pm(1.0)]],
            gamma: 0.5,
            start_state: 0,
        }
    }

    pub fn n_states(&self) -> usize {
        self.transitions.len()
    }

    pub fn n_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn validate(&self) -> Result<()> {
        let ns = self.n_states();
        if ns == 0 || self.actions.is_empty() || self.rewards.len() != ns {
            return Err(Error::Config(
                "oracle MDP needs states, actions and rewards".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.gamma) || self.start_state >= ns {
            return Err(Error::Config(
                "oracle MDP gamma or start state out of range".into(),
            ));
        }
        for s in 0..ns {
            if self.transitions[s].len() != self.n_actions()
                || self.rewards[s].len() != self.n_actions()
            {
                return Err(Error::Config(format!(
                    "state {s} has the wrong number of actions"
                )));
            }
            for a in 0..self.n_actions() {
                let row = &self.transitions[s][a];
                if row.len() != ns || (row.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                    return Err(Error::Config(format!(
                        "transition row ({s}, {a}) is not a distribution"
                    )));
                }
                let total: f64 = self.rewards[s][a].iter().map(|(_, p)| p).sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::Config(format!(
                        "reward atoms ({s}, {a}) do not sum to 1"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn encode_state(&self, s: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.n_states()];
        v[s] = 1.0;
        v
    }

    pub fn decode_state(&self, state: &[f64]) -> usize {
        state
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0)
    }

    pub fn action_index(&self, a: f64) -> usize {
        self.actions
            .iter()
            .enumerate()
            .min_by(|x, y| (x.1 - a).abs().total_cmp(&(y.1 - a).abs()))
            .map(|(i, _)| i)
            .expect("at least one action")
    }

    pub fn reward_bound(&self) -> f64 {
        self.rewards
            .iter()
            .flatten()
            .flatten()
            .map(|(r, _)| r.abs())
            .fold(0.0, f64::max)
    }
}

/// A stochastic tabular policy: `probs[s][a]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularPolicy {
    pub probs: Vec<Vec<f64>>,
}

impl TabularPolicy {
    pub fn log_prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s][a].ln()
    }

    pub fn draw<R: Rng + ?Sized>(&self, s: usize, rng: &mut R) -> usize {
        let mut u: f64 = rng.random();
        for (a, p) in self.probs[s].iter().enumerate() {
            if u < *p {
                return a;
            }
            u -= p;
        }
        self.probs[s].len() - 1
    }
}

/// A return value with its probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub value: f64,
    pub prob: f64,
}

/// Exact distribution of `Σ_{i<horizon} γ^i·r_i` after taking `a` in `s` and
/// following `policy`, by enumerating every branch. Branches reaching the same
/// state with bit-identical partial returns are merged. With `alpha > 0`,
/// every step after the first also earns `−α·log π(a_i|s_i)`.
pub fn oracle_return_distribution(
    mdp: &OracleMdp,
    policy: &TabularPolicy,
    s: usize,
    a: usize,
    horizon: usize,
    alpha: f64,
    node_budget: usize,
) -> Result<Vec<Atom>> {
    mdp.validate()?;
    if s >= mdp.n_states() || a >= mdp.n_actions() {
        return Err(Error::Config(format!(
            "({s}, {a}) is not a valid state-action pair"
        )));
    }
    if horizon == 0 {
        return Ok(vec![Atom {
            value: 0.0,
            prob: 1.0,
        }]);
    }
    // Frontier entries: (state, action, partial return bits) -> probability,
    // where `action` is the one about to be taken.
    let mut frontier: BTreeMap<(usize, usize, u64), f64> = BTreeMap::new();
    frontier.insert((s, a, 0f64.to_bits()), 1.0);
    let mut finished: BTreeMap<u64, f64> = BTreeMap::new();
    let mut discount = 1.0;
    for depth in 0..horizon {
        let mut next: BTreeMap<(usize, usize, u64), f64> = BTreeMap::new();
        for (&(st, act, bits), &p) in &frontier {
            let g = f64::from_bits(bits);
            let bonus = if depth > 0 && alpha > 0.0 {
                -alpha * policy.log_prob(st, act)
            } else {
                0.0
            };
            for &(r, pr) in &mdp.rewards[st][act] {
                let g2 = g + discount * (r + bonus);
                if depth + 1 == horizon {
                    *finished.entry(g2.to_bits()).or_insert(0.0) += p * pr;
                    continue;
                }
                for (s2, &pt) in mdp.transitions[st][act].iter().enumerate() {
                    if pt == 0.0 {
                        continue;
                    }
                    for (a2, &pa) in policy.probs[s2].iter().enumerate() {
                        if pa == 0.0 {
                            continue;
                        }
                        *next.entry((s2, a2, g2.to_bits())).or_insert(0.0) += p * pr * pt * pa;
                        if next.len() > node_budget {
                            return Err(Error::NodeBudget {
                                budget: node_budget,
                            });
                        }
                    }
                }
            }
            if finished.len() > node_budget {
                return Err(Error::NodeBudget {
                    budget: node_budget,
                });
            }
        }
        frontier = next;
        discount *= mdp.gamma;
    }
    let mut atoms: Vec<Atom> = finished
        .into_iter()
        .map(|(bits, prob)| Atom {
            value: f64::from_bits(bits),
            prob,
        })
        .collect();
    atoms.sort_by(|x, y| x.value.total_cmp(&y.value));
    Ok(atoms)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleMdpEnv {
    pub mdp: OracleMdp,
    pub max_steps: usize,
    state: usize,
    steps: usize,
    rng: StdRng,
}

impl OracleMdpEnv {
    pub fn new(mdp: OracleMdp, max_steps: usize) -> Result<Self> {
        mdp.validate()?;
        Ok(Self {
            state: mdp.start_state,
            mdp,
            max_steps,
            steps: 0,
            rng: rng_from_seed(0),
        })
    }

    pub fn state_index(&self) -> usize {
        self.state
    }
}

impl Environment for OracleMdpEnv {
    fn spec(&self) -> EnvSpec {
        let lo = self
            .mdp
            .actions
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        let hi = self
            .mdp
            .actions
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        let r = self.mdp.reward_bound();
        EnvSpec {
            name: "oracle_mdp".into(),
            state_dim: self.mdp.n_states(),
            action_dim: 1,
            action_low: vec![lo],
            action_high: vec![hi],
            max_episode_len: self.max_steps,
            reward_range: (-r, r),
        }
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        self.rng = rng_from_seed(seed);
        self.state = self.mdp.start_state;
        self.steps = 0;
        self.mdp.encode_state(self.state)
    }

    fn step(&mut self, action: &[f64]) -> Result<Step> {
        check_action(&self.spec(), action)?;
        let a = self.mdp.action_index(action[0]);
        let s = self.state;
        let pick = |rng: &mut StdRng, probs: &mut dyn Iterator<Item = f64>| {
            let mut u: f64 = rng.random();
            let mut last = 0;
            for (i, p) in probs.enumerate() {
                last = i;
                if u < p {
                    return i;
                }
                u -= p;
            }
            last
        };
        let ri = pick(
            &mut self.rng,
            &mut self.mdp.rewards[s][a].iter().map(|x| x.1),
        );
        let reward = self.mdp.rewards[s][a][ri].0;
        let s2 = pick(
            &mut self.rng,
            &mut self.mdp.transitions[s][a].iter().copied(),
        );
        self.state = s2;
        self.steps += 1;
        Ok(Step {
            next_state: self.mdp.encode_state(s2),
            reward,
            terminal: false,
            truncated: self.steps >= self.max_steps,
        })
    }
}

// ---------------------------------------------------------------------------

/// Every environment the trainer can run, as one serialisable type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToyEnv {
    BimodalBandit(BimodalBandit),
    TwoGoalPointmass(TwoGoalPointMass),
    ConstantChain(ConstantChain),
    OracleMdp(OracleMdpEnv),
}

impl ToyEnv {
    fn inner(&self) -> &dyn Environment {
        match self {
            ToyEnv::BimodalBandit(e) => e,
            ToyEnv::TwoGoalPointmass(e) => e,
            ToyEnv::ConstantChain(e) => e,
            ToyEnv::OracleMdp(e) => e,
        }
    }

    fn inner_mut(&mut self) -> &mut dyn Environment {
        match self {
            ToyEnv::BimodalBandit(e) => e,
            ToyEnv::TwoGoalPointmass(e) => e,
            ToyEnv::ConstantChain(e) => e,
            ToyEnv::OracleMdp(e) => e,
        }
    }
}

impl Environment for ToyEnv {
    fn spec(&self) -> EnvSpec {
        self.inner().spec()
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        self.inner_mut().reset(seed)
    }

    fn step(&mut self, action: &[f64]) -> Result<Step> {
        self.inner_mut().step(action)
    }
}

/// Parameters for every environment; only the selected one is used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct EnvParams {
    pub bimodal_bandit: BanditConfig,
    pub two_goal_pointmass: PointMassConfig,
    pub constant_chain: ChainConfig,
    pub oracle_mdp: OracleEnvConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleEnvConfig {
    pub max_steps: usize,
}

impl Default for OracleEnvConfig {
    fn default() -> Self {
        Self { max_steps: 50 }
    }
}

pub const ENV_NAMES: [&str; 4] = [
    "bimodal_bandit",
    "two_goal_pointmass",
    "constant_chain",
    "oracle_mdp",
];

/// Builds an environment by name.
pub fn make_env(name: &str, params: &EnvParams) -> Result<ToyEnv> {
    Ok(match name {
        "bimodal_bandit" => ToyEnv::BimodalBandit(BimodalBandit::new(params.bimodal_bandit)),
        "two_goal_pointmass" => {
            ToyEnv::TwoGoalPointmass(TwoGoalPointMass::new(params.two_goal_pointmass.clone()))
        }
        "constant_chain" => ToyEnv::ConstantChain(ConstantChain::new(params.constant_chain)),
        "oracle_mdp" => ToyEnv::OracleMdp(OracleMdpEnv::new(
            OracleMdp::two_state(),
            params.oracle_mdp.max_steps,
        )?),
        other => {
            return Err(Error::Config(format!(
                "unknown environment `{other}`; expected one of {ENV_NAMES:?}"
            )))
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bandit_rewards() {
        let mut env = BimodalBandit::new(BanditConfig {
            noise_std: 0.0,
            ..BanditConfig::default()
        });
        env.reset(0);
        for (a, want) in [(0.6, 1.0), (-0.6, 1.0), (0.0, 0.64)] {
            let step = env.step(&[a]).unwrap();
            assert!((step.reward - want).abs() < 1e-12);
            assert!(step.terminal);
        }
        // clipped to 1
        let step = env.step(&[3.0]).unwrap();
        assert!((step.reward - (1.0 - 0.16)).abs() < 1e-12);
    }

    #[test]
    fn pointmass_rest_and_obstacle() {
        let mut env = TwoGoalPointMass::new(PointMassConfig::default());
        env.reset(0);
        let step = env.step(&[0.0, 0.0]).unwrap();
        assert_eq!(&step.next_state[..2], &[0.0, 0.0]);
        let d = (0.8f64.powi(2) + 4.0).sqrt();
        assert!((step.reward + d).abs() < 1e-12);

        let inside = env.reward_at([0.0, 1.1], &[0.0, 0.0]);
        let free = -env.nearest_goal([0.0, 1.1]).1;
        assert!(inside < free);
    }

    #[test]
    fn chain_truncates() {
        let mut env = ConstantChain::new(ChainConfig {
            reward: 1.0,
            max_steps: 3,
        });
        env.reset(0);
        assert!(!env.step(&[0.0]).unwrap().truncated);
        assert!(!env.step(&[0.0]).unwrap().truncated);
        let last = env.step(&[0.0]).unwrap();
        assert!(last.truncated && !last.terminal);
    }

    #[test]
    fn wrong_action_dim() {
        let mut env = make_env("two_goal_pointmass", &EnvParams::default()).unwrap();
        env.reset(0);
        assert!(env.step(&[0.0]).is_err());
        assert!(make_env("cartpole", &EnvParams::default()).is_err());
    }

    fn chain_mdp(reward_atoms: Vec<(f64, f64)>, gamma: f64) -> OracleMdp {
        OracleMdp {
            actions: vec![0.0],
            transitions: vec![vec![vec![1.0]]],
            rewards: vec![vec![reward_atoms]],
            gamma,
            start_state: 0,
        }
    }

    #[test]
    fn enumerator_geometric_sum() {
        let mdp = chain_mdp(vec![(1.0, 1.0)], 0.5);
        let pi = TabularPolicy {
            probs: vec![vec![1.0]],
        };
        let atoms = oracle_return_distribution(&mdp, &pi, 0, 0, 3, 0.0, 1000).unwrap();
        assert_eq!(atoms.len(), 1);
        assert_eq!(atoms[0].value, 1.75);
        assert_eq!(atoms[0].prob, 1.0);
    }

    #[test]
    fn enumerator_single_coin() {
        let mdp = chain_mdp(vec![(-1.0, 0.5), (1.0, 0.5)], 0.0);
        let pi = TabularPolicy {
            probs: vec![vec![1.0]],
        };
        let atoms = oracle_return_distribution(&mdp, &pi, 0, 0, 1, 0.0, 1000).unwrap();
        assert_eq!(
            atoms,
            vec![
                Atom {
                    value: -1.0,
                    prob: 0.5
                },
                Atom {
                    value: 1.0,
                    prob: 0.5
                }
            ]
        );
    }

    #[test]
    fn enumerator_budget() {
        let mdp = OracleMdp::two_state();
        let pi = TabularPolicy {
            probs: vec![vec![0.3, 0.7], vec![0.6, 0.4]],
        };
        assert!(matches!(
            oracle_return_distribution(&mdp, &pi, 0, 1, 12, 0.0, 50),
            Err(Error::NodeBudget { budget: 50 })
        ));
        let atoms = oracle_return_distribution(&mdp, &pi, 0, 1, 10, 0.0, 1_000_000).unwrap();
        let total: f64 = atoms.iter().map(|a| a.prob).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn entropy_bonus_shifts_later_steps() {
        let mdp = chain_mdp(vec![(0.0, 1.0)], 0.5);
        let pi = TabularPolicy {
            probs: vec![vec![1.0]],
        };
        let plain = oracle_return_distribution(&mdp, &pi, 0, 0, 4, 1.0, 100).unwrap();
        assert_eq!(plain[0].value, 0.0);
        let mdp2 = OracleMdp {
            actions: vec![0.0, 1.0],
            transitions: vec![vec![vec![1.0], vec![1.0]]],
            rewards: vec![vec![vec![(0.0, 1.0)], vec![(0.0, 1.0)]]],
            gamma: 0.5,
            start_state: 0,
        };
        let half = TabularPolicy {
            probs: vec![vec![0.5, 0.5]],
        };
        let atoms = oracle_return_distribution(&mdp2, &half, 0, 0, 3, 1.0, 100).unwrap();
        let want = 2f64.ln() * (0.5 + 0.25);
        assert_eq!(atoms.len(), 1);
        assert!((atoms[0].value - want).abs() < 1e-12);
    }
}
