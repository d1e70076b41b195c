//! Noise-schedule algebra, closed-form forward corruption, conditional reverse
//! sampling, and the denoising objective shared by the value and policy
//! networks.
//!
//! Diffusion steps are 1-based throughout: `t ∈ 1..=T`. `alpha_bar(0)` is 1.

use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Activation, Mlp, Params};
use crate::rng::{normal_matrix, normal_vec, rng_from_seed, sub_seed};
use crate::tape::{Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleShape {
    #[default]
    Linear,
    Cosine,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleConfig {
    pub steps: usize,
    pub beta_min: f64,
    pub beta_max: f64,
    pub shape: ScheduleShape,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            steps: 20,
            beta_min: 1e-3,
            beta_max: 0.5,
            shape: ScheduleShape::Linear,
        }
    }
}

impl ScheduleConfig {
    pub fn build(&self) -> Result<NoiseSchedule> {
        make_schedule(self.steps, self.beta_min, self.beta_max, self.shape)
    }
}

/// The β/α/ᾱ ladder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    betas: Vec<f64>,
    alphas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

pub fn make_schedule(
    steps: usize,
    beta_min: f64,
    beta_max: f64,
    shape: ScheduleShape,
) -> Result<NoiseSchedule> {
    if steps == 0 {
        return Err(Error::Config("diffusion needs at least one step".into()));
    }
    if !(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0) {
        return Err(Error::Config(format!(
            "beta bounds must satisfy 0 < beta_min <= beta_max < 1, got [{beta_min}, {beta_max}]"
        )));
    }
    let betas = match shape {
        ScheduleShape::Linear => {
            if steps == 1 {
                vec![beta_min]
            } else {
                (0..steps)
                    .map(|i| beta_min + (beta_max - beta_min) * i as f64 / (steps - 1) as f64)
                    .collect()
            }
        }
        ScheduleShape::Cosine => {
            // Nichol & Dhariwal cosine ᾱ curve, betas clipped into the bounds.
            let s = 0.008;
            let f = |t: f64| {
                let x = (t / steps as f64 + s) / (1.0 + s) * std::f64::consts::FRAC_PI_2;
                x.cos().powi(2)
            };
            (1..=steps)
                .map(|t| {
                    let b = 1.0 - f(t as f64) / f(t as f64 - 1.0);
                    b.clamp(beta_min, beta_max)
                })
                .collect()
        }
    };
    NoiseSchedule::from_betas(betas)
}

impl NoiseSchedule {
    pub fn from_betas(betas: Vec<f64>) -> Result<Self> {
        if betas.is_empty() {
            return Err(Error::Config("diffusion needs at least one step".into()));
        }
        if let Some(b) = betas.iter().find(|b| !(**b > 0.0 && **b < 1.0)) {
            return Err(Error::Config(format!("beta {b} outside (0, 1)")));
        }
        let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
        let mut alpha_bars = Vec::with_capacity(alphas.len());
        let mut acc = 1.0;
        for a in &alphas {
            acc *= a;
            alpha_bars.push(acc);
        }
        Ok(Self {
            betas,
            alphas,
            alpha_bars,
        })
    }

    /// Number of diffusion steps T.
    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bars
    }

    pub fn check_step(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.steps() {
            Err(Error::StepOutOfRange {
                step: t,
                max: self.steps(),
            })
        } else {
            Ok(())
        }
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alphas[t - 1]
    }

    /// ᾱ_t, with ᾱ_0 = 1.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.alpha_bars[t - 1]
        }
    }

    /// Coefficients `(1/√α_t, β_t/√(1−ᾱ_t))` of the reverse update.
    fn reverse_coefs(&self, t: usize) -> (f64, f64) {
        (
            1.0 / self.alpha(t).sqrt(),
            self.beta(t) / (1.0 - self.alpha_bar(t)).sqrt(),
        )
    }
}

/// `√ᾱ_t·x0 + √(1−ᾱ_t)·noise`.
pub fn forward_corrupt(
    x0: &[f64],
    t: usize,
    schedule: &NoiseSchedule,
    noise: &[f64],
) -> Result<Vec<f64>> {
    schedule.check_step(t)?;
    if x0.len() != noise.len() {
        return Err(Error::Shape(format!(
            "sample has {} dims but noise has {}",
            x0.len(),
            noise.len()
        )));
    }
    let (a, b) = (
        schedule.alpha_bar(t).sqrt(),
        (1.0 - schedule.alpha_bar(t)).sqrt(),
    );
    Ok(x0.iter().zip(noise).map(|(x, n)| a * x + b * n).collect())
}

/// Mean of q(z_{t−1} | z_t, z_0) for a Gaussian diffusion.
pub fn posterior_mean(
    z_t: &[f64],
    x0: &[f64],
    t: usize,
    schedule: &NoiseSchedule,
) -> Result<Vec<f64>> {
    schedule.check_step(t)?;
    if z_t.len() != x0.len() {
        return Err(Error::Shape(format!(
            "z_t has {} dims but x0 has {}",
            z_t.len(),
            x0.len()
        )));
    }
    let ab = schedule.alpha_bar(t);
    let ab_prev = schedule.alpha_bar(t - 1);
    let c0 = ab_prev.sqrt() * schedule.beta(t) / (1.0 - ab);
    let ct = schedule.alpha(t).sqrt() * (1.0 - ab_prev) / (1.0 - ab);
    Ok(x0.iter().zip(z_t).map(|(x, z)| c0 * x + ct * z).collect())
}

/// A conditional noise-prediction network ε(z_t, cond, t).
pub trait NoisePredictor {
    fn sample_dim(&self) -> usize;
    fn cond_dim(&self) -> usize;
    /// `z` and `cond` have one row per item; `steps[i]` is the step of row `i`.
    fn predict(&self, z: &Array2<f64>, cond: &Array2<f64>, steps: &[usize]) -> Array2<f64>;
}

/// A predictor that can also be evaluated on a [`Tape`].
pub trait TapePredictor: NoisePredictor {
    fn params(&self) -> &Params;
    fn params_mut(&mut self) -> &mut Params;
    fn bind(&self, tape: &mut Tape, group: usize, trainable: bool) -> Vec<Var>;
    fn predict_tape(
        &self,
        tape: &mut Tape,
        bound: &[Var],
        z: Var,
        cond: Var,
        steps: &[usize],
    ) -> Var;
}

fn check_predictor_io(
    pred: &dyn NoisePredictor,
    z: &Array2<f64>,
    cond: &Array2<f64>,
) -> Result<()> {
    if z.ncols() != pred.sample_dim() {
        return Err(Error::Shape(format!(
            "sample has {} dims, predictor expects {}",
            z.ncols(),
            pred.sample_dim()
        )));
    }
    if cond.ncols() != pred.cond_dim() {
        return Err(Error::Shape(format!(
            "conditioning has {} dims, predictor expects {}",
            cond.ncols(),
            pred.cond_dim()
        )));
    }
    if cond.nrows() != z.nrows() {
        return Err(Error::Shape(format!(
            "{} conditioning rows for {} samples",
            cond.nrows(),
            z.nrows()
        )));
    }
    Ok(())
}

/// One reverse update:
/// `z_{t−1} = (z_t − β_t/√(1−ᾱ_t)·ε̂)/√α_t + √β_t·eps`.
pub fn reverse_step(
    z_t: &Array2<f64>,
    t: usize,
    predictor: &dyn NoisePredictor,
    cond: &Array2<f64>,
    schedule: &NoiseSchedule,
    eps: &Array2<f64>,
) -> Result<Array2<f64>> {
    schedule.check_step(t)?;
    check_predictor_io(predictor, z_t, cond)?;
    let steps = vec![t; z_t.nrows()];
    let eps_hat = predictor.predict(z_t, cond, &steps);
    if eps_hat.dim() != z_t.dim() {
        return Err(Error::Shape(format!(
            "predictor returned {:?} for samples of shape {:?}",
            eps_hat.dim(),
            z_t.dim()
        )));
    }
    if eps.dim() != z_t.dim() {
        return Err(Error::Shape(format!(
            "step noise {:?} does not match samples {:?}",
            eps.dim(),
            z_t.dim()
        )));
    }
    let (c1, c2) = schedule.reverse_coefs(t);
    let sigma = schedule.beta(t).sqrt();
    let mut out = (z_t - &(eps_hat * c2)) * c1;
    out.scaled_add(sigma, eps);
    Ok(out)
}

/// Pre-drawn randomness for a reverse chain: the initial `z_T` and the per-step
/// noise for `t = T..2` (`t = 1` never injects noise).
#[derive(Debug, Clone, PartialEq)]
pub struct ChainNoise {
    pub initial: Array2<f64>,
    /// `step_noise[t - 1]` is added at step `t`; entry 0 is always zero.
    pub step_noise: Vec<Array2<f64>>,
}

impl ChainNoise {
    /// Draws all rows from one stream: `z_T` first, then one matrix per step
    /// from `T` down to `2`.
    pub fn draw<R: Rng + ?Sized>(
        rng: &mut R,
        rows: usize,
        dim: usize,
        steps: usize,
        stochastic: bool,
    ) -> Self {
        let initial = normal_matrix(rng, rows, dim);
        let mut step_noise = vec![Array2::zeros((rows, dim)); steps];
        if stochastic {
            for t in (2..=steps).rev() {
                step_noise[t - 1] = normal_matrix(rng, rows, dim);
            }
        }
        Self {
            initial,
            step_noise,
        }
    }

    /// Row `i` uses its own stream seeded with `seeds[i]`, so each row is
    /// reproducible independently of the batch it is drawn in.
    pub fn per_row(seeds: &[u64], dim: usize, steps: usize, stochastic: bool) -> Self {
        let rows = seeds.len();
        let mut initial = Array2::zeros((rows, dim));
        let mut step_noise = vec![Array2::zeros((rows, dim)); steps];
        for (i, &seed) in seeds.iter().enumerate() {
            let mut rng = rng_from_seed(seed);
            initial
                .row_mut(i)
                .assign(&Array1::from(normal_vec(&mut rng, dim)));
            if stochastic {
                for t in (2..=steps).rev() {
                    step_noise[t - 1]
                        .row_mut(i)
                        .assign(&Array1::from(normal_vec(&mut rng, dim)));
                }
            }
        }
        Self {
            initial,
            step_noise,
        }
    }

    pub fn rows(&self) -> usize {
        self.initial.nrows()
    }
}

/// Runs the reverse chain from `noise.initial` down to `z_0`.
pub fn run_chain(
    predictor: &dyn NoisePredictor,
    cond: &Array2<f64>,
    schedule: &NoiseSchedule,
    noise: &ChainNoise,
) -> Result<Array2<f64>> {
    if noise.step_noise.len() != schedule.steps() {
        return Err(Error::Shape(format!(
            "chain noise covers {} steps, schedule has {}",
            noise.step_noise.len(),
            schedule.steps()
        )));
    }
    let mut z = noise.initial.clone();
    for t in (1..=schedule.steps()).rev() {
        z = reverse_step(&z, t, predictor, cond, schedule, &noise.step_noise[t - 1])?;
    }
    Ok(z)
}

/// Reverse chain recorded on a tape so gradients flow through every step.
/// `cond` may itself depend on trainable parameters.
pub fn run_chain_tape(
    tape: &mut Tape,
    predictor: &dyn TapePredictor,
    bound: &[Var],
    cond: Var,
    schedule: &NoiseSchedule,
    noise: &ChainNoise,
) -> Var {
    let rows = noise.rows();
    let mut z = tape.input(noise.initial.clone());
    for t in (1..=schedule.steps()).rev() {
        let steps = vec![t; rows];
        let eps_hat = predictor.predict_tape(tape, bound, z, cond, &steps);
        let (c1, c2) = schedule.reverse_coefs(t);
        let scaled = tape.scale(eps_hat, c2);
        let diff = tape.sub(z, scaled);
        z = tape.scale(diff, c1);
        if t > 1 {
            let extra = tape.input(&noise.step_noise[t - 1] * schedule.beta(t).sqrt());
            z = tape.add(z, extra);
        }
    }
    z
}

#[derive(Debug, Clone)]
pub struct DiffusionSampleRequest {
    pub n_samples: usize,
    /// One row shared by every sample, or one row per sample.
    pub conditioning: Array2<f64>,
    /// Whether the per-step noise is drawn (otherwise it is zeroed).
    pub stochastic: bool,
    pub rng_seed: u64,
}

impl DiffusionSampleRequest {
    pub fn row_seeds(&self) -> Vec<u64> {
        (0..self.n_samples as u64)
            .map(|i| sub_seed(self.rng_seed, i))
            .collect()
    }
}

/// Broadcasts a single conditioning row to `rows` rows.
pub fn expand_conditioning(cond: &Array2<f64>, rows: usize) -> Result<Array2<f64>> {
    match cond.nrows() {
        n if n == rows => Ok(cond.clone()),
        1 => Ok(cond
            .broadcast((rows, cond.ncols()))
            .expect("single row broadcasts")
            .to_owned()),
        n => Err(Error::Shape(format!(
            "{n} conditioning rows for {rows} samples"
        ))),
    }
}

/// `n_samples` independent reverse chains; row `i` is seeded with
/// `sub_seed(rng_seed, i)`.
pub fn reverse_sample(
    request: &DiffusionSampleRequest,
    predictor: &dyn NoisePredictor,
    schedule: &NoiseSchedule,
) -> Result<Array2<f64>> {
    if request.n_samples == 0 {
        return Err(Error::Config("n_samples must be at least 1".into()));
    }
    reverse_sample_seeded(
        &request.row_seeds(),
        &request.conditioning,
        request.stochastic,
        predictor,
        schedule,
    )
}

/// Like [`reverse_sample`] with explicit per-row seeds.
pub fn reverse_sample_seeded(
    seeds: &[u64],
    conditioning: &Array2<f64>,
    stochastic: bool,
    predictor: &dyn NoisePredictor,
    schedule: &NoiseSchedule,
) -> Result<Array2<f64>> {
    let cond = expand_conditioning(conditioning, seeds.len())?;
    let noise = ChainNoise::per_row(seeds, predictor.sample_dim(), schedule.steps(), stochastic);
    run_chain(predictor, &cond, schedule, &noise)
}

/// Per-sample step indices and noise for the denoising objective.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiseDraws {
    pub steps: Vec<usize>,
    pub noise: Array2<f64>,
}

impl DenoiseDraws {
    /// `t ~ U{1..T}` and `ε ~ N(0, I)` independently per sample.
    pub fn draw<R: Rng + ?Sized>(
        rng: &mut R,
        rows: usize,
        dim: usize,
        schedule: &NoiseSchedule,
    ) -> Self {
        let steps = (0..rows)
            .map(|_| rng.random_range(1..=schedule.steps()))
            .collect();
        let noise = normal_matrix(rng, rows, dim);
        Self { steps, noise }
    }

    /// Corrupted inputs `√ᾱ_t·x0 + √(1−ᾱ_t)·ε`, row by row.
    pub fn corrupt(&self, x0: &Array2<f64>, schedule: &NoiseSchedule) -> Array2<f64> {
        let mut z = x0.clone();
        for (i, mut row) in z.rows_mut().into_iter().enumerate() {
            let ab = schedule.alpha_bar(self.steps[i]);
            let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
            for (j, x) in row.iter_mut().enumerate() {
                *x = a * *x + b * self.noise[[i, j]];
            }
        }
        z
    }
}

fn check_loss_inputs(
    x0: &Array2<f64>,
    cond: &Array2<f64>,
    draws: &DenoiseDraws,
    schedule: &NoiseSchedule,
) -> Result<()> {
    if x0.nrows() == 0 {
        return Err(Error::EmptyBatch);
    }
    if cond.nrows() != x0.nrows()
        || draws.steps.len() != x0.nrows()
        || draws.noise.dim() != x0.dim()
    {
        return Err(Error::Shape(format!(
            "batch of {} samples with {} conditioning rows and {} draws",
            x0.nrows(),
            cond.nrows(),
            draws.steps.len()
        )));
    }
    for &t in &draws.steps {
        schedule.check_step(t)?;
    }
    Ok(())
}

/// Mean over the batch of `‖ε − ε̂(√ᾱ_t·x0 + √(1−ᾱ_t)·ε, cond, t)‖²` with
/// fresh `(t, ε)` per sample.
pub fn simple_denoising_loss<R: Rng + ?Sized>(
    x0: &Array2<f64>,
    predictor: &dyn NoisePredictor,
    cond: &Array2<f64>,
    schedule: &NoiseSchedule,
    rng: &mut R,
) -> Result<f64> {
    if x0.nrows() == 0 {
        return Err(Error::EmptyBatch);
    }
    let draws = DenoiseDraws::draw(rng, x0.nrows(), x0.ncols(), schedule);
    denoising_loss_with(x0, predictor, cond, schedule, &draws)
}

/// [`simple_denoising_loss`] with injected `(t, ε)`.
pub fn denoising_loss_with(
    x0: &Array2<f64>,
    predictor: &dyn NoisePredictor,
    cond: &Array2<f64>,
    schedule: &NoiseSchedule,
    draws: &DenoiseDraws,
) -> Result<f64> {
    check_loss_inputs(x0, cond, draws, schedule)?;
    let z = draws.corrupt(x0, schedule);
    check_predictor_io(predictor, &z, cond)?;
    let eps_hat = predictor.predict(&z, cond, &draws.steps);
    let sq: f64 = (&draws.noise - &eps_hat).mapv(|e| e * e).sum();
    Ok(sq / x0.nrows() as f64)
}

/// Denoising loss on a tape; returns the 1×1 loss node.
pub fn denoising_loss_tape(
    tape: &mut Tape,
    predictor: &dyn TapePredictor,
    bound: &[Var],
    x0: &Array2<f64>,
    cond: &Array2<f64>,
    schedule: &NoiseSchedule,
    draws: &DenoiseDraws,
) -> Result<Var> {
    check_loss_inputs(x0, cond, draws, schedule)?;
    let z = draws.corrupt(x0, schedule);
    check_predictor_io(predictor, &z, cond)?;
    let zv = tape.input(z);
    let cv = tape.input(cond.clone());
    let eps_hat = predictor.predict_tape(tape, bound, zv, cv, &draws.steps);
    let target = tape.input(draws.noise.clone());
    let diff = tape.sub(target, eps_hat);
    let sq = tape.square(diff);
    let per_sample = tape.sum_cols(sq);
    Ok(tape.mean(per_sample))
}

/// Loss value and parameter gradients of the denoising objective.
pub fn denoising_loss_grad(
    predictor: &dyn TapePredictor,
    x0: &Array2<f64>,
    cond: &Array2<f64>,
    schedule: &NoiseSchedule,
    draws: &DenoiseDraws,
) -> Result<(f64, Vec<Array2<f64>>)> {
    let mut tape = Tape::new();
    let bound = predictor.bind(&mut tape, 0, true);
    let loss = denoising_loss_tape(&mut tape, predictor, &bound, x0, cond, schedule, draws)?;
    let grads = tape.backward(loss).group(0, &predictor.params().shapes());
    Ok((tape.scalar(loss), grads))
}

/// Number of step-embedding features and how they are produced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetConfig {
    pub hidden: [usize; 2],
    pub layers: usize,
    pub time_features: usize,
    pub activation: Activation,
    /// Adds `√(1−ᾱ_t)·z_t` to the network output: the exact noise predictor
    /// for standard-normal data, so an untrained chain maps N(0, I) to N(0, I).
    pub prior_skip: bool,
    pub out_scale: f64,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            hidden: [64, 64],
            layers: 2,
            time_features: 8,
            activation: Activation::Mish,
            prior_skip: true,
            out_scale: 0.1,
        }
    }
}

impl NetConfig {
    pub fn hidden_sizes(&self) -> Vec<usize> {
        self.hidden.iter().take(self.layers).copied().collect()
    }
}

/// Step embedding: sinusoids of `t/T` at increasing frequency; a single
/// feature is the plain ratio.
pub fn step_features(t: usize, total: usize, n: usize) -> Vec<f64> {
    let r = t as f64 / total as f64;
    if n == 1 {
        return vec![r];
    }
    (0..n)
        .map(|i| {
            let freq = std::f64::consts::PI * (1 + i / 2) as f64;
            if i % 2 == 0 {
                (freq * r).sin()
            } else {
                (freq * r).cos()
            }
        })
        .collect()
}

/// MLP noise predictor over `[z_t, cond, step features]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsNet {
    pub mlp: Mlp,
    sample_dim: usize,
    cond_dim: usize,
    time_features: usize,
    total_steps: usize,
    /// `√(1−ᾱ_t)` per step when the prior skip is enabled.
    skip: Option<Vec<f64>>,
}

impl EpsNet {
    pub fn new<R: Rng + ?Sized>(
        sample_dim: usize,
        cond_dim: usize,
        schedule: &NoiseSchedule,
        config: &NetConfig,
        rng: &mut R,
    ) -> Self {
        let mut sizes = vec![sample_dim + cond_dim + config.time_features];
        sizes.extend(config.hidden_sizes());
        sizes.push(sample_dim);
        let mlp = Mlp::new(&sizes, config.activation, config.out_scale, rng);
        let skip = config.prior_skip.then(|| {
            (1..=schedule.steps())
                .map(|t| (1.0 - schedule.alpha_bar(t)).sqrt())
                .collect()
        });
        Self {
            mlp,
            sample_dim,
            cond_dim,
            time_features: config.time_features,
            total_steps: schedule.steps(),
            skip,
        }
    }

    fn features(&self, steps: &[usize]) -> Array2<f64> {
        let mut f = Array2::zeros((steps.len(), self.time_features));
        if self.time_features > 0 {
            for (i, &t) in steps.iter().enumerate() {
                for (j, v) in step_features(t, self.total_steps, self.time_features)
                    .into_iter()
                    .enumerate()
                {
                    f[[i, j]] = v;
                }
            }
        }
        f
    }

    fn skip_matrix(&self, steps: &[usize]) -> Option<Array2<f64>> {
        self.skip.as_ref().map(|coef| {
            Array2::from_shape_fn((steps.len(), self.sample_dim), |(i, _)| coef[steps[i] - 1])
        })
    }

    /// Prediction with an alternative parameter set of the same layout.
    pub fn predict_with(
        &self,
        params: &Params,
        z: &Array2<f64>,
        cond: &Array2<f64>,
        steps: &[usize],
    ) -> Array2<f64> {
        let feats = self.features(steps);
        let input = ndarray::concatenate(ndarray::Axis(1), &[z.view(), cond.view(), feats.view()])
            .expect("rows agree");
        let mut out = self.mlp.forward_with(params, &input);
        if let Some(skip) = self.skip_matrix(steps) {
            out += &(skip * z);
        }
        out
    }

    /// A view of this network evaluated with `params` instead of its own.
    pub fn with_params<'a>(&'a self, params: &'a Params) -> ParamsOverride<'a> {
        ParamsOverride { net: self, params }
    }
}

impl NoisePredictor for EpsNet {
    fn sample_dim(&self) -> usize {
        self.sample_dim
    }

    fn cond_dim(&self) -> usize {
        self.cond_dim
    }

    fn predict(&self, z: &Array2<f64>, cond: &Array2<f64>, steps: &[usize]) -> Array2<f64> {
        self.predict_with(&self.mlp.params, z, cond, steps)
    }
}

impl TapePredictor for EpsNet {
    fn params(&self) -> &Params {
        &self.mlp.params
    }

    fn params_mut(&mut self) -> &mut Params {
        &mut self.mlp.params
    }

    fn bind(&self, tape: &mut Tape, group: usize, trainable: bool) -> Vec<Var> {
        Mlp::bind(tape, &self.mlp.params, group, trainable)
    }

    fn predict_tape(
        &self,
        tape: &mut Tape,
        bound: &[Var],
        z: Var,
        cond: Var,
        steps: &[usize],
    ) -> Var {
        let feats = tape.input(self.features(steps));
        let input = tape.concat(&[z, cond, feats]);
        let out = self.mlp.forward_tape(tape, bound, input);
        match self.skip_matrix(steps) {
            Some(skip) => {
                let s = tape.input(skip);
                let sz = tape.mul(s, z);
                tape.add(out, sz)
            }
            None => out,
        }
    }
}

/// An [`EpsNet`] evaluated with borrowed parameters (for example a target
/// network).
pub struct ParamsOverride<'a> {
    net: &'a EpsNet,
    params: &'a Params,
}

impl NoisePredictor for ParamsOverride<'_> {
    fn sample_dim(&self) -> usize {
        self.net.sample_dim
    }

    fn cond_dim(&self) -> usize {
        self.net.cond_dim
    }

    fn predict(&self, z: &Array2<f64>, cond: &Array2<f64>, steps: &[usize]) -> Array2<f64> {
        self.net.predict_with(self.params, z, cond, steps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// ε̂ ≡ c for every input.
    struct ConstPredictor {
        dim: usize,
        cond: usize,
        value: f64,
    }

    impl NoisePredictor for ConstPredictor {
        fn sample_dim(&self) -> usize {
            self.dim
        }
        fn cond_dim(&self) -> usize {
            self.cond
        }
        fn predict(&self, z: &Array2<f64>, _: &Array2<f64>, _: &[usize]) -> Array2<f64> {
            Array2::from_elem(z.dim(), self.value)
        }
    }

    /// Knows the clean sample (passed as conditioning) and recovers the exact ε.
    struct ExactNoise<'a> {
        schedule: &'a NoiseSchedule,
    }

    impl NoisePredictor for ExactNoise<'_> {
        fn sample_dim(&self) -> usize {
            1
        }
        fn cond_dim(&self) -> usize {
            1
        }
        fn predict(&self, z: &Array2<f64>, cond: &Array2<f64>, steps: &[usize]) -> Array2<f64> {
            Array2::from_shape_fn(z.dim(), |(i, j)| {
                let ab = self.schedule.alpha_bar(steps[i]);
                (z[[i, j]] - ab.sqrt() * cond[[i, j]]) / (1.0 - ab).sqrt()
            })
        }
    }

    #[test]
    fn forced_betas() {
        let s = NoiseSchedule::from_betas(vec![0.5, 0.5]).unwrap();
        assert_eq!(s.alphas(), &[0.5, 0.5]);
        assert_eq!(s.alpha_bars(), &[0.5, 0.25]);
    }

    #[test]
    fn single_step_linear() {
        let s = make_schedule(1, 0.1, 0.1, ScheduleShape::Linear).unwrap();
        assert_eq!(s.betas(), &[0.1]);
        assert_eq!(s.alpha_bars(), &[0.9]);
    }

    #[test]
    fn linear_product_matches_separate_loop() {
        let s = make_schedule(20, 1e-4, 0.02, ScheduleShape::Linear).unwrap();
        let mut prod = 1.0;
        for i in 0..20 {
            let beta = 1e-4 + (0.02 - 1e-4) * i as f64 / 19.0;
            prod *= 1.0 - beta;
        }
        assert!((s.alpha_bar(20) - prod).abs() < 1e-15);
        assert!((s.betas()[0] - 1e-4).abs() < 1e-18);
        assert!((s.betas()[19] - 0.02).abs() < 1e-15);
    }

    #[test]
    fn schedule_rejects_bad_input() {
        assert!(make_schedule(0, 0.1, 0.2, ScheduleShape::Linear).is_err());
        assert!(make_schedule(5, 0.0, 0.2, ScheduleShape::Linear).is_err());
        assert!(make_schedule(5, 0.3, 0.2, ScheduleShape::Linear).is_err());
        assert!(make_schedule(5, 0.1, 1.0, ScheduleShape::Cosine).is_err());
        assert!(NoiseSchedule::from_betas(vec![0.5, 1.0]).is_err());
    }

    #[test]
    fn cosine_schedule_is_valid() {
        let s = make_schedule(30, 1e-4, 0.999, ScheduleShape::Cosine).unwrap();
        for w in s.alpha_bars().windows(2) {
            assert!(w[1] < w[0]);
        }
        assert!(s.alpha_bar(30) < 1e-3);
    }

    #[test]
    fn forward_corrupt_closed_form() {
        let s = NoiseSchedule::from_betas(vec![0.5, 0.5]).unwrap();
        let x0 = [1.0, -2.0, 4.0];
        assert_eq!(
            forward_corrupt(&x0, 2, &s, &[0.0; 3]).unwrap(),
            vec![0.5, -1.0, 2.0]
        );
        let n = [1.0, -1.0, 0.3];
        let out = forward_corrupt(&[0.0; 3], 2, &s, &n).unwrap();
        for (o, n) in out.iter().zip(n) {
            assert!((o - 0.75f64.sqrt() * n).abs() < 1e-15);
        }
        assert!(matches!(
            forward_corrupt(&x0, 3, &s, &[0.0; 3]),
            Err(Error::StepOutOfRange { step: 3, max: 2 })
        ));
        assert!(forward_corrupt(&x0, 0, &s, &[0.0; 3]).is_err());
        assert!(forward_corrupt(&x0, 1, &s, &[0.0; 2]).is_err());
    }

    #[test]
    fn reverse_step_with_zero_predictor_rescales() {
        let s = NoiseSchedule::from_betas(vec![0.75]).unwrap();
        let p = ConstPredictor {
            dim: 2,
            cond: 0,
            value: 0.0,
        };
        let z = array![[1.0, -3.0]];
        let out = reverse_step(
            &z,
            1,
            &p,
            &Array2::zeros((1, 0)),
            &s,
            &Array2::zeros((1, 2)),
        )
        .unwrap();
        assert_eq!(out, array![[2.0, -6.0]]);
    }

    #[test]
    fn reverse_step_with_constant_predictor_is_linear() {
        let s = NoiseSchedule::from_betas(vec![0.1, 0.3]).unwrap();
        let c = 0.7;
        let p = ConstPredictor {
            dim: 1,
            cond: 0,
            value: c,
        };
        let out = reverse_step(
            &array![[0.0]],
            2,
            &p,
            &Array2::zeros((1, 0)),
            &s,
            &array![[0.0]],
        )
        .unwrap();
        let expected = -(s.beta(2) / (s.alpha(2).sqrt() * (1.0 - s.alpha_bar(2)).sqrt())) * c;
        assert!((out[[0, 0]] - expected).abs() < 1e-15);
    }

    #[test]
    fn reverse_step_rejects_mismatch() {
        let s = NoiseSchedule::from_betas(vec![0.1]).unwrap();
        let p = ConstPredictor {
            dim: 2,
            cond: 0,
            value: 0.0,
        };
        let z = array![[1.0]];
        let none = Array2::zeros((1, 0));
        assert!(matches!(
            reverse_step(&z, 1, &p, &none, &s, &array![[0.0]]),
            Err(Error::Shape(_))
        ));
        assert!(reverse_step(&array![[1.0, 1.0]], 2, &p, &none, &s, &array![[0.0, 0.0]]).is_err());
    }

    #[test]
    fn one_step_chain_divides_by_sqrt_alpha() {
        let s = NoiseSchedule::from_betas(vec![0.19]).unwrap();
        let p = ConstPredictor {
            dim: 1,
            cond: 0,
            value: 0.0,
        };
        let req = DiffusionSampleRequest {
            n_samples: 4,
            conditioning: Array2::zeros((1, 0)),
            stochastic: false,
            rng_seed: 11,
        };
        let out = reverse_sample(&req, &p, &s).unwrap();
        let noise = ChainNoise::per_row(&req.row_seeds(), 1, 1, false);
        for i in 0..4 {
            assert!((out[[i, 0]] - noise.initial[[i, 0]] / 0.81f64.sqrt()).abs() < 1e-15);
        }
        assert_eq!(reverse_sample(&req, &p, &s).unwrap(), out);
    }

    #[test]
    fn per_row_noise_is_batch_independent() {
        let seeds = [3, 9, 27];
        let all = ChainNoise::per_row(&seeds, 2, 4, true);
        let one = ChainNoise::per_row(&seeds[1..2], 2, 4, true);
        assert_eq!(all.initial.row(1), one.initial.row(0));
        for t in 0..4 {
            assert_eq!(all.step_noise[t].row(1), one.step_noise[t].row(0));
        }
        assert!(all.step_noise[0].iter().all(|x| *x == 0.0));
    }

    #[test]
    fn exact_noise_predictor_gives_zero_loss() {
        let s = make_schedule(10, 1e-3, 0.3, ScheduleShape::Linear).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x0 = normal_matrix(&mut rng, 64, 1);
        let loss =
            simple_denoising_loss(&x0, &ExactNoise { schedule: &s }, &x0, &s, &mut rng).unwrap();
        assert!(loss < 1e-20, "loss {loss}");
    }

    #[test]
    fn zero_predictor_loss_is_dimension() {
        let s = make_schedule(10, 1e-3, 0.3, ScheduleShape::Linear).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n = 20_000;
        let d = 3;
        let x0 = normal_matrix(&mut rng, n, d);
        let p = ConstPredictor {
            dim: d,
            cond: 0,
            value: 0.0,
        };
        let loss = simple_denoising_loss(&x0, &p, &Array2::zeros((n, 0)), &s, &mut rng).unwrap();
        // ‖ε‖² ~ χ²_d: mean d, variance 2d.
        let se = (2.0 * d as f64 / n as f64).sqrt();
        assert!((loss - d as f64).abs() < 4.0 * se, "loss {loss}");
    }

    #[test]
    fn empty_batch_rejected() {
        let s = make_schedule(3, 1e-3, 0.3, ScheduleShape::Linear).unwrap();
        let p = ConstPredictor {
            dim: 1,
            cond: 0,
            value: 0.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            simple_denoising_loss(
                &Array2::zeros((0, 1)),
                &p,
                &Array2::zeros((0, 0)),
                &s,
                &mut rng
            ),
            Err(Error::EmptyBatch)
        ));
    }

    #[test]
    fn posterior_mean_cases() {
        let s = make_schedule(8, 1e-3, 0.3, ScheduleShape::Linear).unwrap();
        assert!((posterior_mean(&[0.4], &[1.5], 1, &s).unwrap()[0] - 1.5).abs() < 1e-12);
        assert_eq!(posterior_mean(&[0.0], &[0.0], 5, &s).unwrap()[0], 0.0);
        assert!(posterior_mean(&[0.0], &[0.0], 9, &s).is_err());
    }

    #[test]
    fn tape_chain_matches_plain_chain() {
        let s = make_schedule(6, 1e-3, 0.4, ScheduleShape::Linear).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let net = EpsNet::new(2, 3, &s, &NetConfig::default(), &mut rng);
        let cond = normal_matrix(&mut rng, 5, 3);
        let noise = ChainNoise::draw(&mut rng, 5, 2, 6, true);
        let plain = run_chain(&net, &cond, &s, &noise).unwrap();
        let mut tape = Tape::new();
        let bound = net.bind(&mut tape, 0, true);
        let c = tape.input(cond);
        let out = run_chain_tape(&mut tape, &net, &bound, c, &s, &noise);
        for (a, b) in tape.value(out).iter().zip(plain.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
