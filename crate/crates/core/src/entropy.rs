//! Gaussian-mixture fitting of sampled actions, the mixture entropy surrogate,
//! its log-density, and the adaptive temperature controller.

use std::cmp::Ordering;

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky, forward_substitute};
use crate::policy::ActionSampler;
use crate::rng::{rng_from_seed, sub_seed};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceKind {
    #[default]
    Diagonal,
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmConfig {
    pub components: usize,
    pub max_iters: usize,
    pub tol: f64,
    pub covariance_floor: f64,
    /// Components whose weight falls below this are re-seeded.
    pub weight_floor: f64,
    pub covariance: CovarianceKind,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            components: 2,
            max_iters: 50,
            tol: 1e-6,
            covariance_floor: 1e-6,
            weight_floor: 1e-3,
            covariance: CovarianceKind::Diagonal,
        }
    }
}

/// A fitted mixture `Σ_k w_k·N(μ_k, Σ_k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmFit {
    pub weights: Vec<f64>,
    /// K × d.
    pub means: Array2<f64>,
    /// One d × d matrix per component.
    pub covariances: Vec<Array2<f64>>,
    pub log_likelihood: f64,
    /// Log-likelihood before the first M-step and after each one.
    pub log_likelihood_trace: Vec<f64>,
    pub reseeds: usize,
}

impl GmmFit {
    /// Builds a mixture from explicit parameters, checking the simplex and
    /// positive-definiteness invariants.
    pub fn new(
        weights: Vec<f64>,
        means: Array2<f64>,
        covariances: Vec<Array2<f64>>,
    ) -> Result<Self> {
        let k = weights.len();
        let d = means.ncols();
        if k == 0 || means.nrows() != k || covariances.len() != k {
            return Err(Error::Shape(format!(
                "{k} weights, {} means and {} covariances",
                means.nrows(),
                covariances.len()
            )));
        }
        let total: f64 = weights.iter().sum();
        if weights.iter().any(|w| *w < 0.0 || !w.is_finite()) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "weights {weights:?} are not on the simplex"
            )));
        }
        for (i, c) in covariances.iter().enumerate() {
            if c.dim() != (d, d) || cholesky(c).is_none() {
                return Err(Error::NotPositiveDefinite(i));
            }
        }
        Ok(Self {
            weights,
            means,
            covariances,
            log_likelihood: f64::NAN,
            log_likelihood_trace: Vec::new(),
            reseeds: 0,
        })
    }

    pub fn components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means.ncols()
    }

    fn factors(&self) -> Result<Vec<Array2<f64>>> {
        self.covariances
            .iter()
            .enumerate()
            .map(|(i, c)| cholesky(c).ok_or(Error::NotPositiveDefinite(i)))
            .collect()
    }

    /// `log w_k + log N(x | μ_k, Σ_k)` for every component.
    fn component_log_terms(&self, factors: &[Array2<f64>], x: ArrayView1<f64>) -> Vec<f64> {
        (0..self.components())
            .map(|k| {
                let diff: Vec<f64> = x
                    .iter()
                    .zip(self.means.row(k))
                    .map(|(a, m)| a - m)
                    .collect();
                gaussian_log_pdf(&factors[k], &diff) + self.weights[k].ln()
            })
            .collect()
    }
}

fn gaussian_log_pdf(chol: &Array2<f64>, diff: &[f64]) -> f64 {
    let d = diff.len() as f64;
    let y = forward_substitute(chol, diff);
    let maha: f64 = y.iter().map(|v| v * v).sum();
    let log_det: f64 = 2.0 * (0..diff.len()).map(|i| chol[[i, i]].ln()).sum::<f64>();
    -0.5 * (d * LN_2PI + log_det + maha)
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// E-step responsibilities γ(z_ik) and the total log-likelihood.
pub fn responsibilities(fit: &GmmFit, data: &Array2<f64>) -> Result<(Array2<f64>, f64)> {
    let factors = fit.factors()?;
    let n = data.nrows();
    let k = fit.components();
    let mut resp = Array2::zeros((n, k));
    let mut ll = 0.0;
    for (i, row) in data.rows().into_iter().enumerate() {
        let terms = fit.component_log_terms(&factors, row);
        let lse = log_sum_exp(&terms);
        ll += lse;
        for (j, t) in terms.iter().enumerate() {
            resp[[i, j]] = (t - lse).exp();
        }
    }
    Ok((resp, ll))
}

/// Log of the mixture density at `a`, via log-sum-exp.
pub fn gmm_log_density(fit: &GmmFit, a: &[f64]) -> Result<f64> {
    if a.len() != fit.dim() {
        return Err(Error::Shape(format!(
            "point has {} dims, mixture has {}",
            a.len(),
            fit.dim()
        )));
    }
    let factors = fit.factors()?;
    Ok(log_sum_exp(
        &fit.component_log_terms(&factors, ArrayView1::from(a)),
    ))
}

/// `−Σ w_k log w_k + Σ w_k·½·log((2πe)^d·|Σ_k|)`.
///
/// This is the weight-entropy plus average component entropy, not the exact
/// mixture entropy; it ignores component overlap.
pub fn gmm_entropy(fit: &GmmFit) -> Result<f64> {
    let d = fit.dim() as f64;
    let factors = fit.factors()?;
    let mut h = 0.0;
    for (w, l) in fit.weights.iter().zip(&factors) {
        if *w > 0.0 {
            let log_det: f64 = 2.0 * (0..l.nrows()).map(|i| l[[i, i]].ln()).sum::<f64>();
            h += -w * w.ln() + w * 0.5 * (d * (LN_2PI + 1.0) + log_det);
        }
    }
    Ok(h)
}

fn lexicographic(a: ArrayView1<f64>, b: ArrayView1<f64>) -> Ordering {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| *o != Ordering::Equal)
        .unwrap_or(Ordering::Equal)
}

fn sorted_rows(data: &Array2<f64>) -> Array2<f64> {
    let mut idx: Vec<usize> = (0..data.nrows()).collect();
    idx.sort_by(|&i, &j| lexicographic(data.row(i), data.row(j)));
    data.select(ndarray::Axis(0), &idx)
}

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).powi(2)).sum()
}

/// k-means++ seeding: the first centre uniformly, the rest with probability
/// proportional to squared distance from the nearest chosen centre.
fn kmeans_pp<R: Rng + ?Sized>(data: &Array2<f64>, k: usize, rng: &mut R) -> Array2<f64> {
    let n = data.nrows();
    let mut centres = Array2::zeros((k, data.ncols()));
    let first = rng.random_range(0..n);
    centres.row_mut(0).assign(&data.row(first));
    let mut d2: Vec<f64> = (0..n)
        .map(|i| sq_dist(data.row(i), data.row(first)))
        .collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, w) in d2.iter().enumerate() {
                if u < *w {
                    chosen = i;
                    break;
                }
                u -= w;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centres.row_mut(c).assign(&data.row(pick));
        for (i, v) in d2.iter_mut().enumerate() {
            *v = v.min(sq_dist(data.row(i), data.row(pick)));
        }
    }
    centres
}

fn weighted_covariance(
    data: &Array2<f64>,
    weights: ArrayView1<f64>,
    mean: ArrayView1<f64>,
    total: f64,
    kind: CovarianceKind,
    floor: f64,
) -> Array2<f64> {
    let d = data.ncols();
    let mut cov = Array2::zeros((d, d));
    for (row, &w) in data.rows().into_iter().zip(weights.iter()) {
        if w == 0.0 {
            continue;
        }
        for a in 0..d {
            let da = row[a] - mean[a];
            match kind {
                CovarianceKind::Diagonal => cov[[a, a]] += w * da * da,
                CovarianceKind::Full => {
                    for b in 0..d {
                        cov[[a, b]] += w * da * (row[b] - mean[b]);
                    }
                }
            }
        }
    }
    cov /= total;
    match kind {
        CovarianceKind::Diagonal => {
            for a in 0..d {
                cov[[a, a]] = cov[[a, a]].max(floor);
            }
        }
        CovarianceKind::Full => {
            for a in 0..d {
                cov[[a, a]] += floor;
            }
        }
    }
    cov
}

/// Fits a K-component mixture by expectation-maximisation.
///
/// Rows are sorted before seeding, so the result does not depend on the row
/// order of `actions`. Iterates until the log-likelihood gain drops below
/// `tol` or `max_iters` M-steps have run.
pub fn em_fit(actions: &Array2<f64>, config: &EmConfig, seed: u64) -> Result<GmmFit> {
    let k = config.components;
    let n = actions.nrows();
    if k == 0 {
        return Err(Error::Config("mixture needs at least one component".into()));
    }
    if n < k {
        return Err(Error::TooFewPoints { needed: k, got: n });
    }
    if actions.iter().any(|x| !x.is_finite()) {
        return Err(Error::Config("non-finite action in GMM input".into()));
    }
    let data = sorted_rows(actions);
    let mut rng = rng_from_seed(seed);
    let uniform = Array1::from_elem(n, 1.0);
    let global_mean = data.mean_axis(ndarray::Axis(0)).expect("n >= 1");
    let global_cov = weighted_covariance(
        &data,
        uniform.view(),
        global_mean.view(),
        n as f64,
        config.covariance,
        config.covariance_floor,
    );

    let mut fit = GmmFit {
        weights: vec![1.0 / k as f64; k],
        means: kmeans_pp(&data, k, &mut rng),
        covariances: vec![global_cov.clone(); k],
        log_likelihood: f64::NAN,
        log_likelihood_trace: Vec::new(),
        reseeds: 0,
    };
    let (mut resp, mut ll) = responsibilities(&fit, &data)?;
    fit.log_likelihood_trace.push(ll);

    for _ in 0..config.max_iters {
        // M-step
        let nk = resp.sum_axis(ndarray::Axis(0));
        let mut reseeded = false;
        for c in 0..k {
            if nk[c] / (n as f64) < config.weight_floor {
                let pick = rng.random_range(0..n);
                fit.means.row_mut(c).assign(&data.row(pick));
                fit.covariances[c] = global_cov.clone();
                fit.weights[c] = 1.0 / k as f64;
                fit.reseeds += 1;
                reseeded = true;
                continue;
            }
            fit.weights[c] = nk[c] / n as f64;
            let col = resp.column(c);
            let mean = data.t().dot(&col) / nk[c];
            fit.covariances[c] = weighted_covariance(
                &data,
                col,
                mean.view(),
                nk[c],
                config.covariance,
                config.covariance_floor,
            );
            fit.means.row_mut(c).assign(&mean);
        }
        if reseeded {
            let total: f64 = fit.weights.iter().sum();
            fit.weights.iter_mut().for_each(|w| *w /= total);
        }
        let (new_resp, new_ll) = responsibilities(&fit, &data)?;
        fit.log_likelihood_trace.push(new_ll);
        let gain = new_ll - ll;
        resp = new_resp;
        ll = new_ll;
        if !reseeded && gain < config.tol {
            break;
        }
    }
    fit.log_likelihood = ll;
    Ok(fit)
}

/// Fits a mixture to `n_actions` draws from `sampler` at `state`.
pub fn fit_policy_gmm(
    sampler: &dyn ActionSampler,
    state: &[f64],
    n_actions: usize,
    config: &EmConfig,
    seed: u64,
) -> Result<GmmFit> {
    let actions = sampler.sample_actions(state, n_actions, sub_seed(seed, 0))?;
    em_fit(&actions, config, sub_seed(seed, 1))
}

/// Mean over `states` of the mixture entropy of `n_actions` sampled actions.
///
/// Every state uses the same sampling and fitting seeds, so identical states
/// give identical estimates.
pub fn estimate_policy_entropy(
    sampler: &dyn ActionSampler,
    states: &Array2<f64>,
    n_actions: usize,
    config: &EmConfig,
    seed: u64,
) -> Result<f64> {
    if states.nrows() == 0 {
        return Err(Error::EmptyBatch);
    }
    if n_actions < config.components {
        return Err(Error::TooFewPoints {
            needed: config.components,
            got: n_actions,
        });
    }
    let per_state: Result<Vec<f64>> = (0..states.nrows())
        .into_par_iter()
        .map(|i| {
            let state = states.row(i).to_vec();
            gmm_entropy(&fit_policy_gmm(sampler, &state, n_actions, config, seed)?)
        })
        .collect();
    let per_state = per_state?;
    Ok(per_state.iter().sum::<f64>() / per_state.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlphaConfig {
    pub initial: f64,
    pub learning_rate: f64,
    /// Defaults to `−dim(A)` when absent.
    pub target_entropy: Option<f64>,
    pub min: f64,
    pub max: f64,
}

impl Default for AlphaConfig {
    fn default() -> Self {
        Self {
            initial: 0.2,
            learning_rate: 3e-4,
            target_entropy: None,
            min: 1e-6,
            max: 10.0,
        }
    }
}

/// Temperature controller: `α ← clamp(α − β_α·(Ĥ − H̄))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaController {
    pub alpha: f64,
    pub beta_alpha: f64,
    pub target_entropy: f64,
    pub alpha_min: f64,
    pub alpha_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaStep {
    pub before: f64,
    pub after: f64,
    pub entropy: f64,
    pub target: f64,
    pub clamped: bool,
}

impl AlphaStep {
    /// `sign(Δα) == sign(H̄ − Ĥ)`.
    pub fn obeys_sign_law(&self) -> bool {
        let da = self.after - self.before;
        let want = self.target - self.entropy;
        da.signum() == want.signum() || (da == 0.0 && want == 0.0)
    }
}

impl AlphaController {
    pub fn new(config: &AlphaConfig, action_dim: usize) -> Result<Self> {
        if !(config.min > 0.0 && config.min <= config.max) {
            return Err(Error::Config(format!(
                "alpha bounds must satisfy 0 < min <= max, got [{}, {}]",
                config.min, config.max
            )));
        }
        if config.learning_rate < 0.0 {
            return Err(Error::Config(
                "alpha learning rate must be non-negative".into(),
            ));
        }
        Ok(Self {
            alpha: config.initial.clamp(config.min, config.max),
            beta_alpha: config.learning_rate,
            target_entropy: config.target_entropy.unwrap_or(-(action_dim as f64)),
            alpha_min: config.min,
            alpha_max: config.max,
        })
    }

    pub fn update(&mut self, entropy: f64) -> AlphaStep {
        let before = self.alpha;
        let raw = before - self.beta_alpha * (entropy - self.target_entropy);
        let after = raw.clamp(self.alpha_min, self.alpha_max);
        self.alpha = after;
        AlphaStep {
            before,
            after,
            entropy,
            target: self.target_entropy,
            clamped: after != raw,
        }
    }
}
