//! Parameter tensors, a plain MLP, and the Adam optimizer.

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::matmul;
use crate::tape::{ParamRef, Tape, Var};

/// An ordered list of parameter tensors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params(pub Vec<Array2<f64>>);

impl Params {
    pub fn shapes(&self) -> Vec<(usize, usize)> {
        self.0.iter().map(|t| t.dim()).collect()
    }

    pub fn num_scalars(&self) -> usize {
        self.0.iter().map(|t| t.len()).sum()
    }

    pub fn zeros_like(&self) -> Self {
        Params(self.0.iter().map(|t| Array2::zeros(t.dim())).collect())
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.0.iter().flat_map(|t| t.iter().copied()).collect()
    }

    /// Overwrites every scalar from a flat vector in [`Params::flatten`] order.
    pub fn assign_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_scalars() {
            return Err(Error::Shape(format!(
                "flat parameter vector has {} entries, expected {}",
                flat.len(),
                self.num_scalars()
            )));
        }
        let mut it = flat.iter();
        for t in &mut self.0 {
            for x in t.iter_mut() {
                *x = *it.next().expect("length checked");
            }
        }
        Ok(())
    }

    pub fn check_same_shape(&self, other: &Params) -> Result<()> {
        if self.shapes() != other.shapes() {
            return Err(Error::Shape(format!(
                "parameter shapes differ: {:?} vs {:?}",
                self.shapes(),
                other.shapes()
            )));
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.0.iter().all(|t| t.iter().all(|x| x.is_finite()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Mish,
    Tanh,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Mish => crate::tape::mish(x),
            Activation::Tanh => x.tanh(),
        }
    }
}

/// Fully connected network: `Linear → act → … → Linear`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub params: Params,
    pub activation: Activation,
}

impl Mlp {
    /// Weights are drawn with variance `1/fan_in`; the output layer is scaled
    /// by `out_scale`. Biases start at zero.
    pub fn new<R: Rng + ?Sized>(
        sizes: &[usize],
        activation: Activation,
        out_scale: f64,
        rng: &mut R,
    ) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs input and output sizes");
        let mut tensors = Vec::new();
        let layers = sizes.len() - 1;
        for (l, w) in sizes.windows(2).enumerate() {
            let std =
                (1.0 / w[0].max(1) as f64).sqrt() * if l + 1 == layers { out_scale } else { 1.0 };
            let weight = Array2::from_shape_fn((w[0], w[1]), |_| {
                let z: f64 = rng.sample(StandardNormal);
                z * std
            });
            tensors.push(weight);
            tensors.push(Array2::zeros((1, w[1])));
        }
        Mlp {
            params: Params(tensors),
            activation,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.params.0[0].nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.params.0[self.params.0.len() - 1].ncols()
    }

    fn num_layers(&self) -> usize {
        self.params.0.len() / 2
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        self.forward_with(&self.params, x)
    }

    /// Forward pass with an external parameter set of identical layout
    /// (used for target networks).
    pub fn forward_with(&self, params: &Params, x: &Array2<f64>) -> Array2<f64> {
        let mut h = x.clone();
        let n = self.num_layers();
        for l in 0..n {
            h = matmul(&h, &params.0[2 * l]);
            h += &params.0[2 * l + 1];
            if l + 1 < n {
                h.mapv_inplace(|v| self.activation.apply(v));
            }
        }
        h
    }

    /// Puts `params` on the tape. With `trainable == false` the tensors are
    /// detached and never receive gradients.
    pub fn bind(tape: &mut Tape, params: &Params, group: usize, trainable: bool) -> Vec<Var> {
        params
            .0
            .iter()
            .enumerate()
            .map(|(index, t)| {
                let id = ParamRef { group, index };
                if trainable {
                    tape.param(t.clone(), id)
                } else {
                    tape.detached_param(t.clone())
                }
            })
            .collect()
    }

    pub fn forward_tape(&self, tape: &mut Tape, bound: &[Var], x: Var) -> Var {
        let n = self.num_layers();
        let mut h = x;
        for l in 0..n {
            h = tape.matmul(h, bound[2 * l]);
            h = tape.add_row(h, bound[2 * l + 1]);
            if l + 1 < n {
                h = match self.activation {
                    Activation::Mish => tape.mish(h),
                    Activation::Tanh => tape.tanh(h),
                };
            }
        }
        h
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction. Moment buffers mirror the parameter layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub config: AdamConfig,
    m: Params,
    v: Params,
    steps: u64,
}

impl Adam {
    pub fn new(params: &Params, config: AdamConfig) -> Self {
        Self {
            config,
            m: params.zeros_like(),
            v: params.zeros_like(),
            steps: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Descends along `grads`; pass negated gradients to ascend.
    pub fn step(&mut self, params: &mut Params, grads: &[Array2<f64>], lr: f64) -> Result<()> {
        if grads.len() != params.0.len() {
            return Err(Error::Shape(format!(
                "{} gradient tensors for {} parameters",
                grads.len(),
                params.0.len()
            )));
        }
        self.steps += 1;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - beta1.powi(self.steps as i32);
        let bc2 = 1.0 - beta2.powi(self.steps as i32);
        for (((p, g), m), v) in params
            .0
            .iter_mut()
            .zip(grads)
            .zip(&mut self.m.0)
            .zip(&mut self.v.0)
        {
            if p.dim() != g.dim() {
                return Err(Error::Shape(format!(
                    "gradient shape {:?} does not match parameter {:?}",
                    g.dim(),
                    p.dim()
                )));
            }
            ndarray::Zip::from(p)
                .and(g)
                .and(m)
                .and(v)
                .for_each(|p, &g, m, v| {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    let mhat = *m / bc1;
                    let vhat = *v / bc2;
                    *p -= lr * mhat / (vhat.sqrt() + eps);
                });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn tape_and_plain_forward_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mlp = Mlp::new(&[3, 8, 8, 2], Activation::Mish, 1.0, &mut rng);
        let x = Array2::from_shape_fn((5, 3), |(i, j)| (i as f64 - 2.0) * 0.3 + j as f64 * 0.1);
        let plain = mlp.forward(&x);
        let mut tape = Tape::new();
        let bound = Mlp::bind(&mut tape, &mlp.params, 0, true);
        let xv = tape.input(x);
        let out = mlp.forward_tape(&mut tape, &bound, xv);
        assert_eq!(tape.value(out), &plain);
    }

    #[test]
    fn adam_minimizes_quadratic() {
        let mut p = Params(vec![Array2::from_elem((1, 2), 3.0)]);
        let mut opt = Adam::new(&p, AdamConfig::default());
        for _ in 0..2000 {
            let g = p.0[0].mapv(|x| 2.0 * (x - 1.0));
            opt.step(&mut p, &[g], 0.01).unwrap();
        }
        assert!(p.0[0].iter().all(|x| (x - 1.0).abs() < 1e-3));
    }

    #[test]
    fn zero_learning_rate_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mlp = Mlp::new(&[2, 4, 1], Activation::Tanh, 1.0, &mut rng);
        let mut p = mlp.params.clone();
        let mut opt = Adam::new(&p, AdamConfig::default());
        let grads: Vec<_> = p.0.iter().map(|t| t.mapv(|_| 0.7)).collect();
        opt.step(&mut p, &grads, 0.0).unwrap();
        assert_eq!(p, mlp.params);
    }

    #[test]
    fn flat_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mlp = Mlp::new(&[2, 3, 1], Activation::Mish, 1.0, &mut rng);
        let mut p = mlp.params.zeros_like();
        p.assign_flat(&mlp.params.flatten()).unwrap();
        assert_eq!(p, mlp.params);
        assert!(p.assign_flat(&[1.0]).is_err());
    }
}
