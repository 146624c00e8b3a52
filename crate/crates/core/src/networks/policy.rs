use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::mlp::{MlpLayout, ParamBlock};
use super::ParameterVector;
use crate::autodiff::{Run, Tape, Var};
use crate::error::{Error, Result};

/// `½ ln 2π`
pub const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Diagonal Gaussian policy `π_θ(a|x) = N(μ_θ(x), diag(σ²))` with a `tanh`
/// mean network and a state-independent log standard deviation.
///
/// `θ` is laid out as the mean-network parameters followed by `log σ`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianPolicy {
    mean: MlpLayout,
    params: Vec<f64>,
}

impl GaussianPolicy {
    pub fn new<R: Rng + ?Sized>(
        state_dim: usize,
        action_dim: usize,
        hidden: &[usize],
        rng: &mut R,
    ) -> Result<Self> {
        let mut sizes = vec![state_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(action_dim);
        let mean = MlpLayout::new(sizes)?;
        let mut params = mean.init(rng);
        params.extend(std::iter::repeat_n(0.0, action_dim));
        Ok(GaussianPolicy { mean, params })
    }

    pub fn from_params(mean: MlpLayout, params: Vec<f64>) -> Result<Self> {
        let expected = mean.num_params() + mean.output_dim();
        if params.len() != expected {
            return Err(Error::DimensionMismatch {
                what: "policy parameters",
                expected,
                got: params.len(),
            });
        }
        Ok(GaussianPolicy { mean, params })
    }

    pub fn mean_layout(&self) -> &MlpLayout {
        &self.mean
    }

    pub fn state_dim(&self) -> usize {
        self.mean.input_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.mean.output_dim()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn log_std(&self) -> &[f64] {
        &self.params[self.mean.num_params()..]
    }

    pub fn log_std_mut(&mut self) -> &mut [f64] {
        let n = self.mean.num_params();
        &mut self.params[n..]
    }

    pub fn blocks(&self) -> Vec<ParamBlock> {
        let mut blocks = self.mean.blocks();
        blocks.push(ParamBlock {
            name: "log_std".into(),
            rows: self.action_dim(),
            cols: 1,
            offset: self.mean.num_params(),
        });
        blocks
    }

    pub fn flatten(&self) -> ParameterVector {
        ParameterVector {
            blocks: self.blocks(),
            values: self.params.clone(),
        }
    }

    pub fn unflatten(&self, p: &ParameterVector) -> Result<Self> {
        if p.blocks != self.blocks() {
            return Err(Error::InvalidExpression(
                "parameter layout does not match the policy".into(),
            ));
        }
        Self::from_params(self.mean.clone(), p.values.clone())
    }

    fn check_state(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.state_dim() {
            return Err(Error::DimensionMismatch {
                what: "policy state input",
                expected: self.state_dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// `μ_θ(x)`, which is also the mode `argmax_a π_θ(a|x)`.
    pub fn mode(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_state(x)?;
        Ok(self.mean.forward(&self.params[..self.mean.num_params()], x))
    }

    /// `μ_θ(x) + σ ⊙ z` with `z ~ N(0, I)` drawn from `rng` in coordinate order.
    pub fn sample<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        let mu = self.mode(x)?;
        Ok(mu
            .iter()
            .zip(self.log_std())
            .map(|(&m, &ls)| {
                let z: f64 = StandardNormal.sample(rng);
                m + ls.exp() * z
            })
            .collect())
    }

    /// Exact diagonal-Gaussian log density.
    pub fn log_prob(&self, x: &[f64], a: &[f64]) -> Result<f64> {
        let mu = self.mode(x)?;
        self.log_prob_given_mean(&mu, a)
    }

    /// Same operation order as [`GaussianPolicy::record_log_prob`], so the two
    /// agree bit for bit.
    pub fn log_prob_given_mean(&self, mu: &[f64], a: &[f64]) -> Result<f64> {
        if a.len() != self.action_dim() {
            return Err(Error::DimensionMismatch {
                what: "policy action",
                expected: self.action_dim(),
                got: a.len(),
            });
        }
        let mut total: Option<f64> = None;
        for ((&m, &ai), &ls) in mu.iter().zip(a).zip(self.log_std()) {
            let inv_sigma = (-1.0 * ls + 0.0).exp();
            let diff = 1.0 * m + -ai;
            let z = diff * inv_sigma;
            let term = -0.5 * (z * z) + -HALF_LN_2PI;
            let term = term - ls;
            total = Some(match total {
                None => term,
                Some(t) => t + term,
            });
        }
        Ok(total.unwrap_or(0.0))
    }

    /// Record `log π_θ(a|x)` with `θ` at `params`; the state and action are constants.
    pub fn record_log_prob(&self, tape: &mut Tape, params: Run, x: &[f64], a: &[f64]) -> Var {
        let n_mean = self.mean.num_params();
        let mean_run = Run {
            start: params.start,
            len: n_mean,
        };
        let xs = tape.leaves(x).vars();
        let mu = self.mean.record(tape, mean_run, &xs);
        let terms: Vec<Var> = mu
            .iter()
            .zip(a)
            .enumerate()
            .map(|(i, (&m, &ai))| {
                let ls = params.var(n_mean + i);
                let neg_ls = tape.affine(ls, -1.0, 0.0);
                let inv_sigma = tape.exp(neg_ls);
                let diff = tape.affine(m, 1.0, -ai);
                let z = tape.mul(diff, inv_sigma);
                let q = tape.square(z);
                let term = tape.affine(q, -0.5, -HALF_LN_2PI);
                tape.sub(term, ls)
            })
            .collect();
        tape.sum(&terms)
    }
}
