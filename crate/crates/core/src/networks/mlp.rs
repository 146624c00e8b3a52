use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::autodiff::{dot, DualVec, Run, Tape, Var};
use crate::error::{Error, Result};

/// Layer widths of a fully connected network with `tanh` hidden layers and an
/// identity output layer.
///
/// Parameters are stored flat, layer by layer: the row-major weight matrix
/// (`out × in`) followed by the bias vector.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpLayout {
    sizes: Vec<usize>,
}

/// One named block of a flat parameter vector.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamBlock {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

impl ParamBlock {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Copy, Debug)]
struct Layer {
    fan_in: usize,
    fan_out: usize,
    w: usize,
    b: usize,
}

impl MlpLayout {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::InvalidExpression(format!(
                "network layout needs at least two non-zero widths, got {sizes:?}"
            )));
        }
        Ok(MlpLayout { sizes })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn num_params(&self) -> usize {
        self.layers().map(|l| l.fan_out * (l.fan_in + 1)).sum()
    }

    fn layers(&self) -> impl Iterator<Item = Layer> + '_ {
        let mut offset = 0;
        self.sizes.windows(2).map(move |w| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let layer = Layer {
                fan_in,
                fan_out,
                w: offset,
                b: offset + fan_in * fan_out,
            };
            offset += fan_out * (fan_in + 1);
            layer
        })
    }

    pub fn blocks(&self) -> Vec<ParamBlock> {
        self.layers()
            .enumerate()
            .flat_map(|(i, l)| {
                [
                    ParamBlock {
                        name: format!("layer{i}.weight"),
                        rows: l.fan_out,
                        cols: l.fan_in,
                        offset: l.w,
                    },
                    ParamBlock {
                        name: format!("layer{i}.bias"),
                        rows: l.fan_out,
                        cols: 1,
                        offset: l.b,
                    },
                ]
            })
            .collect()
    }

    /// Weights uniform in `±1/√fan_in`, biases zero.
    pub fn init<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut params = vec![0.0; self.num_params()];
        for l in self.layers().collect::<Vec<_>>() {
            let bound = 1.0 / (l.fan_in as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
            for p in &mut params[l.w..l.b] {
                *p = dist.sample(rng);
            }
        }
        params
    }

    pub fn forward(&self, params: &[f64], x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(params.len(), self.num_params());
        let n_layers = self.sizes.len() - 1;
        let mut h = x.to_vec();
        for (i, l) in self.layers().enumerate() {
            let hidden = i + 1 < n_layers;
            let next: Vec<f64> = (0..l.fan_out)
                .map(|r| {
                    let row = &params[l.w + r * l.fan_in..l.w + (r + 1) * l.fan_in];
                    let z = dot(row, &h) + params[l.b + r];
                    if hidden {
                        z.tanh()
                    } else {
                        z
                    }
                })
                .collect();
            h = next;
        }
        h
    }

    pub fn record(&self, tape: &mut Tape, params: Run, x: &[Var]) -> Vec<Var> {
        debug_assert_eq!(params.len, self.num_params());
        let n_layers = self.sizes.len() - 1;
        let mut h = x.to_vec();
        for (i, l) in self.layers().enumerate() {
            let hidden = i + 1 < n_layers;
            let z: Vec<Var> = (0..l.fan_out)
                .map(|r| tape.dot_row(params.var(l.w + r * l.fan_in), &h, Some(params.var(l.b + r))))
                .collect();
            h = if hidden {
                z.into_iter().map(|v| tape.tanh(v)).collect()
            } else {
                z
            };
        }
        h
    }

    /// Forward pass carrying input tangents.
    pub fn record_dual(&self, tape: &mut Tape, params: Run, x: &DualVec) -> DualVec {
        let n_layers = self.sizes.len() - 1;
        let mut h = x.clone();
        for (i, l) in self.layers().enumerate() {
            let w = Run {
                start: params.var(l.w),
                len: l.fan_in * l.fan_out,
            };
            let b = Run {
                start: params.var(l.b),
                len: l.fan_out,
            };
            let z = tape.affine_dual(w, b, &h);
            h = if i + 1 < n_layers { tape.tanh_dual(&z) } else { z };
        }
        h
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn param_count_and_blocks() {
        let l = MlpLayout::new(vec![2, 64, 64, 1]).unwrap();
        assert_eq!(l.num_params(), 2 * 64 + 64 + 64 * 64 + 64 + 64 + 1);
        let blocks = l.blocks();
        assert_eq!(blocks.len(), 6);
        assert_eq!(blocks.iter().map(ParamBlock::len).sum::<usize>(), l.num_params());
        assert!(MlpLayout::new(vec![3]).is_err());
        assert!(MlpLayout::new(vec![3, 0, 1]).is_err());
    }

    #[test]
    fn taped_forward_is_bit_identical_to_dense() {
        let l = MlpLayout::new(vec![3, 9, 7, 2]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut params = l.init(&mut rng);
        for p in params.iter_mut() {
            *p += rng.random_range(-0.1..0.1);
        }
        let x = [0.3, -1.2, 2.5];
        let dense = l.forward(&params, &x);
        let mut t = Tape::new();
        let p = t.leaves(&params);
        let xs = t.leaves(&x);
        let out = l.record(&mut t, p, &xs.vars());
        let taped: Vec<f64> = out.iter().map(|&v| t.value(v)).collect();
        assert_eq!(dense, taped);

        let mut t = Tape::new();
        let p = t.leaves(&params);
        let (_, xd) = t.seed_inputs(&x);
        let out = l.record_dual(&mut t, p, &xd);
        let dual: Vec<f64> = out.primal.iter().map(|&v| t.value(v)).collect();
        assert_eq!(dense, dual);
    }
}
