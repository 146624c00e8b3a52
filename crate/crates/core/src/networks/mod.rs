//! Value network, Gaussian policy, flat parameter vectors and the checkpoint
//! container.

pub mod checkpoint;
mod mlp;
mod policy;
mod value;

use serde::{Deserialize, Serialize};

pub use checkpoint::{Checkpoint, CheckpointMeta};
pub use mlp::{MlpLayout, ParamBlock};
pub use policy::{GaussianPolicy, HALF_LN_2PI};
pub use value::ValueNetwork;

/// Hidden widths used for both networks unless configured otherwise.
pub const DEFAULT_HIDDEN: [usize; 2] = [64, 64];

/// Every trainable scalar of one network, with the named block layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterVector {
    pub blocks: Vec<ParamBlock>,
    pub values: Vec<f64>,
}

impl ParameterVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// The slice belonging to block `name`, if present.
    pub fn block(&self, name: &str) -> Option<&[f64]> {
        self.blocks
            .iter()
            .find(|b| b.name == name)
            .map(|b| &self.values[b.offset..b.offset + b.len()])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn blocks_tile_the_vector() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let pol = GaussianPolicy::new(4, 2, &DEFAULT_HIDDEN, &mut rng).unwrap();
        let pv = pol.flatten();
        let mut covered = 0;
        for b in &pv.blocks {
            assert_eq!(b.offset, covered);
            covered += b.len();
        }
        assert_eq!(covered, pv.len());
        assert_eq!(pv.block("log_std").unwrap(), &[0.0, 0.0]);
    }

    proptest! {
        #[test]
        fn flatten_unflatten_is_identity(seed in any::<u64>(), h1 in 1usize..12, h2 in 1usize..12) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let v = ValueNetwork::new(3, &[h1, h2], &mut rng).unwrap();
            prop_assert_eq!(v.unflatten(&v.flatten()).unwrap(), v.clone());
            let p = GaussianPolicy::new(3, 2, &[h1, h2], &mut rng).unwrap();
            prop_assert_eq!(p.unflatten(&p.flatten()).unwrap(), p.clone());
        }

        #[test]
        fn value_is_continuous_in_parameters(seed in any::<u64>(), x0 in -3.0f64..3.0, x1 in -3.0f64..3.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let v = ValueNetwork::new(2, &[16, 16], &mut rng).unwrap();
            let mut w = v.clone();
            let n = w.params().len() as f64;
            for (i, p) in w.params_mut().iter_mut().enumerate() {
                *p += if i % 2 == 0 { 1e-8 } else { -1e-8 } / n.sqrt();
            }
            let x = [x0, x1];
            prop_assert!((v.eval(&x).unwrap() - w.eval(&x).unwrap()).abs() <= 1e-5);
        }

        #[test]
        fn mode_maximizes_log_prob(seed in any::<u64>(), a0 in -5.0f64..5.0, a1 in -5.0f64..5.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut p = GaussianPolicy::new(2, 2, &[8], &mut rng).unwrap();
            p.log_std_mut().copy_from_slice(&[0.3, -0.6]);
            let x = [0.5, -0.25];
            let m = p.mode(&x).unwrap();
            prop_assert!(p.log_prob(&x, &m).unwrap() >= p.log_prob(&x, &[a0, a1]).unwrap());
        }
    }
}
