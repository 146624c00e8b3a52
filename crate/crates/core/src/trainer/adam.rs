use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bias-corrected Adam moments for one parameter vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        AdamState {
            first_moment: vec![0.0; len],
            second_moment: vec![0.0; len],
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn len(&self) -> usize {
        self.first_moment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.first_moment.is_empty()
    }
}

/// One descent step `p ← p − α·m̂/(√v̂ + ε)`. A non-finite gradient is rejected
/// before any state changes.
pub fn adam_step(state: &mut AdamState, params: &mut [f64], gradient: &[f64], stepsize: f64) -> Result<()> {
    if params.len() != state.len() || gradient.len() != state.len() {
        return Err(Error::DimensionMismatch {
            what: "Adam parameters",
            expected: state.len(),
            got: params.len().min(gradient.len()),
        });
    }
    if let Some(i) = gradient.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFinite(format!("gradient component {i}")));
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for i in 0..params.len() {
        let g = gradient[i];
        let m = b1 * state.first_moment[i] + (1.0 - b1) * g;
        let v = b2 * state.second_moment[i] + (1.0 - b2) * g * g;
        state.first_moment[i] = m;
        state.second_moment[i] = v;
        params[i] -= stepsize * (m / c1) / ((v / c2).sqrt() + state.epsilon);
    }
    Ok(())
}

/// Rescale `grad` in place so its Euclidean norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && norm.is_finite() {
        let s = max_norm / norm;
        for g in grad.iter_mut() {
            *g *= s;
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut s = AdamState::new(3);
        let mut p = vec![1.0, -2.0, 3.0];
        adam_step(&mut s, &mut p, &[0.0; 3], 3e-4).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 3.0]);
        assert_eq!(s.step, 1);
    }

    #[test]
    fn first_step_has_stepsize_magnitude() {
        // m̂ = g and v̂ = g², so the step is α·g/(|g| + ε).
        for g in [1e-3, 0.5, -7.0] {
            let mut s = AdamState::new(1);
            let mut p = vec![0.0];
            adam_step(&mut s, &mut p, &[g], 3e-4).unwrap();
            let expected = -3e-4 * g / (g.abs() + 1e-8);
            assert!((p[0] - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn opposite_gradients_give_opposite_updates() {
        let mut s = AdamState::new(2);
        let mut p = vec![0.0, 0.0];
        adam_step(&mut s, &mut p, &[0.3, -0.3], 1e-2).unwrap();
        assert_eq!(p[0], -p[1]);
    }

    #[test]
    fn non_finite_gradient_is_rejected_without_update() {
        let mut s = AdamState::new(2);
        let mut p = vec![1.0, 1.0];
        assert!(adam_step(&mut s, &mut p, &[f64::NAN, 0.0], 1e-2).is_err());
        assert_eq!((p, s.step), (vec![1.0, 1.0], 0));
        assert!(adam_step(&mut s, &mut [0.0], &[0.0, 0.0], 1e-2).is_err());
    }

    #[test]
    fn clipping() {
        let mut g = vec![3.0, 4.0];
        assert_eq!(clip_global_norm(&mut g, 0.5), 5.0);
        assert!((g[0] - 0.3).abs() < 1e-15 && (g[1] - 0.4).abs() < 1e-15);
        let mut small = vec![0.1, 0.1];
        clip_global_norm(&mut small, 0.5);
        assert_eq!(small, vec![0.1, 0.1]);
    }

    proptest! {
        #[test]
        fn step_counter_strictly_increases(gs in prop::collection::vec(-1.0f64..1.0, 1..20)) {
            let mut s = AdamState::new(1);
            let mut p = vec![0.0];
            for (k, g) in gs.iter().enumerate() {
                adam_step(&mut s, &mut p, &[*g], 1e-3).unwrap();
                prop_assert_eq!(s.step, k as u64 + 1);
                // Each bias-corrected step is bounded by roughly the stepsize.
                prop_assert!(p[0].abs() <= 1e-3 * (k as f64 + 1.0) * 3.2 + 1e-12);
            }
        }
    }
}
