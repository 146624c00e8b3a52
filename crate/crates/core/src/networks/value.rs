use rand::Rng;

use super::mlp::MlpLayout;
use super::ParameterVector;
use crate::autodiff::{DualGradient, Run, Tangent, Tape, Var};
use crate::error::{Error, Result};

/// State-value approximator `V_φ(x)`: a `tanh` MLP with scalar output, smooth
/// in its input so that `∇ₓV` exists everywhere.
#[derive(Clone, Debug, PartialEq)]
pub struct ValueNetwork {
    layout: MlpLayout,
    params: Vec<f64>,
}

impl ValueNetwork {
    pub fn new<R: Rng + ?Sized>(state_dim: usize, hidden: &[usize], rng: &mut R) -> Result<Self> {
        let mut sizes = vec![state_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        let layout = MlpLayout::new(sizes)?;
        let params = layout.init(rng);
        Ok(ValueNetwork { layout, params })
    }

    pub fn from_params(layout: MlpLayout, params: Vec<f64>) -> Result<Self> {
        if layout.output_dim() != 1 {
            return Err(Error::DimensionMismatch {
                what: "value network output",
                expected: 1,
                got: layout.output_dim(),
            });
        }
        if params.len() != layout.num_params() {
            return Err(Error::DimensionMismatch {
                what: "value network parameters",
                expected: layout.num_params(),
                got: params.len(),
            });
        }
        Ok(ValueNetwork { layout, params })
    }

    pub fn layout(&self) -> &MlpLayout {
        &self.layout
    }

    pub fn state_dim(&self) -> usize {
        self.layout.input_dim()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn flatten(&self) -> ParameterVector {
        ParameterVector {
            blocks: self.layout.blocks(),
            values: self.params.clone(),
        }
    }

    pub fn unflatten(&self, p: &ParameterVector) -> Result<Self> {
        if p.blocks != self.layout.blocks() {
            return Err(Error::InvalidExpression(
                "parameter layout does not match the value network".into(),
            ));
        }
        Self::from_params(self.layout.clone(), p.values.clone())
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.state_dim() {
            return Err(Error::DimensionMismatch {
                what: "value network input",
                expected: self.state_dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        self.check(x)?;
        Ok(self.layout.forward(&self.params, x)[0])
    }

    /// `V(x)` and its exact input-gradient, by a reverse sweep over the taped
    /// forward pass.
    pub fn input_grad(&self, x: &[f64]) -> Result<DualGradient> {
        self.check(x)?;
        let mut tape = Tape::new();
        let params = tape.leaves(&self.params);
        let xs = tape.leaves(x).vars();
        let v = self.record(&mut tape, params, &xs);
        tape.set_output(v);
        let input_grad = crate::autodiff::grad_inputs(&tape, &xs)?;
        Ok(DualGradient {
            value: tape.value(v),
            input_grad,
        })
    }

    /// Record `V(x)` with parameters at `params` (a run of `params().len()` leaves).
    pub fn record(&self, tape: &mut Tape, params: Run, x: &[Var]) -> Var {
        self.layout.record(tape, params, x)[0]
    }

    /// Record `V(x)` for a fresh input point together with its input-gradient
    /// as tape nodes.
    pub fn record_with_input_grad(&self, tape: &mut Tape, params: Run, x: &[f64]) -> (Var, Vec<Tangent>) {
        let (_, xd) = tape.seed_inputs(x);
        let out = self.layout.record_dual(tape, params, &xd);
        (out.primal[0], out.gradient_of(0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_network_is_zero_with_zero_gradient() {
        let layout = MlpLayout::new(vec![3, 5, 1]).unwrap();
        let n = layout.num_params();
        let net = ValueNetwork::from_params(layout, vec![0.0; n]).unwrap();
        assert_eq!(net.eval(&[1.0, -2.0, 3.0]).unwrap(), 0.0);
        let g = net.input_grad(&[1.0, -2.0, 3.0]).unwrap();
        assert_eq!(g.value, 0.0);
        assert_eq!(g.input_grad, vec![0.0; 3]);
    }

    #[test]
    fn single_linear_layer() {
        let layout = MlpLayout::new(vec![2, 1]).unwrap();
        let net = ValueNetwork::from_params(layout, vec![1.0, 2.0, 0.0]).unwrap();
        assert_eq!(net.eval(&[3.0, 4.0]).unwrap(), 11.0);
        for x in [[0.0, 0.0], [3.0, 4.0], [-7.5, 0.1]] {
            assert_eq!(net.input_grad(&x).unwrap().input_grad, vec![1.0, 2.0]);
        }
    }

    #[test]
    fn dimension_mismatch() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = ValueNetwork::new(2, &[4], &mut rng).unwrap();
        assert!(matches!(net.eval(&[1.0]), Err(Error::DimensionMismatch { .. })));
        assert!(net.input_grad(&[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn flatten_roundtrip_and_layout_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = ValueNetwork::new(2, &[8, 8], &mut rng).unwrap();
        let back = net.unflatten(&net.flatten()).unwrap();
        assert_eq!(back, net);
        let other = ValueNetwork::new(3, &[8, 8], &mut rng).unwrap();
        assert!(net.unflatten(&other.flatten()).is_err());
    }

    #[test]
    fn forward_and_reverse_input_gradients_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = ValueNetwork::new(3, &[16, 16], &mut rng).unwrap();
        let x = [0.4, -0.8, 1.5];
        let rev = net.input_grad(&x).unwrap();
        let mut tape = Tape::new();
        let p = tape.leaves(net.params());
        let (v, grad) = net.record_with_input_grad(&mut tape, p, &x);
        assert_eq!(tape.value(v), rev.value);
        for (t, r) in grad.iter().zip(&rev.input_grad) {
            assert!((t.value(&tape) - r).abs() < 1e-14);
        }
    }
}
