use serde::{Deserialize, Serialize};

use crate::autodiff::{Run, Tangent, Tape, Var};
use crate::error::{Error, Result};
use crate::networks::ValueNetwork;

/// How the parameter gradient treats the bootstrap `V(x')` of the Bellman error.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BellmanTarget {
    /// Differentiate through `V(x')` as well as `V(x)`.
    Full,
    /// Treat `r + γV(x')` as a constant target.
    #[default]
    Stop,
}

/// How the parameter gradient treats `∇ₓV` inside the HJB residual.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputGradMode {
    /// Differentiate through both `V(x)` and `∇ₓV(x)`.
    #[default]
    Full,
    /// Treat `∇ₓV(x)` as a constant.
    Stop,
}

/// `V(x_t)·ln γ + R_t + ∇ₓV(x_t)ᵀ f̂_t` for a batch of samples.
#[derive(Clone, Debug, PartialEq)]
pub struct HjbResidualBatch {
    pub residuals: Vec<f64>,
}

/// Record one HJB residual on `tape` with the value parameters at `params`.
///
/// `reward_rate` is `R(x_t, a_t)` in reward per unit time, `dynamics` the
/// finite-difference estimate `(x_{t+1} − x_t)/dt`. Training and diagnostics
/// both evaluate the residual through this function.
#[allow(clippy::too_many_arguments)]
pub fn record_hjb_residual(
    tape: &mut Tape,
    net: &ValueNetwork,
    params: Run,
    state: &[f64],
    reward_rate: f64,
    dynamics: &[f64],
    ln_gamma: f64,
    mode: InputGradMode,
) -> (Var, Var) {
    let (v, grad) = net.record_with_input_grad(tape, params, state);
    let grad: Vec<Var> = match mode {
        InputGradMode::Full => grad.into_iter().map(|t| t.materialize(tape)).collect(),
        InputGradMode::Stop => grad
            .into_iter()
            .map(|t: Tangent| {
                let g = t.value(tape);
                tape.leaf(g)
            })
            .collect(),
    };
    let f = tape.leaves(dynamics).vars();
    let transport = tape.dot(&grad, &f, None);
    let base = tape.affine(v, ln_gamma, reward_rate);
    (tape.add(base, transport), v)
}

/// HJB residuals evaluated through [`record_hjb_residual`].
pub fn hjb_residuals(
    net: &ValueNetwork,
    states: &[Vec<f64>],
    reward_rates: &[f64],
    dynamics: &[Vec<f64>],
    gamma: f64,
) -> Result<HjbResidualBatch> {
    let n = states.len();
    if reward_rates.len() != n || dynamics.len() != n {
        return Err(Error::DimensionMismatch {
            what: "HJB residual inputs",
            expected: n,
            got: reward_rates.len().min(dynamics.len()),
        });
    }
    if n == 0 {
        return Err(Error::Empty("HJB residual batch"));
    }
    for x in states.iter().chain(dynamics) {
        if x.len() != net.state_dim() {
            return Err(Error::DimensionMismatch {
                what: "HJB residual state",
                expected: net.state_dim(),
                got: x.len(),
            });
        }
    }
    let ln_gamma = gamma.ln();
    let mut tape = Tape::new();
    let params = tape.leaves(net.params());
    let mut residuals = Vec::with_capacity(n);
    for i in 0..n {
        let mark = tape.len();
        let (r, _) = record_hjb_residual(
            &mut tape,
            net,
            params,
            &states[i],
            reward_rates[i],
            &dynamics[i],
            ln_gamma,
            InputGradMode::Full,
        );
        let value = tape.value(r);
        if !value.is_finite() {
            return Err(Error::NonFiniteResidual { index: i, value });
        }
        residuals.push(value);
        tape.truncate(mark);
    }
    Ok(HjbResidualBatch { residuals })
}

/// Mean of squared residuals.
pub fn hjb_loss(batch: &HjbResidualBatch) -> f64 {
    mean_square(&batch.residuals)
}

/// `0.5·mse_u + λ·mse_f`
pub fn combined_value_loss(mse_u: f64, mse_f: f64, lambda_hjb: f64) -> f64 {
    0.5 * mse_u + lambda_hjb * mse_f
}

pub(crate) fn mean_square(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64
}

/// One-step Bellman errors `V(x) − (r + γ(1 − done)·V(x'))`.
pub fn bellman_errors(
    net: &ValueNetwork,
    states: &[Vec<f64>],
    rewards: &[f64],
    next_states: &[Vec<f64>],
    dones: &[bool],
    gamma: f64,
) -> Result<Vec<f64>> {
    let n = states.len();
    if rewards.len() != n || next_states.len() != n || dones.len() != n {
        return Err(Error::DimensionMismatch {
            what: "Bellman loss inputs",
            expected: n,
            got: rewards.len().min(next_states.len()).min(dones.len()),
        });
    }
    (0..n)
        .map(|i| {
            let v = net.eval(&states[i])?;
            let boot = if dones[i] { 0.0 } else { gamma * net.eval(&next_states[i])? };
            Ok(v - (rewards[i] + boot))
        })
        .collect()
}

/// Mean squared one-step Bellman error; the bootstrap is dropped where `done`.
pub fn bellman_value_loss(
    net: &ValueNetwork,
    states: &[Vec<f64>],
    rewards: &[f64],
    next_states: &[Vec<f64>],
    dones: &[bool],
    gamma: f64,
) -> Result<f64> {
    if states.is_empty() {
        return Err(Error::Empty("Bellman loss batch"));
    }
    Ok(mean_square(&bellman_errors(net, states, rewards, next_states, dones, gamma)?))
}

/// One sample of the value objective. `hjb` is `None` for samples that are
/// excluded from the residual term (episode boundaries).
#[derive(Clone, Copy, Debug)]
pub struct ValueSample<'a> {
    pub state: &'a [f64],
    pub reward: f64,
    pub next_state: &'a [f64],
    pub done: bool,
    pub hjb: Option<HjbInput<'a>>,
}

#[derive(Clone, Copy, Debug)]
pub struct HjbInput<'a> {
    pub reward_rate: f64,
    pub dynamics: &'a [f64],
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HjbTerm {
    pub lambda: f64,
    /// Discount used in `V·ln γ`.
    pub gamma: f64,
    pub mode: InputGradMode,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ValueObjectiveOptions {
    /// Per-step discount of the Bellman error.
    pub gamma: f64,
    pub target: BellmanTarget,
    /// `None` records the Bellman term only.
    pub hjb: Option<HjbTerm>,
}

/// Nodes of `J = 0.5·MSE_u + λ·MSE_f` on a tape.
#[derive(Clone, Copy, Debug)]
pub struct RecordedObjective {
    pub mse_u: Var,
    /// Present when the HJB term is recorded and at least one sample carries it.
    pub mse_f: Option<Var>,
    pub objective: Var,
}

/// Record the value objective for `batch` with parameters at `params`.
pub fn record_value_objective(
    tape: &mut Tape,
    net: &ValueNetwork,
    params: Run,
    batch: &[ValueSample<'_>],
    opts: &ValueObjectiveOptions,
) -> Result<RecordedObjective> {
    if batch.is_empty() {
        return Err(Error::Empty("value objective batch"));
    }
    let mut bellman_sq = Vec::with_capacity(batch.len());
    let mut hjb_sq = Vec::new();
    for s in batch {
        let hjb = opts.hjb.zip(s.hjb);
        let v = match hjb {
            Some((term, input)) => {
                let (r, v) = record_hjb_residual(
                    tape,
                    net,
                    params,
                    s.state,
                    input.reward_rate,
                    input.dynamics,
                    term.gamma.ln(),
                    term.mode,
                );
                hjb_sq.push(tape.square(r));
                v
            }
            None => {
                let xs = tape.leaves(s.state).vars();
                net.record(tape, params, &xs)
            }
        };
        let delta = if s.done {
            tape.affine(v, 1.0, -s.reward)
        } else {
            match opts.target {
                BellmanTarget::Full => {
                    let xs = tape.leaves(s.next_state).vars();
                    let vn = net.record(tape, params, &xs);
                    let target = tape.affine(vn, opts.gamma, s.reward);
                    tape.sub(v, target)
                }
                BellmanTarget::Stop => {
                    let vn = net.layout().forward(tape.run_values(params), s.next_state)[0];
                    tape.affine(v, 1.0, -(s.reward + opts.gamma * vn))
                }
            }
        };
        bellman_sq.push(tape.square(delta));
    }
    let sum_u = tape.sum(&bellman_sq);
    let mse_u = tape.scale(sum_u, 1.0 / bellman_sq.len() as f64);
    let half_u = tape.scale(mse_u, 0.5);
    let (mse_f, objective) = match opts.hjb {
        Some(term) if !hjb_sq.is_empty() => {
            let sum_f = tape.sum(&hjb_sq);
            let mse_f = tape.scale(sum_f, 1.0 / hjb_sq.len() as f64);
            let weighted = tape.scale(mse_f, term.lambda);
            (Some(mse_f), tape.add(half_u, weighted))
        }
        _ => (None, half_u),
    };
    tape.set_output(objective);
    Ok(RecordedObjective {
        mse_u,
        mse_f,
        objective,
    })
}

/// Values of the objective's parts and `∂J/∂φ`.
#[derive(Clone, Debug, PartialEq)]
pub struct ValueObjective {
    pub mse_u: f64,
    pub mse_f: f64,
    pub objective: f64,
    pub gradient: Vec<f64>,
}

/// Evaluate `J` and its parameter gradient on a fresh tape.
pub fn value_objective_and_gradient(
    net: &ValueNetwork,
    batch: &[ValueSample<'_>],
    opts: &ValueObjectiveOptions,
) -> Result<ValueObjective> {
    let mut tape = Tape::new();
    let mut adj = Vec::new();
    value_objective_on(&mut tape, &mut adj, net, batch, opts)
}

/// As [`value_objective_and_gradient`], reusing the caller's tape and adjoint buffer.
pub fn value_objective_on(
    tape: &mut Tape,
    adj: &mut Vec<f64>,
    net: &ValueNetwork,
    batch: &[ValueSample<'_>],
    opts: &ValueObjectiveOptions,
) -> Result<ValueObjective> {
    tape.clear();
    let params = tape.leaves(net.params());
    let rec = record_value_objective(tape, net, params, batch, opts)?;
    tape.backward_into(adj, &[(rec.objective, 1.0)]);
    Ok(ValueObjective {
        mse_u: tape.value(rec.mse_u),
        mse_f: rec.mse_f.map_or(0.0, |v| tape.value(v)),
        objective: tape.value(rec.objective),
        gradient: adj[params.range()].to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::networks::MlpLayout;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn constant_net(c: f64) -> ValueNetwork {
        let layout = MlpLayout::new(vec![2, 3, 1]).unwrap();
        let mut p = vec![0.0; layout.num_params()];
        *p.last_mut().unwrap() = c;
        ValueNetwork::from_params(layout, p).unwrap()
    }

    #[test]
    fn hjb_loss_examples() {
        let b = |r: Vec<f64>| HjbResidualBatch { residuals: r };
        assert_eq!(hjb_loss(&b(vec![0.0, 0.0])), 0.0);
        assert_eq!(hjb_loss(&b(vec![1.0, -1.0])), 1.0);
        assert_eq!(hjb_loss(&b(vec![3.0])), 9.0);
    }

    #[test]
    fn combined_examples() {
        assert_eq!(combined_value_loss(2.0, 3.0, 0.0), 1.0);
        assert!((combined_value_loss(2.0, 3.0, 0.1) - 1.3).abs() < 1e-15);
    }

    #[test]
    fn constant_networks() {
        let xs = vec![vec![0.5, -1.0], vec![2.0, 0.3]];
        let zero = constant_net(0.0);
        let r = hjb_residuals(&zero, &xs, &[0.0, 0.0], &xs, 0.99).unwrap();
        assert_eq!(r.residuals, vec![0.0, 0.0]);
        let c = constant_net(2.5);
        let r = hjb_residuals(&c, &xs, &[0.0, 0.0], &xs, 0.99).unwrap();
        for v in r.residuals {
            assert!((v - 2.5 * 0.99f64.ln()).abs() < 1e-15);
        }
        assert_eq!(bellman_value_loss(&zero, &xs, &[0.0, 0.0], &xs, &[false, true], 0.99).unwrap(), 0.0);
        let l = bellman_value_loss(&c, &xs, &[0.7, 0.7], &xs, &[false, false], 0.9).unwrap();
        assert!((l - (2.5 - 0.7 - 0.9 * 2.5f64).powi(2)).abs() < 1e-14);
    }

    #[test]
    fn non_finite_residual_names_sample() {
        let c = constant_net(1.0);
        let xs = vec![vec![0.0, 0.0], vec![0.0, 0.0]];
        let err = hjb_residuals(&c, &xs, &[0.0, f64::NAN], &xs, 0.99).unwrap_err();
        assert!(matches!(err, Error::NonFiniteResidual { index: 1, .. }));
    }

    #[test]
    fn bellman_matches_direct_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = ValueNetwork::new(2, &[8, 8], &mut rng).unwrap();
        let mut st = Vec::new();
        let mut nx = Vec::new();
        let mut rw = Vec::new();
        let mut dn = Vec::new();
        for _ in 0..10 {
            st.push(vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]);
            nx.push(vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]);
            rw.push(rng.random_range(-1.0..1.0));
            dn.push(rng.random_bool(0.3));
        }
        let direct: f64 = (0..10)
            .map(|i| {
                let boot = if dn[i] { 0.0 } else { 0.97 * net.eval(&nx[i]).unwrap() };
                (net.eval(&st[i]).unwrap() - rw[i] - boot).powi(2)
            })
            .sum::<f64>()
            / 10.0;
        let l = bellman_value_loss(&net, &st, &rw, &nx, &dn, 0.97).unwrap();
        assert!((l - direct).abs() < 1e-12);
        // The taped objective records the same quantity.
        let batch: Vec<ValueSample> = (0..10)
            .map(|i| ValueSample {
                state: &st[i],
                reward: rw[i],
                next_state: &nx[i],
                done: dn[i],
                hjb: None,
            })
            .collect();
        for target in [BellmanTarget::Full, BellmanTarget::Stop] {
            let opts = ValueObjectiveOptions { gamma: 0.97, target, hjb: None };
            let o = value_objective_and_gradient(&net, &batch, &opts).unwrap();
            assert!((o.mse_u - direct).abs() < 1e-12);
            assert_eq!(o.objective, 0.5 * o.mse_u);
        }
    }

    #[test]
    fn residual_is_linear_in_the_value_function() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let net = ValueNetwork::new(2, &[8], &mut rng).unwrap();
        // Scale the output layer: V ↦ αV.
        let alpha = -1.7;
        let mut scaled = net.clone();
        let n = scaled.params().len();
        for p in &mut scaled.params_mut()[n - 9..] {
            *p *= alpha;
        }
        let xs = vec![vec![0.3, -0.4], vec![-1.0, 0.8]];
        let f = vec![vec![1.0, 2.0], vec![-0.5, 0.25]];
        let base = hjb_residuals(&net, &xs, &[0.0, 0.0], &f, 0.9).unwrap();
        let s = hjb_residuals(&scaled, &xs, &[0.0, 0.0], &f, 0.9).unwrap();
        for (a, b) in base.residuals.iter().zip(&s.residuals) {
            assert!((b - alpha * a).abs() < 1e-12);
        }
    }

    #[test]
    fn stop_modes_change_gradient_not_value() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let net = ValueNetwork::new(2, &[8], &mut rng).unwrap();
        let st = [0.2, -0.7];
        let nx = [0.25, -0.6];
        let f = [1.0, 2.0];
        let batch = [ValueSample {
            state: &st,
            reward: -0.1,
            next_state: &nx,
            done: false,
            hjb: Some(HjbInput { reward_rate: -2.0, dynamics: &f }),
        }];
        let run = |target, mode| {
            let opts = ValueObjectiveOptions {
                gamma: 0.99,
                target,
                hjb: Some(HjbTerm { lambda: 0.3, gamma: 0.8, mode }),
            };
            value_objective_and_gradient(&net, &batch, &opts).unwrap()
        };
        let full = run(BellmanTarget::Full, InputGradMode::Full);
        let stop = run(BellmanTarget::Stop, InputGradMode::Stop);
        assert_eq!(full.objective, stop.objective);
        assert_ne!(full.gradient, stop.gradient);
        assert_eq!(full.objective, combined_value_loss(full.mse_u, full.mse_f, 0.3));
    }
}
