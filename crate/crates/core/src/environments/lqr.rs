use nalgebra::{DMatrix, DVector};

use super::{
    Dynamics, Environment, EnvironmentSpec, Integrator, DEFAULT_DT, DEFAULT_GAMMA,
    DEFAULT_MAX_EPISODE_STEPS,
};
use crate::error::{Error, Result};

/// `ẋ = A x + B u`, reward rate `−(xᵀQx + uᵀRu·u)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LqrProblem {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub ru: DMatrix<f64>,
}

impl LqrProblem {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, q: DMatrix<f64>, ru: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        let m = b.ncols();
        let shape = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::InvalidProblem(format!("{what} has the wrong shape")))
            }
        };
        shape(a.is_square() && n > 0, "A")?;
        shape(b.nrows() == n && m > 0, "B")?;
        shape(q.nrows() == n && q.ncols() == n, "Q")?;
        shape(ru.nrows() == m && ru.ncols() == m, "Ru")?;
        let sym = |x: &DMatrix<f64>| (x - x.transpose()).norm() <= 1e-12 * (1.0 + x.norm());
        if !sym(&q) || !sym(&ru) {
            return Err(Error::InvalidProblem("Q and Ru must be symmetric".into()));
        }
        if q.clone().symmetric_eigenvalues().min() < -1e-12 {
            return Err(Error::InvalidProblem("Q must be positive semidefinite".into()));
        }
        if ru.clone().cholesky().is_none() {
            return Err(Error::InvalidProblem("Ru must be positive definite".into()));
        }
        Ok(LqrProblem { a, b, q, ru })
    }

    /// Double integrator `p̈ = u` with `Q = I` and scalar action cost `ru`.
    pub fn double_integrator(ru: f64) -> Result<Self> {
        Self::new(
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
            DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
            DMatrix::identity(2, 2),
            DMatrix::from_element(1, 1, ru),
        )
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn action_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn f(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let xv = DVector::from_column_slice(x);
        let uv = DVector::from_column_slice(u);
        (&self.a * xv + &self.b * uv).as_slice().to_vec()
    }

    pub fn reward_rate(&self, x: &[f64], u: &[f64]) -> f64 {
        let xv = DVector::from_column_slice(x);
        let uv = DVector::from_column_slice(u);
        -(xv.dot(&(&self.q * &xv)) + uv.dot(&(&self.ru * &uv)))
    }
}

/// Action cost of the default double-integrator task.
pub const DEFAULT_ACTION_COST: f64 = 0.1;
/// Symmetric action bound of the default task.
pub const DEFAULT_ACTION_BOUND: f64 = 5.0;

#[derive(Clone, Debug, PartialEq)]
pub struct LqrEnv {
    pub problem: LqrProblem,
    pub action_bound: f64,
    position_velocity: Vec<(usize, usize)>,
}

impl LqrEnv {
    pub fn new(problem: LqrProblem, action_bound: f64) -> Self {
        // Rows of the form ẋ_i = x_j with no input are position/velocity pairs.
        let n = problem.state_dim();
        let mut position_velocity = Vec::new();
        for i in 0..n {
            let row = problem.a.row(i);
            let unit: Vec<usize> = (0..n).filter(|&j| row[j] != 0.0).collect();
            if let [j] = unit[..] {
                if row[j] == 1.0 && j != i && problem.b.row(i).iter().all(|&v| v == 0.0) {
                    position_velocity.push((i, j));
                }
            }
        }
        LqrEnv {
            problem,
            action_bound,
            position_velocity,
        }
    }

    pub fn double_integrator() -> Self {
        Self::new(
            LqrProblem::double_integrator(DEFAULT_ACTION_COST).expect("valid default problem"),
            DEFAULT_ACTION_BOUND,
        )
    }

    pub(super) fn f(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        self.problem.f(x, u)
    }

    pub(super) fn reward_rate(&self, x: &[f64], u: &[f64]) -> f64 {
        self.problem.reward_rate(x, u)
    }

    pub(super) fn position_velocity(&self) -> &[(usize, usize)] {
        &self.position_velocity
    }

    pub fn into_environment(self) -> Result<Environment> {
        let m = self.problem.action_dim();
        let spec = EnvironmentSpec {
            name: "lqr".into(),
            state_dim: self.problem.state_dim(),
            action_dim: m,
            action_low: vec![-self.action_bound; m],
            action_high: vec![self.action_bound; m],
            dt: DEFAULT_DT,
            gamma: DEFAULT_GAMMA,
            max_episode_steps: DEFAULT_MAX_EPISODE_STEPS,
            integrator: Integrator::ExplicitEuler,
            reward_dt_scaled: true,
        };
        Environment::new(spec, Dynamics::Lqr(self), 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn invalid_problems_are_rejected() {
        let i2 = || DMatrix::<f64>::identity(2, 2);
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let r = DMatrix::from_element(1, 1, 1.0);
        assert!(LqrProblem::new(i2(), b.clone(), -i2(), r.clone()).is_err());
        assert!(LqrProblem::new(i2(), b.clone(), i2(), DMatrix::zeros(1, 1)).is_err());
        assert!(LqrProblem::new(i2(), b.clone(), DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]), r.clone()).is_err());
        assert!(LqrProblem::new(i2(), DMatrix::zeros(3, 1), i2(), r).is_err());
    }

    #[test]
    fn dynamics_and_reward_by_definition() {
        let p = LqrProblem::double_integrator(0.5).unwrap();
        assert_eq!(p.f(&[1.0, 2.0], &[3.0]), vec![2.0, 3.0]);
        assert_eq!(p.reward_rate(&[1.0, 2.0], &[2.0]), -(1.0 + 4.0 + 0.5 * 4.0));
    }

    #[test]
    fn detects_position_velocity_pairs() {
        assert_eq!(LqrEnv::double_integrator().position_velocity(), &[(0, 1)]);
    }
}
