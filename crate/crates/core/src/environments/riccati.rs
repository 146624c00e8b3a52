//! Discounted continuous algebraic Riccati equation
//!
//! `AᵀP + PA − P B Ru⁻¹ Bᵀ P + Q + (ln γ)·P = 0`
//!
//! whose stabilizing solution gives `V*(x) = −xᵀPx` and `u*(x) = −Ru⁻¹BᵀPx`
//! for the reward rate `−(xᵀQx + uᵀRu·u)` under continuous discount `γ` per
//! unit time.
//!
//! The discount term is absorbed into the shifted drift `A + ½(ln γ)I`. The
//! solution is obtained from the matrix sign function of the Hamiltonian and
//! then polished with Newton–Kleinman steps.

use nalgebra::{DMatrix, DVector};

use super::LqrProblem;
use crate::error::{Error, Result};

const SIGN_MAX_ITER: usize = 100;
const NEWTON_MAX_ITER: usize = 50;
const RESIDUAL_TOL: f64 = 1e-9;

pub fn care_residual(prob: &LqrProblem, gamma: f64, p: &DMatrix<f64>) -> DMatrix<f64> {
    let ru_inv = prob.ru.clone().try_inverse().expect("Ru is positive definite");
    let a = &prob.a;
    a.transpose() * p + p * a - p * &prob.b * ru_inv * prob.b.transpose() * p
        + &prob.q
        + p * gamma.ln()
}

pub fn solve_discounted_care(prob: &LqrProblem, gamma: f64) -> Result<DMatrix<f64>> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::InvalidProblem(format!("gamma must lie in (0, 1], got {gamma}")));
    }
    let n = prob.state_dim();
    let ru_inv = prob
        .ru
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::InvalidProblem("Ru is singular".into()))?;
    let shifted = &prob.a + DMatrix::identity(n, n) * (0.5 * gamma.ln());
    let s = &prob.b * &ru_inv * prob.b.transpose();

    let mut p = sign_function_solution(&shifted, &s, &prob.q)?;
    let mut residual = care_residual(prob, gamma, &p).norm();

    // Newton–Kleinman: each step solves a Lyapunov equation for the closed loop.
    let mut iterations = 0;
    while iterations < NEWTON_MAX_ITER && residual > 1e-13 * (1.0 + p.norm()) {
        iterations += 1;
        let k = &ru_inv * prob.b.transpose() * &p;
        let closed = &shifted - &prob.b * &k;
        let rhs = -(&prob.q + k.transpose() * &prob.ru * &k);
        let next = match solve_lyapunov(&closed, &rhs) {
            Some(x) => symmetrize(&x),
            None => break,
        };
        let next_residual = care_residual(prob, gamma, &next).norm();
        if !(next_residual < residual) {
            break;
        }
        p = next;
        residual = next_residual;
    }

    let min_eig = p.clone().symmetric_eigenvalues().min();
    if !residual.is_finite() || residual >= RESIDUAL_TOL || min_eig < -1e-9 {
        return Err(Error::RiccatiNonConvergence {
            iterations: SIGN_MAX_ITER + iterations,
            residual,
        });
    }
    Ok(p)
}

/// Stable invariant subspace of `H = [[A, −S], [−Q, −Aᵀ]]` via the scaled
/// Newton iteration for `sign(H)`, then `P` from the overdetermined system
/// `[W₁₂; W₂₂ + I]·P = −[W₁₁ + I; W₂₁]`.
fn sign_function_solution(a: &DMatrix<f64>, s: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let mut h = DMatrix::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(a);
    h.view_mut((0, n), (n, n)).copy_from(&(-s));
    h.view_mut((n, 0), (n, n)).copy_from(&(-q));
    h.view_mut((n, n), (n, n)).copy_from(&(-a.transpose()));

    let mut z = h;
    let mut converged = false;
    let mut last_change = f64::INFINITY;
    for _ in 0..SIGN_MAX_ITER {
        let inv = match z.clone().try_inverse() {
            Some(inv) => inv,
            None => break,
        };
        let det = z.determinant().abs();
        let c = if det > 0.0 && det.is_finite() {
            det.powf(1.0 / (2 * n) as f64)
        } else {
            1.0
        };
        let next = (&z / c + inv * c) * 0.5;
        last_change = (&next - &z).norm();
        let scale = next.norm();
        z = next;
        if !last_change.is_finite() {
            break;
        }
        if last_change <= 1e-13 * scale {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::RiccatiNonConvergence {
            iterations: SIGN_MAX_ITER,
            residual: last_change,
        });
    }

    let id = DMatrix::<f64>::identity(n, n);
    let mut lhs = DMatrix::zeros(2 * n, n);
    lhs.view_mut((0, 0), (n, n)).copy_from(&z.view((0, n), (n, n)));
    lhs.view_mut((n, 0), (n, n)).copy_from(&(z.view((n, n), (n, n)) + &id));
    let mut rhs = DMatrix::zeros(2 * n, n);
    rhs.view_mut((0, 0), (n, n)).copy_from(&(z.view((0, 0), (n, n)) + &id));
    rhs.view_mut((n, 0), (n, n)).copy_from(&z.view((n, 0), (n, n)));
    let rhs = -rhs;

    let svd = lhs.svd(true, true);
    let p = svd
        .solve(&rhs, 1e-12)
        .map_err(|e| Error::InvalidProblem(format!("least-squares solve failed: {e}")))?;
    if p.iter().any(|v| !v.is_finite()) {
        return Err(Error::RiccatiNonConvergence {
            iterations: SIGN_MAX_ITER,
            residual: f64::NAN,
        });
    }
    Ok(symmetrize(&p))
}

/// Solve `AᵀX + XA = C` through the Kronecker form `(I⊗Aᵀ + Aᵀ⊗I)·vec X = vec C`.
fn solve_lyapunov(a: &DMatrix<f64>, c: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    let at = a.transpose();
    let id = DMatrix::<f64>::identity(n, n);
    let k = id.kronecker(&at) + at.kronecker(&id);
    let vec_c = DVector::from_column_slice(c.as_slice());
    let x = k.lu().solve(&vec_c)?;
    Some(DMatrix::from_column_slice(n, n, x.as_slice()))
}

fn symmetrize(p: &DMatrix<f64>) -> DMatrix<f64> {
    (p + p.transpose()) * 0.5
}

/// `V*(x) = −xᵀPx`
pub fn lqr_optimal_value(p: &DMatrix<f64>, x: &[f64]) -> f64 {
    let xv = DVector::from_column_slice(x);
    -xv.dot(&(p * &xv))
}

/// `u*(x) = −Ru⁻¹BᵀPx`
pub fn lqr_optimal_control(prob: &LqrProblem, p: &DMatrix<f64>, x: &[f64]) -> Vec<f64> {
    let xv = DVector::from_column_slice(x);
    let ru_inv = prob.ru.clone().try_inverse().expect("Ru is positive definite");
    (-(ru_inv * prob.b.transpose() * p * xv)).as_slice().to_vec()
}

/// `R(x, u) + ∇V*(x)ᵀ f(x, u)` with `∇V* = −2Px`.
pub fn supremand(prob: &LqrProblem, p: &DMatrix<f64>, x: &[f64], u: &[f64]) -> f64 {
    let xv = DVector::from_column_slice(x);
    let grad = -(p * &xv) * 2.0;
    let f = DVector::from_vec(prob.f(x, u));
    prob.reward_rate(x, u) + grad.dot(&f)
}

/// `V*(x)·ln γ + R(x, u*) + ∇V*ᵀ f(x, u*)`, which vanishes for the exact solution.
pub fn hjb_residual(prob: &LqrProblem, gamma: f64, p: &DMatrix<f64>, x: &[f64]) -> f64 {
    let u = lqr_optimal_control(prob, p, x);
    lqr_optimal_value(p, x) * gamma.ln() + supremand(prob, p, x, &u)
}

/// Numerical check of the optimality conditions at `probes`.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleReport {
    pub p: DMatrix<f64>,
    /// Frobenius norm of the CARE residual.
    pub care_residual: f64,
    pub max_hjb_residual: f64,
    /// Smallest `supremand(u*) − supremand(u* + δ)` over probes and perturbations.
    pub min_sup_margin: f64,
}

impl OracleReport {
    pub fn passes(&self, care_tol: f64, hjb_tol: f64) -> bool {
        self.care_residual < care_tol && self.max_hjb_residual < hjb_tol && self.min_sup_margin > 0.0
    }
}

/// Solve the discounted CARE and evaluate both optimality conditions, perturbing
/// each control component by every entry of `deltas`.
pub fn verify_oracle(prob: &LqrProblem, gamma: f64, probes: &[Vec<f64>], deltas: &[f64]) -> Result<OracleReport> {
    let p = solve_discounted_care(prob, gamma)?;
    let care_residual = care_residual(prob, gamma, &p).norm();
    let mut max_hjb_residual = 0.0f64;
    let mut min_sup_margin = f64::INFINITY;
    for x in probes {
        max_hjb_residual = max_hjb_residual.max(hjb_residual(prob, gamma, &p, x).abs());
        let u = lqr_optimal_control(prob, &p, x);
        let best = supremand(prob, &p, x, &u);
        for k in 0..u.len() {
            for &d in deltas {
                let mut v = u.clone();
                v[k] += d;
                min_sup_margin = min_sup_margin.min(best - supremand(prob, &p, x, &v));
            }
        }
    }
    Ok(OracleReport {
        p,
        care_residual,
        max_hjb_residual,
        min_sup_margin,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scalar(a: f64, b: f64, q: f64, r: f64) -> LqrProblem {
        let m = |v| DMatrix::from_element(1, 1, v);
        LqrProblem::new(m(a), m(b), m(q), m(r)).unwrap()
    }

    // Positive root of −P² + (ln γ)P + 1 = 0.
    fn scalar_root(gamma: f64) -> f64 {
        let l = gamma.ln();
        (l + (l * l + 4.0).sqrt()) / 2.0
    }

    #[test]
    fn undiscounted_scalar_root_is_one() {
        let p = solve_discounted_care(&scalar(0.0, 1.0, 1.0, 1.0), 1.0).unwrap();
        assert!((p[(0, 0)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn discounted_scalar_matches_quadratic_formula() {
        for gamma in [0.99, 0.9, 0.5, 0.818] {
            let p = solve_discounted_care(&scalar(0.0, 1.0, 1.0, 1.0), gamma).unwrap();
            assert!((p[(0, 0)] - scalar_root(gamma)).abs() < 1e-12, "gamma {gamma}");
        }
    }

    #[test]
    fn scalar_value_and_control() {
        let prob = scalar(0.0, 1.0, 1.0, 1.0);
        let p = solve_discounted_care(&prob, 0.99).unwrap();
        let pv = scalar_root(0.99);
        assert!((lqr_optimal_value(&p, &[1.0]) + pv).abs() < 1e-12);
        assert!((lqr_optimal_control(&prob, &p, &[1.0])[0] + pv).abs() < 1e-12);
        assert_eq!(lqr_optimal_value(&p, &[0.0]), 0.0);
        assert_eq!(lqr_optimal_control(&prob, &p, &[0.0])[0], 0.0);
    }

    #[test]
    fn double_integrator_residuals() {
        let prob = LqrProblem::double_integrator(0.1).unwrap();
        let gamma = 0.99f64.powf(20.0);
        let p = solve_discounted_care(&prob, gamma).unwrap();
        assert!(care_residual(&prob, gamma, &p).norm() < 1e-9);
        assert!((&p - p.transpose()).norm() == 0.0);
        assert!(p.clone().symmetric_eigenvalues().min() > 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            let x = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            assert!(hjb_residual(&prob, gamma, &p, &x).abs() < 1e-8);
            let u = lqr_optimal_control(&prob, &p, &x);
            let best = supremand(&prob, &p, &x, &u);
            for d in [0.1, -0.1, 1.0] {
                assert!(supremand(&prob, &p, &x, &[u[0] + d]) < best);
            }
        }
    }

    #[test]
    fn unstable_uncontrollable_problem_fails() {
        let prob = scalar(1.0, 0.0 + 1e-300, 1.0, 1.0);
        assert!(matches!(
            solve_discounted_care(&prob, 0.99),
            Err(Error::RiccatiNonConvergence { .. })
        ));
    }

    #[test]
    fn rejects_bad_gamma() {
        assert!(solve_discounted_care(&scalar(0.0, 1.0, 1.0, 1.0), 0.0).is_err());
        assert!(solve_discounted_care(&scalar(0.0, 1.0, 1.0, 1.0), 1.5).is_err());
    }
}
