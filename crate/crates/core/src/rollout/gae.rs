use super::RolloutBuffer;

/// Advantages and the TD residuals they were built from.
#[derive(Clone, Debug, PartialEq)]
pub struct AdvantageEstimate {
    pub advantages: Vec<f64>,
    pub td_residuals: Vec<f64>,
}

/// `δ_t = r_t + γ(1 − done_t)·V(s_{t+1}) − V(s_t)`.
///
/// `next_values[t]` is the value of the true successor of step `t`, so a
/// truncated step keeps its bootstrap.
pub fn td_residuals(
    rewards: &[f64],
    values: &[f64],
    next_values: &[f64],
    dones: &[bool],
    gamma: f64,
) -> Vec<f64> {
    (0..rewards.len())
        .map(|t| {
            let boot = if dones[t] { 0.0 } else { gamma * next_values[t] };
            rewards[t] + boot - values[t]
        })
        .collect()
}

/// `A_t = Σ_{n≥t} (γλ)^{n−t} δ_n`, summed within the episode containing `t`
/// and stopped at the buffer end.
pub fn gae_from_residuals(
    deltas: &[f64],
    dones: &[bool],
    truncateds: &[bool],
    gamma: f64,
    lambda: f64,
) -> Vec<f64> {
    let mut adv = vec![0.0; deltas.len()];
    let mut running = 0.0;
    for t in (0..deltas.len()).rev() {
        if dones[t] || truncateds[t] {
            running = 0.0;
        }
        running = deltas[t] + gamma * lambda * running;
        adv[t] = running;
    }
    adv
}

pub fn compute_gae(buffer: &RolloutBuffer, gamma: f64, lambda: f64) -> AdvantageEstimate {
    let td = td_residuals(
        &buffer.rewards,
        &buffer.values_old,
        &buffer.next_values_old,
        &buffer.dones,
        gamma,
    );
    let advantages = gae_from_residuals(&td, &buffer.dones, &buffer.truncateds, gamma, lambda);
    AdvantageEstimate {
        advantages,
        td_residuals: td,
    }
}

/// Shift to zero mean and scale to unit population standard deviation. When
/// the standard deviation is below `1e-8` only the mean is removed.
pub fn normalize_advantages(adv: &[f64]) -> Vec<f64> {
    if adv.is_empty() {
        return Vec::new();
    }
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    if std < 1e-8 {
        adv.iter().map(|a| a - mean).collect()
    } else {
        adv.iter().map(|a| (a - mean) / std).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Direct double sum, walking forward from each `t` to the end of its episode.
    fn brute_force(deltas: &[f64], dones: &[bool], truncs: &[bool], gamma: f64, lambda: f64) -> Vec<f64> {
        (0..deltas.len())
            .map(|t| {
                let mut total = 0.0;
                for n in t..deltas.len() {
                    total += (gamma * lambda).powi((n - t) as i32) * deltas[n];
                    if dones[n] || truncs[n] {
                        break;
                    }
                }
                total
            })
            .collect()
    }

    #[test]
    fn two_step_example() {
        let a = gae_from_residuals(&[1.0, 2.0], &[false; 2], &[false; 2], 0.99, 0.95);
        assert!((a[0] - 2.881).abs() < 1e-12);
        assert_eq!(a[1], 2.0);
    }

    #[test]
    fn lambda_zero_is_td() {
        let d = [0.3, -1.0, 2.5, 0.0];
        assert_eq!(gae_from_residuals(&d, &[false; 4], &[false; 4], 0.99, 0.0), d);
    }

    #[test]
    fn bootstrap_zeroed_only_at_done() {
        let td = td_residuals(&[1.0, 1.0], &[0.5, 0.5], &[2.0, 2.0], &[true, false], 0.5);
        assert_eq!(td, vec![0.5, 1.5]);
        let a = gae_from_residuals(&[1.0, 1.0, 1.0], &[false; 3], &[false, true, false], 1.0, 1.0);
        assert_eq!(a, vec![2.0, 1.0, 1.0]);
    }

    #[test]
    fn normalization_examples() {
        let z = normalize_advantages(&[1.0, 2.0, 3.0]);
        let s = (1.5f64).sqrt();
        for (got, want) in z.iter().zip([-s, 0.0, s]) {
            assert!((got - want).abs() < 1e-12);
        }
        assert!((z[2] - 1.2247).abs() < 1e-4);
        assert_eq!(normalize_advantages(&[4.0; 5]), vec![0.0; 5]);
        assert!(normalize_advantages(&[]).is_empty());
    }

    #[test]
    fn telescoping_at_lambda_one() {
        let gamma = 0.9;
        let values = [0.3, -0.2, 1.1, 0.7];
        let rewards = [1.0, -0.5, 0.25, 2.0];
        let next_values = [-0.2, 1.1, 0.7, 123.0];
        let dones = [false, false, false, true];
        let td = td_residuals(&rewards, &values, &next_values, &dones, gamma);
        let a = gae_from_residuals(&td, &dones, &[false; 4], gamma, 1.0);
        for t in 0..4 {
            let mc: f64 = (t..4).map(|k| gamma.powi((k - t) as i32) * rewards[k]).sum();
            assert!((a[t] + values[t] - mc).abs() < 1e-10);
        }
    }

    proptest! {
        #[test]
        fn recursion_matches_brute_force(
            deltas in prop::collection::vec(-10.0f64..10.0, 1..200),
            flags in prop::collection::vec(0u8..20, 200),
            gamma in 0.5f64..1.0,
            lambda in 0.0f64..=1.0,
        ) {
            let n = deltas.len();
            let dones: Vec<bool> = flags[..n].iter().map(|&f| f == 0).collect();
            let truncs: Vec<bool> = flags[..n].iter().map(|&f| f == 1).collect();
            let fast = gae_from_residuals(&deltas, &dones, &truncs, gamma, lambda);
            let slow = brute_force(&deltas, &dones, &truncs, gamma, lambda);
            for (a, b) in fast.iter().zip(&slow) {
                prop_assert!((a - b).abs() < 1e-12);
            }
            prop_assert_eq!(fast[n - 1], deltas[n - 1]);
        }

        #[test]
        fn normalization_preserves_order(adv in prop::collection::vec(-100.0f64..100.0, 2..64)) {
            let z = normalize_advantages(&adv);
            let argmax = |v: &[f64]| (0..v.len()).fold(0, |best, i| if v[i] > v[best] { i } else { best });
            prop_assert_eq!(argmax(&adv), argmax(&z));
            let mean = z.iter().sum::<f64>() / z.len() as f64;
            prop_assert!(mean.abs() < 1e-9);
        }
    }
}
