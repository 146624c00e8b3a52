use crate::error::{Error, Result};

/// Clipped surrogate `L = (1/n) Σ min(r·A, clip(r, 1−ε, 1+ε)·A)` with
/// `r = exp(log π_new − log π_old)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ClipObjective {
    pub objective: f64,
    /// Fraction of samples with `|r − 1| > ε`.
    pub clip_fraction: f64,
    pub ratios: Vec<f64>,
    /// `∂L/∂ log π_new[i]`: `r·A/n` where the unclipped term is selected, else 0.
    pub log_prob_seeds: Vec<f64>,
}

pub fn ppo_clip_objective(
    log_probs_new: &[f64],
    log_probs_old: &[f64],
    advantages: &[f64],
    epsilon: f64,
) -> Result<ClipObjective> {
    let n = log_probs_new.len();
    if log_probs_old.len() != n || advantages.len() != n {
        return Err(Error::DimensionMismatch {
            what: "clip objective inputs",
            expected: n,
            got: log_probs_old.len().min(advantages.len()),
        });
    }
    if n == 0 {
        return Err(Error::Empty("clip objective batch"));
    }
    if !(epsilon > 0.0) {
        return Err(Error::InvalidConfig(vec![format!("clip epsilon must be positive, got {epsilon}")]));
    }
    let inv_n = 1.0 / n as f64;
    let mut total = 0.0;
    let mut clipped = 0usize;
    let mut ratios = Vec::with_capacity(n);
    let mut seeds = Vec::with_capacity(n);
    for i in 0..n {
        let r = (log_probs_new[i] - log_probs_old[i]).exp();
        if !r.is_finite() {
            return Err(Error::NonFinite(format!("probability ratio at sample {i}")));
        }
        let a = advantages[i];
        let unclipped = r * a;
        let clipped_term = r.clamp(1.0 - epsilon, 1.0 + epsilon) * a;
        if (r - 1.0).abs() > epsilon {
            clipped += 1;
        }
        if unclipped <= clipped_term {
            total += unclipped;
            seeds.push(unclipped * inv_n);
        } else {
            total += clipped_term;
            seeds.push(0.0);
        }
        ratios.push(r);
    }
    Ok(ClipObjective {
        objective: total * inv_n,
        clip_fraction: clipped as f64 * inv_n,
        ratios,
        log_prob_seeds: seeds,
    })
}
