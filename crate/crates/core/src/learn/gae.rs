//! Generalized advantage estimation.

/// GAE(γ, λ) over a batch laid out in time order.
///
/// `next_values[t]` is the bootstrap value of the successor state, which the
/// caller sets to zero for absorbing transitions. `ends[t]` marks the last
/// transition of an episode segment (absorbing, truncated, or end of batch).
/// Returns advantages and value targets `A + V`.
pub fn gae_advantages(
    rewards: &[f64],
    values: &[f64],
    next_values: &[f64],
    ends: &[bool],
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut running = 0.0;
    for t in (0..n).rev() {
        if ends[t] {
            running = 0.0;
        }
        let delta = rewards[t] + gamma * next_values[t] - values[t];
        running = delta + gamma * lambda * running;
        adv[t] = running;
    }
    let targets = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, targets)
}

/// Zero-mean, unit-variance copy of the advantages.
pub fn normalize_advantages(adv: &[f64]) -> Vec<f64> {
    let n = adv.len() as f64;
    if adv.is_empty() {
        return vec![];
    }
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    adv.iter().map(|a| (a - mean) / (var.sqrt() + 1e-8)).collect()
}
