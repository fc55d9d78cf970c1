//! Generalized advantage estimation.

/// Backward recursion `δ_t = r_t + γ V_{t+1} (1 − done_t) − V_t`,
/// `A_t = δ_t + γ λ (1 − done_t) A_{t+1}`; `bootstrap` is `V_T`. Returns
/// `(advantages, returns = A + V)`.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    gamma: f64,
    lambda: f64,
    bootstrap: f64,
) -> (Vec<f64>, Vec<f64>) {
    let t_len = rewards.len();
    assert!(values.len() == t_len && dones.len() == t_len, "misaligned sequences");
    let mut adv = vec![0.0; t_len];
    let mut next_value = bootstrap;
    let mut next_adv = 0.0;
    for t in (0..t_len).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * live - values[t];
        adv[t] = delta + gamma * lambda * live * next_adv;
        next_adv = adv[t];
        next_value = values[t];
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, returns)
}

/// Same quantity as an explicit double sum `A_t = Σ_k (γλ)^k δ_{t+k}`,
/// truncated at the first episode end. Quadratic; for verification.
pub fn compute_gae_brute_force(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    gamma: f64,
    lambda: f64,
    bootstrap: f64,
) -> Vec<f64> {
    let t_len = rewards.len();
    let value_at = |t: usize| if t < t_len { values[t] } else { bootstrap };
    (0..t_len)
        .map(|t| {
            let mut sum = 0.0;
            for k in t..t_len {
                let live = if dones[k] { 0.0 } else { 1.0 };
                let delta = rewards[k] + gamma * value_at(k + 1) * live - values[k];
                sum += (gamma * lambda).powi((k - t) as i32) * delta;
                if dones[k] {
                    break;
                }
            }
            sum
        })
        .collect()
}
