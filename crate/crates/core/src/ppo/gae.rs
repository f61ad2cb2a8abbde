//! Generalized advantage estimation over `[horizon, n_envs]` buffers.

/// Advantages and returns. `dones[t * n + e]` marks that the transition at
/// step `t` ended its episode; `last_values` bootstraps the horizon end.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    last_values: &[f64],
    n_envs: usize,
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let len = rewards.len();
    assert_eq!(values.len(), len);
    assert_eq!(dones.len(), len);
    assert_eq!(last_values.len(), n_envs);
    assert_eq!(len % n_envs, 0);
    let horizon = len / n_envs;
    let mut adv = vec![0.0; len];
    for e in 0..n_envs {
        let mut next_adv = 0.0;
        for t in (0..horizon).rev() {
            let i = t * n_envs + e;
            let next_value = if t + 1 == horizon {
                last_values[e]
            } else {
                values[i + n_envs]
            };
            let live = if dones[i] { 0.0 } else { 1.0 };
            let delta = rewards[i] + gamma * next_value * live - values[i];
            next_adv = delta + gamma * lambda * live * next_adv;
            adv[i] = next_adv;
        }
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, returns)
}

/// In-place standardisation to mean 0, std 1 (population std).
pub fn normalize(x: &mut [f64]) {
    let n = x.len() as f64;
    if x.is_empty() {
        return;
    }
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    for v in x.iter_mut() {
        *v = (*v - mean) / (std + 1e-8);
    }
}
