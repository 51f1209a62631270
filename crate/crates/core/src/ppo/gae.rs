use crate::error::{Error, Result};

/// GAE over one time-ordered trajectory in which only meta-episode ends
/// terminate. `bootstrap` is the critic value after the last step, used when
/// that step is not terminal.
///
/// Returns `(advantages, value_targets)`.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    terminal: &[bool],
    bootstrap: f64,
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = rewards.len();
    if values.len() != n || terminal.len() != n {
        return Err(Error::shape(format!(
            "gae inputs differ in length: {n} rewards, {} values, {} flags",
            values.len(),
            terminal.len()
        )));
    }
    let mut adv = vec![0.0; n];
    let mut running = 0.0;
    for t in (0..n).rev() {
        let (next_value, live) = if terminal[t] {
            (0.0, 0.0)
        } else if t + 1 == n {
            (bootstrap, 1.0)
        } else {
            (values[t + 1], 1.0)
        };
        let delta = rewards[t] + gamma * next_value * live - values[t];
        running = delta + gamma * lambda * live * running;
        adv[t] = running;
    }
    let targets = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, targets))
}

/// Rescales to zero mean and unit population variance; leaves a constant
/// vector centred only.
pub fn normalize(values: &mut [f64]) {
    if values.is_empty() {
        return;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    for v in values.iter_mut() {
        *v -= mean;
        if std > 0.0 {
            *v /= std;
        }
    }
}
