//! Generalized advantage estimation.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct AdvantageBatch {
    pub advantages: Vec<f64>,
    /// Value targets: `advantages + values`.
    pub returns: Vec<f64>,
}

/// `A_t = sum_l (gamma*lam)^l * delta_{t+l}` with
/// `delta_t = r_t + gamma * V(s_{t+1}) * (1 - done_t) - V(s_t)`.
///
/// `dones[t]` marks a terminal transition at step `t`; the value after the last step is
/// `last_value`.
pub fn gae(rewards: &[f64], values: &[f64], last_value: f64, dones: &[bool], gamma: f64, lam: f64) -> Result<AdvantageBatch> {
    let n = rewards.len();
    if values.len() != n || dones.len() != n {
        return Err(Error::Shape(format!(
            "gae inputs differ in length: {n} rewards, {} values, {} dones",
            values.len(),
            dones.len()
        )));
    }
    if !(gamma > 0.0 && gamma <= 1.0) || !(lam > 0.0 && lam <= 1.0) {
        return Err(Error::Config(format!("gamma and lambda must lie in (0, 1], got {gamma}, {lam}")));
    }
    let mut advantages = vec![0.0; n];
    let mut running = 0.0;
    for t in (0..n).rev() {
        let next_value = if t + 1 < n { values[t + 1] } else { last_value };
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * live - values[t];
        running = delta + gamma * lam * live * running;
        advantages[t] = running;
    }
    let returns = advantages.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok(AdvantageBatch { advantages, returns })
}

/// In-place standardization to zero mean and unit (population) standard deviation.
pub fn normalize_advantages(adv: &mut [f64]) {
    if adv.is_empty() {
        return;
    }
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let std = (adv.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n).sqrt();
    adv.iter_mut().for_each(|a| *a = (*a - mean) / (std + 1e-8));
}
