use super::TrajectoryBatch;
use crate::error::{Error, Result};

/// Generalised advantage estimates of `signal` within each episode of
/// `batch`: `A_t = sum_l (gamma lambda)^l delta_{t+l}` with
/// `delta_t = x_t + gamma V(s_{t+1}) - V(s_t)` and `V = 0` past the last
/// step of an episode.
pub fn gae_advantages(
    batch: &TrajectoryBatch,
    signal: &[f64],
    values: &[f64],
    gamma: f64,
    lambda: f64,
) -> Result<Vec<f64>> {
    if signal.len() != batch.len() || values.len() != batch.len() {
        return Err(Error::Dimension(format!(
            "batch has {} steps, got {} signal entries and {} values",
            batch.len(),
            signal.len(),
            values.len()
        )));
    }
    let mut adv = vec![0.0; batch.len()];
    for range in batch.episodes() {
        let mut running = 0.0;
        let mut next_value = 0.0;
        for t in range.rev() {
            let delta = signal[t] + gamma * next_value - values[t];
            running = delta + gamma * lambda * running;
            adv[t] = running;
            next_value = values[t];
        }
    }
    Ok(adv)
}

/// Discounted sum of `signal` from each step to the end of its episode.
pub fn discounted_returns_to_go(batch: &TrajectoryBatch, signal: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; signal.len()];
    for range in batch.episodes() {
        let mut acc = 0.0;
        for t in range.rev() {
            acc = signal[t] + gamma * acc;
            out[t] = acc;
        }
    }
    out
}

/// Shift to zero mean and scale to unit variance (left centred only if the
/// spread is negligible).
pub fn normalize(x: &[f64]) -> Vec<f64> {
    if x.is_empty() {
        return Vec::new();
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let std = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let scale = if std > 1e-8 { 1.0 / std } else { 1.0 };
    x.iter().map(|v| (v - mean) * scale).collect()
}
