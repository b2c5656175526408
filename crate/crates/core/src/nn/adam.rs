use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-7,
        }
    }
}

/// Moment accumulators, one pair per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub step: u64,
    pub config: AdamConfig,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl TrainState {
    pub fn new(config: AdamConfig, sizes: &[usize]) -> Self {
        TrainState {
            step: 0,
            config,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }
}

/// One bias-corrected Adam update over all parameter tensors.
pub fn adam_step(params: &mut [&mut [f64]], grads: &[&[f64]], state: &mut TrainState) {
    assert_eq!(params.len(), grads.len());
    assert_eq!(params.len(), state.m.len());
    state.step += 1;
    let AdamConfig {
        learning_rate,
        beta1,
        beta2,
        epsilon,
    } = state.config;
    let c1 = 1.0 - beta1.powi(state.step as i32);
    let c2 = 1.0 - beta2.powi(state.step as i32);
    for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        assert_eq!(p.len(), g.len());
        let (m, v) = (&mut state.m[k], &mut state.v[k]);
        for i in 0..p.len() {
            m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            p[i] -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_noop() {
        let mut p = vec![0.3, -1.2];
        let mut st = TrainState::new(AdamConfig::default(), &[2]);
        for _ in 0..5 {
            adam_step(&mut [&mut p], &[&[0.0, 0.0]], &mut st);
        }
        assert_eq!(p, vec![0.3, -1.2]);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = vec![1.0];
        let mut st = TrainState::new(AdamConfig::default(), &[1]);
        adam_step(&mut [&mut p], &[&[1.0]], &mut st);
        let expect = 1.0 - 1e-3 / (1.0 + 1e-7);
        assert!((p[0] - expect).abs() < 1e-15);
    }

    #[test]
    fn identical_inputs_identical_updates() {
        let (mut a, mut b) = (vec![0.5, 0.1], vec![0.5, 0.1]);
        let mut sa = TrainState::new(AdamConfig::default(), &[2]);
        let mut sb = sa.clone();
        for g in [[0.2, -0.3], [1.0, 0.5]] {
            adam_step(&mut [&mut a], &[&g], &mut sa);
            adam_step(&mut [&mut b], &[&g], &mut sb);
        }
        assert_eq!(a, b);
    }
}
