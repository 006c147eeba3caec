//! Adam optimizer over flattened network parameters.

use super::{Grads, Mlp};

/// Optimizer state; moments are flat vectors matching `Mlp::to_flat` order.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub step_count: u64,
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(param_count: usize, learning_rate: f64) -> Self {
        AdamState {
            step_count: 0,
            first_moment: vec![0.0; param_count],
            second_moment: vec![0.0; param_count],
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn for_net(net: &Mlp, learning_rate: f64) -> Self {
        Self::new(net.param_count(), learning_rate)
    }

    /// One Adam step with bias correction.
    ///
    /// Returns `false` (and leaves parameters and moments untouched) when any
    /// gradient entry is non-finite; the caller is expected to count the skip
    /// as a training warning.
    pub fn step(&mut self, net: &mut Mlp, grads: &Grads) -> bool {
        let g = grads.to_flat();
        assert_eq!(g.len(), self.first_moment.len(), "gradient length");
        if g.iter().any(|v| !v.is_finite()) {
            return false;
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let mut params = net.to_flat();
        for i in 0..g.len() {
            let m = self.beta1 * self.first_moment[i] + (1.0 - self.beta1) * g[i];
            let v = self.beta2 * self.second_moment[i] + (1.0 - self.beta2) * g[i] * g[i];
            self.first_moment[i] = m;
            self.second_moment[i] = v;
            let m_hat = m / bc1;
            let v_hat = v / bc2;
            params[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
        }
        net.set_flat(&params);
        debug_assert!(net.all_finite());
        true
    }
}
