use serde::{Deserialize, Serialize};

use super::{NetError, ParamSet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Adam with bias-corrected moments over a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, n: usize) -> Self {
        Self { config, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    /// One update; rejects non-finite gradients before touching any state.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<(), NetError> {
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(NetError::NonFiniteGradient { name: "flat".into(), index: i });
        }
        assert_eq!(params.len(), self.m.len(), "adam state size");
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        self.t += 1;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
            let mhat = self.m[i] / c1;
            let vhat = self.v[i] / c2;
            params[i] -= lr * mhat / (vhat.sqrt() + eps);
        }
        Ok(())
    }

    /// Updates `set` from its own gradients, naming the offending tensor on failure.
    pub fn step_set(&mut self, set: &mut ParamSet) -> Result<(), NetError> {
        let grads = set.grads();
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            let (name, index) = set.locate(i).map(|(n, k)| (n.to_string(), k)).unwrap_or_default();
            return Err(NetError::NonFiniteGradient { name, index });
        }
        let mut values = set.values();
        self.step(&mut values, &grads)?;
        let mut off = 0;
        for e in &mut set.entries {
            let n = e.value.len();
            e.value.copy_from_slice(&values[off..off + n]);
            off += n;
        }
        Ok(())
    }
}
