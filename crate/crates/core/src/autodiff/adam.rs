use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// L2 penalty coefficient, added to the gradient before the moment
    /// updates (not decoupled).
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    first: Vec<Matrix>,
    second: Vec<Matrix>,
    step: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &[Matrix]) -> Self {
        Self {
            config,
            first: params.iter().map(|p| Matrix::zeros(p.rows(), p.cols())).collect(),
            second: params.iter().map(|p| Matrix::zeros(p.rows(), p.cols())).collect(),
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One update. `grads[i]` of `None` means parameter `i` received no
    /// gradient this step; it is treated as zero.
    pub fn step(&mut self, params: &mut [Matrix], grads: &[Option<Matrix>]) {
        assert_eq!(params.len(), self.first.len(), "parameter count changed");
        assert_eq!(params.len(), grads.len(), "one gradient slot per parameter");
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);

        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.first)
            .zip(&mut self.second)
        {
            assert_eq!(p.shape(), m.shape(), "moment shape mismatch");
            let pd = p.data_mut();
            let md = m.data_mut();
            let vd = v.data_mut();
            for k in 0..pd.len() {
                let raw = g.as_ref().map_or(0.0, |g| g.data()[k]);
                let gk = raw + weight_decay * pd[k];
                md[k] = beta1 * md[k] + (1.0 - beta1) * gk;
                vd[k] = beta2 * vd[k] + (1.0 - beta2) * gk * gk;
                let mhat = md[k] / bc1;
                let vhat = vd[k] / bc2;
                pd[k] -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
    }
}
