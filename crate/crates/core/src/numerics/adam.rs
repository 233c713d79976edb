use super::{NumericsError, Tensor};

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Per-parameter first/second moment buffers plus the step counter.
///
/// Buffers are allocated on the first step and must see the same parameter
/// list (count and shapes) on every subsequent step.
pub struct AdamState {
    cfg: AdamConfig,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    shapes: Vec<Vec<usize>>,
}

impl AdamState {
    pub fn new(cfg: AdamConfig) -> Self {
        AdamState { cfg, step: 0, first: Vec::new(), second: Vec::new(), shapes: Vec::new() }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update over every parameter, reading each
    /// tensor's accumulated grad buffer (a missing buffer counts as zero).
    pub fn step(&mut self, params: &mut [&mut Tensor]) -> Result<(), NumericsError> {
        if self.shapes.is_empty() {
            self.shapes = params.iter().map(|p| p.shape.clone()).collect();
            self.first = params.iter().map(|p| vec![0.0; p.numel()]).collect();
            self.second = params.iter().map(|p| vec![0.0; p.numel()]).collect();
        }
        if params.len() != self.shapes.len() {
            return Err(NumericsError::Contract {
                op: "adam_step",
                msg: format!("expected {} parameters, got {}", self.shapes.len(), params.len()),
            });
        }
        for (p, expected) in params.iter().zip(&self.shapes) {
            if &p.shape != expected {
                return Err(NumericsError::ShapeMismatch {
                    op: "adam_step",
                    left: p.shape.clone(),
                    right: expected.clone(),
                });
            }
        }

        self.step += 1;
        let t = self.step as i32;
        let bias1 = 1.0 - self.cfg.beta1.powi(t);
        let bias2 = 1.0 - self.cfg.beta2.powi(t);

        for (idx, param) in params.iter_mut().enumerate() {
            let m = &mut self.first[idx];
            let v = &mut self.second[idx];
            for i in 0..param.data.len() {
                let g = param.grad.as_ref().map_or(0.0, |grad| grad[i]);
                m[i] = self.cfg.beta1 * m[i] + (1.0 - self.cfg.beta1) * g;
                v[i] = self.cfg.beta2 * v[i] + (1.0 - self.cfg.beta2) * g * g;
                let m_hat = m[i] / bias1;
                let v_hat = v[i] / bias2;
                param.data[i] -= self.cfg.lr * m_hat / (v_hat.sqrt() + self.cfg.eps);
            }
        }
        Ok(())
    }
}
