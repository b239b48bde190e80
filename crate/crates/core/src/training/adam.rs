//! Bias-corrected adaptive moment estimation with a half-cycle cosine
//! learning-rate decay.

#[derive(Clone, Copy, Debug)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// lr decays from `lr0` at iteration 0 to exactly 0 at iteration `total`.
pub fn cosine_lr(lr0: f64, iter: usize, total: usize) -> f64 {
    if total == 0 {
        return lr0;
    }
    let frac = (iter as f64 / total as f64).min(1.0);
    lr0 * 0.5 * (1.0 + (std::f64::consts::PI * frac).cos())
}

#[derive(Clone, Debug)]
pub struct AdamState {
    cfg: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u32,
}

impl AdamState {
    pub fn new(n: usize, cfg: AdamConfig) -> Self {
        AdamState { cfg, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        assert_eq!(params.len(), grad.len());
        assert_eq!(params.len(), self.m.len());
        self.t += 1;
        let b1 = self.cfg.beta1;
        let b2 = self.cfg.beta2;
        let bc1 = 1.0 - b1.powi(self.t as i32);
        let bc2 = 1.0 - b2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * g;
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * g * g;
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            params[i] -= lr * mhat / (vhat.sqrt() + self.cfg.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn schedule_endpoints() {
        assert_relative_eq!(cosine_lr(1e-3, 0, 20_000), 1e-3, max_relative = 1e-15);
        assert!(cosine_lr(1e-3, 20_000, 20_000).abs() <= 1e-12);
        // Monotone decay.
        let mut prev = f64::INFINITY;
        for i in (0..=20_000).step_by(500) {
            let lr = cosine_lr(1e-3, i, 20_000);
            assert!(lr <= prev);
            prev = lr;
        }
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut st = AdamState::new(3, AdamConfig::default());
        let mut p = vec![1.0, -2.0, 0.5];
        let orig = p.clone();
        st.step(&mut p, &[0.0, 0.0, 0.0], 1e-2);
        assert_eq!(p, orig);
    }

    #[test]
    fn minimizes_a_scalar_quadratic() {
        // f(θ) = θ² from θ = 1: |θ| < 1e-3 within 2000 steps at lr0 = 1e-2.
        let mut st = AdamState::new(1, AdamConfig::default());
        let mut p = vec![1.0];
        for i in 0..2000 {
            let g = 2.0 * p[0];
            st.step(&mut p, &[g], cosine_lr(1e-2, i, 2000));
        }
        assert!(p[0].abs() < 1e-3, "ended at {}", p[0]);
    }
}
