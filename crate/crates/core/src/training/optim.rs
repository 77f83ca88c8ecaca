use serde::{Deserialize, Serialize};

/// Adam with decoupled weight decay.
#[derive(Clone, Debug)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamW {
    pub fn new(len: usize, weight_decay: f64) -> Self {
        AdamW {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        debug_assert_eq!(params.len(), self.m.len());
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let decay = 1.0 - lr * self.weight_decay;
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mh = self.m[i] / bc1;
            let vh = self.v[i] / bc2;
            params[i] = params[i] * decay - lr * mh / (vh.sqrt() + self.eps);
        }
    }
}

/// Rescales `grad` in place so its Euclidean norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct PlateauConfig {
    pub factor: f64,
    /// Log steps without improvement tolerated before the rate drops.
    pub patience: usize,
    /// Relative improvement that counts as progress.
    pub threshold: f64,
    /// Floor as a fraction of the initial rate; the absolute floor is `1e-6`.
    pub min_lr_ratio: f64,
}

impl Default for PlateauConfig {
    fn default() -> Self {
        PlateauConfig {
            factor: 0.5,
            patience: 5,
            threshold: 5e-3,
            min_lr_ratio: 1e-3,
        }
    }
}

/// Reduce-on-plateau learning-rate schedule on a minimized metric.
#[derive(Clone, Debug)]
pub struct PlateauScheduler {
    cfg: PlateauConfig,
    lr: f64,
    min_lr: f64,
    best: f64,
    bad: usize,
}

impl PlateauScheduler {
    pub fn new(lr: f64, cfg: PlateauConfig) -> Self {
        PlateauScheduler {
            cfg,
            lr,
            min_lr: (lr * cfg.min_lr_ratio).max(1e-6).min(lr),
            best: f64::INFINITY,
            bad: 0,
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn min_lr(&self) -> f64 {
        self.min_lr
    }

    pub fn at_min(&self) -> bool {
        self.lr <= self.min_lr * (1.0 + 1e-12)
    }

    /// Feeds one logged metric; returns the (possibly reduced) rate.
    pub fn observe(&mut self, metric: f64) -> f64 {
        if metric < self.best * (1.0 - self.cfg.threshold) {
            self.best = metric;
            self.bad = 0;
        } else {
            self.bad += 1;
        }
        if self.bad > self.cfg.patience {
            self.lr = (self.lr * self.cfg.factor).max(self.min_lr);
            self.bad = 0;
        }
        self.lr
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plateau_halves_after_patience() {
        let mut s = PlateauScheduler::new(1.0, PlateauConfig::default());
        s.observe(1.0);
        for _ in 0..5 {
            assert_eq!(s.observe(1.0), 1.0);
        }
        assert_eq!(s.observe(1.0), 0.5);
    }

    #[test]
    fn plateau_respects_floor() {
        let mut s = PlateauScheduler::new(1e-4, PlateauConfig::default());
        for _ in 0..1000 {
            s.observe(1.0);
        }
        assert_eq!(s.lr(), 1e-6);
        assert!(s.at_min());
    }

    #[test]
    fn clip_scales_down_only() {
        let mut g = [3.0, 4.0];
        assert_eq!(clip_global_norm(&mut g, 1.0), 5.0);
        assert!((g[0] - 0.6).abs() < 1e-15);
        let mut h = [0.3, 0.4];
        clip_global_norm(&mut h, 1.0);
        assert_eq!(h, [0.3, 0.4]);
    }

    #[test]
    fn adamw_first_step_moves_by_lr() {
        let mut opt = AdamW::new(2, 0.0);
        let mut p = [1.0, -1.0];
        opt.step(&mut p, &[0.5, -2.0], 0.1);
        assert!((p[0] - 0.9).abs() < 1e-6);
        assert!((p[1] + 0.9).abs() < 1e-6);
    }
}
