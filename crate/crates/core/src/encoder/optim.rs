use super::config::EncoderConfig;
use super::params::Params;

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Params,
    v: Params,
    t: u64,
}

impl Adam {
    pub fn new(config: &EncoderConfig) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: Params::zeros(config),
            v: Params::zeros(config),
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut Params, grads: &Params, lr: f64) {
        self.t += 1;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let c1 = 1.0 - b1.powi(self.t as i32);
        let c2 = 1.0 - b2.powi(self.t as i32);
        let tensors = params
            .slices_mut()
            .into_iter()
            .zip(grads.slices())
            .zip(self.m.slices_mut().into_iter().zip(self.v.slices_mut()));
        for ((p, g), (m, v)) in tensors {
            for i in 0..p.len() {
                let gi = g[i];
                m[i] = b1 * m[i] + (1.0 - b1) * gi;
                v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
                let mhat = m[i] / c1;
                let vhat = v[i] / c2;
                p[i] -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
    }
}

/// Scales `grads` so its global L2 norm is at most `max_norm`. Returns the
/// norm before clipping.
pub fn clip_grad_norm(grads: &mut Params, max_norm: f64) -> f64 {
    let norm = grads.sq_norm().sqrt();
    if max_norm > 0.0 && norm > max_norm {
        grads.scale(max_norm / norm);
    }
    norm
}

/// Linear warm-up over the first `warmup_steps`, then constant.
pub fn warmup_lr(base: f64, step: u64, warmup_steps: u64) -> f64 {
    if warmup_steps == 0 || step >= warmup_steps {
        base
    } else {
        base * (step + 1) as f64 / warmup_steps as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clipping_bounds_norm() {
        let cfg = EncoderConfig {
            vocab_size: 10,
            hidden: 4,
            heads: 2,
            layers: 1,
            max_len: 8,
            ..Default::default()
        };
        let mut g = Params::zeros(&cfg);
        g.fill(1.0);
        let before = clip_grad_norm(&mut g, 1.0);
        assert!(before > 1.0);
        assert!((g.sq_norm().sqrt() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn warmup_schedule() {
        assert_eq!(warmup_lr(1.0, 0, 4), 0.25);
        assert_eq!(warmup_lr(1.0, 3, 4), 1.0);
        assert_eq!(warmup_lr(1.0, 10, 4), 1.0);
        assert_eq!(warmup_lr(1.0, 0, 0), 1.0);
    }

    #[test]
    fn adam_moves_against_gradient() {
        let cfg = EncoderConfig {
            vocab_size: 10,
            hidden: 4,
            heads: 2,
            layers: 1,
            max_len: 8,
            ..Default::default()
        };
        let mut p = Params::zeros(&cfg);
        let mut g = Params::zeros(&cfg);
        g.fill(2.0);
        let mut adam = Adam::new(&cfg);
        adam.step(&mut p, &g, 0.1);
        assert!((p.get_flat(0) + 0.1).abs() < 1e-6);
    }
}
