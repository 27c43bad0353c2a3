use blan_autograd::{Scalar, Tensor};

use crate::config::{ADAM_BETA1, ADAM_BETA2, ADAM_EPS};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            eps: ADAM_EPS,
        }
    }
}

/// Adam moments for one parameter set.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam<T> {
    pub config: AdamConfig,
    pub t: u64,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig, params: &[Tensor<T>]) -> Self {
        let zeros = || params.iter().map(|p| vec![T::zero(); p.numel()]).collect();
        Adam {
            config,
            t: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    /// One bias-corrected Adam update with step size `lr`.
    pub fn step(&mut self, params: &mut [Tensor<T>], grads: &[Tensor<T>], lr: f64) {
        assert_eq!(params.len(), grads.len(), "parameter and gradient counts differ");
        assert_eq!(params.len(), self.m.len(), "optimizer built for a different parameter set");
        self.t += 1;
        let c = self.config;
        let b1 = T::of(c.beta1);
        let b2 = T::of(c.beta2);
        let one = T::one();
        let bc1 = T::of(1.0 - c.beta1.powi(self.t.min(i32::MAX as u64) as i32));
        let bc2 = T::of(1.0 - c.beta2.powi(self.t.min(i32::MAX as u64) as i32));
        let eps = T::of(c.eps);
        let lr = T::of(lr);
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            assert_eq!(p.shape(), g.shape(), "gradient shape mismatch for parameter {i}");
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (((p, &g), m), v) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = b1 * *m + (one - b1) * g;
                *v = b2 * *v + (one - b2) * g * g;
                let mhat = *m / bc1;
                let vhat = *v / bc2;
                *p -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
    }

    /// `t`, then all first moments, then all second moments.
    pub fn flatten(&self) -> (u64, Vec<T>, Vec<T>) {
        (self.t, self.m.concat(), self.v.concat())
    }

    pub fn load(&mut self, t: u64, m: &[T], v: &[T]) -> std::result::Result<(), String> {
        let n: usize = self.m.iter().map(Vec::len).sum();
        if m.len() != n || v.len() != n {
            return Err(format!("expected {n} moments, got {} and {}", m.len(), v.len()));
        }
        self.t = t;
        let mut at = 0;
        for (mm, vv) in self.m.iter_mut().zip(&mut self.v) {
            let k = mm.len();
            mm.copy_from_slice(&m[at..at + k]);
            vv.copy_from_slice(&v[at..at + k]);
            at += k;
        }
        Ok(())
    }
}
