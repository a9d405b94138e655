//! Adam optimizer with per-parameter first/second moment accumulators.

use super::network::{Grads, Network};
use super::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, Copy)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamParams {
    /// The slower, heavily-smoothed setting used for adversarial training.
    pub fn adversarial() -> Self {
        AdamParams {
            lr: 2e-4,
            beta1: 0.5,
            ..AdamParams::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdamState<S: Scalar = f32> {
    m: Vec<Tensor<S>>,
    v: Vec<Tensor<S>>,
    step_count: u64,
    pub hp: AdamParams,
}

impl<S: Scalar> AdamState<S> {
    pub fn new(net: &Network<S>, hp: AdamParams) -> Self {
        AdamState {
            m: net.params().iter().map(|p| Tensor::zeros(p.shape())).collect(),
            v: net.params().iter().map(|p| Tensor::zeros(p.shape())).collect(),
            step_count: 0,
            hp,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// One update: moments decay toward the gradient and its square, and the
    /// bias-corrected ratio moves the parameters.
    pub fn step(&mut self, net: &mut Network<S>, grads: &Grads<S>) {
        self.step_count += 1;
        let t = self.step_count as i32;
        let b1 = S::from_f64(self.hp.beta1);
        let b2 = S::from_f64(self.hp.beta2);
        let one_m_b1 = S::from_f64(1.0 - self.hp.beta1);
        let one_m_b2 = S::from_f64(1.0 - self.hp.beta2);
        let corr1 = S::from_f64(1.0 - self.hp.beta1.powi(t));
        let corr2 = S::from_f64(1.0 - self.hp.beta2.powi(t));
        let lr = S::from_f64(self.hp.lr);
        let eps = S::from_f64(self.hp.epsilon);

        for ((param, grad), (m, v)) in net
            .params_mut()
            .iter_mut()
            .zip(&grads.by_param)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for ((p, g), (mv, vv)) in param
                .data_mut()
                .iter_mut()
                .zip(grad.data())
                .zip(m.data_mut().iter_mut().zip(v.data_mut().iter_mut()))
            {
                *mv = b1 * *mv + one_m_b1 * *g;
                *vv = b2 * *vv + one_m_b2 * *g * *g;
                let m_hat = *mv / corr1;
                let v_hat = *vv / corr2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}
