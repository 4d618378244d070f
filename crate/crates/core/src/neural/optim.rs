use alloc::vec::Vec;
#[allow(unused_imports)] // float methods are inherent once std is linked
use num_traits::Float;

use super::network::{Gradients, Network};
use super::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub learning_rate: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, epsilon: 1e-8, learning_rate: 1e-3 }
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub t: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new(net: &Network<T>) -> Self {
        let n = net.param_count();
        Self { m: alloc::vec![T::zero(); n], v: alloc::vec![T::zero(); n], t: 0 }
    }
}

/// One bias-corrected Adam update of every parameter.
pub fn adam_step<T: Real>(net: &mut Network<T>, state: &mut AdamState<T>, grads: &Gradients<T>, config: &AdamConfig) {
    state.t += 1;
    let t = state.t as i32;
    let (b1, b2) = (config.beta1, config.beta2);
    let c1 = T::lit(1.0 - b1.powi(t));
    let c2 = T::lit(1.0 - b2.powi(t));
    let (b1, b2) = (T::lit(b1), T::lit(b2));
    let lr = T::lit(config.learning_rate);
    let eps = T::lit(config.epsilon);
    let mut k = 0;
    let mut grad_iter = grads.iter();
    for p in net.params_mut() {
        for w in p.data_mut() {
            let g = *grad_iter.next().expect("gradient layout matches parameters");
            let m = b1 * state.m[k] + (T::one() - b1) * g;
            let v = b2 * state.v[k] + (T::one() - b2) * g * g;
            state.m[k] = m;
            state.v[k] = v;
            *w -= lr * (m / c1) / ((v / c2).sqrt() + eps);
            k += 1;
        }
    }
}
