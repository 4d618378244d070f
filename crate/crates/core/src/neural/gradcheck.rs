//! Central finite-difference gradient checking.

use alloc::vec::Vec;
#[allow(unused_imports)] // float methods are inherent once std is linked
use num_traits::Float;
use rand::Rng;

use super::{Network, NeuralError, Tensor};
use crate::rng::rng_from_seed;

/// Step used for the central differences.
pub const EPS: f64 = 1e-4;

/// Relative error with a floor on the denominator so that two tiny values
/// compare by absolute difference.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

fn objective(net: &Network<f64>, x: &Tensor<f64>, r: &[f64], training: bool, seed: u64) -> Result<f64, NeuralError> {
    let trace = net.forward(x, training, &mut rng_from_seed(seed))?;
    Ok(trace.output().data().iter().zip(r).map(|(a, b)| a * b).sum())
}

/// Largest relative error between backpropagated gradients and central
/// differences of `sum(r * net(x))` over every parameter and input, for a
/// random projection `r` drawn from `seed`. Dropout masks are replayed from
/// the same seed in every evaluation.
pub fn max_gradient_error(net: &mut Network<f64>, x: &Tensor<f64>, training: bool, seed: u64) -> Result<f64, NeuralError> {
    let mut rng = rng_from_seed(seed);
    let mask_seed = rng.random::<u64>();
    let out_len: usize = net.output_shape().iter().product();
    let r: Vec<f64> = (0..out_len).map(|_| rng.random_range(-1.0..1.0)).collect();
    let trace = net.forward(x, training, &mut rng_from_seed(mask_seed))?;
    let mut grads = net.zero_gradients();
    let dx = net.backward(&trace, &r, &mut grads)?;
    let analytic: Vec<f64> = grads.iter().copied().collect();

    let mut worst: f64 = 0.0;
    let mut k = 0;
    let n_params = net.params().count();
    for p in 0..n_params {
        let len = net.params().nth(p).map_or(0, |t| t.len());
        for i in 0..len {
            let slot = |net: &mut Network<f64>, v: f64| {
                if let Some(t) = net.params_mut().nth(p) {
                    t.data_mut()[i] = v;
                }
            };
            let orig = net.params().nth(p).map_or(0.0, |t| t.data()[i]);
            slot(net, orig + EPS);
            let up = objective(net, x, &r, training, mask_seed);
            slot(net, orig - EPS);
            let down = objective(net, x, &r, training, mask_seed);
            slot(net, orig);
            worst = worst.max(relative_error(analytic[k], (up? - down?) / (2.0 * EPS)));
            k += 1;
        }
    }
    for i in 0..x.len() {
        let mut xp = x.clone();
        xp.data_mut()[i] += EPS;
        let up = objective(net, &xp, &r, training, mask_seed)?;
        xp.data_mut()[i] -= 2.0 * EPS;
        let down = objective(net, &xp, &r, training, mask_seed)?;
        worst = worst.max(relative_error(dx[i], (up - down) / (2.0 * EPS)));
    }
    Ok(worst)
}
