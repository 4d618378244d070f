use alloc::vec::Vec;
use rand::seq::SliceRandom;

use super::layers::LayerSpec;
use super::loss::{bce_logit_grad, bce_loss};
use super::network::{Gradients, Network};
use super::optim::{adam_step, AdamConfig, AdamState};
use super::{NeuralError, Real, Tensor};
use crate::rng::{derive_seed_path, rng_from_seed};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct TrainConfig {
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub seed: u64,
    /// Stop once an epoch's mean training loss is at or below this value.
    pub target_loss: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { adam: AdamConfig::default(), batch_size: 50, max_epochs: 20, seed: 0, target_loss: None }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainReport {
    /// Mean training loss per completed epoch.
    pub loss_history: Vec<f64>,
    pub stopped_early: bool,
}

/// Loss and gradient of one sample, accumulated into `grads`. The network
/// must end in a sigmoid with a single output; its gradient is fused with
/// the cross-entropy.
pub fn sample_gradient<T: Real>(
    net: &Network<T>,
    input: &Tensor<T>,
    label: T,
    dropout_seed: u64,
    grads: &mut Gradients<T>,
) -> Result<f64, NeuralError> {
    let mut rng = rng_from_seed(dropout_seed);
    let trace = net.forward(input, true, &mut rng)?;
    let p = trace.output().data()[0];
    let (loss, _) = bce_loss(p, label);
    let upto = net.layers().len() - 1;
    net.backward_from(&trace, upto, &[bce_logit_grad(p, label)], grads)?;
    Ok(loss.as_f64())
}

/// Computes the summed gradient and loss of one mini-batch.
pub trait BatchExecutor<T: Real> {
    /// `batch` holds dataset indices and `seeds` the matching dropout seeds.
    fn run(
        &mut self,
        net: &Network<T>,
        inputs: &[Tensor<T>],
        labels: &[T],
        batch: &[usize],
        seeds: &[u64],
    ) -> Result<(Gradients<T>, f64), NeuralError>;
}

/// Processes the batch in order on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Serial;

impl<T: Real> BatchExecutor<T> for Serial {
    fn run(
        &mut self,
        net: &Network<T>,
        inputs: &[Tensor<T>],
        labels: &[T],
        batch: &[usize],
        seeds: &[u64],
    ) -> Result<(Gradients<T>, f64), NeuralError> {
        let mut grads = net.zero_gradients();
        let mut loss = 0.0;
        for (&i, &s) in batch.iter().zip(seeds) {
            loss += sample_gradient(net, &inputs[i], labels[i], s, &mut grads)?;
        }
        Ok((grads, loss))
    }
}

/// Mini-batch Adam training with seeded shuffling and dropout.
pub fn train<T: Real>(
    net: &mut Network<T>,
    inputs: &[Tensor<T>],
    labels: &[T],
    config: &TrainConfig,
) -> Result<TrainReport, NeuralError> {
    train_with(net, inputs, labels, config, &mut Serial, &mut |_, _| {})
}

/// [`train`] with a custom batch executor and a per-epoch callback
/// receiving `(epoch, mean loss)`.
pub fn train_with<T: Real, E: BatchExecutor<T> + ?Sized>(
    net: &mut Network<T>,
    inputs: &[Tensor<T>],
    labels: &[T],
    config: &TrainConfig,
    executor: &mut E,
    on_epoch: &mut dyn FnMut(usize, f64),
) -> Result<TrainReport, NeuralError> {
    if config.batch_size == 0 || config.max_epochs == 0 {
        return Err(NeuralError::BadConfig("batch_size and max_epochs must be at least 1"));
    }
    if inputs.is_empty() || inputs.len() != labels.len() {
        return Err(NeuralError::EmptyDataset);
    }
    if let Some(bad) = labels.iter().position(|&y| y != T::zero() && y != T::one()) {
        return Err(NeuralError::NonBinaryLabel(bad));
    }
    if net.layers().last().map(|l| l.spec) != Some(LayerSpec::Sigmoid) || net.output_shape() != [1] {
        return Err(NeuralError::BadConfig("network must end in a single sigmoid output"));
    }
    let mut state = AdamState::new(net);
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut report = TrainReport { loss_history: Vec::new(), stopped_early: false };
    for epoch in 0..config.max_epochs {
        order.shuffle(&mut rng_from_seed(derive_seed_path(config.seed, &[0x5EED, epoch as u64])));
        let mut total = 0.0;
        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            let seeds: Vec<u64> = (0..batch.len())
                .map(|k| derive_seed_path(config.seed, &[0xD209, epoch as u64, b as u64, k as u64]))
                .collect();
            let (mut grads, loss) = executor.run(net, inputs, labels, batch, &seeds)?;
            grads.scale(T::lit(1.0 / batch.len() as f64));
            adam_step(net, &mut state, &grads, &config.adam);
            total += loss;
        }
        let mean = total / inputs.len() as f64;
        report.loss_history.push(mean);
        on_epoch(epoch, mean);
        if config.target_loss.is_some_and(|t| mean <= t) {
            report.stopped_early = epoch + 1 < config.max_epochs;
            break;
        }
    }
    Ok(report)
}
