use alloc::vec::Vec;

use super::layers::{Cache, Layer, LayerSpec};
use super::{NeuralError, Real, Tensor};
use crate::rng::{rng_from_seed, SimRng};

/// A fixed pipeline of layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    input_shape: Vec<usize>,
    layers: Vec<Layer<T>>,
}

/// Everything the reverse pass needs from one forward pass.
#[derive(Debug, Clone)]
pub struct Trace<T> {
    /// Input of every layer followed by the network output.
    activations: Vec<Tensor<T>>,
    caches: Vec<Cache<T>>,
}

impl<T> Trace<T> {
    pub fn output(&self) -> &Tensor<T> {
        self.activations.last().expect("trace holds at least the input")
    }

    /// Input of every layer followed by the network output.
    pub fn activations(&self) -> &[Tensor<T>] {
        &self.activations
    }
}

/// Gradients laid out like the network parameters: layer, parameter, element.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub layers: Vec<Vec<Vec<T>>>,
}

impl<T: Real> Gradients<T> {
    pub fn add_assign(&mut self, other: &Gradients<T>) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (pa, pb) in a.iter_mut().zip(b) {
                for (x, y) in pa.iter_mut().zip(pb) {
                    *x += *y;
                }
            }
        }
    }

    pub fn scale(&mut self, k: T) {
        self.layers.iter_mut().flatten().flatten().for_each(|x| *x *= k);
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.layers.iter().flatten().flatten()
    }
}

impl<T: Real> Network<T> {
    /// Builds the pipeline for `input_shape`, drawing initial weights from `seed`.
    pub fn new(input_shape: &[usize], specs: &[LayerSpec], seed: u64) -> Result<Self, NeuralError> {
        let mut rng = rng_from_seed(seed);
        let mut shape = input_shape.to_vec();
        let mut layers = Vec::with_capacity(specs.len());
        for (i, &spec) in specs.iter().enumerate() {
            let layer = Layer::build(spec, &shape, i, &mut rng)?;
            shape = layer.out_shape.clone();
            layers.push(layer);
        }
        Ok(Self { input_shape: input_shape.to_vec(), layers })
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn output_shape(&self) -> &[usize] {
        self.layers.last().map_or(&self.input_shape, |l| &l.out_shape)
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec).collect()
    }

    /// Shape after each layer, starting with the input.
    pub fn shape_trace(&self) -> Vec<Vec<usize>> {
        core::iter::once(self.input_shape.clone()).chain(self.layers.iter().map(|l| l.out_shape.clone())).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.param_count()).sum()
    }

    pub fn params(&self) -> impl Iterator<Item = &Tensor<T>> {
        self.layers.iter().flat_map(|l| l.params.iter())
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut Tensor<T>> {
        self.layers.iter_mut().flat_map(|l| l.params.iter_mut())
    }

    /// Replaces all parameters, checking every shape.
    pub fn set_params(&mut self, params: Vec<Tensor<T>>) -> Result<(), NeuralError> {
        let expected: usize = self.layers.iter().map(|l| l.params.len()).sum();
        if params.len() != expected {
            return Err(NeuralError::ParamMismatch { expected, got: params.len() });
        }
        for (slot, p) in self.params_mut().zip(params.iter()) {
            if slot.shape() != p.shape() {
                return Err(NeuralError::ParamShape { expected: slot.shape().to_vec(), got: p.shape().to_vec() });
            }
        }
        for (slot, p) in self.params_mut().zip(params) {
            *slot = p;
        }
        Ok(())
    }

    pub fn zero_gradients(&self) -> Gradients<T> {
        Gradients {
            layers: self
                .layers
                .iter()
                .map(|l| l.params.iter().map(|p| alloc::vec![T::zero(); p.len()]).collect())
                .collect(),
        }
    }

    /// Inference pass (dropout off).
    pub fn predict(&self, input: &Tensor<T>) -> Result<Tensor<T>, NeuralError> {
        let mut rng = rng_from_seed(0);
        let mut x = self.check_input(input)?.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            x = layer.forward(&x, false, &mut rng).0;
            if !x.is_finite() {
                return Err(NeuralError::NonFinite { layer: i, kind: layer.spec.name() });
            }
        }
        Ok(x)
    }

    /// Forward pass that records a trace. `training` enables dropout drawn
    /// from `rng`.
    pub fn forward(&self, input: &Tensor<T>, training: bool, rng: &mut SimRng) -> Result<Trace<T>, NeuralError> {
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        let mut caches = Vec::with_capacity(self.layers.len());
        activations.push(self.check_input(input)?.clone());
        for (i, layer) in self.layers.iter().enumerate() {
            let (y, cache) = layer.forward(&activations[i], training, rng);
            if !y.is_finite() {
                return Err(NeuralError::NonFinite { layer: i, kind: layer.spec.name() });
            }
            activations.push(y);
            caches.push(cache);
        }
        Ok(Trace { activations, caches })
    }

    /// Reverse pass from `grad_out` (gradient of the loss with respect to the
    /// output of layer `upto - 1`). Layers from `upto` on are skipped, which is
    /// how a fused sigmoid-plus-loss gradient enters the pipeline.
    pub fn backward_from(
        &self,
        trace: &Trace<T>,
        upto: usize,
        grad_out: &[T],
        grads: &mut Gradients<T>,
    ) -> Result<Vec<T>, NeuralError> {
        if trace.caches.len() != self.layers.len() || upto > self.layers.len() {
            return Err(NeuralError::NoTrace);
        }
        let expected = trace.activations[upto].len();
        if grad_out.len() != expected {
            return Err(NeuralError::GradientLength { expected, got: grad_out.len() });
        }
        let mut g = grad_out.to_vec();
        for i in (0..upto).rev() {
            let layer = &self.layers[i];
            g = layer.backward(&trace.activations[i], &trace.activations[i + 1], &trace.caches[i], &g, &mut grads.layers[i]);
        }
        Ok(g)
    }

    /// Reverse pass through every layer.
    pub fn backward(&self, trace: &Trace<T>, grad_out: &[T], grads: &mut Gradients<T>) -> Result<Vec<T>, NeuralError> {
        self.backward_from(trace, self.layers.len(), grad_out, grads)
    }

    fn check_input<'a>(&self, input: &'a Tensor<T>) -> Result<&'a Tensor<T>, NeuralError> {
        if input.shape() != self.input_shape.as_slice() {
            return Err(NeuralError::Input { expected: self.input_shape.clone(), got: input.shape().to_vec() });
        }
        if !input.is_finite() {
            return Err(NeuralError::NonFinite { layer: usize::MAX, kind: "input" });
        }
        Ok(input)
    }

    /// Casts every parameter to another element type.
    pub fn cast<U: Real>(&self) -> Network<U> {
        Network {
            input_shape: self.input_shape.clone(),
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    spec: l.spec,
                    in_shape: l.in_shape.clone(),
                    out_shape: l.out_shape.clone(),
                    params: l
                        .params
                        .iter()
                        .map(|p| Tensor::new(p.shape().to_vec(), p.data().iter().map(|&x| U::lit(x.as_f64())).collect()).unwrap())
                        .collect(),
                })
                .collect(),
        }
    }
}
