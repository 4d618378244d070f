//! Layer kinds with shape inference, forward and reverse passes.
//!
//! Layouts: 1-D feature maps are `[channels, length]`, 2-D maps
//! `[channels, height, width]`, sequences `[steps, features]`.

use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)] // float methods are inherent once std is linked
use num_traits::Float;
use rand::Rng;

use super::real::{axpy, dot, sigmoid};
use super::{NeuralError, Real, Tensor};
use crate::rng::SimRng;

const NORM_EPS: f64 = 1e-5;

/// Declarative description of one layer.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum LayerSpec {
    /// Valid-mode 1-D convolution over `[C, L]`.
    Conv1d { filters: usize, kernel: usize },
    /// Square-kernel 2-D convolution over `[C, H, W]` with `same` output size.
    /// Even kernels pad one extra row and column at the far edge.
    Conv2d { filters: usize, kernel: usize },
    /// Per-sample normalization over the whole feature map, then a
    /// per-channel scale and shift.
    InstanceNorm,
    Relu,
    Dropout { rate: f64 },
    /// Max pooling with stride equal to size; partial windows at the end
    /// are kept. Works on `[C, L]` and `[C, H, W]`.
    MaxPool { size: usize },
    Flatten,
    Dense { units: usize },
    Sigmoid,
    /// Single LSTM layer returning the last hidden state.
    Lstm { units: usize },
    /// `[C, H, W]` to the sequence `[H, C·W]`.
    Sequence,
}

impl LayerSpec {
    pub fn name(&self) -> &'static str {
        match self {
            LayerSpec::Conv1d { .. } => "conv1d",
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::InstanceNorm => "instance_norm",
            LayerSpec::Relu => "relu",
            LayerSpec::Dropout { .. } => "dropout",
            LayerSpec::MaxPool { .. } => "maxpool",
            LayerSpec::Flatten => "flatten",
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Sigmoid => "sigmoid",
            LayerSpec::Lstm { .. } => "lstm",
            LayerSpec::Sequence => "sequence",
        }
    }

    fn validate(&self) -> Result<(), &'static str> {
        match *self {
            LayerSpec::Conv1d { filters, kernel } | LayerSpec::Conv2d { filters, kernel } => {
                if filters == 0 || kernel == 0 {
                    return Err("filters and kernel must be positive");
                }
            }
            LayerSpec::Dropout { rate } => {
                if !(0.0..1.0).contains(&rate) {
                    return Err("dropout rate must be in [0, 1)");
                }
            }
            LayerSpec::MaxPool { size: 0 } => return Err("pool size must be positive"),
            LayerSpec::Dense { units } | LayerSpec::Lstm { units } if units == 0 => {
                return Err("unit count must be positive")
            }
            _ => {}
        }
        Ok(())
    }

    /// Output shape for `input`, or a description of the mismatch.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>, &'static str> {
        self.validate()?;
        match (*self, input) {
            (LayerSpec::Conv1d { filters, kernel }, &[_, l]) => {
                if l < kernel {
                    return Err("input shorter than kernel");
                }
                Ok(vec![filters, l - kernel + 1])
            }
            (LayerSpec::Conv1d { .. }, _) => Err("expects [channels, length]"),
            (LayerSpec::Conv2d { filters, .. }, &[_, h, w]) => Ok(vec![filters, h, w]),
            (LayerSpec::Conv2d { .. }, _) => Err("expects [channels, height, width]"),
            (LayerSpec::InstanceNorm, s) if s.len() >= 2 => Ok(s.to_vec()),
            (LayerSpec::InstanceNorm, _) => Err("expects a channel dimension"),
            (LayerSpec::Relu | LayerSpec::Dropout { .. } | LayerSpec::Sigmoid, s) => Ok(s.to_vec()),
            (LayerSpec::MaxPool { size }, &[c, l]) => Ok(vec![c, l.div_ceil(size)]),
            (LayerSpec::MaxPool { size }, &[c, h, w]) => Ok(vec![c, h.div_ceil(size), w.div_ceil(size)]),
            (LayerSpec::MaxPool { .. }, _) => Err("expects [C, L] or [C, H, W]"),
            (LayerSpec::Flatten, s) => Ok(vec![s.iter().product()]),
            (LayerSpec::Dense { units }, &[_]) => Ok(vec![units]),
            (LayerSpec::Dense { .. }, _) => Err("expects a flat vector"),
            (LayerSpec::Lstm { units }, &[t, _]) if t > 0 => Ok(vec![units]),
            (LayerSpec::Lstm { .. }, _) => Err("expects [steps, features]"),
            (LayerSpec::Sequence, &[c, h, w]) => Ok(vec![h, c * w]),
            (LayerSpec::Sequence, _) => Err("expects [channels, height, width]"),
        }
    }

    /// Shapes of the trainable parameters for `input`.
    pub fn param_shapes(&self, input: &[usize]) -> Vec<Vec<usize>> {
        match (*self, input) {
            (LayerSpec::Conv1d { filters, kernel }, &[c, _]) => vec![vec![filters, c, kernel], vec![filters]],
            (LayerSpec::Conv2d { filters, kernel }, &[c, _, _]) => {
                vec![vec![filters, c, kernel, kernel], vec![filters]]
            }
            (LayerSpec::InstanceNorm, s) => vec![vec![s[0]], vec![s[0]]],
            (LayerSpec::Dense { units }, &[n]) => vec![vec![units, n], vec![units]],
            (LayerSpec::Lstm { units }, &[_, d]) => vec![vec![4 * units, d], vec![4 * units, units], vec![4 * units]],
            _ => Vec::new(),
        }
    }
}

/// Per-layer values kept from the forward pass for the reverse pass.
#[derive(Debug, Clone)]
pub enum Cache<T> {
    None,
    Cols(Vec<T>),
    Mask(Vec<T>),
    Argmax(Vec<usize>),
    Norm { xhat: Vec<T>, inv_std: T },
    Lstm(LstmCache<T>),
}

#[derive(Debug, Clone)]
pub struct LstmCache<T> {
    /// Gate activations per step, `[i, f, g, o]` blocks of `units`.
    gates: Vec<Vec<T>>,
    /// Cell states per step including the zero initial state.
    cells: Vec<Vec<T>>,
    /// Hidden states per step including the zero initial state.
    hidden: Vec<Vec<T>>,
}

/// A layer with its resolved shapes and parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer<T> {
    pub spec: LayerSpec,
    pub in_shape: Vec<usize>,
    pub out_shape: Vec<usize>,
    pub params: Vec<Tensor<T>>,
}

impl<T: Real> Layer<T> {
    /// Resolves shapes and draws initial parameters.
    pub fn build(spec: LayerSpec, in_shape: &[usize], index: usize, rng: &mut SimRng) -> Result<Self, NeuralError> {
        let out_shape = spec.output_shape(in_shape).map_err(|reason| NeuralError::Shape {
            layer: index,
            kind: spec.name(),
            reason,
            shape: in_shape.to_vec(),
        })?;
        let shapes = spec.param_shapes(in_shape);
        let params = shapes
            .into_iter()
            .enumerate()
            .map(|(pi, shape)| {
                let n: usize = shape.iter().product();
                let data = init_param(&spec, pi, &shape, n, rng);
                Tensor::new(shape, data).expect("parameter shape matches data")
            })
            .collect();
        Ok(Self { spec, in_shape: in_shape.to_vec(), out_shape, params })
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.len()).sum()
    }

    pub fn forward(&self, x: &Tensor<T>, training: bool, rng: &mut SimRng) -> (Tensor<T>, Cache<T>) {
        let xs = x.data();
        match self.spec {
            LayerSpec::Conv1d { filters, kernel } => {
                let (c, l) = (self.in_shape[0], self.in_shape[1]);
                let lout = l - kernel + 1;
                let row = c * kernel;
                let mut cols = vec![T::zero(); lout * row];
                for j in 0..lout {
                    let dst = &mut cols[j * row..(j + 1) * row];
                    for ci in 0..c {
                        dst[ci * kernel..(ci + 1) * kernel].copy_from_slice(&xs[ci * l + j..ci * l + j + kernel]);
                    }
                }
                let out = self.conv_apply(&cols, filters, lout, row);
                (Tensor::new(self.out_shape.clone(), out).unwrap(), Cache::Cols(cols))
            }
            LayerSpec::Conv2d { filters, kernel } => {
                let cols = self.im2col2d(xs, kernel);
                let (h, w) = (self.in_shape[1], self.in_shape[2]);
                let row = self.in_shape[0] * kernel * kernel;
                let out = self.conv_apply(&cols, filters, h * w, row);
                (Tensor::new(self.out_shape.clone(), out).unwrap(), Cache::Cols(cols))
            }
            LayerSpec::InstanceNorm => {
                let n = T::lit(xs.len() as f64);
                let mean = xs.iter().copied().sum::<T>() / n;
                let var = xs.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
                let inv_std = T::one() / (var + T::lit(NORM_EPS)).sqrt();
                let xhat: Vec<T> = xs.iter().map(|&v| (v - mean) * inv_std).collect();
                let (gamma, beta) = (self.params[0].data(), self.params[1].data());
                let per = xs.len() / self.in_shape[0];
                let out = xhat.iter().enumerate().map(|(i, &v)| gamma[i / per] * v + beta[i / per]).collect();
                (Tensor::new(self.out_shape.clone(), out).unwrap(), Cache::Norm { xhat, inv_std })
            }
            LayerSpec::Relu => {
                let out = xs.iter().map(|&v| if v > T::zero() { v } else { T::zero() }).collect();
                (Tensor::new(self.out_shape.clone(), out).unwrap(), Cache::None)
            }
            LayerSpec::Dropout { rate } => {
                if !training || rate == 0.0 {
                    return (x.clone(), Cache::None);
                }
                let keep = T::lit(1.0 / (1.0 - rate));
                let mask: Vec<T> =
                    xs.iter().map(|_| if rng.random::<f64>() < rate { T::zero() } else { keep }).collect();
                let out = xs.iter().zip(&mask).map(|(&v, &m)| v * m).collect();
                (Tensor::new(self.out_shape.clone(), out).unwrap(), Cache::Mask(mask))
            }
            LayerSpec::MaxPool { size } => {
                let (out, arg) = self.maxpool(xs, size);
                (Tensor::new(self.out_shape.clone(), out).unwrap(), Cache::Argmax(arg))
            }
            LayerSpec::Flatten => (x.clone().with_shape(self.out_shape.clone()), Cache::None),
            LayerSpec::Sequence => {
                let (c, h, w) = (self.in_shape[0], self.in_shape[1], self.in_shape[2]);
                let mut out = vec![T::zero(); xs.len()];
                for ci in 0..c {
                    for hi in 0..h {
                        out[hi * c * w + ci * w..hi * c * w + (ci + 1) * w]
                            .copy_from_slice(&xs[(ci * h + hi) * w..(ci * h + hi + 1) * w]);
                    }
                }
                (Tensor::new(self.out_shape.clone(), out).unwrap(), Cache::None)
            }
            LayerSpec::Dense { units } => {
                let (w, b) = (self.params[0].data(), self.params[1].data());
                let n = xs.len();
                let out = (0..units).map(|u| dot(&w[u * n..(u + 1) * n], xs) + b[u]).collect();
                (Tensor::new(self.out_shape.clone(), out).unwrap(), Cache::None)
            }
            LayerSpec::Sigmoid => {
                let out = xs.iter().map(|&v| sigmoid(v)).collect();
                (Tensor::new(self.out_shape.clone(), out).unwrap(), Cache::None)
            }
            LayerSpec::Lstm { units } => {
                let (out, cache) = self.lstm_forward(xs, units);
                (Tensor::new(self.out_shape.clone(), out).unwrap(), Cache::Lstm(cache))
            }
        }
    }

    /// Reverse pass. Accumulates parameter gradients into `grads` and returns
    /// the gradient with respect to the layer input.
    pub fn backward(&self, x: &Tensor<T>, y: &Tensor<T>, cache: &Cache<T>, gy: &[T], grads: &mut [Vec<T>]) -> Vec<T> {
        let xs = x.data();
        match (self.spec, cache) {
            (LayerSpec::Conv1d { filters, kernel }, Cache::Cols(cols)) => {
                let (c, l) = (self.in_shape[0], self.in_shape[1]);
                let lout = l - kernel + 1;
                let row = c * kernel;
                let dcols = self.conv_backward(cols, gy, filters, lout, row, grads);
                let mut dx = vec![T::zero(); xs.len()];
                for j in 0..lout {
                    let src = &dcols[j * row..(j + 1) * row];
                    for ci in 0..c {
                        let d = &mut dx[ci * l + j..ci * l + j + kernel];
                        for (a, b) in d.iter_mut().zip(&src[ci * kernel..(ci + 1) * kernel]) {
                            *a += *b;
                        }
                    }
                }
                dx
            }
            (LayerSpec::Conv2d { filters, kernel }, Cache::Cols(cols)) => {
                let (c, h, w) = (self.in_shape[0], self.in_shape[1], self.in_shape[2]);
                let row = c * kernel * kernel;
                let dcols = self.conv_backward(cols, gy, filters, h * w, row, grads);
                let pad = (kernel - 1) / 2;
                let mut dx = vec![T::zero(); xs.len()];
                for hi in 0..h {
                    for wi in 0..w {
                        let src = &dcols[(hi * w + wi) * row..(hi * w + wi + 1) * row];
                        for ci in 0..c {
                            for a in 0..kernel {
                                let Some(ih) = (hi + a).checked_sub(pad).filter(|&v| v < h) else { continue };
                                for b in 0..kernel {
                                    let Some(iw) = (wi + b).checked_sub(pad).filter(|&v| v < w) else { continue };
                                    dx[(ci * h + ih) * w + iw] += src[ci * kernel * kernel + a * kernel + b];
                                }
                            }
                        }
                    }
                }
                dx
            }
            (LayerSpec::InstanceNorm, Cache::Norm { xhat, inv_std }) => {
                let gamma = self.params[0].data();
                let per = xs.len() / self.in_shape[0];
                let n = T::lit(xs.len() as f64);
                let mut dxhat = vec![T::zero(); xs.len()];
                for (i, (&g, &xh)) in gy.iter().zip(xhat).enumerate() {
                    let ch = i / per;
                    grads[0][ch] += g * xh;
                    grads[1][ch] += g;
                    dxhat[i] = g * gamma[ch];
                }
                let sum: T = dxhat.iter().copied().sum();
                let sum_x: T = dxhat.iter().zip(xhat).map(|(&d, &h)| d * h).sum();
                dxhat.iter().zip(xhat).map(|(&d, &h)| *inv_std * (d - (sum + h * sum_x) / n)).collect()
            }
            (LayerSpec::Relu, _) => {
                xs.iter().zip(gy).map(|(&v, &g)| if v > T::zero() { g } else { T::zero() }).collect()
            }
            (LayerSpec::Dropout { .. }, Cache::Mask(mask)) => gy.iter().zip(mask).map(|(&g, &m)| g * m).collect(),
            (LayerSpec::Dropout { .. }, _) => gy.to_vec(),
            (LayerSpec::MaxPool { .. }, Cache::Argmax(arg)) => {
                let mut dx = vec![T::zero(); xs.len()];
                for (&g, &i) in gy.iter().zip(arg) {
                    dx[i] += g;
                }
                dx
            }
            (LayerSpec::Flatten, _) => gy.to_vec(),
            (LayerSpec::Sequence, _) => {
                let (c, h, w) = (self.in_shape[0], self.in_shape[1], self.in_shape[2]);
                let mut dx = vec![T::zero(); xs.len()];
                for ci in 0..c {
                    for hi in 0..h {
                        dx[(ci * h + hi) * w..(ci * h + hi + 1) * w]
                            .copy_from_slice(&gy[hi * c * w + ci * w..hi * c * w + (ci + 1) * w]);
                    }
                }
                dx
            }
            (LayerSpec::Dense { units }, _) => {
                let w = self.params[0].data();
                let n = xs.len();
                let mut dx = vec![T::zero(); n];
                for u in 0..units {
                    axpy(gy[u], xs, &mut grads[0][u * n..(u + 1) * n]);
                    grads[1][u] += gy[u];
                    axpy(gy[u], &w[u * n..(u + 1) * n], &mut dx);
                }
                dx
            }
            (LayerSpec::Sigmoid, _) => {
                y.data().iter().zip(gy).map(|(&p, &g)| g * p * (T::one() - p)).collect()
            }
            (LayerSpec::Lstm { units }, Cache::Lstm(c)) => self.lstm_backward(xs, units, c, gy, grads),
            _ => unreachable!("cache does not match layer kind"),
        }
    }

    fn conv_apply(&self, cols: &[T], filters: usize, positions: usize, row: usize) -> Vec<T> {
        let (w, b) = (self.params[0].data(), self.params[1].data());
        let mut out = vec![T::zero(); filters * positions];
        for f in 0..filters {
            let wf = &w[f * row..(f + 1) * row];
            for (j, o) in out[f * positions..(f + 1) * positions].iter_mut().enumerate() {
                *o = dot(wf, &cols[j * row..(j + 1) * row]) + b[f];
            }
        }
        out
    }

    fn conv_backward(&self, cols: &[T], gy: &[T], filters: usize, positions: usize, row: usize, grads: &mut [Vec<T>]) -> Vec<T> {
        let w = self.params[0].data();
        let mut dcols = vec![T::zero(); cols.len()];
        let (gw, rest) = grads.split_at_mut(1);
        let (gw, gb) = (&mut gw[0], &mut rest[0]);
        for f in 0..filters {
            let wf = &w[f * row..(f + 1) * row];
            let gwf = &mut gw[f * row..(f + 1) * row];
            for j in 0..positions {
                let g = gy[f * positions + j];
                if g == T::zero() {
                    continue;
                }
                gb[f] += g;
                axpy(g, &cols[j * row..(j + 1) * row], gwf);
                axpy(g, wf, &mut dcols[j * row..(j + 1) * row]);
            }
        }
        dcols
    }

    fn im2col2d(&self, xs: &[T], kernel: usize) -> Vec<T> {
        let (c, h, w) = (self.in_shape[0], self.in_shape[1], self.in_shape[2]);
        let pad = (kernel - 1) / 2;
        let row = c * kernel * kernel;
        let mut cols = vec![T::zero(); h * w * row];
        for hi in 0..h {
            for wi in 0..w {
                let dst = &mut cols[(hi * w + wi) * row..(hi * w + wi + 1) * row];
                for ci in 0..c {
                    for a in 0..kernel {
                        let Some(ih) = (hi + a).checked_sub(pad).filter(|&v| v < h) else { continue };
                        for b in 0..kernel {
                            let Some(iw) = (wi + b).checked_sub(pad).filter(|&v| v < w) else { continue };
                            dst[ci * kernel * kernel + a * kernel + b] = xs[(ci * h + ih) * w + iw];
                        }
                    }
                }
            }
        }
        cols
    }

    fn maxpool(&self, xs: &[T], size: usize) -> (Vec<T>, Vec<usize>) {
        let n = self.out_shape.iter().product();
        let mut out = Vec::with_capacity(n);
        let mut arg = Vec::with_capacity(n);
        let mut take = |idx: &mut dyn Iterator<Item = usize>| {
            let mut best = usize::MAX;
            for i in idx {
                if best == usize::MAX || xs[i] > xs[best] {
                    best = i;
                }
            }
            out.push(xs[best]);
            arg.push(best);
        };
        if self.in_shape.len() == 2 {
            let (c, l) = (self.in_shape[0], self.in_shape[1]);
            for ci in 0..c {
                for o in 0..self.out_shape[1] {
                    let start = o * size;
                    take(&mut (start..(start + size).min(l)).map(|j| ci * l + j));
                }
            }
        } else {
            let (c, h, w) = (self.in_shape[0], self.in_shape[1], self.in_shape[2]);
            for ci in 0..c {
                for oh in 0..self.out_shape[1] {
                    for ow in 0..self.out_shape[2] {
                        let (h0, w0) = (oh * size, ow * size);
                        let (h1, w1) = ((h0 + size).min(h), (w0 + size).min(w));
                        take(&mut (h0..h1).flat_map(|a| (w0..w1).map(move |b| (ci * h + a) * w + b)));
                    }
                }
            }
        }
        (out, arg)
    }

    fn lstm_forward(&self, xs: &[T], units: usize) -> (Vec<T>, LstmCache<T>) {
        let (wx, wh, b) = (self.params[0].data(), self.params[1].data(), self.params[2].data());
        let (steps, d) = (self.in_shape[0], self.in_shape[1]);
        let mut cache = LstmCache {
            gates: Vec::with_capacity(steps),
            cells: vec![vec![T::zero(); units]],
            hidden: vec![vec![T::zero(); units]],
        };
        for t in 0..steps {
            let x = &xs[t * d..(t + 1) * d];
            let h = &cache.hidden[t];
            let c_prev = &cache.cells[t];
            let mut gates = vec![T::zero(); 4 * units];
            for (k, z) in gates.iter_mut().enumerate() {
                let pre = dot(&wx[k * d..(k + 1) * d], x) + dot(&wh[k * units..(k + 1) * units], h) + b[k];
                *z = if (2 * units..3 * units).contains(&k) { pre.tanh() } else { sigmoid(pre) };
            }
            let mut c = vec![T::zero(); units];
            let mut hn = vec![T::zero(); units];
            for u in 0..units {
                let (i, f, g, o) = (gates[u], gates[units + u], gates[2 * units + u], gates[3 * units + u]);
                c[u] = f * c_prev[u] + i * g;
                hn[u] = o * c[u].tanh();
            }
            cache.gates.push(gates);
            cache.cells.push(c);
            cache.hidden.push(hn);
        }
        (cache.hidden[steps].clone(), cache)
    }

    fn lstm_backward(&self, xs: &[T], units: usize, cache: &LstmCache<T>, gy: &[T], grads: &mut [Vec<T>]) -> Vec<T> {
        let (wx, wh) = (self.params[0].data(), self.params[1].data());
        let (steps, d) = (self.in_shape[0], self.in_shape[1]);
        let mut dx = vec![T::zero(); xs.len()];
        let mut dh = gy.to_vec();
        let mut dc = vec![T::zero(); units];
        let mut dz = vec![T::zero(); 4 * units];
        for t in (0..steps).rev() {
            let gates = &cache.gates[t];
            let (c, c_prev, h_prev) = (&cache.cells[t + 1], &cache.cells[t], &cache.hidden[t]);
            for u in 0..units {
                let (i, f, g, o) = (gates[u], gates[units + u], gates[2 * units + u], gates[3 * units + u]);
                let tc = c[u].tanh();
                let dcu = dc[u] + dh[u] * o * (T::one() - tc * tc);
                dz[u] = dcu * g * i * (T::one() - i);
                dz[units + u] = dcu * c_prev[u] * f * (T::one() - f);
                dz[2 * units + u] = dcu * i * (T::one() - g * g);
                dz[3 * units + u] = dh[u] * tc * o * (T::one() - o);
                dc[u] = dcu * f;
            }
            let x = &xs[t * d..(t + 1) * d];
            let mut dh_prev = vec![T::zero(); units];
            for (k, &g) in dz.iter().enumerate() {
                if g == T::zero() {
                    continue;
                }
                axpy(g, x, &mut grads[0][k * d..(k + 1) * d]);
                axpy(g, h_prev, &mut grads[1][k * units..(k + 1) * units]);
                grads[2][k] += g;
                axpy(g, &wx[k * d..(k + 1) * d], &mut dx[t * d..(t + 1) * d]);
                axpy(g, &wh[k * units..(k + 1) * units], &mut dh_prev);
            }
            dh = dh_prev;
        }
        dx
    }
}

fn init_param<T: Real>(spec: &LayerSpec, index: usize, shape: &[usize], n: usize, rng: &mut SimRng) -> Vec<T> {
    let uniform = |limit: f64, rng: &mut SimRng| -> Vec<T> {
        (0..n).map(|_| T::lit((rng.random::<f64>() * 2.0 - 1.0) * limit)).collect()
    };
    match (spec, index) {
        (LayerSpec::Conv1d { .. } | LayerSpec::Conv2d { .. } | LayerSpec::Dense { .. }, 0) => {
            let fan_in: usize = shape[1..].iter().product();
            uniform((6.0 / fan_in as f64).sqrt(), rng)
        }
        (LayerSpec::InstanceNorm, 0) => vec![T::one(); n],
        (LayerSpec::Lstm { units }, 0 | 1) => uniform(1.0 / (*units as f64).sqrt(), rng),
        (LayerSpec::Lstm { units }, 2) => {
            // Forget gate bias starts at one.
            (0..n).map(|k| if (*units..2 * units).contains(&k) { T::one() } else { T::zero() }).collect()
        }
        _ => vec![T::zero(); n],
    }
}
