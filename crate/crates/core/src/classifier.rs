//! LOS/NLOS classification of eCIRs and per-anchor smoothed beliefs.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
#[allow(unused_imports)] // float methods are inherent once std is linked
use num_traits::Float;

use crate::channel::{compute_diagnostics, synth_cir_for_pose, CirFrame, CirSynthConfig, DetectionConfig, Diagnostics, CIR_LEN};
use crate::ecir::{extract_ecir, Ecir, ECIR_LEN};
use crate::neural::{conv_block, BatchExecutor, LayerSpec, Network, NeuralError, Tensor, TrainConfig, TrainReport};
use crate::rng::{derive_seed, rng_from_seed};
use crate::{AnchorId, Condition, Pose};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ClassifierError {
    #[error("model has not been trained")]
    Untrained,
    #[error("unknown anchor {0}")]
    UnknownAnchor(AnchorId),
    #[error("probability {0} is outside [0, 1]")]
    BadProbability(f64),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error("could not synthesize a frame: {0}")]
    Synthesis(&'static str),
}

/// Kernel sizes and filter counts of the four convolution blocks.
pub const CONV_KERNELS: [usize; 4] = [5, 11, 17, 5];
pub const CONV_FILTERS: [usize; 4] = [64, 128, 256, 512];
pub const DROPOUT: f64 = 0.2;
pub const POOL: usize = 2;

/// Layer pipeline of the eCIR classifier for a `[1, 135]` input.
pub fn los_model_specs() -> Vec<LayerSpec> {
    let mut specs = Vec::new();
    for (&filters, &kernel) in CONV_FILTERS.iter().zip(&CONV_KERNELS) {
        specs.extend(conv_block(LayerSpec::Conv1d { filters, kernel }, DROPOUT, POOL));
    }
    specs.extend([LayerSpec::Flatten, LayerSpec::Dense { units: 1 }, LayerSpec::Sigmoid]);
    specs
}

/// The eCIR classifier. Its output is p(NLOS).
#[derive(Debug, Clone, PartialEq)]
pub struct LosModel {
    pub net: Network<f32>,
    pub trained: bool,
}

impl LosModel {
    /// Untrained model with seeded initial weights.
    pub fn new(seed: u64) -> Result<Self, ClassifierError> {
        Ok(Self { net: Network::new(&[1, ECIR_LEN], &los_model_specs(), seed)?, trained: false })
    }

    /// Wraps an already trained network, checking its input and output shape.
    pub fn from_network(net: Network<f32>) -> Result<Self, ClassifierError> {
        if net.input_shape() != [1, ECIR_LEN] || net.output_shape() != [1] {
            return Err(NeuralError::Input { expected: alloc::vec![1, ECIR_LEN], got: net.input_shape().to_vec() }.into());
        }
        Ok(Self { net, trained: true })
    }

    pub fn train_with<E: BatchExecutor<f32> + ?Sized>(
        &mut self,
        data: &[Ecir],
        config: &TrainConfig,
        executor: &mut E,
        on_epoch: &mut dyn FnMut(usize, f64),
    ) -> Result<TrainReport, ClassifierError> {
        let inputs: Vec<Tensor<f32>> = data.iter().map(ecir_tensor).collect();
        let labels: Vec<f32> = data.iter().map(|e| e.condition.label()).collect();
        let report = crate::neural::train_with(&mut self.net, &inputs, &labels, config, executor, on_epoch)?;
        self.trained = true;
        Ok(report)
    }

    pub fn train(&mut self, data: &[Ecir], config: &TrainConfig) -> Result<TrainReport, ClassifierError> {
        self.train_with(data, config, &mut crate::neural::Serial, &mut |_, _| {})
    }
}

pub fn ecir_tensor(ecir: &Ecir) -> Tensor<f32> {
    Tensor::new(alloc::vec![1, ECIR_LEN], ecir.amplitudes().iter().map(|&a| a as f32).collect())
        .expect("eCIR has a fixed length")
}

/// p(NLOS) for one eCIR, inference mode.
pub fn classify_raw(model: &LosModel, ecir: &Ecir) -> Result<f64, ClassifierError> {
    if !model.trained {
        return Err(ClassifierError::Untrained);
    }
    let out = model.net.predict(&ecir_tensor(ecir))?;
    Ok(out.data()[0] as f64)
}

/// Exponentially weighted low-pass filter state.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LpfState {
    pub filtered: f64,
    /// Weight of the previous filtered value.
    pub weight: f64,
}

impl LpfState {
    pub const DEFAULT_WEIGHT: f64 = 0.8;
    pub const PRIOR: f64 = 0.5;

    pub fn new(filtered: f64, weight: f64) -> Self {
        Self { filtered, weight }
    }
}

impl Default for LpfState {
    fn default() -> Self {
        Self::new(Self::PRIOR, Self::DEFAULT_WEIGHT)
    }
}

pub fn lpf_update(state: LpfState, p: f64) -> LpfState {
    LpfState { filtered: state.weight * state.filtered + (1.0 - state.weight) * p, weight: state.weight }
}

/// NLOS iff the filtered probability is at least one half.
pub fn decide(state: &LpfState) -> Condition {
    decide_probability(state.filtered)
}

pub fn decide_probability(p: f64) -> Condition {
    if p >= 0.5 {
        Condition::Nlos
    } else {
        Condition::Los
    }
}

/// Number of updates with constant input `input` until the decision differs
/// from the decision at `state`, by iterating the filter. `None` if it never
/// flips within `limit` updates.
pub fn simulated_flip_updates(state: LpfState, input: f64, limit: usize) -> Option<usize> {
    let start = decide(&state);
    let mut s = state;
    for n in 1..=limit {
        s = lpf_update(s, input);
        if decide(&s) != start {
            return Some(n);
        }
    }
    None
}

/// Closed form of [`simulated_flip_updates`]: after `n` updates the state is
/// `input + (start - input) · weightⁿ`, so the flip happens at the first `n`
/// where that expression crosses one half.
pub fn closed_form_flip_updates(start: f64, input: f64, weight: f64) -> Option<usize> {
    let from = decide_probability(start);
    if decide_probability(input) == from || !(0.0..1.0).contains(&weight) {
        return None;
    }
    if input == 0.5 && weight > 0.0 {
        // Approaches the threshold from below without reaching it.
        return None;
    }
    if weight == 0.0 {
        return Some(1);
    }
    // Solve |start - input| · wⁿ against |0.5 - input|.
    let ratio = (0.5 - input).abs() / (start - input).abs();
    let n_real = ratio.ln() / weight.ln();
    let mut n = n_real.ceil().max(1.0) as usize;
    let at = |n: usize| input + (start - input) * weight.powi(n as i32);
    // The tie at exactly 0.5 counts as NLOS, so a rising filter flips on
    // reaching 0.5 and a falling one only once strictly below.
    let flipped = |v: f64| decide_probability(v) != from;
    while n > 1 && flipped(at(n - 1)) {
        n -= 1;
    }
    while !flipped(at(n)) {
        n += 1;
    }
    Some(n)
}

/// Filter state and latest decision of every anchor.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AnchorBelief {
    entries: BTreeMap<AnchorId, BeliefEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BeliefEntry {
    pub lpf: LpfState,
    pub decision: Condition,
    /// Raw classifier output of the latest update.
    pub last_raw: Option<f64>,
}

impl AnchorBelief {
    /// Fresh beliefs at the prior for every anchor.
    pub fn new(anchors: impl IntoIterator<Item = AnchorId>, weight: f64) -> Self {
        let lpf = LpfState::new(LpfState::PRIOR, weight);
        let entry = BeliefEntry { lpf, decision: decide(&lpf), last_raw: None };
        Self { entries: anchors.into_iter().map(|a| (a, entry)).collect() }
    }

    pub fn get(&self, anchor: AnchorId) -> Option<&BeliefEntry> {
        self.entries.get(&anchor)
    }

    pub fn iter(&self) -> impl Iterator<Item = (AnchorId, &BeliefEntry)> {
        self.entries.iter().map(|(&a, e)| (a, e))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Filtered NLOS probability per anchor.
    pub fn probabilities(&self) -> BTreeMap<AnchorId, f64> {
        self.entries.iter().map(|(&a, e)| (a, e.lpf.filtered)).collect()
    }

    pub fn decisions(&self) -> BTreeMap<AnchorId, Condition> {
        self.entries.iter().map(|(&a, e)| (a, e.decision)).collect()
    }

    /// Feeds one raw classifier output into an anchor's filter.
    pub fn update_probability(&mut self, anchor: AnchorId, p: f64) -> Result<Condition, ClassifierError> {
        if !(0.0..=1.0).contains(&p) {
            return Err(ClassifierError::BadProbability(p));
        }
        let e = self.entries.get_mut(&anchor).ok_or(ClassifierError::UnknownAnchor(anchor))?;
        e.lpf = lpf_update(e.lpf, p);
        e.decision = decide(&e.lpf);
        e.last_raw = Some(p);
        Ok(e.decision)
    }
}

/// Classifies `ecir` and feeds the result into `anchor`'s filter.
pub fn update_beliefs(
    beliefs: &mut AnchorBelief,
    model: &LosModel,
    anchor: AnchorId,
    ecir: &Ecir,
) -> Result<Condition, ClassifierError> {
    if beliefs.get(anchor).is_none() {
        return Err(ClassifierError::UnknownAnchor(anchor));
    }
    let p = classify_raw(model, ecir)?;
    beliefs.update_probability(anchor, p)
}

/// First-path delay range used for synthetic frames, ns.
pub const SYNTH_DELAY_RANGE: (f64, f64) = (300.0, 850.0);

/// Synthesizes a frame for `pose` at a seeded random delay and extracts its eCIR.
pub fn synth_ecir(synth: &CirSynthConfig, det: &DetectionConfig, pose: Pose, seed: u64) -> Result<Ecir, ClassifierError> {
    let (frame, diag) = synth_frame(synth, det, pose, seed)?;
    debug_assert!(diag.fp_index + 130 <= CIR_LEN);
    extract_ecir(&frame, &diag).map_err(|_| ClassifierError::Synthesis("window"))
}

/// The full CIR frame and diagnostics behind [`synth_ecir`] for the same seed.
pub fn synth_frame(
    synth: &CirSynthConfig,
    det: &DetectionConfig,
    pose: Pose,
    seed: u64,
) -> Result<(CirFrame, Diagnostics), ClassifierError> {
    use rand::Rng;
    let mut rng = rng_from_seed(derive_seed(seed, 0xEC1));
    let delay = rng.random_range(SYNTH_DELAY_RANGE.0..SYNTH_DELAY_RANGE.1).round();
    let frame = synth_cir_for_pose(synth, pose, delay, seed).map_err(|_| ClassifierError::Synthesis("delay"))?;
    let diag = compute_diagnostics(&frame, det).map_err(|_| ClassifierError::Synthesis("no first path"))?;
    Ok((frame, diag))
}

/// Pose and seed of every sample in [`synth_ecir_dataset`], in order.
pub fn dataset_plan(n_per_class: usize, seed: u64) -> Vec<(Pose, u64)> {
    let mut out = Vec::with_capacity(2 * n_per_class);
    for i in 0..n_per_class {
        let pocket = i % 4 == 3;
        let los = if pocket { Pose::Front } else { Pose::Los };
        let nlos = if pocket { Pose::Back } else { Pose::Nlos };
        out.push((los, derive_seed(seed, 2 * i as u64)));
        out.push((nlos, derive_seed(seed, 2 * i as u64 + 1)));
    }
    out
}

/// `n_per_class` LOS and NLOS eCIRs, interleaved LOS, NLOS, LOS, ...
/// Pocket poses contribute a quarter of each class.
pub fn synth_ecir_dataset(
    synth: &CirSynthConfig,
    det: &DetectionConfig,
    n_per_class: usize,
    seed: u64,
) -> Result<Vec<Ecir>, ClassifierError> {
    dataset_plan(n_per_class, seed).into_iter().map(|(pose, s)| synth_ecir(synth, det, pose, s)).collect()
}

/// Fraction of predictions whose decision matches the truth.
pub fn accuracy(predictions: &[f64], truth: &[Condition]) -> f64 {
    if predictions.is_empty() {
        return 0.0;
    }
    let ok = predictions.iter().zip(truth).filter(|(&p, &t)| decide_probability(p) == t).count();
    ok as f64 / predictions.len() as f64
}

/// Decisions after low-pass filtering a stream of raw outputs, starting from
/// the prior.
pub fn filter_stream(raw: &[f64], weight: f64) -> Vec<f64> {
    let mut s = LpfState::new(LpfState::PRIOR, weight);
    raw.iter()
        .map(|&p| {
            s = lpf_update(s, p);
            s.filtered
        })
        .collect()
}
