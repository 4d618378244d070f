//! Channel impulse response synthesis, first-path diagnostics and the
//! condition-dependent TDoA error model.
//!
//! Frames mimic the accumulator dump of a DW1000-class receiver: 1016 complex
//! taps at 1 ns spacing with 16-bit real and imaginary parts. LOS frames carry
//! one dominant first path followed by a fast exponential tail; NLOS frames an
//! attenuated first path, a slowly decaying diffuse tail and a handful of
//! later multipath clusters.

use alloc::vec::Vec;
use core::f64::consts::PI;
#[allow(unused_imports)] // float methods are inherent once std is linked
use num_traits::Float;
use rand::Rng;
use rand_distr::{Distribution, Exp};

use crate::rng::{derive_seed, gaussian, rng_from_seed, std_normal};
use crate::{Condition, Pose};

/// Number of taps in one CIR frame.
pub const CIR_LEN: usize = 1016;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ChannelError {
    #[error("first-path delay {0} ns is outside the representable window")]
    DelayOutOfWindow(f64),
    #[error("no first path: no sample crosses the detection threshold")]
    NoFirstPath,
    #[error("first path at {0} leaves no room for the first-path amplitudes")]
    FirstPathAtEdge(usize),
    #[error("CIR frame must have {CIR_LEN} samples, got {0}")]
    BadLength(usize),
    #[error("invalid range error model: {0}")]
    BadModel(&'static str),
}

/// One complex CIR tap with 16-bit components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CirSample {
    pub re: i16,
    pub im: i16,
}

impl CirSample {
    pub fn amplitude(self) -> f64 {
        (self.re as f64).hypot(self.im as f64)
    }
}

/// One received message's channel impulse response.
#[derive(Debug, Clone, PartialEq)]
pub struct CirFrame {
    samples: Vec<CirSample>,
    /// Ground-truth propagation condition (simulation label).
    pub condition: Condition,
}

impl CirFrame {
    pub fn new(samples: Vec<CirSample>, condition: Condition) -> Result<Self, ChannelError> {
        if samples.len() != CIR_LEN {
            return Err(ChannelError::BadLength(samples.len()));
        }
        Ok(Self { samples, condition })
    }

    /// Builds a frame from real amplitudes (imaginary parts zero), saturating
    /// at the 16-bit range.
    pub fn from_amplitudes(amplitudes: &[f64], condition: Condition) -> Result<Self, ChannelError> {
        let samples = amplitudes.iter().map(|&a| CirSample { re: quantize(a), im: 0 }).collect();
        Self::new(samples, condition)
    }

    pub fn samples(&self) -> &[CirSample] {
        &self.samples
    }

    pub fn amplitude(&self, index: usize) -> f64 {
        self.samples[index].amplitude()
    }

    pub fn amplitudes(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.amplitude()).collect()
    }
}

fn quantize(x: f64) -> i16 {
    x.round().clamp(i16::MIN as f64, i16::MAX as f64) as i16
}

/// Channel diagnostics reported alongside a CIR.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Diagnostics {
    pub fp_index: usize,
    /// Amplitudes at `fp_index + 1..=fp_index + 3`.
    pub fp_ampl: [f64; 3],
    pub max_noise: f64,
}

/// Parameters of the sample-level CIR synthesizer.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct CirSynthConfig {
    /// Standard deviation of each noise component.
    pub noise_sigma: f64,
    /// Median LOS first-path amplitude.
    pub los_peak: f64,
    /// Log-normal spread of the first-path amplitude between frames.
    pub peak_spread: f64,
    /// e-folding length of the LOS tail, samples.
    pub los_decay: f64,
    /// NLOS first-path amplitude relative to the LOS first path.
    pub nlos_first_peak_factor: f64,
    /// Diffuse NLOS tail level relative to the LOS first path.
    pub nlos_diffuse_level: f64,
    /// e-folding length of the diffuse NLOS tail, samples.
    pub nlos_decay: f64,
    pub nlos_min_clusters: usize,
    pub nlos_max_clusters: usize,
    /// Mean spacing of the Poisson cluster arrivals, samples.
    pub nlos_cluster_spacing: f64,
    /// Cluster peak range relative to the LOS first path.
    pub nlos_cluster_level: (f64, f64),
    pub nlos_cluster_decay: f64,
    /// Relative per-tap fading of the deterministic envelope.
    pub fading: f64,
    /// First-path amplitude scale per pose (LOS, NLOS, FRONT, BACK).
    pub pose_gain: [f64; 4],
    /// Probability that a frame takes the multipath profile of the other
    /// condition (partly covered antenna, strong reflector) while keeping
    /// its label.
    pub ambiguous_fraction: f64,
}

impl Default for CirSynthConfig {
    fn default() -> Self {
        Self {
            noise_sigma: 350.0,
            los_peak: 12_000.0,
            peak_spread: 0.1,
            los_decay: 27.5,
            nlos_first_peak_factor: 0.35,
            nlos_diffuse_level: 0.3,
            nlos_decay: 300.0,
            nlos_min_clusters: 3,
            nlos_max_clusters: 8,
            nlos_cluster_spacing: 20.0,
            nlos_cluster_level: (0.15, 0.45),
            nlos_cluster_decay: 10.0,
            fading: 0.12,
            pose_gain: [1.0, 1.0, 0.85, 0.9],
            ambiguous_fraction: 0.12,
        }
    }
}

/// Leading-edge and noise estimation settings for first-path detection.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct DetectionConfig {
    /// A tap is the first path when it exceeds `factor × running noise maximum`.
    pub factor: f64,
    /// Number of leading taps used to seed the noise estimate.
    pub warmup: usize,
    /// Taps after a crossing that must also exceed the noise estimate for
    /// it to count as the first path. Suppresses isolated noise spikes.
    pub confirm: usize,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self { factor: 1.6, warmup: 256, confirm: 1 }
    }
}

/// Earliest first-path index the synthesizer accepts.
pub fn min_first_path(det: &DetectionConfig) -> usize {
    det.warmup.max(5)
}

/// Latest first-path index the synthesizer accepts (the eCIR window must fit).
pub const MAX_FIRST_PATH: usize = CIR_LEN - 135;

/// Synthesizes a CIR for `condition` with the first path at `first_path_delay` ns.
pub fn synth_cir(
    config: &CirSynthConfig,
    condition: Condition,
    first_path_delay: f64,
    seed: u64,
) -> Result<CirFrame, ChannelError> {
    synth_cir_with_gain(config, condition, 1.0, first_path_delay, seed)
}

/// Same as [`synth_cir`] but with the pose-dependent first-path gain applied.
pub fn synth_cir_for_pose(
    config: &CirSynthConfig,
    pose: Pose,
    first_path_delay: f64,
    seed: u64,
) -> Result<CirFrame, ChannelError> {
    let gain = config.pose_gain[pose as usize];
    synth_cir_with_gain(config, pose.condition(), gain, first_path_delay, seed)
}

fn synth_cir_with_gain(
    config: &CirSynthConfig,
    condition: Condition,
    gain: f64,
    first_path_delay: f64,
    seed: u64,
) -> Result<CirFrame, ChannelError> {
    let fp = first_path_delay.round();
    let lo = min_first_path(&DetectionConfig::default()) as f64;
    if !fp.is_finite() || fp < lo || fp > MAX_FIRST_PATH as f64 {
        return Err(ChannelError::DelayOutOfWindow(first_path_delay));
    }
    let fp = fp as usize;
    if !(0.0..=1.0).contains(&config.ambiguous_fraction) {
        return Err(ChannelError::BadModel("ambiguous fraction"));
    }
    let swapped = rng_from_seed(derive_seed(seed, 0xA3B)).random_bool(config.ambiguous_fraction);
    let profile = if swapped { condition.opposite() } else { condition };
    let mut rng = rng_from_seed(derive_seed(seed, condition as u64 + 0xC1));
    let peak = gain * config.los_peak * gaussian(&mut rng, 0.0, config.peak_spread).exp();

    let mut envelope = alloc::vec![0.0f64; CIR_LEN];
    match profile {
        Condition::Los => {
            envelope[fp - 1] = 0.05 * peak;
            for (k, e) in envelope[fp..].iter_mut().enumerate() {
                *e = peak * (-(k as f64) / config.los_decay).exp();
            }
        }
        Condition::Nlos => {
            let first = config.nlos_first_peak_factor * peak;
            envelope[fp - 1] = 0.05 * first;
            let diffuse = config.nlos_diffuse_level * peak;
            for (k, e) in envelope[fp..].iter_mut().enumerate() {
                let k = k as f64;
                let ramp = 1.0 - (-k / 4.0).exp();
                *e = first * (-k / 3.0).exp() + diffuse * ramp * (-k / config.nlos_decay).exp();
            }
            let span = config.nlos_max_clusters.saturating_sub(config.nlos_min_clusters) + 1;
            let clusters = config.nlos_min_clusters + rng.random_range(0..span);
            let gap = Exp::new(1.0 / config.nlos_cluster_spacing.max(1e-9)).map_err(|_| ChannelError::BadModel("cluster spacing"))?;
            let mut delay = 0.0;
            let (lvl_lo, lvl_hi) = config.nlos_cluster_level;
            for _ in 0..clusters {
                delay += 2.0 + gap.sample(&mut rng);
                let start = fp + delay.round() as usize;
                if start >= CIR_LEN {
                    break;
                }
                let level = peak * (lvl_lo + (lvl_hi - lvl_lo) * rng.random::<f64>());
                for (k, e) in envelope[start..].iter_mut().enumerate() {
                    *e += level * (-(k as f64) / config.nlos_cluster_decay).exp();
                }
            }
        }
    }

    let samples = envelope
        .iter()
        .enumerate()
        .map(|(i, &env)| {
            let (mut re, mut im) = (0.0, 0.0);
            if env > 0.0 {
                // The direct path itself does not fade.
                let fading = if i == fp { 0.0 } else { config.fading };
                let fade = (1.0 + fading * std_normal(&mut rng)).max(0.0);
                let phase = rng.random::<f64>() * 2.0 * PI;
                re = env * fade * phase.cos();
                im = env * fade * phase.sin();
            }
            re += config.noise_sigma * std_normal(&mut rng);
            im += config.noise_sigma * std_normal(&mut rng);
            CirSample { re: quantize(re), im: quantize(im) }
        })
        .collect();
    CirFrame::new(samples, condition)
}

/// Detects the first path and measures the noise floor.
///
/// The noise estimate is the running maximum amplitude, seeded over the first
/// `warmup` taps. The first tap exceeding `factor` times the estimate, and
/// followed by `confirm` taps above the estimate, is the first path;
/// everything before it is the noise region. Isolated spikes above the
/// threshold and rising edges below it are left out of the estimate.
pub fn compute_diagnostics(frame: &CirFrame, det: &DetectionConfig) -> Result<Diagnostics, ChannelError> {
    let amps = frame.amplitudes();
    let warmup = det.warmup.clamp(1, CIR_LEN - 1);
    let mut noise = amps[..warmup].iter().copied().fold(0.0, f64::max);
    let mut fp = None;
    for (i, &a) in amps.iter().enumerate().skip(warmup) {
        if a <= noise {
            continue;
        }
        let end = (i + 1 + det.confirm).min(amps.len());
        let confirmed = amps[i + 1..end].iter().all(|&b| b > noise);
        let crossing = a > det.factor * noise;
        match (crossing, confirmed) {
            (true, true) => {
                fp = Some(i);
                break;
            }
            // Rising edge still under the threshold, or an isolated spike:
            // neither belongs to the floor.
            (false, true) | (true, false) => {}
            (false, false) => noise = a,
        }
    }
    let fp_index = fp.ok_or(ChannelError::NoFirstPath)?;
    if fp_index + 3 >= CIR_LEN {
        return Err(ChannelError::FirstPathAtEdge(fp_index));
    }
    Ok(Diagnostics {
        fp_index,
        fp_ampl: [amps[fp_index + 1], amps[fp_index + 2], amps[fp_index + 3]],
        max_noise: if noise > 0.0 { noise } else { f64::MIN_POSITIVE },
    })
}

/// Number of taps in `fp_index + 1 ..= fp_index + window` whose amplitude
/// exceeds `max_noise`.
pub fn count_above_noise(frame: &CirFrame, diag: &Diagnostics, window: usize) -> usize {
    let end = (diag.fp_index + window + 1).min(CIR_LEN);
    frame.samples[diag.fp_index + 1..end].iter().filter(|s| s.amplitude() > diag.max_noise).count()
}

/// Per-path TDoA range error statistics, centimetres.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct RangeErrorModel {
    pub los_bias: f64,
    pub los_sigma: f64,
    pub nlos_bias: f64,
    pub nlos_sigma: f64,
}

impl Default for RangeErrorModel {
    fn default() -> Self {
        Self { los_bias: 0.0, los_sigma: 4.0, nlos_bias: 47.0, nlos_sigma: 26.0 }
    }
}

impl RangeErrorModel {
    pub fn validate(&self) -> Result<(), ChannelError> {
        if !(self.los_sigma > 0.0) || !(self.nlos_sigma > 0.0) {
            return Err(ChannelError::BadModel("sigmas must be positive"));
        }
        if self.nlos_sigma <= self.los_sigma {
            return Err(ChannelError::BadModel("NLOS sigma must exceed LOS sigma"));
        }
        if !self.los_bias.is_finite() || !self.nlos_bias.is_finite() {
            return Err(ChannelError::BadModel("biases must be finite"));
        }
        Ok(())
    }

    /// A model with every sigma and bias at zero.
    pub fn noiseless() -> Self {
        Self { los_bias: 0.0, los_sigma: 0.0, nlos_bias: 0.0, nlos_sigma: 0.0 }
    }

    pub fn params(&self, condition: Condition) -> (f64, f64) {
        match condition {
            Condition::Los => (self.los_bias, self.los_sigma),
            Condition::Nlos => (self.nlos_bias, self.nlos_sigma),
        }
    }

    /// One path error draw from an existing generator, centimetres.
    pub fn draw<R: Rng + ?Sized>(&self, condition: Condition, rng: &mut R) -> f64 {
        let (bias, sigma) = self.params(condition);
        gaussian(rng, bias, sigma)
    }
}

/// One seeded path error draw, centimetres.
pub fn sample_range_bias(model: &RangeErrorModel, condition: Condition, seed: u64) -> f64 {
    let mut rng = rng_from_seed(derive_seed(seed, 0xB1A5));
    model.draw(condition, &mut rng)
}
