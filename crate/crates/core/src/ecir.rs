//! Effective CIR window and the serial transfer latency budget.

use alloc::vec::Vec;

use crate::channel::{CirFrame, Diagnostics, CIR_LEN};
use crate::Condition;

/// Taps kept before the first path.
pub const ECIR_MARGIN: usize = 5;
/// Taps kept from the first path onward.
pub const ECIR_SIGNAL: usize = 130;
/// Total eCIR length.
pub const ECIR_LEN: usize = ECIR_MARGIN + ECIR_SIGNAL;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EcirError {
    #[error("eCIR window at first path {0} does not fit in the frame")]
    WindowOutOfBounds(usize),
    #[error("eCIR must have {ECIR_LEN} amplitudes, got {0}")]
    BadLength(usize),
    #[error("sample count must be positive")]
    ZeroSamples,
}

/// The 135 amplitudes starting five taps before the first path.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Ecir {
    amplitudes: Vec<f64>,
    /// Absolute CIR index of element 0.
    pub origin_index: usize,
    /// Label carried over from the source frame.
    pub condition: Condition,
}

impl Ecir {
    pub fn new(amplitudes: Vec<f64>, origin_index: usize, condition: Condition) -> Result<Self, EcirError> {
        if amplitudes.len() != ECIR_LEN {
            return Err(EcirError::BadLength(amplitudes.len()));
        }
        Ok(Self { amplitudes, origin_index, condition })
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }

    pub fn fp_index(&self) -> usize {
        self.origin_index + ECIR_MARGIN
    }
}

/// Extracts the eCIR in noise-relative units (amplitude / max_noise).
pub fn extract_ecir(frame: &CirFrame, diag: &Diagnostics) -> Result<Ecir, EcirError> {
    extract(frame, diag, diag.max_noise)
}

/// Extracts the eCIR without normalization.
pub fn extract_ecir_raw(frame: &CirFrame, diag: &Diagnostics) -> Result<Ecir, EcirError> {
    extract(frame, diag, 1.0)
}

fn extract(frame: &CirFrame, diag: &Diagnostics, scale: f64) -> Result<Ecir, EcirError> {
    let origin = window_origin(diag.fp_index, CIR_LEN)?;
    let amps = frame.samples()[origin..diag.fp_index + ECIR_SIGNAL].iter().map(|s| s.amplitude() / scale).collect();
    Ecir::new(amps, origin, frame.condition)
}

/// Extracts the eCIR from a full amplitude profile, e.g. one read from a
/// dataset file. `normalize` divides by `max_noise` as [`extract_ecir`] does.
pub fn ecir_from_amplitudes(
    amplitudes: &[f64],
    diag: &Diagnostics,
    condition: Condition,
    normalize: bool,
) -> Result<Ecir, EcirError> {
    let origin = window_origin(diag.fp_index, amplitudes.len())?;
    let scale = if normalize { diag.max_noise } else { 1.0 };
    let amps = amplitudes[origin..diag.fp_index + ECIR_SIGNAL].iter().map(|a| a / scale).collect();
    Ecir::new(amps, origin, condition)
}

fn window_origin(fp: usize, len: usize) -> Result<usize, EcirError> {
    if fp < ECIR_MARGIN || fp + ECIR_SIGNAL > len {
        return Err(EcirError::WindowOutOfBounds(fp));
    }
    Ok(fp - ECIR_MARGIN)
}

/// Transfer latency as a straight line through two measured points.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct LatencyModel {
    /// (samples, ms) for the short transfer.
    pub low: (usize, f64),
    /// (samples, ms) for the full transfer.
    pub high: (usize, f64),
    /// Smallest sample count for which the line is trusted.
    pub valid_min: usize,
}

impl Default for LatencyModel {
    fn default() -> Self {
        Self { low: (135, 17.8), high: (1016, 223.4), valid_min: 60 }
    }
}

impl LatencyModel {
    pub fn per_sample_ms(&self) -> f64 {
        (self.high.1 - self.low.1) / (self.high.0 - self.low.0) as f64
    }

    /// Latency of a zero-length transfer on the fitted line (negative for the defaults).
    pub fn intercept_ms(&self) -> f64 {
        self.low.1 - self.per_sample_ms() * self.low.0 as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Latency {
    pub ms: f64,
    /// Set when `n` was outside the valid range and got clamped.
    pub extrapolated: bool,
}

/// Estimated time to ship `n` CIR samples to the host.
pub fn transfer_latency(n: usize, model: &LatencyModel) -> Result<Latency, EcirError> {
    if n == 0 {
        return Err(EcirError::ZeroSamples);
    }
    let (n0, n1) = (model.low.0 as f64, model.high.0 as f64);
    let clamped = n.clamp(model.valid_min, model.high.0.max(model.valid_min));
    let t = (clamped as f64 - n0) / (n1 - n0);
    // Written as a convex combination so both calibration points come out exact.
    let ms = (1.0 - t) * model.low.1 + t * model.high.1;
    Ok(Latency { ms, extrapolated: clamped != n })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{compute_diagnostics, synth_cir, CirSynthConfig, DetectionConfig};
    use crate::rng::{derive_seed, rng_from_seed};
    use rand::Rng;

    fn diag(fp: usize, max_noise: f64) -> Diagnostics {
        Diagnostics { fp_index: fp, fp_ampl: [0.0; 3], max_noise }
    }

    #[test]
    fn window_at_747() {
        let amps: Vec<f64> = (0..CIR_LEN).map(|i| i as f64).collect();
        let frame = CirFrame::from_amplitudes(&amps, Condition::Los).unwrap();
        let e = extract_ecir_raw(&frame, &diag(747, 1.0)).unwrap();
        assert_eq!(e.origin_index, 742);
        assert_eq!(e.amplitudes().len(), 135);
        assert_eq!(e.amplitudes()[0], 742.0);
        assert_eq!(*e.amplitudes().last().unwrap(), 876.0);
        assert_eq!(e.amplitudes()[5], 747.0);
    }

    #[test]
    fn out_of_bounds_windows() {
        let frame = CirFrame::from_amplitudes(&[1.0; CIR_LEN], Condition::Los).unwrap();
        assert_eq!(extract_ecir(&frame, &diag(4, 1.0)), Err(EcirError::WindowOutOfBounds(4)));
        assert!(extract_ecir(&frame, &diag(886, 1.0)).is_ok());
        assert!(extract_ecir(&frame, &diag(887, 1.0)).is_err());
    }

    #[test]
    fn constant_frame_normalizes_to_ratio() {
        let frame = CirFrame::from_amplitudes(&[1200.0; CIR_LEN], Condition::Nlos).unwrap();
        let e = extract_ecir(&frame, &diag(500, 400.0)).unwrap();
        assert!(e.amplitudes().iter().all(|&a| a == 3.0));
    }

    #[test]
    fn first_path_peak_near_element_five() {
        let cfg = CirSynthConfig::default();
        let det = DetectionConfig::default();
        let mut ok = 0;
        let n = 1000;
        for s in 0..n {
            let cond = if s % 2 == 0 { Condition::Los } else { Condition::Nlos };
            let fp = rng_from_seed(s).random_range(600..800);
            let f = synth_cir(&cfg, cond, fp as f64, derive_seed(s, 11)).unwrap();
            let d = compute_diagnostics(&f, &det).unwrap();
            let e = extract_ecir(&f, &d).unwrap();
            let a = e.amplitudes();
            // Element 5 is the detected first path and stands out of the floor.
            ok += (e.fp_index().abs_diff(fp) <= 2 && a[5] > 1.6 && a[5] > a[3]) as usize;
        }
        assert!(ok as f64 >= 0.99 * n as f64, "{ok}");
    }

    #[test]
    fn nlos_has_more_above_noise_elements() {
        let cfg = CirSynthConfig { ambiguous_fraction: 0.0, ..CirSynthConfig::default() };
        let det = DetectionConfig::default();
        let n = 500;
        let mut wins = 0;
        for s in 0..n {
            let los = synth_cir(&cfg, Condition::Los, 700.0, s).unwrap();
            let nlos = synth_cir(&cfg, Condition::Nlos, 700.0, s).unwrap();
            let count = |f: &CirFrame| {
                let d = compute_diagnostics(f, &det).unwrap();
                extract_ecir(f, &d).unwrap().amplitudes().iter().filter(|&&a| a > 1.0).count()
            };
            wins += (count(&nlos) > count(&los)) as usize;
        }
        assert!(wins as f64 >= 0.95 * n as f64);
    }

    #[test]
    fn latency_calibration_points_exact() {
        let m = LatencyModel::default();
        assert_eq!(transfer_latency(1016, &m).unwrap().ms, 223.4);
        assert_eq!(transfer_latency(135, &m).unwrap().ms, 17.8);
        assert!(!transfer_latency(135, &m).unwrap().extrapolated);
        assert!(transfer_latency(135, &m).unwrap().ms < 200.0);
    }

    #[test]
    fn latency_fit_and_bounds() {
        let m = LatencyModel::default();
        let slope = (223.4 - 17.8) / (1016.0 - 135.0);
        assert!((m.per_sample_ms() - slope).abs() < 1e-12);
        assert!((m.per_sample_ms() - 0.2334).abs() < 1e-4);
        assert!(m.intercept_ms() < 0.0 && (m.intercept_ms() + 13.7).abs() < 0.1);
        assert_eq!(transfer_latency(0, &m), Err(EcirError::ZeroSamples));
        let low = transfer_latency(10, &m).unwrap();
        assert!(low.extrapolated && low.ms > 0.0);
        assert_eq!(low.ms, transfer_latency(60, &m).unwrap().ms);
        assert!(transfer_latency(2000, &m).unwrap().extrapolated);
        let mut prev = f64::MIN;
        for n in 60..=1016 {
            let l = transfer_latency(n, &m).unwrap().ms;
            assert!(l > prev);
            prev = l;
        }
    }
}
