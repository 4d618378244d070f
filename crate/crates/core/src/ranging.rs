//! DS-TWR time-of-flight and DL-TDoA round simulation.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
#[allow(unused_imports)] // float methods are inherent once std is linked
use num_traits::Float;
use rand::Rng;

use crate::channel::RangeErrorModel;
use crate::rng::{derive_seed, gaussian, rng_from_seed};
use crate::scenario::WorldLayout;
use crate::{AnchorId, Condition, Point2, C_CM_PER_NS, C_M_PER_NS};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RangingError {
    #[error("DS-TWR denominator must be positive, got {0}")]
    NonPositiveDenominator(f64),
    #[error("negative distance {0} m")]
    NegativeDistance(f64),
    #[error("no condition given for anchor {0}")]
    MissingCondition(AnchorId),
    #[error("device position ({0}, {1}) is outside the area")]
    OutsideArea(f64, f64),
}

/// The four intervals of a double-sided two-way ranging exchange, ns.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TwrTimestamps {
    pub t_round1: f64,
    pub t_reply1: f64,
    pub t_round2: f64,
    pub t_reply2: f64,
}

impl TwrTimestamps {
    pub fn new(t_round1: f64, t_reply1: f64, t_round2: f64, t_reply2: f64) -> Self {
        Self { t_round1, t_reply1, t_round2, t_reply2 }
    }
}

/// Time of flight from the asymmetric DS-TWR formula, ns.
pub fn ds_twr_tof(ts: &TwrTimestamps) -> Result<f64, RangingError> {
    let den = (ts.t_round1 + ts.t_round2) + (ts.t_reply1 + ts.t_reply2);
    if !(den > 0.0) {
        return Err(RangingError::NonPositiveDenominator(den));
    }
    Ok(diff_of_products(ts.t_round1, ts.t_round2, ts.t_reply1, ts.t_reply2) / den)
}

/// `a * b - c * d` with the rounding error of both products folded back in,
/// so near-equal products do not cancel catastrophically.
fn diff_of_products(a: f64, b: f64, c: f64, d: f64) -> f64 {
    let ab = a * b;
    let cd = c * d;
    let err_ab = a.mul_add(b, -ab);
    let err_cd = c.mul_add(d, -cd);
    (ab - cd) + (err_ab - err_cd)
}

/// Clock and timestamp settings for the DS-TWR simulation.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct TwrConfig {
    /// Timestamp resolution, ps. Zero disables quantization.
    pub tick_ps: f64,
    /// Clock offset of (initiator, responder) from true frequency, ppm.
    pub drift_ppm: (f64, f64),
    /// Nominal reply delays of (responder, initiator) in local time, ns.
    pub reply_delays_ns: (f64, f64),
}

impl Default for TwrConfig {
    fn default() -> Self {
        Self { tick_ps: 15.65, drift_ppm: (0.0, 0.0), reply_delays_ns: (300_000.0, 300_000.0) }
    }
}

/// Simulates one DS-TWR exchange between an initiator A and responder B.
///
/// Each device counts in its own skewed clock; absolute timestamps get a
/// random phase against the tick grid and are floored to it.
/// Returns the measured intervals and the estimated distance in metres.
pub fn simulate_dstwr(
    true_distance_m: f64,
    config: &TwrConfig,
    seed: u64,
) -> Result<(TwrTimestamps, f64), RangingError> {
    if !(true_distance_m >= 0.0) {
        return Err(RangingError::NegativeDistance(true_distance_m));
    }
    let mut rng = rng_from_seed(derive_seed(seed, 0x7357));
    let tof = true_distance_m / C_M_PER_NS;
    let ka = 1.0 + config.drift_ppm.0 * 1e-6;
    let kb = 1.0 + config.drift_ppm.1 * 1e-6;
    let (reply_b, reply_a) = config.reply_delays_ns;

    // True times of the three messages, initiator sends the first at 0.
    let rim_tx = 0.0;
    let rim_rx = rim_tx + tof;
    let rrm_tx = rim_rx + reply_b / kb;
    let rrm_rx = rrm_tx + tof;
    let rfm_tx = rrm_rx + reply_a / ka;
    let rfm_rx = rfm_tx + tof;

    let phase_a = rng.random::<f64>() * 1e6;
    let phase_b = rng.random::<f64>() * 1e6;
    let tick = config.tick_ps * 1e-3;
    let stamp = |t: f64, k: f64, phase: f64| {
        let local = phase + t * k;
        if tick > 0.0 {
            (local / tick).floor() * tick
        } else {
            local
        }
    };
    let a = [stamp(rim_tx, ka, phase_a), stamp(rrm_rx, ka, phase_a), stamp(rfm_tx, ka, phase_a)];
    let b = [stamp(rim_rx, kb, phase_b), stamp(rrm_tx, kb, phase_b), stamp(rfm_rx, kb, phase_b)];
    let ts = TwrTimestamps {
        t_round1: a[1] - a[0],
        t_reply1: b[1] - b[0],
        t_round2: b[2] - b[1],
        t_reply2: a[2] - a[1],
    };
    let est = ds_twr_tof(&ts)? * C_M_PER_NS;
    Ok((ts, est))
}

/// One responder's time difference against the initiator.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TdoaMeasurement {
    pub responder_id: AnchorId,
    /// Responder arrival minus initiator arrival, ns.
    pub tdoa: f64,
    /// `tdoa` converted to distance, cm.
    pub range_diff: f64,
}

impl TdoaMeasurement {
    pub fn from_range_diff(responder_id: AnchorId, range_diff_cm: f64) -> Self {
        Self { responder_id, tdoa: range_diff_cm / C_CM_PER_NS, range_diff: range_diff_cm }
    }
}

/// One DL-TDoA round as received by the device.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TdoaSet {
    pub round_id: u64,
    pub initiator_id: AnchorId,
    pub measurements: Vec<TdoaMeasurement>,
    /// Simulation ground truth of every anchor path in this round.
    pub condition_truth: BTreeMap<AnchorId, Condition>,
}

impl TdoaSet {
    pub fn measurement(&self, responder: AnchorId) -> Option<&TdoaMeasurement> {
        self.measurements.iter().find(|m| m.responder_id == responder)
    }

    pub fn is_localizable(&self) -> bool {
        self.measurements.len() >= 3
    }
}

/// Settings of the DL-TDoA simulation.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct TdoaConfig {
    /// Residual anchor synchronization error per measurement, ns.
    pub sync_sigma_ns: f64,
}

impl Default for TdoaConfig {
    fn default() -> Self {
        Self { sync_sigma_ns: 0.1 }
    }
}

/// Simulates one DL-TDoA round heard at `md_pos`.
///
/// Every anchor-device path gets an error drawn from `err_model` for its
/// condition; a responder's range difference carries its own path error minus
/// the initiator path error, plus the synchronization residual.
pub fn simulate_dltdoa_round(
    layout: &WorldLayout,
    md_pos: Point2,
    conditions: &BTreeMap<AnchorId, Condition>,
    err_model: &RangeErrorModel,
    config: &TdoaConfig,
    round_id: u64,
    seed: u64,
) -> Result<TdoaSet, RangingError> {
    if !layout.area().contains(md_pos) {
        return Err(RangingError::OutsideArea(md_pos.x, md_pos.y));
    }
    let cond_of = |id: AnchorId| conditions.get(&id).copied().ok_or(RangingError::MissingCondition(id));
    let mut truth = BTreeMap::new();
    for a in layout.anchors() {
        truth.insert(a.id, cond_of(a.id)?);
    }
    let mut rng = rng_from_seed(derive_seed(seed, round_id));
    let init = layout.initiator();
    let d_init = md_pos.distance(init.position) * 100.0;
    let e_init = err_model.draw(truth[&init.id], &mut rng);
    let measurements = layout
        .responders()
        .map(|r| {
            let d_r = md_pos.distance(r.position) * 100.0;
            let e_r = err_model.draw(truth[&r.id], &mut rng);
            let sync = gaussian(&mut rng, 0.0, config.sync_sigma_ns) * C_CM_PER_NS;
            TdoaMeasurement::from_range_diff(r.id, d_r - d_init + e_r - e_init + sync)
        })
        .collect();
    Ok(TdoaSet { round_id, initiator_id: init.id, measurements, condition_truth: truth })
}
