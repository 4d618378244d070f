use alloc::collections::VecDeque;

use crate::geometry::{centroid, Point2};

/// A position tagged with the round that produced it.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Fix {
    pub round_id: u64,
    pub position: Point2,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct OutlierConfig {
    pub buffer_size: usize,
    pub threshold_cm: f64,
    /// Rounds of motion allowed on top of the lag of the inlier mean.
    pub interval_scale: f64,
}

impl Default for OutlierConfig {
    fn default() -> Self {
        Self { buffer_size: 10, threshold_cm: 50.0, interval_scale: 2.0 }
    }
}

/// Stream buffer (every fix) and inlier buffer (accepted fixes).
#[derive(Debug, Clone, PartialEq)]
pub struct LocalizerState {
    pub config: OutlierConfig,
    dsb: VecDeque<Fix>,
    idb: VecDeque<Fix>,
    pub last_position: Option<Point2>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OutlierVerdict {
    pub accepted: bool,
    /// Distance to the inlier mean, cm. Zero while the inlier buffer is empty.
    pub distance_cm: f64,
    pub threshold_cm: f64,
    /// Motion estimate, cm per round.
    pub speed_cm_per_round: f64,
}

impl LocalizerState {
    pub fn new(config: OutlierConfig) -> Self {
        let cap = config.buffer_size.max(1);
        Self { config, dsb: VecDeque::with_capacity(cap), idb: VecDeque::with_capacity(cap), last_position: None }
    }

    pub fn dsb(&self) -> &VecDeque<Fix> {
        &self.dsb
    }

    pub fn idb(&self) -> &VecDeque<Fix> {
        &self.idb
    }

    /// Magnitude of the mean displacement vector between consecutive stream
    /// entries, cm per round. Spikes that return cancel out.
    pub fn speed_cm_per_round(&self) -> f64 {
        let (Some(first), Some(last)) = (self.dsb.front(), self.dsb.back()) else { return 0.0 };
        let rounds = last.round_id.saturating_sub(first.round_id);
        if rounds == 0 {
            return 0.0;
        }
        last.position.distance(first.position) * 100.0 / rounds as f64
    }

    fn push(buf: &mut VecDeque<Fix>, cap: usize, fix: Fix) {
        if buf.len() == cap.max(1) {
            buf.pop_front();
        }
        buf.push_back(fix);
    }
}

impl Default for LocalizerState {
    fn default() -> Self {
        Self::new(OutlierConfig::default())
    }
}

/// Accepts `candidate` if it is close enough to the inlier mean, allowing for
/// walking motion since the inliers were recorded. The motion estimate is
/// taken before the candidate enters the stream buffer.
pub fn outlier_filter(state: &mut LocalizerState, candidate: Fix) -> OutlierVerdict {
    let v = state.speed_cm_per_round();
    let cap = state.config.buffer_size;
    LocalizerState::push(&mut state.dsb, cap, candidate);

    let verdict = match centroid(state.idb.iter().map(|f| f.position)) {
        None => OutlierVerdict { accepted: true, distance_cm: 0.0, threshold_cm: state.config.threshold_cm, speed_cm_per_round: v },
        Some(mean) => {
            let n = state.idb.len() as f64;
            let mean_round = state.idb.iter().map(|f| f.round_id as f64).sum::<f64>() / n;
            let lag = (candidate.round_id as f64 - mean_round).max(0.0);
            let threshold = state.config.threshold_cm + v * (lag + state.config.interval_scale);
            let distance = candidate.position.distance(mean) * 100.0;
            OutlierVerdict { accepted: distance <= threshold, distance_cm: distance, threshold_cm: threshold, speed_cm_per_round: v }
        }
    };
    if verdict.accepted {
        LocalizerState::push(&mut state.idb, cap, candidate);
        state.last_position = Some(candidate.position);
    }
    verdict
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fix(r: u64, x: f64, y: f64) -> Fix {
        Fix { round_id: r, position: Point2::new(x, y) }
    }

    #[test]
    fn first_candidate_accepted() {
        let mut s = LocalizerState::default();
        assert!(outlier_filter(&mut s, fix(0, 100.0, -3.0)).accepted);
        assert_eq!(s.idb().len(), 1);
    }

    #[test]
    fn stationary_jump_rejected() {
        let mut s = LocalizerState::default();
        for r in 0..12 {
            assert!(outlier_filter(&mut s, fix(r, 4.0 + 0.01 * (r % 3) as f64, 4.0)).accepted);
        }
        let v = outlier_filter(&mut s, fix(12, 6.0, 4.0));
        assert!(!v.accepted, "{v:?}");
        assert_eq!(s.idb().len(), 10);
        assert_eq!(s.idb().back().unwrap().round_id, 11);
        for r in 13..20 {
            assert!(outlier_filter(&mut s, fix(r, 4.0, 4.01)).accepted);
        }
    }

    #[test]
    fn steady_walk_accepted() {
        let mut s = LocalizerState::default();
        let mut rejected = 0;
        for r in 0..30 {
            if !outlier_filter(&mut s, fix(r, 1.0, 0.5 + 0.7 * r as f64)).accepted {
                rejected += 1;
            }
        }
        // Only the second fix, before any motion evidence exists.
        assert!(rejected <= 1, "{rejected}");
    }

    #[test]
    fn buffers_evict_oldest() {
        let mut s = LocalizerState::new(OutlierConfig { buffer_size: 3, ..Default::default() });
        for r in 0..5 {
            outlier_filter(&mut s, fix(r, 0.0, 0.0));
        }
        let rounds: alloc::vec::Vec<u64> = s.dsb().iter().map(|f| f.round_id).collect();
        assert_eq!(rounds, [2, 3, 4]);
        assert_eq!(s.idb().len(), 3);
    }
}
