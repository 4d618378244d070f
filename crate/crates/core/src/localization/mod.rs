//! DL-TDoA position solving with NLOS-aware anchor selection and outlier
//! rejection.

mod hull;
mod outlier;
mod select;
mod solver;

pub use hull::{graham_hull, md_inside, Hull};
pub use outlier::{outlier_filter, Fix, LocalizerState, OutlierConfig, OutlierVerdict};
pub use select::{asa_gate, select_anchors, AnchorEstimate, AnchorSubset, AsaMode, SUBSET_SIZE};
pub use solver::{solve_tdoa, Solution, SolverConfig};

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::classifier::AnchorBelief;
use crate::geometry::Point2;
use crate::ranging::TdoaSet;
use crate::scenario::WorldLayout;
use crate::AnchorId;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LocalizationError {
    #[error("a hull needs at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("points are collinear")]
    Collinear,
    #[error("non-finite coordinate")]
    NonFinite,
    #[error("selection needs at least 4 anchors, got {0}")]
    TooFewAnchors(usize),
    #[error("unknown anchor {0}")]
    UnknownAnchor(AnchorId),
    #[error("at least 3 measurements are needed, got {0}")]
    UnderDetermined(usize),
    #[error("no belief for anchor {0}")]
    MissingBelief(AnchorId),
}

pub fn anchor_positions(layout: &WorldLayout) -> BTreeMap<AnchorId, Point2> {
    layout.anchors().iter().map(|a| (a.id, a.position)).collect()
}

/// When anchor selection runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum SelectionPolicy {
    Never,
    Always,
    /// Only while some anchor is believed NLOS.
    Gated,
}

/// The compared localization schemes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Scheme {
    /// Every anchor, no outlier filter.
    Legacy,
    /// Selection in every round, no outlier filter.
    AsaAlways,
    /// Gated selection followed by the outlier filter.
    Full,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Legacy, Scheme::AsaAlways, Scheme::Full];

    pub fn policy(self) -> (SelectionPolicy, bool) {
        match self {
            Scheme::Legacy => (SelectionPolicy::Never, false),
            Scheme::AsaAlways => (SelectionPolicy::Always, false),
            Scheme::Full => (SelectionPolicy::Gated, true),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Legacy => "legacy",
            Scheme::AsaAlways => "asa_always",
            Scheme::Full => "full",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalizerConfig {
    pub selection: SelectionPolicy,
    pub outlier_filter: bool,
    pub solver: SolverConfig,
    /// Device position assumed before the first fix.
    pub start: Point2,
}

impl LocalizerConfig {
    pub fn for_scheme(scheme: Scheme, layout: &WorldLayout) -> Self {
        let (selection, outlier_filter) = scheme.policy();
        Self { selection, outlier_filter, solver: SolverConfig::default(), start: layout.localization_zone().center() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundOutcome {
    pub round_id: u64,
    pub asa: AsaMode,
    pub subset: Option<AnchorSubset>,
    /// Initiator first, then responders in measurement order.
    pub used_anchors: Vec<AnchorId>,
    pub solution: Solution,
    pub verdict: Option<OutlierVerdict>,
    pub accepted: bool,
}

impl RoundOutcome {
    pub fn position(&self) -> Point2 {
        self.solution.position
    }
}

/// One round through selection, solving and outlier rejection.
pub fn localize_round(
    beliefs: &AnchorBelief,
    set: &TdoaSet,
    anchors: &BTreeMap<AnchorId, Point2>,
    state: &mut LocalizerState,
    config: &LocalizerConfig,
) -> Result<RoundOutcome, LocalizationError> {
    let prev = state.last_position.unwrap_or(config.start);
    let asa = match config.selection {
        SelectionPolicy::Never => AsaMode::Inactive,
        SelectionPolicy::Always => AsaMode::Active,
        SelectionPolicy::Gated => asa_gate(beliefs),
    };
    let subset = match asa {
        AsaMode::Inactive => None,
        AsaMode::Active => {
            let mut est = Vec::with_capacity(anchors.len());
            for (&id, &position) in anchors {
                let p_nlos = beliefs.get(id).ok_or(LocalizationError::MissingBelief(id))?.lpf.filtered;
                est.push(AnchorEstimate { id, position, p_nlos });
            }
            Some(select_anchors(&est, set.initiator_id, prev)?)
        }
    };
    let restricted;
    let used_set = match &subset {
        None => set,
        Some(s) => {
            restricted = TdoaSet {
                measurements: set.measurements.iter().filter(|m| s.contains(m.responder_id)).copied().collect(),
                ..set.clone()
            };
            &restricted
        }
    };
    let solution = solve_tdoa(used_set, anchors, prev, &config.solver)?;
    let used_anchors = core::iter::once(set.initiator_id).chain(used_set.measurements.iter().map(|m| m.responder_id)).collect();

    let (verdict, accepted) = if config.outlier_filter {
        let v = outlier_filter(state, Fix { round_id: set.round_id, position: solution.position });
        (Some(v), v.accepted)
    } else {
        state.last_position = Some(solution.position);
        (None, true)
    };
    Ok(RoundOutcome { round_id: set.round_id, asa, subset, used_anchors, solution, verdict, accepted })
}
