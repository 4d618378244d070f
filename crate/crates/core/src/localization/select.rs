use alloc::vec::Vec;

use super::{md_inside, LocalizationError};
use crate::classifier::AnchorBelief;
use crate::geometry::Point2;
use crate::{AnchorId, Condition};

/// Number of anchors the selection keeps.
pub const SUBSET_SIZE: usize = 4;

/// Input to the selection: one anchor with its NLOS probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnchorEstimate {
    pub id: AnchorId,
    pub position: Point2,
    pub p_nlos: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AnchorSubset {
    pub ids: [AnchorId; SUBSET_SIZE],
    /// Index of the chosen combination in the lexicographic order over ranks.
    pub selection_rank: usize,
    /// False when no candidate enclosed the device and the fallback was used.
    pub hull_satisfied: bool,
}

impl AnchorSubset {
    pub fn contains(&self, id: AnchorId) -> bool {
        self.ids.contains(&id)
    }
}

/// Lexicographic 4-combinations of `0..n`.
fn combinations(n: usize) -> impl Iterator<Item = [usize; SUBSET_SIZE]> {
    let mut next = (n >= SUBSET_SIZE).then_some([0, 1, 2, 3]);
    core::iter::from_fn(move || {
        let cur = next?;
        let mut c = cur;
        let mut i = SUBSET_SIZE;
        next = loop {
            if i == 0 {
                break None;
            }
            i -= 1;
            if c[i] < n - SUBSET_SIZE + i {
                c[i] += 1;
                for j in i + 1..SUBSET_SIZE {
                    c[j] = c[j - 1] + 1;
                }
                break Some(c);
            }
        };
        Some(cur)
    })
}

/// Picks four anchors, always including the initiator, preferring low NLOS
/// probability, whose hull encloses `prev_md`.
pub fn select_anchors(
    anchors: &[AnchorEstimate],
    initiator: AnchorId,
    prev_md: Point2,
) -> Result<AnchorSubset, LocalizationError> {
    if anchors.len() < SUBSET_SIZE {
        return Err(LocalizationError::TooFewAnchors(anchors.len()));
    }
    if !anchors.iter().any(|a| a.id == initiator) {
        return Err(LocalizationError::UnknownAnchor(initiator));
    }
    let mut sorted: Vec<&AnchorEstimate> = anchors.iter().collect();
    sorted.sort_by(|a, b| a.p_nlos.total_cmp(&b.p_nlos).then(a.id.cmp(&b.id)));

    let mut fallback = None;
    for (rank, combo) in combinations(sorted.len()).enumerate() {
        if !combo.iter().any(|&r| sorted[r].id == initiator) {
            continue;
        }
        let ids = combo.map(|r| sorted[r].id);
        let positions = combo.map(|r| sorted[r].position);
        if md_inside(&positions, prev_md) {
            return Ok(AnchorSubset { ids, selection_rank: rank, hull_satisfied: true });
        }
        fallback.get_or_insert(AnchorSubset { ids, selection_rank: rank, hull_satisfied: false });
    }
    Ok(fallback.expect("a combination with the initiator exists"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum AsaMode {
    Active,
    Inactive,
}

/// Selection runs only while some anchor is believed NLOS.
pub fn asa_gate(beliefs: &AnchorBelief) -> AsaMode {
    if beliefs.iter().any(|(_, e)| e.decision == Condition::Nlos) {
        AsaMode::Active
    } else {
        AsaMode::Inactive
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn combination_order() {
        let all: Vec<_> = combinations(6).collect();
        assert_eq!(all.len(), 15);
        assert_eq!(all[0], [0, 1, 2, 3]);
        assert_eq!(all[1], [0, 1, 2, 4]);
        assert_eq!(all[14], [2, 3, 4, 5]);
        assert!(all.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(combinations(4).count(), 1);
        assert_eq!(combinations(3).count(), 0);
    }

    #[test]
    fn asa_gate_modes() {
        let mut b = AnchorBelief::new([0, 1, 2], 0.8);
        for a in 0..3 {
            b.update_probability(a, 0.0).unwrap();
        }
        assert_eq!(asa_gate(&b), AsaMode::Inactive);
        for _ in 0..3 {
            b.update_probability(1, 1.0).unwrap();
        }
        assert_eq!(asa_gate(&b), AsaMode::Active);
        for a in 0..3 {
            for _ in 0..10 {
                b.update_probability(a, 1.0).unwrap();
            }
        }
        assert_eq!(asa_gate(&b), AsaMode::Active);
    }
}
