//! Tagless gate state machine: zones, nearest gate, ranging session and the
//! pose-adaptive open decision.

use alloc::vec::Vec;

use crate::geometry::Point2;
use crate::ranging::{simulate_dstwr, RangingError, TwrConfig};
use crate::rng::{derive_seed, gaussian, rng_from_seed};
use crate::scenario::{gen_trajectory, GateSpec, ScenarioError, WalkParams, WorldLayout};
use crate::{GateId, Pose};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GateError {
    #[error("no gates configured")]
    NoGates,
    #[error("event at {t_ms} ms is older than the last event at {last_ms} ms")]
    OutOfOrder { t_ms: u64, last_ms: u64 },
    #[error("{event} is not accepted in phase {phase:?}")]
    Rejected { event: &'static str, phase: Phase },
    #[error("ranging result for gate {got}, session is with gate {expected}")]
    WrongGate { expected: GateId, got: GateId },
    #[error("negative distance {0} cm")]
    NegativeDistance(f64),
    #[error("open threshold for {0} is not positive")]
    BadPolicy(Pose),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Ranging(#[from] RangingError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "SCREAMING_SNAKE_CASE"))]
pub enum Zone {
    Outside,
    Localization,
    GateAccess,
}

/// The gate access zone is nested in the localization zone and wins.
pub fn zone_of(position: Point2, layout: &WorldLayout) -> Zone {
    if layout.gate_access_zone().contains(position) {
        Zone::GateAccess
    } else if layout.localization_zone().contains(position) {
        Zone::Localization
    } else {
        Zone::Outside
    }
}

/// Closest gate; ties go to the lowest id.
pub fn nearest_gate(position: Point2, gates: &[GateSpec]) -> Result<GateId, GateError> {
    gates
        .iter()
        .map(|g| (position.distance(g.position), g.id))
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .map(|(_, id)| id)
        .ok_or(GateError::NoGates)
}

/// Open threshold per pose, cm.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct OpenPolicy {
    pub base_open_distance: f64,
    /// Correction for LOS, NLOS, FRONT, BACK.
    pub pose_offset: [f64; 4],
}

impl Default for OpenPolicy {
    fn default() -> Self {
        Self { base_open_distance: 100.0, pose_offset: [0.0, 10.0, -15.0, 57.0] }
    }
}

impl OpenPolicy {
    /// The same threshold for every pose.
    pub fn pose_agnostic(base: f64) -> Self {
        Self { base_open_distance: base, pose_offset: [0.0; 4] }
    }

    pub fn threshold(&self, pose: Pose) -> f64 {
        self.base_open_distance + self.pose_offset[pose_slot(pose)]
    }

    pub fn validate(&self) -> Result<(), GateError> {
        for pose in Pose::ALL {
            if !(self.threshold(pose) > 0.0) {
                return Err(GateError::BadPolicy(pose));
            }
        }
        Ok(())
    }
}

fn pose_slot(p: Pose) -> usize {
    match p {
        Pose::Los => 0,
        Pose::Nlos => 1,
        Pose::Front => 2,
        Pose::Back => 3,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "SCREAMING_SNAKE_CASE"))]
pub enum GateDecision {
    Open,
    Hold,
}

pub fn gate_decision(measured_distance_cm: f64, pose: Pose, policy: &OpenPolicy) -> GateDecision {
    if measured_distance_cm <= policy.threshold(pose) {
        GateDecision::Open
    } else {
        GateDecision::Hold
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "SCREAMING_SNAKE_CASE"))]
pub enum Phase {
    Idle,
    Localizing,
    AccessZone,
    Ranging,
    Open,
    Closed,
}

/// DS-TWR session with the selected gate.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TwrSession {
    pub gate: GateId,
    pub started_ms: u64,
    pub results: u32,
    pub last_distance_cm: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GateState {
    pub phase: Phase,
    pub active_gate: Option<GateId>,
    pub session: Option<TwrSession>,
    pub pose: Pose,
    pub last_event_ms: Option<u64>,
    pub opened_ms: Option<u64>,
}

impl Default for GateState {
    fn default() -> Self {
        Self { phase: Phase::Idle, active_gate: None, session: None, pose: Pose::Los, last_event_ms: None, opened_ms: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum EventKind {
    PositionFix { position: Point2 },
    ZoneChange { zone: Zone },
    TwrResult { gate: GateId, distance_cm: f64 },
    PoseUpdate { pose: Pose },
    Timeout,
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::PositionFix { .. } => "position_fix",
            EventKind::ZoneChange { .. } => "zone_change",
            EventKind::TwrResult { .. } => "twr_result",
            EventKind::PoseUpdate { .. } => "pose_update",
            EventKind::Timeout => "timeout",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GateEvent {
    pub t_ms: u64,
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GateMachine {
    pub gates: Vec<GateSpec>,
    pub policy: OpenPolicy,
    /// Time the gate stays open before closing.
    pub pass_through_ms: u64,
}

impl GateMachine {
    pub fn new(layout: &WorldLayout, policy: OpenPolicy) -> Result<Self, GateError> {
        if layout.gates().is_empty() {
            return Err(GateError::NoGates);
        }
        policy.validate()?;
        Ok(Self { gates: layout.gates().to_vec(), policy, pass_through_ms: 3000 })
    }

    /// Applies one event. On error the caller keeps the previous state.
    pub fn step(&self, state: &GateState, event: &GateEvent) -> Result<(GateState, Option<GateDecision>), GateError> {
        if let Some(last) = state.last_event_ms {
            if event.t_ms < last {
                return Err(GateError::OutOfOrder { t_ms: event.t_ms, last_ms: last });
            }
        }
        let mut s = *state;
        s.last_event_ms = Some(event.t_ms);
        let mut decision = None;
        match (state.phase, event.kind) {
            (_, EventKind::PoseUpdate { pose }) => s.pose = pose,
            (Phase::Idle | Phase::Closed, EventKind::PositionFix { .. }) => s.phase = Phase::Localizing,
            (Phase::AccessZone, EventKind::PositionFix { position }) => {
                let gate = nearest_gate(position, &self.gates)?;
                s.phase = Phase::Ranging;
                s.active_gate = Some(gate);
                s.session = Some(TwrSession { gate, started_ms: event.t_ms, results: 0, last_distance_cm: None });
            }
            (_, EventKind::PositionFix { .. }) => {}
            (Phase::Localizing, EventKind::ZoneChange { zone: Zone::GateAccess }) => s.phase = Phase::AccessZone,
            (Phase::AccessZone | Phase::Ranging, EventKind::ZoneChange { zone }) if zone != Zone::GateAccess => {
                s.phase = Phase::Localizing;
                s.active_gate = None;
                s.session = None;
            }
            (_, EventKind::ZoneChange { .. }) => {}
            (Phase::Ranging, EventKind::TwrResult { gate, distance_cm }) => {
                let mut session = state.session.expect("ranging phase has a session");
                if gate != session.gate {
                    return Err(GateError::WrongGate { expected: session.gate, got: gate });
                }
                if !(distance_cm >= 0.0) {
                    return Err(GateError::NegativeDistance(distance_cm));
                }
                session.results += 1;
                session.last_distance_cm = Some(distance_cm);
                s.session = Some(session);
                let d = gate_decision(distance_cm, state.pose, &self.policy);
                if d == GateDecision::Open {
                    s.phase = Phase::Open;
                    s.opened_ms = Some(event.t_ms);
                }
                decision = Some(d);
            }
            (phase, EventKind::TwrResult { .. }) => return Err(GateError::Rejected { event: "twr_result", phase }),
            (Phase::Open, EventKind::Timeout) => {
                let opened = state.opened_ms.expect("open phase records its time");
                if event.t_ms - opened >= self.pass_through_ms {
                    s.phase = Phase::Closed;
                    s.active_gate = None;
                    s.session = None;
                    s.opened_ms = None;
                }
            }
            (_, EventKind::Timeout) => {}
        }
        Ok((s, decision))
    }
}

/// One line of a gate trace.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TraceRecord {
    pub t_ms: u64,
    pub event: EventKind,
    pub phase: Phase,
    pub decision: Option<GateDecision>,
}

/// How each pose distorts a DS-TWR distance to the gate.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct TwrPoseModel {
    /// Device position along the walking direction relative to the body,
    /// positive when behind it. LOS, NLOS, FRONT, BACK.
    pub device_offset_cm: [f64; 4],
    pub bias_cm: [f64; 4],
    pub sigma_cm: [f64; 4],
}

impl Default for TwrPoseModel {
    fn default() -> Self {
        Self { device_offset_cm: [0.0, 0.0, -15.0, 10.0], bias_cm: [0.0, 10.0, 0.0, 47.0], sigma_cm: [4.0, 8.0, 4.0, 26.0] }
    }
}

impl TwrPoseModel {
    /// Measured distance for a body at `body_cm` from the gate.
    pub fn measure(&self, body_cm: f64, pose: Pose, twr: &TwrConfig, seed: u64) -> Result<f64, GateError> {
        let k = pose_slot(pose);
        let device = (body_cm + self.device_offset_cm[k]).max(0.0);
        let (_, est_m) = simulate_dstwr(device / 100.0, twr, seed)?;
        let mut rng = rng_from_seed(derive_seed(seed, 0x7B));
        Ok((est_m * 100.0 + gaussian(&mut rng, self.bias_cm[k], self.sigma_cm[k])).max(0.0))
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct WalkInConfig {
    pub walk: WalkParams,
    pub pose: Pose,
    pub fix_interval_ms: u64,
    pub twr_interval_ms: u64,
    pub fix_sigma_m: f64,
    /// Time simulated after the walk ends.
    pub dwell_ms: u64,
    pub twr: TwrConfig,
    pub pose_model: TwrPoseModel,
}

impl Default for WalkInConfig {
    fn default() -> Self {
        Self {
            walk: WalkParams {
                // In front of gate 2, clear of the zone edges.
                target: crate::scenario::WalkTarget::Point(Point2::new(6.15, 8.85)),
                ..WalkParams::default()
            },
            pose: Pose::Los,
            fix_interval_ms: 500,
            twr_interval_ms: 200,
            fix_sigma_m: 0.05,
            dwell_ms: 2000,
            twr: TwrConfig::default(),
            pose_model: TwrPoseModel::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WalkInResult {
    pub records: Vec<TraceRecord>,
    /// Phases in order of entry, starting with IDLE.
    pub phases: Vec<Phase>,
    /// True body-to-gate distance when the gate opened, cm.
    pub open_body_distance_cm: Option<f64>,
    /// The gate that opened.
    pub gate: Option<GateId>,
}

/// Walks a user towards the gates and drives the machine with position
/// fixes, zone changes, pose updates and DS-TWR results.
pub fn simulate_walk_in(
    layout: &WorldLayout,
    machine: &GateMachine,
    config: &WalkInConfig,
    seed: u64,
) -> Result<WalkInResult, GateError> {
    let traj = gen_trajectory(layout, &config.walk, derive_seed(seed, 1))?;
    let end = traj.end_ms() + config.dwell_ms;
    let tick = gcd(config.fix_interval_ms.max(1), config.twr_interval_ms.max(1));
    let mut rng = rng_from_seed(derive_seed(seed, 2));

    let mut state = GateState::default();
    let mut records = Vec::new();
    let mut phases = alloc::vec![Phase::Idle];
    let mut zone = None;
    let mut open_at = None;
    let mut opened_gate = None;
    let mut twr_round = 0u64;

    let mut apply = |state: &mut GateState, kind: EventKind, t_ms: u64| -> Result<Option<GateDecision>, GateError> {
        let (next, decision) = machine.step(state, &GateEvent { t_ms, kind })?;
        if next.phase != state.phase {
            phases.push(next.phase);
        }
        *state = next;
        records.push(TraceRecord { t_ms, event: kind, phase: next.phase, decision });
        Ok(decision)
    };

    let mut t = 0;
    while t <= end {
        let body = traj.position_at(t as f64);
        if t % config.fix_interval_ms == 0 {
            let fix = Point2::new(
                gaussian(&mut rng, body.x, config.fix_sigma_m),
                gaussian(&mut rng, body.y, config.fix_sigma_m),
            );
            apply(&mut state, EventKind::PositionFix { position: fix }, t)?;
            let z = zone_of(fix, layout);
            if zone != Some(z) {
                zone = Some(z);
                apply(&mut state, EventKind::ZoneChange { zone: z }, t)?;
            }
        }
        if t % config.twr_interval_ms == 0 && state.phase == Phase::Ranging {
            let gate = state.active_gate.expect("ranging phase has a gate");
            let gate_pos = machine.gates.iter().find(|g| g.id == gate).expect("known gate").position;
            apply(&mut state, EventKind::PoseUpdate { pose: config.pose }, t)?;
            let body_cm = body.distance(gate_pos) * 100.0;
            let d = config.pose_model.measure(body_cm, config.pose, &config.twr, derive_seed(seed, 0x1000 + twr_round))?;
            twr_round += 1;
            if apply(&mut state, EventKind::TwrResult { gate, distance_cm: d }, t)? == Some(GateDecision::Open) {
                open_at = Some(body_cm);
                opened_gate = Some(gate);
            }
        }
        if state.phase == Phase::Open {
            apply(&mut state, EventKind::Timeout, t)?;
        }
        t += tick;
    }
    Ok(WalkInResult { records, phases, open_body_distance_cm: open_at, gate: opened_gate })
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{build_layout, LayoutConfig};

    fn layout() -> WorldLayout {
        build_layout(&LayoutConfig::default()).unwrap()
    }

    #[test]
    fn zones() {
        let l = layout();
        assert_eq!(zone_of(Point2::new(6.5, 8.0), &l), Zone::GateAccess);
        assert_eq!(zone_of(l.localization_zone().center(), &l), Zone::Localization);
        assert_eq!(zone_of(Point2::new(-1.0, -1.0), &l), Zone::Outside);
    }

    #[test]
    fn nearest_gate_rules() {
        let l = layout();
        assert_eq!(nearest_gate(Point2::new(6.4, 8.0), l.gates()).unwrap(), 2);
        assert_eq!(nearest_gate(Point2::new(6.5, 8.0), l.gates()).unwrap(), 2);
        assert_eq!(nearest_gate(Point2::new(0.0, 0.0), &l.gates()[3..]).unwrap(), 4);
        assert_eq!(nearest_gate(Point2::new(0.0, 0.0), &[]), Err(GateError::NoGates));
    }

    #[test]
    fn decision_examples() {
        let p = OpenPolicy::default();
        assert_eq!(gate_decision(110.0, Pose::Back, &p), GateDecision::Open);
        assert_eq!(gate_decision(90.0, Pose::Front, &p), GateDecision::Hold);
        for pose in Pose::ALL {
            assert_eq!(gate_decision(0.0, pose, &p), GateDecision::Open);
        }
        let bad = OpenPolicy { base_open_distance: 10.0, pose_offset: [0.0, 0.0, -15.0, 0.0] };
        assert_eq!(bad.validate(), Err(GateError::BadPolicy(Pose::Front)));
    }

    fn ev(t_ms: u64, kind: EventKind) -> GateEvent {
        GateEvent { t_ms, kind }
    }

    #[test]
    fn scripted_sequence_and_abort() {
        let m = GateMachine::new(&layout(), OpenPolicy::default()).unwrap();
        let mut s = GateState::default();
        let fix = |x, y| EventKind::PositionFix { position: Point2::new(x, y) };
        let script = [
            (0, fix(6.5, 5.0), Phase::Localizing),
            (500, EventKind::ZoneChange { zone: Zone::GateAccess }, Phase::AccessZone),
            (1000, fix(6.5, 7.5), Phase::Ranging),
            (1200, EventKind::TwrResult { gate: 2, distance_cm: 150.0 }, Phase::Ranging),
            (1400, EventKind::ZoneChange { zone: Zone::Localization }, Phase::Localizing),
        ];
        for (t, k, phase) in script {
            s = m.step(&s, &ev(t, k)).unwrap().0;
            assert_eq!(s.phase, phase);
        }
        assert_eq!(s.session, None);
        assert_eq!(s.active_gate, None);
        assert!(m.step(&s, &ev(1300, EventKind::Timeout)).is_err());
        assert!(matches!(
            m.step(&GateState::default(), &ev(0, EventKind::TwrResult { gate: 1, distance_cm: 10.0 })),
            Err(GateError::Rejected { phase: Phase::Idle, .. })
        ));
    }

    #[test]
    fn open_then_close_after_timeout() {
        let m = GateMachine::new(&layout(), OpenPolicy::default()).unwrap();
        let mut s = GateState { phase: Phase::AccessZone, ..Default::default() };
        s = m.step(&s, &ev(0, EventKind::PositionFix { position: Point2::new(6.5, 8.0) })).unwrap().0;
        let (next, d) = m.step(&s, &ev(200, EventKind::TwrResult { gate: 2, distance_cm: 80.0 })).unwrap();
        assert_eq!(d, Some(GateDecision::Open));
        assert_eq!(next.phase, Phase::Open);
        let still = m.step(&next, &ev(3000, EventKind::Timeout)).unwrap().0;
        assert_eq!(still.phase, Phase::Open);
        let closed = m.step(&still, &ev(3200, EventKind::Timeout)).unwrap().0;
        assert_eq!(closed.phase, Phase::Closed);
        assert_eq!(closed.active_gate, None);
    }

    #[test]
    fn default_walk_in_sequence() {
        let l = layout();
        let m = GateMachine::new(&l, OpenPolicy::default()).unwrap();
        let r = simulate_walk_in(&l, &m, &WalkInConfig::default(), 1).unwrap();
        assert_eq!(r.phases, [Phase::Idle, Phase::Localizing, Phase::AccessZone, Phase::Ranging, Phase::Open]);
        assert!(r.open_body_distance_cm.is_some());
    }
}
