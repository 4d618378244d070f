//! World geometry, walk-in trajectories, pose schedules and synthetic IMU.

use alloc::vec::Vec;
use core::f64::consts::PI;
#[allow(unused_imports)] // float methods are inherent once std is linked
use num_traits::Float;
use rand::Rng;

use crate::geometry::{Point2, Rect};
use crate::rng::{derive_seed, gaussian, rng_from_seed, std_normal};
use crate::{AnchorId, GateId, Pose};

/// Standard gravity used for the synthetic gravity channel, m/s².
pub const GRAVITY: f64 = 9.81;

/// IMU sampling period, ms.
pub const IMU_PERIOD_MS: u64 = 60;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScenarioError {
    #[error("layout needs at least 4 anchors, got {0}")]
    TooFewAnchors(usize),
    #[error("layout needs exactly one initiator anchor, got {0}")]
    InitiatorCount(usize),
    #[error("duplicate anchor id {0}")]
    DuplicateAnchor(AnchorId),
    #[error("duplicate gate id {0}")]
    DuplicateGate(GateId),
    #[error("{0} lies outside the area")]
    OutsideArea(&'static str),
    #[error("gate access zone is not contained in the localization zone")]
    GateZoneNotNested,
    #[error("invalid area or zone dimensions")]
    BadDimensions,
    #[error("walk start point is outside the localization zone")]
    StartOutsideZone,
    #[error("unknown gate {0}")]
    UnknownGate(GateId),
    #[error("invalid walk parameters: {0}")]
    BadWalk(&'static str),
    #[error("pose schedule has a gap or overlap at {0} ms")]
    ScheduleGap(u64),
    #[error("pose schedule ends at {end} ms but trajectory runs to {needed} ms")]
    ScheduleShort { end: u64, needed: u64 },
    #[error("pose schedule is empty")]
    EmptySchedule,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AnchorSpec {
    pub id: AnchorId,
    pub position: Point2,
    #[cfg_attr(feature = "serde", serde(default))]
    pub is_initiator: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GateSpec {
    pub id: GateId,
    pub position: Point2,
}

/// Unvalidated layout parameters, as read from a config file.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LayoutConfig {
    /// Width and height of the test area, metres. The area spans `[0, w] × [0, h]`.
    pub area_size: (f64, f64),
    pub anchors: Vec<AnchorSpec>,
    pub gates: Vec<GateSpec>,
    pub localization_zone: Rect,
    pub gate_access_zone: Rect,
}

impl Default for LayoutConfig {
    /// 9 × 9 m office floor with six anchors, four gates along the top wall and
    /// a 1 × 2 m gate access zone between gates 2 and 3.
    fn default() -> Self {
        let anchor = |id, x, y, is_initiator| AnchorSpec { id, position: Point2::new(x, y), is_initiator };
        let gate = |id, x, y| GateSpec { id, position: Point2::new(x, y) };
        Self {
            area_size: (9.0, 9.0),
            anchors: alloc::vec![
                anchor(0, 0.0, 0.0, true),
                anchor(1, 9.0, 0.0, false),
                anchor(2, 9.0, 9.0, false),
                anchor(3, 0.0, 9.0, false),
                anchor(4, 6.5, 9.0, false),
                anchor(5, 9.0, 6.0, false),
            ],
            gates: alloc::vec![gate(1, 5.0, 9.0), gate(2, 6.0, 9.0), gate(3, 7.0, 9.0), gate(4, 8.0, 9.0)],
            localization_zone: Rect::new(Point2::new(0.5, 0.5), Point2::new(8.5, 9.0)),
            gate_access_zone: Rect::from_corner(Point2::new(6.0, 7.0), 1.0, 2.0),
        }
    }
}

/// A validated world layout. Construct it with [`build_layout`].
#[derive(Debug, Clone, PartialEq)]
pub struct WorldLayout {
    area: Rect,
    anchors: Vec<AnchorSpec>,
    gates: Vec<GateSpec>,
    localization_zone: Rect,
    gate_access_zone: Rect,
}

impl WorldLayout {
    pub fn area(&self) -> Rect {
        self.area
    }

    pub fn area_size(&self) -> (f64, f64) {
        (self.area.width(), self.area.height())
    }

    pub fn anchors(&self) -> &[AnchorSpec] {
        &self.anchors
    }

    pub fn gates(&self) -> &[GateSpec] {
        &self.gates
    }

    pub fn localization_zone(&self) -> Rect {
        self.localization_zone
    }

    pub fn gate_access_zone(&self) -> Rect {
        self.gate_access_zone
    }

    pub fn initiator(&self) -> &AnchorSpec {
        self.anchors.iter().find(|a| a.is_initiator).expect("validated layout has an initiator")
    }

    /// Responder anchors in id order.
    pub fn responders(&self) -> impl Iterator<Item = &AnchorSpec> {
        self.anchors.iter().filter(|a| !a.is_initiator)
    }

    pub fn anchor(&self, id: AnchorId) -> Option<&AnchorSpec> {
        self.anchors.iter().find(|a| a.id == id)
    }

    pub fn gate(&self, id: GateId) -> Option<&GateSpec> {
        self.gates.iter().find(|g| g.id == id)
    }
}

/// Validates a layout configuration.
pub fn build_layout(config: &LayoutConfig) -> Result<WorldLayout, ScenarioError> {
    let (w, h) = config.area_size;
    let area = Rect::new(Point2::new(0.0, 0.0), Point2::new(w, h));
    if !area.is_valid() || !config.localization_zone.is_valid() || !config.gate_access_zone.is_valid() {
        return Err(ScenarioError::BadDimensions);
    }
    if config.anchors.len() < 4 {
        return Err(ScenarioError::TooFewAnchors(config.anchors.len()));
    }
    let initiators = config.anchors.iter().filter(|a| a.is_initiator).count();
    if initiators != 1 {
        return Err(ScenarioError::InitiatorCount(initiators));
    }
    for (i, a) in config.anchors.iter().enumerate() {
        if config.anchors[..i].iter().any(|b| b.id == a.id) {
            return Err(ScenarioError::DuplicateAnchor(a.id));
        }
        if !area.contains(a.position) {
            return Err(ScenarioError::OutsideArea("anchor"));
        }
    }
    for (i, g) in config.gates.iter().enumerate() {
        if config.gates[..i].iter().any(|o| o.id == g.id) {
            return Err(ScenarioError::DuplicateGate(g.id));
        }
        if !area.contains(g.position) {
            return Err(ScenarioError::OutsideArea("gate"));
        }
    }
    if !area.contains_rect(&config.localization_zone) {
        return Err(ScenarioError::OutsideArea("localization zone"));
    }
    if !config.localization_zone.contains_rect(&config.gate_access_zone) {
        return Err(ScenarioError::GateZoneNotNested);
    }
    let mut anchors = config.anchors.clone();
    anchors.sort_by_key(|a| a.id);
    let mut gates = config.gates.clone();
    gates.sort_by_key(|g| g.id);
    Ok(WorldLayout {
        area,
        anchors,
        gates,
        localization_zone: config.localization_zone,
        gate_access_zone: config.gate_access_zone,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum WalkTarget {
    Gate(GateId),
    Point(Point2),
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct WalkParams {
    pub start: Point2,
    pub target: WalkTarget,
    pub speed_mps: f64,
    pub step_rate_hz: f64,
    /// Standard deviation of the lateral offset at each footstep, metres.
    pub lateral_jitter_m: f64,
    pub sample_period_ms: u64,
}

impl Default for WalkParams {
    fn default() -> Self {
        Self {
            start: Point2::new(6.5, 5.0),
            target: WalkTarget::Point(Point2::new(6.5, 8.0)),
            speed_mps: 1.4,
            step_rate_hz: 3.0,
            lateral_jitter_m: 0.05,
            sample_period_ms: 20,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrajectorySample {
    pub t_ms: u64,
    pub position: Point2,
    pub heading_rad: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    samples: Vec<TrajectorySample>,
}

impl Trajectory {
    pub fn samples(&self) -> &[TrajectorySample] {
        &self.samples
    }

    pub fn start_ms(&self) -> u64 {
        self.samples[0].t_ms
    }

    pub fn end_ms(&self) -> u64 {
        self.samples[self.samples.len() - 1].t_ms
    }

    pub fn duration_ms(&self) -> u64 {
        self.end_ms() - self.start_ms()
    }

    /// Position at time `t_ms`, linearly interpolated and clamped to the end points.
    pub fn position_at(&self, t_ms: f64) -> Point2 {
        self.interpolate(t_ms).0
    }

    pub fn heading_at(&self, t_ms: f64) -> f64 {
        self.interpolate(t_ms).1
    }

    fn interpolate(&self, t_ms: f64) -> (Point2, f64) {
        let s = &self.samples;
        if t_ms <= s[0].t_ms as f64 {
            return (s[0].position, s[0].heading_rad);
        }
        let last = s[s.len() - 1];
        if t_ms >= last.t_ms as f64 {
            return (last.position, last.heading_rad);
        }
        let i = s.partition_point(|p| (p.t_ms as f64) <= t_ms);
        let (a, b) = (s[i - 1], s[i]);
        let f = (t_ms - a.t_ms as f64) / (b.t_ms - a.t_ms) as f64;
        (a.position + (b.position - a.position) * f, b.heading_rad)
    }
}

/// Generates a straight walk from `walk.start` to the target with lateral
/// footstep jitter, sampled every `walk.sample_period_ms`.
pub fn gen_trajectory(layout: &WorldLayout, walk: &WalkParams, seed: u64) -> Result<Trajectory, ScenarioError> {
    if !(walk.speed_mps > 0.0) || !(walk.step_rate_hz > 0.0) || walk.sample_period_ms == 0 {
        return Err(ScenarioError::BadWalk("speed, step rate and sample period must be positive"));
    }
    if !(walk.lateral_jitter_m >= 0.0) {
        return Err(ScenarioError::BadWalk("lateral jitter must be non-negative"));
    }
    if !layout.area().contains(walk.start) || !layout.localization_zone().contains(walk.start) {
        return Err(ScenarioError::StartOutsideZone);
    }
    let target = match walk.target {
        WalkTarget::Gate(id) => layout.gate(id).ok_or(ScenarioError::UnknownGate(id))?.position,
        WalkTarget::Point(p) => {
            if !layout.area().contains(p) {
                return Err(ScenarioError::OutsideArea("walk target"));
            }
            p
        }
    };

    let path = target - walk.start;
    let length = path.norm();
    if length == 0.0 {
        return Ok(Trajectory {
            samples: alloc::vec![TrajectorySample { t_ms: 0, position: walk.start, heading_rad: 0.0 }],
        });
    }
    let dir = path * (1.0 / length);
    let normal = Point2::new(-dir.y, dir.x);
    let heading = dir.y.atan2(dir.x);
    // Whole-millisecond duration so the last sample sits exactly on the target.
    let end_ms = ((length / walk.speed_mps * 1000.0).round() as u64).max(1);
    let duration_ms = end_ms as f64;

    // Lateral offsets at each footstep; both ends pinned to the path.
    let step_ms = 1000.0 / walk.step_rate_hz;
    let steps = (duration_ms / step_ms).ceil() as usize;
    let mut rng = rng_from_seed(derive_seed(seed, 0x7241));
    let mut offsets = Vec::with_capacity(steps + 1);
    for k in 0..=steps {
        offsets.push(if k == 0 || k == steps { 0.0 } else { gaussian(&mut rng, 0.0, walk.lateral_jitter_m) });
    }
    let lateral_at = |t: f64| -> f64 {
        let u = (t / duration_ms).clamp(0.0, 1.0) * steps as f64;
        let k = (u.floor() as usize).min(steps.saturating_sub(1));
        let f = u - k as f64;
        offsets[k] * (1.0 - f) + offsets[k + 1] * f
    };

    let mut samples = Vec::new();
    let mut t = 0u64;
    loop {
        let tt = if t >= end_ms { end_ms } else { t };
        let along = (tt as f64 / duration_ms).min(1.0) * length;
        let position = walk.start + dir * along + normal * lateral_at(tt as f64);
        samples.push(TrajectorySample { t_ms: tt, position, heading_rad: heading });
        if tt == end_ms {
            break;
        }
        t += walk.sample_period_ms;
    }
    Ok(Trajectory { samples })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PoseSegment {
    pub start_ms: u64,
    pub end_ms: u64,
    pub pose: Pose,
}

/// Contiguous, non-overlapping pose segments. Each segment covers
/// `[start_ms, end_ms)`; the final segment also covers its `end_ms`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoseSchedule {
    segments: Vec<PoseSegment>,
}

impl PoseSchedule {
    pub fn new(segments: Vec<PoseSegment>) -> Result<Self, ScenarioError> {
        if segments.is_empty() {
            return Err(ScenarioError::EmptySchedule);
        }
        for s in &segments {
            if s.end_ms <= s.start_ms {
                return Err(ScenarioError::ScheduleGap(s.start_ms));
            }
        }
        for pair in segments.windows(2) {
            if pair[0].end_ms != pair[1].start_ms {
                return Err(ScenarioError::ScheduleGap(pair[0].end_ms));
            }
        }
        Ok(Self { segments })
    }

    pub fn constant(pose: Pose, start_ms: u64, end_ms: u64) -> Self {
        Self { segments: alloc::vec![PoseSegment { start_ms, end_ms: end_ms.max(start_ms + 1), pose }] }
    }

    pub fn segments(&self) -> &[PoseSegment] {
        &self.segments
    }

    pub fn start_ms(&self) -> u64 {
        self.segments[0].start_ms
    }

    pub fn end_ms(&self) -> u64 {
        self.segments[self.segments.len() - 1].end_ms
    }

    pub fn pose_at(&self, t_ms: u64) -> Option<Pose> {
        let last = self.segments.len() - 1;
        self.segments
            .iter()
            .enumerate()
            .find(|(i, s)| t_ms >= s.start_ms && (t_ms < s.end_ms || (*i == last && t_ms == s.end_ms)))
            .map(|(_, s)| s.pose)
    }
}

/// One IMU sample in the device frame.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ImuSample {
    pub t_ms: u64,
    /// Linear acceleration with gravity removed, m/s².
    pub accel: [f64; 3],
    /// Gravity vector, m/s².
    pub gravity: [f64; 3],
}

impl ImuSample {
    pub fn features(&self) -> [f64; 6] {
        [self.accel[0], self.accel[1], self.accel[2], self.gravity[0], self.gravity[1], self.gravity[2]]
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ImuStream {
    samples: Vec<ImuSample>,
}

impl ImuStream {
    /// Wraps samples that are already on the 60 ms grid.
    pub fn from_samples(samples: Vec<ImuSample>) -> Option<Self> {
        let ok = samples.windows(2).all(|w| w[1].t_ms == w[0].t_ms + IMU_PERIOD_MS);
        ok.then_some(Self { samples })
    }

    pub fn samples(&self) -> &[ImuSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Gait and orientation parameters of the synthetic IMU.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct ImuModel {
    pub step_hz: f64,
    /// Per-axis gait amplitude while the device is held in the hand, m/s².
    pub hand_amplitude: [f64; 3],
    /// Amplitude multiplier for pocket poses.
    pub pocket_factor: f64,
    pub noise_sigma: f64,
    /// Unit gravity direction in the device frame for LOS, NLOS, FRONT, BACK.
    pub gravity_direction: [[f64; 3]; 4],
    /// Per-walk random tilt of the gravity direction, radians.
    pub tilt_sigma_rad: f64,
    /// Gait-induced sway of the gravity direction for hand / pocket, radians.
    pub sway_rad: [f64; 2],
}

impl Default for ImuModel {
    fn default() -> Self {
        Self {
            step_hz: 3.0,
            hand_amplitude: [0.5, 0.9, 1.1],
            pocket_factor: 2.5,
            noise_sigma: 0.15,
            gravity_direction: [
                [0.0, 0.50, 0.866],
                [0.25, 0.60, 0.76],
                [0.0, 0.97, 0.24],
                [0.10, 0.95, -0.29],
            ],
            tilt_sigma_rad: 0.08,
            sway_rad: [0.03, 0.12],
        }
    }
}

fn pose_index(p: Pose) -> usize {
    match p {
        Pose::Los => 0,
        Pose::Nlos => 1,
        Pose::Front => 2,
        Pose::Back => 3,
    }
}

fn normalize3(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    if n == 0.0 {
        return [0.0, 0.0, 1.0];
    }
    [v[0] / n, v[1] / n, v[2] / n]
}

/// Rotates `v` by small angles about the x and z axes.
fn tilt(v: [f64; 3], ax: f64, az: f64) -> [f64; 3] {
    let (sx, cx) = ax.sin_cos();
    let v = [v[0], v[1] * cx - v[2] * sx, v[1] * sx + v[2] * cx];
    let (sz, cz) = az.sin_cos();
    [v[0] * cz - v[1] * sz, v[0] * sz + v[1] * cz, v[2]]
}

/// Synthesizes a 60 ms IMU stream over the trajectory's time span.
pub fn synth_imu(
    traj: &Trajectory,
    sched: &PoseSchedule,
    model: &ImuModel,
    seed: u64,
) -> Result<ImuStream, ScenarioError> {
    let (t0, t1) = (traj.start_ms(), traj.end_ms());
    if sched.start_ms() > t0 {
        return Err(ScenarioError::ScheduleGap(t0));
    }
    if sched.end_ms() < t1 {
        return Err(ScenarioError::ScheduleShort { end: sched.end_ms(), needed: t1 });
    }

    let mut rng = rng_from_seed(derive_seed(seed, 0x1a0));
    let phases: [f64; 3] = core::array::from_fn(|_| rng.random::<f64>() * 2.0 * PI);
    let tilt_x = gaussian(&mut rng, 0.0, model.tilt_sigma_rad);
    let tilt_z = gaussian(&mut rng, 0.0, model.tilt_sigma_rad);
    let sway_phase = rng.random::<f64>() * 2.0 * PI;
    let omega = 2.0 * PI * model.step_hz / 1000.0;

    let mut samples = Vec::new();
    let mut t = t0;
    while t <= t1 {
        let pose = sched.pose_at(t).ok_or(ScenarioError::ScheduleGap(t))?;
        let pocket = pose.is_pocket();
        let gain = if pocket { model.pocket_factor } else { 1.0 };
        let tf = t as f64;
        let mut accel = [0.0; 3];
        for (axis, a) in accel.iter_mut().enumerate() {
            let base = (omega * tf + phases[axis]).sin();
            // Heel strike harmonic, stronger when the device rides on the leg.
            let harmonic = (2.0 * omega * tf + 2.0 * phases[axis]).sin() * if pocket { 0.45 } else { 0.2 };
            *a = gain * model.hand_amplitude[axis] * (base + harmonic) + model.noise_sigma * std_normal(&mut rng);
        }
        let sway = model.sway_rad[pocket as usize] * (omega * tf + sway_phase).sin();
        let dir = normalize3(tilt(normalize3(model.gravity_direction[pose_index(pose)]), tilt_x + sway, tilt_z));
        let gravity = [dir[0] * GRAVITY, dir[1] * GRAVITY, dir[2] * GRAVITY];
        samples.push(ImuSample { t_ms: t, accel, gravity });
        t += IMU_PERIOD_MS;
    }
    Ok(ImuStream { samples })
}
