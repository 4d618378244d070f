//! Seeded experiments that tie the modules together: paired localization
//! walk-ins, classification streams, transition delays and pose streams.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
#[allow(unused_imports)] // float methods are inherent once std is linked
use num_traits::Float;

use crate::channel::{CirSynthConfig, DetectionConfig, RangeErrorModel};
use crate::classifier::{classify_raw, decide, lpf_update, synth_ecir, AnchorBelief, ClassifierError, LosModel, LpfState};
use crate::ecir::Ecir;
use crate::geometry::Point2;
use crate::localization::{
    anchor_positions, localize_round, LocalizationError, LocalizerConfig, LocalizerState, OutlierConfig, Scheme,
    SolverConfig,
};
use crate::pose::{predict_pose, synth_pose_windows, PoseError, PoseModels};
use crate::ranging::{simulate_dltdoa_round, RangingError, TdoaConfig};
use crate::rng::{derive_seed, derive_seed_path};
use crate::scenario::{gen_trajectory, ImuModel, ScenarioError, WalkParams, WalkTarget, WorldLayout};
use crate::{AnchorId, Condition, Pose};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Localization(#[from] LocalizationError),
    #[error(transparent)]
    Ranging(#[from] RangingError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Pose(#[from] PoseError),
    #[error("invalid experiment setting: {0}")]
    BadConfig(&'static str),
}

/// Anything that turns an eCIR into p(NLOS).
pub trait NlosEstimator {
    fn p_nlos(&self, ecir: &Ecir) -> Result<f64, ClassifierError>;
}

impl NlosEstimator for LosModel {
    fn p_nlos(&self, ecir: &Ecir) -> Result<f64, ClassifierError> {
        classify_raw(self, ecir)
    }
}

impl<F: Fn(&Ecir) -> f64> NlosEstimator for F {
    fn p_nlos(&self, ecir: &Ecir) -> Result<f64, ClassifierError> {
        Ok(self(ecir))
    }
}

/// Mean and standard deviation of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ErrorStats {
    pub mean_cm: f64,
    pub std_cm: f64,
    pub count: usize,
}

impl ErrorStats {
    pub fn from_samples(xs: &[f64]) -> Self {
        if xs.is_empty() {
            return Self::default();
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        Self { mean_cm: mean, std_cm: var.sqrt(), count: xs.len() }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct LocalizationExperimentConfig {
    pub walk: WalkParams,
    /// Time spent standing at the walk target.
    pub dwell_ms: u64,
    pub interval_ms: u64,
    /// Anchor whose path is blocked in the NLOS scenario.
    pub nlos_anchor: AnchorId,
    pub walk_ins: usize,
    pub error_model: RangeErrorModel,
    pub tdoa: TdoaConfig,
    pub synth: CirSynthConfig,
    pub detection: DetectionConfig,
    pub lpf_weight: f64,
    pub outlier: OutlierConfig,
    pub solver: SolverConfig,
}

impl Default for LocalizationExperimentConfig {
    fn default() -> Self {
        Self {
            walk: WalkParams {
                start: Point2::new(6.5, 5.0),
                target: WalkTarget::Point(Point2::new(6.5, 8.0)),
                ..WalkParams::default()
            },
            dwell_ms: 3000,
            interval_ms: 500,
            nlos_anchor: 1,
            walk_ins: 100,
            error_model: RangeErrorModel::default(),
            tdoa: TdoaConfig::default(),
            synth: CirSynthConfig::default(),
            detection: DetectionConfig::default(),
            lpf_weight: LpfState::DEFAULT_WEIGHT,
            outlier: OutlierConfig::default(),
            solver: SolverConfig::default(),
        }
    }
}

/// One scheme's result in one round.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SchemeFix {
    pub scheme: Scheme,
    pub used_anchors: Vec<AnchorId>,
    pub position: Point2,
    pub accepted: bool,
    pub error_cm: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RoundLog {
    pub walk_in: usize,
    pub round_id: u64,
    pub t_ms: u64,
    pub truth: Point2,
    pub fixes: Vec<SchemeFix>,
}

/// Mean error of accepted fixes per scheme, plus the rejection count.
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ScenarioSummary {
    pub legacy: ErrorStats,
    pub asa_always: ErrorStats,
    pub full: ErrorStats,
    pub full_rejected: usize,
}

impl ScenarioSummary {
    pub fn get(&self, scheme: Scheme) -> &ErrorStats {
        match scheme {
            Scheme::Legacy => &self.legacy,
            Scheme::AsaAlways => &self.asa_always,
            Scheme::Full => &self.full,
        }
    }
}

/// Runs one walk-in through every scheme on the same measurements.
pub fn run_localization_walk_in<E: NlosEstimator + ?Sized>(
    layout: &WorldLayout,
    config: &LocalizationExperimentConfig,
    estimator: &E,
    nlos_anchor: Option<AnchorId>,
    walk_in: usize,
    seed: u64,
) -> Result<Vec<RoundLog>, ExperimentError> {
    if config.interval_ms == 0 {
        return Err(ExperimentError::BadConfig("interval must be positive"));
    }
    let anchors = anchor_positions(layout);
    if let Some(a) = nlos_anchor {
        if !anchors.contains_key(&a) {
            return Err(LocalizationError::UnknownAnchor(a).into());
        }
    }
    let conditions: BTreeMap<AnchorId, Condition> = anchors
        .keys()
        .map(|&id| (id, if Some(id) == nlos_anchor { Condition::Nlos } else { Condition::Los }))
        .collect();
    let walk_seed = derive_seed(seed, walk_in as u64);
    let traj = gen_trajectory(layout, &config.walk, derive_seed(walk_seed, 1))?;
    let end = traj.end_ms() + config.dwell_ms;

    let mut beliefs = AnchorBelief::new(anchors.keys().copied(), config.lpf_weight);
    let mut states: Vec<(Scheme, LocalizerConfig, LocalizerState)> = Scheme::ALL
        .iter()
        .map(|&s| {
            let mut c = LocalizerConfig::for_scheme(s, layout);
            c.solver = config.solver;
            (s, c, LocalizerState::new(config.outlier))
        })
        .collect();

    let mut logs = Vec::new();
    let mut round = 0u64;
    let mut t = 0u64;
    while t <= end {
        let truth = traj.position_at(t as f64);
        let set = simulate_dltdoa_round(layout, truth, &conditions, &config.error_model, &config.tdoa, round, derive_seed(walk_seed, 2))?;
        for (&id, &cond) in &conditions {
            let pose = if cond == Condition::Nlos { Pose::Nlos } else { Pose::Los };
            let ecir = synth_ecir(&config.synth, &config.detection, pose, derive_seed_path(walk_seed, &[3, round, id as u64]))?;
            beliefs.update_probability(id, estimator.p_nlos(&ecir)?)?;
        }
        let mut fixes = Vec::with_capacity(states.len());
        for (scheme, cfg, state) in &mut states {
            let out = localize_round(&beliefs, &set, &anchors, state, cfg)?;
            fixes.push(SchemeFix {
                scheme: *scheme,
                used_anchors: out.used_anchors.clone(),
                position: out.position(),
                accepted: out.accepted,
                error_cm: out.position().distance(truth) * 100.0,
            });
        }
        logs.push(RoundLog { walk_in, round_id: round, t_ms: t, truth, fixes });
        round += 1;
        t += config.interval_ms;
    }
    Ok(logs)
}

/// Errors of accepted fixes over a batch of round logs.
pub fn summarize_rounds(logs: &[RoundLog]) -> ScenarioSummary {
    let mut errs: BTreeMap<Scheme, Vec<f64>> = BTreeMap::new();
    let mut rejected = 0;
    for log in logs {
        for f in &log.fixes {
            if f.accepted {
                errs.entry(f.scheme).or_default().push(f.error_cm);
            } else if f.scheme == Scheme::Full {
                rejected += 1;
            }
        }
    }
    let stats = |s: Scheme| ErrorStats::from_samples(errs.get(&s).map_or(&[][..], |v| v.as_slice()));
    ScenarioSummary {
        legacy: stats(Scheme::Legacy),
        asa_always: stats(Scheme::AsaAlways),
        full: stats(Scheme::Full),
        full_rejected: rejected,
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LocalizationSummary {
    pub los: ScenarioSummary,
    pub nlos: ScenarioSummary,
}

/// Paired LOS and NLOS walk-ins. The two scenarios share walk seeds; within a
/// scenario every scheme sees the same measurements.
pub fn run_localization_experiment<E: NlosEstimator + ?Sized>(
    layout: &WorldLayout,
    config: &LocalizationExperimentConfig,
    estimator: &E,
    seed: u64,
    mut on_walk_in: impl FnMut(Condition, &[RoundLog]),
) -> Result<LocalizationSummary, ExperimentError> {
    if config.walk_ins == 0 {
        return Err(ExperimentError::BadConfig("at least one walk-in"));
    }
    let mut summary = LocalizationSummary::default();
    for cond in [Condition::Los, Condition::Nlos] {
        let nlos = (cond == Condition::Nlos).then_some(config.nlos_anchor);
        let mut all = Vec::new();
        for i in 0..config.walk_ins {
            let logs = run_localization_walk_in(layout, config, estimator, nlos, i, seed)?;
            on_walk_in(cond, &logs);
            all.extend(logs);
        }
        let s = summarize_rounds(&all);
        match cond {
            Condition::Los => summary.los = s,
            Condition::Nlos => summary.nlos = s,
        }
    }
    Ok(summary)
}

/// Per-frame and low-pass-filtered accuracy of one stream.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StreamAccuracy {
    pub raw: f64,
    pub filtered: f64,
    pub frames: usize,
}

/// Runs the filter over `raw` from the prior and scores both decisions.
pub fn stream_accuracy(raw: &[f64], truth: &[Condition], weight: f64) -> StreamAccuracy {
    let n = raw.len().min(truth.len());
    if n == 0 {
        return StreamAccuracy::default();
    }
    let mut s = LpfState::new(LpfState::PRIOR, weight);
    let (mut ok_raw, mut ok_lpf) = (0, 0);
    for k in 0..n {
        s = lpf_update(s, raw[k]);
        ok_raw += (crate::classifier::decide_probability(raw[k]) == truth[k]) as usize;
        ok_lpf += (decide(&s) == truth[k]) as usize;
    }
    StreamAccuracy { raw: ok_raw as f64 / n as f64, filtered: ok_lpf as f64 / n as f64, frames: n }
}

/// Orders held-out samples into alternating blocks of constant condition,
/// starting with LOS. Returns indices into `truth`.
pub fn block_stream(truth: &[Condition], block_len: usize) -> Vec<usize> {
    let los: Vec<usize> = (0..truth.len()).filter(|&i| truth[i] == Condition::Los).collect();
    let nlos: Vec<usize> = (0..truth.len()).filter(|&i| truth[i] == Condition::Nlos).collect();
    let mut out = Vec::with_capacity(truth.len());
    let (mut a, mut b) = (los.chunks(block_len.max(1)), nlos.chunks(block_len.max(1)));
    loop {
        let (x, y) = (a.next(), b.next());
        if x.is_none() && y.is_none() {
            break;
        }
        out.extend(x.into_iter().flatten());
        out.extend(y.into_iter().flatten());
    }
    out
}

/// Number of filter updates after the truth changes at `change` until the
/// decision first matches the new condition.
pub fn flip_delay(raw: &[f64], truth: &[Condition], change: usize, weight: f64) -> Option<usize> {
    let mut s = LpfState::new(LpfState::PRIOR, weight);
    for &p in &raw[..change] {
        s = lpf_update(s, p);
    }
    let target = *truth.get(change)?;
    for (k, &p) in raw[change..].iter().enumerate() {
        s = lpf_update(s, p);
        if decide(&s) == target {
            return Some(k + 1);
        }
    }
    None
}

/// Transition delay between two poses of different channel condition.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TransitionDelay {
    pub from: Pose,
    pub to: Pose,
    pub updates: f64,
    pub ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct TransitionConfig {
    pub ranging_interval_ms: u64,
    /// Frames held in the first pose before switching.
    pub settle_frames: usize,
    pub max_frames: usize,
    pub trials: usize,
    pub lpf_weight: f64,
    pub synth: CirSynthConfig,
    pub detection: DetectionConfig,
}

impl Default for TransitionConfig {
    fn default() -> Self {
        Self {
            ranging_interval_ms: 200,
            settle_frames: 20,
            max_frames: 40,
            trials: 20,
            lpf_weight: LpfState::DEFAULT_WEIGHT,
            synth: CirSynthConfig::default(),
            detection: DetectionConfig::default(),
        }
    }
}

/// Mean decision-flip delay for every ordered pose pair whose channel
/// condition differs.
pub fn measure_transitions<E: NlosEstimator + ?Sized>(
    estimator: &E,
    config: &TransitionConfig,
    seed: u64,
) -> Result<Vec<TransitionDelay>, ExperimentError> {
    let mut out = Vec::new();
    for from in Pose::ALL {
        for to in Pose::ALL {
            if from.condition() == to.condition() {
                continue;
            }
            let mut total = 0usize;
            for trial in 0..config.trials {
                let mut raw = Vec::with_capacity(config.settle_frames + config.max_frames);
                let mut truth = Vec::with_capacity(raw.capacity());
                for k in 0..config.settle_frames + config.max_frames {
                    let pose = if k < config.settle_frames { from } else { to };
                    let s = derive_seed_path(seed, &[from as u64, to as u64, trial as u64, k as u64]);
                    raw.push(estimator.p_nlos(&synth_ecir(&config.synth, &config.detection, pose, s)?)?);
                    truth.push(pose.condition());
                }
                total += flip_delay(&raw, &truth, config.settle_frames, config.lpf_weight).unwrap_or(config.max_frames + 1);
            }
            let updates = total as f64 / config.trials.max(1) as f64;
            out.push(TransitionDelay { from, to, updates, ms: updates * config.ranging_interval_ms as f64 });
        }
    }
    Ok(out)
}

/// End-to-end accuracy of one pose stream.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PoseStreamResult {
    pub pose: Pose,
    /// Filtered LOS/NLOS decision against the pose's channel condition.
    pub condition_accuracy: f64,
    pub pose_accuracy: f64,
    pub frames: usize,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct PoseStreamConfig {
    pub frames: usize,
    pub lpf_weight: f64,
    pub synth: CirSynthConfig,
    pub detection: DetectionConfig,
    pub walk: WalkParams,
    pub imu: ImuModel,
}

impl Default for PoseStreamConfig {
    fn default() -> Self {
        Self {
            frames: 500,
            lpf_weight: LpfState::DEFAULT_WEIGHT,
            synth: CirSynthConfig::default(),
            detection: DetectionConfig::default(),
            walk: WalkParams::default(),
            imu: ImuModel::default(),
        }
    }
}

/// Streams frames of a constant pose through classification, the filter and
/// the gated pose models.
pub fn run_pose_stream<E: NlosEstimator + ?Sized>(
    layout: &WorldLayout,
    estimator: &E,
    models: &PoseModels,
    pose: Pose,
    config: &PoseStreamConfig,
    seed: u64,
    mut on_frame: impl FnMut(usize, Condition, Pose, f64),
) -> Result<PoseStreamResult, ExperimentError> {
    if config.frames == 0 {
        return Err(ExperimentError::BadConfig("at least one frame"));
    }
    let windows = synth_pose_windows(layout, &config.walk, &config.imu, pose, config.frames, derive_seed(seed, 0x1)).map_err(ExperimentError::Pose)?;
    let mut lpf = LpfState::new(LpfState::PRIOR, config.lpf_weight);
    let (mut ok_cond, mut ok_pose) = (0, 0);
    for (k, w) in windows.iter().enumerate() {
        let ecir = synth_ecir(&config.synth, &config.detection, pose, derive_seed_path(seed, &[0x2, k as u64]))?;
        lpf = lpf_update(lpf, estimator.p_nlos(&ecir)?);
        let gated = decide(&lpf);
        let (predicted, p) = predict_pose(w, gated, models)?;
        ok_cond += (gated == pose.condition()) as usize;
        ok_pose += (predicted == pose) as usize;
        on_frame(k, gated, predicted, p);
    }
    let n = config.frames as f64;
    Ok(PoseStreamResult { pose, condition_accuracy: ok_cond as f64 / n, pose_accuracy: ok_pose as f64 / n, frames: config.frames })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stats() {
        let s = ErrorStats::from_samples(&[1.0, 3.0]);
        assert_eq!((s.mean_cm, s.std_cm, s.count), (2.0, 1.0, 2));
        assert_eq!(ErrorStats::from_samples(&[]).count, 0);
    }

    #[test]
    fn blocks_alternate() {
        let truth = [Condition::Los, Condition::Nlos, Condition::Los, Condition::Nlos, Condition::Los];
        assert_eq!(block_stream(&truth, 2), [0, 2, 1, 3, 4]);
    }

    #[test]
    fn saturated_flip_takes_four_updates() {
        let mut raw = alloc::vec![0.0; 30];
        raw.extend([1.0; 30]);
        let truth: Vec<Condition> = raw.iter().map(|&p| if p > 0.5 { Condition::Nlos } else { Condition::Los }).collect();
        assert_eq!(flip_delay(&raw, &truth, 30, 0.8), Some(4));
        let back: Vec<f64> = raw.iter().map(|p| 1.0 - p).collect();
        let truth: Vec<Condition> = truth.iter().map(|c| c.opposite()).collect();
        assert_eq!(flip_delay(&back, &truth, 30, 0.8), Some(4));
    }

    #[test]
    fn filtered_beats_raw_on_blocks() {
        use rand::Rng;
        let mut rng = crate::rng::rng_from_seed(4);
        let truth: Vec<Condition> = (0..2000).map(|k| if (k / 200) % 2 == 0 { Condition::Los } else { Condition::Nlos }).collect();
        let raw: Vec<f64> = truth
            .iter()
            .map(|c| {
                let right = rng.random_bool(0.85);
                let nlos = (*c == Condition::Nlos) == right;
                if nlos { 0.9 } else { 0.1 }
            })
            .collect();
        let a = stream_accuracy(&raw, &truth, 0.8);
        assert!(a.filtered >= a.raw, "{a:?}");
    }

    #[test]
    fn oracle_walk_in_runs_all_schemes() {
        let layout = crate::scenario::build_layout(&crate::scenario::LayoutConfig::default()).unwrap();
        let cfg = LocalizationExperimentConfig::default();
        let oracle = |e: &Ecir| if e.condition == Condition::Nlos { 0.99 } else { 0.01 };
        let logs = run_localization_walk_in(&layout, &cfg, &oracle, Some(1), 0, 9).unwrap();
        assert!(logs.len() >= 10);
        for l in &logs {
            assert_eq!(l.fixes.len(), 3);
            assert_eq!(l.fixes[0].used_anchors.len(), 6);
            assert_eq!(l.fixes[1].used_anchors.len(), 4);
            assert!(!l.fixes[2].used_anchors.contains(&1));
        }
    }
}
