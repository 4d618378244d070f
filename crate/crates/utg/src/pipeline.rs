//! Experiment orchestration: data synthesis, training, evaluation and the
//! full report run. Every random draw derives from the config seed.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use utg_core::classifier::{classify_raw, dataset_plan, synth_ecir, synth_frame, LosModel};
use utg_core::ecir::{transfer_latency, Ecir, LatencyModel, ECIR_LEN};
use utg_core::experiment::{
    block_stream, measure_transitions, run_localization_experiment, run_pose_stream, stream_accuracy, RoundLog,
};
use utg_core::gate::{simulate_walk_in, GateMachine, OpenPolicy, WalkInConfig, WalkInResult};
use utg_core::localization::Scheme;
use utg_core::neural::{NeuralError, Serial, TrainReport};
use utg_core::pose::{synth_branch_dataset, ImuWindow, PoseError, PoseModel, PoseModels};
use utg_core::rng::{derive_seed, derive_seed_path, rng_from_seed};
use utg_core::scenario::WorldLayout;
use utg_core::{classifier::ClassifierError, Condition, Pose};

use crate::config::ExperimentConfig;
use crate::dataset::CirRecord;
use crate::error::HarnessError;
use crate::report::{
    ClassificationRow, GatePolicyKind, GateRow, HeldOut, LatencyRow, LocalizationRow, MetricsReport, PoseRow,
    TrainingSummary,
};

// Seed tags for the independent random streams of one run.
const TAG_CIR_DATA: u64 = 0x10;
const TAG_CIR_SPLIT: u64 = 0x11;
const TAG_POSE_DATA: u64 = 0x20;
const TAG_POSE_SPLIT: u64 = 0x21;
const TAG_CLASSIFY_STREAM: u64 = 0x30;
const TAG_POSE_STREAM: u64 = 0x31;
const TAG_TRANSITIONS: u64 = 0x32;
const TAG_LOCALIZATION: u64 = 0x40;
const TAG_GATE: u64 = 0x50;

/// Hooks for progress messages and per-item traces. All methods default to
/// doing nothing.
pub trait Observer {
    fn log(&mut self, _message: &str) {}
    fn epoch(&mut self, _model: &str, _epoch: usize, _loss: f64) {}
    fn localization_walk_in(&mut self, _scenario: Condition, _rounds: &[RoundLog]) {}
    fn pose_frame(&mut self, _pose: Pose, _frame: usize, _gated: Condition, _predicted: Pose, _p: f64) {}
    fn gate_walk_in(&mut self, _policy: GatePolicyKind, _pose: Pose, _walk_in: usize, _result: &WalkInResult) {}
}

/// Observer that ignores everything.
pub struct Quiet;
impl Observer for Quiet {}

/// Indices of a disjoint train/test split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Splits per label so both parts keep the label proportions. Each label
/// with at least two items contributes at least one to each part.
pub fn stratified_split<L: Ord + Copy>(labels: &[L], test_fraction: f64, seed: u64) -> Split {
    let mut by_label: BTreeMap<L, Vec<usize>> = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        by_label.entry(*l).or_default().push(i);
    }
    let mut rng = rng_from_seed(seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (_, mut idx) in by_label {
        idx.shuffle(&mut rng);
        let n = idx.len();
        let mut k = (test_fraction * n as f64).round() as usize;
        if n >= 2 {
            k = k.clamp(1, n - 1);
        }
        test.extend_from_slice(&idx[..k]);
        train.extend_from_slice(&idx[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Split { train, test }
}

/// The labelled CIR dataset described by the config.
pub fn synth_cir_records(cfg: &ExperimentConfig) -> Result<Vec<CirRecord>, HarnessError> {
    let plan = dataset_plan(cfg.classifier.samples_per_class, derive_seed(cfg.seed, TAG_CIR_DATA));
    plan.into_iter()
        .map(|(pose, s)| {
            let (frame, diag) = synth_frame(&cfg.channel.synth, &cfg.channel.detection, pose, s)?;
            Ok(CirRecord::from_frame(&frame, diag))
        })
        .collect()
}

pub fn records_to_ecirs(records: &[CirRecord]) -> Result<Vec<Ecir>, HarnessError> {
    records
        .iter()
        .enumerate()
        .map(|(i, r)| r.ecir(true).map_err(|e| HarnessError::Training(format!("dataset row {i}: {e}"))))
        .collect()
}

/// Train and test eCIRs, split by label.
pub fn split_ecirs(cfg: &ExperimentConfig, ecirs: Vec<Ecir>) -> (Vec<Ecir>, Vec<Ecir>) {
    let labels: Vec<Condition> = ecirs.iter().map(|e| e.condition).collect();
    let split = stratified_split(&labels, cfg.classifier.test_fraction, derive_seed(cfg.seed, TAG_CIR_SPLIT));
    let pick = |idx: &[usize]| idx.iter().map(|&i| ecirs[i].clone()).collect();
    (pick(&split.train), pick(&split.test))
}

fn training_error(e: NeuralError) -> HarnessError {
    HarnessError::Training(e.to_string())
}

fn check_history(model: &str, report: &TrainReport) -> Result<(), HarnessError> {
    match report.loss_history.iter().position(|l| !l.is_finite()) {
        Some(epoch) => Err(HarnessError::Training(format!("{model}: loss diverged at epoch {epoch}"))),
        None => Ok(()),
    }
}

pub fn train_classifier(
    cfg: &ExperimentConfig,
    train: &[Ecir],
    obs: &mut dyn Observer,
) -> Result<(LosModel, TrainReport), HarnessError> {
    let mut model = LosModel::new(cfg.classifier.model_seed)?;
    let tc = utg_core::neural::TrainConfig { seed: derive_seed(cfg.classifier.model_seed, 1), ..cfg.classifier.train };
    let report = model
        .train_with(train, &tc, &mut Serial, &mut |e, l| obs.epoch("classifier", e, l))
        .map_err(|e| match e {
            ClassifierError::Neural(n) => training_error(n),
            other => HarnessError::Classifier(other),
        })?;
    check_history("classifier", &report)?;
    Ok((model, report))
}

/// Held-out accuracy without the filter, and with it on a stream of
/// alternating constant-condition blocks.
pub fn evaluate_classifier(
    cfg: &ExperimentConfig,
    model: &LosModel,
    test: &[Ecir],
) -> Result<(f64, f64), HarnessError> {
    let preds = test.iter().map(|e| classify_raw(model, e)).collect::<Result<Vec<_>, _>>()?;
    let truth: Vec<Condition> = test.iter().map(|e| e.condition).collect();
    let order = block_stream(&truth, cfg.classifier.block_len);
    let raw: Vec<f64> = order.iter().map(|&i| preds[i]).collect();
    let tr: Vec<Condition> = order.iter().map(|&i| truth[i]).collect();
    let acc = stream_accuracy(&raw, &tr, cfg.classifier.lpf_weight);
    Ok((acc.raw, acc.filtered))
}

/// Per-branch train and test windows.
pub struct PoseData {
    pub train: [Vec<(ImuWindow, Pose)>; 2],
    pub test: [Vec<(ImuWindow, Pose)>; 2],
}

pub fn synth_pose_data(cfg: &ExperimentConfig, layout: &WorldLayout) -> Result<PoseData, HarnessError> {
    let mut train: [Vec<(ImuWindow, Pose)>; 2] = Default::default();
    let mut test: [Vec<(ImuWindow, Pose)>; 2] = Default::default();
    for (k, branch) in [Condition::Los, Condition::Nlos].into_iter().enumerate() {
        let s = derive_seed_path(cfg.seed, &[TAG_POSE_DATA, k as u64]);
        let data = synth_branch_dataset(layout, &cfg.pose.walk, &cfg.pose.imu, branch, cfg.pose.windows_per_pose, s)?;
        let labels: Vec<Pose> = data.iter().map(|(_, p)| *p).collect();
        let split = stratified_split(&labels, cfg.pose.test_fraction, derive_seed_path(cfg.seed, &[TAG_POSE_SPLIT, k as u64]));
        train[k] = split.train.iter().map(|&i| data[i].clone()).collect();
        test[k] = split.test.iter().map(|&i| data[i].clone()).collect();
    }
    Ok(PoseData { train, test })
}

pub fn train_pose_models(
    cfg: &ExperimentConfig,
    data: &PoseData,
    obs: &mut dyn Observer,
) -> Result<(PoseModels, [TrainReport; 2]), HarnessError> {
    let mut models = PoseModels::new(cfg.pose.model_seed)?;
    let mut reports: [TrainReport; 2] = Default::default();
    for (k, branch) in [Condition::Los, Condition::Nlos].into_iter().enumerate() {
        let name = if k == 0 { "pose_los" } else { "pose_nlos" };
        let tc = utg_core::neural::TrainConfig {
            seed: derive_seed_path(cfg.pose.model_seed, &[1, k as u64]),
            ..cfg.pose.train
        };
        let report = models
            .branch_mut(branch)
            .train_with(&data.train[k], &tc, &mut Serial, &mut |e, l| obs.epoch(name, e, l))
            .map_err(|e| match e {
                PoseError::Neural(n) => training_error(n),
                other => HarnessError::Pose(other),
            })?;
        check_history(name, &report)?;
        reports[k] = report;
    }
    Ok((models, reports))
}

/// Fraction of windows whose branch prediction matches the label.
pub fn pose_accuracy(model: &PoseModel, data: &[(ImuWindow, Pose)]) -> Result<f64, HarnessError> {
    if data.is_empty() {
        return Ok(0.0);
    }
    let (hand, pocket) = model.poses();
    let mut ok = 0;
    for (w, p) in data {
        let guess = if model.predict(w)? >= 0.5 { pocket } else { hand };
        ok += (guess == *p) as usize;
    }
    Ok(ok as f64 / data.len() as f64)
}

/// LOS/NLOS accuracy of one constant-pose stream per pose.
pub fn classification_rows(cfg: &ExperimentConfig, model: &LosModel) -> Result<Vec<ClassificationRow>, HarnessError> {
    let n = cfg.pose.stream_frames;
    let mut rows = Vec::new();
    for pose in Pose::ALL {
        let mut raw = Vec::with_capacity(n);
        for k in 0..n {
            let s = derive_seed_path(cfg.seed, &[TAG_CLASSIFY_STREAM, pose as u64, k as u64]);
            raw.push(classify_raw(model, &synth_ecir(&cfg.channel.synth, &cfg.channel.detection, pose, s)?)?);
        }
        let acc = stream_accuracy(&raw, &vec![pose.condition(); n], cfg.classifier.lpf_weight);
        rows.push(ClassificationRow { pose, raw: acc.raw, filtered: acc.filtered, frames: n });
    }
    Ok(rows)
}

pub fn pose_rows(
    cfg: &ExperimentConfig,
    layout: &WorldLayout,
    model: &LosModel,
    pose_models: &PoseModels,
    obs: &mut dyn Observer,
) -> Result<Vec<PoseRow>, HarnessError> {
    let stream = cfg.pose_stream();
    let mut rows = Vec::new();
    for pose in Pose::ALL {
        let s = derive_seed_path(cfg.seed, &[TAG_POSE_STREAM, pose as u64]);
        let r = run_pose_stream(layout, model, pose_models, pose, &stream, s, |k, c, p, prob| {
            obs.pose_frame(pose, k, c, p, prob)
        })?;
        rows.push(PoseRow {
            pose,
            condition_accuracy: r.condition_accuracy,
            pose_accuracy: r.pose_accuracy,
            frames: r.frames,
        });
    }
    Ok(rows)
}

pub fn latency_rows(cfg: &ExperimentConfig) -> Vec<LatencyRow> {
    let model = LatencyModel::default();
    [ECIR_LEN, utg_core::channel::CIR_LEN]
        .into_iter()
        .map(|n| {
            let l = transfer_latency(n, &model).expect("positive sample count");
            LatencyRow {
                samples: n,
                ms: l.ms,
                extrapolated: l.extrapolated,
                ranging_interval_ms: cfg.intervals.ds_twr_ms,
                fits_interval: l.ms < cfg.intervals.ds_twr_ms as f64,
            }
        })
        .collect()
}

pub fn localization_rows(
    cfg: &ExperimentConfig,
    layout: &WorldLayout,
    model: &LosModel,
    obs: &mut dyn Observer,
) -> Result<Vec<LocalizationRow>, HarnessError> {
    let exp = cfg.localization_experiment();
    let summary = run_localization_experiment(layout, &exp, model, derive_seed(cfg.seed, TAG_LOCALIZATION), |c, logs| {
        obs.localization_walk_in(c, logs)
    })?;
    let mut rows = Vec::new();
    for (scenario, s) in [(Condition::Los, &summary.los), (Condition::Nlos, &summary.nlos)] {
        for scheme in Scheme::ALL {
            let st = s.get(scheme);
            rows.push(LocalizationRow {
                scenario,
                scheme,
                mean_cm: st.mean_cm,
                std_cm: st.std_cm,
                fixes: st.count,
                rejected: if scheme == Scheme::Full { s.full_rejected } else { 0 },
            });
        }
    }
    Ok(rows)
}

pub fn gate_rows(cfg: &ExperimentConfig, layout: &WorldLayout, obs: &mut dyn Observer) -> Result<Vec<GateRow>, HarnessError> {
    let policies = [
        (GatePolicyKind::Adaptive, cfg.gate.policy),
        (GatePolicyKind::Agnostic, OpenPolicy::pose_agnostic(cfg.gate.policy.base_open_distance)),
    ];
    let base = cfg.walk_in();
    let mut rows = Vec::new();
    for (kind, policy) in policies {
        let machine = GateMachine::new(layout, policy)?;
        for pose in Pose::ALL {
            let wc = WalkInConfig { pose, ..base.clone() };
            let (mut opened, mut sum) = (0usize, 0.0);
            for i in 0..cfg.iterations {
                // Both policies see the same walks.
                let s = derive_seed_path(cfg.seed, &[TAG_GATE, pose as u64, i as u64]);
                let r = simulate_walk_in(layout, &machine, &wc, s)?;
                if let Some(d) = r.open_body_distance_cm {
                    opened += 1;
                    sum += d;
                }
                obs.gate_walk_in(kind, pose, i, &r);
            }
            rows.push(GateRow {
                policy: kind,
                pose,
                walk_ins: cfg.iterations,
                opened,
                mean_open_distance_cm: if opened == 0 { 0.0 } else { sum / opened as f64 },
            });
        }
    }
    Ok(rows)
}

/// Trained models plus what is needed to describe their training.
pub struct TrainedModels {
    pub classifier: LosModel,
    pub pose: PoseModels,
    pub summary: TrainingSummary,
    /// Held-out accuracies measured right after training.
    pub held_out: HeldOut,
}

/// Synthesizes both datasets, trains both model families and scores them on
/// their held-out splits.
pub fn train_all(
    cfg: &ExperimentConfig,
    records: Option<Vec<CirRecord>>,
    obs: &mut dyn Observer,
) -> Result<TrainedModels, HarnessError> {
    let layout = cfg.world()?;
    let records = match records {
        Some(r) => r,
        None => {
            obs.log(&format!("synthesizing {} CIRs per class", cfg.classifier.samples_per_class));
            synth_cir_records(cfg)?
        }
    };
    let (train, test) = split_ecirs(cfg, records_to_ecirs(&records)?);
    obs.log(&format!("training classifier on {} eCIRs ({} held out)", train.len(), test.len()));
    let (classifier, creport) = train_classifier(cfg, &train, obs)?;
    let (raw, filtered) = evaluate_classifier(cfg, &classifier, &test)?;

    obs.log(&format!("synthesizing {} IMU windows per pose", cfg.pose.windows_per_pose));
    let data = synth_pose_data(cfg, &layout)?;
    let (pose, [los_report, nlos_report]) = train_pose_models(cfg, &data, obs)?;
    let held_out = HeldOut {
        samples: test.len(),
        raw_accuracy: raw,
        block_filtered_accuracy: filtered,
        block_len: cfg.classifier.block_len,
        pose_los_accuracy: pose_accuracy(&pose.los, &data.test[0])?,
        pose_nlos_accuracy: pose_accuracy(&pose.nlos, &data.test[1])?,
    };
    let summary = TrainingSummary {
        classifier_train_samples: train.len(),
        classifier_loss: creport.loss_history,
        pose_train_samples: data.train[0].len() + data.train[1].len(),
        pose_los_loss: los_report.loss_history,
        pose_nlos_loss: nlos_report.loss_history,
    };
    Ok(TrainedModels { classifier, pose, summary, held_out })
}

/// Runs every evaluation with the given models and assembles the report.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    models: &TrainedModels,
    obs: &mut dyn Observer,
) -> Result<MetricsReport, HarnessError> {
    cfg.validate()?;
    let layout = cfg.world()?;
    obs.log("classification streams");
    let classification = classification_rows(cfg, &models.classifier)?;
    obs.log("pose streams");
    let pose = pose_rows(cfg, &layout, &models.classifier, &models.pose, obs)?;
    obs.log("transition delays");
    let transitions =
        measure_transitions(&models.classifier, &cfg.transition_experiment(), derive_seed(cfg.seed, TAG_TRANSITIONS))?;
    obs.log(&format!("localization: {} walk-ins per scenario", cfg.iterations));
    let localization = localization_rows(cfg, &layout, &models.classifier, obs)?;
    obs.log("gate walk-ins");
    let gate = gate_rows(cfg, &layout, obs)?;
    let report = MetricsReport {
        seed: cfg.seed,
        iterations: cfg.iterations,
        training: models.summary.clone(),
        held_out: models.held_out,
        classification,
        pose,
        localization,
        transitions,
        latency: latency_rows(cfg),
        gate,
    };
    report.validate()?;
    Ok(report)
}
