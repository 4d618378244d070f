//! Pose prediction from IMU windows with two CNN-LSTM branch models.

use alloc::vec::Vec;

use rand::Rng;

use crate::neural::{conv_block, BatchExecutor, LayerSpec, Network, NeuralError, Tensor, TrainConfig, TrainReport};
use crate::rng::{derive_seed, rng_from_seed};
use crate::scenario::{
    gen_trajectory, synth_imu, ImuModel, ImuStream, PoseSchedule, ScenarioError, WalkParams, WorldLayout, IMU_PERIOD_MS,
};
use crate::{Condition, Pose};

pub const WINDOW_STEPS: usize = 18;
pub const IMU_FEATURES: usize = 6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PoseError {
    #[error("need {needed} samples at or before {t_ms} ms, have {have}")]
    InsufficientHistory { t_ms: u64, needed: usize, have: usize },
    #[error("window samples are not on a contiguous {IMU_PERIOD_MS} ms grid")]
    Gap,
    #[error("the {0} branch model has not been trained")]
    Untrained(Condition),
    #[error("training data for the {0} branch contains a pose of the other branch")]
    WrongBranch(Condition),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}

/// 18 consecutive IMU samples, oldest first.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ImuWindow {
    pub rows: [[f64; IMU_FEATURES]; WINDOW_STEPS],
    pub end_ms: u64,
}

impl ImuWindow {
    pub fn tensor(&self) -> Tensor<f32> {
        let data = self.rows.iter().flatten().map(|&v| v as f32).collect();
        Tensor::new(alloc::vec![1, WINDOW_STEPS, IMU_FEATURES], data).expect("fixed window shape")
    }
}

/// The 18 most recent samples at or before `t_ms`.
pub fn window_imu(stream: &ImuStream, t_ms: u64) -> Result<ImuWindow, PoseError> {
    let s = stream.samples();
    let end = s.partition_point(|x| x.t_ms <= t_ms);
    if end < WINDOW_STEPS {
        return Err(PoseError::InsufficientHistory { t_ms, needed: WINDOW_STEPS, have: end });
    }
    let part = &s[end - WINDOW_STEPS..end];
    if part.windows(2).any(|w| w[1].t_ms != w[0].t_ms + IMU_PERIOD_MS) {
        return Err(PoseError::Gap);
    }
    Ok(ImuWindow { rows: core::array::from_fn(|i| part[i].features()), end_ms: part[WINDOW_STEPS - 1].t_ms })
}

pub const POSE_FILTERS: [usize; 3] = [64, 128, 256];
pub const POSE_KERNEL: usize = 2;
pub const LSTM_UNITS: usize = 128;

/// Conv2d blocks, then the time axis becomes the sequence axis of the LSTM.
pub fn pose_model_specs() -> Vec<LayerSpec> {
    let mut specs = Vec::new();
    for filters in POSE_FILTERS {
        specs.extend(conv_block(LayerSpec::Conv2d { filters, kernel: POSE_KERNEL }, 0.2, 2));
    }
    specs.extend([
        LayerSpec::Sequence,
        LayerSpec::Lstm { units: LSTM_UNITS },
        LayerSpec::Flatten,
        LayerSpec::Dense { units: 1 },
        LayerSpec::Sigmoid,
    ]);
    specs
}

/// One branch model. Its output is the probability of the pocket pose of
/// its branch (FRONT for LOS, BACK for NLOS).
#[derive(Debug, Clone, PartialEq)]
pub struct PoseModel {
    pub branch: Condition,
    pub net: Network<f32>,
    pub trained: bool,
}

impl PoseModel {
    pub fn new(branch: Condition, seed: u64) -> Result<Self, PoseError> {
        let net = Network::new(&[1, WINDOW_STEPS, IMU_FEATURES], &pose_model_specs(), seed)?;
        Ok(Self { branch, net, trained: false })
    }

    pub fn from_network(branch: Condition, net: Network<f32>) -> Result<Self, PoseError> {
        if net.input_shape() != [1, WINDOW_STEPS, IMU_FEATURES] || net.output_shape() != [1] {
            return Err(NeuralError::Input {
                expected: alloc::vec![1, WINDOW_STEPS, IMU_FEATURES],
                got: net.input_shape().to_vec(),
            }
            .into());
        }
        Ok(Self { branch, net, trained: true })
    }

    /// The two poses this branch separates: (hand, pocket).
    pub fn poses(&self) -> (Pose, Pose) {
        branch_poses(self.branch)
    }

    pub fn train_with<E: BatchExecutor<f32> + ?Sized>(
        &mut self,
        data: &[(ImuWindow, Pose)],
        config: &TrainConfig,
        executor: &mut E,
        on_epoch: &mut dyn FnMut(usize, f64),
    ) -> Result<TrainReport, PoseError> {
        let (hand, pocket) = self.poses();
        let mut inputs = Vec::with_capacity(data.len());
        let mut labels = Vec::with_capacity(data.len());
        for (w, p) in data {
            let label = match *p {
                x if x == hand => 0.0,
                x if x == pocket => 1.0,
                _ => return Err(PoseError::WrongBranch(self.branch)),
            };
            inputs.push(w.tensor());
            labels.push(label);
        }
        let report = crate::neural::train_with(&mut self.net, &inputs, &labels, config, executor, on_epoch)?;
        self.trained = true;
        Ok(report)
    }

    /// Probability of the pocket pose.
    pub fn predict(&self, window: &ImuWindow) -> Result<f64, PoseError> {
        if !self.trained {
            return Err(PoseError::Untrained(self.branch));
        }
        Ok(self.net.predict(&window.tensor())?.data()[0] as f64)
    }
}

pub fn branch_poses(branch: Condition) -> (Pose, Pose) {
    match branch {
        Condition::Los => (Pose::Los, Pose::Front),
        Condition::Nlos => (Pose::Nlos, Pose::Back),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseModels {
    pub los: PoseModel,
    pub nlos: PoseModel,
}

impl PoseModels {
    pub fn new(seed: u64) -> Result<Self, PoseError> {
        Ok(Self {
            los: PoseModel::new(Condition::Los, derive_seed(seed, 0))?,
            nlos: PoseModel::new(Condition::Nlos, derive_seed(seed, 1))?,
        })
    }

    pub fn branch(&self, condition: Condition) -> &PoseModel {
        match condition {
            Condition::Los => &self.los,
            Condition::Nlos => &self.nlos,
        }
    }

    pub fn branch_mut(&mut self, condition: Condition) -> &mut PoseModel {
        match condition {
            Condition::Los => &mut self.los,
            Condition::Nlos => &mut self.nlos,
        }
    }
}

/// Routes the window to the branch of `condition`. The sigmoid output is used
/// as is, without filtering.
pub fn predict_pose(window: &ImuWindow, condition: Condition, models: &PoseModels) -> Result<(Pose, f64), PoseError> {
    let model = models.branch(condition);
    let p = model.predict(window)?;
    let (hand, pocket) = model.poses();
    Ok((if p >= 0.5 { pocket } else { hand }, p))
}

/// Windows of constant `pose`, one per independent synthetic walk so that
/// tilt and gait phase vary between windows.
pub fn synth_pose_windows(
    layout: &WorldLayout,
    walk: &WalkParams,
    imu: &ImuModel,
    pose: Pose,
    count: usize,
    seed: u64,
) -> Result<Vec<ImuWindow>, PoseError> {
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let s = derive_seed(seed, i as u64);
        let traj = gen_trajectory(layout, walk, s)?;
        let sched = PoseSchedule::constant(pose, traj.start_ms(), traj.end_ms());
        let stream = synth_imu(&traj, &sched, imu, s)?;
        if stream.len() < WINDOW_STEPS {
            return Err(PoseError::InsufficientHistory { t_ms: traj.end_ms(), needed: WINDOW_STEPS, have: stream.len() });
        }
        let mut rng = rng_from_seed(derive_seed(s, 0x3d));
        let end = rng.random_range(WINDOW_STEPS - 1..stream.len());
        out.push(window_imu(&stream, stream.samples()[end].t_ms)?);
    }
    Ok(out)
}

/// Labelled training set for one branch: `count` windows of each of its poses,
/// interleaved.
pub fn synth_branch_dataset(
    layout: &WorldLayout,
    walk: &WalkParams,
    imu: &ImuModel,
    branch: Condition,
    count: usize,
    seed: u64,
) -> Result<Vec<(ImuWindow, Pose)>, PoseError> {
    let (hand, pocket) = branch_poses(branch);
    let a = synth_pose_windows(layout, walk, imu, hand, count, derive_seed(seed, 0xA))?;
    let b = synth_pose_windows(layout, walk, imu, pocket, count, derive_seed(seed, 0xB))?;
    Ok(a.into_iter().map(|w| (w, hand)).zip(b.into_iter().map(|w| (w, pocket))).flat_map(|(x, y)| [x, y]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{build_layout, ImuSample, LayoutConfig};

    fn stream(n: usize) -> ImuStream {
        let samples = (0..n)
            .map(|i| ImuSample { t_ms: i as u64 * IMU_PERIOD_MS, accel: [i as f64, 0.0, 0.0], gravity: [0.0; 3] })
            .collect();
        ImuStream::from_samples(samples).unwrap()
    }

    #[test]
    fn window_boundaries() {
        let s = stream(18);
        let w = window_imu(&s, 17 * 60).unwrap();
        assert_eq!(w.rows[0][0], 0.0);
        assert_eq!(w.rows[17][0], 17.0);
        assert!(matches!(window_imu(&stream(17), 16 * 60), Err(PoseError::InsufficientHistory { have: 17, .. })));
        let s = stream(30);
        let w = window_imu(&s, 25 * 60 + 59).unwrap();
        assert_eq!(w.end_ms, 25 * 60);
        assert_eq!(w.rows[17][0], 25.0);
        assert_eq!(w.end_ms - (w.end_ms - 17 * 60), 1020);
    }

    #[test]
    fn model_dimension_trace() {
        let m = PoseModel::new(Condition::Los, 1).unwrap();
        let trace = m.net.shape_trace();
        let seq = trace.iter().position(|s| s == &[3, 256]).expect("sequence shape");
        assert_eq!(trace[seq - 1], [256, 3, 1]);
        assert_eq!(trace[seq + 1], [LSTM_UNITS]);
        assert_eq!(trace.last().unwrap(), &[1]);
    }

    #[test]
    fn branch_routing_and_isolation() {
        let mut models = PoseModels::new(3).unwrap();
        models.los.trained = true;
        models.nlos.trained = true;
        let layout = build_layout(&LayoutConfig::default()).unwrap();
        let ws = synth_pose_windows(&layout, &WalkParams::default(), &ImuModel::default(), Pose::Los, 3, 9).unwrap();
        let before: Vec<_> = ws.iter().map(|w| predict_pose(w, Condition::Los, &models).unwrap()).collect();
        for p in models.nlos.net.params_mut() {
            p.data_mut().iter_mut().for_each(|x| *x = -*x * 3.0);
        }
        for (w, b) in ws.iter().zip(&before) {
            let now = predict_pose(w, Condition::Los, &models).unwrap();
            assert_eq!(&now, b);
            assert!(matches!(now.0, Pose::Los | Pose::Front));
            assert!(matches!(predict_pose(w, Condition::Nlos, &models).unwrap().0, Pose::Nlos | Pose::Back));
        }
        assert_eq!(predict_pose(&ws[0], Condition::Los, &models), predict_pose(&ws[0], Condition::Los, &models));
    }

    #[test]
    fn untrained_branch_is_flagged() {
        let mut models = PoseModels::new(3).unwrap();
        models.los.trained = true;
        let layout = build_layout(&LayoutConfig::default()).unwrap();
        let ws = synth_pose_windows(&layout, &WalkParams::default(), &ImuModel::default(), Pose::Back, 1, 9).unwrap();
        assert_eq!(predict_pose(&ws[0], Condition::Nlos, &models), Err(PoseError::Untrained(Condition::Nlos)));
    }

    #[test]
    fn branch_dataset_rejects_foreign_pose() {
        let mut m = PoseModel::new(Condition::Los, 1).unwrap();
        let layout = build_layout(&LayoutConfig::default()).unwrap();
        let ws = synth_pose_windows(&layout, &WalkParams::default(), &ImuModel::default(), Pose::Back, 1, 9).unwrap();
        let data = [(ws[0].clone(), Pose::Back)];
        assert_eq!(m.train_with(&data, &TrainConfig::default(), &mut crate::neural::Serial, &mut |_, _| {}).err(), Some(PoseError::WrongBranch(Condition::Los)));
    }
}
