//! Metrics report: one JSON document plus one CSV per table.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use utg_core::experiment::TransitionDelay;
use utg_core::localization::Scheme;
use utg_core::{Condition, Pose};

/// JSON schema the report validates against.
pub const SCHEMA: &str = include_str!("../schema/metrics_report.schema.json");

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("report invariant violated: {0}")]
    Invariant(String),
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub seed: u64,
    pub iterations: usize,
    pub training: TrainingSummary,
    pub held_out: HeldOut,
    pub classification: Vec<ClassificationRow>,
    pub pose: Vec<PoseRow>,
    pub localization: Vec<LocalizationRow>,
    pub transitions: Vec<TransitionDelay>,
    pub latency: Vec<LatencyRow>,
    pub gate: Vec<GateRow>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub classifier_train_samples: usize,
    pub classifier_loss: Vec<f64>,
    pub pose_train_samples: usize,
    pub pose_los_loss: Vec<f64>,
    pub pose_nlos_loss: Vec<f64>,
}

/// Classifier accuracy on the held-out split.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct HeldOut {
    pub samples: usize,
    pub raw_accuracy: f64,
    /// Filtered accuracy with held-out samples arranged in constant blocks.
    pub block_filtered_accuracy: f64,
    pub block_len: usize,
    pub pose_los_accuracy: f64,
    pub pose_nlos_accuracy: f64,
}

/// LOS/NLOS accuracy of a constant-pose stream with and without the filter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationRow {
    pub pose: Pose,
    pub raw: f64,
    pub filtered: f64,
    pub frames: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseRow {
    pub pose: Pose,
    pub condition_accuracy: f64,
    pub pose_accuracy: f64,
    pub frames: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalizationRow {
    pub scenario: Condition,
    pub scheme: Scheme,
    pub mean_cm: f64,
    pub std_cm: f64,
    pub fixes: usize,
    pub rejected: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyRow {
    pub samples: usize,
    pub ms: f64,
    pub extrapolated: bool,
    pub ranging_interval_ms: u64,
    pub fits_interval: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateRow {
    pub policy: GatePolicyKind,
    pub pose: Pose,
    pub walk_ins: usize,
    pub opened: usize,
    /// Mean true body-to-gate distance at opening over opened walk-ins.
    pub mean_open_distance_cm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GatePolicyKind {
    Adaptive,
    Agnostic,
}

impl MetricsReport {
    pub fn validate(&self) -> Result<(), ReportError> {
        let bad = |m: String| Err(ReportError::Invariant(m));
        if self.iterations == 0 {
            return bad("report covers zero iterations".into());
        }
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        let mut accs = vec![
            ("held_out.raw_accuracy", self.held_out.raw_accuracy),
            ("held_out.block_filtered_accuracy", self.held_out.block_filtered_accuracy),
            ("held_out.pose_los_accuracy", self.held_out.pose_los_accuracy),
            ("held_out.pose_nlos_accuracy", self.held_out.pose_nlos_accuracy),
        ];
        for r in &self.classification {
            accs.push(("classification.raw", r.raw));
            accs.push(("classification.filtered", r.filtered));
        }
        for r in &self.pose {
            accs.push(("pose.condition_accuracy", r.condition_accuracy));
            accs.push(("pose.pose_accuracy", r.pose_accuracy));
        }
        if let Some((name, v)) = accs.iter().find(|(_, v)| !unit(*v)) {
            return bad(format!("{name} = {v} is not in [0, 1]"));
        }
        for r in &self.localization {
            if !(r.mean_cm >= 0.0 && r.std_cm >= 0.0) {
                return bad(format!("negative or undefined error for {:?}/{:?}", r.scenario, r.scheme));
            }
        }
        for r in &self.gate {
            if r.opened > r.walk_ins || !(r.mean_open_distance_cm >= 0.0 || r.opened == 0) {
                return bad(format!("inconsistent gate row {:?}/{:?}", r.policy, r.pose));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String, ReportError> {
        self.validate()?;
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        Ok(s)
    }

    /// Table name and CSV text of every table, in a fixed order.
    pub fn tables(&self) -> Result<Vec<(&'static str, String)>, ReportError> {
        Ok(vec![
            ("classification", csv_table(&self.classification)?),
            ("pose", csv_table(&self.pose)?),
            ("localization", csv_table(&self.localization)?),
            ("transitions", csv_table(&self.transitions)?),
            ("latency", csv_table(&self.latency)?),
            ("gate", csv_table(&self.gate)?),
        ])
    }

    /// Writes `report.json` and `<table>.csv` files into `dir`, returning the
    /// paths written.
    pub fn export(&self, dir: &Path) -> Result<Vec<PathBuf>, ReportError> {
        let json = self.to_json()?;
        let tables = self.tables()?;
        std::fs::create_dir_all(dir).map_err(|e| ReportError::Io { path: dir.to_path_buf(), source: e })?;
        let mut written = Vec::new();
        let mut put = |name: String, text: &str| -> Result<(), ReportError> {
            let path = dir.join(name);
            std::fs::write(&path, text).map_err(|e| ReportError::Io { path: path.clone(), source: e })?;
            written.push(path);
            Ok(())
        };
        put("report.json".into(), &json)?;
        for (name, text) in &tables {
            put(format!("{name}.csv"), text)?;
        }
        Ok(written)
    }
}

fn csv_table<T: Serialize>(rows: &[T]) -> Result<String, ReportError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| ReportError::Io { path: PathBuf::from("<memory>"), source: e.into_error() })?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}
