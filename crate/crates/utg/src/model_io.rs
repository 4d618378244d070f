//! JSON model files.
//!
//! A bundle stores the LOS/NLOS classifier and the two pose branches as
//! layer specs plus flat parameter arrays. Loading rebuilds each network from
//! its specs and checks every parameter shape.

use std::path::Path;

use serde::{Deserialize, Serialize};
use utg_core::classifier::LosModel;
use utg_core::neural::{LayerSpec, Network, NeuralError, Tensor};
use utg_core::pose::{PoseModel, PoseModels};
use utg_core::Condition;

use crate::pipeline::TrainedModels;
use crate::report::{HeldOut, TrainingSummary};

pub const FORMAT: &str = "utg-model-bundle/1";

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed model file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported model format `{0}`")]
    Format(String),
    #[error("model `{name}`: {source}")]
    Network { name: &'static str, source: NeuralError },
    #[error("model `{name}` does not fit its role: {reason}")]
    Role { name: &'static str, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkFile {
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
    /// Parameter tensors in layer order, flattened row-major.
    pub params: Vec<Vec<f32>>,
}

impl NetworkFile {
    pub fn from_network(net: &Network<f32>) -> Self {
        Self {
            input_shape: net.input_shape().to_vec(),
            layers: net.specs(),
            params: net.params().map(|t| t.data().to_vec()).collect(),
        }
    }

    pub fn to_network(&self) -> Result<Network<f32>, NeuralError> {
        let mut net = Network::new(&self.input_shape, &self.layers, 0)?;
        let shapes: Vec<Vec<usize>> = net.params().map(|t| t.shape().to_vec()).collect();
        if shapes.len() != self.params.len() {
            return Err(NeuralError::ParamMismatch { expected: shapes.len(), got: self.params.len() });
        }
        let tensors = shapes
            .into_iter()
            .zip(&self.params)
            .map(|(shape, data)| Tensor::new(shape, data.clone()))
            .collect::<Result<Vec<_>, _>>()?;
        net.set_params(tensors)?;
        Ok(net)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub format: String,
    pub classifier: NetworkFile,
    pub pose_los: NetworkFile,
    pub pose_nlos: NetworkFile,
    pub training: TrainingSummary,
    pub held_out: HeldOut,
}

impl ModelBundle {
    pub fn new(models: &TrainedModels) -> Self {
        Self {
            format: FORMAT.to_string(),
            classifier: NetworkFile::from_network(&models.classifier.net),
            pose_los: NetworkFile::from_network(&models.pose.los.net),
            pose_nlos: NetworkFile::from_network(&models.pose.nlos.net),
            training: models.summary.clone(),
            held_out: models.held_out,
        }
    }

    pub fn models(&self) -> Result<TrainedModels, ModelError> {
        if self.format != FORMAT {
            return Err(ModelError::Format(self.format.clone()));
        }
        let net = |name, f: &NetworkFile| f.to_network().map_err(|source| ModelError::Network { name, source });
        let classifier = LosModel::from_network(net("classifier", &self.classifier)?)
            .map_err(|e| ModelError::Role { name: "classifier", reason: e.to_string() })?;
        let branch = |name, cond, f| {
            PoseModel::from_network(cond, net(name, f)?).map_err(|e| ModelError::Role { name, reason: e.to_string() })
        };
        let pose = PoseModels {
            los: branch("pose_los", Condition::Los, &self.pose_los)?,
            nlos: branch("pose_nlos", Condition::Nlos, &self.pose_nlos)?,
        };
        Ok(TrainedModels { classifier, pose, summary: self.training.clone(), held_out: self.held_out })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("bundle serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        std::fs::write(path, self.to_json()).map_err(|e| ModelError::Io { path: path.display().to_string(), source: e })
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| ModelError::Io { path: path.display().to_string(), source: e })?;
        Self::from_json(&text)
    }
}
