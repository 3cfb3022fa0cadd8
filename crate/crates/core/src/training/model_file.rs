use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::TrainConfig;
use crate::error::{Error, Result};
use crate::seqmodel::{ModelSpec, ParameterVector};

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// A trained model as stored on disk.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModel {
    pub spec: ModelSpec,
    pub theta: ParameterVector,
    pub train_config: TrainConfig,
    /// Whether a constant-1 column was appended to the observations.
    pub bias_feature: bool,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    spec: ModelSpec,
    theta_b64: String,
    theta: Vec<f64>,
    train_config: TrainConfig,
    bias_feature: bool,
}

fn encode_theta(theta: &[f64]) -> String {
    let bytes: Vec<u8> = theta.iter().flat_map(|v| v.to_le_bytes()).collect();
    STANDARD.encode(bytes)
}

fn decode_theta(text: &str) -> std::result::Result<Vec<f64>, String> {
    let bytes = STANDARD.decode(text).map_err(|e| e.to_string())?;
    if bytes.len() % 8 != 0 {
        return Err(format!("theta payload of {} bytes is not a multiple of 8", bytes.len()));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

impl TrainedModel {
    pub fn to_json(&self) -> String {
        let file = ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            spec: self.spec.clone(),
            theta_b64: encode_theta(self.theta.as_slice()),
            theta: self.theta.as_slice().to_vec(),
            train_config: self.train_config.clone(),
            bias_feature: self.bias_feature,
        };
        serde_json::to_string_pretty(&file).expect("model serializes") + "\n"
    }

    /// Parses a model file. The base64 payload is authoritative; the plain
    /// array must agree with it in length.
    pub fn from_json(text: &str, origin: &Path) -> Result<Self> {
        let file: ModelFile =
            serde_json::from_str(text).map_err(|e| Error::parse(origin, e.to_string()))?;
        if file.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::parse(
                origin,
                format!("unsupported model format version {}", file.format_version),
            ));
        }
        let values = decode_theta(&file.theta_b64).map_err(|e| Error::parse(origin, e))?;
        if values.len() != file.theta.len() {
            return Err(Error::parse(origin, "theta payload and array mirror differ in length"));
        }
        file.train_config.validate()?;
        let theta = ParameterVector::new(&file.spec, values)?;
        Ok(Self {
            spec: file.spec,
            theta,
            train_config: file.train_config,
            bias_feature: file.bias_feature,
        })
    }
}

pub fn save_model(path: impl AsRef<Path>, model: &TrainedModel) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, model.to_json()).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<TrainedModel> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    TrainedModel::from_json(&text, path)
}
