//! Model files: one JSON header line naming the format, version and kind,
//! followed by the CBOR-encoded model.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelKind, TrainedModel};
use crate::error::{Error, Result};

pub const MODEL_FORMAT_VERSION: u32 = 1;
const MODEL_FORMAT: &str = "oilsense-model";

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    kind: ModelKind,
    #[serde(default)]
    config_hash: Option<String>,
}

pub fn model_to_bytes(model: &TrainedModel) -> Result<Vec<u8>> {
    let header = Header {
        format: MODEL_FORMAT.to_owned(),
        version: MODEL_FORMAT_VERSION,
        kind: model.kind(),
        config_hash: model.manifest.config_hash.clone(),
    };
    let mut out = serde_json::to_vec(&header).map_err(|e| Error::Serialization(e.to_string()))?;
    out.push(b'\n');
    ciborium::into_writer(model, &mut out).map_err(|e| Error::Serialization(e.to_string()))?;
    Ok(out)
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<TrainedModel> {
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Schema("model file has no header line".into()))?;
    let header: Header = serde_json::from_slice(&bytes[..newline])
        .map_err(|e| Error::Schema(format!("bad model header: {e}")))?;
    if header.format != MODEL_FORMAT {
        return Err(Error::Schema(format!("`{}` is not a model file", header.format)));
    }
    if header.version != MODEL_FORMAT_VERSION {
        return Err(Error::Version { found: header.version, expected: MODEL_FORMAT_VERSION });
    }
    let model: TrainedModel = ciborium::from_reader(&bytes[newline + 1..])
        .map_err(|e| Error::Schema(format!("corrupt model body: {e}")))?;
    if model.kind() != header.kind {
        return Err(Error::Schema(format!("header says {} but body holds {}", header.kind, model.kind())));
    }
    Ok(model)
}

pub fn save_model(model: &TrainedModel, path: &Path) -> Result<()> {
    let bytes = model_to_bytes(model)?;
    let mut out = crate::dataset::io::create(path)?;
    out.write_all(&bytes).and_then(|_| out.flush()).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<TrainedModel> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    model_from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifiers::{train, ModelConfig, ModelParams};
    use crate::matrix::FeatureMatrix;

    fn data() -> FeatureMatrix {
        let values = (0..150).map(|i| ((i * 7919) % 89) as f64 / 17.0 - 2.5).collect();
        FeatureMatrix::new(vec!["a".into(), "b".into(), "c".into()], values, (0..50).map(|i| i % 4).collect(), 4).unwrap()
    }

    #[test]
    fn round_trip_keeps_scores() {
        let d = data();
        let mut config = ModelConfig::default();
        config.forest.n_trees = 5;
        config.logistic.epochs = 20;
        for kind in crate::classifiers::ModelKind::ALL {
            let model = train(&d, &config.hyperparameters(kind), 4).unwrap();
            let back = model_from_bytes(&model_to_bytes(&model).unwrap()).unwrap();
            assert_eq!(back, model);
            assert_eq!(back.score(&d).unwrap(), model.score(&d).unwrap());
        }
    }

    #[test]
    fn version_mismatch_fails() {
        let model = train(&data(), &ModelConfig::default().hyperparameters(crate::classifiers::ModelKind::Knn), 0).unwrap();
        let bytes = model_to_bytes(&model).unwrap();
        let text = String::from_utf8_lossy(&bytes).replacen("\"version\":1", "\"version\":99", 1);
        let tampered: Vec<u8> = text.bytes().collect();
        let pos = bytes.iter().position(|&b| b == b'\n').unwrap();
        let mut patched = tampered[..tampered.iter().position(|&b| b == b'\n').unwrap() + 1].to_vec();
        patched.extend_from_slice(&bytes[pos + 1..]);
        assert!(matches!(model_from_bytes(&patched), Err(Error::Version { found: 99, expected: 1 })));
        assert!(matches!(model.params, ModelParams::Knn(_)));
    }
}
