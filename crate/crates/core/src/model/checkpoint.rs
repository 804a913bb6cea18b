use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{AnyModel, ModelError, ModelKind, QnbmConfig, QnbmParams, QrdnnConfig, QrdnnParams};
use super::common::FeatureScaler;
use crate::dataset::FeatureLayout;
use crate::model::QuantileNet;
use crate::numkit::{RngState, RNG_ALGORITHM};

const MAGIC: &[u8; 8] = b"QNBMCKPT";
const VERSION: u32 = 1;

#[derive(Error, Debug)]
pub enum CheckpointError {
    #[error("failed to access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("checkpoint format version {found} is not supported (this build reads {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },
    #[error("checkpoint integrity failure: {0}")]
    Corrupt(String),
}

/// FNV-1a 64-bit hash, used for checkpoint integrity and config labelling.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

#[derive(Serialize, Deserialize)]
struct TensorInfo {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    model_type: ModelKind,
    rng_algorithm: String,
    horizon: usize,
    layout: FeatureLayout,
    layout_fingerprint: u64,
    feature_names: Vec<String>,
    scaler: FeatureScaler,
    qnbm: Option<QnbmConfig>,
    qrdnn: Option<QrdnnConfig>,
    tensors: Vec<TensorInfo>,
}

/// Serialize a model to the versioned binary container: a JSON shape header
/// followed by every tensor as little-endian f64, with a trailing FNV-1a
/// checksum so truncation or bit corruption is detected at load time.
pub fn save_checkpoint(model: &AnyModel, path: impl AsRef<Path>) -> Result<(), ModelError> {
    let path = path.as_ref();
    let (layout, scaler, horizon) = match model {
        AnyModel::Qnbm(p) => (&p.layout, &p.scaler, p.horizon),
        AnyModel::Qrdnn(p) => (&p.layout, &p.scaler, p.horizon),
    };
    let header = CheckpointHeader {
        model_type: model.kind(),
        rng_algorithm: RNG_ALGORITHM.to_string(),
        horizon,
        layout: layout.clone(),
        layout_fingerprint: layout.fingerprint(),
        feature_names: layout.names(),
        scaler: scaler.clone(),
        qnbm: model.as_qnbm().map(|p| p.config.clone()),
        qrdnn: match model {
            AnyModel::Qrdnn(p) => Some(p.config.clone()),
            AnyModel::Qnbm(_) => None,
        },
        tensors: model
            .tensor_names()
            .iter()
            .zip(model.tensors())
            .map(|(name, t)| TensorInfo {
                name: (*name).to_string(),
                rows: t.rows(),
                cols: t.cols(),
            })
            .collect(),
    };
    let header_json = serde_json::to_vec(&header)
        .map_err(|e| CheckpointError::Corrupt(format!("header serialization: {e}")))?;

    let mut bytes = Vec::new();
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&VERSION.to_le_bytes());
    bytes.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
    bytes.extend_from_slice(&header_json);
    for tensor in model.tensors() {
        for v in tensor.as_slice() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    let checksum = fnv1a64(&bytes);
    bytes.extend_from_slice(&checksum.to_le_bytes());

    std::fs::write(path, &bytes).map_err(|source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(())
}

/// Load a model saved by [`save_checkpoint`], bit-exactly.
pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<AnyModel, ModelError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    })?;
    if bytes.len() < MAGIC.len() + 4 + 4 + 8 {
        return Err(CheckpointError::Corrupt("file too short".into()).into());
    }
    if &bytes[..8] != MAGIC {
        return Err(CheckpointError::BadMagic.into());
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != VERSION {
        return Err(CheckpointError::UnsupportedVersion { found: version, supported: VERSION }.into());
    }
    let body_len = bytes.len() - 8;
    let stored = u64::from_le_bytes(bytes[body_len..].try_into().unwrap());
    if fnv1a64(&bytes[..body_len]) != stored {
        return Err(CheckpointError::Corrupt("checksum mismatch".into()).into());
    }

    let header_len = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    if 16 + header_len > body_len {
        return Err(CheckpointError::Corrupt("header exceeds file".into()).into());
    }
    let header: CheckpointHeader = serde_json::from_slice(&bytes[16..16 + header_len])
        .map_err(|e| CheckpointError::Corrupt(format!("header parse: {e}")))?;

    let expected_payload: usize = header.tensors.iter().map(|t| t.rows * t.cols * 8).sum();
    let payload = &bytes[16 + header_len..body_len];
    if payload.len() != expected_payload {
        return Err(CheckpointError::Corrupt(format!(
            "payload is {} bytes, header declares {expected_payload}",
            payload.len()
        ))
        .into());
    }

    let mut rng = RngState::seed_from(0);
    let mut model = match header.model_type {
        ModelKind::Qnbm => {
            let config = header.qnbm.clone().ok_or_else(|| {
                CheckpointError::Corrupt("qnbm checkpoint lacks a qnbm config".into())
            })?;
            AnyModel::Qnbm(QnbmParams::init_with_layout(
                config,
                header.layout.clone(),
                header.horizon,
                &mut rng,
            )?)
        }
        ModelKind::Qrdnn => {
            let config = header.qrdnn.clone().ok_or_else(|| {
                CheckpointError::Corrupt("qrdnn checkpoint lacks a qrdnn config".into())
            })?;
            AnyModel::Qrdnn(QrdnnParams::init_with_layout(
                config,
                header.layout.clone(),
                header.horizon,
                &mut rng,
            )?)
        }
    };

    {
        let names = model.tensor_names();
        let mut tensors = model.tensors_mut();
        if names.len() != header.tensors.len() {
            return Err(CheckpointError::Corrupt(format!(
                "checkpoint stores {} tensors, architecture expects {}",
                header.tensors.len(),
                names.len()
            ))
            .into());
        }
        let mut offset = 0;
        for ((name, tensor), info) in names.iter().zip(tensors.iter_mut()).zip(&header.tensors) {
            if *name != info.name || tensor.shape() != (info.rows, info.cols) {
                return Err(CheckpointError::Corrupt(format!(
                    "tensor '{}' ({}x{}) does not match expected '{}' ({}x{})",
                    info.name,
                    info.rows,
                    info.cols,
                    name,
                    tensor.rows(),
                    tensor.cols()
                ))
                .into());
            }
            for v in tensor.as_mut_slice() {
                *v = f64::from_le_bytes(payload[offset..offset + 8].try_into().unwrap());
                offset += 8;
            }
        }
    }

    match &mut model {
        AnyModel::Qnbm(p) => p.scaler = header.scaler,
        AnyModel::Qrdnn(p) => p.scaler = header.scaler,
    }
    Ok(model)
}
