//! Network checkpoints and model directories.
//!
//! A checkpoint file is
//! ```text
//! "FCKP" | u16 version = 1 | u16 reserved = 0 | u32 header length | header JSON | frames
//! ```
//! The header is the network architecture. Each parameterised layer then
//! contributes a weight frame and a bias frame in the chip framing, stored
//! as `1 × 1 × len` and reshaped from the layer kind.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::chip::{read_frame, write_frame};
use crate::error::{Error, Result};
use crate::fusion::{FusionModel, LateWeights, ModelSpec, Paradigm, Backbone};
use crate::nn::{Architecture, Layer, Network};
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"FCKP";
pub const CHECKPOINT_VERSION: u16 = 1;
pub const MODEL_FILE: &str = "model.json";
pub const WEIGHTS_FILE: &str = "weights.json";

pub fn encode_network(net: &Network) -> Vec<u8> {
    let header = serde_json::to_vec(&net.architecture()).expect("architecture serialises");
    let mut out = Vec::new();
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&0u16.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    for p in net.params() {
        write_frame(&mut out, (1, 1, p.len()), p);
    }
    out
}

pub fn decode_network(bytes: &[u8], path: &Path) -> Result<Network> {
    if bytes.len() < 4 || bytes[..4] != CHECKPOINT_MAGIC {
        return Err(Error::BadMagic { path: path.into() });
    }
    if bytes.len() < 12 {
        return Err(Error::Truncated {
            path: path.into(),
            expected: 12,
            found: bytes.len() as u64,
        });
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != CHECKPOINT_VERSION {
        return Err(Error::Version {
            path: path.into(),
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let header_len = u32::from_le_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]) as usize;
    let header_end = 12 + header_len;
    if bytes.len() < header_end {
        return Err(Error::Truncated {
            path: path.into(),
            expected: header_end as u64,
            found: bytes.len() as u64,
        });
    }
    let arch: Architecture = serde_json::from_slice(&bytes[12..header_end])
        .map_err(|e| Error::format(path, format!("checkpoint header: {e}")))?;
    let mut pos = header_end;
    let mut next = |len: usize, shape: Vec<usize>| -> Result<Tensor> {
        let (dims, data, used) = read_frame(&bytes[pos..], path)?;
        if dims != (1, 1, len) {
            return Err(Error::format(path, format!("parameter frame holds {dims:?}, expected {len} values")));
        }
        pos += used;
        Tensor::new(shape, data)
    };
    let mut layers = Vec::new();
    for kind in arch.branches.iter().flatten().chain(&arch.head) {
        let layer = match kind.param_shapes() {
            Some((w_shape, b_len)) => {
                let w = next(w_shape.iter().product(), w_shape)?;
                let b = next(b_len, vec![b_len])?;
                Layer::from_parts(*kind, Some(w), Some(b))?
            }
            None => Layer::from_parts(*kind, None, None)?,
        };
        layers.push(layer);
    }
    if pos != bytes.len() {
        return Err(Error::format(path, format!("{} trailing bytes after checkpoint", bytes.len() - pos)));
    }
    Network::from_layers(&arch, layers)
}

pub fn save_network(path: &Path, net: &Network) -> Result<()> {
    fs::write(path, encode_network(net)).map_err(|e| Error::io(path, e))
}

pub fn load_network(path: &Path) -> Result<Network> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_network(&bytes, path)
}

/// Description of a model directory, stored as `model.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRecord {
    #[serde(flatten)]
    pub paradigm: Paradigm,
    pub spec: ModelSpec,
    pub backbone: Backbone,
    pub networks: Vec<String>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("record serialises");
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
}

/// Writes `model.json`, one checkpoint per network and, for weighted late
/// fusion, `weights.json`.
pub fn save_model(dir: &Path, model: &FusionModel) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let roles = FusionModel::roles(model.kind());
    let networks: Vec<String> = roles.iter().map(|r| format!("{}.fckp", r.name())).collect();
    for (net, file) in model.nets.iter().zip(&networks) {
        save_network(&dir.join(file), net)?;
    }
    if let Paradigm::LateWeighted(w) = &model.paradigm {
        write_json(&dir.join(WEIGHTS_FILE), w)?;
    }
    write_json(
        &dir.join(MODEL_FILE),
        &ModelRecord {
            paradigm: model.paradigm.clone(),
            spec: model.spec,
            backbone: model.backbone.clone(),
            networks,
        },
    )
}

pub fn load_model(dir: &Path) -> Result<FusionModel> {
    let record: ModelRecord = read_json(&dir.join(MODEL_FILE))?;
    let nets = record
        .networks
        .iter()
        .map(|f| load_network(&dir.join(f)))
        .collect::<Result<_>>()?;
    let model = FusionModel {
        paradigm: record.paradigm,
        spec: record.spec,
        backbone: record.backbone,
        nets,
    };
    model.validate().map_err(|e| Error::format(dir.join(MODEL_FILE), e.to_string()))?;
    Ok(model)
}

pub fn save_weights(path: &Path, weights: &LateWeights) -> Result<()> {
    write_json(path, weights)
}

pub fn load_weights(path: &Path) -> Result<LateWeights> {
    let w: LateWeights = read_json(path)?;
    LateWeights::new(w.alpha, w.beta).map_err(|e| Error::format(path, e.to_string()))
}
