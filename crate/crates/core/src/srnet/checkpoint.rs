//! `.vnet` checkpoint files: magic, little-endian u32 JSON length, JSON
//! config, then f32 little-endian weights and biases layer by layer, then
//! the Adam moments in the same order when present.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::adam::{AdamConfig, AdamState};
use super::layers::LayerKind;
use super::network::{NetworkParams, LAYER_NAMES};
use crate::error::{Error, Result};
use crate::volume::Axis;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"VNET0001";
pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerHeader {
    name: String,
    kind: LayerKind,
    in_channels: usize,
    out_channels: usize,
    kernel: [usize; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    axis: Option<Axis>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    stride: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format_version: u32,
    factor: usize,
    hidden_width: usize,
    layers: Vec<LayerHeader>,
    adam: AdamConfig,
    step: u64,
    has_moments: bool,
}

/// Decoded checkpoint contents.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: NetworkParams<f32>,
    pub adam: AdamConfig,
    pub step: u64,
    /// Present when the file carries optimizer moments.
    pub state: Option<AdamState>,
}

impl Checkpoint {
    /// Refuse to serve a request for a different upsampling factor.
    pub fn expect_factor(&self, factor: usize) -> Result<()> {
        if self.params.factor != factor {
            return Err(Error::ConfigMismatch(format!(
                "checkpoint was trained for x{} but x{factor} was requested",
                self.params.factor
            )));
        }
        Ok(())
    }
}

fn header_for(params: &NetworkParams<f32>, state: Option<&AdamState>) -> Header {
    let layers = params
        .layers()
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let tconv = match i {
                6 => Some(&params.up_x),
                7 => Some(&params.up_y),
                _ => None,
            };
            LayerHeader {
                name: LAYER_NAMES[i].to_string(),
                kind: if tconv.is_some() {
                    LayerKind::Tconv
                } else {
                    LayerKind::Conv
                },
                in_channels: l.in_channels,
                out_channels: l.out_channels,
                kernel: l.kernel,
                axis: tconv.map(|t| t.axis),
                stride: tconv.map(|t| t.stride),
            }
        })
        .collect();
    Header {
        format_version: CHECKPOINT_FORMAT_VERSION,
        factor: params.factor,
        hidden_width: params.width,
        layers,
        adam: state.map(|s| s.config).unwrap_or_default(),
        step: state.map_or(0, |s| s.step),
        has_moments: state.is_some(),
    }
}

fn push_params(out: &mut Vec<u8>, p: &NetworkParams<f32>) {
    for s in p.param_slices() {
        for v in s {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
}

/// Serialize parameters and, optionally, optimizer state.
pub fn write_checkpoint(params: &NetworkParams<f32>, state: Option<&AdamState>) -> Result<Vec<u8>> {
    params.validate()?;
    if let Some(s) = state {
        if s.m.param_count() != params.param_count() || s.v.param_count() != params.param_count() {
            return Err(Error::shape("Adam moments do not match the parameters"));
        }
    }
    let json = serde_json::to_vec(&header_for(params, state))?;
    let n = params.param_count() * if state.is_some() { 3 } else { 1 };
    let mut out = Vec::with_capacity(12 + json.len() + 4 * n);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    push_params(&mut out, params);
    if let Some(s) = state {
        push_params(&mut out, &s.m);
        push_params(&mut out, &s.v);
    }
    Ok(out)
}

fn fill_params(p: &mut NetworkParams<f32>, bytes: &[u8]) {
    let mut chunks = bytes.chunks_exact(4);
    for s in p.param_slices_mut() {
        for v in s {
            let c = chunks.next().expect("payload length checked");
            *v = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
        }
    }
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::CheckpointCorrupt(msg.into())
}

pub fn read_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < 12 {
        return Err(corrupt(format!(
            "file is {} bytes, too short for a header",
            bytes.len()
        )));
    }
    let magic = &bytes[..8];
    if magic != CHECKPOINT_MAGIC {
        if &magic[..4] == b"VNET" {
            return Err(Error::CheckpointVersion {
                found: String::from_utf8_lossy(magic).into_owned(),
                expected: String::from_utf8_lossy(CHECKPOINT_MAGIC).into_owned(),
            });
        }
        return Err(corrupt("bad magic"));
    }
    let json_len = u32::from_le_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]) as usize;
    let json = bytes
        .get(12..12 + json_len)
        .ok_or_else(|| corrupt("JSON header runs past end of file"))?;
    let header: Header =
        serde_json::from_slice(json).map_err(|e| corrupt(format!("bad JSON header: {e}")))?;
    if header.format_version != CHECKPOINT_FORMAT_VERSION {
        return Err(Error::CheckpointVersion {
            found: header.format_version.to_string(),
            expected: CHECKPOINT_FORMAT_VERSION.to_string(),
        });
    }
    let mut params = NetworkParams::<f32>::zeros(header.factor, header.hidden_width)
        .map_err(|e| corrupt(format!("unsupported architecture: {e}")))?;
    let expected = header_for(&params, None).layers;
    if header.layers != expected {
        return Err(corrupt("layer specs do not match the network architecture"));
    }
    let count = params.param_count();
    let blocks = if header.has_moments { 3 } else { 1 };
    let payload = &bytes[12 + json_len..];
    if payload.len() != 4 * count * blocks {
        return Err(corrupt(format!(
            "payload is {} bytes, expected {}",
            payload.len(),
            4 * count * blocks
        )));
    }
    fill_params(&mut params, &payload[..4 * count]);
    if !params
        .param_slices()
        .iter()
        .all(|s| s.iter().all(|v| v.is_finite()))
    {
        return Err(corrupt("non-finite parameter values"));
    }
    let state = if header.has_moments {
        let mut m = params.zeros_like();
        let mut v = params.zeros_like();
        fill_params(&mut m, &payload[4 * count..8 * count]);
        fill_params(&mut v, &payload[8 * count..]);
        Some(AdamState {
            config: header.adam,
            step: header.step,
            m,
            v,
        })
    } else {
        None
    };
    Ok(Checkpoint {
        params,
        adam: header.adam,
        step: header.step,
        state,
    })
}

pub fn save_checkpoint(
    params: &NetworkParams<f32>,
    state: Option<&AdamState>,
    path: &Path,
) -> Result<()> {
    let bytes = write_checkpoint(params, state)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(&bytes)
}
