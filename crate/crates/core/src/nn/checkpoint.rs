//! Binary checkpoints: `SIS1` magic, little-endian u32 manifest length, a
//! JSON manifest, then every tensor as little-endian f32 in manifest order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AdamConfig, AdamState, Mlp};
use crate::error::{Result, SisError};

pub const MAGIC: &[u8; 4] = b"SIS1";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedNetwork {
    pub name: String,
    /// Fourier octaves used to build this network's input, if any.
    pub encoding_l: Option<usize>,
    pub net: Mlp<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub networks: Vec<NamedNetwork>,
    pub optimizer: Option<AdamState<f32>>,
    /// Free-form model description (standardizer, config echo, ...).
    pub metadata: serde_json::Value,
}

impl Checkpoint {
    pub fn network(&self, name: &str) -> Option<&Mlp<f32>> {
        self.networks
            .iter()
            .find(|n| n.name == name)
            .map(|n| &n.net)
    }
}

#[derive(Serialize, Deserialize)]
struct NetworkEntry {
    name: String,
    layer_dims: Vec<usize>,
    skip_at: Option<usize>,
    encoding_l: Option<usize>,
}

#[derive(Serialize, Deserialize)]
struct OptimizerEntry {
    config: AdamConfig,
    lr: f64,
    step: u64,
    moments: usize,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    len: usize,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    networks: Vec<NetworkEntry>,
    optimizer: Option<OptimizerEntry>,
    tensors: Vec<TensorEntry>,
    metadata: serde_json::Value,
}

pub fn encode_checkpoint(ck: &Checkpoint) -> Result<Vec<u8>> {
    let mut tensors: Vec<(String, &[f32])> = Vec::new();
    for n in &ck.networks {
        let prefix = format!("{}/", n.name);
        for (name, t) in n.net.param_names(&prefix).into_iter().zip(n.net.tensors()) {
            tensors.push((name, t));
        }
    }
    let optimizer = ck.optimizer.as_ref().map(|o| {
        for (k, m) in o.first_moments().iter().enumerate() {
            tensors.push((format!("adam.m.{k}"), m));
        }
        for (k, v) in o.second_moments().iter().enumerate() {
            tensors.push((format!("adam.v.{k}"), v));
        }
        OptimizerEntry {
            config: o.config,
            lr: o.lr,
            step: o.step,
            moments: o.first_moments().len(),
        }
    });
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        networks: ck
            .networks
            .iter()
            .map(|n| NetworkEntry {
                name: n.name.clone(),
                layer_dims: n.net.layer_dims().to_vec(),
                skip_at: n.net.skip_at(),
                encoding_l: n.encoding_l,
            })
            .collect(),
        optimizer,
        tensors: tensors
            .iter()
            .map(|(name, t)| TensorEntry {
                name: name.clone(),
                len: t.len(),
            })
            .collect(),
        metadata: ck.metadata.clone(),
    };
    let json = serde_json::to_vec(&manifest)?;
    let len =
        u32::try_from(json.len()).map_err(|_| SisError::Checkpoint("manifest too large".into()))?;
    let mut out =
        Vec::with_capacity(8 + json.len() + 4 * tensors.iter().map(|t| t.1.len()).sum::<usize>());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(&json);
    for (_, t) in &tensors {
        for v in t.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(SisError::BadMagic);
    }
    if bytes.len() < 8 {
        return Err(SisError::Checkpoint("truncated header".into()));
    }
    let len = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    let body = &bytes[8..];
    if body.len() < len {
        return Err(SisError::Checkpoint("truncated manifest".into()));
    }
    let manifest: Manifest = serde_json::from_slice(&body[..len])?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(SisError::Checkpoint(format!(
            "unsupported format version {}",
            manifest.format_version
        )));
    }
    let mut data = &body[len..];
    let mut tensors: Vec<Vec<f32>> = Vec::with_capacity(manifest.tensors.len());
    for t in &manifest.tensors {
        let n = t.len * 4;
        if data.len() < n {
            return Err(SisError::Checkpoint(format!("truncated tensor {}", t.name)));
        }
        tensors.push(
            data[..n]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect(),
        );
        data = &data[n..];
    }
    if !data.is_empty() {
        return Err(SisError::Checkpoint(format!(
            "{} trailing bytes",
            data.len()
        )));
    }

    let mut it = tensors.into_iter();
    let mut networks = Vec::with_capacity(manifest.networks.len());
    for e in manifest.networks {
        let layers = e.layer_dims.len().saturating_sub(1);
        let mut weights = Vec::with_capacity(layers);
        let mut biases = Vec::with_capacity(layers);
        for _ in 0..layers {
            let (w, b) = it
                .next()
                .zip(it.next())
                .ok_or_else(|| SisError::Checkpoint(format!("missing tensors for {}", e.name)))?;
            weights.push(w);
            biases.push(b);
        }
        let net = Mlp::from_parts(&e.layer_dims, e.skip_at, weights, biases)
            .map_err(|err| SisError::Checkpoint(format!("network {}: {err}", e.name)))?;
        networks.push(NamedNetwork {
            name: e.name,
            encoding_l: e.encoding_l,
            net,
        });
    }
    let optimizer = match manifest.optimizer {
        Some(o) => {
            let m: Vec<Vec<f32>> = it.by_ref().take(o.moments).collect();
            let v: Vec<Vec<f32>> = it.by_ref().take(o.moments).collect();
            if m.len() != o.moments || v.len() != o.moments {
                return Err(SisError::Checkpoint("missing optimizer moments".into()));
            }
            Some(AdamState::from_parts(o.config, o.lr, o.step, m, v)?)
        }
        None => None,
    };
    if it.next().is_some() {
        return Err(SisError::Checkpoint("unreferenced tensors".into()));
    }
    Ok(Checkpoint {
        networks,
        optimizer,
        metadata: manifest.metadata,
    })
}

pub fn save_checkpoint(ck: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_checkpoint(ck)?).map_err(|e| SisError::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    decode_checkpoint(&fs::read(path).map_err(|e| SisError::io(path, e))?)
}

/// Network names and layer dims listed in a checkpoint's manifest.
pub fn read_manifest_networks(bytes: &[u8]) -> Result<Vec<(String, Vec<usize>)>> {
    if bytes.len() < 8 || &bytes[..4] != MAGIC {
        return Err(SisError::BadMagic);
    }
    let len = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    let json = bytes
        .get(8..8 + len)
        .ok_or_else(|| SisError::Checkpoint("truncated manifest".into()))?;
    let m: Manifest = serde_json::from_slice(json)?;
    Ok(m.networks
        .into_iter()
        .map(|n| (n.name, n.layer_dims))
        .collect())
}
