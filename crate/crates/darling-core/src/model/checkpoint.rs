//! Single-file checkpoint archive.
//!
//! Layout: `b"DCKP"` magic, `u32` format version, `u64` header length, a
//! JSON header (dtype, model config, step, tensor index), the concatenated
//! little-endian tensor payload, and a trailing SHA-256 over everything
//! before it. Model weights keep their canonical names (`backbone.*`,
//! `decouple.*`, `mtd.*`, `heads.*`, `prompt.*`); optimizer moments are
//! stored under `adam.m.*` / `adam.v.*`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Model, ModelConfig};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

const MAGIC: &[u8; 4] = b"DCKP";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    rows: usize,
    cols: usize,
    offset: usize,
    bytes: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    dtype: String,
    config: ModelConfig,
    step: u64,
    has_optimizer: bool,
    tensors: Vec<TensorEntry>,
}

/// Everything a checkpoint carries.
pub struct CheckpointContents<F: Scalar> {
    pub model: Model<F>,
    /// Adam first/second moments, present when the checkpoint was saved with
    /// optimizer state.
    pub opt_m: Option<Model<F>>,
    pub opt_v: Option<Model<F>>,
    pub step: u64,
}

/// Write a checkpoint. `opt` is `(m, v, step)` when optimizer state should be
/// included; otherwise `step` records training progress on its own.
pub fn save<F: Scalar>(
    path: &Path,
    model: &Model<F>,
    step: u64,
    opt: Option<(&Model<F>, &Model<F>)>,
) -> Result<()> {
    let mut tensors = Vec::new();
    let mut payload = Vec::new();

    let mut push = |name: String, arr: &ndarray::Array2<F>, payload: &mut Vec<u8>| {
        let offset = payload.len();
        let vals: Vec<F> = arr.iter().cloned().collect();
        F::write_le(&vals, payload);
        tensors.push(TensorEntry {
            name,
            rows: arr.dim().0,
            cols: arr.dim().1,
            offset,
            bytes: payload.len() - offset,
        });
    };

    for (name, arr) in model.named_params() {
        push(name, arr, &mut payload);
    }
    if let Some((m, v)) = opt {
        for (name, arr) in m.named_params() {
            push(format!("adam.m.{name}"), arr, &mut payload);
        }
        for (name, arr) in v.named_params() {
            push(format!("adam.v.{name}"), arr, &mut payload);
        }
    }

    let header = Header {
        dtype: F::DTYPE.to_string(),
        config: model.cfg.clone(),
        step,
        has_optimizer: opt.is_some(),
        tensors,
    };
    let header_json = serde_json::to_vec(&header)?;

    let mut out = Vec::with_capacity(16 + header_json.len() + payload.len() + 32);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header_json.len() as u64).to_le_bytes());
    out.extend_from_slice(&header_json);
    out.extend_from_slice(&payload);
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    fs::write(path, out)?;
    Ok(())
}

/// Read a checkpoint, verifying the checksum, version, dtype, and that the
/// tensor set exactly matches the architecture in the stored config.
pub fn load<F: Scalar>(path: &Path) -> Result<CheckpointContents<F>> {
    let bytes = fs::read(path)
        .map_err(|e| Error::integrity(format!("cannot read checkpoint {}: {e}", path.display())))?;
    if bytes.len() < 16 + 32 {
        return Err(Error::integrity("checkpoint file truncated"));
    }
    let (body, digest) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != digest {
        return Err(Error::integrity(
            "checkpoint checksum mismatch (file corrupted)",
        ));
    }
    if &body[0..4] != MAGIC {
        return Err(Error::integrity("not a checkpoint file (bad magic)"));
    }
    let version = u32::from_le_bytes([body[4], body[5], body[6], body[7]]);
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion {
            context: "checkpoint",
            found: version.to_string(),
            supported: "1",
        });
    }
    let header_len = u64::from_le_bytes(body[8..16].try_into().unwrap()) as usize;
    if body.len() < 16 + header_len {
        return Err(Error::integrity("checkpoint header truncated"));
    }
    let header: Header = serde_json::from_slice(&body[16..16 + header_len])?;
    if header.dtype != F::DTYPE {
        return Err(Error::validation(format!(
            "checkpoint dtype is {}, expected {}",
            header.dtype,
            F::DTYPE
        )));
    }
    let payload = &body[16 + header_len..];

    let mut lookup = std::collections::HashMap::new();
    for t in &header.tensors {
        if lookup.insert(t.name.clone(), t).is_some() {
            return Err(Error::integrity(format!("duplicate tensor {}", t.name)));
        }
    }

    let fill = |target: &mut Model<F>, prefix: &str| -> Result<usize> {
        let mut used = 0;
        for (name, arr) in target.named_params_mut() {
            let key = format!("{prefix}{name}");
            let entry = lookup
                .get(&key)
                .ok_or_else(|| Error::integrity(format!("missing tensor {key}")))?;
            if (entry.rows, entry.cols) != arr.dim() {
                return Err(Error::integrity(format!(
                    "tensor {key} has shape {}x{}, expected {}x{}",
                    entry.rows,
                    entry.cols,
                    arr.dim().0,
                    arr.dim().1
                )));
            }
            let end = entry.offset + entry.bytes;
            if end > payload.len() {
                return Err(Error::integrity(format!("tensor {key} out of bounds")));
            }
            let vals = F::read_le(&payload[entry.offset..end])?;
            if vals.len() != arr.len() {
                return Err(Error::integrity(format!("tensor {key} length mismatch")));
            }
            for (dst, v) in arr.iter_mut().zip(vals) {
                *dst = v;
            }
            used += 1;
        }
        Ok(used)
    };

    let mut model = Model::new(header.config.clone(), 0)?;
    let mut used = fill(&mut model, "")?;
    let (opt_m, opt_v) = if header.has_optimizer {
        let mut m = model.zeroed_like();
        let mut v = model.zeroed_like();
        used += fill(&mut m, "adam.m.")?;
        used += fill(&mut v, "adam.v.")?;
        (Some(m), Some(v))
    } else {
        (None, None)
    };
    if used != header.tensors.len() {
        return Err(Error::integrity(format!(
            "checkpoint carries {} tensors, architecture uses {used}",
            header.tensors.len()
        )));
    }
    Ok(CheckpointContents {
        model,
        opt_m,
        opt_v,
        step: header.step,
    })
}
