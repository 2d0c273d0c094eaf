//! Self-describing checkpoint container.
//!
//! Layout (little-endian): magic `DFCK`, format version, backbone id,
//! config digest, named f32 tensors, optional optimizer state, then a
//! trailing SHA-256 over everything before it. Weights round-trip
//! bit-exactly, so a save/load cycle reproduces identical logits.

use std::fs;
use std::io::{Cursor, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use sha2::{Digest, Sha256};

use super::{build_model, ClassifierError, ModelHandle};
use crate::config::hex_string;

const MAGIC: &[u8; 4] = b"DFCK";
const VERSION: u32 = 1;

/// Optimizer moments and step counter carried alongside the weights so a
/// run can resume mid-training.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OptimizerState {
    pub step: u64,
    /// (tensor name, first moment, second moment)
    pub moments: Vec<(String, Vec<f32>, Vec<f32>)>,
}

#[derive(Debug, Clone)]
pub struct CheckpointMeta {
    pub backbone_id: String,
    pub config_digest: String,
    pub optimizer: Option<OptimizerState>,
    /// Hex SHA-256 of the checkpoint contents.
    pub digest: String,
}

fn write_string(buf: &mut Vec<u8>, s: &str) {
    buf.write_u32::<LittleEndian>(s.len() as u32).unwrap();
    buf.extend_from_slice(s.as_bytes());
}

fn write_f32s(buf: &mut Vec<u8>, data: &[f32]) {
    buf.write_u64::<LittleEndian>(data.len() as u64).unwrap();
    for &v in data {
        buf.write_f32::<LittleEndian>(v).unwrap();
    }
}

fn read_string(cur: &mut Cursor<&[u8]>) -> Result<String, ClassifierError> {
    let len = cur
        .read_u32::<LittleEndian>()
        .map_err(|_| corrupt("truncated string length"))? as usize;
    if len > 1 << 20 {
        return Err(corrupt("unreasonable string length"));
    }
    let mut bytes = vec![0u8; len];
    cur.read_exact(&mut bytes)
        .map_err(|_| corrupt("truncated string"))?;
    String::from_utf8(bytes).map_err(|_| corrupt("non-utf8 string"))
}

fn read_f32s(cur: &mut Cursor<&[u8]>) -> Result<Vec<f32>, ClassifierError> {
    let len = cur
        .read_u64::<LittleEndian>()
        .map_err(|_| corrupt("truncated tensor length"))? as usize;
    if len > 1 << 28 {
        return Err(corrupt("unreasonable tensor length"));
    }
    let mut out = Vec::with_capacity(len);
    for _ in 0..len {
        out.push(
            cur.read_f32::<LittleEndian>()
                .map_err(|_| corrupt("truncated tensor data"))?,
        );
    }
    Ok(out)
}

fn corrupt(msg: &str) -> ClassifierError {
    ClassifierError::CorruptCheckpoint(msg.to_string())
}

/// Serializes the model (and optionally optimizer state) to `path`.
/// Returns the hex content digest that the evaluator records in reports.
pub fn save_checkpoint(
    model: &ModelHandle,
    path: &Path,
    config_digest: &str,
    optimizer: Option<&OptimizerState>,
) -> Result<String, ClassifierError> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.write_u32::<LittleEndian>(VERSION).unwrap();
    write_string(&mut buf, model.backbone_id());
    write_string(&mut buf, config_digest);

    let mut tensors: Vec<(String, Vec<usize>, Vec<f32>)> = Vec::new();
    model.visit_tensors(&mut |name, shape, data| {
        tensors.push((name.to_string(), shape, data.to_vec()));
    });
    buf.write_u32::<LittleEndian>(tensors.len() as u32).unwrap();
    for (name, shape, data) in &tensors {
        write_string(&mut buf, name);
        buf.write_u32::<LittleEndian>(shape.len() as u32).unwrap();
        for &d in shape {
            buf.write_u64::<LittleEndian>(d as u64).unwrap();
        }
        write_f32s(&mut buf, data);
    }

    match optimizer {
        Some(state) => {
            buf.push(1);
            buf.write_u64::<LittleEndian>(state.step).unwrap();
            buf.write_u32::<LittleEndian>(state.moments.len() as u32).unwrap();
            for (name, m, v) in &state.moments {
                write_string(&mut buf, name);
                write_f32s(&mut buf, m);
                write_f32s(&mut buf, v);
            }
        }
        None => buf.push(0),
    }

    let digest = Sha256::digest(&buf);
    let mut file = fs::File::create(path).map_err(|e| ClassifierError::Io(path.into(), e))?;
    file.write_all(&buf)
        .and_then(|_| file.write_all(&digest))
        .map_err(|e| ClassifierError::Io(path.into(), e))?;
    Ok(hex_string(&digest))
}

/// Loads a checkpoint, verifying the integrity digest and, when given,
/// that the stored backbone id matches the expected one.
pub fn load_checkpoint(
    path: &Path,
    expected_backbone: Option<&str>,
) -> Result<(ModelHandle, CheckpointMeta), ClassifierError> {
    let bytes = fs::read(path).map_err(|e| ClassifierError::Io(path.into(), e))?;
    if bytes.len() < MAGIC.len() + 32 {
        return Err(corrupt("file too short"));
    }
    let (body, stored_digest) = bytes.split_at(bytes.len() - 32);
    let digest = Sha256::digest(body);
    if digest.as_slice() != stored_digest {
        return Err(corrupt("integrity digest mismatch"));
    }

    let mut cur = Cursor::new(body);
    let mut magic = [0u8; 4];
    cur.read_exact(&mut magic).map_err(|_| corrupt("missing magic"))?;
    if &magic != MAGIC {
        return Err(corrupt("bad magic"));
    }
    let version = cur
        .read_u32::<LittleEndian>()
        .map_err(|_| corrupt("missing version"))?;
    if version != VERSION {
        return Err(corrupt(&format!("unsupported version {version}")));
    }
    let backbone_id = read_string(&mut cur)?;
    if let Some(expected) = expected_backbone {
        if backbone_id != expected {
            return Err(ClassifierError::BackboneMismatch {
                expected: expected.to_string(),
                found: backbone_id,
            });
        }
    }
    let config_digest = read_string(&mut cur)?;

    let mut model = build_model(&backbone_id, false, 0)?;
    let n_tensors = cur
        .read_u32::<LittleEndian>()
        .map_err(|_| corrupt("missing tensor count"))?;
    for _ in 0..n_tensors {
        let name = read_string(&mut cur)?;
        let ndim = cur
            .read_u32::<LittleEndian>()
            .map_err(|_| corrupt("truncated tensor header"))? as usize;
        if ndim > 8 {
            return Err(corrupt("unreasonable tensor rank"));
        }
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(
                cur.read_u64::<LittleEndian>()
                    .map_err(|_| corrupt("truncated shape"))? as usize,
            );
        }
        let data = read_f32s(&mut cur)?;
        if data.len() != shape.iter().product::<usize>() {
            return Err(corrupt(&format!("tensor {name} size/shape disagree")));
        }
        model
            .load_tensor(&name, &shape, &data)
            .map_err(|e| corrupt(&e))?;
    }

    let has_opt = cur.read_u8().map_err(|_| corrupt("missing optimizer flag"))?;
    let optimizer = match has_opt {
        0 => None,
        1 => {
            let step = cur
                .read_u64::<LittleEndian>()
                .map_err(|_| corrupt("truncated optimizer state"))?;
            let n = cur
                .read_u32::<LittleEndian>()
                .map_err(|_| corrupt("truncated optimizer state"))?;
            let mut moments = Vec::with_capacity(n as usize);
            for _ in 0..n {
                let name = read_string(&mut cur)?;
                let m = read_f32s(&mut cur)?;
                let v = read_f32s(&mut cur)?;
                moments.push((name, m, v));
            }
            Some(OptimizerState { step, moments })
        }
        _ => return Err(corrupt("bad optimizer flag")),
    };

    let meta = CheckpointMeta {
        backbone_id,
        config_digest,
        optimizer,
        digest: hex_string(&digest),
    };
    Ok((model, meta))
}
