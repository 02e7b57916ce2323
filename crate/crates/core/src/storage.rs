//! Binary-plus-metadata persistence.
//!
//! Every artifact is a pair of files: `<stem>.toml`, a TOML document holding
//! counts, shapes, seeds and a payload description, and `<stem>.bin`, a flat
//! run of little-endian IEEE-754 `f64` values. Complex arrays are stored as
//! interleaved `(re, im)` pairs.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::{ModelParams, Tensor};

pub fn meta_path(dir: &Path, stem: &str) -> PathBuf {
    dir.join(format!("{stem}.toml"))
}

pub fn payload_path(dir: &Path, stem: &str) -> PathBuf {
    dir.join(format!("{stem}.bin"))
}

pub fn encode_f64(values: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(values.len() * 8);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_f64(path: &Path, bytes: &[u8]) -> Result<Vec<f64>> {
    if bytes.len() % 8 != 0 {
        return Err(Error::format(path, format!("payload of {} bytes is not a multiple of 8", bytes.len())));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

pub fn write_payload(path: &Path, values: &[f64]) -> Result<()> {
    fs::write(path, encode_f64(values)).map_err(|e| Error::io(path, e))
}

pub fn read_payload(path: &Path, expected: usize) -> Result<Vec<f64>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let values = decode_f64(path, &bytes)?;
    if values.len() != expected {
        return Err(Error::format(
            path,
            format!("expected {} values, found {}", expected, values.len()),
        ));
    }
    Ok(values)
}

pub fn write_meta<T: Serialize>(path: &Path, meta: &T) -> Result<()> {
    let text = toml::to_string(meta).map_err(|e| Error::format(path, e.to_string()))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_meta<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

#[derive(Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

#[derive(Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelMeta<A> {
    format: String,
    version: u32,
    kind: String,
    payload: String,
    payload_values: usize,
    arch: A,
    tensors: Vec<TensorEntry>,
}

const MODEL_FORMAT: &str = "muce-model";

/// Writes `params` as a name table plus a flat payload in name order.
pub fn save_model<A: Serialize>(
    dir: &Path,
    stem: &str,
    kind: &str,
    arch: &A,
    params: &ModelParams,
) -> Result<()> {
    ensure_dir(dir)?;
    let mut tensors = Vec::with_capacity(params.len());
    let mut offset = 0;
    for (name, t) in params.iter() {
        tensors.push(TensorEntry {
            name: name.clone(),
            shape: t.shape().to_vec(),
            offset,
        });
        offset += t.len();
    }
    let values = params.flatten();
    let meta = ModelMeta {
        format: MODEL_FORMAT.into(),
        version: 1,
        kind: kind.into(),
        payload: format!("{stem}.bin"),
        payload_values: values.len(),
        arch,
        tensors,
    };
    write_payload(&payload_path(dir, stem), &values)?;
    write_meta(&meta_path(dir, stem), &meta)
}

/// Reads a model written by [`save_model`], checking its kind tag.
pub fn load_model<A: DeserializeOwned>(dir: &Path, stem: &str, kind: &str) -> Result<(A, ModelParams)> {
    let mpath = meta_path(dir, stem);
    let meta: ModelMeta<A> = read_meta(&mpath)?;
    if meta.format != MODEL_FORMAT || meta.version != 1 {
        return Err(Error::format(&mpath, format!("unsupported format {} v{}", meta.format, meta.version)));
    }
    if meta.kind != kind {
        return Err(Error::format(&mpath, format!("expected a {kind} model, found {}", meta.kind)));
    }
    let values = read_payload(&dir.join(&meta.payload), meta.payload_values)?;
    let mut params = ModelParams::new();
    for e in meta.tensors {
        let n: usize = e.shape.iter().product();
        let end = e.offset.checked_add(n).filter(|&end| end <= values.len()).ok_or_else(|| {
            Error::format(&mpath, format!("tensor {} overruns the payload", e.name))
        })?;
        let t = Tensor::new(e.shape, values[e.offset..end].to_vec())?;
        params.insert(e.name, t);
    }
    Ok((meta.arch, params))
}

/// Serializes `u64` seeds as decimal strings (TOML integers are signed 64-bit).
pub mod seed_string {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &u64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&v.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
