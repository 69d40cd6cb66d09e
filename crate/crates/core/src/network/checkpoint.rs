//! Checkpoint files: a UTF-8 manifest followed by raw little-endian tensor
//! payloads.
//!
//! ```text
//! sensor3d-checkpoint 1
//! config seq_len=3 resolution=128 base_features=64 capacity_divisor=1 variant=full classes=1
//! tensor conv_1.weight 64,1,3,3 f32 0
//! tensor conv_1.bias 64 f32 2304
//! ...
//! end
//! <payload>
//! ```
//!
//! Offsets are in bytes from the first payload byte; tensors are stored
//! back to back in manifest order.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{DType, Scalar, Tensor};

use super::config::NetworkConfig;
use super::params::NetworkParams;
use super::plan::{layer_plan, param_shapes};

const MAGIC: &str = "sensor3d-checkpoint 1";

/// One manifest line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckpointEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: DType,
    pub offset: usize,
}

pub fn save_checkpoint<T: Scalar>(
    path: impl AsRef<Path>,
    config: &NetworkConfig,
    params: &NetworkParams<T>,
) -> Result<()> {
    let mut header = format!("{MAGIC}\nconfig {}\n", config.to_line());
    let mut payload = Vec::with_capacity(params.count() * T::DTYPE.size_of());
    for (name, t) in params.iter() {
        let shape: Vec<String> = t.shape().iter().map(|d| d.to_string()).collect();
        header.push_str(&format!(
            "tensor {name} {} {} {}\n",
            shape.join(","),
            T::DTYPE,
            payload.len()
        ));
        for &v in t.data() {
            v.write_le(&mut payload);
        }
    }
    header.push_str("end\n");
    let path = path.as_ref();
    let tmp = path.with_extension("ckpt.partial");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(header.as_bytes())?;
        f.write_all(&payload)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::CorruptCheckpoint(msg.into())
}

fn parse_manifest(bytes: &[u8]) -> Result<(NetworkConfig, Vec<CheckpointEntry>, usize)> {
    let mut pos = 0;
    let mut next_line = || -> Result<&str> {
        let rest = &bytes[pos..];
        let nl = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| corrupt("manifest ends without `end` line"))?;
        pos += nl + 1;
        std::str::from_utf8(&rest[..nl]).map_err(|_| corrupt("manifest is not UTF-8"))
    };
    if next_line()? != MAGIC {
        return Err(corrupt("missing checkpoint magic line"));
    }
    let config_line = next_line()?;
    let config = config_line
        .strip_prefix("config ")
        .ok_or_else(|| corrupt("second line must start with `config`"))
        .and_then(|l| NetworkConfig::from_line(l).map_err(|e| corrupt(e.to_string())))?;
    let mut entries = Vec::new();
    loop {
        let line = next_line()?;
        if line == "end" {
            break;
        }
        let toks: Vec<&str> = line.split(' ').collect();
        let [kw, name, shape, dtype, offset] = toks.as_slice() else {
            return Err(corrupt(format!("bad manifest line `{line}`")));
        };
        if *kw != "tensor" {
            return Err(corrupt(format!("bad manifest line `{line}`")));
        }
        let shape = shape
            .split(',')
            .map(|d| d.parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| corrupt(format!("bad shape in `{line}`")))?;
        let dtype = DType::parse(dtype).ok_or_else(|| corrupt(format!("bad dtype in `{line}`")))?;
        let offset = offset
            .parse()
            .map_err(|_| corrupt(format!("bad offset in `{line}`")))?;
        entries.push(CheckpointEntry {
            name: name.to_string(),
            shape,
            dtype,
            offset,
        });
    }
    Ok((config, entries, pos))
}

fn decode<T: Scalar>(entry: &CheckpointEntry, payload: &[u8]) -> Result<Tensor<T>> {
    let n: usize = entry.shape.iter().product();
    let width = entry.dtype.size_of();
    let end = entry.offset + n * width;
    let bytes = payload.get(entry.offset..end).ok_or_else(|| {
        corrupt(format!(
            "payload of `{}` exceeds file ({end} > {})",
            entry.name,
            payload.len()
        ))
    })?;
    let data: Vec<T> = match entry.dtype {
        DType::F32 => bytes
            .chunks_exact(4)
            .map(|c| T::from_f64(f32::read_le(c) as f64))
            .collect(),
        DType::F64 => bytes
            .chunks_exact(8)
            .map(|c| T::from_f64(f64::read_le(c)))
            .collect(),
    };
    Tensor::new(&entry.shape, data)
}

/// Reads a checkpoint and the configuration it describes.
pub fn load_checkpoint<T: Scalar>(path: impl AsRef<Path>) -> Result<(NetworkConfig, NetworkParams<T>)> {
    let bytes = fs::read(path)?;
    let (config, entries, start) = parse_manifest(&bytes)?;
    let payload = &bytes[start..];
    let expected = param_shapes(&layer_plan(&config));
    if expected.len() != entries.len() {
        return Err(corrupt(format!(
            "manifest lists {} tensors, configuration needs {}",
            entries.len(),
            expected.len()
        )));
    }
    let mut cursor = 0;
    let mut tensors = Vec::with_capacity(entries.len());
    for (entry, (name, shape)) in entries.iter().zip(&expected) {
        if &entry.name != name || &entry.shape != shape {
            return Err(corrupt(format!(
                "manifest entry `{}` {:?} does not match expected `{name}` {shape:?}",
                entry.name, entry.shape
            )));
        }
        if entry.offset != cursor {
            return Err(corrupt(format!("unexpected offset for `{}`", entry.name)));
        }
        cursor += entry.shape.iter().product::<usize>() * entry.dtype.size_of();
        tensors.push((entry.name.clone(), decode(entry, payload)?));
    }
    if cursor != payload.len() {
        return Err(corrupt(format!(
            "payload holds {} bytes, manifest describes {cursor}",
            payload.len()
        )));
    }
    Ok((config, NetworkParams::from_entries(tensors)?))
}

/// Loads a checkpoint and fails with [`Error::ConfigMismatch`] unless it was
/// written for `expected`.
pub fn load_checkpoint_expecting<T: Scalar>(
    path: impl AsRef<Path>,
    expected: &NetworkConfig,
) -> Result<NetworkParams<T>> {
    let (config, params) = load_checkpoint(path)?;
    let expected = expected.normalized();
    if config != expected {
        return Err(Error::ConfigMismatch {
            expected: expected.to_line(),
            found: config.to_line(),
        });
    }
    Ok(params)
}
