//! Volume and mask containers and their on-disk format.
//!
//! A volume file is a short UTF-8 header followed by the voxels in row-major
//! `(slice, row, column)` order, little-endian:
//!
//! ```text
//! dims=D,H,W
//! spacing=sz,sy,sx
//! dtype=f32|i16|u8
//!
//! <payload>
//! ```
//!
//! Masks use the same layout with `dtype=u8`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{invalid, Error, Result};

/// Physical voxel size in millimetres: slice thickness, row and column pitch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spacing {
    pub thickness: f64,
    pub row: f64,
    pub col: f64,
}

impl Spacing {
    pub fn new(thickness: f64, row: f64, col: f64) -> Result<Self> {
        let s = Self {
            thickness,
            row,
            col,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        for v in [self.thickness, self.row, self.col] {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(format!("spacing components must be positive, got {self:?}")));
            }
        }
        Ok(())
    }
}

/// Voxel storage type in volume files.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StorageType {
    F32,
    I16,
    U8,
}

impl StorageType {
    fn as_str(self) -> &'static str {
        match self {
            StorageType::F32 => "f32",
            StorageType::I16 => "i16",
            StorageType::U8 => "u8",
        }
    }

    fn width(self) -> usize {
        match self {
            StorageType::F32 => 4,
            StorageType::I16 => 2,
            StorageType::U8 => 1,
        }
    }
}

/// An intensity scan of `D` slices of `H x W` pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    dims: (usize, usize, usize),
    spacing: Spacing,
    data: Vec<f32>,
    storage: StorageType,
}

impl Volume {
    pub fn new(dims: (usize, usize, usize), spacing: Spacing, data: Vec<f32>) -> Result<Self> {
        Self::with_storage(dims, spacing, data, StorageType::F32)
    }

    pub fn with_storage(
        dims: (usize, usize, usize),
        spacing: Spacing,
        data: Vec<f32>,
        storage: StorageType,
    ) -> Result<Self> {
        check_dims(dims, data.len())?;
        spacing.validate()?;
        if storage == StorageType::U8 {
            return Err(invalid("intensity volumes are stored as f32 or i16"));
        }
        Ok(Self {
            dims,
            spacing,
            data,
            storage,
        })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    pub fn depth(&self) -> usize {
        self.dims.0
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn storage(&self) -> StorageType {
        self.storage
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn slice(&self, k: usize) -> &[f32] {
        let plane = self.dims.1 * self.dims.2;
        &self.data[k * plane..(k + 1) * plane]
    }
}

/// Binary labels aligned with a [`Volume`].
#[derive(Debug, Clone, PartialEq)]
pub struct MaskVolume {
    dims: (usize, usize, usize),
    spacing: Spacing,
    data: Vec<u8>,
}

impl MaskVolume {
    pub fn new(dims: (usize, usize, usize), spacing: Spacing, data: Vec<u8>) -> Result<Self> {
        check_dims(dims, data.len())?;
        spacing.validate()?;
        if data.iter().any(|&v| v > 1) {
            return Err(invalid("mask values must be 0 or 1"));
        }
        Ok(Self {
            dims,
            spacing,
            data,
        })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn slice(&self, k: usize) -> &[u8] {
        let plane = self.dims.1 * self.dims.2;
        &self.data[k * plane..(k + 1) * plane]
    }

    pub fn foreground(&self) -> usize {
        self.data.iter().map(|&v| v as usize).sum()
    }
}

fn check_dims(dims: (usize, usize, usize), len: usize) -> Result<()> {
    let (d, h, w) = dims;
    if d == 0 || h == 0 || w == 0 {
        return Err(invalid(format!("volume extents must be positive, got {dims:?}")));
    }
    if d * h * w != len {
        return Err(invalid(format!(
            "dims {dims:?} need {} voxels, buffer has {len}",
            d * h * w
        )));
    }
    Ok(())
}

fn header(dims: (usize, usize, usize), spacing: Spacing, storage: StorageType) -> String {
    format!(
        "dims={},{},{}\nspacing={},{},{}\ndtype={}\n\n",
        dims.0,
        dims.1,
        dims.2,
        spacing.thickness,
        spacing.row,
        spacing.col,
        storage.as_str()
    )
}

fn write_file(path: &Path, head: &str, payload: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(head.as_bytes())?;
    f.write_all(payload)?;
    Ok(())
}

pub fn write_volume(path: impl AsRef<Path>, volume: &Volume) -> Result<()> {
    let payload: Vec<u8> = match volume.storage {
        StorageType::F32 => volume.data.iter().flat_map(|v| v.to_le_bytes()).collect(),
        StorageType::I16 => volume
            .data
            .iter()
            .flat_map(|&v| (v.round().clamp(i16::MIN as f32, i16::MAX as f32) as i16).to_le_bytes())
            .collect(),
        StorageType::U8 => unreachable!("rejected at construction"),
    };
    write_file(
        path.as_ref(),
        &header(volume.dims, volume.spacing, volume.storage),
        &payload,
    )
}

pub fn write_mask(path: impl AsRef<Path>, mask: &MaskVolume) -> Result<()> {
    write_file(
        path.as_ref(),
        &header(mask.dims, mask.spacing, StorageType::U8),
        &mask.data,
    )
}

struct Parsed<'a> {
    dims: (usize, usize, usize),
    spacing: Spacing,
    storage: StorageType,
    payload: &'a [u8],
}

fn malformed(msg: impl Into<String>) -> Error {
    Error::MalformedHeader(msg.into())
}

fn parse(bytes: &[u8]) -> Result<Parsed<'_>> {
    let end = bytes
        .windows(2)
        .position(|w| w == b"\n\n")
        .ok_or_else(|| malformed("header is not terminated by a blank line"))?;
    let head = std::str::from_utf8(&bytes[..end]).map_err(|_| malformed("header is not UTF-8"))?;
    let payload = &bytes[end + 2..];

    let (mut dims, mut spacing, mut storage) = (None, None, None);
    for line in head.lines() {
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| malformed(format!("line `{line}` is not key=value")))?;
        let parts: Vec<&str> = value.split(',').collect();
        match key {
            "dims" => {
                let v = parts
                    .iter()
                    .map(|p| p.trim().parse::<usize>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|_| malformed(format!("bad dims `{value}`")))?;
                let [d, h, w] = v.as_slice() else {
                    return Err(malformed(format!("dims needs three values, got `{value}`")));
                };
                dims = Some((*d, *h, *w));
            }
            "spacing" => {
                let v = parts
                    .iter()
                    .map(|p| p.trim().parse::<f64>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|_| malformed(format!("bad spacing `{value}`")))?;
                let [z, y, x] = v.as_slice() else {
                    return Err(malformed(format!("spacing needs three values, got `{value}`")));
                };
                spacing = Some(
                    Spacing::new(*z, *y, *x).map_err(|e| malformed(e.to_string()))?,
                );
            }
            "dtype" => {
                storage = Some(match value {
                    "f32" => StorageType::F32,
                    "i16" => StorageType::I16,
                    "u8" => StorageType::U8,
                    other => return Err(malformed(format!("unknown dtype `{other}`"))),
                })
            }
            other => return Err(malformed(format!("unknown header key `{other}`"))),
        }
    }
    let dims = dims.ok_or_else(|| malformed("missing dims"))?;
    let spacing = spacing.ok_or_else(|| malformed("missing spacing"))?;
    let storage = storage.ok_or_else(|| malformed("missing dtype"))?;
    if dims.0 == 0 || dims.1 == 0 || dims.2 == 0 {
        return Err(malformed(format!("non-positive dims {dims:?}")));
    }
    let expected = dims.0 * dims.1 * dims.2 * storage.width();
    if payload.len() != expected {
        return Err(Error::Truncated {
            expected,
            found: payload.len(),
        });
    }
    Ok(Parsed {
        dims,
        spacing,
        storage,
        payload,
    })
}

pub fn read_volume(path: impl AsRef<Path>) -> Result<Volume> {
    let bytes = fs::read(path)?;
    let p = parse(&bytes)?;
    let data = match p.storage {
        StorageType::F32 => p
            .payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect(),
        StorageType::I16 => p
            .payload
            .chunks_exact(2)
            .map(|c| i16::from_le_bytes(c.try_into().expect("2 bytes")) as f32)
            .collect(),
        StorageType::U8 => return Err(malformed("expected an intensity volume, found dtype=u8")),
    };
    Volume::with_storage(p.dims, p.spacing, data, p.storage)
}

pub fn read_mask(path: impl AsRef<Path>) -> Result<MaskVolume> {
    let bytes = fs::read(path)?;
    let p = parse(&bytes)?;
    if p.storage != StorageType::U8 {
        return Err(malformed("mask files must use dtype=u8"));
    }
    MaskVolume::new(p.dims, p.spacing, p.payload.to_vec()).map_err(|e| malformed(e.to_string()))
}

/// Path of the mask that accompanies a volume: `scan.vol` → `scan.mask.vol`.
pub fn mask_path_for(volume_path: &Path) -> PathBuf {
    let stem = volume_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let ext = volume_path
        .extension()
        .map(|e| e.to_string_lossy().into_owned())
        .unwrap_or_else(|| "vol".into());
    volume_path.with_file_name(format!("{stem}.mask.{ext}"))
}

/// Reads a volume and, if present next to it, its mask.
pub fn load_volume(path: impl AsRef<Path>) -> Result<(Volume, Option<MaskVolume>)> {
    let path = path.as_ref();
    let volume = read_volume(path)?;
    let mask_path = mask_path_for(path);
    let mask = if mask_path.exists() {
        let m = read_mask(&mask_path)?;
        if m.dims() != volume.dims() {
            return Err(invalid(format!(
                "mask dims {:?} differ from volume dims {:?}",
                m.dims(),
                volume.dims()
            )));
        }
        Some(m)
    } else {
        None
    };
    Ok((volume, mask))
}
