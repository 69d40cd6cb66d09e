//! Dataset directories: volume/mask files plus a `manifest.toml` index.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use sensor3d::data::{read_mask, read_volume, MaskVolume, Volume};

use crate::failure::{data_err, io_err, CliResult, Failure};

pub const MANIFEST_FILE: &str = "manifest.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanEntry {
    pub id: String,
    /// Paths relative to the dataset directory.
    pub volume: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<String>,
    pub dims: [usize; 3],
    /// Slice thickness, row and column spacing in mm.
    pub spacing: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Manifest {
    #[serde(default)]
    pub scan: Vec<ScanEntry>,
}

impl Manifest {
    pub fn read(dir: &Path) -> CliResult<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(io_err(format!("reading {}", path.display())))?;
        toml::from_str(&text).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
    }

    pub fn write(&self, dir: &Path) -> CliResult<()> {
        let path = dir.join(MANIFEST_FILE);
        let text = toml::to_string(self).map_err(|e| Failure::Data(e.to_string()))?;
        fs::write(&path, text).map_err(io_err(format!("writing {}", path.display())))
    }

    pub fn ids(&self) -> Vec<String> {
        self.scan.iter().map(|s| s.id.clone()).collect()
    }

    pub fn entry(&self, id: &str) -> CliResult<&ScanEntry> {
        self.scan
            .iter()
            .find(|s| s.id == id)
            .ok_or_else(|| Failure::Data(format!("scan `{id}` is not in the manifest")))
    }
}

/// Reads a scan and its mask, which must be present.
pub fn load_pair(dir: &Path, entry: &ScanEntry) -> CliResult<(Volume, MaskVolume)> {
    let vol_path: PathBuf = dir.join(&entry.volume);
    let volume = read_volume(&vol_path).map_err(data_err(vol_path.display()))?;
    let mask_rel = entry
        .mask
        .as_ref()
        .ok_or_else(|| Failure::Data(format!("scan `{}` has no mask", entry.id)))?;
    let mask_path = dir.join(mask_rel);
    let mask = read_mask(&mask_path).map_err(data_err(mask_path.display()))?;
    if mask.dims() != volume.dims() {
        return Err(Failure::Data(format!(
            "scan `{}`: mask dims {:?} differ from volume dims {:?}",
            entry.id,
            mask.dims(),
            volume.dims()
        )));
    }
    Ok((volume, mask))
}
