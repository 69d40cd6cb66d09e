use std::path::PathBuf;

use clap::Args;
use log::info;
use serde::{Deserialize, Serialize};

use sensor3d::data::{synth_generate, write_mask, write_volume, Spacing};

use super::create_dir;
use crate::dataset::{Manifest, ScanEntry};
use crate::failure::{data_err, CliResult, Failure};
use crate::settings::{resolve, write_resolved};

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    /// Settings file; flags take precedence over its keys.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Output dataset directory.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    /// Slices, rows and columns, e.g. `40,128,128`.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dims: Option<Vec<usize>>,
    /// Slice thickness, row and column spacing in mm, e.g. `2.5,0.8,0.8`.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spacing: Option<Vec<f64>>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSettings {
    pub out: PathBuf,
    pub count: usize,
    pub dims: Vec<usize>,
    pub spacing: Vec<f64>,
    pub seed: u64,
}

impl Default for SynthSettings {
    fn default() -> Self {
        Self {
            out: PathBuf::from("synth"),
            count: 4,
            dims: vec![40, 128, 128],
            spacing: vec![2.5, 0.8, 0.8],
            seed: 0,
        }
    }
}

pub fn run(args: &SynthArgs) -> CliResult<()> {
    let s: SynthSettings = resolve(args.config.as_deref(), args)?;
    let dims = match s.dims[..] {
        [d, h, w] if d > 0 && h > 0 && w > 0 => (d, h, w),
        _ => return Err(Failure::Config(format!("dims must be three positive sizes, got {:?}", s.dims))),
    };
    let spacing = match s.spacing[..] {
        [t, r, c] => Spacing::new(t, r, c)?,
        _ => return Err(Failure::Config(format!("spacing needs three values, got {:?}", s.spacing))),
    };
    create_dir(&s.out)?;
    let pairs = synth_generate(s.count, dims, spacing, s.seed)?;
    let width = s.count.saturating_sub(1).to_string().len().max(2);
    let mut manifest = Manifest::default();
    for (i, (vol, mask)) in pairs.iter().enumerate() {
        let id = format!("scan{i:0width$}");
        let vol_name = format!("{id}.vol");
        let mask_name = format!("{id}.mask.vol");
        write_volume(s.out.join(&vol_name), vol).map_err(data_err(&vol_name))?;
        write_mask(s.out.join(&mask_name), mask).map_err(data_err(&mask_name))?;
        manifest.scan.push(ScanEntry {
            id,
            volume: vol_name,
            mask: Some(mask_name),
            dims: [dims.0, dims.1, dims.2],
            spacing: [spacing.thickness, spacing.row, spacing.col],
        });
    }
    manifest.write(&s.out)?;
    write_resolved(&s.out, &s)?;
    info!("wrote {} scans to {}", s.count, s.out.display());
    Ok(())
}
