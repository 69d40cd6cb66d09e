use std::path::PathBuf;

use clap::{ArgAction, Args};
use serde::{Deserialize, Serialize};

use sensor3d::data::{extract_contexts, prepare_scan, read_volume, ContextMode};
use sensor3d::network::{export_activations, feature_grid};
use sensor3d::Tensor;

use super::{check_d_mm, create_dir, load_network, preprocessing};
use crate::failure::{data_err, CliResult, Failure};
use crate::settings::{is_false, resolve, write_resolved};

#[derive(Debug, Args, Serialize)]
pub struct FeatureArgs {
    /// Settings file; flags take precedence over its keys.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub volume: Option<PathBuf>,
    /// Centre slice of the probed context.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slice: Option<usize>,
    /// Layer whose activations are exported.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub layer: Option<String>,
    /// Fill every context position with the centre slice.
    #[arg(long, action = ArgAction::SetTrue)]
    #[serde(skip_serializing_if = "is_false")]
    pub repeat_slice: bool,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d_mm: Option<f64>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window: Option<Vec<f32>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureSettings {
    pub checkpoint: PathBuf,
    pub volume: PathBuf,
    pub slice: usize,
    pub layer: String,
    pub repeat_slice: bool,
    pub out: PathBuf,
    pub d_mm: f64,
    pub window: Vec<f32>,
}

impl Default for FeatureSettings {
    fn default() -> Self {
        Self {
            checkpoint: PathBuf::new(),
            volume: PathBuf::new(),
            slice: 0,
            layer: "up_3".into(),
            repeat_slice: false,
            out: PathBuf::from("features"),
            d_mm: 5.0,
            window: vec![-100.0, 400.0],
        }
    }
}

pub fn run(args: &FeatureArgs) -> CliResult<()> {
    let s: FeatureSettings = resolve(args.config.as_deref(), args)?;
    check_d_mm(s.d_mm)?;
    let pre = preprocessing(&s.window)?;
    let network = load_network(&s.checkpoint)?;
    if !network.layer_names().contains(&s.layer.as_str()) {
        return Err(Failure::Config(format!(
            "unknown layer `{}`; valid layers: {}",
            s.layer,
            network.layer_names().join(", ")
        )));
    }
    if s.volume.as_os_str().is_empty() {
        return Err(Failure::Config("no volume given".into()));
    }
    let volume = read_volume(&s.volume).map_err(data_err(s.volume.display()))?;
    if s.slice >= volume.depth() {
        return Err(Failure::Config(format!(
            "slice {} outside volume of {} slices",
            s.slice,
            volume.depth()
        )));
    }
    let cfg = network.config();
    let scan = prepare_scan("probe", &volume, None, cfg.resolution, &pre).map_err(data_err(s.volume.display()))?;
    let context: Vec<Tensor<f32>> = if s.repeat_slice {
        vec![scan.slices[s.slice].clone(); cfg.seq_len]
    } else {
        let ctx = extract_contexts(
            "probe",
            scan.depth(),
            scan.thickness,
            s.slice..s.slice + 1,
            cfg.seq_len,
            s.d_mm,
            ContextMode::Inference,
        )?;
        scan.context_slices(&ctx[0])
    };
    let maps = export_activations(&network, &context, &s.layer)?;
    create_dir(&s.out)?;
    write_resolved(&s.out, &s)?;
    for (i, m) in maps.iter().enumerate() {
        let name = format!("{}_element{i}.png", s.layer);
        let path = s.out.join(&name);
        feature_grid(m)
            .save(&path)
            .map_err(|e| Failure::Data(format!("writing {}: {e}", path.display())))?;
    }
    println!("{} grids of {} maps written to {}", maps.len(), maps.first().map_or(0, |m| m.shape()[0]), s.out.display());
    Ok(())
}
