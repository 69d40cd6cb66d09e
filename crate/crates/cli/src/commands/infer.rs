use std::path::PathBuf;

use clap::Args;
use log::info;
use serde::{Deserialize, Serialize};

use sensor3d::data::{prepare_scan, read_mask, read_volume, overlay_slice, save_rgb, write_mask, MaskVolume};
use sensor3d::evaluation::{dice_and_voe, predict_volume, NetworkSegmenter};

use super::{check_d_mm, create_dir, load_network, preprocessing};
use crate::failure::{data_err, CliResult, Failure};
use crate::settings::{resolve, write_resolved};

#[derive(Debug, Args, Serialize)]
pub struct InferArgs {
    /// Settings file; flags take precedence over its keys.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
    /// Volume file to segment.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub volume: Option<PathBuf>,
    /// Ground-truth mask, drawn in the overlays when given.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<PathBuf>,
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
pub struct InferSettings {
    pub checkpoint: PathBuf,
    pub volume: PathBuf,
    pub ground_truth: Option<PathBuf>,
    pub out: PathBuf,
    pub d_mm: f64,
    pub window: Vec<f32>,
}

impl Default for InferSettings {
    fn default() -> Self {
        Self {
            checkpoint: PathBuf::new(),
            volume: PathBuf::new(),
            ground_truth: None,
            out: PathBuf::from("infer"),
            d_mm: 5.0,
            window: vec![-100.0, 400.0],
        }
    }
}

pub const PREDICTION_FILE: &str = "prediction.mask.vol";

pub fn run(args: &InferArgs) -> CliResult<()> {
    let s: InferSettings = resolve(args.config.as_deref(), args)?;
    check_d_mm(s.d_mm)?;
    let pre = preprocessing(&s.window)?;
    if s.volume.as_os_str().is_empty() {
        return Err(Failure::Config("no volume given".into()));
    }
    let network = load_network(&s.checkpoint)?;
    let volume = read_volume(&s.volume).map_err(data_err(s.volume.display()))?;
    let truth = match &s.ground_truth {
        Some(p) => {
            let m = read_mask(p).map_err(data_err(p.display()))?;
            if m.dims() != volume.dims() {
                return Err(Failure::Data(format!(
                    "ground truth dims {:?} differ from volume dims {:?}",
                    m.dims(),
                    volume.dims()
                )));
            }
            Some(m)
        }
        None => None,
    };
    let id = s.volume.file_stem().map(|x| x.to_string_lossy().into_owned()).unwrap_or_default();
    let scan = prepare_scan(&id, &volume, None, network.config().resolution, &pre)
        .map_err(data_err(s.volume.display()))?;
    let seg = NetworkSegmenter { network: &network, d_mm: s.d_mm };
    let pred = predict_volume(&seg, &scan)?;
    let pred = MaskVolume::new(volume.dims(), volume.spacing(), pred)?;

    create_dir(&s.out)?;
    write_resolved(&s.out, &s)?;
    write_mask(s.out.join(PREDICTION_FILE), &pred).map_err(data_err(PREDICTION_FILE))?;
    let (depth, h, w) = volume.dims();
    let (lo, hi) = (pre.window.lo, pre.window.hi);
    for k in 0..depth {
        let gray: Vec<f32> = volume.slice(k).iter().map(|&v| (v.clamp(lo, hi) - lo) / (hi - lo)).collect();
        let img = overlay_slice(&gray, h, w, Some(pred.slice(k)), truth.as_ref().map(|t| t.slice(k)));
        let name = format!("overlay_{k:03}.png");
        save_rgb(s.out.join(&name), &img).map_err(data_err(&name))?;
    }
    match &truth {
        Some(t) => {
            let (d, voe) = dice_and_voe(pred.data(), t.data())?;
            info!("volume Dice {:.1}%, VOE {:.1}%", 100.0 * d, 100.0 * voe);
        }
        None => info!("{} foreground voxels predicted", pred.foreground()),
    }
    Ok(())
}
