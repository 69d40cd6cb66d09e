use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use sensor3d::data::{prepare_scan, split_by_scan, step_in_slices, FoldSpec, PreparedScan, Preprocessing};
use sensor3d::network::{save_checkpoint, NetworkConfig, Sensor3d, Variant};
use sensor3d::training::{fit, write_history_csv, ContextSet, FitStatus, TrainConfig};

use super::{check_d_mm, create_dir, preprocessing};
use crate::dataset::{load_pair, Manifest};
use crate::failure::{data_err, io_err, CliResult, Failure};
use crate::settings::{resolve, write_resolved};

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const HISTORY_FILE: &str = "history.csv";
pub const SPLIT_FILE: &str = "split.toml";

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    /// Settings file; flags take precedence over its keys.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Dataset directory holding `manifest.toml`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    /// Run directory for checkpoint, history and split.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// full, single-slice-2d, aggregation-2d or unidirectional.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variant: Option<String>,
    /// Slices per context (odd).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub o: Option<usize>,
    /// Physical distance between context members in mm.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d_mm: Option<f64>,
    /// In-plane size the slices are resampled to.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resolution: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub base_features: Option<usize>,
    /// Divides every feature count.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub capacity_div: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub patience: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Number of random folds.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub folds: Option<usize>,
    /// Index of the test fold.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fold: Option<usize>,
    /// TOML file with explicit folds: `folds = [["a", "b"], ["c"]]`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fold_file: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub validation_fraction: Option<f64>,
    /// Intensity window `lo,hi`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window: Option<Vec<f32>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub data: PathBuf,
    pub out: PathBuf,
    pub variant: String,
    pub o: usize,
    pub d_mm: f64,
    pub resolution: usize,
    pub base_features: usize,
    pub capacity_div: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
    pub min_delta: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub folds: usize,
    pub fold: usize,
    pub fold_file: Option<PathBuf>,
    pub validation_fraction: f64,
    pub window: Vec<f32>,
}

impl Default for TrainSettings {
    fn default() -> Self {
        let net = NetworkConfig::default();
        let tc = TrainConfig::default();
        Self {
            data: PathBuf::from("synth"),
            out: PathBuf::from("run"),
            variant: net.variant.as_str().to_string(),
            o: net.seq_len,
            d_mm: 5.0,
            resolution: net.resolution,
            base_features: net.base_features,
            capacity_div: net.capacity_divisor,
            learning_rate: tc.learning_rate,
            beta1: tc.beta1,
            beta2: tc.beta2,
            adam_epsilon: tc.adam_epsilon,
            min_delta: tc.min_delta,
            batch_size: tc.batch_size,
            max_epochs: tc.max_epochs,
            patience: tc.patience,
            seed: 0,
            folds: 2,
            fold: 0,
            fold_file: None,
            validation_fraction: 0.1,
            window: vec![-100.0, 400.0],
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct FoldFile {
    folds: Vec<Vec<String>>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SplitRecord {
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
}

impl TrainSettings {
    fn network_config(&self) -> CliResult<NetworkConfig> {
        let variant: Variant = self.variant.parse().map_err(|e: sensor3d::Error| Failure::Config(e.to_string()))?;
        let cfg = NetworkConfig {
            seq_len: self.o,
            resolution: self.resolution,
            base_features: self.base_features,
            capacity_divisor: self.capacity_div,
            variant,
            classes: 1,
        }
        .normalized();
        cfg.validate()?;
        Ok(cfg)
    }

    fn train_config(&self) -> CliResult<TrainConfig> {
        let tc = TrainConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            adam_epsilon: self.adam_epsilon,
            patience: self.patience,
            min_delta: self.min_delta,
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            seed: self.seed,
        };
        tc.validate()?;
        Ok(tc)
    }

    fn fold_spec(&self) -> CliResult<FoldSpec> {
        match &self.fold_file {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(io_err(format!("reading {}", path.display())))?;
                let ff: FoldFile =
                    toml::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
                Ok(FoldSpec::Explicit {
                    folds: ff.folds,
                    fold: self.fold,
                })
            }
            None => Ok(FoldSpec::Random {
                folds: self.folds,
                fold: self.fold,
            }),
        }
    }
}

fn prepare(
    dir: &Path,
    manifest: &Manifest,
    ids: &[String],
    resolution: usize,
    pre: &Preprocessing,
) -> CliResult<Vec<PreparedScan>> {
    ids.par_iter()
        .map(|id| {
            let (vol, mask) = load_pair(dir, manifest.entry(id)?)?;
            prepare_scan(id, &vol, Some(&mask), resolution, pre).map_err(data_err(format!("scan `{id}`")))
        })
        .collect()
}

pub fn run(args: &TrainArgs) -> CliResult<()> {
    let s: TrainSettings = resolve(args.config.as_deref(), args)?;
    let net_cfg = s.network_config()?;
    let train_cfg = s.train_config()?;
    check_d_mm(s.d_mm)?;
    let pre = preprocessing(&s.window)?;
    if net_cfg.seq_len != s.o {
        info!("variant {} uses single-slice contexts (o = 1)", net_cfg.variant);
    }

    let manifest = Manifest::read(&s.data)?;
    let split = split_by_scan(&manifest.ids(), &s.fold_spec()?, s.seed, s.validation_fraction)
        .map_err(|e| Failure::Config(e.to_string()))?;
    if split.train.is_empty() {
        return Err(Failure::Config("the split leaves no training scans".into()));
    }
    for entry in &manifest.scan {
        let thickness = entry.spacing[0];
        if net_cfg.seq_len > 1 && s.d_mm < thickness && step_in_slices(s.d_mm, thickness) == 1 {
            warn!(
                "scan `{}`: d = {} mm is below the slice thickness {} mm; contexts use direct-consecutive slices",
                entry.id, s.d_mm, thickness
            );
        }
    }

    let train_scans = prepare(&s.data, &manifest, &split.train, net_cfg.resolution, &pre)?;
    let val_scans = prepare(&s.data, &manifest, &split.validation, net_cfg.resolution, &pre)?;
    let train_set = ContextSet::new(train_scans, net_cfg.seq_len, s.d_mm).map_err(data_err("training contexts"))?;
    let val_set = ContextSet::new(val_scans, net_cfg.seq_len, s.d_mm).map_err(data_err("validation contexts"))?;
    if train_set.is_empty() {
        return Err(Failure::Data("no training context fits inside its volume".into()));
    }
    info!(
        "{} training contexts from {} scans, {} validation contexts from {} scans",
        train_set.len(),
        split.train.len(),
        val_set.len(),
        split.validation.len()
    );

    create_dir(&s.out)?;
    write_resolved(&s.out, &s)?;
    let record = SplitRecord {
        train: split.train.clone(),
        validation: split.validation.clone(),
        test: split.test.clone(),
    };
    let split_path = s.out.join(SPLIT_FILE);
    fs::write(&split_path, toml::to_string(&record).map_err(|e| Failure::Data(e.to_string()))?)
        .map_err(io_err(format!("writing {}", split_path.display())))?;

    let network = Sensor3d::<f32>::initialized(net_cfg.clone(), s.seed)?;
    info!("{} parameters", network.params().count());
    let outcome = fit(network, &train_set, &val_set, &train_cfg, &mut |r| match r.val_loss {
        Some(v) => info!("epoch {:>4}  train {:.5}  val {:.5}", r.epoch, r.train_loss, v),
        None => info!("epoch {:>4}  train {:.5}", r.epoch, r.train_loss),
    })?;

    let ckpt = s.out.join(CHECKPOINT_FILE);
    save_checkpoint(&ckpt, outcome.network.config(), outcome.network.params()).map_err(data_err(ckpt.display()))?;
    write_history_csv(s.out.join(HISTORY_FILE), &outcome.history).map_err(data_err(HISTORY_FILE))?;
    match outcome.status {
        FitStatus::NonFinite { epoch, detail } => Err(Failure::Numeric(format!(
            "epoch {epoch}: {detail}; kept parameters of epoch {}",
            outcome.best_epoch
        ))),
        status => {
            info!(
                "{status:?} after {} epochs; best epoch {} saved to {}",
                outcome.history.len(),
                outcome.best_epoch,
                ckpt.display()
            );
            Ok(())
        }
    }
}
