pub mod eval;
pub mod features;
pub mod infer;
pub mod synth;
pub mod train;

use std::fs;
use std::path::Path;

use sensor3d::data::{Preprocessing, Window};
use sensor3d::network::{load_checkpoint, Sensor3d};

use crate::failure::{data_err, io_err, CliResult, Failure};

pub fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(io_err(format!("creating {}", dir.display())))
}

pub fn preprocessing(window: &[f32]) -> CliResult<Preprocessing> {
    match window {
        [lo, hi] if lo < hi => Ok(Preprocessing {
            window: Window { lo: *lo, hi: *hi },
            ..Preprocessing::default()
        }),
        _ => Err(Failure::Config(format!("window must be `lo,hi` with lo < hi, got {window:?}"))),
    }
}

pub fn load_network(path: &Path) -> CliResult<Sensor3d<f32>> {
    if path.as_os_str().is_empty() {
        return Err(Failure::Config("no checkpoint given".into()));
    }
    if !path.exists() {
        return Err(Failure::Data(format!("checkpoint {} does not exist", path.display())));
    }
    let (config, params) = load_checkpoint::<f32>(path).map_err(data_err(path.display()))?;
    Ok(Sensor3d::new(config, params)?)
}

pub fn check_d_mm(d_mm: f64) -> CliResult<()> {
    if d_mm > 0.0 && d_mm.is_finite() {
        Ok(())
    } else {
        Err(Failure::Config(format!("d_mm must be positive, got {d_mm}")))
    }
}
