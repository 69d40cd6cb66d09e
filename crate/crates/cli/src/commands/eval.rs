use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{ArgAction, Args};
use log::info;
use serde::{Deserialize, Serialize};

use sensor3d::data::{prepare_scan, MaskVolume, PreparedScan, Preprocessing};
use sensor3d::evaluation::{
    evaluate_volume, format_significance, significance_matrix, EvalReport, NetworkSegmenter, OracleSegmenter,
};

use super::train::SplitRecord;
use super::{check_d_mm, create_dir, load_network, preprocessing};
use crate::dataset::{load_pair, Manifest};
use crate::failure::{data_err, io_err, CliResult, Failure};
use crate::settings::{is_false, resolve, write_resolved};

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    /// Settings file; flags take precedence over its keys.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Dataset directory holding `manifest.toml`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Checkpoint to evaluate; repeat to compare several models.
    #[arg(long = "checkpoint")]
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub checkpoints: Vec<PathBuf>,
    /// Display name per checkpoint, in order.
    #[arg(long = "label")]
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub labels: Vec<String>,
    /// Scan ids to evaluate (default: the test ids of `--split`, else all).
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub scans: Vec<String>,
    /// `split.toml` written by `train`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub split: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d_mm: Option<f64>,
    /// Also score the ground truth itself as a model.
    #[arg(long, action = ArgAction::SetTrue)]
    #[serde(skip_serializing_if = "is_false")]
    pub oracle: bool,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window: Option<Vec<f32>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    pub data: PathBuf,
    pub out: PathBuf,
    pub checkpoints: Vec<PathBuf>,
    pub labels: Vec<String>,
    pub scans: Vec<String>,
    pub split: Option<PathBuf>,
    pub d_mm: f64,
    pub oracle: bool,
    pub window: Vec<f32>,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            data: PathBuf::from("synth"),
            out: PathBuf::from("eval"),
            checkpoints: Vec::new(),
            labels: Vec::new(),
            scans: Vec::new(),
            split: None,
            d_mm: 5.0,
            oracle: false,
            window: vec![-100.0, 400.0],
        }
    }
}

fn scan_ids(s: &EvalSettings, manifest: &Manifest) -> CliResult<Vec<String>> {
    if !s.scans.is_empty() {
        return Ok(s.scans.clone());
    }
    if let Some(path) = &s.split {
        let text = fs::read_to_string(path).map_err(io_err(format!("reading {}", path.display())))?;
        let split: SplitRecord =
            toml::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
        return Ok(split.test);
    }
    Ok(manifest.ids())
}

fn labels(s: &EvalSettings) -> CliResult<Vec<String>> {
    if !s.labels.is_empty() {
        if s.labels.len() != s.checkpoints.len() {
            return Err(Failure::Config(format!(
                "{} labels for {} checkpoints",
                s.labels.len(),
                s.checkpoints.len()
            )));
        }
        return Ok(s.labels.clone());
    }
    let stems: Vec<String> = s
        .checkpoints
        .iter()
        .map(|p| p.file_stem().map(|x| x.to_string_lossy().into_owned()).unwrap_or_default())
        .collect();
    let unique = stems.iter().collect::<std::collections::HashSet<_>>().len() == stems.len();
    Ok(if unique {
        stems
    } else {
        (0..stems.len()).map(|i| format!("model{i}")).collect()
    })
}

fn write_report(dir: &Path, label: &str, report: &EvalReport) -> CliResult<()> {
    for (ext, body) in [("csv", report.to_csv()), ("txt", report.to_table())] {
        let path = dir.join(format!("report_{label}.{ext}"));
        fs::write(&path, body).map_err(io_err(format!("writing {}", path.display())))?;
    }
    Ok(())
}

pub fn run(args: &EvalArgs) -> CliResult<()> {
    let s: EvalSettings = resolve(args.config.as_deref(), args)?;
    check_d_mm(s.d_mm)?;
    let pre: Preprocessing = preprocessing(&s.window)?;
    if s.checkpoints.is_empty() && !s.oracle {
        return Err(Failure::Config("nothing to evaluate: give --checkpoint or --oracle".into()));
    }
    let mut names = labels(&s)?;
    let networks = s.checkpoints.iter().map(|p| load_network(p)).collect::<CliResult<Vec<_>>>()?;
    let manifest = Manifest::read(&s.data)?;
    let ids = scan_ids(&s, &manifest)?;
    if ids.is_empty() {
        return Err(Failure::Config("no scans to evaluate".into()));
    }

    // Scans are prepared once per distinct network resolution.
    let mut resolutions: Vec<usize> = networks.iter().map(|n| n.config().resolution).collect();
    resolutions.sort_unstable();
    resolutions.dedup();
    let mut reports: Vec<Vec<_>> = vec![Vec::new(); networks.len()];
    let mut oracle_rows = Vec::new();
    for id in &ids {
        let (vol, mask): (_, MaskVolume) = load_pair(&s.data, manifest.entry(id)?)?;
        let mut prepared: HashMap<usize, PreparedScan> = HashMap::new();
        for &r in &resolutions {
            prepared.insert(r, prepare_scan(id, &vol, None, r, &pre).map_err(data_err(format!("scan `{id}`")))?);
        }
        for (i, net) in networks.iter().enumerate() {
            let scan = &prepared[&net.config().resolution];
            let seg = NetworkSegmenter { network: net, d_mm: s.d_mm };
            reports[i].push(evaluate_volume(&seg, scan, &mask)?);
        }
        if s.oracle {
            // The oracle only needs the scan geometry.
            let scan = prepare_scan(id, &vol, None, 1, &pre).map_err(data_err(format!("scan `{id}`")))?;
            oracle_rows.push(evaluate_volume(&OracleSegmenter { mask: &mask }, &scan, &mask)?);
        }
        info!("evaluated scan `{id}`");
    }
    let mut reports: Vec<EvalReport> = reports.into_iter().map(EvalReport::new).collect();
    if s.oracle {
        reports.push(EvalReport::new(oracle_rows));
        names.push("oracle".into());
    }

    create_dir(&s.out)?;
    write_resolved(&s.out, &s)?;
    for (name, report) in names.iter().zip(&reports) {
        write_report(&s.out, name, report)?;
        println!("{name}\n{}", report.to_table());
    }
    if reports.len() >= 2 {
        let samples: Vec<Vec<f64>> = reports.iter().map(|r| r.organ_dice()).collect();
        let matrix = significance_matrix(&samples)?;
        let table = format_significance(&names, &matrix);
        let mut csv = format!("model,{}\n", names.join(","));
        for (name, row) in names.iter().zip(&matrix) {
            let cells: Vec<String> = row
                .iter()
                .map(|p| if p.is_infinite() { "inf".to_string() } else { format!("{p:.6e}") })
                .collect();
            csv.push_str(&format!("{name},{}\n", cells.join(",")));
        }
        for (file, body) in [("significance.txt", &table), ("significance.csv", &csv)] {
            let path = s.out.join(file);
            fs::write(&path, body).map_err(io_err(format!("writing {}", path.display())))?;
        }
        println!("Wilcoxon signed-rank p-values (organ-area Dice)\n{table}");
    }
    Ok(())
}
