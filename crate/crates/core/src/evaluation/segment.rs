use rayon::prelude::*;

use crate::data::{
    extract_contexts, organ_slice_range, resample_inplane, ContextMode, MaskVolume, PreparedScan,
    ResampleKind,
};
use crate::error::{invalid, Error, Result};
use crate::network::Sensor3d;
use crate::tensor::{Scalar, Tensor};

use super::metrics::{dice_and_voe, threshold_prediction, FOREGROUND_EPSILON};
use super::report::{ScanScores, Scores};

/// Anything that yields per-slice foreground probabilities.
pub trait Segmenter: Sync {
    /// Probabilities for slice `k` of `scan` at its native in-plane size.
    fn segment_slice(&self, scan: &PreparedScan, k: usize) -> Result<Vec<f32>>;
}

/// Segments with a trained network, building an inference context around
/// each slice.
pub struct NetworkSegmenter<'a, T> {
    pub network: &'a Sensor3d<T>,
    pub d_mm: f64,
}

impl<T: Scalar> Segmenter for NetworkSegmenter<'_, T> {
    fn segment_slice(&self, scan: &PreparedScan, k: usize) -> Result<Vec<f32>> {
        let cfg = self.network.config();
        if scan.resolution != cfg.resolution {
            return Err(Error::ConfigMismatch {
                expected: format!("resolution {}", cfg.resolution),
                found: format!("scan prepared at {}", scan.resolution),
            });
        }
        let ctx = extract_contexts(
            &scan.id,
            scan.depth(),
            scan.thickness,
            k..k + 1,
            cfg.seq_len,
            self.d_mm,
            ContextMode::Inference,
        )?
        .pop()
        .ok_or_else(|| invalid(format!("slice {k} outside scan {}", scan.id)))?;
        let inputs: Vec<Tensor<T>> = scan.context_slices(&ctx).iter().map(|t| t.cast()).collect();
        let out = self.network.predict(&inputs)?;
        let r = cfg.resolution;
        let probs: Vec<f32> = out.data()[..r * r].iter().map(|v| v.to_f64() as f32).collect();
        Ok(resample_inplane(&probs, (r, r), scan.native, ResampleKind::Intensity))
    }
}

/// Returns the ground truth itself as probabilities 0 and 1.
pub struct OracleSegmenter<'a> {
    pub mask: &'a MaskVolume,
}

impl Segmenter for OracleSegmenter<'_> {
    fn segment_slice(&self, _scan: &PreparedScan, k: usize) -> Result<Vec<f32>> {
        Ok(self.mask.slice(k).iter().map(|&v| v as f32).collect())
    }
}

/// Binary foreground mask of the whole scan at native resolution.
pub fn predict_volume(segmenter: &dyn Segmenter, scan: &PreparedScan) -> Result<Vec<u8>> {
    let slices: Vec<Vec<u8>> = (0..scan.depth())
        .into_par_iter()
        .map(|k| Ok(threshold_prediction(&segmenter.segment_slice(scan, k)?, FOREGROUND_EPSILON)))
        .collect::<Result<_>>()?;
    Ok(slices.concat())
}

/// Dice and VOE over the organ slices and over the full volume.
pub fn evaluate_volume(segmenter: &dyn Segmenter, scan: &PreparedScan, mask: &MaskVolume) -> Result<ScanScores> {
    let (d, h, w) = mask.dims();
    if d != scan.depth() || (h, w) != scan.native {
        return Err(invalid(format!(
            "mask dims {:?} do not match scan {} ({} slices of {:?})",
            mask.dims(),
            scan.id,
            scan.depth(),
            scan.native
        )));
    }
    let pred = predict_volume(segmenter, scan)?;
    let plane = h * w;
    let range = organ_slice_range(mask);
    let organ = range.start * plane..range.end * plane;
    let (od, ov) = dice_and_voe(&pred[organ.clone()], &mask.data()[organ])?;
    let (fd, fv) = dice_and_voe(&pred, mask.data())?;
    Ok(ScanScores {
        scan_id: scan.id.clone(),
        organ_area: Scores { dice: od, voe: ov },
        full_volume: Scores { dice: fd, voe: fv },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{prepare_scan, synth_generate, Preprocessing, Spacing};

    struct Zero;

    impl Segmenter for Zero {
        fn segment_slice(&self, scan: &PreparedScan, _k: usize) -> Result<Vec<f32>> {
            Ok(vec![0.0; scan.native.0 * scan.native.1])
        }
    }

    fn scan() -> (PreparedScan, MaskVolume) {
        let (v, m) = synth_generate(1, (8, 32, 32), Spacing::new(2.0, 1.0, 1.0).unwrap(), 4)
            .unwrap()
            .pop()
            .unwrap();
        (prepare_scan("a", &v, Some(&m), 16, &Preprocessing::default()).unwrap(), m)
    }

    #[test]
    fn oracle_scores_perfectly() {
        let (s, m) = scan();
        let r = evaluate_volume(&OracleSegmenter { mask: &m }, &s, &m).unwrap();
        assert_eq!((r.organ_area.dice, r.organ_area.voe), (1.0, 0.0));
        assert_eq!((r.full_volume.dice, r.full_volume.voe), (1.0, 0.0));
    }

    #[test]
    fn empty_prediction_scores_zero() {
        let (s, m) = scan();
        let r = evaluate_volume(&Zero, &s, &m).unwrap();
        assert_eq!((r.organ_area.dice, r.organ_area.voe), (0.0, 1.0));
        assert_eq!((r.full_volume.dice, r.full_volume.voe), (0.0, 1.0));
    }

    #[test]
    fn resolution_mismatch_is_config_error() {
        let (s, m) = scan();
        let cfg = crate::network::NetworkConfig {
            resolution: 32,
            capacity_divisor: 8,
            ..Default::default()
        };
        let net = Sensor3d::<f32>::initialized(cfg, 0).unwrap();
        let seg = NetworkSegmenter { network: &net, d_mm: 2.0 };
        assert!(matches!(evaluate_volume(&seg, &s, &m), Err(Error::ConfigMismatch { .. })));
    }
}
