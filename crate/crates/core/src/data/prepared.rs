use std::ops::Range;

use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::tensor::Tensor;

use super::clahe::ClaheParams;
use super::context::{extract_contexts, organ_slice_range, ContextMode, SpatialContext};
use super::preprocess::{preprocess_slice, Window, DEFAULT_WINDOW};
use super::resample::{resample_inplane, ResampleKind};
use super::volume::{MaskVolume, Volume};

/// Intensity normalisation applied to every slice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Preprocessing {
    pub window: Window,
    pub clahe: ClaheParams,
}

impl Default for Preprocessing {
    fn default() -> Self {
        Self {
            window: DEFAULT_WINDOW,
            clahe: ClaheParams::default(),
        }
    }
}

/// A scan resampled to the network resolution and normalised, ready to be
/// cut into contexts.
#[derive(Debug, Clone)]
pub struct PreparedScan {
    pub id: String,
    pub thickness: f64,
    /// In-plane size of the original scan.
    pub native: (usize, usize),
    pub resolution: usize,
    /// Normalised `[1,R,R]` slices.
    pub slices: Vec<Tensor<f32>>,
    /// Binary `[1,R,R]` masks, when ground truth is available.
    pub masks: Option<Vec<Tensor<f32>>>,
    /// Slices with ground-truth foreground at native resolution.
    pub organ_range: Range<usize>,
}

impl PreparedScan {
    pub fn depth(&self) -> usize {
        self.slices.len()
    }

    /// Contexts centred on every organ slice (training) or every slice
    /// (inference).
    pub fn contexts(&self, o: usize, d_mm: f64, mode: ContextMode) -> Result<Vec<SpatialContext>> {
        let centres = match mode {
            ContextMode::Training => self.organ_range.clone(),
            ContextMode::Inference => 0..self.depth(),
        };
        extract_contexts(&self.id, self.depth(), self.thickness, centres, o, d_mm, mode)
    }

    /// Member slices of `context`, in order.
    pub fn context_slices(&self, context: &SpatialContext) -> Vec<Tensor<f32>> {
        context.members.iter().map(|&m| self.slices[m].clone()).collect()
    }
}

/// Downsamples each slice to `resolution` and normalises it; masks are
/// downsampled with the same geometry.
pub fn prepare_scan(
    id: &str,
    volume: &Volume,
    mask: Option<&MaskVolume>,
    resolution: usize,
    pre: &Preprocessing,
) -> Result<PreparedScan> {
    let (depth, h, w) = volume.dims();
    if resolution == 0 {
        return Err(invalid("resolution must be positive"));
    }
    if let Some(m) = mask {
        if m.dims() != volume.dims() {
            return Err(invalid(format!(
                "mask dims {:?} differ from volume dims {:?}",
                m.dims(),
                volume.dims()
            )));
        }
    }
    let target = (resolution, resolution);
    let slices = (0..depth)
        .into_par_iter()
        .map(|k| {
            let small = resample_inplane(volume.slice(k), (h, w), target, ResampleKind::Intensity);
            let norm = preprocess_slice(&small, resolution, resolution, pre.window, &pre.clahe)?;
            Tensor::new(&[1, resolution, resolution], norm)
        })
        .collect::<Result<Vec<_>>>()?;
    let masks = mask
        .map(|m| {
            (0..depth)
                .map(|k| {
                    let native: Vec<f32> = m.slice(k).iter().map(|&v| v as f32).collect();
                    let small = resample_inplane(&native, (h, w), target, ResampleKind::Mask);
                    Tensor::new(&[1, resolution, resolution], small)
                })
                .collect::<Result<Vec<_>>>()
        })
        .transpose()?;
    Ok(PreparedScan {
        id: id.to_string(),
        thickness: volume.spacing().thickness,
        native: (h, w),
        resolution,
        slices,
        masks,
        organ_range: mask.map(organ_slice_range).unwrap_or(0..0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth::synth_generate;
    use crate::data::volume::Spacing;

    #[test]
    fn prepared_scan_shapes() {
        let (v, m) = synth_generate(1, (6, 40, 40), Spacing::new(2.0, 1.0, 1.0).unwrap(), 3)
            .unwrap()
            .pop()
            .unwrap();
        let p = prepare_scan("a", &v, Some(&m), 16, &Preprocessing::default()).unwrap();
        assert_eq!(p.depth(), 6);
        assert!(p.slices.iter().all(|s| s.shape() == [1, 16, 16] && s.all_finite()));
        let masks = p.masks.as_ref().unwrap();
        assert!(masks.iter().all(|s| s.data().iter().all(|&v| v == 0.0 || v == 1.0)));
        assert!(!p.organ_range.is_empty());
        let inf = p.contexts(3, 2.0, ContextMode::Inference).unwrap();
        assert_eq!(inf.len(), 6);
    }
}
