use crate::error::{invalid, Result};

use super::clahe::{clahe, ClaheParams};

/// Intensity window `[lo, hi]` in scanner units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub lo: f32,
    pub hi: f32,
}

/// Soft-tissue window used for abdominal scans.
pub const DEFAULT_WINDOW: Window = Window {
    lo: -100.0,
    hi: 400.0,
};

const STD_FLOOR: f64 = 1e-6;

/// Per-slice normalisation: clip to the window, rescale to `[0,1]`,
/// equalise with CLAHE, then subtract the slice mean and divide by the slice
/// standard deviation. A slice with (near) zero deviation becomes all zeros.
pub fn preprocess_slice(
    slice: &[f32],
    height: usize,
    width: usize,
    window: Window,
    params: &ClaheParams,
) -> Result<Vec<f32>> {
    if !(window.lo < window.hi) {
        return Err(invalid(format!(
            "window must satisfy lo < hi, got [{}, {}]",
            window.lo, window.hi
        )));
    }
    if slice.len() != height * width {
        return Err(invalid(format!(
            "slice holds {} pixels, expected {height}x{width}",
            slice.len()
        )));
    }
    let span = window.hi - window.lo;
    let unit: Vec<f32> = slice
        .iter()
        .map(|&v| {
            let v = if v.is_nan() { window.lo } else { v };
            (v.clamp(window.lo, window.hi) - window.lo) / span
        })
        .collect();
    let eq = clahe(&unit, height, width, params);
    let n = eq.len() as f64;
    let mean = eq.iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = eq.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if std < STD_FLOOR {
        return Ok(vec![0.0; eq.len()]);
    }
    Ok(eq.iter().map(|&v| ((v as f64 - mean) / std) as f32).collect())
}
