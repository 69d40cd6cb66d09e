//! Feature-map export for visual inspection of intermediate layers.

use image::GrayImage;

use crate::error::Result;
use crate::tensor::{Scalar, Tensor};

use super::Sensor3d;

/// Min-max normalises each `[H,W]` map of a `[C,H,W]` tensor to `[0,1]`.
/// Constant maps become all zeros.
pub fn normalize_maps<T: Scalar>(maps: &Tensor<T>) -> Tensor<f32> {
    let (c, plane) = maps.leading();
    let mut out = Vec::with_capacity(maps.len());
    for ch in 0..c {
        let m = &maps.data()[ch * plane..(ch + 1) * plane];
        let lo = m.iter().map(|v| v.to_f64()).fold(f64::INFINITY, f64::min);
        let hi = m.iter().map(|v| v.to_f64()).fold(f64::NEG_INFINITY, f64::max);
        let span = hi - lo;
        out.extend(m.iter().map(|v| {
            if span > 0.0 {
                ((v.to_f64() - lo) / span) as f32
            } else {
                0.0
            }
        }));
    }
    Tensor::new(maps.shape(), out).expect("same element count")
}

/// Per-element feature maps of `layer` for one context, normalised per map.
pub fn export_activations<T: Scalar>(
    network: &Sensor3d<T>,
    context: &[Tensor<T>],
    layer: &str,
) -> Result<Vec<Tensor<f32>>> {
    Ok(network
        .layer_outputs(context, layer)?
        .iter()
        .map(normalize_maps)
        .collect())
}

/// Tiles the maps of a normalised `[C,H,W]` tensor into a near-square grid
/// with a one-pixel separator.
pub fn feature_grid(maps: &Tensor<f32>) -> GrayImage {
    let s = maps.shape();
    let (c, h, w) = (s[0], s[1], s[2]);
    let cols = (c as f64).sqrt().ceil().max(1.0) as usize;
    let rows = c.div_ceil(cols);
    let gw = cols * (w + 1) - 1;
    let gh = rows * (h + 1) - 1;
    let mut img = GrayImage::new(gw as u32, gh as u32);
    for ch in 0..c {
        let (gy, gx) = (ch / cols, ch % cols);
        for y in 0..h {
            for x in 0..w {
                let v = maps.data()[(ch * h + y) * w + x];
                let px = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
                img.put_pixel((gx * (w + 1) + x) as u32, (gy * (h + 1) + y) as u32, image::Luma([px]));
            }
        }
    }
    img
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn maps_are_normalised_independently() {
        let t = Tensor::<f64>::new(&[2, 1, 3], vec![1.0, 2.0, 3.0, 5.0, 5.0, 5.0]).unwrap();
        let n = normalize_maps(&t);
        assert_eq!(n.data(), &[0.0, 0.5, 1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn grid_dimensions() {
        let t = Tensor::<f32>::zeros(&[5, 4, 4]);
        let g = feature_grid(&t);
        assert_eq!((g.width(), g.height()), (3 * 5 - 1, 2 * 5 - 1));
    }
}
