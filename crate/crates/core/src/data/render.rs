//! PNG export of slices and segmentation overlays.

use std::path::Path;

use image::{GrayImage, Luma, Rgb, RgbImage};

use crate::error::{Error, Result};

pub const OUTLINE_PRED: [u8; 3] = [255, 0, 0];
pub const OUTLINE_GT: [u8; 3] = [0, 255, 0];
pub const OUTLINE_OVERLAP: [u8; 3] = [255, 255, 0];

/// Foreground pixels with at least one 4-neighbour in the background or on
/// the image border.
pub fn outline(mask: &[u8], height: usize, width: usize) -> Vec<bool> {
    assert_eq!(mask.len(), height * width, "mask buffer size");
    let on = |y: isize, x: isize| {
        y >= 0
            && x >= 0
            && (y as usize) < height
            && (x as usize) < width
            && mask[y as usize * width + x as usize] != 0
    };
    (0..height * width)
        .map(|i| {
            let (y, x) = ((i / width) as isize, (i % width) as isize);
            on(y, x) && !(on(y - 1, x) && on(y + 1, x) && on(y, x - 1) && on(y, x + 1))
        })
        .collect()
}

fn to_byte(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Grey slice (values in `[0,1]`) with the prediction outline in red, the
/// ground-truth outline in green and pixels on both outlines in yellow.
pub fn overlay_slice(
    gray: &[f32],
    height: usize,
    width: usize,
    pred: Option<&[u8]>,
    gt: Option<&[u8]>,
) -> RgbImage {
    assert_eq!(gray.len(), height * width, "slice buffer size");
    let p = pred.map(|m| outline(m, height, width));
    let g = gt.map(|m| outline(m, height, width));
    RgbImage::from_fn(width as u32, height as u32, |x, y| {
        let i = y as usize * width + x as usize;
        let in_p = p.as_ref().is_some_and(|o| o[i]);
        let in_g = g.as_ref().is_some_and(|o| o[i]);
        match (in_p, in_g) {
            (true, true) => Rgb(OUTLINE_OVERLAP),
            (true, false) => Rgb(OUTLINE_PRED),
            (false, true) => Rgb(OUTLINE_GT),
            (false, false) => {
                let b = to_byte(gray[i]);
                Rgb([b, b, b])
            }
        }
    })
}

fn image_error(path: &Path, e: image::ImageError) -> Error {
    Error::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Writes a `[0,1]` slice as an 8-bit greyscale PNG.
pub fn save_gray(path: impl AsRef<Path>, values: &[f32], height: usize, width: usize) -> Result<()> {
    let path = path.as_ref();
    assert_eq!(values.len(), height * width, "slice buffer size");
    let img = GrayImage::from_fn(width as u32, height as u32, |x, y| {
        Luma([to_byte(values[y as usize * width + x as usize])])
    });
    img.save(path).map_err(|e| image_error(path, e))
}

pub fn save_rgb(path: impl AsRef<Path>, image: &RgbImage) -> Result<()> {
    let path = path.as_ref();
    image.save(path).map_err(|e| image_error(path, e))
}
