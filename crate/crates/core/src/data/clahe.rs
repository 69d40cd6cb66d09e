//! Contrast-limited adaptive histogram equalisation.
//!
//! The image is cut into a grid of tiles. Each tile gets a histogram whose
//! bins are clipped at a limit, with the clipped excess spread evenly over
//! all bins, and the normalised cumulative histogram becomes that tile's
//! intensity mapping. Every pixel is then mapped through the four nearest
//! tile mappings, blended bilinearly by its distance to the tile centres.

/// Tile grid, clip limit (as a fraction of the pixels per tile) and
/// histogram resolution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClaheParams {
    pub tiles: (usize, usize),
    pub clip_fraction: f64,
    pub bins: usize,
}

impl Default for ClaheParams {
    fn default() -> Self {
        Self {
            tiles: (8, 8),
            clip_fraction: 0.01,
            bins: 256,
        }
    }
}

#[inline]
fn bin_of(v: f32, bins: usize) -> usize {
    ((v.clamp(0.0, 1.0) as f64 * bins as f64) as usize).min(bins - 1)
}

/// Start offsets of `n` near-equal partitions of `len` (plus the end).
fn bounds(len: usize, n: usize) -> Vec<usize> {
    (0..=n).map(|i| i * len / n).collect()
}

fn tile_mapping(
    image: &[f32],
    width: usize,
    rows: (usize, usize),
    cols: (usize, usize),
    p: &ClaheParams,
) -> Vec<f32> {
    let mut hist = vec![0.0f64; p.bins];
    for y in rows.0..rows.1 {
        for &v in &image[y * width + cols.0..y * width + cols.1] {
            hist[bin_of(v, p.bins)] += 1.0;
        }
    }
    let pixels = ((rows.1 - rows.0) * (cols.1 - cols.0)) as f64;
    let limit = (p.clip_fraction * pixels).floor().max(1.0);
    let mut excess = 0.0;
    for h in hist.iter_mut() {
        if *h > limit {
            excess += *h - limit;
            *h = limit;
        }
    }
    let share = excess / p.bins as f64;
    let mut acc = 0.0;
    hist.iter()
        .map(|h| {
            acc += h + share;
            (acc / pixels) as f32
        })
        .collect()
}

/// Locates `pos` between tile centres: returns the lower and upper tile
/// index and the weight of the upper one.
fn neighbours(pos: usize, centres: &[f64]) -> (usize, usize, f32) {
    let p = pos as f64;
    let last = centres.len() - 1;
    if p <= centres[0] {
        return (0, 0, 0.0);
    }
    if p >= centres[last] {
        return (last, last, 0.0);
    }
    let hi = centres.iter().position(|&c| c > p).expect("inside range");
    let lo = hi - 1;
    let t = (p - centres[lo]) / (centres[hi] - centres[lo]);
    (lo, hi, t as f32)
}

/// Equalises a `height x width` image with values in `[0,1]`.
pub fn clahe(image: &[f32], height: usize, width: usize, params: &ClaheParams) -> Vec<f32> {
    assert_eq!(image.len(), height * width, "image buffer size");
    if image.is_empty() {
        return Vec::new();
    }
    let ny = params.tiles.0.clamp(1, height);
    let nx = params.tiles.1.clamp(1, width);
    let rb = bounds(height, ny);
    let cb = bounds(width, nx);
    let maps: Vec<Vec<Vec<f32>>> = (0..ny)
        .map(|ty| {
            (0..nx)
                .map(|tx| tile_mapping(image, width, (rb[ty], rb[ty + 1]), (cb[tx], cb[tx + 1]), params))
                .collect()
        })
        .collect();
    let cy: Vec<f64> = (0..ny).map(|i| (rb[i] + rb[i + 1] - 1) as f64 / 2.0).collect();
    let cx: Vec<f64> = (0..nx).map(|i| (cb[i] + cb[i + 1] - 1) as f64 / 2.0).collect();
    let col_nb: Vec<(usize, usize, f32)> = (0..width).map(|x| neighbours(x, &cx)).collect();

    let mut out = vec![0.0f32; image.len()];
    for y in 0..height {
        let (y0, y1, wy) = neighbours(y, &cy);
        for x in 0..width {
            let (x0, x1, wx) = col_nb[x];
            let b = bin_of(image[y * width + x], params.bins);
            let top = maps[y0][x0][b] * (1.0 - wx) + maps[y0][x1][b] * wx;
            let bottom = maps[y1][x0][b] * (1.0 - wx) + maps[y1][x1][b] * wx;
            out[y * width + x] = top * (1.0 - wy) + bottom * wy;
        }
    }
    out
}
