//! Bilinear in-plane resampling with pixel-centre alignment.

/// What a resampled image represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResampleKind {
    /// Continuous values, kept as interpolated.
    Intensity,
    /// Binary labels: interpolated, then thresholded at 0.5.
    Mask,
    /// Probabilities: interpolated, then thresholded at 0.5.
    Probability,
}

fn axis_weights(src: usize, dst: usize) -> Vec<(usize, usize, f32)> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|i| {
            let pos = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(src - 1);
            (lo, hi, (pos - lo as f64) as f32)
        })
        .collect()
}

/// Resamples a `src.0 x src.1` image to `dst.0 x dst.1`.
pub fn resample_inplane(
    image: &[f32],
    src: (usize, usize),
    dst: (usize, usize),
    kind: ResampleKind,
) -> Vec<f32> {
    assert_eq!(image.len(), src.0 * src.1, "image buffer size");
    let out: Vec<f32> = if src == dst {
        image.to_vec()
    } else {
        let ry = axis_weights(src.0, dst.0);
        let rx = axis_weights(src.1, dst.1);
        let mut out = Vec::with_capacity(dst.0 * dst.1);
        for &(y0, y1, wy) in &ry {
            let (r0, r1) = (&image[y0 * src.1..(y0 + 1) * src.1], &image[y1 * src.1..(y1 + 1) * src.1]);
            for &(x0, x1, wx) in &rx {
                let top = r0[x0] * (1.0 - wx) + r0[x1] * wx;
                let bottom = r1[x0] * (1.0 - wx) + r1[x1] * wx;
                out.push(top * (1.0 - wy) + bottom * wy);
            }
        }
        out
    };
    match kind {
        ResampleKind::Intensity => out,
        ResampleKind::Mask | ResampleKind::Probability => out
            .into_iter()
            .map(|v| if v >= 0.5 { 1.0 } else { 0.0 })
            .collect(),
    }
}
