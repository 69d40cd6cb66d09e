//! Synthetic phantom scans: a textured elliptical body containing a bright
//! bone-like disk and a smooth "organ" made of overlapping ellipsoids.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{invalid, Result};

use super::volume::{MaskVolume, Spacing, StorageType, Volume};

/// Intensity model and organ size band of the generator.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthParams {
    /// Allowed organ share of all voxels, `(min, max)`.
    pub fraction_band: (f64, f64),
    pub air_hu: f32,
    pub body_hu: f32,
    pub organ_hu: f32,
    pub bone_hu: f32,
    pub texture_hu: f32,
    pub noise_sigma: f32,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            fraction_band: (0.05, 0.40),
            air_hu: -1000.0,
            body_hu: 40.0,
            organ_hu: 130.0,
            bone_hu: 300.0,
            texture_hu: 20.0,
            noise_sigma: 15.0,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Ellipsoid {
    centre: [f64; 3],
    radii: [f64; 3],
}

impl Ellipsoid {
    fn contains(&self, p: [f64; 3]) -> bool {
        (0..3)
            .map(|a| ((p[a] - self.centre[a]) / self.radii[a]).powi(2))
            .sum::<f64>()
            <= 1.0
    }
}

/// Physical position of voxel `(k, i, j)` in units of the volume extent.
fn unit_position(k: usize, i: usize, j: usize, dims: (usize, usize, usize)) -> [f64; 3] {
    [
        (k as f64 + 0.5) / dims.0 as f64,
        (i as f64 + 0.5) / dims.1 as f64,
        (j as f64 + 0.5) / dims.2 as f64,
    ]
}

fn sample_organ(rng: &mut ChaCha8Rng) -> Vec<Ellipsoid> {
    let main = Ellipsoid {
        centre: [
            rng.random_range(0.42..0.58),
            rng.random_range(0.40..0.55),
            rng.random_range(0.35..0.60),
        ],
        radii: [
            rng.random_range(0.28..0.40),
            rng.random_range(0.16..0.26),
            rng.random_range(0.16..0.26),
        ],
    };
    let lobes = rng.random_range(0..=2);
    let mut parts = vec![main];
    for _ in 0..lobes {
        let scale = rng.random_range(0.5..0.8);
        let mut centre = main.centre;
        for (a, c) in centre.iter_mut().enumerate() {
            *c += rng.random_range(-0.6..0.6) * main.radii[a];
        }
        parts.push(Ellipsoid {
            centre,
            radii: main.radii.map(|r| r * scale),
        });
    }
    parts
}

fn organ_mask(parts: &[Ellipsoid], dims: (usize, usize, usize)) -> Vec<u8> {
    let mut mask = Vec::with_capacity(dims.0 * dims.1 * dims.2);
    for k in 0..dims.0 {
        for i in 0..dims.1 {
            for j in 0..dims.2 {
                let p = unit_position(k, i, j, dims);
                mask.push(parts.iter().any(|e| e.contains(p)) as u8);
            }
        }
    }
    mask
}

fn generate_one(
    dims: (usize, usize, usize),
    spacing: Spacing,
    seed: u64,
    params: &SynthParams,
) -> Result<(Volume, MaskVolume)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total = (dims.0 * dims.1 * dims.2) as f64;
    let (lo, hi) = params.fraction_band;

    // Rejection-sample the organ shape into the size band, keeping the
    // closest attempt in case the grid is too coarse to ever hit it.
    let mut best: Option<(f64, Vec<u8>)> = None;
    for _ in 0..200 {
        let mask = organ_mask(&sample_organ(&mut rng), dims);
        let frac = mask.iter().map(|&v| v as f64).sum::<f64>() / total;
        let miss = if frac < lo { lo - frac } else if frac > hi { frac - hi } else { 0.0 };
        let nonempty = frac > 0.0;
        if nonempty && best.as_ref().is_none_or(|(m, _)| miss < *m) {
            best = Some((miss, mask));
        }
        if nonempty && miss == 0.0 {
            break;
        }
    }
    let (_, mask) = best.ok_or_else(|| invalid(format!("volume {dims:?} too small to hold an organ")))?;

    let body = [rng.random_range(0.40..0.46), rng.random_range(0.42..0.48)];
    let bone_centre = [rng.random_range(0.74..0.80), rng.random_range(0.45..0.55)];
    let bone_radius = rng.random_range(0.05..0.07);
    let freq: [f64; 3] = std::array::from_fn(|_| rng.random_range(4.0..12.0));
    let phase: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.0..std::f64::consts::TAU));
    let noise = Normal::new(0.0f32, params.noise_sigma.max(0.0))
        .map_err(|e| invalid(format!("noise level: {e}")))?;

    let mut data = Vec::with_capacity(mask.len());
    for k in 0..dims.0 {
        for i in 0..dims.1 {
            for j in 0..dims.2 {
                let p = unit_position(k, i, j, dims);
                let (dy, dx) = (p[1] - 0.5, p[2] - 0.5);
                let inside_body = (dy / body[0]).powi(2) + (dx / body[1]).powi(2) <= 1.0;
                let idx = data.len();
                let texture = (freq[0] * p[1] + phase[0]).sin()
                    * (freq[1] * p[2] + phase[1]).sin()
                    * (0.5 + 0.5 * (freq[2] * p[0] + phase[2]).cos());
                let base = if mask[idx] == 1 {
                    params.organ_hu + 0.5 * params.texture_hu * texture as f32
                } else if !inside_body {
                    params.air_hu
                } else if (p[1] - bone_centre[0]).hypot(p[2] - bone_centre[1]) <= bone_radius {
                    params.bone_hu
                } else {
                    params.body_hu + params.texture_hu * texture as f32
                };
                let v = base + noise.sample(&mut rng);
                data.push(v.round().clamp(i16::MIN as f32, i16::MAX as f32));
            }
        }
    }
    Ok((
        Volume::with_storage(dims, spacing, data, StorageType::I16)?,
        MaskVolume::new(dims, spacing, mask)?,
    ))
}

/// Generates `count` scan/mask pairs with default intensities.
///
/// Scan `n` depends only on `seed` and `n`, so larger batches extend
/// smaller ones.
pub fn synth_generate(
    count: usize,
    dims: (usize, usize, usize),
    spacing: Spacing,
    seed: u64,
) -> Result<Vec<(Volume, MaskVolume)>> {
    synth_generate_with(count, dims, spacing, seed, &SynthParams::default())
}

pub fn synth_generate_with(
    count: usize,
    dims: (usize, usize, usize),
    spacing: Spacing,
    seed: u64,
    params: &SynthParams,
) -> Result<Vec<(Volume, MaskVolume)>> {
    spacing.validate()?;
    if dims.0 == 0 || dims.1 == 0 || dims.2 == 0 {
        return Err(invalid(format!("volume dims must be positive, got {dims:?}")));
    }
    let (lo, hi) = params.fraction_band;
    if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
        return Err(invalid(format!("organ fraction band ({lo}, {hi}) is not within [0,1]")));
    }
    (0..count as u64)
        .map(|n| {
            let scan_seed = seed ^ n.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
            generate_one(dims, spacing, scan_seed, params)
        })
        .collect()
}
