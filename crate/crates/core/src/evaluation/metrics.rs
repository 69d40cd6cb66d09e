use crate::error::{invalid, Result};

/// Distance from 1 below which a probability marks foreground.
pub const FOREGROUND_EPSILON: f64 = 0.25;

/// Foreground set of a probability map: `|p - 1| < epsilon`.
pub fn threshold_prediction(probs: &[f32], epsilon: f64) -> Vec<u8> {
    probs
        .iter()
        .map(|&p| ((1.0 - p as f64).abs() < epsilon) as u8)
        .collect()
}

/// Volume overlap error implied by a Dice coefficient.
pub fn voe_from_dice(d: f64) -> f64 {
    2.0 * (1.0 - d) / (2.0 - d)
}

/// Dice coefficient and volume overlap error of two binary sets on the same
/// grid. Two empty sets agree perfectly.
pub fn dice_and_voe(pred: &[u8], truth: &[u8]) -> Result<(f64, f64)> {
    if pred.len() != truth.len() {
        return Err(invalid(format!(
            "prediction has {} voxels, ground truth {}",
            pred.len(),
            truth.len()
        )));
    }
    let (mut inter, mut total) = (0u64, 0u64);
    for (&p, &t) in pred.iter().zip(truth) {
        let (p, t) = ((p != 0) as u64, (t != 0) as u64);
        inter += p & t;
        total += p + t;
    }
    if total == 0 {
        return Ok((1.0, 0.0));
    }
    let d = 2.0 * inter as f64 / total as f64;
    Ok((d, voe_from_dice(d)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_is_strict() {
        assert_eq!(threshold_prediction(&[0.9, 0.75, 0.5, 1.0, 0.7500001], 0.25), vec![1, 0, 0, 1, 1]);
    }

    #[test]
    fn extreme_overlaps() {
        assert_eq!(dice_and_voe(&[1, 1, 0], &[1, 1, 0]).unwrap(), (1.0, 0.0));
        assert_eq!(dice_and_voe(&[1, 0, 0], &[0, 1, 0]).unwrap(), (0.0, 1.0));
        assert_eq!(dice_and_voe(&[0, 0], &[0, 0]).unwrap(), (1.0, 0.0));
        assert!(dice_and_voe(&[0], &[0, 0]).is_err());
    }

    #[test]
    fn voe_of_printed_dice() {
        assert!((voe_from_dice(0.943) - 0.1078524).abs() < 1e-6);
    }
}
