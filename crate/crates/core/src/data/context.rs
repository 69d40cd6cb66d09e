use std::ops::Range;

use crate::error::{invalid, Result};

use super::volume::MaskVolume;

/// An ordered slab of `o` slice indices around a centre slice.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialContext {
    pub scan_id: String,
    pub center: usize,
    pub members: Vec<usize>,
    /// Requested physical neighbour distance in millimetres.
    pub step_mm: f64,
}

impl SpatialContext {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Position of the centre slice within `members`.
    pub fn center_position(&self) -> usize {
        self.members.len() / 2
    }
}

/// How slab members beyond the volume are handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContextMode {
    /// Contexts reaching outside the volume are dropped.
    Training,
    /// Out-of-range members are clamped to the first or last slice.
    Inference,
}

/// Slice step for neighbours at physical distance `d_mm`: the nearest slice
/// at or beyond `d_mm`, never less than one.
pub fn step_in_slices(d_mm: f64, thickness: f64) -> usize {
    let ratio = d_mm / thickness;
    ((ratio - 1e-9).ceil() as usize).max(1)
}

/// Slices carrying at least one foreground voxel, first to last.
pub fn organ_slice_range(mask: &MaskVolume) -> Range<usize> {
    let depth = mask.dims().0;
    let has = |k: usize| mask.slice(k).iter().any(|&v| v != 0);
    match (0..depth).find(|&k| has(k)) {
        None => 0..0,
        Some(first) => {
            let last = (0..depth).rev().find(|&k| has(k)).expect("first exists");
            first..last + 1
        }
    }
}

/// Builds one context per centre slice in `centers`.
///
/// Members sit `s` slices apart, with `s` from [`step_in_slices`].
pub fn extract_contexts(
    scan_id: &str,
    depth: usize,
    thickness: f64,
    centers: Range<usize>,
    o: usize,
    d_mm: f64,
    mode: ContextMode,
) -> Result<Vec<SpatialContext>> {
    if o == 0 || o % 2 == 0 {
        return Err(invalid(format!("context size must be odd, got {o}")));
    }
    if !(d_mm > 0.0) || !d_mm.is_finite() {
        return Err(invalid(format!("neighbour distance must be positive, got {d_mm}")));
    }
    if !(thickness > 0.0) || !thickness.is_finite() {
        return Err(invalid(format!("slice thickness must be positive, got {thickness}")));
    }
    if centers.end > depth {
        return Err(invalid(format!(
            "centre range {centers:?} exceeds volume depth {depth}"
        )));
    }
    let s = step_in_slices(d_mm, thickness) as i64;
    let half = ((o - 1) / 2) as i64;
    let mut out = Vec::with_capacity(centers.len());
    for k in centers {
        let raw: Vec<i64> = (-half..=half).map(|j| k as i64 + j * s).collect();
        let inside = raw.iter().all(|&m| m >= 0 && m < depth as i64);
        let members = match mode {
            ContextMode::Training if !inside => continue,
            ContextMode::Training => raw.iter().map(|&m| m as usize).collect(),
            ContextMode::Inference => raw
                .iter()
                .map(|&m| m.clamp(0, depth as i64 - 1) as usize)
                .collect(),
        };
        out.push(SpatialContext {
            scan_id: scan_id.to_string(),
            center: k,
            members,
            step_mm: d_mm,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::volume::Spacing;

    fn members(th: f64, d: f64, o: usize, k: usize, depth: usize) -> Vec<usize> {
        extract_contexts("s", depth, th, k..k + 1, o, d, ContextMode::Training)
            .unwrap()
            .pop()
            .unwrap()
            .members
    }

    #[test]
    fn unit_step() {
        assert_eq!(members(1.0, 1.0, 3, 10, 30), vec![9, 10, 11]);
    }

    #[test]
    fn rounds_to_the_more_distant_slice() {
        assert_eq!(step_in_slices(5.0, 2.0), 3);
        assert_eq!(members(2.0, 5.0, 3, 10, 30), vec![7, 10, 13]);
    }

    #[test]
    fn thick_slices_give_consecutive_members() {
        assert_eq!(step_in_slices(3.0, 4.0), 1);
        assert_eq!(members(4.0, 3.0, 5, 10, 30), vec![8, 9, 10, 11, 12]);
    }

    #[test]
    fn exact_multiples_are_not_rounded_up() {
        assert_eq!(step_in_slices(4.5, 1.5), 3);
        assert_eq!(step_in_slices(0.3, 0.1), 3);
    }

    #[test]
    fn training_drops_and_inference_clamps() {
        let tr = extract_contexts("s", 10, 1.0, 0..10, 3, 2.0, ContextMode::Training).unwrap();
        assert_eq!(tr.iter().map(|c| c.center).collect::<Vec<_>>(), (2..8).collect::<Vec<_>>());
        let inf = extract_contexts("s", 10, 1.0, 0..10, 3, 2.0, ContextMode::Inference).unwrap();
        assert_eq!(inf.len(), 10);
        assert_eq!(inf[0].members, vec![0, 0, 2]);
        assert_eq!(inf[9].members, vec![7, 9, 9]);
    }

    #[test]
    fn empty_range_gives_no_contexts() {
        assert!(extract_contexts("s", 10, 1.0, 4..4, 3, 1.0, ContextMode::Training)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn even_context_rejected() {
        assert!(extract_contexts("s", 10, 1.0, 0..10, 4, 1.0, ContextMode::Training).is_err());
        assert!(extract_contexts("s", 10, 1.0, 0..10, 3, 0.0, ContextMode::Training).is_err());
    }

    #[test]
    fn organ_range_spans_first_to_last_positive_slice() {
        let mut data = vec![0u8; 6 * 4];
        data[2 * 4 + 1] = 1;
        data[4 * 4 + 3] = 1;
        let m = MaskVolume::new((6, 2, 2), Spacing::new(1.0, 1.0, 1.0).unwrap(), data).unwrap();
        assert_eq!(organ_slice_range(&m), 2..5);
        let empty = MaskVolume::new((3, 2, 2), Spacing::new(1.0, 1.0, 1.0).unwrap(), vec![0; 12]).unwrap();
        assert_eq!(organ_slice_range(&empty), 0..0);
    }
}
