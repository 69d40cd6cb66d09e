use crate::error::{invalid, Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Added to numerator and denominator of the Dice distance so empty masks
/// with empty predictions score 1.
pub const DICE_SMOOTH: f64 = 1e-6;

/// Soft Dice between probabilities and a binary mask of the same shape.
pub fn dice_distance<T: Scalar>(probs: &Tensor<T>, mask: &Tensor<T>) -> Result<f64> {
    if probs.shape() != mask.shape() {
        return Err(Error::ShapeMismatch {
            op: "dice_distance",
            left: probs.shape().to_vec(),
            right: mask.shape().to_vec(),
        });
    }
    let (mut inter, mut total) = (0.0f64, 0.0f64);
    for (&p, &m) in probs.data().iter().zip(mask.data()) {
        let (p, m) = (p.to_f64(), m.to_f64());
        inter += p * m;
        total += p + m;
    }
    Ok((2.0 * inter + DICE_SMOOTH) / (total + DICE_SMOOTH))
}

/// Per-class loss weights `r`; the loss divides each class's Dice by its
/// weight.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassWeights {
    r: Vec<f64>,
}

impl ClassWeights {
    pub fn new(r: Vec<f64>) -> Result<Self> {
        if r.is_empty() || r.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
            return Err(invalid(format!("class weights must be positive, got {r:?}")));
        }
        Ok(Self { r })
    }

    /// Weight 1 for every class.
    pub fn uniform(classes: usize) -> Self {
        Self { r: vec![1.0; classes] }
    }

    /// Foreground frequency of each class over the masks of a minibatch.
    /// Classes absent from the batch get weight 1.
    pub fn from_frequencies<T: Scalar>(masks: &[Tensor<T>]) -> Result<Self> {
        let first = masks.first().ok_or_else(|| invalid("no masks to weigh"))?;
        let classes = first.shape()[0];
        let mut fg = vec![0.0; classes];
        let mut pixels = 0.0;
        for m in masks {
            let plane = m.len() / classes;
            pixels += plane as f64;
            for (l, chunk) in m.data().chunks(plane).enumerate() {
                fg[l] += chunk.iter().map(|v| v.to_f64()).sum::<f64>();
            }
        }
        Self::new(fg.into_iter().map(|f| if f > 0.0 { f / pixels } else { 1.0 }).collect())
    }

    pub fn classes(&self) -> usize {
        self.r.len()
    }

    pub fn get(&self, class: usize) -> f64 {
        self.r[class]
    }
}

/// Negative weighted Dice distance averaged over the minibatch. Outputs and
/// masks are `[classes,R,R]`, one pair per context.
pub fn loss<T: Scalar>(outputs: &[Tensor<T>], masks: &[Tensor<T>], weights: &ClassWeights) -> Result<f64> {
    if outputs.is_empty() {
        return Err(invalid("loss over an empty batch"));
    }
    if outputs.len() != masks.len() {
        return Err(invalid(format!(
            "{} outputs but {} masks",
            outputs.len(),
            masks.len()
        )));
    }
    let mut total = 0.0;
    for (out, mask) in outputs.iter().zip(masks) {
        if out.shape() != mask.shape() {
            return Err(Error::ShapeMismatch {
                op: "loss",
                left: out.shape().to_vec(),
                right: mask.shape().to_vec(),
            });
        }
        let classes = out.shape()[0];
        if classes != weights.classes() {
            return Err(invalid(format!(
                "{classes} output classes but {} weights",
                weights.classes()
            )));
        }
        for (l, (p, m)) in out.unstack().iter().zip(mask.unstack()).enumerate() {
            total -= dice_distance(p, &m)? / weights.get(l);
        }
    }
    Ok(total / outputs.len() as f64)
}
