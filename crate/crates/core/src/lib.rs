//! Sequential segmentation of volumetric scans.
//!
//! A volume is treated as a sequence of 2D slices. For each slice to segment,
//! a short odd-length slab of neighbouring slices (a spatial context) is fed
//! through a U-Net whose convolution, pooling, upsampling and concatenation
//! layers are applied to every slab element with shared weights. Bidirectional
//! convolutional LSTMs at the bottleneck and before the output head tie the
//! slab elements together and collapse the sequence to one probability map
//! for the centre slice.
//!
//! Everything numeric is implemented here: tensors and a reverse-mode tape,
//! the layers, training with a Dice loss and Adam, the data pipeline and the
//! evaluation metrics.

pub mod data;
pub mod error;
pub mod evaluation;
pub mod gradcheck;
mod kernels;
pub mod layers;
pub mod network;
pub mod tape;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use tape::{Gradients, Tape, Var};
pub use tensor::{DType, Scalar, Tensor};
