//! Time-distributed application and the convolutional LSTM blocks.
//!
//! The recurrent cell has no cell-to-gate (peephole) weights:
//!
//! ```text
//! i = hσ(W_xi*x + W_hi*h + b_i)      f = hσ(W_xf*x + W_hf*h + b_f)
//! c' = f∘c + i∘tanh(W_xc*x + W_hc*h + b_c)
//! o = hσ(W_xo*x + W_ho*h + b_o)      h' = o∘tanh(c')
//! ```
//!
//! where `*` is a same-padded 3x3 convolution and `hσ` the hard sigmoid.

use crate::error::{invalid, Error, Result};
use crate::tape::{Tape, Var};
use crate::tensor::{Scalar, Tensor};

/// Gate order used throughout: input, forget, candidate, output.
pub const GATES: [&str; 4] = ["i", "f", "c", "o"];

/// Applies `layer` to every element of `sequence` with shared parameters.
pub fn time_distributed<T, F>(tape: &mut Tape<T>, sequence: &[Var], mut layer: F) -> Result<Vec<Var>>
where
    T: Scalar,
    F: FnMut(&mut Tape<T>, Var) -> Result<Var>,
{
    let first = sequence
        .first()
        .ok_or_else(|| invalid("time_distributed over an empty sequence"))?;
    let shape = tape.value(*first).shape().to_vec();
    for v in &sequence[1..] {
        if tape.value(*v).shape() != shape.as_slice() {
            return Err(Error::ShapeMismatch {
                op: "time_distributed",
                left: shape,
                right: tape.value(*v).shape().to_vec(),
            });
        }
    }
    sequence.iter().map(|&v| layer(tape, v)).collect()
}

/// Parameters of one convolutional LSTM direction.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLstmCell<T> {
    /// `[C_hid, C_in, 3, 3]` per gate.
    pub input_kernels: [Tensor<T>; 4],
    /// `[C_hid, C_hid, 3, 3]` per gate.
    pub recurrent_kernels: [Tensor<T>; 4],
    /// `[C_hid]` per gate.
    pub biases: [Tensor<T>; 4],
}

impl<T: Scalar> ConvLstmCell<T> {
    pub fn zeros(c_in: usize, c_hid: usize) -> Self {
        Self {
            input_kernels: std::array::from_fn(|_| Tensor::zeros(&[c_hid, c_in, 3, 3])),
            recurrent_kernels: std::array::from_fn(|_| Tensor::zeros(&[c_hid, c_hid, 3, 3])),
            biases: std::array::from_fn(|_| Tensor::zeros(&[c_hid])),
        }
    }

    pub fn hidden(&self) -> usize {
        self.biases[0].len()
    }

    /// Records the parameters on `tape` as differentiable leaves.
    pub fn record(&self, tape: &mut Tape<T>) -> CellVars {
        CellVars {
            input_kernels: std::array::from_fn(|g| tape.leaf(self.input_kernels[g].clone())),
            recurrent_kernels: std::array::from_fn(|g| {
                tape.leaf(self.recurrent_kernels[g].clone())
            }),
            biases: std::array::from_fn(|g| tape.leaf(self.biases[g].clone())),
        }
    }
}

/// Per-gate parameter handles on a tape.
#[derive(Debug, Clone, Copy)]
pub struct CellVars {
    pub input_kernels: [Var; 4],
    pub recurrent_kernels: [Var; 4],
    pub biases: [Var; 4],
}

impl CellVars {
    /// Concatenates the four gates along the output-channel axis so each
    /// step needs one input and one recurrent convolution.
    pub fn fuse<T: Scalar>(&self, tape: &mut Tape<T>) -> Result<FusedCell> {
        let cat = |tape: &mut Tape<T>, vs: &[Var; 4]| -> Result<Var> {
            let mut acc = vs[0];
            for &v in &vs[1..] {
                acc = tape.concat_channels(acc, v)?;
            }
            Ok(acc)
        };
        let hidden = tape.value(self.biases[0]).len();
        for g in 0..4 {
            let rk = tape.value(self.recurrent_kernels[g]).shape();
            if rk.len() != 4 || rk[0] != hidden || rk[1] != hidden {
                return Err(invalid(format!(
                    "recurrent kernel must be [{hidden},{hidden},k,k], got {rk:?}"
                )));
            }
        }
        Ok(FusedCell {
            input_kernel: cat(tape, &self.input_kernels)?,
            recurrent_kernel: cat(tape, &self.recurrent_kernels)?,
            bias: cat(tape, &self.biases)?,
            hidden,
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FusedCell {
    pub input_kernel: Var,
    pub recurrent_kernel: Var,
    pub bias: Var,
    pub hidden: usize,
}

/// One recurrence step. `state` is `(h_prev, c_prev)`; `None` means the zero
/// initial state, for which the recurrent convolution and forget term vanish
/// and are skipped.
pub fn clstm_step<T: Scalar>(
    tape: &mut Tape<T>,
    cell: &FusedCell,
    x_t: Var,
    state: Option<(Var, Var)>,
) -> Result<(Var, Var)> {
    let n = cell.hidden;
    let mut pre = tape.conv2d(x_t, cell.input_kernel, Some(cell.bias))?;
    if let Some((h_prev, c_prev)) = state {
        if tape.value(h_prev).shape() != tape.value(c_prev).shape()
            || tape.value(h_prev).shape()[1..] != tape.value(pre).shape()[1..]
        {
            return Err(Error::ShapeMismatch {
                op: "clstm_step state",
                left: tape.value(h_prev).shape().to_vec(),
                right: tape.value(x_t).shape().to_vec(),
            });
        }
        let rec = tape.conv2d(h_prev, cell.recurrent_kernel, None)?;
        pre = tape.add(pre, rec)?;
    }
    let gate = |tape: &mut Tape<T>, g: usize| tape.slice_channels(pre, g * n, n);
    let a_i = gate(tape, 0)?;
    let a_f = gate(tape, 1)?;
    let a_c = gate(tape, 2)?;
    let a_o = gate(tape, 3)?;

    let i = tape.hard_sigmoid(a_i);
    let candidate = tape.tanh(a_c);
    let mut c = tape.mul(i, candidate)?;
    if let Some((_, c_prev)) = state {
        let f = tape.hard_sigmoid(a_f);
        let keep = tape.mul(f, c_prev)?;
        c = tape.add(keep, c)?;
    }
    let o = tape.hard_sigmoid(a_o);
    let squashed = tape.tanh(c);
    let h = tape.mul(o, squashed)?;
    Ok((h, c))
}

/// Runs one direction over `sequence` from a zero state and returns every
/// hidden state in consumption order.
pub fn run_direction<T: Scalar>(
    tape: &mut Tape<T>,
    cell: &FusedCell,
    sequence: impl IntoIterator<Item = Var>,
) -> Result<Vec<Var>> {
    let mut state = None;
    let mut hidden = Vec::new();
    for x in sequence {
        let (h, c) = clstm_step(tape, cell, x, state)?;
        hidden.push(h);
        state = Some((h, c));
    }
    Ok(hidden)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClstmMode {
    /// One output per input element.
    Sequence,
    /// A single output built from the final state of each direction.
    Collapse,
}

/// Bidirectional block: the backward cell consumes the reversed sequence and
/// the two directions are merged by summation. With `backward == None` the
/// block degenerates to a forward-only CLSTM.
pub fn bidirectional_clstm<T: Scalar>(
    tape: &mut Tape<T>,
    forward: &FusedCell,
    backward: Option<&FusedCell>,
    sequence: &[Var],
    mode: ClstmMode,
) -> Result<Vec<Var>> {
    if sequence.is_empty() {
        return Err(invalid("bidirectional CLSTM over an empty sequence"));
    }
    let hf = run_direction(tape, forward, sequence.iter().copied())?;
    let hb = match backward {
        Some(cell) => {
            let mut hb = run_direction(tape, cell, sequence.iter().rev().copied())?;
            match mode {
                ClstmMode::Sequence => {
                    hb.reverse();
                    Some(hb)
                }
                ClstmMode::Collapse => Some(vec![*hb.last().expect("non-empty")]),
            }
        }
        None => None,
    };
    let hf = match mode {
        ClstmMode::Sequence => hf,
        ClstmMode::Collapse => vec![*hf.last().expect("non-empty")],
    };
    match hb {
        None => Ok(hf),
        Some(hb) => hf
            .into_iter()
            .zip(hb)
            .map(|(a, b)| tape.add(a, b))
            .collect(),
    }
}
