//! Raw numeric kernels behind the differentiable operations.
//!
//! Convolutions are cross-correlations with "same" zero padding, lowered to a
//! single GEMM per image through an im2col buffer.

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

fn chw(t: &Tensor<impl Scalar>, op: &str) -> Result<(usize, usize, usize)> {
    match *t.shape() {
        [c, h, w] => Ok((c, h, w)),
        ref s => Err(Error::InvalidArgument(format!(
            "{op} expects a [C,H,W] tensor, got {s:?}"
        ))),
    }
}

pub(crate) fn conv_geometry<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: Option<&Tensor<T>>,
) -> Result<ConvGeometry> {
    let (c_in, h, wd) = chw(x, "conv2d")?;
    let (c_out, k_in, kh, kw) = match *w.shape() {
        [a, b, c, d] => (a, b, c, d),
        _ => {
            return Err(Error::ShapeMismatch {
                op: "conv2d",
                left: x.shape().to_vec(),
                right: w.shape().to_vec(),
            })
        }
    };
    if k_in != c_in {
        return Err(Error::ShapeMismatch {
            op: "conv2d",
            left: x.shape().to_vec(),
            right: w.shape().to_vec(),
        });
    }
    if kh % 2 == 0 || kw % 2 == 0 {
        return Err(Error::InvalidArgument(format!(
            "conv2d kernel extents must be odd, got {kh}x{kw}"
        )));
    }
    if let Some(b) = b {
        if b.shape() != [c_out] {
            return Err(Error::ShapeMismatch {
                op: "conv2d bias",
                left: w.shape().to_vec(),
                right: b.shape().to_vec(),
            });
        }
    }
    Ok(ConvGeometry {
        c_in,
        c_out,
        h,
        w: wd,
        kh,
        kw,
    })
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeometry {
    pub c_in: usize,
    pub c_out: usize,
    pub h: usize,
    pub w: usize,
    pub kh: usize,
    pub kw: usize,
}

impl ConvGeometry {
    fn k(&self) -> usize {
        self.c_in * self.kh * self.kw
    }
    fn n(&self) -> usize {
        self.h * self.w
    }
    fn pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1
    }
}

fn im2col<T: Scalar>(x: &[T], g: &ConvGeometry) -> Vec<T> {
    let (h, w) = (g.h, g.w);
    let (ph, pw) = ((g.kh / 2) as isize, (g.kw / 2) as isize);
    let n = g.n();
    let mut cols = vec![T::ZERO; g.k() * n];
    for ci in 0..g.c_in {
        let plane = &x[ci * n..(ci + 1) * n];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (ci * g.kh + ky) * g.kw + kx;
                let dst = &mut cols[row * n..(row + 1) * n];
                let dy = ky as isize - ph;
                let dx = kx as isize - pw;
                let x_lo = (-dx).max(0) as usize;
                let x_hi = (w as isize - dx).min(w as isize).max(0) as usize;
                if x_lo >= x_hi {
                    continue;
                }
                for y in 0..h {
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src_row = &plane[sy as usize * w..(sy as usize + 1) * w];
                    let s_lo = (x_lo as isize + dx) as usize;
                    let s_hi = (x_hi as isize + dx) as usize;
                    dst[y * w + x_lo..y * w + x_hi].copy_from_slice(&src_row[s_lo..s_hi]);
                }
            }
        }
    }
    cols
}

fn col2im<T: Scalar>(cols: &[T], g: &ConvGeometry) -> Vec<T> {
    let (h, w) = (g.h, g.w);
    let (ph, pw) = ((g.kh / 2) as isize, (g.kw / 2) as isize);
    let n = g.n();
    let mut x = vec![T::ZERO; g.c_in * n];
    for ci in 0..g.c_in {
        let plane = &mut x[ci * n..(ci + 1) * n];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (ci * g.kh + ky) * g.kw + kx;
                let src = &cols[row * n..(row + 1) * n];
                let dy = ky as isize - ph;
                let dx = kx as isize - pw;
                let x_lo = (-dx).max(0) as usize;
                let x_hi = (w as isize - dx).min(w as isize).max(0) as usize;
                if x_lo >= x_hi {
                    continue;
                }
                for y in 0..h {
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let base = sy as usize * w;
                    for xx in x_lo..x_hi {
                        plane[base + (xx as isize + dx) as usize] += src[y * w + xx];
                    }
                }
            }
        }
    }
    x
}

pub(crate) fn conv2d_forward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: Option<&Tensor<T>>,
) -> Result<Tensor<T>> {
    let g = conv_geometry(x, w, b)?;
    let n = g.n();
    let mut out = vec![T::ZERO; g.c_out * n];
    if let Some(b) = b {
        for (co, &bias) in b.data().iter().enumerate() {
            out[co * n..(co + 1) * n].fill(bias);
        }
    }
    let beta = if b.is_some() { T::ONE } else { T::ZERO };
    let owned;
    let cols: &[T] = if g.pointwise() {
        x.data()
    } else {
        owned = im2col(x.data(), &g);
        &owned
    };
    let k = g.k();
    T::gemm(
        g.c_out,
        k,
        n,
        T::ONE,
        w.data(),
        (k as isize, 1),
        cols,
        (n as isize, 1),
        beta,
        &mut out,
        n as isize,
    );
    Tensor::new(&[g.c_out, g.h, g.w], out)
}

pub(crate) struct ConvGrads<T> {
    pub input: Option<Tensor<T>>,
    pub kernel: Option<Tensor<T>>,
    pub bias: Option<Tensor<T>>,
}

pub(crate) fn conv2d_backward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    has_bias: bool,
    dy: &Tensor<T>,
    need: [bool; 3],
) -> Result<ConvGrads<T>> {
    let g = conv_geometry(x, w, None)?;
    let n = g.n();
    let k = g.k();
    let dyd = dy.data();

    let input = if need[0] {
        let mut dcols = vec![T::ZERO; k * n];
        T::gemm(
            k,
            g.c_out,
            n,
            T::ONE,
            w.data(),
            (1, k as isize),
            dyd,
            (n as isize, 1),
            T::ZERO,
            &mut dcols,
            n as isize,
        );
        let dx = if g.pointwise() {
            dcols
        } else {
            col2im(&dcols, &g)
        };
        Some(Tensor::new(x.shape(), dx)?)
    } else {
        None
    };

    let kernel = if need[1] {
        let owned;
        let cols: &[T] = if g.pointwise() {
            x.data()
        } else {
            owned = im2col(x.data(), &g);
            &owned
        };
        let mut dw = vec![T::ZERO; g.c_out * k];
        T::gemm(
            g.c_out,
            n,
            k,
            T::ONE,
            dyd,
            (n as isize, 1),
            cols,
            (1, n as isize),
            T::ZERO,
            &mut dw,
            k as isize,
        );
        Some(Tensor::new(w.shape(), dw)?)
    } else {
        None
    };

    let bias = if has_bias && need[2] {
        let db = (0..g.c_out)
            .map(|co| dyd[co * n..(co + 1) * n].iter().copied().sum())
            .collect();
        Some(Tensor::new(&[g.c_out], db)?)
    } else {
        None
    };

    Ok(ConvGrads {
        input,
        kernel,
        bias,
    })
}

/// 2x2 max pooling with stride 2. Returns the pooled tensor and, for every
/// output element, the flat input index of the selected maximum. Ties go to
/// the first maximal element in row-major block order.
pub(crate) fn maxpool2x2_forward<T: Scalar>(x: &Tensor<T>) -> Result<(Tensor<T>, Vec<u32>)> {
    let (c, h, w) = chw(x, "maxpool2x2")?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::InvalidArgument(format!(
            "maxpool2x2 needs even spatial extents, got {h}x{w}"
        )));
    }
    let (oh, ow) = (h / 2, w / 2);
    let xd = x.data();
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut arg = Vec::with_capacity(c * oh * ow);
    for ci in 0..c {
        let base = ci * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let r0 = base + 2 * oy * w + 2 * ox;
                let mut best = r0;
                for idx in [r0 + 1, r0 + w, r0 + w + 1] {
                    if xd[idx] > xd[best] {
                        best = idx;
                    }
                }
                out.push(xd[best]);
                arg.push(best as u32);
            }
        }
    }
    Ok((Tensor::new(&[c, oh, ow], out)?, arg))
}

pub(crate) fn maxpool2x2_backward<T: Scalar>(
    input_shape: &[usize],
    argmax: &[u32],
    dy: &Tensor<T>,
) -> Result<Tensor<T>> {
    let mut dx = Tensor::zeros(input_shape);
    let dxd = dx.data_mut();
    for (&idx, &g) in argmax.iter().zip(dy.data()) {
        dxd[idx as usize] += g;
    }
    Ok(dx)
}

/// Nearest-neighbour 2x upsampling.
pub(crate) fn upsample2x2_forward<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let (c, h, w) = chw(x, "upsample2x2")?;
    let (oh, ow) = (2 * h, 2 * w);
    let xd = x.data();
    let mut out = vec![T::ZERO; c * oh * ow];
    for ci in 0..c {
        for y in 0..h {
            let src = &xd[(ci * h + y) * w..(ci * h + y + 1) * w];
            let dst0 = (ci * oh + 2 * y) * ow;
            for (xx, &v) in src.iter().enumerate() {
                out[dst0 + 2 * xx] = v;
                out[dst0 + 2 * xx + 1] = v;
            }
            out.copy_within(dst0..dst0 + ow, dst0 + ow);
        }
    }
    Tensor::new(&[c, oh, ow], out)
}

pub(crate) fn upsample2x2_backward<T: Scalar>(dy: &Tensor<T>) -> Result<Tensor<T>> {
    let (c, oh, ow) = chw(dy, "upsample2x2 backward")?;
    let (h, w) = (oh / 2, ow / 2);
    let d = dy.data();
    let mut dx = vec![T::ZERO; c * h * w];
    for ci in 0..c {
        for y in 0..h {
            for xx in 0..w {
                let r0 = (ci * oh + 2 * y) * ow + 2 * xx;
                dx[(ci * h + y) * w + xx] = d[r0] + d[r0 + 1] + d[r0 + ow] + d[r0 + ow + 1];
            }
        }
    }
    Tensor::new(&[c, h, w], dx)
}

/// Concatenates two tensors along axis 0. Trailing extents must agree.
pub(crate) fn concat0<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    if a.shape().len() != b.shape().len() || a.shape()[1..] != b.shape()[1..] {
        return Err(Error::ShapeMismatch {
            op: "concat_channels",
            left: a.shape().to_vec(),
            right: b.shape().to_vec(),
        });
    }
    let mut shape = a.shape().to_vec();
    shape[0] += b.shape()[0];
    let mut data = Vec::with_capacity(a.len() + b.len());
    data.extend_from_slice(a.data());
    data.extend_from_slice(b.data());
    Tensor::new(&shape, data)
}

/// Selects `len` entries of axis 0 starting at `start`.
pub(crate) fn slice0<T: Scalar>(x: &Tensor<T>, start: usize, len: usize) -> Result<Tensor<T>> {
    let (lead, stride) = x.leading();
    if x.shape().is_empty() || start + len > lead {
        return Err(Error::InvalidArgument(format!(
            "slice [{start}, {}) out of range for shape {:?}",
            start + len,
            x.shape()
        )));
    }
    let mut shape = x.shape().to_vec();
    shape[0] = len;
    Tensor::new(&shape, x.data()[start * stride..(start + len) * stride].to_vec())
}
