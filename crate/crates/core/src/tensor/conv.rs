use rayon::prelude::*;

use super::{Shape, Tensor};
use crate::error::{Error, Result};

/// Pointwise non-linearity applied after a convolution.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Activation {
    None,
    LeakyRelu(f32),
    Sigmoid,
}

// Largest f32 strictly below one.
const SIGMOID_CEIL: f32 = 1.0 - f32::EPSILON / 2.0;

impl Activation {
    #[inline]
    pub fn apply(self, v: f32) -> f32 {
        match self {
            Activation::None => v,
            Activation::LeakyRelu(slope) => {
                if v >= 0.0 {
                    v
                } else {
                    slope * v
                }
            }
            // Saturation is clamped so the result stays inside the open interval.
            Activation::Sigmoid => {
                let s = 1.0 / (1.0 + (-(v as f64)).exp());
                (s as f32).clamp(f32::MIN_POSITIVE, SIGMOID_CEIL)
            }
        }
    }

    pub fn apply_tensor(self, t: &Tensor) -> Tensor {
        match self {
            Activation::None => t.clone(),
            act => t.map(|v| act.apply(v)),
        }
    }
}

/// Kernel of shape (out, in, kh, kw) plus one bias per output channel.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvWeights {
    kernel: Tensor,
    bias: Vec<f32>,
}

impl ConvWeights {
    pub fn new(kernel: Tensor, bias: Vec<f32>) -> Result<Self> {
        let k = kernel.shape();
        if bias.len() != k.n {
            return Err(Error::shape(
                "ConvWeights::new",
                format!("bias of length {}", k.n),
                format!("bias of length {}", bias.len()),
            ));
        }
        Ok(ConvWeights { kernel, bias })
    }

    pub fn kernel(&self) -> &Tensor {
        &self.kernel
    }

    pub fn bias(&self) -> &[f32] {
        &self.bias
    }

    pub fn out_channels(&self) -> usize {
        self.kernel.shape().n
    }

    pub fn in_channels(&self) -> usize {
        self.kernel.shape().c
    }

    /// (kh, kw)
    pub fn kernel_size(&self) -> (usize, usize) {
        let s = self.kernel.shape();
        (s.h, s.w)
    }

    pub fn num_parameters(&self) -> usize {
        self.kernel.shape().numel() + self.bias.len()
    }
}

/// Target number of f64 values in one im2col tile (~512 KiB).
const TILE_ELEMS: usize = 1 << 16;

/// Zero-padded ("same") convolution with a square odd kernel.
///
/// Output spatial size is `ceil(h / stride)`. Every output element is
/// accumulated in f64 over (in_channel, ky, kx) and rounded once.
pub fn conv2d(input: &Tensor, w: &ConvWeights, stride: usize, act: Activation) -> Result<Tensor> {
    let s = input.shape();
    let ks = w.kernel.shape();
    if ks.c != s.c {
        return Err(Error::shape(
            "conv2d",
            format!("input with {} channels for kernel {ks}", ks.c),
            format!("input {s}"),
        ));
    }
    if stride != 1 && stride != 2 {
        return Err(Error::arg(format!("conv2d stride must be 1 or 2, got {stride}")));
    }
    if ks.h != ks.w || ks.h.is_multiple_of(2) {
        return Err(Error::arg(format!("conv2d expects a square odd kernel, got {ks}")));
    }

    let pad = ks.h / 2;
    let (kh, kw) = (ks.h, ks.w);
    let out_h = s.h.div_ceil(stride);
    let out_w = s.w.div_ceil(stride);
    let out_c = ks.n;
    let pixels = out_h * out_w;
    let depth = s.c * kh * kw;
    let out_shape = Shape::new(s.n, out_c, out_h, out_w);

    // (out, in, ky, kx) is already a row-major out × depth matrix.
    let weights: Vec<f64> = w.kernel.data().iter().map(|&v| v as f64).collect();
    let tile = (TILE_ELEMS / depth).clamp(16, pixels.max(16));

    let mut out = vec![0f32; out_shape.numel()];
    for n in 0..s.n {
        let tiles: Vec<(usize, Vec<f32>)> = (0..pixels)
            .step_by(tile)
            .collect::<Vec<_>>()
            .into_par_iter()
            .map(|p0| {
                let cols = tile.min(pixels - p0);
                let patches = im2col(input, n, p0, cols, out_w, stride, pad, kh, kw);
                let mut acc = vec![0f64; out_c * cols];
                // SAFETY: slices sized m×k, k×n, m×n with matching row strides.
                unsafe {
                    matrixmultiply::dgemm(
                        out_c,
                        depth,
                        cols,
                        1.0,
                        weights.as_ptr(),
                        depth as isize,
                        1,
                        patches.as_ptr(),
                        cols as isize,
                        1,
                        0.0,
                        acc.as_mut_ptr(),
                        cols as isize,
                        1,
                    );
                }
                let mut vals = Vec::with_capacity(out_c * cols);
                for co in 0..out_c {
                    let b = w.bias[co] as f64;
                    vals.extend(acc[co * cols..(co + 1) * cols].iter().map(|&a| act.apply((a + b) as f32)));
                }
                (p0, vals)
            })
            .collect();

        for (p0, vals) in tiles {
            let cols = vals.len() / out_c;
            for co in 0..out_c {
                let dst = out_shape.index(n, co, 0, 0) + p0;
                out[dst..dst + cols].copy_from_slice(&vals[co * cols..(co + 1) * cols]);
            }
        }
    }
    Ok(Tensor::from_parts_unchecked(out_shape, out))
}

/// Unfolds receptive fields of output pixels `[p0, p0 + cols)` into a
/// depth × cols matrix.
#[allow(clippy::too_many_arguments)]
fn im2col(
    input: &Tensor,
    n: usize,
    p0: usize,
    cols: usize,
    out_w: usize,
    stride: usize,
    pad: usize,
    kh: usize,
    kw: usize,
) -> Vec<f64> {
    let s = input.shape();
    let (h, w) = (s.h as isize, s.w as isize);
    let origin: Vec<(isize, isize)> = (p0..p0 + cols)
        .map(|p| {
            let (oy, ox) = (p / out_w, p % out_w);
            ((oy * stride) as isize - pad as isize, (ox * stride) as isize - pad as isize)
        })
        .collect();

    let mut patches = vec![0f64; s.c * kh * kw * cols];
    let mut row = 0;
    for c in 0..s.c {
        let plane = input.plane(n, c);
        for ky in 0..kh as isize {
            for kx in 0..kw as isize {
                let dst = &mut patches[row * cols..(row + 1) * cols];
                for (slot, &(y0, x0)) in dst.iter_mut().zip(&origin) {
                    let (iy, ix) = (y0 + ky, x0 + kx);
                    if iy >= 0 && iy < h && ix >= 0 && ix < w {
                        *slot = plane[(iy * w + ix) as usize] as f64;
                    }
                }
                row += 1;
            }
        }
    }
    patches
}

/// Transposed 2×2 convolution with stride 2: every input element scatters
/// its own non-overlapping 2×2 output block. No activation is applied.
pub fn deconv2x2(input: &Tensor, w: &ConvWeights) -> Result<Tensor> {
    let s = input.shape();
    let ks = w.kernel.shape();
    if ks.h != 2 || ks.w != 2 {
        return Err(Error::arg(format!("deconv2x2 expects a 2x2 kernel, got {ks}")));
    }
    if ks.c != s.c {
        return Err(Error::shape(
            "deconv2x2",
            format!("input with {} channels for kernel {ks}", ks.c),
            format!("input {s}"),
        ));
    }

    let out_shape = Shape::new(s.n, ks.n, 2 * s.h, 2 * s.w);
    let out_w = out_shape.w;
    let kernel = w.kernel.data();
    let mut out = vec![0f32; out_shape.numel()];
    let mut acc = vec![0f64; s.plane()];
    for n in 0..s.n {
        for co in 0..ks.n {
            let bias = w.bias[co] as f64;
            let base = out_shape.index(n, co, 0, 0);
            for dy in 0..2 {
                for dx in 0..2 {
                    acc.fill(bias);
                    for ci in 0..s.c {
                        let k = kernel[((co * ks.c + ci) * 2 + dy) * 2 + dx] as f64;
                        for (a, &v) in acc.iter_mut().zip(input.plane(n, ci)) {
                            *a += k * v as f64;
                        }
                    }
                    for y in 0..s.h {
                        let row = base + (2 * y + dy) * out_w + dx;
                        for x in 0..s.w {
                            out[row + 2 * x] = acc[y * s.w + x] as f32;
                        }
                    }
                }
            }
        }
    }
    Ok(Tensor::from_parts_unchecked(out_shape, out))
}
