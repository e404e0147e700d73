use super::{Shape, Tensor};
use crate::error::{Error, Result};

/// Source taps and weights along one axis: sample coordinate
/// `(i + 0.5) * in / out - 0.5`, clamped to the valid range.
fn axis_taps(len_in: usize, len_out: usize) -> Vec<(usize, usize, f64)> {
    let scale = len_in as f64 / len_out as f64;
    let last = (len_in - 1) as f64;
    (0..len_out)
        .map(|i| {
            let pos = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, last);
            let i0 = pos.floor() as usize;
            let i1 = (i0 + 1).min(len_in - 1);
            (i0, i1, pos - i0 as f64)
        })
        .collect()
}

/// Bilinear resampling with half-pixel centers and edge clamping.
pub fn bilinear_resize(input: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::arg(format!("resize target must be positive, got {out_h}x{out_w}")));
    }
    let s = input.shape();
    if s.h == out_h && s.w == out_w {
        return Ok(input.clone());
    }
    let ys = axis_taps(s.h, out_h);
    let xs = axis_taps(s.w, out_w);
    let out = Shape::new(s.n, s.c, out_h, out_w);
    let mut data = Vec::with_capacity(out.numel());
    for n in 0..s.n {
        for c in 0..s.c {
            let plane = input.plane(n, c);
            for &(y0, y1, ty) in &ys {
                let (r0, r1) = (&plane[y0 * s.w..][..s.w], &plane[y1 * s.w..][..s.w]);
                for &(x0, x1, tx) in &xs {
                    let top = (1.0 - tx) * r0[x0] as f64 + tx * r0[x1] as f64;
                    let bot = (1.0 - tx) * r1[x0] as f64 + tx * r1[x1] as f64;
                    data.push(((1.0 - ty) * top + ty * bot) as f32);
                }
            }
        }
    }
    Ok(Tensor::from_parts_unchecked(out, data))
}
