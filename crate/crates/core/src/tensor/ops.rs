use super::{Shape, Tensor};
use crate::error::{Error, Result};

/// Stacks `b` after `a` along the channel axis.
pub fn concat_channels(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (sa, sb) = (a.shape(), b.shape());
    if sa.n != sb.n || sa.h != sb.h || sa.w != sb.w {
        return Err(Error::shape("concat_channels", sa, sb));
    }
    let out = Shape::new(sa.n, sa.c + sb.c, sa.h, sa.w);
    let mut data = Vec::with_capacity(out.numel());
    for n in 0..sa.n {
        let ra = sa.index(n, 0, 0, 0);
        let rb = sb.index(n, 0, 0, 0);
        data.extend_from_slice(&a.data()[ra..ra + sa.c * sa.plane()]);
        data.extend_from_slice(&b.data()[rb..rb + sb.c * sb.plane()]);
    }
    Ok(Tensor::from_parts_unchecked(out, data))
}

/// 3×3 mean pooling over the valid region, stride 1.
pub fn avg_pool3x3(input: &Tensor) -> Result<Tensor> {
    let s = input.shape();
    if s.h < 3 || s.w < 3 {
        return Err(Error::arg(format!("avg_pool3x3 needs at least 3x3 planes, got {s}")));
    }
    let out = Shape::new(s.n, s.c, s.h - 2, s.w - 2);
    let mut data = Vec::with_capacity(out.numel());
    for n in 0..s.n {
        for c in 0..s.c {
            let plane = input.plane(n, c);
            for y in 0..out.h {
                for x in 0..out.w {
                    let mut acc = 0f64;
                    for dy in 0..3 {
                        let row = &plane[(y + dy) * s.w + x..][..3];
                        acc += row.iter().map(|&v| v as f64).sum::<f64>();
                    }
                    data.push((acc / 9.0) as f32);
                }
            }
        }
    }
    Ok(Tensor::from_parts_unchecked(out, data))
}
