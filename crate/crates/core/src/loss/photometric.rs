use crate::error::{Error, Result};
use crate::tensor::{avg_pool3x3, Shape, Tensor};

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(op, a.shape(), b.shape()));
    }
    Ok(())
}

fn check_disparity(op: &'static str, image: Shape, disparity: Shape) -> Result<()> {
    let expected = Shape::new(image.n, 1, image.h, image.w);
    if disparity != expected {
        return Err(Error::shape(op, format!("disparity {expected}"), disparity));
    }
    Ok(())
}

/// Resamples every row of `image` at `x + sign * disparity(x)` with linear
/// interpolation, clamping sample positions to the row.
///
/// With the left-view disparity, `sign = -1` reconstructs the left view from
/// the right image; with the right-view disparity, `sign = +1` reconstructs
/// the right view from the left image.
pub fn warp_horizontal(image: &Tensor, disparity: &Tensor, sign: f32) -> Result<Tensor> {
    let s = image.shape();
    check_disparity("warp_horizontal", s, disparity.shape())?;
    let last = (s.w - 1) as f64;
    let mut out = Vec::with_capacity(s.numel());
    for n in 0..s.n {
        let d = disparity.plane(n, 0);
        for c in 0..s.c {
            let plane = image.plane(n, c);
            for y in 0..s.h {
                let row = &plane[y * s.w..][..s.w];
                for x in 0..s.w {
                    let pos = (x as f64 + sign as f64 * d[y * s.w + x] as f64).clamp(0.0, last);
                    let x0 = pos.floor() as usize;
                    let x1 = (x0 + 1).min(s.w - 1);
                    let t = pos - x0 as f64;
                    out.push(((1.0 - t) * row[x0] as f64 + t * row[x1] as f64) as f32);
                }
            }
        }
    }
    Ok(Tensor::from_parts_unchecked(s, out))
}

/// Stabilizing constants of the SSIM ratio.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SsimConstants {
    pub c1: f64,
    pub c2: f64,
}

impl Default for SsimConstants {
    fn default() -> Self {
        SsimConstants {
            c1: 0.01 * 0.01,
            c2: 0.03 * 0.03,
        }
    }
}

impl SsimConstants {
    /// SSIM of two constant patches (zero variance everywhere).
    pub fn constant_patch(&self, k1: f64, k2: f64) -> f64 {
        (2.0 * k1 * k2 + self.c1) / (k1 * k1 + k2 * k2 + self.c1)
    }
}

/// Per-pixel SSIM from 3×3 valid-region statistics; dims (n, c, h-2, w-2).
pub fn ssim_map(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    ssim_map_with(a, b, &SsimConstants::default())
}

pub fn ssim_map_with(a: &Tensor, b: &Tensor, k: &SsimConstants) -> Result<Tensor> {
    same_shape("ssim_map", a, b)?;
    let mu_a = avg_pool3x3(a)?;
    let mu_b = avg_pool3x3(b)?;
    let aa = avg_pool3x3(&a.map(|v| v * v))?;
    let bb = avg_pool3x3(&b.map(|v| v * v))?;
    let ab = avg_pool3x3(&a.zip_map(b, |x, y| x * y)?)?;

    let data = mu_a
        .data()
        .iter()
        .zip(mu_b.data())
        .zip(aa.data().iter().zip(bb.data()).zip(ab.data()))
        .map(|((&ma, &mb), ((&saa, &sbb), &sab))| {
            let (ma, mb) = (ma as f64, mb as f64);
            let var_a = saa as f64 - ma * ma;
            let var_b = sbb as f64 - mb * mb;
            let cov = sab as f64 - ma * mb;
            let num = (2.0 * ma * mb + k.c1) * (2.0 * cov + k.c2);
            let den = (ma * ma + mb * mb + k.c1) * (var_a + var_b + k.c2);
            (num / den).clamp(-1.0, 1.0) as f32
        })
        .collect();
    Ok(Tensor::from_parts_unchecked(mu_a.shape(), data))
}

/// Per-pixel share of the appearance loss (channels summed), one value per
/// (n, y, x); the values sum to [`appearance_loss`].
///
/// The SSIM map is edge-replicated back to the full raster so both terms
/// average over the same `n * c * h * w` elements.
pub fn appearance_contributions(orig: &Tensor, warped: &Tensor, ssim_alpha: f64) -> Result<Vec<f64>> {
    appearance_contributions_with(orig, warped, ssim_alpha, &SsimConstants::default())
}

pub fn appearance_contributions_with(
    orig: &Tensor,
    warped: &Tensor,
    ssim_alpha: f64,
    k: &SsimConstants,
) -> Result<Vec<f64>> {
    same_shape("appearance_loss", orig, warped)?;
    let s = orig.shape();
    let ssim = ssim_map_with(orig, warped, k)?;
    let (sh, sw) = (s.h - 2, s.w - 2);
    let norm = 1.0 / s.numel() as f64;
    let mut out = vec![0f64; s.n * s.plane()];
    for n in 0..s.n {
        for c in 0..s.c {
            let (po, pw, ps) = (orig.plane(n, c), warped.plane(n, c), ssim.plane(n, c));
            for y in 0..s.h {
                let sy = y.saturating_sub(1).min(sh - 1);
                for x in 0..s.w {
                    let sx = x.saturating_sub(1).min(sw - 1);
                    let i = y * s.w + x;
                    let dssim = (1.0 - ps[sy * sw + sx] as f64) / 2.0;
                    let l1 = (po[i] as f64 - pw[i] as f64).abs();
                    out[n * s.plane() + i] += norm * (ssim_alpha * dssim + (1.0 - ssim_alpha) * l1);
                }
            }
        }
    }
    Ok(out)
}

/// Weighted mix of `(1 - SSIM) / 2` and absolute difference, averaged.
pub fn appearance_loss(orig: &Tensor, warped: &Tensor, ssim_alpha: f64) -> Result<f64> {
    Ok(appearance_contributions(orig, warped, ssim_alpha)?.iter().sum())
}

/// Per-pixel share of [`smoothness_loss`], one value per (n, y, x).
///
/// Forward differences; the x term averages over `h * (w - 1)` positions and
/// the y term over `(h - 1) * w`, each damped by `exp(-|∇I|)` with the image
/// gradient averaged over channels.
pub fn smoothness_contributions(disparity: &Tensor, image: &Tensor) -> Result<Vec<f64>> {
    let s = image.shape();
    check_disparity("smoothness_loss", s, disparity.shape())?;
    let (h, w) = (s.h, s.w);
    let mut out = vec![0f64; s.n * s.plane()];
    let norm_x = if w > 1 { 1.0 / (s.n * h * (w - 1)) as f64 } else { 0.0 };
    let norm_y = if h > 1 { 1.0 / (s.n * (h - 1) * w) as f64 } else { 0.0 };
    let channels = s.c as f64;
    for n in 0..s.n {
        let d = disparity.plane(n, 0);
        let grad = |i: usize, j: usize| -> f64 {
            (0..s.c)
                .map(|c| {
                    let p = image.plane(n, c);
                    (p[j] as f64 - p[i] as f64).abs()
                })
                .sum::<f64>()
                / channels
        };
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                let mut acc = 0.0;
                if x + 1 < w {
                    acc += norm_x * (d[i + 1] as f64 - d[i] as f64).abs() * (-grad(i, i + 1)).exp();
                }
                if y + 1 < h {
                    acc += norm_y * (d[i + w] as f64 - d[i] as f64).abs() * (-grad(i, i + w)).exp();
                }
                out[n * s.plane() + i] = acc;
            }
        }
    }
    Ok(out)
}

/// Edge-aware first-order disparity smoothness.
pub fn smoothness_loss(disparity: &Tensor, image: &Tensor) -> Result<f64> {
    Ok(smoothness_contributions(disparity, image)?.iter().sum())
}

/// Per-pixel share of [`lr_consistency_loss`].
pub fn lr_consistency_contributions(d_this: &Tensor, d_other: &Tensor) -> Result<Vec<f64>> {
    same_shape("lr_consistency_loss", d_this, d_other)?;
    let s = d_this.shape();
    if s.c != 1 {
        return Err(Error::shape("lr_consistency_loss", "1-channel disparity", s));
    }
    let projected = warp_horizontal(d_other, d_this, 1.0)?;
    let norm = 1.0 / s.numel() as f64;
    Ok(d_this
        .data()
        .iter()
        .zip(projected.data())
        .map(|(&a, &b)| norm * (a as f64 - b as f64).abs())
        .collect())
}

/// Mean of `|d_this(x) - d_other(x + d_this(x))|`.
pub fn lr_consistency_loss(d_this: &Tensor, d_other: &Tensor) -> Result<f64> {
    Ok(lr_consistency_contributions(d_this, d_other)?.iter().sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn columns(h: usize, w: usize) -> Tensor {
        Tensor::from_fn(Shape::new(1, 2, h, w), |_, c, y, x| (x * x) as f32 + 0.5 * c as f32 + 0.01 * y as f32)
    }

    fn constant(h: usize, w: usize, v: f32) -> Tensor {
        Tensor::full(Shape::new(1, 1, h, w), v)
    }

    #[test]
    fn zero_disparity_warp_is_identity() {
        let img = columns(4, 9);
        assert_eq!(warp_horizontal(&img, &constant(4, 9, 0.0), -1.0).unwrap(), img);
    }

    #[test]
    fn integer_and_half_shifts() {
        let img = columns(3, 8);
        let fwd = warp_horizontal(&img, &constant(3, 8, 1.0), 1.0).unwrap();
        let back = warp_horizontal(&img, &constant(3, 8, 1.0), -1.0).unwrap();
        let half = warp_horizontal(&img, &constant(3, 8, 0.5), 1.0).unwrap();
        for c in 0..2 {
            for y in 0..3 {
                for x in 1..7 {
                    assert_eq!(fwd.at(0, c, y, x), img.at(0, c, y, x + 1));
                    assert_eq!(back.at(0, c, y, x), img.at(0, c, y, x - 1));
                    let mean = 0.5 * (img.at(0, c, y, x) + img.at(0, c, y, x + 1));
                    assert!((half.at(0, c, y, x) - mean).abs() < 1e-5);
                }
            }
        }
    }

    #[test]
    fn warp_rejects_mismatched_disparity() {
        assert!(warp_horizontal(&columns(3, 8), &constant(3, 7, 0.0), 1.0).is_err());
    }

    #[test]
    fn ssim_closed_forms() {
        let x = Tensor::from_fn(Shape::new(1, 3, 6, 7), |_, c, y, x| ((c + 2 * y + 3 * x) % 5) as f32 / 4.0);
        assert!(ssim_map(&x, &x).unwrap().data().iter().all(|&v| (v - 1.0).abs() < 1e-6));
        assert!(ssim_map(&x, &x.map(|v| 1.0 - v)).unwrap().data().iter().all(|&v| v < 1.0));
        let (a, b) = (Tensor::full(x.shape(), 0.2), Tensor::full(x.shape(), 0.4));
        let expected = SsimConstants::default().constant_patch(0.2, 0.4);
        assert!(ssim_map(&a, &b).unwrap().data().iter().all(|&v| (v as f64 - expected).abs() < 1e-5));
    }

    #[test]
    fn appearance_closed_forms() {
        let s = Shape::new(1, 3, 5, 6);
        let img = Tensor::from_fn(s, |_, c, y, x| ((c + y * x) % 7) as f32 / 6.0);
        assert!(appearance_loss(&img, &img, 0.85).unwrap().abs() < 1e-6);
        let l1 = appearance_loss(&Tensor::zeros(s), &Tensor::full(s, 0.5), 0.0).unwrap();
        assert!((l1 - 0.5).abs() < 1e-12);
        let dssim = appearance_loss(&Tensor::full(s, 0.2), &Tensor::full(s, 0.4), 1.0).unwrap();
        let expected = (1.0 - SsimConstants::default().constant_patch(0.2, 0.4)) / 2.0;
        assert!((dssim - expected).abs() < 1e-5);
    }

    #[test]
    fn smoothness_cases() {
        let img = Tensor::full(Shape::new(1, 3, 4, 6), 0.5);
        assert_eq!(smoothness_loss(&constant(4, 6, 3.0), &img).unwrap(), 0.0);
        let ramp = Tensor::from_fn(Shape::new(1, 1, 4, 6), |_, _, _, x| x as f32);
        assert!((smoothness_loss(&ramp, &img).unwrap() - 1.0).abs() < 1e-12);
        let stripes = Tensor::from_fn(Shape::new(1, 3, 4, 6), |_, _, _, x| (x % 2) as f32);
        let damped = smoothness_loss(&ramp, &stripes).unwrap();
        assert!((damped - (-1f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn lr_cases() {
        let z = constant(3, 5, 0.0);
        assert_eq!(lr_consistency_loss(&z, &z).unwrap(), 0.0);
        let c = constant(3, 5, 1.5);
        assert!(lr_consistency_loss(&c, &c).unwrap().abs() < 1e-12);
        assert!((lr_consistency_loss(&constant(3, 5, 1.0), &constant(3, 5, 3.0)).unwrap() - 2.0).abs() < 1e-12);
        assert!(lr_consistency_loss(&constant(3, 5, 1.0), &constant(3, 4, 1.0)).is_err());
    }
}
