//! Unsupervised stereo training objective and the tools used to check it.
//!
//! At every pyramid scale the loss combines, for both views, an appearance
//! term (SSIM + L1 between an image and its reconstruction from the other
//! view), an edge-aware disparity smoothness term and a left-right
//! consistency term. Disparities are in pixels of their own scale.

mod augment;
mod gradcheck;
mod optimize;
mod photometric;

pub use augment::{augment, augment_with, AugmentParams};
pub use gradcheck::{fd_gradient, fd_gradient_local};
pub use optimize::{optimize_disparity, optimize_disparity_with, DisparityObjective, OptimizeTrace};
pub use photometric::{
    appearance_contributions, appearance_contributions_with, appearance_loss, lr_consistency_contributions,
    lr_consistency_loss, smoothness_contributions, smoothness_loss, ssim_map, ssim_map_with, warp_horizontal,
    SsimConstants,
};

use crate::error::{Error, Result};
use crate::net::DisparityPyramid;
use crate::tensor::{bilinear_resize, Tensor};

/// A rectified stereo pair; disparity is assumed purely horizontal.
#[derive(Clone, Debug, PartialEq)]
pub struct StereoPair {
    pub left: Tensor,
    pub right: Tensor,
}

impl StereoPair {
    pub fn new(left: Tensor, right: Tensor) -> Result<Self> {
        if left.shape() != right.shape() {
            return Err(Error::shape("StereoPair", left.shape(), right.shape()));
        }
        Ok(StereoPair { left, right })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub alpha_ap: f64,
    pub alpha_lr: f64,
    /// Smoothness weight at full resolution; scale `s` uses `alpha_ds_base / 2^s`.
    pub alpha_ds_base: f64,
    pub ssim_alpha: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            alpha_ap: 1.0,
            alpha_lr: 1.0,
            alpha_ds_base: 0.1,
            ssim_alpha: 0.85,
        }
    }
}

impl LossWeights {
    pub fn smoothness_weight(&self, level: usize) -> f64 {
        self.alpha_ds_base / (1u64 << level) as f64
    }
}

/// All six terms at one pyramid scale.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScaleLoss {
    pub level: usize,
    pub ap_left: f64,
    pub ap_right: f64,
    pub ds_left: f64,
    pub ds_right: f64,
    pub lr_left: f64,
    pub lr_right: f64,
}

impl ScaleLoss {
    pub fn weighted(&self, w: &LossWeights) -> f64 {
        w.alpha_ap * (self.ap_left + self.ap_right)
            + w.smoothness_weight(self.level) * (self.ds_left + self.ds_right)
            + w.alpha_lr * (self.lr_left + self.lr_right)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossBreakdown {
    pub scales: Vec<ScaleLoss>,
    pub weights: LossWeights,
    pub total: f64,
}

impl LossBreakdown {
    pub fn recompute_total(&self) -> f64 {
        self.scales.iter().map(|s| s.weighted(&self.weights)).sum()
    }
}

/// Sum over scales of the weighted appearance, smoothness and left-right
/// terms for both views. The pair is bilinearly downsampled to each scale.
pub fn total_loss(
    left: &DisparityPyramid,
    right: &DisparityPyramid,
    pair: &StereoPair,
    w: &LossWeights,
) -> Result<LossBreakdown> {
    if left.first_level() != right.first_level() || left.last_level() != right.last_level() {
        return Err(Error::shape(
            "total_loss",
            format!("levels {}..={}", left.first_level(), left.last_level()),
            format!("levels {}..={}", right.first_level(), right.last_level()),
        ));
    }
    let full = pair.left.shape();
    let mut scales = Vec::new();
    for level in left.levels() {
        let dl = left.scaled(level).expect("level in range");
        let dr = right.scaled(level).expect("level in range");
        let (h, w_) = (full.h >> level, full.w >> level);
        if dl.shape().h != h || dl.shape().w != w_ {
            return Err(Error::shape(
                "total_loss",
                format!("level {level} disparity of {h}x{w_}"),
                dl.shape(),
            ));
        }
        let il = bilinear_resize(&pair.left, h, w_)?;
        let ir = bilinear_resize(&pair.right, h, w_)?;
        let left_from_right = warp_horizontal(&ir, dl, -1.0)?;
        let right_from_left = warp_horizontal(&il, dr, 1.0)?;
        scales.push(ScaleLoss {
            level,
            ap_left: appearance_loss(&il, &left_from_right, w.ssim_alpha)?,
            ap_right: appearance_loss(&ir, &right_from_left, w.ssim_alpha)?,
            ds_left: smoothness_loss(dl, &il)?,
            ds_right: smoothness_loss(dr, &ir)?,
            lr_left: lr_consistency_loss(dl, dr)?,
            lr_right: lr_consistency_loss(dr, dl)?,
        });
    }
    let total = scales.iter().map(|s| s.weighted(w)).sum();
    Ok(LossBreakdown {
        scales,
        weights: *w,
        total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;

    fn textured(h: usize, w: usize, shift: f32) -> Tensor {
        Tensor::from_fn(Shape::new(1, 3, h, w), |_, c, y, x| {
            let u = x as f32 + shift;
            0.5 + 0.2 * (0.45 * u + c as f32).sin() + 0.15 * (0.3 * y as f32 + 0.2 * u).cos()
        })
    }

    fn constant_pyramid(first: usize, last: usize, h: usize, w: usize, value: impl Fn(usize) -> f32) -> DisparityPyramid {
        let maps = (first..=last)
            .map(|l| Tensor::full(Shape::new(1, 1, h >> l, w >> l), value(l)))
            .collect();
        DisparityPyramid::from_scaled(first, maps).unwrap()
    }

    #[test]
    fn smoothness_weight_halves() {
        let w = LossWeights::default();
        for s in 1..6 {
            assert_eq!(w.smoothness_weight(s + 1) / w.smoothness_weight(s), 0.5);
        }
        assert_eq!(w.smoothness_weight(1), 0.05);
    }

    #[test]
    fn zero_everything() {
        let img = textured(32, 48, 0.0);
        let pair = StereoPair::new(img.clone(), img).unwrap();
        let zero = constant_pyramid(1, 3, 32, 48, |_| 0.0);
        let b = total_loss(&zero, &zero, &pair, &LossWeights::default()).unwrap();
        assert_eq!(b.scales.len(), 3);
        assert!(b.total.abs() < 1e-6, "{b:?}");
        assert!((b.recompute_total() - b.total).abs() < 1e-6);
    }

    #[test]
    fn shifted_pair_prefers_true_disparity() {
        // right(x) = left(x + 2): true left and right disparities are 2 px.
        let pair = StereoPair::new(textured(32, 64, 0.0), textured(32, 64, 2.0)).unwrap();
        let w = LossWeights::default();
        let truth = total_loss(
            &constant_pyramid(1, 1, 32, 64, |_| 1.0),
            &constant_pyramid(1, 1, 32, 64, |_| 1.0),
            &pair,
            &w,
        )
        .unwrap();
        let wrong = total_loss(
            &constant_pyramid(1, 1, 32, 64, |_| 0.0),
            &constant_pyramid(1, 1, 32, 64, |_| 0.0),
            &pair,
            &w,
        )
        .unwrap();
        assert!(truth.total < 0.25 * wrong.total, "{} vs {}", truth.total, wrong.total);
    }

    #[test]
    fn level_mismatch() {
        let img = textured(32, 48, 0.0);
        let pair = StereoPair::new(img.clone(), img).unwrap();
        let a = constant_pyramid(1, 3, 32, 48, |_| 0.0);
        let b = constant_pyramid(1, 2, 32, 48, |_| 0.0);
        assert!(matches!(total_loss(&a, &b, &pair, &LossWeights::default()), Err(Error::Shape { .. })));
    }
}
