//! Depth evaluation: disparity-to-depth conversion, the standard error and
//! threshold-accuracy statistics, and the fractional evaluation crop.

use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CameraModel {
    pub focal_px: f64,
    pub baseline_m: f64,
    pub min_depth_m: f64,
    pub max_depth_m: f64,
}

impl CameraModel {
    pub fn new(focal_px: f64, baseline_m: f64) -> Result<Self> {
        CameraModel {
            focal_px,
            baseline_m,
            min_depth_m: 1e-3,
            max_depth_m: 80.0,
        }
        .validated()
    }

    pub fn with_depth_range(self, min_depth_m: f64, max_depth_m: f64) -> Result<Self> {
        CameraModel {
            min_depth_m,
            max_depth_m,
            ..self
        }
        .validated()
    }

    fn validated(self) -> Result<Self> {
        if !(self.focal_px > 0.0 && self.baseline_m > 0.0) {
            return Err(Error::arg("focal length and baseline must be positive"));
        }
        if !(self.min_depth_m > 0.0 && self.min_depth_m < self.max_depth_m) {
            return Err(Error::arg(format!(
                "depth range must satisfy 0 < min < max, got [{}, {}]",
                self.min_depth_m, self.max_depth_m
            )));
        }
        Ok(self)
    }
}

/// `focal * baseline / disparity`, clamped to the camera's depth range.
/// Non-positive disparities map to the far limit.
pub fn disparity_to_depth(disp: &Tensor, cam: &CameraModel) -> Tensor {
    let fb = cam.focal_px * cam.baseline_m;
    disp.map(|d| {
        if d > 0.0 {
            (fb / d as f64).clamp(cam.min_depth_m, cam.max_depth_m) as f32
        } else {
            cam.max_depth_m as f32
        }
    })
}

/// The seven standard statistics; `d1..d3` are the fractions of pixels with
/// `max(p/g, g/p)` below `1.25`, `1.25²`, `1.25³`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DepthMetrics {
    pub abs_rel: f64,
    pub sq_rel: f64,
    pub rmse: f64,
    pub rmse_log: f64,
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
}

impl DepthMetrics {
    pub const CSV_HEADER: [&'static str; 7] = ["abs_rel", "sq_rel", "rmse", "rmse_log", "d1", "d2", "d3"];

    pub fn as_array(&self) -> [f64; 7] {
        [self.abs_rel, self.sq_rel, self.rmse, self.rmse_log, self.d1, self.d2, self.d3]
    }

    /// Unweighted mean over a set of per-image results.
    pub fn mean(items: &[DepthMetrics]) -> Option<DepthMetrics> {
        if items.is_empty() {
            return None;
        }
        let mut sum = [0f64; 7];
        for m in items {
            for (s, v) in sum.iter_mut().zip(m.as_array()) {
                *s += v;
            }
        }
        let k = items.len() as f64;
        Some(DepthMetrics {
            abs_rel: sum[0] / k,
            sq_rel: sum[1] / k,
            rmse: sum[2] / k,
            rmse_log: sum[3] / k,
            d1: sum[4] / k,
            d2: sum[5] / k,
            d3: sum[6] / k,
        })
    }
}

/// Statistics over pixels where `mask` is non-zero and ground truth is
/// within `cap_m`. Predictions are clamped to `cap_m` first.
pub fn compute_metrics(pred: &Tensor, gt: &Tensor, mask: &Tensor, cap_m: f64) -> Result<DepthMetrics> {
    if pred.shape() != gt.shape() || mask.shape() != gt.shape() {
        return Err(Error::shape(
            "compute_metrics",
            format!("pred, gt and mask of shape {}", gt.shape()),
            format!("pred {}, mask {}", pred.shape(), mask.shape()),
        ));
    }

    let mut count = 0usize;
    let (mut abs_rel, mut sq_rel, mut sq, mut sq_log) = (0f64, 0f64, 0f64, 0f64);
    let mut hits = [0usize; 3];
    for ((&p, &g), &m) in pred.data().iter().zip(gt.data()).zip(mask.data()) {
        if m == 0.0 {
            continue;
        }
        let (p, g) = (p as f64, g as f64);
        if !(p > 0.0 && g > 0.0) {
            return Err(Error::arg(format!("masked depths must be positive, got pred {p}, gt {g}")));
        }
        if g > cap_m {
            continue;
        }
        let p = p.min(cap_m);
        let diff = p - g;
        abs_rel += diff.abs() / g;
        sq_rel += diff * diff / g;
        sq += diff * diff;
        let log_diff = p.ln() - g.ln();
        sq_log += log_diff * log_diff;
        let ratio = (p / g).max(g / p);
        for (k, hit) in hits.iter_mut().enumerate() {
            if ratio < 1.25f64.powi(k as i32 + 1) {
                *hit += 1;
            }
        }
        count += 1;
    }
    if count == 0 {
        return Err(Error::arg("no valid pixels under the evaluation mask"));
    }

    let n = count as f64;
    Ok(DepthMetrics {
        abs_rel: abs_rel / n,
        sq_rel: sq_rel / n,
        rmse: (sq / n).sqrt(),
        rmse_log: (sq_log / n).sqrt(),
        d1: hits[0] as f64 / n,
        d2: hits[1] as f64 / n,
        d3: hits[2] as f64 / n,
    })
}

pub const CROP_ROWS: (f64, f64) = (0.40810811, 0.99189189);
pub const CROP_COLS: (f64, f64) = (0.03594771, 0.96405229);

/// Row and column ranges (half-open) of the evaluation crop.
pub fn eval_crop_bounds(h: usize, w: usize) -> ((usize, usize), (usize, usize)) {
    let scale = |f: f64, n: usize| (f * n as f64).floor() as usize;
    (
        (scale(CROP_ROWS.0, h), scale(CROP_ROWS.1, h)),
        (scale(CROP_COLS.0, w), scale(CROP_COLS.1, w)),
    )
}

/// Binary (1, 1, h, w) mask of the evaluation crop.
pub fn eval_crop_mask(h: usize, w: usize) -> Result<Tensor> {
    if h < 10 || w < 10 {
        return Err(Error::arg(format!("crop mask needs at least 10x10, got {h}x{w}")));
    }
    let ((r0, r1), (c0, c1)) = eval_crop_bounds(h, w);
    Ok(Tensor::from_fn(Shape::new(1, 1, h, w), |_, _, y, x| {
        ((r0..r1).contains(&y) && (c0..c1).contains(&x)) as u8 as f32
    }))
}
