use super::photometric::{appearance_contributions, smoothness_contributions, warp_horizontal};
use super::{fd_gradient_local, StereoPair};
use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

/// Largest pair (in pixels) the finite-difference optimizer accepts.
pub const MAX_OPTIMIZE_PIXELS: usize = 32 * 64;

const FD_EPSILON: f32 = 1e-2;
// Padded SSIM reaches two pixels from the perturbed sample at the borders.
const FD_RADIUS: usize = 2;
const MAX_BACKTRACKS: usize = 12;

/// Photometric objective on a left-view disparity field: appearance of the
/// left image against its reconstruction from the right image, plus
/// edge-aware smoothness. Expressed per pixel (summed, not averaged) so
/// step sizes do not depend on the image size.
///
/// The smoothness weight is kept small: its `|·|` kinks at tied neighbors
/// make the finite-difference gradient a poor descent direction, and at
/// 0.1 the descent stalls well short of the true disparity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DisparityObjective {
    pub ssim_alpha: f64,
    pub smoothness_weight: f64,
}

impl Default for DisparityObjective {
    fn default() -> Self {
        DisparityObjective {
            ssim_alpha: 0.85,
            smoothness_weight: 0.01,
        }
    }
}

impl DisparityObjective {
    pub fn contributions(&self, pair: &StereoPair, disparity: &Tensor) -> Result<Vec<f64>> {
        let pixels = pair.left.shape().plane() as f64;
        let warped = warp_horizontal(&pair.right, disparity, -1.0)?;
        let ap = appearance_contributions(&pair.left, &warped, self.ssim_alpha)?;
        let ds = smoothness_contributions(disparity, &pair.left)?;
        Ok(ap
            .iter()
            .zip(&ds)
            .map(|(a, d)| pixels * (a + self.smoothness_weight * d))
            .collect())
    }

    pub fn value(&self, pair: &StereoPair, disparity: &Tensor) -> Result<f64> {
        Ok(self.contributions(pair, disparity)?.iter().sum())
    }
}

#[derive(Clone, Debug)]
pub struct OptimizeTrace {
    pub disparity: Tensor,
    /// Objective at the start and after every step; never increases.
    pub objective: Vec<f64>,
}

/// Gradient descent on the left disparity field itself, starting from zero,
/// with finite-difference gradients of [`DisparityObjective::default`].
///
/// `step_size` is the initial step of each iteration; it is halved until
/// the objective decreases, and the field is left unchanged when no halving
/// succeeds.
pub fn optimize_disparity(pair: &StereoPair, steps: usize, step_size: f64) -> Result<Tensor> {
    let s = pair.left.shape();
    let init = Tensor::zeros(Shape::new(s.n, 1, s.h, s.w));
    Ok(optimize_disparity_with(pair, &init, steps, step_size, &DisparityObjective::default())?.disparity)
}

pub fn optimize_disparity_with(
    pair: &StereoPair,
    init: &Tensor,
    steps: usize,
    step_size: f64,
    objective: &DisparityObjective,
) -> Result<OptimizeTrace> {
    let s = pair.left.shape();
    if s.n != 1 || s.h < 3 || s.w < 3 || s.plane() > MAX_OPTIMIZE_PIXELS {
        return Err(Error::arg(format!(
            "optimizer needs a single pair between 3x3 and {MAX_OPTIMIZE_PIXELS} pixels, got {s}"
        )));
    }
    if !(step_size > 0.0 && step_size.is_finite()) {
        return Err(Error::arg(format!("step size must be positive, got {step_size}")));
    }
    if init.shape() != Shape::new(1, 1, s.h, s.w) {
        return Err(Error::shape("optimize_disparity", Shape::new(1, 1, s.h, s.w), init.shape()));
    }

    let mut d = init.clone();
    let mut current = objective.value(pair, &d)?;
    let mut history = Vec::with_capacity(steps + 1);
    history.push(current);
    for _ in 0..steps {
        let grad = fd_gradient_local(|t| objective.contributions(pair, t), &d, FD_EPSILON, FD_RADIUS)?;
        let mut step = step_size;
        for _ in 0..MAX_BACKTRACKS {
            let candidate = d.zip_map(&grad, |v, g| (v as f64 - step * g as f64) as f32)?;
            let value = objective.value(pair, &candidate)?;
            if value < current {
                d = candidate;
                current = value;
                break;
            }
            step *= 0.5;
        }
        history.push(current);
    }
    Ok(OptimizeTrace {
        disparity: d,
        objective: history,
    })
}
