use crate::error::{Error, Result};
use crate::tensor::Tensor;

fn check_epsilon(epsilon: f32) -> Result<()> {
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(Error::arg(format!("finite-difference step must be positive, got {epsilon}")));
    }
    Ok(())
}

/// Central differences `(L(d + εe_i) - L(d - εe_i)) / 2ε` for every element.
///
/// The divisor is the step actually realized in f32, so rounding of the
/// perturbed value does not bias the estimate.
pub fn fd_gradient(loss_fn: impl Fn(&Tensor) -> Result<f64>, disparity: &Tensor, epsilon: f32) -> Result<Tensor> {
    check_epsilon(epsilon)?;
    let mut probe = disparity.clone();
    let mut grad = Vec::with_capacity(disparity.shape().numel());
    for i in 0..disparity.shape().numel() {
        let base = disparity.data()[i];
        let (up, down) = (base + epsilon, base - epsilon);
        probe.data_mut()[i] = up;
        let l_up = loss_fn(&probe)?;
        probe.data_mut()[i] = down;
        let l_down = loss_fn(&probe)?;
        probe.data_mut()[i] = base;
        grad.push(((l_up - l_down) / (up as f64 - down as f64)) as f32);
    }
    Ok(Tensor::from_parts_unchecked(disparity.shape(), grad))
}

/// Central differences for a loss given as a sum of per-pixel
/// contributions, where each contribution depends only on disparities
/// within `radius` pixels (Chebyshev distance).
///
/// Elements spaced `2 * radius + 1` apart have disjoint footprints, so they
/// are perturbed together and each one's derivative is read from its own
/// neighborhood. The result equals [`fd_gradient`] on the summed loss up to
/// rounding, with `2 (2r + 1)^2` evaluations instead of `2 h w`.
pub fn fd_gradient_local(
    contributions: impl Fn(&Tensor) -> Result<Vec<f64>>,
    disparity: &Tensor,
    epsilon: f32,
    radius: usize,
) -> Result<Tensor> {
    check_epsilon(epsilon)?;
    let s = disparity.shape();
    if s.c != 1 {
        return Err(Error::shape("fd_gradient_local", "1-channel field", s));
    }
    let stride = 2 * radius + 1;
    let (h, w) = (s.h, s.w);
    let mut probe = disparity.clone();
    let mut grad = vec![0f32; s.numel()];

    for oy in 0..stride.min(h) {
        for ox in 0..stride.min(w) {
            let members: Vec<usize> = (0..s.n)
                .flat_map(|n| {
                    (oy..h)
                        .step_by(stride)
                        .flat_map(move |y| (ox..w).step_by(stride).map(move |x| (n * h + y) * w + x))
                })
                .collect();
            let steps: Vec<(f32, f32)> = members
                .iter()
                .map(|&i| {
                    let base = disparity.data()[i];
                    (base + epsilon, base - epsilon)
                })
                .collect();

            for (&i, &(up, _)) in members.iter().zip(&steps) {
                probe.data_mut()[i] = up;
            }
            let c_up = contributions(&probe)?;
            for (&i, &(_, down)) in members.iter().zip(&steps) {
                probe.data_mut()[i] = down;
            }
            let c_down = contributions(&probe)?;
            for &i in &members {
                probe.data_mut()[i] = disparity.data()[i];
            }
            if c_up.len() != s.numel() || c_down.len() != s.numel() {
                return Err(Error::shape("fd_gradient_local", s.numel(), c_up.len()));
            }

            for (&i, &(up, down)) in members.iter().zip(&steps) {
                let (n, y, x) = (i / (h * w), (i / w) % h, i % w);
                let mut delta = 0f64;
                for yy in y.saturating_sub(radius)..(y + radius + 1).min(h) {
                    for xx in x.saturating_sub(radius)..(x + radius + 1).min(w) {
                        let j = (n * h + yy) * w + xx;
                        delta += c_up[j] - c_down[j];
                    }
                }
                grad[i] = (delta / (up as f64 - down as f64)) as f32;
            }
        }
    }
    Ok(Tensor::from_parts_unchecked(s, grad))
}
