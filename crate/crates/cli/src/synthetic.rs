//! Seeded synthetic stereo data with known disparity.

use pyrdepth_core::{Shape, StereoPair, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Smooth random texture in `[0, 1]`: a sum of oriented sinusoids per
/// channel, sampled at horizontal offset `shift`.
pub fn texture(seed: u64, h: usize, w: usize, shift: f32) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let waves: Vec<[f32; 4]> = (0..12)
        .map(|_| {
            [
                rng.random_range(0.12..0.42),
                rng.random_range(-0.15..0.15),
                rng.random_range(0.0..std::f32::consts::TAU),
                rng.random_range(0.0..0.15),
            ]
        })
        .collect();
    Tensor::from_fn(Shape::new(1, 3, h, w), |_, c, y, x| {
        let u = x as f32 + shift;
        let v: f32 = waves
            .iter()
            .skip(c)
            .step_by(3)
            .map(|[fx, fy, phase, amp]| amp * (fx * u + fy * y as f32 + phase).sin())
            .sum();
        (0.5 + v).clamp(0.0, 1.0)
    })
}

/// Pair whose right view is the left view shifted so that the left-view
/// disparity is `disparity` pixels everywhere: `right(x) = left(x + d)`.
pub fn shifted_pair(seed: u64, h: usize, w: usize, disparity: f32) -> StereoPair {
    StereoPair::new(texture(seed, h, w, 0.0), texture(seed, h, w, disparity)).expect("same dims")
}

/// Interior region used to score recovered disparity: two rows from the
/// top and bottom, and enough columns on the left that samples at
/// `x - d` stay inside the image.
pub fn interior(h: usize, w: usize, disparity: usize) -> impl Iterator<Item = (usize, usize)> {
    (2..h - 2).flat_map(move |y| (disparity + 2..w - 2).map(move |x| (y, x)))
}

/// Fraction of interior pixels of `d` within `tol` of `target`.
pub fn hit_rate(d: &Tensor, target: f32, tol: f32) -> f64 {
    let s = d.shape();
    let cells: Vec<f32> = interior(s.h, s.w, target.ceil() as usize).map(|(y, x)| d.at(0, 0, y, x)).collect();
    cells.iter().filter(|v| (**v - target).abs() < tol).count() as f64 / cells.len() as f64
}
