use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::StereoPair;
use crate::tensor::Tensor;

/// Sampling ranges for training-time augmentation. Photometric factors are
/// drawn once per pair and applied identically to both views.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentParams {
    pub flip_probability: f64,
    pub gamma: (f32, f32),
    /// Multiplicative brightness factor.
    pub brightness: (f32, f32),
    /// Per-channel multiplicative color shift.
    pub color: (f32, f32),
}

impl Default for AugmentParams {
    fn default() -> Self {
        AugmentParams {
            flip_probability: 0.5,
            gamma: (0.8, 1.2),
            brightness: (0.5, 2.0),
            color: (0.8, 1.2),
        }
    }
}

impl AugmentParams {
    pub fn identity() -> Self {
        AugmentParams {
            flip_probability: 0.0,
            gamma: (1.0, 1.0),
            brightness: (1.0, 1.0),
            color: (1.0, 1.0),
        }
    }
}

pub fn augment(pair: &StereoPair, seed: u64) -> StereoPair {
    augment_with(pair, seed, &AugmentParams::default())
}

/// Optional horizontal flip (which also swaps the views), then gamma,
/// brightness and per-channel color factors, clamped to `[0, 1]`.
pub fn augment_with(pair: &StereoPair, seed: u64, p: &AugmentParams) -> StereoPair {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let flip = rng.random_bool(p.flip_probability.clamp(0.0, 1.0));
    let gamma = rng.random_range(p.gamma.0..=p.gamma.1);
    let brightness = rng.random_range(p.brightness.0..=p.brightness.1);
    let channels = pair.left.shape().c;
    let color: Vec<f32> = (0..channels).map(|_| rng.random_range(p.color.0..=p.color.1)).collect();

    let (left, right) = if flip {
        (mirror(&pair.right), mirror(&pair.left))
    } else {
        (pair.left.clone(), pair.right.clone())
    };
    let adjust = |t: &Tensor| {
        let s = t.shape();
        Tensor::from_fn(s, |n, c, y, x| {
            let v = t.at(n, c, y, x).max(0.0).powf(gamma) * brightness * color[c];
            v.clamp(0.0, 1.0)
        })
    };
    StereoPair {
        left: adjust(&left),
        right: adjust(&right),
    }
}

fn mirror(t: &Tensor) -> Tensor {
    let w = t.shape().w;
    Tensor::from_fn(t.shape(), |n, c, y, x| t.at(n, c, y, w - 1 - x))
}
