//! Shared fixtures for the benchmarks.

use pyrdepth_core::{random_init, ConvWeights, Network, NetworkConfig, Shape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Uniform `[0, 1)` tensor from a fixed seed.
pub fn random_tensor(shape: Shape, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape, |_, _, _, _| rng.random::<f32>())
}

/// 3×3 convolution weights with small random values.
pub fn conv_weights(out_channels: usize, in_channels: usize, seed: u64) -> ConvWeights {
    let kernel = random_tensor(Shape::new(out_channels, in_channels, 3, 3), seed).map(|v| 0.1 * (v - 0.5));
    ConvWeights::new(kernel, vec![0.0; out_channels]).expect("consistent dims")
}

/// Default network with seeded random weights.
pub fn default_network(seed: u64) -> Network {
    let cfg = NetworkConfig::default();
    let weights = random_init(&cfg, seed).expect("default config is valid");
    Network::build(cfg, &weights).expect("random weights match the layout")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_are_deterministic() {
        let s = Shape::new(1, 2, 3, 4);
        assert_eq!(random_tensor(s, 1), random_tensor(s, 1));
        assert_eq!(conv_weights(4, 2, 0).out_channels(), 4);
        assert_eq!(default_network(0).count_parameters(), default_network(1).count_parameters());
    }
}
