use std::ops::RangeInclusive;
use std::path::Path;

use anyhow::{ensure, Result};
use pyrdepth_core::{random_init, Network, NetworkConfig, WeightContainer};

/// Accepted parameter count for the default configuration.
pub const PARAMETER_BAND: RangeInclusive<usize> = 1_800_000..=2_050_000;

pub fn cmd_init_weights(seed: u64, out: &Path) -> Result<usize> {
    let cfg = NetworkConfig::default();
    let weights = random_init(&cfg, seed)?;
    let count = Network::build(cfg, &weights)?.count_parameters();
    ensure!(
        PARAMETER_BAND.contains(&count),
        "parameter count {count} outside {}..={}",
        PARAMETER_BAND.start(),
        PARAMETER_BAND.end()
    );
    weights.save(out)?;
    println!("{count} parameters written to {}", out.display());
    Ok(count)
}

pub fn cmd_inspect(path: &Path) -> Result<()> {
    let weights = WeightContainer::load(path)?;
    let width = weights.iter().map(|(n, _)| n.len()).max().unwrap_or(0);
    for (name, entry) in weights.iter() {
        let dims: Vec<String> = entry.dims.iter().map(usize::to_string).collect();
        println!("{name:<width$}  [{}]  {}", dims.join(", "), entry.numel());
    }
    println!("{} tensors, {} parameters", weights.len(), weights.num_parameters());
    match Network::build(NetworkConfig::default(), &weights) {
        Ok(_) => println!("matches the default network layout"),
        Err(e) => println!("does not match the default network layout: {e}"),
    }
    Ok(())
}
