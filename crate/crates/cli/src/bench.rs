use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use pyrdepth_core::{ExitLevel, Network, Shape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::infer::load_network;

/// Untimed runs per level before measurement starts.
pub const WARMUP_RUNS: usize = 3;

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRecord {
    pub exit_level: ExitLevel,
    pub input_dims: (usize, usize),
    pub reps: usize,
    pub median_ms: f64,
    pub mean_ms: f64,
    pub p95_ms: f64,
    pub activation_bytes: usize,
}

impl BenchRecord {
    pub const CSV_HEADER: [&'static str; 8] =
        ["exit_level", "height", "width", "reps", "median_ms", "mean_ms", "p95_ms", "activation_bytes"];

    fn from_samples(exit_level: ExitLevel, input_dims: (usize, usize), mut ms: Vec<f64>, activation_bytes: usize) -> Self {
        ms.sort_by(f64::total_cmp);
        let n = ms.len();
        let median = if n % 2 == 1 { ms[n / 2] } else { 0.5 * (ms[n / 2 - 1] + ms[n / 2]) };
        // Nearest-rank percentile.
        let p95 = ms[(0.95 * n as f64).ceil() as usize - 1];
        BenchRecord {
            exit_level,
            input_dims,
            reps: n,
            median_ms: median,
            mean_ms: ms.iter().sum::<f64>() / n as f64,
            p95_ms: p95,
            activation_bytes,
        }
    }

    fn csv_row(&self) -> Vec<String> {
        vec![
            self.exit_level.to_string(),
            self.input_dims.0.to_string(),
            self.input_dims.1.to_string(),
            self.reps.to_string(),
            format!("{:.3}", self.median_ms),
            format!("{:.3}", self.mean_ms),
            format!("{:.3}", self.p95_ms),
            self.activation_bytes.to_string(),
        ]
    }
}

/// Fixed pseudo-random input so runs are comparable across invocations.
pub fn bench_input(h: usize, w: usize) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    Tensor::from_fn(Shape::new(1, 3, h, w), |_, _, _, _| rng.random_range(0.0f32..=1.0))
}

/// Times `infer` for every level. Levels are interleaved within each
/// repetition so slow drift in machine load affects them equally.
pub fn run_bench(net: &Network, dims: (usize, usize), levels: &[ExitLevel], reps: usize) -> Result<Vec<BenchRecord>> {
    if reps == 0 {
        bail!("reps must be at least 1");
    }
    if levels.is_empty() {
        bail!("no exit levels requested");
    }
    let image = bench_input(dims.0, dims.1);
    let footprints = levels
        .iter()
        .map(|&l| net.activation_footprint(dims.0, dims.1, l))
        .collect::<Result<Vec<_>, _>>()?;
    for &level in levels {
        for _ in 0..WARMUP_RUNS {
            std::hint::black_box(net.infer(&image, level)?);
        }
    }
    let mut samples = vec![Vec::with_capacity(reps); levels.len()];
    for _ in 0..reps {
        for (i, &level) in levels.iter().enumerate() {
            let start = Instant::now();
            std::hint::black_box(net.infer(&image, level)?);
            samples[i].push(start.elapsed().as_secs_f64() * 1e3);
        }
    }
    Ok(levels
        .iter()
        .zip(samples)
        .zip(footprints)
        .map(|((&level, ms), bytes)| BenchRecord::from_samples(level, dims, ms, bytes))
        .collect())
}

#[derive(Clone, Debug)]
pub struct BenchConfig {
    pub weights: PathBuf,
    pub dims: (usize, usize),
    pub levels: Vec<ExitLevel>,
    pub reps: usize,
    pub output: PathBuf,
}

pub fn write_records(records: &[BenchRecord], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot write {}", path.display()))?;
    w.write_record(BenchRecord::CSV_HEADER)?;
    for r in records {
        w.write_record(r.csv_row())?;
    }
    w.flush()?;
    Ok(())
}

pub fn cmd_bench(cfg: &BenchConfig) -> Result<Vec<BenchRecord>> {
    let net = load_network(&cfg.weights)?;
    let records = run_bench(&net, cfg.dims, &cfg.levels, cfg.reps)?;
    write_records(&records, &cfg.output)?;
    for r in &records {
        println!(
            "{}: median {:.2} ms, p95 {:.2} ms, activations {} bytes",
            r.exit_level, r.median_ms, r.p95_ms, r.activation_bytes
        );
    }
    Ok(records)
}
