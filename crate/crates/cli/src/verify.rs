//! Self-check battery for the loss suite: closed-form spot checks,
//! finite-difference gradient checks and the disparity-recovery demo.

use anyhow::Result;
use pyrdepth_core::loss::{
    appearance_contributions_with, fd_gradient, lr_consistency_loss, optimize_disparity, optimize_disparity_with,
    smoothness_loss, ssim_map_with, total_loss, warp_horizontal, DisparityObjective, SsimConstants,
};
use pyrdepth_core::{DisparityPyramid, LossWeights, Shape, StereoPair, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::synthetic;

const CLOSED_FORM_TOL: f64 = 1e-5;
/// Disparity planted in the recovery demo, and the accepted error.
const DEMO_DISPARITY: f32 = 3.0;
const DEMO_TOLERANCE: f32 = 0.5;
pub const MIN_HIT_RATE: f64 = 0.70;

#[derive(Clone, Debug)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug)]
pub struct BatteryReport {
    pub checks: Vec<Check>,
    pub hit_rate: f64,
}

impl BatteryReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

struct Battery {
    checks: Vec<Check>,
}

impl Battery {
    fn record(&mut self, name: &'static str, passed: bool, detail: String) {
        self.checks.push(Check { name, passed, detail });
    }

    fn close(&mut self, name: &'static str, got: f64, want: f64, tol: f64) {
        let passed = (got - want).abs() <= tol;
        self.record(name, passed, format!("got {got:.9}, expected {want:.9}"));
    }

    fn max_abs_below(&mut self, name: &'static str, values: &[f32], bound: f64) {
        let worst = values.iter().fold(0f64, |m, v| m.max(v.abs() as f64));
        self.record(name, worst < bound, format!("max |value| {worst:.3e}, bound {bound:.0e}"));
    }
}

fn plane(h: usize, w: usize, f: impl Fn(usize, usize) -> f32) -> Tensor {
    Tensor::from_fn(Shape::new(1, 1, h, w), |_, _, y, x| f(y, x))
}

fn appearance(orig: &Tensor, warped: &Tensor, alpha: f64, k: &SsimConstants) -> pyrdepth_core::Result<f64> {
    Ok(appearance_contributions_with(orig, warped, alpha, k)?.iter().sum())
}

/// Runs every check. `ssim` is normally [`SsimConstants::default`]; other
/// values exist so tests can confirm the battery notices a broken constant.
pub fn run_battery(seed: u64, ssim: &SsimConstants) -> Result<BatteryReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = Battery { checks: Vec::new() };
    // Reference stabilizer for closed forms, written out independently.
    let c1 = 0.01f64 * 0.01;

    let img = synthetic::texture(seed, 12, 20, 0.0);
    let noise = Tensor::from_fn(Shape::new(1, 3, 9, 11), |_, _, _, _| rng.random_range(0.0f32..=1.0));

    // SSIM.
    let same = ssim_map_with(&img, &img, ssim)?;
    b.max_abs_below("ssim_identity", &same.map(|v| v - 1.0).into_data(), 1e-6);
    let (k1, k2) = (0.2f64, 0.4f64);
    let ca = Tensor::full(Shape::new(1, 3, 6, 6), k1 as f32);
    let cb = Tensor::full(Shape::new(1, 3, 6, 6), k2 as f32);
    let closed = (2.0 * k1 * k2 + c1) / (k1 * k1 + k2 * k2 + c1);
    let got = ssim_map_with(&ca, &cb, ssim)?.data()[0] as f64;
    b.close("ssim_zero_variance", got, closed, CLOSED_FORM_TOL);
    let inverse = noise.map(|v| 1.0 - v);
    let ab = ssim_map_with(&noise, &inverse, ssim)?;
    let ba = ssim_map_with(&inverse, &noise, ssim)?;
    let symmetric = ab.data().iter().zip(ba.data()).all(|(x, y)| (x - y).abs() < 1e-6);
    let in_range = ab.data().iter().all(|v| (-1.0..1.0).contains(v));
    b.record("ssim_symmetry_range", symmetric && in_range, format!("max {:.4}", ab.min_max().1));

    // Warping.
    let cols = Tensor::from_fn(Shape::new(1, 2, 4, 10), |_, c, y, x| (x * x) as f32 + 0.5 * c as f32 + 0.1 * y as f32);
    let zero = Tensor::zeros(Shape::new(1, 1, 4, 10));
    let warped = warp_horizontal(&cols, &zero, -1.0)?;
    b.record("warp_identity", warped == cols, String::from("zero disparity"));
    let shifted = warp_horizontal(&cols, &Tensor::full(zero.shape(), 1.0), -1.0)?;
    let mut shift_err = 0f64;
    let mut half_err = 0f64;
    let halfway = warp_horizontal(&cols, &Tensor::full(zero.shape(), 0.5), 1.0)?;
    for c in 0..2 {
        for y in 0..4 {
            for x in 1..9 {
                shift_err = shift_err.max((shifted.at(0, c, y, x) - cols.at(0, c, y, x - 1)).abs() as f64);
                let mid = 0.5 * (cols.at(0, c, y, x) + cols.at(0, c, y, x + 1));
                half_err = half_err.max((halfway.at(0, c, y, x) - mid).abs() as f64);
            }
        }
    }
    b.close("warp_integer_shift", shift_err, 0.0, CLOSED_FORM_TOL);
    b.close("warp_half_pixel", half_err, 0.0, CLOSED_FORM_TOL);

    // Appearance.
    b.close("appearance_identical", appearance(&img, &img, 0.85, ssim)?, 0.0, CLOSED_FORM_TOL);
    let zeros = Tensor::zeros(Shape::new(1, 3, 5, 7));
    let halves = Tensor::full(Shape::new(1, 3, 5, 7), 0.5);
    b.close("appearance_l1_only", appearance(&zeros, &halves, 0.0, ssim)?, 0.5, CLOSED_FORM_TOL);
    b.close("appearance_ssim_only", appearance(&ca, &cb, 1.0, ssim)?, (1.0 - closed) / 2.0, CLOSED_FORM_TOL);

    // Smoothness.
    let flat = Tensor::full(Shape::new(1, 3, 6, 9), 0.4);
    b.close("smoothness_constant", smoothness_loss(&Tensor::full(Shape::new(1, 1, 6, 9), 2.0), &flat)?, 0.0, 0.0);
    let ramp = plane(6, 9, |_, x| x as f32);
    b.close("smoothness_ramp", smoothness_loss(&ramp, &flat)?, 1.0, CLOSED_FORM_TOL);
    let stripes = Tensor::from_fn(flat.shape(), |_, _, _, x| (x % 2) as f32);
    let damped = smoothness_loss(&ramp, &stripes)?;
    b.close("smoothness_edge_damping", damped, (-1.0f64).exp(), CLOSED_FORM_TOL);

    // Left-right consistency.
    let z = Tensor::zeros(Shape::new(1, 1, 5, 8));
    b.close("lr_zero", lr_consistency_loss(&z, &z)?, 0.0, 0.0);
    let c = Tensor::full(z.shape(), 2.5);
    b.close("lr_constant_field", lr_consistency_loss(&c, &c)?, 0.0, CLOSED_FORM_TOL);
    let (one, three) = (Tensor::full(z.shape(), 1.0), Tensor::full(z.shape(), 3.0));
    b.close("lr_constant_offset", lr_consistency_loss(&one, &three)?, 2.0, CLOSED_FORM_TOL);

    // Multi-scale total.
    let pair = synthetic::shifted_pair(seed, 32, 64, 2.0);
    let pyramid = |value: f32| {
        let maps = (1..=3).map(|l| Tensor::full(Shape::new(1, 1, 32 >> l, 64 >> l), value)).collect();
        DisparityPyramid::from_scaled(1, maps).expect("consistent levels")
    };
    let flat_pair = StereoPair::new(pair.left.clone(), pair.left.clone())?;
    let zero_total = total_loss(&pyramid(0.0), &pyramid(0.0), &flat_pair, &LossWeights::default())?;
    b.close("total_zero", zero_total.total, 0.0, 1e-6);
    let breakdown = total_loss(&pyramid(0.7), &pyramid(1.3), &pair, &LossWeights::default())?;
    b.close("total_recomposes", breakdown.recompute_total(), breakdown.total, 1e-6);
    let w = LossWeights::default();
    let halving = (1..6).all(|s| w.smoothness_weight(s + 1) / w.smoothness_weight(s) == 0.5);
    b.record("smoothness_weight_halves", halving, String::from("levels 1..6"));

    // Finite-difference gradients.
    let d0 = Tensor::zeros(Shape::new(1, 1, 12, 20));
    let g = fd_gradient(|d| appearance(&img, &warp_horizontal(&img, d, -1.0)?, 0.85, ssim), &d0, 1e-3)?;
    b.max_abs_below("fd_appearance_at_minimum", g.data(), 1e-3);
    let image = synthetic::texture(seed ^ 1, 6, 9, 0.0);
    let g = fd_gradient(|d| smoothness_loss(d, &image), &Tensor::full(Shape::new(1, 1, 6, 9), 1.5), 1e-3)?;
    b.max_abs_below("fd_smoothness_constant", g.data(), 1e-12);
    let field = plane(6, 9, |y, x| 0.3 * x as f32 - 0.2 * y as f32);
    let base = fd_gradient(|d| smoothness_loss(d, &image), &field, 1e-2)?;
    let scaled = fd_gradient(|d| Ok(2.5 * smoothness_loss(d, &image)?), &field, 1e-2)?;
    let diff: Vec<f32> = base.data().iter().zip(scaled.data()).map(|(a, s)| 2.5 * a - s).collect();
    b.max_abs_below("fd_linearity", &diff, 1e-5);

    // Recovery demo.
    let demo = synthetic::shifted_pair(seed, 32, 64, DEMO_DISPARITY);
    let trace = optimize_disparity_with(
        &demo,
        &Tensor::zeros(Shape::new(1, 1, 32, 64)),
        10,
        0.5,
        &DisparityObjective::default(),
    )?;
    let monotone = trace.objective.windows(2).all(|p| p[1] < p[0]);
    b.record(
        "descent_monotone",
        monotone,
        format!("objective {:.3} -> {:.3}", trace.objective[0], trace.objective[10]),
    );
    let recovered = optimize_disparity(&demo, 300, 0.5)?;
    let hit_rate = synthetic::hit_rate(&recovered, DEMO_DISPARITY, DEMO_TOLERANCE);
    b.record(
        "disparity_recovery",
        hit_rate >= MIN_HIT_RATE,
        format!("{:.1}% of interior pixels within {DEMO_TOLERANCE} px of {DEMO_DISPARITY}", 100.0 * hit_rate),
    );

    Ok(BatteryReport {
        checks: b.checks,
        hit_rate,
    })
}

pub fn cmd_verify_loss(seed: u64, ssim: &SsimConstants) -> Result<BatteryReport> {
    let report = run_battery(seed, ssim)?;
    for c in &report.checks {
        println!("{} {:<28} {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    println!("hit rate: {:.3}", report.hit_rate);
    Ok(report)
}
