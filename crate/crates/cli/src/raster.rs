//! Image file input and output.

use std::path::Path;

use anyhow::{bail, Context, Result};
use image::{ImageBuffer, Luma, Rgb};
use pyrdepth_core::{Shape, Tensor};

/// Scale between stored 16-bit values and pixels or metres.
pub const RASTER_SCALE: f32 = 256.0;

/// Reads any supported image as a (1, 3, h, w) tensor in `[0, 1]`.
pub fn load_rgb(path: &Path) -> Result<Tensor> {
    let img = image::open(path)
        .with_context(|| format!("cannot read image {}", path.display()))?
        .into_rgb32f();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let raw = img.into_raw();
    Ok(Tensor::from_fn(Shape::new(1, 3, h, w), |_, c, y, x| {
        raw[(y * w + x) * 3 + c].clamp(0.0, 1.0)
    }))
}

/// Reads a single-channel 16-bit raster, dividing by [`RASTER_SCALE`].
pub fn load_scaled_u16(path: &Path) -> Result<Tensor> {
    let img = image::open(path).with_context(|| format!("cannot read raster {}", path.display()))?;
    if img.color().channel_count() != 1 {
        bail!("{} is not a single-channel raster", path.display());
    }
    let img = img.into_luma16();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = img.into_raw().into_iter().map(|v| v as f32 / RASTER_SCALE).collect();
    Ok(Tensor::new(Shape::new(1, 1, h, w), data)?)
}

/// Writes a (1, 1, h, w) map as 16-bit PNG of `value · 256`, saturating.
pub fn save_scaled_u16(map: &Tensor, path: &Path) -> Result<()> {
    let s = map.shape();
    if s.n != 1 || s.c != 1 {
        bail!("expected a single-channel map, got {s}");
    }
    let pixels: Vec<u16> = map
        .data()
        .iter()
        .map(|&v| (v * RASTER_SCALE).round().clamp(0.0, u16::MAX as f32) as u16)
        .collect();
    let img: ImageBuffer<Luma<u16>, _> =
        ImageBuffer::from_raw(s.w as u32, s.h as u32, pixels).expect("buffer matches dimensions");
    img.save(path).with_context(|| format!("cannot write {}", path.display()))
}

/// Writes an 8-bit colour preview of a disparity map over `[0, max_value]`.
pub fn save_preview(map: &Tensor, max_value: f32, path: &Path) -> Result<()> {
    let s = map.shape();
    let mut img = ImageBuffer::<Rgb<u8>, _>::new(s.w as u32, s.h as u32);
    for (i, px) in img.pixels_mut().enumerate() {
        let t = (map.data()[i] / max_value).clamp(0.0, 1.0);
        *px = Rgb(viridis(t));
    }
    img.save(path).with_context(|| format!("cannot write {}", path.display()))
}

/// Viridis sampled at nine evenly spaced stops.
const VIRIDIS_STOPS: [[u8; 3]; 9] = [
    [68, 1, 84],
    [72, 40, 120],
    [62, 74, 137],
    [49, 104, 142],
    [38, 130, 142],
    [31, 158, 137],
    [53, 183, 121],
    [109, 205, 89],
    [253, 231, 37],
];

/// Piecewise-linear viridis ramp for `t` in `[0, 1]`.
pub fn viridis(t: f32) -> [u8; 3] {
    let pos = t.clamp(0.0, 1.0) * (VIRIDIS_STOPS.len() - 1) as f32;
    let i = (pos.floor() as usize).min(VIRIDIS_STOPS.len() - 2);
    let f = pos - i as f32;
    let (a, b) = (VIRIDIS_STOPS[i], VIRIDIS_STOPS[i + 1]);
    std::array::from_fn(|k| (a[k] as f32 + f * (b[k] as f32 - a[k] as f32)).round() as u8)
}
