use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use pyrdepth_core::tensor::bilinear_resize;
use pyrdepth_core::{ExitLevel, Network, NetworkConfig, Tensor, WeightContainer};

use crate::raster;

/// Working resolution used when `resize` is requested.
pub const RESIZE_DIMS: (usize, usize) = (256, 512);

#[derive(Clone, Debug)]
pub struct InferConfig {
    pub weights: PathBuf,
    pub input: PathBuf,
    pub exit: ExitLevel,
    pub output: PathBuf,
    pub resize: bool,
    pub preview: Option<PathBuf>,
}

pub fn load_network(path: &std::path::Path) -> Result<Network> {
    let weights = WeightContainer::load(path)?;
    Network::build(NetworkConfig::default(), &weights)
        .with_context(|| format!("weights in {} do not match the network", path.display()))
}

/// Full-resolution disparity in pixels of the original image.
pub fn predict(net: &Network, image: &Tensor, exit: ExitLevel, resize: bool) -> Result<Tensor> {
    let s = image.shape();
    let divisor = net.config().divisor();
    if !resize {
        if !s.h.is_multiple_of(divisor) || !s.w.is_multiple_of(divisor) {
            bail!(
                "input is {}x{} (width x height) but both sides must be multiples of {divisor}; \
                 pass --resize to run at {}x{}",
                s.w,
                s.h,
                RESIZE_DIMS.1,
                RESIZE_DIMS.0
            );
        }
        return Ok(net.infer_fullres(image, exit)?);
    }
    let (rh, rw) = RESIZE_DIMS;
    if (s.h, s.w) == (rh, rw) {
        return Ok(net.infer_fullres(image, exit)?);
    }
    let disp = net.infer_fullres(&bilinear_resize(image, rh, rw)?, exit)?;
    let ratio = s.w as f32 / rw as f32;
    Ok(bilinear_resize(&disp, s.h, s.w)?.map(|v| v * ratio))
}

pub fn cmd_infer(cfg: &InferConfig) -> Result<()> {
    let net = load_network(&cfg.weights)?;
    let image = raster::load_rgb(&cfg.input)?;
    let disp = predict(&net, &image, cfg.exit, cfg.resize)?;
    raster::save_scaled_u16(&disp, &cfg.output)?;
    if let Some(preview) = &cfg.preview {
        let max = net.config().disparity_scale * disp.shape().w as f32;
        raster::save_preview(&disp, max, preview)?;
    }
    Ok(())
}
