//! The pyramidal depth network: a six-level stride-2 feature extractor and
//! one small decoder per level, run coarse-to-fine.
//!
//! Level `k` works at `1 / 2^k` of the input resolution. The decoder of the
//! deepest level sees only encoder features; every other decoder sees the
//! encoder features concatenated with the previous decoder's 8 output
//! features, upsampled by a 2×2 stride-2 deconvolution. Channel 0 of each
//! decoder output, passed through a sigmoid, is that level's disparity.
//!
//! Stopping the upward pass early (`ExitLevel`) skips every finer decoder,
//! which is where the runtime savings at coarse resolutions come from.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::tensor::{
    bilinear_resize, concat_channels, conv2d, deconv2x2, Activation, ConvWeights, Shape, Tensor,
};
use crate::weights::{TensorEntry, WeightContainer};

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkConfig {
    pub levels: usize,
    pub encoder_channels: Vec<usize>,
    pub decoder_channels: Vec<usize>,
    pub leaky_slope: f32,
    /// Fraction of the level width that a sigmoid output of 1 maps to.
    pub disparity_scale: f32,
}

/// Feature count handed from one decoder to the next finer level.
pub const HANDOFF_CHANNELS: usize = 8;

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            levels: 6,
            encoder_channels: vec![16, 32, 64, 96, 128, 192],
            decoder_channels: vec![96, 64, 32, HANDOFF_CHANNELS],
            leaky_slope: 0.2,
            disparity_scale: 0.3,
        }
    }
}

impl NetworkConfig {
    /// The default network cut down to its first `levels` pyramid levels.
    pub fn truncated(levels: usize) -> Self {
        let mut encoder_channels = NetworkConfig::default().encoder_channels;
        encoder_channels.truncate(levels);
        NetworkConfig {
            levels,
            encoder_channels,
            ..NetworkConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels == 0 {
            return Err(Error::arg("network needs at least one pyramid level"));
        }
        if self.encoder_channels.len() != self.levels {
            return Err(Error::arg(format!(
                "{} encoder channel counts for {} levels",
                self.encoder_channels.len(),
                self.levels
            )));
        }
        if self.decoder_channels.last() != Some(&HANDOFF_CHANNELS) {
            return Err(Error::arg(format!(
                "decoder channels must end with {HANDOFF_CHANNELS}, got {:?}",
                self.decoder_channels
            )));
        }
        if self.encoder_channels.contains(&0) || self.decoder_channels.contains(&0) {
            return Err(Error::arg("channel counts must be positive"));
        }
        if self.disparity_scale.is_nan() || self.disparity_scale <= 0.0 {
            return Err(Error::arg("disparity scale must be positive"));
        }
        Ok(())
    }

    /// Input dimensions must be multiples of this.
    pub fn divisor(&self) -> usize {
        1 << self.levels
    }

    /// Every parameterized layer, in the canonical (container) order.
    pub fn layer_table(&self) -> Vec<LayerSpec> {
        let mut table = Vec::new();
        for level in 1..=self.levels {
            let out = self.encoder_channels[level - 1];
            let input = if level == 1 { 3 } else { self.encoder_channels[level - 2] };
            table.push(LayerSpec::conv(format!("encoder{level}/conv1"), input, out));
            table.push(LayerSpec::conv(format!("encoder{level}/conv2"), out, out));
        }
        for level in 1..=self.levels {
            let mut input = self.decoder_input_channels(level);
            for (i, &out) in self.decoder_channels.iter().enumerate() {
                table.push(LayerSpec::conv(format!("decoder{level}/conv{}", i + 1), input, out));
                input = out;
            }
        }
        for level in 2..=self.levels {
            table.push(LayerSpec {
                name: format!("deconv{level}"),
                out_channels: HANDOFF_CHANNELS,
                in_channels: HANDOFF_CHANNELS,
                kernel: 2,
            });
        }
        table
    }

    pub fn decoder_input_channels(&self, level: usize) -> usize {
        let enc = self.encoder_channels[level - 1];
        if level == self.levels {
            enc
        } else {
            enc + HANDOFF_CHANNELS
        }
    }
}

/// One parameterized layer: `name/kernel` of shape (out, in, k, k) and
/// `name/bias` of shape (out).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerSpec {
    pub name: String,
    pub out_channels: usize,
    pub in_channels: usize,
    pub kernel: usize,
}

impl LayerSpec {
    fn conv(name: String, in_channels: usize, out_channels: usize) -> Self {
        LayerSpec {
            name,
            out_channels,
            in_channels,
            kernel: 3,
        }
    }

    pub fn kernel_name(&self) -> String {
        format!("{}/kernel", self.name)
    }

    pub fn bias_name(&self) -> String {
        format!("{}/bias", self.name)
    }

    pub fn kernel_dims(&self) -> [usize; 4] {
        [self.out_channels, self.in_channels, self.kernel, self.kernel]
    }

    pub fn fan_in(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    pub fn num_parameters(&self) -> usize {
        self.kernel_dims().iter().product::<usize>() + self.out_channels
    }
}

/// Pyramid level at which the upward decoder pass stops.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ExitLevel {
    /// Half resolution, level 1.
    H,
    /// Quarter resolution, level 2.
    Q,
    /// Eighth resolution, level 3.
    E,
    S16,
    S32,
    S64,
}

impl ExitLevel {
    pub const ALL: [ExitLevel; 6] = [
        ExitLevel::H,
        ExitLevel::Q,
        ExitLevel::E,
        ExitLevel::S16,
        ExitLevel::S32,
        ExitLevel::S64,
    ];

    pub fn level(self) -> usize {
        self as usize + 1
    }

    pub fn from_level(level: usize) -> Option<Self> {
        Self::ALL.get(level.checked_sub(1)?).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ExitLevel::H => "h",
            ExitLevel::Q => "q",
            ExitLevel::E => "e",
            ExitLevel::S16 => "s16",
            ExitLevel::S32 => "s32",
            ExitLevel::S64 => "s64",
        }
    }
}

impl fmt::Display for ExitLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExitLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|l| l.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::arg(format!("unknown exit level `{s}` (expected h, q, e, s16, s32 or s64)")))
    }
}

#[derive(Clone, Debug)]
struct LevelWeights {
    encoder: [ConvWeights; 2],
    decoder: Vec<ConvWeights>,
    /// Hand-off into the next finer level; absent at level 1.
    deconv: Option<ConvWeights>,
}

/// An assembled, immutable network.
#[derive(Clone, Debug)]
pub struct Network {
    config: NetworkConfig,
    levels: Vec<LevelWeights>,
}

/// Per-level disparities from one forward pass, finest level first.
#[derive(Clone, Debug, PartialEq)]
pub struct DisparityPyramid {
    first_level: usize,
    maps: Vec<Tensor>,
    scaled: Vec<Tensor>,
}

impl DisparityPyramid {
    /// Builds a pyramid from pixel-unit disparities (finest first) without
    /// sigmoid maps; used when feeding hand-made fields to the losses.
    pub fn from_scaled(first_level: usize, scaled: Vec<Tensor>) -> Result<Self> {
        if first_level == 0 || scaled.is_empty() {
            return Err(Error::arg("pyramid needs at least one level, numbered from 1"));
        }
        for pair in scaled.windows(2) {
            let (fine, coarse) = (pair[0].shape(), pair[1].shape());
            if fine.h != 2 * coarse.h || fine.w != 2 * coarse.w || fine.c != 1 || coarse.c != 1 {
                return Err(Error::shape("DisparityPyramid", "halving 1-channel levels", format!("{fine} then {coarse}")));
            }
        }
        Ok(DisparityPyramid {
            first_level,
            maps: Vec::new(),
            scaled,
        })
    }

    pub fn first_level(&self) -> usize {
        self.first_level
    }

    pub fn last_level(&self) -> usize {
        self.first_level + self.scaled.len() - 1
    }

    pub fn levels(&self) -> impl Iterator<Item = usize> {
        self.first_level..=self.last_level()
    }

    /// Sigmoid output in (0, 1) at `level`.
    pub fn map(&self, level: usize) -> Option<&Tensor> {
        self.maps.get(level.checked_sub(self.first_level)?)
    }

    /// Disparity in pixels of `level`'s own resolution.
    pub fn scaled(&self, level: usize) -> Option<&Tensor> {
        self.scaled.get(level.checked_sub(self.first_level)?)
    }

    pub fn finest_scaled(&self) -> &Tensor {
        &self.scaled[0]
    }
}

fn lookup<'a>(weights: &'a WeightContainer, name: &str, dims: &[usize]) -> Result<&'a TensorEntry> {
    let entry = weights.get(name).ok_or_else(|| Error::MissingTensor(name.to_owned()))?;
    if entry.dims != dims {
        return Err(Error::shape("build", format!("`{name}` {dims:?}"), format!("{:?}", entry.dims)));
    }
    Ok(entry)
}

fn bind(weights: &WeightContainer, layer: &LayerSpec) -> Result<ConvWeights> {
    let dims = layer.kernel_dims();
    let kernel = lookup(weights, &layer.kernel_name(), &dims)?;
    let bias = lookup(weights, &layer.bias_name(), &[layer.out_channels])?;
    ConvWeights::new(Tensor::from_dims(dims, kernel.data.clone())?, bias.data.clone())
}

impl Network {
    /// Binds every layer of `config` to the identically named tensors of
    /// `weights`. Unrelated entries in the container are ignored.
    pub fn build(config: NetworkConfig, weights: &WeightContainer) -> Result<Self> {
        config.validate()?;
        let mut layers = config.layer_table().into_iter();
        let mut next = || bind(weights, &layers.next().expect("layer table covers the config"));

        let mut encoders = Vec::with_capacity(config.levels);
        for _ in 0..config.levels {
            encoders.push([next()?, next()?]);
        }
        let mut decoders = Vec::with_capacity(config.levels);
        for _ in 0..config.levels {
            decoders.push(config.decoder_channels.iter().map(|_| next()).collect::<Result<Vec<_>>>()?);
        }
        let mut deconvs = vec![None];
        for _ in 2..=config.levels {
            deconvs.push(Some(next()?));
        }

        let levels = encoders
            .into_iter()
            .zip(decoders)
            .zip(deconvs)
            .map(|((encoder, decoder), deconv)| LevelWeights { encoder, decoder, deconv })
            .collect();
        Ok(Network { config, levels })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn encoder_conv_count(&self) -> usize {
        self.levels.iter().map(|l| l.encoder.len()).sum()
    }

    pub fn decoder_conv_counts(&self) -> Vec<usize> {
        self.levels.iter().map(|l| l.decoder.len()).collect()
    }

    pub fn deconv_count(&self) -> usize {
        self.levels.iter().filter(|l| l.deconv.is_some()).count()
    }

    /// Total kernel and bias elements.
    pub fn count_parameters(&self) -> usize {
        self.levels
            .iter()
            .map(|l| {
                l.encoder.iter().chain(&l.decoder).chain(&l.deconv).map(ConvWeights::num_parameters).sum::<usize>()
            })
            .sum()
    }

    fn check_input(&self, shape: Shape, exit: ExitLevel) -> Result<()> {
        if shape.c != 3 {
            return Err(Error::shape("infer", "3-channel image", shape));
        }
        let div = self.config.divisor();
        if !shape.h.is_multiple_of(div) || !shape.w.is_multiple_of(div) {
            return Err(Error::arg(format!(
                "input {}x{} is not divisible by {div}; resize the image first (e.g. to 512x256)",
                shape.w, shape.h
            )));
        }
        if exit.level() > self.config.levels {
            return Err(Error::arg(format!(
                "exit level {exit} is deeper than the {}-level pyramid",
                self.config.levels
            )));
        }
        Ok(())
    }

    /// Runs the encoder to the deepest level, then decoders upward to `exit`.
    pub fn infer(&self, image: &Tensor, exit: ExitLevel) -> Result<DisparityPyramid> {
        self.infer_traced(image, exit, &mut NoTrace)
    }

    /// [`Network::infer`] reporting every buffer allocation and release.
    pub fn infer_traced(&self, image: &Tensor, exit: ExitLevel, trace: &mut dyn BufferTrace) -> Result<DisparityPyramid> {
        self.check_input(image.shape(), exit)?;
        let (maps, scaled) = self.forward(&Compute, image, exit, trace)?;
        Ok(DisparityPyramid {
            first_level: exit.level(),
            maps,
            scaled,
        })
    }

    /// Finest computed disparity upsampled to the input resolution, in
    /// full-resolution pixels.
    pub fn infer_fullres(&self, image: &Tensor, exit: ExitLevel) -> Result<Tensor> {
        let pyramid = self.infer(image, exit)?;
        let s = image.shape();
        let finest = pyramid.finest_scaled();
        let ratio = s.w as f32 / finest.shape().w as f32;
        Ok(bilinear_resize(finest, s.h, s.w)?.map(|d| d * ratio))
    }

    /// Peak bytes of simultaneously live tensors for an `h`×`w` input,
    /// following the exact allocation order of [`Network::infer`].
    ///
    /// The input image counts as live until the first convolution has
    /// consumed it; encoder outputs live until their decoder (or, above the
    /// exit level, the next encoder) consumes them; output maps live to the end.
    pub fn activation_footprint(&self, h: usize, w: usize, exit: ExitLevel) -> Result<usize> {
        let input = Shape::new(1, 3, h, w);
        self.check_input(input, exit)?;
        let mut peak = PeakTracker::default();
        self.forward(&ShapeOnly, &input, exit, &mut peak)?;
        Ok(peak.peak)
    }

    /// The shared schedule behind [`Network::infer`] and
    /// [`Network::activation_footprint`]. Returns the sigmoid maps and the
    /// scaled maps, finest first.
    fn forward<B: Backend>(
        &self,
        backend: &B,
        input: &B::Buf,
        exit: ExitLevel,
        trace: &mut dyn BufferTrace,
    ) -> Result<LevelOutputs<B::Buf>> {
        let leaky = Activation::LeakyRelu(self.config.leaky_slope);
        let exit = exit.level();
        let depth = self.config.levels;
        trace.alloc(B::shape(input));

        let mut features: Vec<Option<B::Buf>> = Vec::with_capacity(depth);
        for (k, level) in self.levels.iter().enumerate() {
            let first = match k {
                0 => backend.conv(input, &level.encoder[0], 2, leaky)?,
                _ => backend.conv(features[k - 1].as_ref().expect("previous level kept"), &level.encoder[0], 2, leaky)?,
            };
            trace.alloc(B::shape(&first));
            if k == 0 {
                trace.free(B::shape(input));
            } else if k < exit {
                // Level k (1-based) lies above the exit; no decoder will read it.
                let spent = features[k - 1].take().expect("previous level kept");
                trace.free(B::shape(&spent));
            }
            let second = backend.conv(&first, &level.encoder[1], 1, leaky)?;
            trace.alloc(B::shape(&second));
            trace.free(B::shape(&first));
            drop(first);
            features.push(Some(second));
        }

        let mut maps = Vec::with_capacity(depth + 1 - exit);
        let mut scaled = Vec::with_capacity(depth + 1 - exit);
        let mut handoff: Option<B::Buf> = None;
        for level in (exit..=depth).rev() {
            let weights = &self.levels[level - 1];
            let encoded = features[level - 1].take().expect("encoder output kept for its decoder");
            let mut x = match handoff.take() {
                Some(up) => {
                    let joined = backend.concat(&encoded, &up)?;
                    trace.alloc(B::shape(&joined));
                    trace.free(B::shape(&encoded));
                    trace.free(B::shape(&up));
                    joined
                }
                None => encoded,
            };
            let last = weights.decoder.len() - 1;
            for (i, conv) in weights.decoder.iter().enumerate() {
                let act = if i == last { Activation::None } else { leaky };
                let y = backend.conv(&x, conv, 1, act)?;
                trace.alloc(B::shape(&y));
                trace.free(B::shape(&x));
                x = y;
            }

            let disp = backend.disparity(&x)?;
            trace.alloc(B::shape(&disp));
            let width = B::shape(&disp).w as f32;
            let pixels = backend.scale(&disp, self.config.disparity_scale * width);
            trace.alloc(B::shape(&pixels));
            maps.push(disp);
            scaled.push(pixels);

            if level > exit {
                let deconv = weights.deconv.as_ref().expect("levels above 1 carry a hand-off");
                let up = backend.deconv(&x, deconv, leaky)?;
                trace.alloc(B::shape(&up));
                handoff = Some(up);
            }
            trace.free(B::shape(&x));
        }
        maps.reverse();
        scaled.reverse();
        Ok((maps, scaled))
    }
}

/// Observer for buffer lifetimes during a forward pass.
pub trait BufferTrace {
    fn alloc(&mut self, shape: Shape);
    fn free(&mut self, shape: Shape);
}

struct NoTrace;

impl BufferTrace for NoTrace {
    fn alloc(&mut self, _: Shape) {}
    fn free(&mut self, _: Shape) {}
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BufferEvent {
    Alloc(Shape),
    Free(Shape),
}

impl BufferTrace for Vec<BufferEvent> {
    fn alloc(&mut self, shape: Shape) {
        self.push(BufferEvent::Alloc(shape));
    }

    fn free(&mut self, shape: Shape) {
        self.push(BufferEvent::Free(shape));
    }
}

#[derive(Default)]
struct PeakTracker {
    live: usize,
    peak: usize,
}

impl BufferTrace for PeakTracker {
    fn alloc(&mut self, shape: Shape) {
        self.live += shape.bytes();
        self.peak = self.peak.max(self.live);
    }

    fn free(&mut self, shape: Shape) {
        self.live -= shape.bytes();
    }
}

/// What the forward schedule needs from an executor.
/// Per-level sigmoid maps and scaled maps.
type LevelOutputs<T> = (Vec<T>, Vec<T>);

trait Backend {
    type Buf;
    fn shape(buf: &Self::Buf) -> Shape;
    fn conv(&self, x: &Self::Buf, w: &ConvWeights, stride: usize, act: Activation) -> Result<Self::Buf>;
    fn concat(&self, a: &Self::Buf, b: &Self::Buf) -> Result<Self::Buf>;
    fn deconv(&self, x: &Self::Buf, w: &ConvWeights, act: Activation) -> Result<Self::Buf>;
    /// Sigmoid of channel 0.
    fn disparity(&self, features: &Self::Buf) -> Result<Self::Buf>;
    fn scale(&self, x: &Self::Buf, factor: f32) -> Self::Buf;
}

struct Compute;

impl Backend for Compute {
    type Buf = Tensor;

    fn shape(buf: &Tensor) -> Shape {
        buf.shape()
    }

    fn conv(&self, x: &Tensor, w: &ConvWeights, stride: usize, act: Activation) -> Result<Tensor> {
        conv2d(x, w, stride, act)
    }

    fn concat(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        concat_channels(a, b)
    }

    fn deconv(&self, x: &Tensor, w: &ConvWeights, act: Activation) -> Result<Tensor> {
        let y = deconv2x2(x, w)?;
        let shape = y.shape();
        Ok(Tensor::from_parts_unchecked(shape, y.into_data().into_iter().map(|v| act.apply(v)).collect()))
    }

    fn disparity(&self, features: &Tensor) -> Result<Tensor> {
        Ok(Activation::Sigmoid.apply_tensor(&features.slice_channels(0, 1)?))
    }

    fn scale(&self, x: &Tensor, factor: f32) -> Tensor {
        x.map(|v| v * factor)
    }
}

struct ShapeOnly;

impl Backend for ShapeOnly {
    type Buf = Shape;

    fn shape(buf: &Shape) -> Shape {
        *buf
    }

    fn conv(&self, x: &Shape, w: &ConvWeights, stride: usize, _: Activation) -> Result<Shape> {
        if x.c != w.in_channels() {
            return Err(Error::shape("conv2d", w.in_channels(), x));
        }
        Ok(Shape::new(x.n, w.out_channels(), x.h.div_ceil(stride), x.w.div_ceil(stride)))
    }

    fn concat(&self, a: &Shape, b: &Shape) -> Result<Shape> {
        Ok(Shape::new(a.n, a.c + b.c, a.h, a.w))
    }

    fn deconv(&self, x: &Shape, w: &ConvWeights, _: Activation) -> Result<Shape> {
        Ok(Shape::new(x.n, w.out_channels(), 2 * x.h, 2 * x.w))
    }

    fn disparity(&self, features: &Shape) -> Result<Shape> {
        Ok(Shape::new(features.n, 1, features.h, features.w))
    }

    fn scale(&self, x: &Shape, _: f32) -> Shape {
        *x
    }
}
