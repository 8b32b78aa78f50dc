//! Sinogram U-Net: four contracting blocks, a two-convolution bottleneck and
//! seven expanding blocks that quadruple the angle axis.
//!
//! ```text
//! enc1..enc4   [conv3x3+ReLU] x2, skip, avgpool2x2      base x {1,2,4,8} channels
//! mid          [conv3x3+ReLU] x2                         bottleneck channels
//! dec1..dec4   convT 2x2 stride (2,2), concat skip, [conv3x3+ReLU] x2
//! dec5..dec6   convT 2x2 stride (2,1), [conv3x3+ReLU] x2  base channels
//! head         conv1x1 -> 1 channel, linear
//! ```
//!
//! The first four up-samplings restore the contracting resolutions so every
//! skip lines up; the last two double only the angle axis, giving
//! `A -> 4A` views at unchanged detector width. All 3x3 convolutions use zero
//! padding, so any input with both extents divisible by 16 is accepted.

use std::path::Path;

use crate::error::{Error, Result};
use crate::io::{self, ByteReader};
use crate::nn::{Parameter, Tape, Tensor, Var};
use crate::rng::{self, Stream};

/// Architecture hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UNetConfig {
    pub base_channels: usize,
    /// Number of contracting blocks; only 4 is supported.
    pub depth: usize,
    /// Number of expanding blocks; only 7 is supported.
    pub up_blocks: usize,
    pub in_angles: usize,
    pub out_angles: usize,
    pub detector_bins: usize,
    pub bottleneck_channels: usize,
}

impl Default for UNetConfig {
    fn default() -> Self {
        Self {
            base_channels: 32,
            depth: 4,
            up_blocks: 7,
            in_angles: 32,
            out_angles: 128,
            detector_bins: 128,
            bottleneck_channels: 512,
        }
    }
}

impl UNetConfig {
    /// Half-width variant for desk-scale training.
    pub fn reduced() -> Self {
        Self::with_base(16)
    }

    /// Default geometry with `base` channels and a `16 * base` bottleneck.
    pub fn with_base(base: usize) -> Self {
        Self {
            base_channels: base,
            bottleneck_channels: 16 * base,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.base_channels == 0 || self.bottleneck_channels == 0 {
            return Err(Error::Config("channel counts must be positive".to_owned()));
        }
        if self.depth != 4 || self.up_blocks != 7 {
            return Err(Error::Config(format!(
                "only 4 contracting and 7 expanding blocks are supported, got {} and {}",
                self.depth, self.up_blocks
            )));
        }
        if self.out_angles != 4 * self.in_angles {
            return Err(Error::Config(format!(
                "output views ({}) must be four times the input views ({})",
                self.out_angles, self.in_angles
            )));
        }
        check_divisible("unet config", "angles", self.in_angles)?;
        check_divisible("unet config", "detector bins", self.detector_bins)?;
        Ok(())
    }

    /// Channels of contracting block `i` (0-based).
    pub fn level_channels(&self, i: usize) -> usize {
        self.base_channels << i
    }
}

fn check_divisible(op: &'static str, axis: &'static str, extent: usize) -> Result<()> {
    if extent == 0 || !extent.is_multiple_of(16) {
        return Err(Error::Divisibility {
            op,
            axis,
            extent,
            divisor: 16,
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Conv3x3,
    Conv1x1,
    ConvTranspose { stride: (usize, usize) },
}

/// One weight layer in topological order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
    pub c_in: usize,
    pub c_out: usize,
}

impl LayerSpec {
    fn new(name: impl Into<String>, kind: LayerKind, c_in: usize, c_out: usize) -> Self {
        Self {
            name: name.into(),
            kind,
            c_in,
            c_out,
        }
    }

    pub fn kernel_shape(&self) -> [usize; 4] {
        match self.kind {
            LayerKind::Conv3x3 => [self.c_out, self.c_in, 3, 3],
            LayerKind::Conv1x1 => [self.c_out, self.c_in, 1, 1],
            LayerKind::ConvTranspose { .. } => [self.c_in, self.c_out, 2, 2],
        }
    }

    /// Inputs feeding one output value, used for He scaling.
    pub fn fan_in(&self) -> usize {
        match self.kind {
            LayerKind::Conv3x3 => self.c_in * 9,
            LayerKind::Conv1x1 => self.c_in,
            LayerKind::ConvTranspose { stride } => self.c_in * (2 / stride.0) * (2 / stride.1),
        }
    }
}

/// Layer table for a configuration.
pub fn layer_specs(cfg: &UNetConfig) -> Vec<LayerSpec> {
    use LayerKind::*;
    let mut layers = Vec::new();
    let mut c = 1;
    for i in 0..4 {
        let ch = cfg.level_channels(i);
        layers.push(LayerSpec::new(format!("enc{}.conv1", i + 1), Conv3x3, c, ch));
        layers.push(LayerSpec::new(format!("enc{}.conv2", i + 1), Conv3x3, ch, ch));
        c = ch;
    }
    let mid = cfg.bottleneck_channels;
    layers.push(LayerSpec::new("mid.conv1", Conv3x3, c, mid));
    layers.push(LayerSpec::new("mid.conv2", Conv3x3, mid, mid));
    c = mid;
    for j in 0..4 {
        let ch = cfg.level_channels(3 - j);
        let b = j + 1;
        layers.push(LayerSpec::new(format!("dec{b}.up"), ConvTranspose { stride: (2, 2) }, c, ch));
        layers.push(LayerSpec::new(format!("dec{b}.conv1"), Conv3x3, 2 * ch, ch));
        layers.push(LayerSpec::new(format!("dec{b}.conv2"), Conv3x3, ch, ch));
        c = ch;
    }
    for b in 5..=6 {
        let ch = cfg.base_channels;
        layers.push(LayerSpec::new(format!("dec{b}.up"), ConvTranspose { stride: (2, 1) }, c, ch));
        layers.push(LayerSpec::new(format!("dec{b}.conv1"), Conv3x3, ch, ch));
        layers.push(LayerSpec::new(format!("dec{b}.conv2"), Conv3x3, ch, ch));
        c = ch;
    }
    layers.push(LayerSpec::new("head", Conv1x1, c, 1));
    layers
}

/// Output of a recorded forward pass.
#[derive(Debug)]
pub struct Trace {
    pub output: Var,
    /// Parameter leaves, in the order of [`UNet::params`].
    pub params: Vec<Var>,
    /// Skip tensors from enc1 to enc4.
    pub skips: Vec<Var>,
}

/// Per-sinogram input scaling recorded in checkpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Normalization {
    /// Input and target are divided by the maximum of the input sinogram.
    InputMax = 1,
}

#[derive(Debug, Clone)]
pub struct UNet {
    config: UNetConfig,
    layers: Vec<LayerSpec>,
    params: Vec<Parameter<f32>>,
}

impl UNet {
    /// Builds the network with He-uniform kernels and zero biases drawn from
    /// the weight-init stream of `seed`.
    pub fn new(config: UNetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let layers = layer_specs(&config);
        let mut rng = Stream::new(seed, rng::INIT_STREAM);
        let mut params = Vec::with_capacity(layers.len() * 2);
        for l in &layers {
            params.push(Parameter::he_uniform(
                format!("{}.weight", l.name),
                &l.kernel_shape(),
                l.fan_in(),
                &mut rng,
            ));
            params.push(Parameter::zeros(format!("{}.bias", l.name), &[l.c_out]));
        }
        Ok(Self {
            config,
            layers,
            params,
        })
    }

    pub fn config(&self) -> &UNetConfig {
        &self.config
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn params(&self) -> &[Parameter<f32>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Parameter<f32>] {
        &mut self.params
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Checks an input shape against the divisibility rule.
    pub fn check_input(shape: &[usize]) -> Result<()> {
        match shape {
            [_, 1, a, d] => {
                check_divisible("unet forward", "angles", *a)?;
                check_divisible("unet forward", "detector bins", *d)
            }
            _ => Err(Error::Shape {
                op: "unet forward",
                lhs: format!("{shape:?}"),
                rhs: "[B, 1, angles, bins]".to_owned(),
            }),
        }
    }

    /// Records a forward pass of `input` (`[B, 1, A, D]`) on `tape`.
    /// Parameters are added as leaves that require gradients iff `train`.
    pub fn forward_tape(&self, tape: &mut Tape<f32>, input: Var, train: bool) -> Result<Trace> {
        Self::check_input(tape.value(input).shape())?;
        let params: Vec<Var> = self.params.iter().map(|p| tape.leaf(p.value.clone(), train)).collect();
        let mut layer = 0usize;
        let mut next = |tape: &mut Tape<f32>, x: Var| -> Result<Var> {
            let (w, b) = (params[2 * layer], params[2 * layer + 1]);
            let spec = &self.layers[layer];
            layer += 1;
            match spec.kind {
                LayerKind::Conv3x3 => {
                    let y = tape.conv2d(x, w, b)?;
                    Ok(tape.relu(y))
                }
                LayerKind::Conv1x1 => tape.conv2d(x, w, b),
                LayerKind::ConvTranspose { stride } => tape.conv_transpose2d(x, w, b, stride),
            }
        };

        let mut x = input;
        let mut skips = Vec::with_capacity(4);
        for _ in 0..4 {
            x = next(tape, x)?;
            x = next(tape, x)?;
            skips.push(x);
            x = tape.avgpool2x2(x)?;
        }
        x = next(tape, x)?;
        x = next(tape, x)?;
        for j in 0..4 {
            x = next(tape, x)?;
            x = tape.concat_channels(x, skips[3 - j])?;
            x = next(tape, x)?;
            x = next(tape, x)?;
        }
        for _ in 0..2 {
            x = next(tape, x)?;
            x = next(tape, x)?;
            x = next(tape, x)?;
        }
        let output = next(tape, x)?;
        Ok(Trace { output, params, skips })
    }

    /// Network output without the inference clamp.
    pub fn forward_linear(&self, input: &Tensor<f32>) -> Result<Tensor<f32>> {
        let mut tape = Tape::new();
        let x = tape.leaf(input.clone(), false);
        let trace = self.forward_tape(&mut tape, x, false)?;
        Ok(tape.value(trace.output).clone())
    }

    /// Inference: `[B, 1, A, D] -> [B, 1, 4A, D]`, negatives clamped to 0.
    pub fn forward(&self, input: &Tensor<f32>) -> Result<Tensor<f32>> {
        Ok(self.forward_linear(input)?.map(|v| v.max(0.0)))
    }

    /// Adds gradients for every parameter from a finished backward pass.
    pub fn set_grads(&mut self, trace: &Trace, grads: &mut crate::nn::Gradients<f32>) -> Result<()> {
        for (p, &v) in self.params.iter_mut().zip(&trace.params) {
            let g = grads.take(v).ok_or_else(|| Error::MissingGradient(p.name.clone()))?;
            p.grad = Some(g);
        }
        Ok(())
    }

    // -----------------------------------------------------------------------
    // checkpoints

    pub const MAGIC: &'static [u8; 7] = b"SPTCKPT";
    pub const VERSION: u8 = 1;

    /// Serialises configuration, normalisation mode and all parameters in
    /// topological order (little-endian).
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + self.parameter_count() * 4);
        out.extend_from_slice(Self::MAGIC);
        out.push(Self::VERSION);
        let c = &self.config;
        for v in [
            c.base_channels,
            c.depth,
            c.up_blocks,
            c.in_angles,
            c.out_angles,
            c.detector_bins,
            c.bottleneck_channels,
        ] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        out.push(Normalization::InputMax as u8);
        out.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for p in &self.params {
            out.extend_from_slice(&(p.name.len() as u16).to_le_bytes());
            out.extend_from_slice(p.name.as_bytes());
            out.push(p.value.shape().len() as u8);
            for &d in p.value.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            io::push_f32s(&mut out, p.value.data());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes, "checkpoint");
        let magic = r.take(7)?;
        if magic != Self::MAGIC {
            return Err(Error::BadMagic {
                expected: String::from_utf8_lossy(Self::MAGIC).into_owned(),
                found: String::from_utf8_lossy(magic).into_owned(),
            });
        }
        let version = r.u8()?;
        if version != Self::VERSION {
            return Err(Error::Version {
                expected: format!("checkpoint v{}", Self::VERSION),
                found: format!("checkpoint v{version}"),
            });
        }
        let mut f = [0usize; 7];
        for v in f.iter_mut() {
            *v = r.u32()? as usize;
        }
        let config = UNetConfig {
            base_channels: f[0],
            depth: f[1],
            up_blocks: f[2],
            in_angles: f[3],
            out_angles: f[4],
            detector_bins: f[5],
            bottleneck_channels: f[6],
        };
        config
            .validate()
            .map_err(|e| Error::CheckpointMismatch(format!("embedded configuration is invalid: {e}")))?;
        let norm_offset = r.offset();
        let norm = r.u8()?;
        if norm != Normalization::InputMax as u8 {
            return Err(Error::Malformed {
                what: "checkpoint",
                offset: norm_offset,
                detail: format!("unknown normalisation mode {norm}"),
            });
        }
        let mut model = UNet::new(config, 0)?;
        let count = r.u32()? as usize;
        if count != model.params.len() {
            return Err(Error::CheckpointMismatch(format!(
                "expected {} parameter tensors, found {count}",
                model.params.len()
            )));
        }
        for p in model.params.iter_mut() {
            let len = r.u16()? as usize;
            let name = String::from_utf8_lossy(r.take(len)?).into_owned();
            if name != p.name {
                return Err(Error::CheckpointMismatch(format!("expected `{}`, found `{name}`", p.name)));
            }
            let ndim = r.u8()? as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(r.u32()? as usize);
            }
            if shape != p.value.shape() {
                return Err(Error::CheckpointMismatch(format!(
                    "`{name}` has shape {shape:?}, configuration needs {:?}",
                    p.value.shape()
                )));
            }
            let data = r.f32s(p.value.len())?;
            *p = Parameter::new(name, Tensor::new(&shape, data)?);
        }
        if r.remaining() != 0 {
            return Err(Error::Malformed {
                what: "checkpoint",
                offset: r.offset(),
                detail: format!("{} trailing bytes", r.remaining()),
            });
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        io::write_file(path.as_ref(), &self.to_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&io::read_file(path.as_ref())?)
    }
}
