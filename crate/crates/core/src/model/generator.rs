use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::nn::ConvSpec;
use crate::tensor::{Scalar, Tape, Var};

use super::params::{conv_specs, Bound, Init, ParamSpec};

pub const IMAGE_CHANNELS: usize = 3;

/// Inception branch kernels, in output channel order.
pub const INCEPTION_KERNELS: [(&str, usize, usize); 4] =
    [("b1x1", 1, 1), ("b1x3", 1, 3), ("b3x1", 3, 1), ("b3x3", 3, 3)];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub base_width: usize,
    pub num_stages: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            base_width: 64,
            num_stages: 4,
        }
    }
}

impl GeneratorConfig {
    pub fn new(base_width: usize, num_stages: usize) -> Result<Self> {
        let cfg = Self {
            base_width,
            num_stages,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_stages == 0 || self.num_stages > 16 {
            return Err(Error::Config(format!("num_stages must be in 1..=16, got {}", self.num_stages)));
        }
        if self.base_width == 0 || self.base_width % 4 != 0 {
            return Err(Error::Config(format!(
                "base_width must be a positive multiple of 4 (inception branches), got {}",
                self.base_width
            )));
        }
        Ok(())
    }

    /// Channel width of stage `s`: `base_width · 2^s`.
    pub fn width(&self, s: usize) -> usize {
        self.base_width << s
    }

    /// Spatial sizes must be divisible by this.
    pub fn divisor(&self) -> usize {
        1 << self.num_stages
    }

    pub fn check_input(&self, h: usize, w: usize) -> Result<()> {
        let d = self.divisor();
        if h == 0 || w == 0 || h % d != 0 || w % d != 0 {
            return Err(shape_err!(
                "generator input {h}×{w} must be divisible by {d} ({} stages)",
                self.num_stages
            ));
        }
        Ok(())
    }

    pub fn param_specs(&self) -> Vec<ParamSpec> {
        let mut out = Vec::new();
        let mut cin = IMAGE_CHANNELS;
        for s in 0..self.num_stages {
            let w = self.width(s);
            let p = format!("gen.enc.{s}");
            out.extend(hidden_conv_specs(&format!("{p}.std.conv1"), [w, cin, 3, 3]));
            out.extend(hidden_conv_specs(&format!("{p}.std.conv2"), [w, w, 3, 3]));
            out.extend(inception_specs(&format!("{p}.inc"), cin, w));
            cin = w;
        }
        for s in (0..self.num_stages).rev() {
            let w = self.width(s);
            let p = format!("gen.dec.{s}");
            out.extend(hidden_conv_specs(&format!("{p}.conv1"), [w, cin, 3, 3]));
            out.extend(hidden_conv_specs(&format!("{p}.conv2"), [w, w, 3, 3]));
            // Small upsampling kernels start each decoder stage as a pass-through
            // of its skip; deeper paths grow in as they learn.
            out.extend(conv_specs(&format!("{p}.up"), [w, w, 2, 2], w, Init::SMALL));
            cin = w;
        }
        // Small output kernels start the sigmoid near 0.5.
        out.extend(conv_specs("gen.out", [IMAGE_CHANNELS, cin, 1, 1], IMAGE_CHANNELS, Init::SMALL));
        out
    }
}

/// Specs of a conv followed by ReLU. The generator has no normalization
/// layers, so its kernels are scaled to preserve activation variance.
fn hidden_conv_specs(prefix: &str, w_shape: [usize; 4]) -> [ParamSpec; 2] {
    let [cout, cin, kh, kw] = w_shape;
    conv_specs(prefix, w_shape, cout, Init::he(cin * kh * kw))
}

/// Parameter specs of an inception block `cin → cout` named `prefix`.
pub fn inception_specs(prefix: &str, cin: usize, cout: usize) -> Vec<ParamSpec> {
    let q = cout / 4;
    INCEPTION_KERNELS
        .iter()
        .flat_map(|&(name, kh, kw)| hidden_conv_specs(&format!("{prefix}.{name}"), [q, cin, kh, kw]))
        .collect()
}

fn conv<T: Scalar>(tape: &mut Tape<T>, p: &Bound, name: &str, x: Var, spec: &ConvSpec) -> Result<Var> {
    let (w, b) = (p.get(&format!("{name}.w"))?, p.get(&format!("{name}.b"))?);
    tape.conv2d(x, w, b, spec)
}

fn conv_relu<T: Scalar>(tape: &mut Tape<T>, p: &Bound, name: &str, x: Var, cout: usize) -> Result<Var> {
    let spec = ConvSpec::same(tape.shape(x)[1], cout, 3, 3);
    let y = conv(tape, p, name, x, &spec)?;
    Ok(tape.relu(y))
}

/// Four size-preserving convs (1×1, 1×3, 3×1, 3×3), each `cout/4` wide and
/// followed by ReLU, concatenated along channels in that order.
pub fn inception_block<T: Scalar>(
    tape: &mut Tape<T>,
    p: &Bound,
    prefix: &str,
    x: Var,
    cout: usize,
) -> Result<Var> {
    if cout == 0 || cout % 4 != 0 {
        return Err(Error::Config(format!("inception width {cout} is not divisible by 4")));
    }
    let cin = tape.shape(x)[1];
    let mut branches = Vec::with_capacity(4);
    for &(name, kh, kw) in &INCEPTION_KERNELS {
        let spec = ConvSpec::same(cin, cout / 4, kh, kw);
        let y = conv(tape, p, &format!("{prefix}.{name}"), x, &spec)?;
        branches.push(tape.relu(y));
    }
    tape.concat_channels(&branches)
}

/// Runs the encoder. Returns the bottleneck and the pre-pool fused feature
/// of every stage, shallowest first.
pub fn encoder_forward<T: Scalar>(
    tape: &mut Tape<T>,
    p: &Bound,
    cfg: &GeneratorConfig,
    x: Var,
) -> Result<(Var, Vec<Var>)> {
    cfg.validate()?;
    let [_, c, h, w] = tape.value(x).dims4()?;
    if c != IMAGE_CHANNELS {
        return Err(shape_err!("generator expects {IMAGE_CHANNELS} channels, got {c}"));
    }
    cfg.check_input(h, w)?;
    let mut cur = x;
    let mut skips = Vec::with_capacity(cfg.num_stages);
    for s in 0..cfg.num_stages {
        let width = cfg.width(s);
        let pre = format!("gen.enc.{s}");
        let a = conv_relu(tape, p, &format!("{pre}.std.conv1"), cur, width)?;
        let a = conv_relu(tape, p, &format!("{pre}.std.conv2"), a, width)?;
        let b = inception_block(tape, p, &format!("{pre}.inc"), cur, width)?;
        let fused = tape.add(a, b)?;
        skips.push(fused);
        cur = tape.maxpool2d(fused, 2, 2)?;
    }
    Ok((cur, skips))
}

/// Runs the decoder from the bottleneck, consuming `skips` deepest first.
pub fn decoder_forward<T: Scalar>(
    tape: &mut Tape<T>,
    p: &Bound,
    cfg: &GeneratorConfig,
    bottleneck: Var,
    skips: &[Var],
) -> Result<Var> {
    if skips.len() != cfg.num_stages {
        return Err(shape_err!("decoder needs {} skips, got {}", cfg.num_stages, skips.len()));
    }
    let mut cur = bottleneck;
    for s in (0..cfg.num_stages).rev() {
        let width = cfg.width(s);
        let pre = format!("gen.dec.{s}");
        let a = conv_relu(tape, p, &format!("{pre}.conv1"), cur, width)?;
        let a = conv_relu(tape, p, &format!("{pre}.conv2"), a, width)?;
        let spec = ConvSpec::new(width, width, 2, 2).stride(2);
        let (w, b) = (p.get(&format!("{pre}.up.w"))?, p.get(&format!("{pre}.up.b"))?);
        let up = tape.conv_transpose2d(a, w, b, &spec)?;
        if tape.shape(up) != tape.shape(skips[s]) {
            return Err(shape_err!(
                "skip {s} has shape {:?}, upsampled feature {:?}",
                tape.shape(skips[s]),
                tape.shape(up)
            ));
        }
        cur = tape.add(up, skips[s])?;
    }
    let spec = ConvSpec::new(tape.shape(cur)[1], IMAGE_CHANNELS, 1, 1);
    let y = conv(tape, p, "gen.out", cur, &spec)?;
    Ok(tape.sigmoid(y))
}

/// `x: [N, 3, H, W]` in [0,1] → dehazed `[N, 3, H, W]` in [0,1].
pub fn generator_forward<T: Scalar>(
    tape: &mut Tape<T>,
    p: &Bound,
    cfg: &GeneratorConfig,
    x: Var,
) -> Result<Var> {
    let (bottleneck, skips) = encoder_forward(tape, p, cfg, x)?;
    decoder_forward(tape, p, cfg, bottleneck, &skips)
}
