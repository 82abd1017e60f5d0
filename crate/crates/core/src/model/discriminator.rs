use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::nn::{BatchNormState, ConvSpec};
use crate::tensor::{Scalar, Tape, Var};

use super::generator::IMAGE_CHANNELS;
use super::params::{conv_specs, Bound, Init, ParamSpec};

pub const DISC_BLOCKS: usize = 6;
pub const LEAKY_SLOPE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscriminatorConfig {
    pub base_width: usize,
    pub strides: [usize; DISC_BLOCKS],
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        Self {
            base_width: 64,
            strides: [2, 2, 2, 2, 1, 1],
        }
    }
}

impl DiscriminatorConfig {
    pub fn with_width(base_width: usize) -> Self {
        Self {
            base_width,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.base_width == 0 {
            return Err(Error::Config("discriminator base_width must be positive".into()));
        }
        if let Some(s) = self.strides.iter().find(|&&s| s != 1 && s != 2) {
            return Err(Error::Config(format!("discriminator strides must be 1 or 2, got {s}")));
        }
        Ok(())
    }

    /// Channel width of block `i`: `base_width · 2^min(i, 3)`.
    pub fn width(&self, i: usize) -> usize {
        self.base_width << i.min(3)
    }

    /// Stride-2 blocks use 4×4 kernels with padding 1 (exact halving);
    /// stride-1 blocks use 3×3 with padding 1 (size preserving).
    pub fn block_spec(&self, i: usize, cin: usize) -> ConvSpec {
        let k = if self.strides[i] == 2 { 4 } else { 3 };
        ConvSpec::new(cin, self.width(i), k, k)
            .stride(self.strides[i])
            .padding(1, 1)
    }

    /// Smallest admissible input extent.
    pub fn min_input(&self) -> usize {
        1 << self.strides.iter().filter(|&&s| s == 2).count()
    }

    pub fn norm_name(i: usize) -> String {
        format!("disc.{i}.bn")
    }

    pub fn param_specs(&self) -> Vec<ParamSpec> {
        let mut out = Vec::new();
        let mut cin = IMAGE_CHANNELS;
        for i in 0..DISC_BLOCKS {
            let spec = self.block_spec(i, cin);
            let w = spec.out_channels;
            out.extend(conv_specs(
                &format!("disc.{i}.conv"),
                [w, cin, spec.kernel_h, spec.kernel_w],
                w,
                Init::SMALL,
            ));
            if i > 0 {
                let bn = Self::norm_name(i);
                out.push(ParamSpec::new(format!("{bn}.gamma"), &[w], Init::Ones));
                out.push(ParamSpec::new(format!("{bn}.beta"), &[w], Init::Zeros));
            }
            cin = w;
        }
        out.extend(conv_specs("disc.out", [1, cin, 1, 1], 1, Init::SMALL));
        out
    }

    /// Fresh running statistics for every normalized block.
    pub fn norm_states<T: Scalar>(&self) -> BTreeMap<String, BatchNormState<T>> {
        (1..DISC_BLOCKS)
            .map(|i| (Self::norm_name(i), BatchNormState::new(self.width(i))))
            .collect()
    }
}

/// Patch logits `[N, 1, h, w]` for images `x: [N, 3, H, W]`. Each block is
/// conv, leaky ReLU, then batch norm (block 0 has no norm).
pub fn discriminator_forward<T: Scalar>(
    tape: &mut Tape<T>,
    p: &Bound,
    norms: &mut BTreeMap<String, BatchNormState<T>>,
    cfg: &DiscriminatorConfig,
    x: Var,
) -> Result<Var> {
    cfg.validate()?;
    let [_, c, h, w] = tape.value(x).dims4()?;
    if c != IMAGE_CHANNELS {
        return Err(shape_err!("discriminator expects {IMAGE_CHANNELS} channels, got {c}"));
    }
    if h.min(w) < cfg.min_input() {
        return Err(shape_err!(
            "discriminator input {h}×{w} is smaller than {}",
            cfg.min_input()
        ));
    }
    let mut cur = x;
    for i in 0..DISC_BLOCKS {
        let spec = cfg.block_spec(i, tape.shape(cur)[1]);
        let (cw, cb) = (p.get(&format!("disc.{i}.conv.w"))?, p.get(&format!("disc.{i}.conv.b"))?);
        let y = tape.conv2d(cur, cw, cb, &spec)?;
        cur = tape.leaky_relu(y, LEAKY_SLOPE)?;
        if i > 0 {
            let bn = DiscriminatorConfig::norm_name(i);
            let state = norms
                .get_mut(&bn)
                .ok_or_else(|| Error::Config(format!("missing running statistics {bn}")))?;
            let (g, b) = (p.get(&format!("{bn}.gamma"))?, p.get(&format!("{bn}.beta"))?);
            cur = tape.batchnorm2d(cur, g, b, state)?;
        }
    }
    let spec = ConvSpec::new(tape.shape(cur)[1], 1, 1, 1);
    let (ow, ob) = (p.get("disc.out.w")?, p.get("disc.out.b")?);
    tape.conv2d(cur, ow, ob, &spec)
}
