//! Four-stage hierarchical encoder with a lightweight all-MLP decode head.
//!
//! Stage `i` (1-based) produces a `H/2^{i+1} × W/2^{i+1} × D_i` map: an
//! overlapping 7×7/stride-4 patch embedding feeds stage 1 and a 3×3/stride-2
//! convolution feeds every later stage. Each stage runs `depth` pre-norm
//! blocks of attention + MixFFN with residuals, then a final layer norm.
//! There is no positional encoding; the depthwise conv inside MixFFN is the
//! only source of spatial position.

use serde::{Deserialize, Serialize};

use crate::attention::{attention, AttentionConfig, AttentionVariant, AttentionWeights};
use crate::grid::TokenGrid;
use crate::merge::{MergePolicy, Similarity};
use crate::nn::{Conv2d, Init, LayerNorm, Linear, Visitor, WeightSource};
use crate::tensor::{self, MacCounter, Tensor};
use crate::{Error, Result};

/// Input height and width must be multiples of this.
pub const INPUT_MULTIPLE: usize = 64;
pub const NUM_STAGES: usize = 4;
/// Hidden-width multiplier of MixFFN.
pub const FFN_EXPANSION: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageSpec {
    pub channels: usize,
    pub depth: usize,
    pub heads: usize,
    pub sr_ratio: usize,
    pub r_q: f64,
    pub r_kv: f64,
}

/// Per-stage `(r_q, r_kv)` tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RatePreset {
    /// Merge keys/values in the two high-resolution stages, queries in the
    /// two low-resolution ones; mild rates.
    Hq,
    /// Same layout, aggressive rates.
    Fast,
}

impl RatePreset {
    pub fn rates(self) -> [(f64, f64); NUM_STAGES] {
        match self {
            RatePreset::Hq => [(0.0, 0.6), (0.0, 0.6), (0.8, 0.0), (0.8, 0.0)],
            RatePreset::Fast => [(0.0, 0.9), (0.0, 0.9), (0.9, 0.0), (0.9, 0.0)],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RatePreset::Hq => "hq",
            RatePreset::Fast => "fast",
        }
    }
}

impl std::str::FromStr for RatePreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hq" => Ok(RatePreset::Hq),
            "fast" => Ok(RatePreset::Fast),
            _ => Err(Error::Config(format!(
                "unknown rate preset '{s}' (expected hq or fast)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub stages: Vec<StageSpec>,
    pub variant: AttentionVariant,
    pub num_classes: usize,
    pub decoder_dim: usize,
    pub in_channels: usize,
    #[serde(default)]
    pub proportional_attention: bool,
    #[serde(default)]
    pub similarity: Similarity,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::toy()
    }
}

impl ModelConfig {
    /// Small four-stage configuration: channels `[32, 64, 160, 256]`, two
    /// blocks per stage, heads `[1, 2, 5, 8]`, reduction ratios `[8, 4, 2, 1]`,
    /// plain spatial-reduction attention.
    pub fn toy() -> Self {
        let channels = [32, 64, 160, 256];
        let heads = [1, 2, 5, 8];
        let sr = [8, 4, 2, 1];
        Self {
            stages: (0..NUM_STAGES)
                .map(|i| StageSpec {
                    channels: channels[i],
                    depth: 2,
                    heads: heads[i],
                    sr_ratio: sr[i],
                    r_q: 0.0,
                    r_kv: 0.0,
                })
                .collect(),
            variant: AttentionVariant::Sra,
            num_classes: 19,
            decoder_dim: 64,
            in_channels: 3,
            proportional_attention: false,
            similarity: Similarity::Dot,
        }
    }

    pub fn with_variant(mut self, variant: AttentionVariant) -> Self {
        self.variant = variant;
        self
    }

    /// Switches to merged attention with the preset's per-stage rates.
    pub fn with_preset(mut self, preset: RatePreset) -> Self {
        self.variant = AttentionVariant::Segformerpp;
        self.set_rates(preset.rates());
        self
    }

    pub fn with_rates(mut self, rates: [(f64, f64); NUM_STAGES]) -> Self {
        self.set_rates(rates);
        self
    }

    fn set_rates(&mut self, rates: [(f64, f64); NUM_STAGES]) {
        for (s, (q, kv)) in self.stages.iter_mut().zip(rates) {
            s.r_q = q;
            s.r_kv = kv;
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.stages.len() != NUM_STAGES {
            return Err(Error::Config(format!(
                "expected {NUM_STAGES} stages, got {}",
                self.stages.len()
            )));
        }
        if self.num_classes == 0 || self.decoder_dim == 0 || self.in_channels == 0 {
            return Err(Error::Config(
                "num_classes, decoder_dim and in_channels must be positive".into(),
            ));
        }
        for (i, s) in self.stages.iter().enumerate() {
            let stage = i + 1;
            if s.channels == 0 || s.depth == 0 || s.heads == 0 || s.sr_ratio == 0 {
                return Err(Error::Config(format!(
                    "stage {stage}: all sizes must be positive"
                )));
            }
            if s.channels % s.heads != 0 {
                return Err(Error::Config(format!(
                    "stage {stage}: {} channels not divisible by {} heads",
                    s.channels, s.heads
                )));
            }
            for r in [s.r_q, s.r_kv] {
                MergePolicy::new(r).map_err(|e| Error::Config(format!("stage {stage}: {e}")))?;
            }
            if self.variant == AttentionVariant::TomeSd && s.r_q != s.r_kv {
                return Err(Error::Config(format!(
                    "stage {stage}: tome_sd needs r_q == r_kv, got {} and {}",
                    s.r_q, s.r_kv
                )));
            }
        }
        Ok(())
    }

    /// Rejects inputs the pyramid cannot halve cleanly.
    pub fn check_input(&self, height: usize, width: usize) -> Result<()> {
        if height == 0
            || width == 0
            || !height.is_multiple_of(INPUT_MULTIPLE)
            || !width.is_multiple_of(INPUT_MULTIPLE)
        {
            return Err(Error::shape(
                "encoder",
                format!("input {height}x{width} must be a positive multiple of {INPUT_MULTIPLE}"),
            ));
        }
        Ok(())
    }

    /// Spatial dims of each stage output: `(H / 2^{i+1}, W / 2^{i+1})`.
    pub fn stage_dims(height: usize, width: usize) -> [(usize, usize); NUM_STAGES] {
        std::array::from_fn(|i| (height >> (i + 2), width >> (i + 2)))
    }

    pub fn attention_config(&self, stage: usize) -> AttentionConfig {
        let s = &self.stages[stage];
        AttentionConfig {
            heads: s.heads,
            sr_ratio: s.sr_ratio,
            r_q: s.r_q,
            r_kv: s.r_kv,
            variant: self.variant,
            proportional_attention: self.proportional_attention,
            similarity: self.similarity,
        }
    }

    /// True when both configs produce identically shaped weights.
    pub fn same_weight_layout(&self, other: &ModelConfig) -> bool {
        self.num_classes == other.num_classes
            && self.decoder_dim == other.decoder_dim
            && self.in_channels == other.in_channels
            && self.stages.len() == other.stages.len()
            && self.stages.iter().zip(&other.stages).all(|(a, b)| {
                a.channels == b.channels && a.depth == b.depth && a.sr_ratio == b.sr_ratio
            })
    }
}

/// Overlapping patch embedding: strided conv followed by layer norm.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchEmbed {
    pub conv: Conv2d,
    pub norm: LayerNorm,
}

impl PatchEmbed {
    #[allow(clippy::too_many_arguments)]
    fn build(
        src: &mut dyn WeightSource,
        prefix: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Result<Self> {
        Ok(Self {
            conv: Conv2d::build(
                src,
                &format!("{prefix}.conv"),
                c_in,
                c_out,
                kernel,
                stride,
                padding,
            )?,
            norm: LayerNorm::build(src, &format!("{prefix}.norm"), c_out)?,
        })
    }

    fn visit(&self, prefix: &str, f: &mut Visitor<'_>) {
        self.conv.visit(&format!("{prefix}.conv"), f);
        self.norm.visit(&format!("{prefix}.norm"), f);
    }

    fn apply(&self, x: &Tensor) -> Result<TokenGrid> {
        let y = self.conv.forward(x)?;
        TokenGrid::from_tensor(self.norm.forward(&y)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixFfn {
    pub fc1: Linear,
    /// `[3, 3, 4D]`
    pub dw_weight: Tensor,
    pub dw_bias: Tensor,
    pub fc2: Linear,
}

impl MixFfn {
    fn build(src: &mut dyn WeightSource, prefix: &str, dim: usize) -> Result<Self> {
        let hidden = dim * FFN_EXPANSION;
        Ok(Self {
            fc1: Linear::build(src, &format!("{prefix}.fc1"), dim, hidden)?,
            dw_weight: src.tensor(
                &format!("{prefix}.dwconv.weight"),
                &[3, 3, hidden],
                Init::FanIn { fan_in: 9 },
            )?,
            dw_bias: src.tensor(&format!("{prefix}.dwconv.bias"), &[hidden], Init::Zeros)?,
            fc2: Linear::build(src, &format!("{prefix}.fc2"), hidden, dim)?,
        })
    }

    fn visit(&self, prefix: &str, f: &mut Visitor<'_>) {
        self.fc1.visit(&format!("{prefix}.fc1"), f);
        f(format!("{prefix}.dwconv.weight"), &self.dw_weight);
        f(format!("{prefix}.dwconv.bias"), &self.dw_bias);
        self.fc2.visit(&format!("{prefix}.fc2"), f);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub norm1: LayerNorm,
    pub attn: AttentionWeights,
    pub norm2: LayerNorm,
    pub ffn: MixFfn,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage {
    pub embed: PatchEmbed,
    pub blocks: Vec<Block>,
    pub norm: LayerNorm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeHead {
    /// One projection per stage onto the shared decoder width.
    pub proj: Vec<Linear>,
    pub fuse: Linear,
    pub classifier: Linear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    config: ModelConfig,
    pub stages: Vec<Stage>,
    pub head: DecodeHead,
}

impl Model {
    /// Constructs every parameter through `src`, in a fixed order.
    pub fn build(config: ModelConfig, src: &mut dyn WeightSource) -> Result<Self> {
        config.validate()?;
        let mut stages = Vec::with_capacity(NUM_STAGES);
        let mut c_in = config.in_channels;
        for (i, spec) in config.stages.iter().enumerate() {
            let p = format!("stages.{i}");
            let embed = if i == 0 {
                PatchEmbed::build(src, &format!("{p}.embed"), c_in, spec.channels, 7, 4, 3)?
            } else {
                PatchEmbed::build(src, &format!("{p}.embed"), c_in, spec.channels, 3, 2, 1)?
            };
            let mut blocks = Vec::with_capacity(spec.depth);
            for b in 0..spec.depth {
                let bp = format!("{p}.blocks.{b}");
                blocks.push(Block {
                    norm1: LayerNorm::build(src, &format!("{bp}.norm1"), spec.channels)?,
                    attn: AttentionWeights::build(
                        src,
                        &format!("{bp}.attn"),
                        spec.channels,
                        spec.sr_ratio,
                    )?,
                    norm2: LayerNorm::build(src, &format!("{bp}.norm2"), spec.channels)?,
                    ffn: MixFfn::build(src, &format!("{bp}.ffn"), spec.channels)?,
                });
            }
            let norm = LayerNorm::build(src, &format!("{p}.norm"), spec.channels)?;
            stages.push(Stage {
                embed,
                blocks,
                norm,
            });
            c_in = spec.channels;
        }
        let e = config.decoder_dim;
        let proj = config
            .stages
            .iter()
            .enumerate()
            .map(|(i, s)| Linear::build(src, &format!("head.proj.{i}"), s.channels, e))
            .collect::<Result<Vec<_>>>()?;
        let head = DecodeHead {
            proj,
            fuse: Linear::build(src, "head.fuse", NUM_STAGES * e, e)?,
            classifier: Linear::build(src, "head.classifier", e, config.num_classes)?,
        };
        Ok(Self {
            config,
            stages,
            head,
        })
    }

    /// Visits every parameter in the same order [`Model::build`] requests them.
    pub fn visit(&self, f: &mut Visitor<'_>) {
        for (i, stage) in self.stages.iter().enumerate() {
            let p = format!("stages.{i}");
            stage.embed.visit(&format!("{p}.embed"), f);
            for (b, block) in stage.blocks.iter().enumerate() {
                let bp = format!("{p}.blocks.{b}");
                block.norm1.visit(&format!("{bp}.norm1"), f);
                block.attn.visit(&format!("{bp}.attn"), f);
                block.norm2.visit(&format!("{bp}.norm2"), f);
                block.ffn.visit(&format!("{bp}.ffn"), f);
            }
            stage.norm.visit(&format!("{p}.norm"), f);
        }
        for (i, p) in self.head.proj.iter().enumerate() {
            p.visit(&format!("head.proj.{i}"), f);
        }
        self.head.fuse.visit("head.fuse", f);
        self.head.classifier.visit("head.classifier", f);
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Same weights under a different attention setup.
    pub fn with_config(mut self, config: ModelConfig) -> Result<Self> {
        config.validate()?;
        if !self.config.same_weight_layout(&config) {
            return Err(Error::Config(
                "new config changes the weight layout (channels, depths, sr ratios or head sizes)"
                    .into(),
            ));
        }
        self.config = config;
        Ok(self)
    }

    pub fn num_parameters(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_, t| n += t.len());
        n
    }

    /// Runs the four stages and returns the feature pyramid.
    pub fn encoder_forward(&self, image: &Tensor) -> Result<Vec<TokenGrid>> {
        self.encoder_forward_profiled(image).map(|(p, _)| p)
    }

    /// [`Model::encoder_forward`] plus the MACs each stage issued on this thread.
    pub fn encoder_forward_profiled(
        &self,
        image: &Tensor,
    ) -> Result<(Vec<TokenGrid>, Vec<MacCounter>)> {
        let mut pyramid: Vec<TokenGrid> = Vec::with_capacity(NUM_STAGES);
        let mut macs = Vec::with_capacity(NUM_STAGES);
        for (i, stage) in self.stages.iter().enumerate() {
            let (out, m) = MacCounter::measure(|| -> Result<TokenGrid> {
                let mut x = match pyramid.last() {
                    None => patch_embed(image, &stage.embed)?,
                    Some(prev) => downsample_stage(prev, &stage.embed)?,
                };
                let cfg = self.config.attention_config(i);
                for block in &stage.blocks {
                    x = block_forward(&x, block, &cfg)?;
                }
                TokenGrid::from_tensor(stage.norm.forward(x.as_tensor())?)
            });
            pyramid.push(out?);
            macs.push(m);
        }
        Ok((pyramid, macs))
    }

    /// Encoder followed by the decode head: logits at 1/4 input resolution.
    pub fn forward(&self, image: &Tensor) -> Result<Tensor> {
        let pyramid = self.encoder_forward(image)?;
        decode_head(&pyramid, &self.head)
    }
}

/// Stage-1 embedding of an `[H, W, C]` image: 7×7 conv, stride 4, padding 3,
/// then layer norm. `H` and `W` must be multiples of 64.
pub fn patch_embed(image: &Tensor, embed: &PatchEmbed) -> Result<TokenGrid> {
    let (h, w, _) = image.dims3("patch_embed")?;
    if h % INPUT_MULTIPLE != 0 || w % INPUT_MULTIPLE != 0 {
        return Err(Error::shape(
            "patch_embed",
            format!("input {h}x{w} must be a multiple of {INPUT_MULTIPLE}"),
        ));
    }
    embed.apply(image)
}

/// Halves the grid between stages: 3×3 conv, stride 2, padding 1, layer norm.
pub fn downsample_stage(grid: &TokenGrid, embed: &PatchEmbed) -> Result<TokenGrid> {
    if !grid.rows().is_multiple_of(2) || !grid.cols().is_multiple_of(2) {
        return Err(Error::shape(
            "downsample_stage",
            format!("grid {}x{} has an odd dimension", grid.rows(), grid.cols()),
        ));
    }
    embed.apply(grid.as_tensor())
}

/// `fc2(gelu(dwconv3x3(fc1(x))))`. The caller adds the residual.
pub fn mix_ffn(x: &TokenGrid, w: &MixFfn) -> Result<TokenGrid> {
    let h = w.fc1.forward(x.as_tensor())?;
    let h = tensor::depthwise_conv2d(&h, &w.dw_weight, Some(&w.dw_bias), 1, 1)?;
    let h = tensor::gelu(&h);
    TokenGrid::from_tensor(w.fc2.forward(&h)?)
}

fn block_forward(x: &TokenGrid, block: &Block, cfg: &AttentionConfig) -> Result<TokenGrid> {
    let h = TokenGrid::from_tensor(block.norm1.forward(x.as_tensor())?)?;
    let a = attention(&h, &block.attn, cfg)?;
    let x = tensor::add(x.as_tensor(), a.as_tensor())?;
    let h = TokenGrid::from_tensor(block.norm2.forward(&x)?)?;
    let f = mix_ffn(&h, &block.ffn)?;
    TokenGrid::from_tensor(tensor::add(&x, f.as_tensor())?)
}

/// Projects each pyramid level to the decoder width, resizes to the stage-1
/// grid, concatenates (coarsest first), fuses with a 1×1 conv + ReLU and
/// classifies per pixel.
pub fn decode_head(pyramid: &[TokenGrid], head: &DecodeHead) -> Result<Tensor> {
    if pyramid.len() != head.proj.len() || pyramid.is_empty() {
        return Err(Error::shape(
            "decode_head",
            format!(
                "{} pyramid levels for {} projections",
                pyramid.len(),
                head.proj.len()
            ),
        ));
    }
    let (h, w) = (pyramid[0].rows(), pyramid[0].cols());
    let mut levels = Vec::with_capacity(pyramid.len());
    for (grid, proj) in pyramid.iter().zip(&head.proj).rev() {
        let p = proj.forward(grid.as_tensor())?;
        levels.push(tensor::bilinear_resize(&p, h, w)?);
    }
    let refs: Vec<&Tensor> = levels.iter().collect();
    let fused = tensor::relu(&head.fuse.forward(&tensor::concat_channels(&refs)?)?);
    head.classifier.forward(&fused)
}
