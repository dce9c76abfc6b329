//! Closed-form attention cost model.
//!
//! Costs count multiply-accumulates of the dominant attention terms. Plain
//! attention is two `N × N × D` products, so `cost_vanilla = 2·N²·D`. Every
//! other variant is expressed as `2·c·N²·D` for its coefficient `c`, which
//! makes its reduction factor exactly `1 / c`. Matching overhead is charged at
//! the equal-groups worst case `N²/4` per matched set. Softmax and unmerge
//! costs are not modeled.

use std::fmt;

use serde::Serialize;

use crate::attention::AttentionVariant;
use crate::encoder::{ModelConfig, FFN_EXPANSION};
use crate::merge::lambda_from_rate;
use crate::Result;

/// `2·N²·D`
pub fn cost_vanilla(n: u64, d: u64) -> f64 {
    2.0 * (n as f64) * (n as f64) * d as f64
}

/// Keys/values reduced by a stride-`R` convolution: `2·N²·D / R²`.
pub fn cost_sra(n: u64, d: u64, sr_ratio: u64) -> f64 {
    cost_vanilla(n, d) / sra_factor(sr_ratio)
}

pub fn sra_factor(sr_ratio: u64) -> f64 {
    (sr_ratio * sr_ratio) as f64
}

/// Single merge map at rate `r` plus matching overhead:
/// `2·(λ⁻² + 1/4)·N²·D`.
pub fn cost_tome_sd(n: u64, d: u64, rate: f64) -> Result<f64> {
    Ok(cost_vanilla(n, d) * tome_sd_coefficient(lambda_from_rate(rate)?))
}

pub fn tome_sd_coefficient(lambda: f64) -> f64 {
    lambda.powi(-2) + 0.25
}

/// `(λ⁻² + 1/4)⁻¹`
pub fn tome_sd_factor(rate: f64) -> Result<f64> {
    Ok(1.0 / tome_sd_coefficient(lambda_from_rate(rate)?))
}

/// Spatial reduction, then separate merging of queries and keys/values, with
/// matching overhead `N²/4` for queries and `N²/(4R⁴)` for keys/values.
pub fn cost_segformerpp(n: u64, d: u64, sr_ratio: u64, r_q: f64, r_kv: f64) -> Result<f64> {
    let c = segformerpp_coefficient(sr_ratio, lambda_from_rate(r_q)?, lambda_from_rate(r_kv)?);
    Ok(cost_vanilla(n, d) * c)
}

/// `1/(λ_kv·λ_q·R²) + 0.25·(1 + R⁴)/R⁴`
pub fn segformerpp_coefficient(sr_ratio: u64, lambda_q: f64, lambda_kv: f64) -> f64 {
    let r2 = (sr_ratio * sr_ratio) as f64;
    let r4 = r2 * r2;
    1.0 / (lambda_kv * lambda_q * r2) + 0.25 * (1.0 + r4) / r4
}

pub fn segformerpp_factor(sr_ratio: u64, r_q: f64, r_kv: f64) -> Result<f64> {
    Ok(1.0 / segformerpp_coefficient(sr_ratio, lambda_from_rate(r_q)?, lambda_from_rate(r_kv)?))
}

/// Pooled queries (`N/4`) against reduced keys (`N/R²`): `2·N²·D / (4R²)`.
/// No matching overhead.
pub fn cost_neighbor2d(n: u64, d: u64, sr_ratio: u64) -> f64 {
    cost_vanilla(n, d) / (4.0 * sra_factor(sr_ratio))
}

/// Dominant-term MACs of one attention call for `variant`.
pub fn attention_cost(
    variant: AttentionVariant,
    n: u64,
    d: u64,
    sr_ratio: u64,
    r_q: f64,
    r_kv: f64,
) -> Result<f64> {
    Ok(match variant {
        AttentionVariant::Vanilla => cost_vanilla(n, d),
        AttentionVariant::Sra => cost_sra(n, d, sr_ratio),
        AttentionVariant::TomeSd => cost_tome_sd(n, d, r_q)?,
        AttentionVariant::Neighbor2d => cost_neighbor2d(n, d, sr_ratio),
        AttentionVariant::Segformerpp => cost_segformerpp(n, d, sr_ratio, r_q, r_kv)?,
    })
}

/// Reduction of the attention products alone (no matching overhead):
/// the ratio of `N_q · N_kv` between vanilla and `variant`.
pub fn product_reduction(
    variant: AttentionVariant,
    sr_ratio: u64,
    r_q: f64,
    r_kv: f64,
) -> Result<f64> {
    let r2 = sra_factor(sr_ratio);
    Ok(match variant {
        AttentionVariant::Vanilla => 1.0,
        AttentionVariant::Sra => r2,
        AttentionVariant::TomeSd => lambda_from_rate(r_q)?.powi(2),
        AttentionVariant::Neighbor2d => 4.0 * r2,
        AttentionVariant::Segformerpp => lambda_from_rate(r_q)? * lambda_from_rate(r_kv)? * r2,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageCost {
    pub stage: usize,
    pub n_tokens: u64,
    pub dim: u64,
    pub depth: u64,
    pub sr_ratio: u64,
    pub r_q: f64,
    pub r_kv: f64,
    /// Dominant attention MACs over all blocks of the stage:
    /// `attention_macs + matching_macs`.
    pub dominant_macs: f64,
    /// The two attention products alone.
    pub attention_macs: f64,
    /// Charged similarity-scoring overhead.
    pub matching_macs: f64,
    /// Same stage with plain attention.
    pub vanilla_macs: f64,
    pub reduction_factor: f64,
    /// Projections, convolutions and FFN; excluded from the factor.
    pub linear_macs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostReport {
    pub variant: AttentionVariant,
    pub height: usize,
    pub width: usize,
    /// Tokens entering stage 1.
    pub n_tokens: u64,
    /// Stage-1 embedding dim.
    pub dim: u64,
    pub dominant_macs: f64,
    pub vanilla_macs: f64,
    /// `vanilla_macs / dominant_macs`
    pub reduction_factor: f64,
    pub linear_macs: f64,
    pub per_stage: Vec<StageCost>,
}

fn linear_macs(
    variant: AttentionVariant,
    n: f64,
    d: f64,
    sr: f64,
    r_q: f64,
    r_kv: f64,
) -> Result<f64> {
    let lq = lambda_from_rate(r_q)?;
    let lkv = lambda_from_rate(r_kv)?;
    let (queries, kv) = match variant {
        AttentionVariant::Vanilla => (n, n),
        AttentionVariant::Sra => (n, n / (sr * sr)),
        AttentionVariant::TomeSd => (n / lq, n / lq),
        AttentionVariant::Neighbor2d => (n / 4.0, n / (sr * sr)),
        AttentionVariant::Segformerpp => (n / lq, n / (lkv * sr * sr)),
    };
    let reduction = if variant.uses_spatial_reduction() && sr > 1.0 {
        n * d * d
    } else {
        0.0
    };
    let hidden = FFN_EXPANSION as f64 * d;
    let ffn = 2.0 * n * d * hidden + n * hidden * 9.0;
    Ok(2.0 * queries * d * d + 2.0 * kv * d * d + reduction + ffn)
}

/// Sums per-block dominant attention terms over the four-stage pyramid of an
/// `H × W` input and compares with the all-vanilla baseline.
pub fn model_cost(config: &ModelConfig, height: usize, width: usize) -> Result<CostReport> {
    config.validate()?;
    config.check_input(height, width)?;
    let dims = ModelConfig::stage_dims(height, width);
    let mut per_stage = Vec::with_capacity(dims.len());
    for (i, (spec, (h, w))) in config.stages.iter().zip(dims).enumerate() {
        let n = (h * w) as u64;
        let d = spec.channels as u64;
        let depth = spec.depth as u64;
        let sr = spec.sr_ratio as u64;
        let per_block = attention_cost(config.variant, n, d, sr, spec.r_q, spec.r_kv)?;
        let dominant = per_block * depth as f64;
        let vanilla = cost_vanilla(n, d) * depth as f64;
        let products = vanilla / product_reduction(config.variant, sr, spec.r_q, spec.r_kv)?;
        let linear = linear_macs(
            config.variant,
            n as f64,
            d as f64,
            sr as f64,
            spec.r_q,
            spec.r_kv,
        )? * depth as f64;
        per_stage.push(StageCost {
            stage: i + 1,
            n_tokens: n,
            dim: d,
            depth,
            sr_ratio: sr,
            r_q: spec.r_q,
            r_kv: spec.r_kv,
            dominant_macs: dominant,
            attention_macs: products,
            matching_macs: dominant - products,
            vanilla_macs: vanilla,
            reduction_factor: vanilla / dominant,
            linear_macs: linear,
        });
    }
    let dominant: f64 = per_stage.iter().map(|s| s.dominant_macs).sum();
    let vanilla: f64 = per_stage.iter().map(|s| s.vanilla_macs).sum();
    Ok(CostReport {
        variant: config.variant,
        height,
        width,
        n_tokens: per_stage[0].n_tokens,
        dim: per_stage[0].dim,
        dominant_macs: dominant,
        vanilla_macs: vanilla,
        reduction_factor: vanilla / dominant,
        linear_macs: per_stage.iter().map(|s| s.linear_macs).sum(),
        per_stage,
    })
}

impl fmt::Display for CostReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "variant: {}", self.variant.name())?;
        writeln!(f, "input: {}x{}", self.height, self.width)?;
        writeln!(f, "n_tokens: {}", self.n_tokens)?;
        writeln!(f, "dim: {}", self.dim)?;
        writeln!(f, "dominant_macs: {:.0}", self.dominant_macs)?;
        writeln!(f, "vanilla_macs: {:.0}", self.vanilla_macs)?;
        writeln!(f, "reduction_factor: {:.4}", self.reduction_factor)?;
        writeln!(
            f,
            "linear_macs: {:.0}  (excluded from reduction_factor)",
            self.linear_macs
        )?;
        writeln!(f, "note: softmax and unmerge costs are not modeled")?;
        writeln!(f, "per_stage:")?;
        writeln!(
            f,
            "  {:>5} {:>8} {:>5} {:>5} {:>3} {:>5} {:>5} {:>16} {:>16} {:>9} {:>16}",
            "stage",
            "tokens",
            "dim",
            "depth",
            "R",
            "r_q",
            "r_kv",
            "dominant_macs",
            "vanilla_macs",
            "factor",
            "linear_macs"
        )?;
        for s in &self.per_stage {
            writeln!(
                f,
                "  {:>5} {:>8} {:>5} {:>5} {:>3} {:>5.2} {:>5.2} {:>16.0} {:>16.0} {:>9.4} {:>16.0}",
                s.stage,
                s.n_tokens,
                s.dim,
                s.depth,
                s.sr_ratio,
                s.r_q,
                s.r_kv,
                s.dominant_macs,
                s.vanilla_macs,
                s.reduction_factor,
                s.linear_macs
            )?;
        }
        Ok(())
    }
}
