//! Attention blocks mapping a [`TokenGrid`] to a grid of identical shape.
//!
//! | variant        | queries            | keys / values                   |
//! |----------------|--------------------|---------------------------------|
//! | `vanilla`      | `N`                | `N`                             |
//! | `sra`          | `N`                | `N / R²` (strided conv)         |
//! | `tome_sd`      | `N / λ`            | `N / λ` (same merge map)        |
//! | `neighbor2d`   | `N / 4` (2×2 pool) | `N / R²`                        |
//! | `segformerpp`  | `N / λ_q`          | `N / (λ_kv · R²)`               |
//!
//! Merged or pooled outputs are scattered back to full resolution after the
//! output projection.

use std::sync::atomic::{AtomicBool, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::grid::TokenGrid;
use crate::merge::{self, bipartite_soft_matching, MergeMap, MergePolicy, Similarity};
use crate::nn::{Conv2d, LayerNorm, Linear, Visitor, WeightSource};
use crate::tensor::kernels::{axpy, dot, softmax_in_place};
use crate::tensor::{avgpool2d, record_macs_as, MacKind, Tensor};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttentionVariant {
    Vanilla,
    Sra,
    TomeSd,
    Neighbor2d,
    Segformerpp,
}

impl AttentionVariant {
    pub const ALL: [AttentionVariant; 5] = [
        AttentionVariant::Vanilla,
        AttentionVariant::Sra,
        AttentionVariant::TomeSd,
        AttentionVariant::Neighbor2d,
        AttentionVariant::Segformerpp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AttentionVariant::Vanilla => "vanilla",
            AttentionVariant::Sra => "sra",
            AttentionVariant::TomeSd => "tome_sd",
            AttentionVariant::Neighbor2d => "neighbor2d",
            AttentionVariant::Segformerpp => "segformerpp",
        }
    }

    /// Whether the variant runs keys/values through the strided reduction.
    pub fn uses_spatial_reduction(self) -> bool {
        matches!(
            self,
            AttentionVariant::Sra | AttentionVariant::Neighbor2d | AttentionVariant::Segformerpp
        )
    }
}

impl std::str::FromStr for AttentionVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown attention variant '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttentionConfig {
    pub heads: usize,
    /// Spatial-reduction stride `R`.
    pub sr_ratio: usize,
    /// Query merge rate.
    pub r_q: f64,
    /// Key/value merge rate.
    pub r_kv: f64,
    pub variant: AttentionVariant,
    /// Offset each key's logit by `ln(group size)`.
    #[serde(default)]
    pub proportional_attention: bool,
    #[serde(default)]
    pub similarity: Similarity,
}

impl AttentionConfig {
    pub fn new(variant: AttentionVariant, heads: usize) -> Self {
        Self {
            heads,
            sr_ratio: 1,
            r_q: 0.0,
            r_kv: 0.0,
            variant,
            proportional_attention: false,
            similarity: Similarity::Dot,
        }
    }

    pub fn with_sr_ratio(mut self, r: usize) -> Self {
        self.sr_ratio = r;
        self
    }

    pub fn with_rates(mut self, r_q: f64, r_kv: f64) -> Self {
        self.r_q = r_q;
        self.r_kv = r_kv;
        self
    }

    pub fn with_proportional_attention(mut self, on: bool) -> Self {
        self.proportional_attention = on;
        self
    }

    pub fn with_similarity(mut self, s: Similarity) -> Self {
        self.similarity = s;
        self
    }

    fn policy(&self, rate: f64) -> Result<MergePolicy> {
        Ok(MergePolicy::new(rate)?.with_similarity(self.similarity))
    }

    fn check_heads(&self, dim: usize) -> Result<usize> {
        if self.heads == 0 || !dim.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "embedding dim {dim} is not divisible by {} heads",
                self.heads
            )));
        }
        Ok(dim / self.heads)
    }
}

/// Strided-conv reduction of the key/value source map.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialReduction {
    pub conv: Conv2d,
    pub norm: LayerNorm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionWeights {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub proj: Linear,
    /// Present iff the block was built with `sr_ratio > 1`.
    pub reduction: Option<SpatialReduction>,
}

impl AttentionWeights {
    pub fn build(
        src: &mut dyn WeightSource,
        prefix: &str,
        dim: usize,
        sr_ratio: usize,
    ) -> Result<Self> {
        let query = Linear::build(src, &format!("{prefix}.query"), dim, dim)?;
        let key = Linear::build(src, &format!("{prefix}.key"), dim, dim)?;
        let value = Linear::build(src, &format!("{prefix}.value"), dim, dim)?;
        let proj = Linear::build(src, &format!("{prefix}.proj"), dim, dim)?;
        let reduction = if sr_ratio > 1 {
            Some(SpatialReduction {
                conv: Conv2d::build(
                    src,
                    &format!("{prefix}.sr"),
                    dim,
                    dim,
                    sr_ratio,
                    sr_ratio,
                    0,
                )?,
                norm: LayerNorm::build(src, &format!("{prefix}.sr_norm"), dim)?,
            })
        } else {
            None
        };
        Ok(Self {
            query,
            key,
            value,
            proj,
            reduction,
        })
    }

    pub fn visit(&self, prefix: &str, f: &mut Visitor<'_>) {
        self.query.visit(&format!("{prefix}.query"), f);
        self.key.visit(&format!("{prefix}.key"), f);
        self.value.visit(&format!("{prefix}.value"), f);
        self.proj.visit(&format!("{prefix}.proj"), f);
        if let Some(sr) = &self.reduction {
            sr.conv.visit(&format!("{prefix}.sr"), f);
            sr.norm.visit(&format!("{prefix}.sr_norm"), f);
        }
    }

    pub fn dim(&self) -> usize {
        self.query.bias.len()
    }
}

/// Token counts that actually entered the attention product.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttentionTrace {
    pub queries: usize,
    pub keys: usize,
}

/// Runs the variant selected by `cfg.variant`.
pub fn attention(x: &TokenGrid, w: &AttentionWeights, cfg: &AttentionConfig) -> Result<TokenGrid> {
    attention_traced(x, w, cfg).map(|(y, _)| y)
}

/// Like [`attention`], also reporting the query/key counts used.
pub fn attention_traced(
    x: &TokenGrid,
    w: &AttentionWeights,
    cfg: &AttentionConfig,
) -> Result<(TokenGrid, AttentionTrace)> {
    match cfg.variant {
        AttentionVariant::Vanilla => vanilla(x, w, cfg),
        AttentionVariant::Sra => sra(x, w, cfg),
        AttentionVariant::TomeSd => tome_sd(x, w, cfg),
        AttentionVariant::Neighbor2d => neighbor2d(x, w, cfg),
        AttentionVariant::Segformerpp => segformerpp(x, w, cfg),
    }
}

/// Full multi-head attention over all `N` tokens.
pub fn vanilla_attention(
    x: &TokenGrid,
    w: &AttentionWeights,
    cfg: &AttentionConfig,
) -> Result<TokenGrid> {
    vanilla(x, w, cfg).map(|(y, _)| y)
}

/// Keys and values from a stride-`R` convolution of the map; queries untouched.
pub fn sra_attention(
    x: &TokenGrid,
    w: &AttentionWeights,
    cfg: &AttentionConfig,
) -> Result<TokenGrid> {
    sra(x, w, cfg).map(|(y, _)| y)
}

/// One merge map on the input, shared by queries, keys and values.
pub fn tome_sd_attention(
    x: &TokenGrid,
    w: &AttentionWeights,
    cfg: &AttentionConfig,
) -> Result<TokenGrid> {
    tome_sd(x, w, cfg).map(|(y, _)| y)
}

/// Spatially reduced keys/values; queries 2×2 average-pooled, outputs copied
/// back to each 2×2 block.
pub fn neighbor2d_attention(
    x: &TokenGrid,
    w: &AttentionWeights,
    cfg: &AttentionConfig,
) -> Result<TokenGrid> {
    neighbor2d(x, w, cfg).map(|(y, _)| y)
}

/// Spatial reduction followed by merging of keys/values, with a separate
/// merge map for the full-resolution queries.
pub fn segformerpp_attention(
    x: &TokenGrid,
    w: &AttentionWeights,
    cfg: &AttentionConfig,
) -> Result<TokenGrid> {
    segformerpp(x, w, cfg).map(|(y, _)| y)
}

type Traced = Result<(TokenGrid, AttentionTrace)>;

fn vanilla(x: &TokenGrid, w: &AttentionWeights, cfg: &AttentionConfig) -> Traced {
    let tokens = x.to_tokens();
    let out = attend(&tokens, &tokens, None, w, cfg)?;
    let trace = AttentionTrace {
        queries: x.num_tokens(),
        keys: x.num_tokens(),
    };
    Ok((TokenGrid::from_tokens(x.rows(), x.cols(), out)?, trace))
}

fn sra(x: &TokenGrid, w: &AttentionWeights, cfg: &AttentionConfig) -> Traced {
    let kv = reduce_kv(x, w, cfg.sr_ratio)?.to_tokens();
    let out = attend(&x.to_tokens(), &kv, None, w, cfg)?;
    let trace = AttentionTrace {
        queries: x.num_tokens(),
        keys: kv.as_matrix().0,
    };
    Ok((TokenGrid::from_tokens(x.rows(), x.cols(), out)?, trace))
}

fn tome_sd(x: &TokenGrid, w: &AttentionWeights, cfg: &AttentionConfig) -> Traced {
    if cfg.r_q != cfg.r_kv {
        return Err(Error::Config(format!(
            "tome_sd uses a single rate, got r_q={} and r_kv={}",
            cfg.r_q, cfg.r_kv
        )));
    }
    let map = bipartite_soft_matching(x, &cfg.policy(cfg.r_q)?)?;
    let merged = merged_tokens(x, &map)?;
    let bias = key_bias(&map, cfg);
    let out = attend(&merged, &merged, bias.as_deref(), w, cfg)?;
    let trace = AttentionTrace {
        queries: map.n_merged(),
        keys: map.n_merged(),
    };
    Ok((scatter(x, out, &map)?, trace))
}

fn neighbor2d(x: &TokenGrid, w: &AttentionWeights, cfg: &AttentionConfig) -> Traced {
    let (rows, cols) = (x.rows(), x.cols());
    if rows % 2 != 0 || cols % 2 != 0 {
        return Err(Error::shape(
            "neighbor2d_attention",
            format!("grid {rows}x{cols} is not divisible by 2"),
        ));
    }
    let kv = reduce_kv(x, w, cfg.sr_ratio)?.to_tokens();
    let pooled = avgpool2d(x.as_tensor())?;
    let (pr, pc) = (rows / 2, cols / 2);
    let queries = pooled.reshape([pr * pc, x.channels()])?;
    let out = attend(&queries, &kv, None, w, cfg)?;
    let c = x.channels();
    let mut data = vec![0.0f32; rows * cols * c];
    for (i, dst) in data.chunks_exact_mut(c).enumerate() {
        let (r, cc) = (i / cols, i % cols);
        dst.copy_from_slice(out.row((r / 2) * pc + cc / 2));
    }
    let trace = AttentionTrace {
        queries: pr * pc,
        keys: kv.as_matrix().0,
    };
    Ok((TokenGrid::new(rows, cols, c, data)?, trace))
}

fn segformerpp(x: &TokenGrid, w: &AttentionWeights, cfg: &AttentionConfig) -> Traced {
    let kv_grid = reduce_kv(x, w, cfg.sr_ratio)?;
    let kv_map = bipartite_soft_matching(&kv_grid, &cfg.policy(cfg.r_kv)?)?;
    let kv = merged_tokens(&kv_grid, &kv_map)?;
    let q_map = bipartite_soft_matching(x, &cfg.policy(cfg.r_q)?)?;
    let queries = merged_tokens(x, &q_map)?;
    let bias = key_bias(&kv_map, cfg);
    let out = attend(&queries, &kv, bias.as_deref(), w, cfg)?;
    let trace = AttentionTrace {
        queries: q_map.n_merged(),
        keys: kv_map.n_merged(),
    };
    Ok((scatter(x, out, &q_map)?, trace))
}

fn merged_tokens(x: &TokenGrid, map: &MergeMap) -> Result<Tensor> {
    let tokens = x.to_tokens();
    if map.is_identity() {
        Ok(tokens)
    } else {
        merge::merge(&tokens, map)
    }
}

fn scatter(x: &TokenGrid, out: Tensor, map: &MergeMap) -> Result<TokenGrid> {
    let full = if map.is_identity() {
        out
    } else {
        merge::unmerge(&out, map)?
    };
    TokenGrid::from_tokens(x.rows(), x.cols(), full)
}

fn key_bias(map: &MergeMap, cfg: &AttentionConfig) -> Option<Vec<f32>> {
    (cfg.proportional_attention && !map.is_identity()).then(|| map.log_sizes())
}

/// Strided conv + layer norm on the key/value source. `R = 1` is a no-op.
fn reduce_kv(x: &TokenGrid, w: &AttentionWeights, ratio: usize) -> Result<TokenGrid> {
    if ratio == 0 {
        return Err(Error::Config("sr_ratio must be >= 1".into()));
    }
    if ratio == 1 {
        return Ok(x.clone());
    }
    if !x.rows().is_multiple_of(ratio) || !x.cols().is_multiple_of(ratio) {
        return Err(Error::shape(
            "spatial_reduction",
            format!(
                "grid {}x{} is not divisible by R={ratio}",
                x.rows(),
                x.cols()
            ),
        ));
    }
    let sr = w.reduction.as_ref().ok_or_else(|| {
        Error::Config(format!(
            "sr_ratio {ratio} requested but block has no reduction weights"
        ))
    })?;
    let k = sr.conv.weight.shape()[0];
    if k != ratio {
        return Err(Error::Config(format!(
            "reduction weights have kernel {k}, config asks for R={ratio}"
        )));
    }
    let reduced = sr.conv.forward(x.as_tensor())?;
    TokenGrid::from_tensor(sr.norm.forward(&reduced)?)
}

/// Projects queries/keys/values, runs multi-head attention, projects out.
fn attend(
    q_src: &Tensor,
    kv_src: &Tensor,
    key_bias: Option<&[f32]>,
    w: &AttentionWeights,
    cfg: &AttentionConfig,
) -> Result<Tensor> {
    let dim = w.dim();
    cfg.check_heads(dim)?;
    let q = w.query.forward(q_src)?;
    let k = w.key.forward(kv_src)?;
    let v = w.value.forward(kv_src)?;
    let o = multi_head(&q, &k, &v, cfg.heads, key_bias)?;
    w.proj.forward(&o)
}

fn split_heads(t: &Tensor, heads: usize) -> Vec<Vec<f32>> {
    let (n, dim) = t.as_matrix();
    let d = dim / heads;
    (0..heads)
        .map(|h| {
            let mut out = Vec::with_capacity(n * d);
            for i in 0..n {
                out.extend_from_slice(&t.row(i)[h * d..(h + 1) * d]);
            }
            out
        })
        .collect()
}

/// `softmax(Q Kᵀ / √d + bias) V` per head. Query rows are independent, so the
/// result is the same whether rows run sequentially or on a thread pool.
fn multi_head(
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    heads: usize,
    key_bias: Option<&[f32]>,
) -> Result<Tensor> {
    let (nq, dim) = q.as_matrix();
    let (nk, _) = k.as_matrix();
    let d = dim / heads;
    let scale = 1.0 / (d as f32).sqrt();
    let (qh, kh, vh) = (
        split_heads(q, heads),
        split_heads(k, heads),
        split_heads(v, heads),
    );
    let saw_nan = AtomicBool::new(false);
    let mut out = vec![0.0f32; nq * dim];
    out.par_chunks_mut(dim)
        .with_min_len(8)
        .enumerate()
        .for_each_init(
            || vec![0.0f32; nk],
            |scores, (i, orow)| {
                for h in 0..heads {
                    let qi = &qh[h][i * d..(i + 1) * d];
                    let keys = &kh[h];
                    for (j, s) in scores.iter_mut().enumerate() {
                        *s = dot(qi, &keys[j * d..(j + 1) * d]) * scale;
                    }
                    if let Some(b) = key_bias {
                        for (s, &bj) in scores.iter_mut().zip(b) {
                            *s += bj;
                        }
                    }
                    if !softmax_in_place(scores) {
                        saw_nan.store(true, Ordering::Relaxed);
                    }
                    let o = &mut orow[h * d..(h + 1) * d];
                    let vals = &vh[h];
                    for (j, &p) in scores.iter().enumerate() {
                        axpy(o, p, &vals[j * d..(j + 1) * d]);
                    }
                }
            },
        );
    record_macs_as(MacKind::Attention, (2 * nq * nk * dim) as u64);
    if saw_nan.into_inner() {
        return Err(Error::NonFinite("attention softmax"));
    }
    Tensor::new([nq, dim], out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::random_tensor;
    use crate::io::RandomInit;
    use crate::tensor::MacCounter;

    fn weights(dim: usize, sr: usize, seed: u64) -> AttentionWeights {
        let mut src = RandomInit::new(seed).with_std_override(0.3);
        AttentionWeights::build(&mut src, "attn", dim, sr).unwrap()
    }

    fn input(rows: usize, cols: usize, dim: usize, seed: u64) -> TokenGrid {
        TokenGrid::from_tensor(random_tensor(&[rows, cols, dim], seed).unwrap()).unwrap()
    }

    #[test]
    fn single_token_returns_value_projection() {
        let w = weights(4, 1, 1);
        let x = input(1, 1, 4, 2);
        let cfg = AttentionConfig::new(AttentionVariant::Vanilla, 2);
        let y = vanilla_attention(&x, &w, &cfg).unwrap();
        let v = w.value.forward(&x.to_tokens()).unwrap();
        let expected = w.proj.forward(&v).unwrap();
        assert!(y.to_tokens().max_abs_diff(&expected) < 1e-6);
    }

    #[test]
    fn vanilla_is_permutation_equivariant() {
        let w = weights(8, 1, 3);
        let x = input(1, 6, 8, 4);
        let perm = [4usize, 0, 5, 2, 1, 3];
        let px: Vec<f32> = perm.iter().flat_map(|&p| x.token(p).to_vec()).collect();
        let xp = TokenGrid::new(1, 6, 8, px).unwrap();
        let cfg = AttentionConfig::new(AttentionVariant::Vanilla, 2);
        let y = vanilla_attention(&x, &w, &cfg).unwrap();
        let yp = vanilla_attention(&xp, &w, &cfg).unwrap();
        for (k, &p) in perm.iter().enumerate() {
            for (a, b) in yp.token(k).iter().zip(y.token(p)) {
                assert!((a - b).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn vanilla_attention_macs() {
        let w = weights(8, 1, 5);
        let x = input(4, 4, 8, 6);
        let cfg = AttentionConfig::new(AttentionVariant::Vanilla, 2);
        let (_, m) = MacCounter::measure(|| vanilla_attention(&x, &w, &cfg).unwrap());
        assert_eq!(m.attention, 2 * 16 * 16 * 8);
        assert_eq!(m.similarity, 0);
    }

    #[test]
    fn sra_key_count_and_mac_ratio() {
        let w = weights(4, 8, 7);
        let x = input(64, 64, 4, 8);
        let cfg = AttentionConfig::new(AttentionVariant::Sra, 1).with_sr_ratio(8);
        let ((_, trace), m) = MacCounter::measure(|| attention_traced(&x, &w, &cfg).unwrap());
        assert_eq!(trace.keys, 64);
        assert_eq!(trace.queries, 4096);
        assert_eq!(m.attention, 2 * 4096 * 4096 * 4 / 64);
    }

    #[test]
    fn sra_rejects_indivisible_grid() {
        let w = weights(4, 4, 9);
        let x = input(6, 8, 4, 10);
        let cfg = AttentionConfig::new(AttentionVariant::Sra, 1).with_sr_ratio(4);
        assert!(matches!(
            sra_attention(&x, &w, &cfg),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn heads_must_divide_dim() {
        let w = weights(6, 1, 11);
        let x = input(2, 2, 6, 12);
        let cfg = AttentionConfig::new(AttentionVariant::Vanilla, 4);
        assert!(matches!(
            vanilla_attention(&x, &w, &cfg),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn tome_sd_requires_single_rate() {
        let w = weights(4, 1, 13);
        let x = input(4, 4, 4, 14);
        let cfg = AttentionConfig::new(AttentionVariant::TomeSd, 1).with_rates(0.5, 0.25);
        assert!(matches!(
            tome_sd_attention(&x, &w, &cfg),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn tome_sd_mac_reduction_is_lambda_squared() {
        let w = weights(4, 1, 15);
        let x = input(8, 8, 4, 16);
        let cfg = AttentionConfig::new(AttentionVariant::TomeSd, 1).with_rates(0.5, 0.5);
        let ((_, trace), m) = MacCounter::measure(|| attention_traced(&x, &w, &cfg).unwrap());
        assert_eq!(trace.queries, 32);
        assert_eq!(m.attention * 4, 2 * 64 * 64 * 4);
        assert!(m.similarity <= 64 * 64 * 4 / 4);
    }

    #[test]
    fn neighbor2d_on_constant_field_matches_sra() {
        let w = weights(4, 2, 17);
        let x = TokenGrid::new(4, 4, 4, [0.3f32, -1.2, 0.7, 2.0].repeat(16)).unwrap();
        let base = AttentionConfig::new(AttentionVariant::Sra, 2).with_sr_ratio(2);
        let nb = AttentionConfig {
            variant: AttentionVariant::Neighbor2d,
            ..base
        };
        let (y, trace) = attention_traced(&x, &w, &nb).unwrap();
        assert_eq!(trace.queries, 4);
        let s = sra_attention(&x, &w, &base).unwrap();
        assert!(y.as_tensor().max_abs_diff(s.as_tensor()) < 1e-6);
        let first = y.token(0).to_vec();
        assert!((0..16).all(|i| y.token(i) == first.as_slice()));
    }

    #[test]
    fn neighbor2d_output_is_blockwise_constant() {
        let w = weights(4, 1, 19);
        let x = input(6, 4, 4, 20);
        let cfg = AttentionConfig::new(AttentionVariant::Neighbor2d, 1);
        let (y, trace) = attention_traced(&x, &w, &cfg).unwrap();
        assert_eq!(trace.queries, 6);
        for i in 0..24 {
            let (r, c) = (i / 4, i % 4);
            assert_eq!(y.token(i), y.token((r / 2 * 2) * 4 + c / 2 * 2));
        }
        let odd = input(3, 4, 4, 21);
        assert!(neighbor2d_attention(&odd, &w, &cfg).is_err());
    }

    #[test]
    fn segformerpp_counts_follow_merge_maps() {
        // one-stage slice of the HQ preset: R = 8, r_q = 0, r_kv = 0.6
        let w = weights(4, 8, 23);
        let x = input(64, 64, 4, 24);
        let cfg = AttentionConfig::new(AttentionVariant::Segformerpp, 1)
            .with_sr_ratio(8)
            .with_rates(0.0, 0.6);
        let ((_, trace), m) = MacCounter::measure(|| attention_traced(&x, &w, &cfg).unwrap());
        // 64 reduced tokens, floor(0.6 * 64) = 38 merged
        assert_eq!(trace.keys, 64 - 38);
        assert_eq!(trace.queries, 4096);
        assert_eq!(m.attention, 2 * 4096 * 26 * 4);
    }

    #[test]
    fn variants_parse_by_name() {
        for v in AttentionVariant::ALL {
            assert_eq!(v.name().parse::<AttentionVariant>().unwrap(), v);
        }
        assert!("swin".parse::<AttentionVariant>().is_err());
    }
}
