//! Bipartite soft matching with merge-by-averaging and unmerge-by-copying.
//!
//! Tokens are split into a destination set A and a source set B. Every source
//! is scored against every destination, and the `m` sources with the highest
//! best-match score are folded into their best destination. The resulting
//! [`MergeMap`] keeps enough bookkeeping to scatter merged tokens back onto the
//! original grid.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::grid::TokenGrid;
use crate::tensor::kernels::dot;
use crate::tensor::{record_macs_as, MacKind, Tensor};
use crate::{Error, Result};

/// Score used to pair sources with destinations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Similarity {
    /// Raw inner product `a · b`.
    #[default]
    Dot,
    /// Inner product of L2-normalized tokens.
    Cosine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Group {
    /// Set A: may absorb sources.
    Destination,
    /// Set B: may be merged away.
    Source,
}

/// Token-count reduction factor `1 / (1 - r)` for a merge rate `r`.
pub fn lambda_from_rate(rate: f64) -> Result<f64> {
    check_rate(rate)?;
    Ok(1.0 / (1.0 - rate))
}

fn check_rate(rate: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Param(format!(
            "merge rate must lie in [0, 1), got {rate}"
        )));
    }
    Ok(())
}

/// Smallest region side `s >= 2` with `1/s² <= 1 - rate`.
pub fn default_partition(rate: f64) -> usize {
    let s = (1.0 / (1.0 - rate).sqrt()).ceil() as usize;
    s.max(2)
}

/// Number of tokens merged away out of `n` at `rate`.
///
/// `floor(rate · n)`, with a small slack so that products such as `0.29 · 100`
/// that land a hair below an integer are not rounded down an extra step.
pub fn merge_count(rate: f64, n: usize) -> usize {
    (rate * n as f64 + 1e-9).floor() as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MergePolicy {
    rate: f64,
    partition: usize,
    similarity: Similarity,
}

impl MergePolicy {
    /// Policy with the default partition region for `rate`.
    pub fn new(rate: f64) -> Result<Self> {
        check_rate(rate)?;
        Ok(Self {
            rate,
            partition: default_partition(rate),
            similarity: Similarity::Dot,
        })
    }

    /// Draws one destination from every `s × s` region instead of the default.
    pub fn with_partition(mut self, s: usize) -> Result<Self> {
        if s < 2 {
            return Err(Error::Policy(format!(
                "partition region must be >= 2, got {s}"
            )));
        }
        if 1.0 / (s * s) as f64 > 1.0 - self.rate {
            return Err(Error::Policy(format!(
                "rate {} leaves too few sources with one destination per {s}x{s} region",
                self.rate
            )));
        }
        self.partition = s;
        Ok(self)
    }

    pub fn with_similarity(mut self, similarity: Similarity) -> Self {
        self.similarity = similarity;
        self
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn partition(&self) -> usize {
        self.partition
    }

    pub fn similarity(&self) -> Similarity {
        self.similarity
    }

    pub fn lambda(&self) -> f64 {
        1.0 / (1.0 - self.rate)
    }
}

/// Bookkeeping produced by a matching: where each original token went and
/// how many originals each merged token absorbed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MergeMap {
    dst_of: Vec<usize>,
    size_of: Vec<usize>,
    group_of: Vec<Group>,
    /// Original index that each merged token is anchored at.
    anchor_of: Vec<usize>,
    layout: Option<(usize, usize)>,
}

impl MergeMap {
    /// The map that merges nothing.
    pub fn identity(n: usize) -> Self {
        Self {
            dst_of: (0..n).collect(),
            size_of: vec![1; n],
            group_of: vec![Group::Destination; n],
            anchor_of: (0..n).collect(),
            layout: None,
        }
    }

    /// Builds a map from an explicit assignment. Merged indices must cover
    /// `0..n_merged` with no gaps. The first original token mapped to each
    /// merged index is tagged as its destination.
    pub fn from_dst_of(dst_of: Vec<usize>) -> Result<Self> {
        let n_merged = dst_of.iter().max().map_or(0, |&m| m + 1);
        let mut size_of = vec![0usize; n_merged];
        let mut anchor_of = vec![usize::MAX; n_merged];
        let mut group_of = Vec::with_capacity(dst_of.len());
        for (i, &d) in dst_of.iter().enumerate() {
            size_of[d] += 1;
            if anchor_of[d] == usize::MAX {
                anchor_of[d] = i;
                group_of.push(Group::Destination);
            } else {
                group_of.push(Group::Source);
            }
        }
        if let Some(j) = size_of.iter().position(|&s| s == 0) {
            return Err(Error::Param(format!(
                "merged token {j} receives no originals"
            )));
        }
        Ok(Self {
            dst_of,
            size_of,
            group_of,
            anchor_of,
            layout: None,
        })
    }

    pub fn n_original(&self) -> usize {
        self.dst_of.len()
    }

    pub fn n_merged(&self) -> usize {
        self.size_of.len()
    }

    pub fn dst_of(&self) -> &[usize] {
        &self.dst_of
    }

    pub fn size_of(&self) -> &[usize] {
        &self.size_of
    }

    pub fn group_of(&self) -> &[Group] {
        &self.group_of
    }

    /// Grid layout of the original tokens, if the map came from a grid.
    pub fn layout(&self) -> Option<(usize, usize)> {
        self.layout
    }

    pub fn is_identity(&self) -> bool {
        self.n_merged() == self.n_original()
    }

    /// `(source, destination)` pairs in original token indices, sorted by source.
    pub fn merged_pairs(&self) -> Vec<(usize, usize)> {
        self.dst_of
            .iter()
            .enumerate()
            .filter_map(|(i, &d)| {
                let anchor = self.anchor_of[d];
                (anchor != i).then_some((i, anchor))
            })
            .collect()
    }

    /// `ln(size)` per merged token, the logit offset for proportional attention.
    pub fn log_sizes(&self) -> Vec<f32> {
        self.size_of.iter().map(|&s| (s as f32).ln()).collect()
    }
}

/// Scores grid tokens and merges the best `floor(r · N)` sources.
///
/// Destinations are the top-left token of every `s × s` region. Ties on score
/// resolve to the lower source index, then the lower destination index.
pub fn bipartite_soft_matching(grid: &TokenGrid, policy: &MergePolicy) -> Result<MergeMap> {
    let (rows, cols) = (grid.rows(), grid.cols());
    let s = policy.partition;
    let is_dst: Vec<bool> = (0..rows * cols)
        .map(|i| (i / cols) % s == 0 && (i % cols) % s == 0)
        .collect();
    let m = merge_count(policy.rate, rows * cols);
    let mut map = match_groups(grid.data(), grid.channels(), &is_dst, m, policy.similarity)?;
    map.layout = Some((rows, cols));
    Ok(map)
}

/// Classic fixed-quantity merging on a flat sequence: even positions form the
/// destination set, odd positions the sources, and exactly `quantity` sources
/// are merged. The shortened sequence is returned with no layout attached.
pub fn merge_by_quantity(tokens: &Tensor, quantity: usize) -> Result<(Tensor, MergeMap)> {
    let (n, c) = tokens.as_matrix();
    let is_dst: Vec<bool> = (0..n).map(|i| i % 2 == 0).collect();
    let sources = n / 2;
    if quantity > 0 && quantity >= sources {
        return Err(Error::Param(format!(
            "reduction quantity {quantity} must be below the {sources} available sources"
        )));
    }
    let map = match_groups(tokens.data(), c, &is_dst, quantity, Similarity::Dot)?;
    let merged = merge(tokens, &map)?;
    Ok((merged, map))
}

fn normalized(rows: impl Iterator<Item = impl AsRef<[f32]>>) -> Vec<f32> {
    let mut out = Vec::new();
    for r in rows {
        let r = r.as_ref();
        let norm = r.iter().map(|v| v * v).sum::<f32>().sqrt();
        let inv = if norm > 0.0 { 1.0 / norm } else { 0.0 };
        out.extend(r.iter().map(|v| v * inv));
    }
    out
}

fn match_groups(
    data: &[f32],
    channels: usize,
    is_dst: &[bool],
    m: usize,
    similarity: Similarity,
) -> Result<MergeMap> {
    let n = is_dst.len();
    if n == 0 {
        return Err(Error::shape("bipartite_soft_matching", "no tokens"));
    }
    let dst_idx: Vec<usize> = (0..n).filter(|&i| is_dst[i]).collect();
    let src_idx: Vec<usize> = (0..n).filter(|&i| !is_dst[i]).collect();
    let mut group_of: Vec<Group> = is_dst
        .iter()
        .map(|&d| if d { Group::Destination } else { Group::Source })
        .collect();
    if m == 0 {
        let mut map = MergeMap::identity(n);
        std::mem::swap(&mut map.group_of, &mut group_of);
        return Ok(map);
    }
    if m > src_idx.len() {
        return Err(Error::Policy(format!(
            "cannot merge {m} tokens with only {} sources",
            src_idx.len()
        )));
    }

    let token = |i: usize| &data[i * channels..(i + 1) * channels];
    let (dst_mat, src_mat) = match similarity {
        Similarity::Dot => (
            dst_idx
                .iter()
                .flat_map(|&i| token(i).iter().copied())
                .collect::<Vec<_>>(),
            None,
        ),
        Similarity::Cosine => (
            normalized(dst_idx.iter().map(|&i| token(i))),
            Some(normalized(src_idx.iter().map(|&i| token(i)))),
        ),
    };

    // best destination per source: (score, position in dst_idx)
    let best: Vec<(f32, usize)> = (0..src_idx.len())
        .into_par_iter()
        .with_min_len(64)
        .map(|b| {
            let q = match &src_mat {
                Some(sm) => &sm[b * channels..(b + 1) * channels],
                None => token(src_idx[b]),
            };
            let mut best = (f32::NEG_INFINITY, usize::MAX);
            for (a, drow) in dst_mat.chunks_exact(channels).enumerate() {
                let score = dot(q, drow);
                if best.1 == usize::MAX || score > best.0 || score.is_nan() {
                    best = (score, a);
                    if score.is_nan() {
                        break;
                    }
                }
            }
            best
        })
        .collect();
    record_macs_as(
        MacKind::Similarity,
        (dst_idx.len() * src_idx.len() * channels) as u64,
    );
    if best.iter().any(|(s, _)| s.is_nan()) {
        return Err(Error::NonFinite("bipartite_soft_matching"));
    }

    let mut order: Vec<usize> = (0..src_idx.len()).collect();
    // NaN was rejected above; partial_cmp keeps -0.0 and 0.0 tied
    order.sort_by(|&x, &y| {
        best[y]
            .0
            .partial_cmp(&best[x].0)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(x.cmp(&y))
    });
    let mut target = vec![usize::MAX; n];
    for &b in &order[..m] {
        target[src_idx[b]] = dst_idx[best[b].1];
    }

    let mut dst_of = vec![0usize; n];
    let mut anchor_of = Vec::with_capacity(n - m);
    for i in 0..n {
        if target[i] == usize::MAX {
            dst_of[i] = anchor_of.len();
            anchor_of.push(i);
        }
    }
    let mut size_of = vec![1usize; anchor_of.len()];
    for i in 0..n {
        if target[i] != usize::MAX {
            let d = dst_of[target[i]];
            dst_of[i] = d;
            size_of[d] += 1;
        }
    }
    Ok(MergeMap {
        dst_of,
        size_of,
        group_of,
        anchor_of,
        layout: None,
    })
}

/// Averages every group of original tokens into one merged token.
///
/// Sums are accumulated in `f64`, which makes averaging a group of identical
/// tokens exact; `merge ∘ unmerge` is therefore a bitwise fixed point.
pub fn merge(tokens: &Tensor, map: &MergeMap) -> Result<Tensor> {
    let (n, c) = tokens.as_matrix();
    if n != map.n_original() {
        return Err(Error::shape(
            "merge",
            format!("{n} tokens for a map over {}", map.n_original()),
        ));
    }
    let mut acc = vec![0.0f64; map.n_merged() * c];
    for (i, &d) in map.dst_of.iter().enumerate() {
        for (a, &v) in acc[d * c..(d + 1) * c].iter_mut().zip(tokens.row(i)) {
            *a += v as f64;
        }
    }
    let out = acc
        .chunks_exact(c)
        .zip(&map.size_of)
        .flat_map(|(row, &s)| row.iter().map(move |&v| (v / s as f64) as f32))
        .collect();
    Tensor::new([map.n_merged(), c], out)
}

/// Copies each merged token back to every original position it absorbed.
/// When the map carries a grid layout the result is shaped `[rows, cols, C]`.
pub fn unmerge(merged: &Tensor, map: &MergeMap) -> Result<Tensor> {
    let (n, c) = merged.as_matrix();
    if n != map.n_merged() {
        return Err(Error::shape(
            "unmerge",
            format!("{n} merged tokens for a map producing {}", map.n_merged()),
        ));
    }
    let mut out = Vec::with_capacity(map.n_original() * c);
    for &d in &map.dst_of {
        out.extend_from_slice(merged.row(d));
    }
    match map.layout {
        Some((r, cols)) => Tensor::new([r, cols, c], out),
        None => Tensor::new([map.n_original(), c], out),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(rows: usize, cols: usize, c: usize, f: impl FnMut(usize) -> f32) -> TokenGrid {
        TokenGrid::from_tensor(Tensor::from_fn([rows, cols, c], f).unwrap()).unwrap()
    }

    #[test]
    fn lambda_values() {
        assert_eq!(lambda_from_rate(0.5).unwrap(), 2.0);
        assert_eq!(lambda_from_rate(0.0).unwrap(), 1.0);
        assert!((lambda_from_rate(0.9).unwrap() - 10.0).abs() < 1e-12);
        assert!(lambda_from_rate(1.0).is_err());
        assert!(lambda_from_rate(-0.1).is_err());
    }

    #[test]
    fn default_partitions() {
        assert_eq!(default_partition(0.0), 2);
        assert_eq!(default_partition(0.5), 2);
        assert_eq!(default_partition(0.75), 2);
        assert_eq!(default_partition(0.8), 3);
        assert_eq!(default_partition(0.9), 4);
    }

    #[test]
    fn policy_rejects_small_partition() {
        let p = MergePolicy::new(0.9).unwrap();
        assert!(matches!(p.with_partition(2), Err(Error::Policy(_))));
        assert!(p.with_partition(1).is_err());
        assert!(p.with_partition(4).is_ok());
    }

    #[test]
    fn higher_score_source_wins() {
        // 1x4 grid with s=2 puts destinations at columns 0 and 2:
        // a1=(1,0), b1=(2,0), a2=(0,1), b2=(0,3)
        let data = vec![1., 0., 2., 0., 0., 1., 0., 3.];
        let g = TokenGrid::new(1, 4, 2, data).unwrap();
        let p = MergePolicy::new(0.25).unwrap();
        let map = bipartite_soft_matching(&g, &p).unwrap();
        assert_eq!(map.merged_pairs(), vec![(3, 2)]);
        assert_eq!(map.n_merged(), 3);
        assert_eq!(map.size_of(), &[1, 1, 2]);
    }

    #[test]
    fn signed_zero_scores_tie() {
        // source 1 scores -0.0, source 3 scores +0.0; the lower index wins
        let g = TokenGrid::new(1, 4, 1, vec![-1.0, 0.0, 1.0, -0.0]).unwrap();
        let map = bipartite_soft_matching(&g, &MergePolicy::new(0.25).unwrap()).unwrap();
        assert_eq!(map.merged_pairs(), vec![(1, 0)]);
    }

    #[test]
    fn zero_rate_is_identity() {
        let g = grid(4, 4, 3, |i| i as f32);
        let map = bipartite_soft_matching(&g, &MergePolicy::new(0.0).unwrap()).unwrap();
        assert!(map.is_identity());
        assert!(map.size_of().iter().all(|&s| s == 1));
    }

    #[test]
    fn three_quarters_on_four_by_four() {
        let g = grid(4, 4, 2, |i| ((i * 37) % 11) as f32);
        let map = bipartite_soft_matching(&g, &MergePolicy::new(0.75).unwrap()).unwrap();
        assert_eq!(map.n_merged(), 4);
        assert_eq!(map.merged_pairs().len(), 12);
        assert_eq!(map.size_of().iter().sum::<usize>(), 16);
    }

    #[test]
    fn too_many_merges_is_a_policy_error() {
        let g = grid(2, 2, 1, |i| i as f32);
        let p = MergePolicy::new(0.75).unwrap().with_partition(2).unwrap();
        // 3 sources, 3 merges: fine
        assert!(bipartite_soft_matching(&g, &p).is_ok());
        // 3x3 grid with s=2 has 4 destinations, only 5 sources, but r=0.75 wants 6
        let g = grid(3, 3, 1, |i| i as f32);
        assert!(matches!(
            bipartite_soft_matching(&g, &p),
            Err(Error::Policy(_))
        ));
    }

    #[test]
    fn merge_averages_and_unmerge_gathers() {
        let map = MergeMap::from_dst_of(vec![0, 0]).unwrap();
        let x = Tensor::new([2, 2], vec![0., 1., 0., 3.]).unwrap();
        assert_eq!(merge(&x, &map).unwrap().data(), &[0.0, 2.0]);

        let map = MergeMap::from_dst_of(vec![0, 0, 1, 0]).unwrap();
        let merged = Tensor::new([2, 1], vec![7., 9.]).unwrap();
        assert_eq!(unmerge(&merged, &map).unwrap().data(), &[7., 7., 9., 7.]);
    }

    #[test]
    fn identity_map_round_trips() {
        let x = Tensor::from_fn([5, 3], |i| (i as f32).sin()).unwrap();
        let map = MergeMap::identity(5);
        assert_eq!(merge(&x, &map).unwrap(), x);
        assert_eq!(unmerge(&x, &map).unwrap(), x);
    }

    #[test]
    fn length_mismatches() {
        let map = MergeMap::from_dst_of(vec![0, 0, 1]).unwrap();
        let x = Tensor::zeros([4, 2]).unwrap();
        assert!(matches!(merge(&x, &map), Err(Error::Shape { .. })));
        assert!(matches!(unmerge(&x, &map), Err(Error::Shape { .. })));
        assert!(MergeMap::from_dst_of(vec![0, 2]).is_err());
    }

    #[test]
    fn quantity_merges_duplicates() {
        let a = [1.0, 2.0];
        let b = [-2.0, 0.5];
        let c = [0.5, -1.0];
        let data: Vec<f32> = [a, a, b, c].concat();
        let x = Tensor::new([4, 2], data).unwrap();
        let (merged, map) = merge_by_quantity(&x, 1).unwrap();
        assert_eq!(merged.shape(), &[3, 2]);
        assert_eq!(map.merged_pairs(), vec![(1, 0)]);
        assert_eq!(merged.row(0), &a);
    }

    #[test]
    fn quantity_zero_and_limits() {
        let x = Tensor::from_fn([6, 2], |i| i as f32).unwrap();
        let (y, _) = merge_by_quantity(&x, 0).unwrap();
        assert_eq!(y, x);
        for q in 0..3 {
            assert_eq!(merge_by_quantity(&x, q).unwrap().0.shape()[0], 6 - q);
        }
        assert!(matches!(merge_by_quantity(&x, 3), Err(Error::Param(_))));
    }

    #[test]
    fn cosine_ignores_norm() {
        // source (0,1) at column 1; destinations at columns 0 and 2.
        // dot prefers the long vector (5,5), cosine the aligned (0,1)
        let data = vec![0., 1., 0., 1., 5., 5.];
        let g = TokenGrid::new(1, 3, 2, data).unwrap();
        let dot = MergePolicy::new(0.4).unwrap();
        let cos = dot.with_similarity(Similarity::Cosine);
        assert_eq!(
            bipartite_soft_matching(&g, &dot).unwrap().merged_pairs(),
            vec![(1, 2)]
        );
        assert_eq!(
            bipartite_soft_matching(&g, &cos).unwrap().merged_pairs(),
            vec![(1, 0)]
        );
    }

    #[test]
    fn similarity_macs_are_group_product() {
        let g = grid(8, 8, 4, |i| (i as f32 * 0.37).cos());
        let p = MergePolicy::new(0.5).unwrap();
        let (_, m) =
            crate::tensor::MacCounter::measure(|| bipartite_soft_matching(&g, &p).unwrap());
        assert_eq!(m.similarity, 16 * 48 * 4);
        assert!(m.similarity <= (64 * 64 * 4 / 4) as u64);
    }

    #[test]
    fn nan_tokens_fail_loudly() {
        let g = TokenGrid::new(1, 2, 1, vec![1.0, f32::NAN]).unwrap();
        let p = MergePolicy::new(0.5).unwrap();
        assert!(matches!(
            bipartite_soft_matching(&g, &p),
            Err(Error::NonFinite(_))
        ));
    }
}
