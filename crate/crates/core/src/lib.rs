//! Token-merging attention for hierarchical vision transformers.
//!
//! The crate bundles a small dense tensor engine with per-thread MAC
//! accounting ([`tensor`]), bipartite soft matching with merge/unmerge
//! ([`merge`]), five attention variants ([`attention`]), a four-stage toy
//! encoder ([`encoder`]), a closed-form cost model ([`cost`]), weight and
//! config serialization with a portable seeded RNG ([`io`]) and a latency
//! harness ([`bench`]).
//!
//! Tensors are row-major `f32`. Token maps are `[rows, cols, channels]`.

pub mod attention;
pub mod bench;
pub mod cost;
pub mod encoder;
mod error;
pub mod grid;
pub mod io;
pub mod merge;
pub mod nn;
pub mod tensor;

pub use attention::{AttentionConfig, AttentionVariant};
pub use encoder::{Model, ModelConfig, RatePreset};
pub use error::{Error, Result};
pub use grid::TokenGrid;
pub use merge::{MergeMap, MergePolicy, Similarity};
pub use tensor::{MacCounter, Tensor};
