//! Seeded random tensors, weight initialization, and on-disk formats.
//!
//! Weights are stored as a pair of files: `<name>.manifest.json` lists every
//! tensor's name, shape and byte offset, and `<name>.weights.bin` holds the
//! raw little-endian `f32` payload back to back. The model config sits next
//! to them as `<name>.config.json`.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use crate::encoder::{Model, ModelConfig};
use crate::nn::{Init, WeightSource};
use crate::tensor::Tensor;
use crate::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

/// Standard-normal stream: xoshiro256++ seeded through SplitMix64, turned
/// into Gaussians with the Box–Muller transform. Transcendentals come from
/// `libm`, so the stream is bit-identical across platforms.
pub struct GaussianStream {
    rng: Xoshiro256PlusPlus,
    spare: Option<f64>,
}

impl GaussianStream {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: Xoshiro256PlusPlus::seed_from_u64(seed),
            spare: None,
        }
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    fn unit(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn next_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // 1 - unit() lies in (0, 1], keeping the log finite
        let u1 = 1.0 - self.unit();
        let u2 = self.unit();
        let r = libm::sqrt(-2.0 * libm::log(u1));
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(r * libm::sin(theta));
        r * libm::cos(theta)
    }
}

/// Tensor of standard-normal values. The same seed gives the same bits.
pub fn random_tensor(shape: &[usize], seed: u64) -> Result<Tensor> {
    let mut g = GaussianStream::new(seed);
    Tensor::from_fn(shape.to_vec(), |_| g.next_normal() as f32)
}

/// Draws every parameter from one seeded Gaussian stream, in request order.
pub struct RandomInit {
    stream: GaussianStream,
    std_override: Option<f32>,
}

impl RandomInit {
    pub fn new(seed: u64) -> Self {
        Self {
            stream: GaussianStream::new(seed),
            std_override: None,
        }
    }

    /// Uses `std` for every random tensor. Handy for tests that want
    /// attention logits far from uniform.
    pub fn with_std_override(mut self, std: f32) -> Self {
        self.std_override = Some(std);
        self
    }

    fn truncated(&mut self) -> f32 {
        loop {
            let z = self.stream.next_normal();
            if z.abs() <= 2.0 {
                return z as f32;
            }
        }
    }
}

impl WeightSource for RandomInit {
    fn tensor(&mut self, _name: &str, shape: &[usize], init: Init) -> Result<Tensor> {
        match init {
            Init::Zeros => Tensor::zeros(shape.to_vec()),
            Init::Ones => Tensor::full(shape.to_vec(), 1.0),
            Init::TruncNormal { std } => {
                let std = self.std_override.unwrap_or(std);
                Tensor::from_fn(shape.to_vec(), |_| self.truncated() * std)
            }
            Init::FanIn { fan_in } => {
                let std = self
                    .std_override
                    .unwrap_or_else(|| (2.0 / fan_in as f32).sqrt());
                Tensor::from_fn(shape.to_vec(), |_| self.stream.next_normal() as f32 * std)
            }
        }
    }
}

/// Fills every parameter with one value.
pub struct ConstantInit(pub f32);

impl WeightSource for ConstantInit {
    fn tensor(&mut self, _name: &str, shape: &[usize], _init: Init) -> Result<Tensor> {
        Tensor::full(shape.to_vec(), self.0)
    }
}

/// Builds a model with seeded random weights.
pub fn random_model(config: ModelConfig, seed: u64) -> Result<Model> {
    Model::build(config, &mut RandomInit::new(seed))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset into the blob.
    pub offset: u64,
}

impl TensorEntry {
    pub fn byte_len(&self) -> u64 {
        self.shape.iter().product::<usize>() as u64 * 4
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeightManifest {
    pub format_version: u32,
    pub total_bytes: u64,
    pub tensors: Vec<TensorEntry>,
}

impl WeightManifest {
    /// Checks internal consistency: supported version, unique names, strictly
    /// increasing non-overlapping offsets, and sizes summing to the blob length.
    pub fn validate(&self) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported format version {} (expected {FORMAT_VERSION})",
                self.format_version
            )));
        }
        let mut seen = HashSet::new();
        let mut end = 0u64;
        let mut sum = 0u64;
        for (i, t) in self.tensors.iter().enumerate() {
            if !seen.insert(t.name.as_str()) {
                return Err(Error::Format(format!("duplicate tensor name '{}'", t.name)));
            }
            if t.shape.is_empty() || t.shape.contains(&0) {
                return Err(Error::Format(format!(
                    "tensor '{}' has invalid shape {:?}",
                    t.name, t.shape
                )));
            }
            if i > 0 && t.offset < end {
                return Err(Error::Format(format!(
                    "tensor '{}' at offset {} overlaps the previous tensor ending at {end}",
                    t.name, t.offset
                )));
            }
            end = t.offset + t.byte_len();
            sum += t.byte_len();
        }
        if sum != self.total_bytes {
            return Err(Error::Format(format!(
                "tensor sizes sum to {sum} bytes but manifest declares {}",
                self.total_bytes
            )));
        }
        if end > self.total_bytes {
            return Err(Error::Format(format!(
                "tensors extend to byte {end}, past declared length {}",
                self.total_bytes
            )));
        }
        Ok(())
    }
}

/// Serializes named tensors into a manifest and a contiguous blob.
pub fn encode_tensors<'a>(
    tensors: impl IntoIterator<Item = (String, &'a Tensor)>,
) -> (WeightManifest, Vec<u8>) {
    let mut blob = Vec::new();
    let mut entries = Vec::new();
    for (name, t) in tensors {
        entries.push(TensorEntry {
            name,
            shape: t.shape().to_vec(),
            offset: blob.len() as u64,
        });
        for v in t.data() {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    let manifest = WeightManifest {
        format_version: FORMAT_VERSION,
        total_bytes: blob.len() as u64,
        tensors: entries,
    };
    (manifest, blob)
}

/// Decodes every tensor listed in `manifest` out of `blob`.
pub fn decode_tensors(manifest: &WeightManifest, blob: &[u8]) -> Result<Vec<(String, Tensor)>> {
    manifest.validate()?;
    let mut out = Vec::with_capacity(manifest.tensors.len());
    for t in &manifest.tensors {
        let start = t.offset as usize;
        let end = start + t.byte_len() as usize;
        if end > blob.len() {
            return Err(Error::Format(format!(
                "blob truncated: tensor '{}' needs bytes {start}..{end}, blob has {}",
                t.name,
                blob.len()
            )));
        }
        let data = blob[start..end]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        out.push((t.name.clone(), Tensor::new(t.shape.clone(), data)?));
    }
    if blob.len() as u64 != manifest.total_bytes {
        return Err(Error::Format(format!(
            "blob is {} bytes, manifest declares {}",
            blob.len(),
            manifest.total_bytes
        )));
    }
    Ok(out)
}

/// Serves stored tensors to [`Model::build`], checking names and shapes.
pub struct StoredWeights {
    tensors: HashMap<String, Tensor>,
}

impl StoredWeights {
    pub fn new(tensors: Vec<(String, Tensor)>) -> Self {
        Self {
            tensors: tensors.into_iter().collect(),
        }
    }

    /// Names that were never requested.
    pub fn leftover(&self) -> Vec<&str> {
        let mut v: Vec<&str> = self.tensors.keys().map(String::as_str).collect();
        v.sort_unstable();
        v
    }
}

impl WeightSource for StoredWeights {
    fn tensor(&mut self, name: &str, shape: &[usize], _init: Init) -> Result<Tensor> {
        let t = self
            .tensors
            .remove(name)
            .ok_or_else(|| Error::Load(format!("missing tensor '{name}'")))?;
        if t.shape() != shape {
            return Err(Error::Load(format!(
                "tensor '{name}' has shape {:?}, config expects {shape:?}",
                t.shape()
            )));
        }
        Ok(t)
    }
}

/// Paths of the three files making up a saved model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeightFiles {
    pub manifest: PathBuf,
    pub blob: PathBuf,
    pub config: PathBuf,
}

impl WeightFiles {
    pub fn new(dir: &Path, name: &str) -> Self {
        Self {
            manifest: dir.join(format!("{name}.manifest.json")),
            blob: dir.join(format!("{name}.weights.bin")),
            config: dir.join(format!("{name}.config.json")),
        }
    }
}

pub fn save_config(config: &ModelConfig, path: &Path) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(config)? + "\n")?;
    Ok(())
}

pub fn load_config(path: &Path) -> Result<ModelConfig> {
    let cfg: ModelConfig = serde_json::from_str(&fs::read_to_string(path)?)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Writes manifest, blob and config for `model`.
pub fn save_weights(model: &Model, dir: &Path, name: &str) -> Result<WeightFiles> {
    let files = WeightFiles::new(dir, name);
    let mut named = Vec::new();
    model.visit(&mut |n, t| named.push((n, t.clone())));
    let (manifest, blob) = encode_tensors(named.iter().map(|(n, t)| (n.clone(), t)));
    fs::write(
        &files.manifest,
        serde_json::to_string_pretty(&manifest)? + "\n",
    )?;
    fs::write(&files.blob, blob)?;
    save_config(model.config(), &files.config)?;
    Ok(files)
}

/// Loads a model from a manifest and blob, validating every tensor against
/// `config`.
pub fn load_weights(manifest_path: &Path, blob_path: &Path, config: ModelConfig) -> Result<Model> {
    let manifest: WeightManifest = serde_json::from_str(&fs::read_to_string(manifest_path)?)?;
    let blob = fs::read(blob_path)?;
    let mut src = StoredWeights::new(decode_tensors(&manifest, &blob)?);
    let model = Model::build(config, &mut src)?;
    if let Some(extra) = src.leftover().first() {
        return Err(Error::Load(format!(
            "tensor '{extra}' is not used by the config"
        )));
    }
    Ok(model)
}
