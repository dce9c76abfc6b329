//! Python bindings. Tensors cross the boundary as `(shape, flat list)`.

use std::path::Path;

use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use segmerge::bench::{BenchOptions, BenchVariant};
use segmerge::cost;
use segmerge::encoder::{self, RatePreset};
use segmerge::io;
use segmerge::merge::{self, MergePolicy};
use segmerge::{AttentionVariant, Error, TokenGrid};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(e) => PyOSError::new_err(e.to_string()),
        e => PyValueError::new_err(e.to_string()),
    }
}

trait IntoPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> IntoPy<T> for segmerge::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

#[pyclass(name = "Tensor", module = "pysegmerge", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyTensor {
    inner: segmerge::Tensor,
}

#[pymethods]
impl PyTensor {
    #[new]
    fn new(shape: Vec<usize>, data: Vec<f32>) -> PyResult<Self> {
        Ok(Self {
            inner: segmerge::Tensor::new(shape, data).py()?,
        })
    }

    #[getter]
    fn shape(&self) -> Vec<usize> {
        self.inner.shape().to_vec()
    }

    fn tolist(&self) -> Vec<f32> {
        self.inner.data().to_vec()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Tensor(shape={:?})", self.inner.shape())
    }
}

#[pyclass(
    name = "ModelConfig",
    module = "pysegmerge",
    frozen,
    skip_from_py_object
)]
#[derive(Clone)]
pub struct PyModelConfig {
    inner: encoder::ModelConfig,
}

#[pymethods]
impl PyModelConfig {
    #[staticmethod]
    fn toy() -> Self {
        Self {
            inner: encoder::ModelConfig::toy(),
        }
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner: encoder::ModelConfig =
            serde_json::from_str(text).map_err(|e| py_err(e.into()))?;
        inner.validate().py()?;
        Ok(Self { inner })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string_pretty(&self.inner).map_err(|e| py_err(e.into()))
    }

    /// `"hq"` or `"fast"`.
    fn with_preset(&self, preset: &str) -> PyResult<Self> {
        let p: RatePreset = preset.parse().py()?;
        Ok(Self {
            inner: self.inner.clone().with_preset(p),
        })
    }

    fn with_variant(&self, variant: &str) -> PyResult<Self> {
        let v: AttentionVariant = variant.parse().py()?;
        Ok(Self {
            inner: self.inner.clone().with_variant(v),
        })
    }

    fn with_rates(&self, rates: Vec<(f64, f64)>) -> PyResult<Self> {
        let rates: [(f64, f64); encoder::NUM_STAGES] = rates.try_into().map_err(|_| {
            PyValueError::new_err(format!(
                "expected {} (r_q, r_kv) pairs",
                encoder::NUM_STAGES
            ))
        })?;
        let inner = self.inner.clone().with_rates(rates);
        inner.validate().py()?;
        Ok(Self { inner })
    }

    #[getter]
    fn variant(&self) -> &'static str {
        self.inner.variant.name()
    }

    #[getter]
    fn rates(&self) -> Vec<(f64, f64)> {
        self.inner.stages.iter().map(|s| (s.r_q, s.r_kv)).collect()
    }

    fn stage_dims(&self, height: usize, width: usize) -> PyResult<Vec<(usize, usize, usize)>> {
        self.inner.check_input(height, width).py()?;
        Ok(encoder::ModelConfig::stage_dims(height, width)
            .iter()
            .zip(&self.inner.stages)
            .map(|(&(h, w), s)| (h, w, s.channels))
            .collect())
    }

    fn __repr__(&self) -> String {
        format!("ModelConfig(variant={:?})", self.inner.variant.name())
    }
}

#[pyclass(name = "Model", module = "pysegmerge", frozen)]
pub struct PyModel {
    inner: encoder::Model,
}

#[pymethods]
impl PyModel {
    /// Builds a model with seeded random weights.
    #[staticmethod]
    #[pyo3(signature = (config, seed=0))]
    fn random(config: &PyModelConfig, seed: u64) -> PyResult<Self> {
        Ok(Self {
            inner: io::random_model(config.inner.clone(), seed).py()?,
        })
    }

    #[staticmethod]
    fn load(manifest: &str, weights: &str, config: &PyModelConfig) -> PyResult<Self> {
        Ok(Self {
            inner: io::load_weights(
                Path::new(manifest),
                Path::new(weights),
                config.inner.clone(),
            )
            .py()?,
        })
    }

    /// Writes `<name>.manifest.json`, `<name>.weights.bin` and `<name>.config.json`
    /// into `directory` and returns their paths.
    fn save(&self, directory: &str, name: &str) -> PyResult<(String, String, String)> {
        let f = io::save_weights(&self.inner, Path::new(directory), name).py()?;
        let s = |p: &Path| p.display().to_string();
        Ok((s(&f.manifest), s(&f.blob), s(&f.config)))
    }

    #[getter]
    fn config(&self) -> PyModelConfig {
        PyModelConfig {
            inner: self.inner.config().clone(),
        }
    }

    fn num_parameters(&self) -> usize {
        self.inner.num_parameters()
    }

    /// `[H, W, C_in]` image to `[H/4, W/4, classes]` logits.
    fn forward(&self, py: Python<'_>, image: &PyTensor) -> PyResult<PyTensor> {
        let out = py.detach(|| self.inner.forward(&image.inner)).py()?;
        Ok(PyTensor { inner: out })
    }

    /// Stage outputs of the encoder.
    fn encoder_forward(&self, py: Python<'_>, image: &PyTensor) -> PyResult<Vec<PyTensor>> {
        let pyramid = py
            .detach(|| self.inner.encoder_forward(&image.inner))
            .py()?;
        Ok(pyramid
            .into_iter()
            .map(|g| PyTensor {
                inner: g.into_tensor(),
            })
            .collect())
    }
}

#[pyfunction]
#[pyo3(signature = (shape, seed=0))]
fn random_tensor(shape: Vec<usize>, seed: u64) -> PyResult<PyTensor> {
    Ok(PyTensor {
        inner: io::random_tensor(&shape, seed).py()?,
    })
}

/// Matches a `[rows, cols, C]` tensor at `rate` and returns the merged
/// `(source, destination)` index pairs.
#[pyfunction]
#[pyo3(signature = (tokens, rate, partition=None))]
fn bipartite_soft_matching(
    tokens: &PyTensor,
    rate: f64,
    partition: Option<usize>,
) -> PyResult<Vec<(usize, usize)>> {
    let grid = TokenGrid::from_tensor(tokens.inner.clone()).py()?;
    let mut policy = MergePolicy::new(rate).py()?;
    if let Some(s) = partition {
        policy = policy.with_partition(s).py()?;
    }
    Ok(merge::bipartite_soft_matching(&grid, &policy)
        .py()?
        .merged_pairs())
}

/// Merges a `[rows, cols, C]` tensor at `rate`; returns the merged `[N', C]`
/// tokens and the group size of each.
#[pyfunction]
fn merge_tokens(tokens: &PyTensor, rate: f64) -> PyResult<(PyTensor, Vec<usize>)> {
    let grid = TokenGrid::from_tensor(tokens.inner.clone()).py()?;
    let map = merge::bipartite_soft_matching(&grid, &MergePolicy::new(rate).py()?).py()?;
    let merged = merge::merge(&grid.to_tokens(), &map).py()?;
    Ok((PyTensor { inner: merged }, map.size_of().to_vec()))
}

/// Closed-form attention cost as a dict; `text` holds the printable report.
#[pyfunction]
fn model_cost<'py>(
    py: Python<'py>,
    config: &PyModelConfig,
    height: usize,
    width: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let r = cost::model_cost(&config.inner, height, width).py()?;
    let d = PyDict::new(py);
    d.set_item("variant", r.variant.name())?;
    d.set_item("n_tokens", r.n_tokens)?;
    d.set_item("dim", r.dim)?;
    d.set_item("dominant_macs", r.dominant_macs)?;
    d.set_item("vanilla_macs", r.vanilla_macs)?;
    d.set_item("reduction_factor", r.reduction_factor)?;
    d.set_item("linear_macs", r.linear_macs)?;
    d.set_item(
        "per_stage_factors",
        r.per_stage
            .iter()
            .map(|s| s.reduction_factor)
            .collect::<Vec<_>>(),
    )?;
    d.set_item(
        "per_stage_macs",
        r.per_stage
            .iter()
            .map(|s| s.dominant_macs)
            .collect::<Vec<_>>(),
    )?;
    d.set_item("text", r.to_string())?;
    Ok(d)
}

#[pyfunction]
fn cost_vanilla(n: u64, d: u64) -> f64 {
    cost::cost_vanilla(n, d)
}

#[pyfunction]
fn cost_sra(n: u64, d: u64, sr_ratio: u64) -> f64 {
    cost::cost_sra(n, d, sr_ratio)
}

#[pyfunction]
fn cost_tome_sd(n: u64, d: u64, rate: f64) -> PyResult<f64> {
    cost::cost_tome_sd(n, d, rate).py()
}

#[pyfunction]
fn cost_segformerpp(n: u64, d: u64, sr_ratio: u64, r_q: f64, r_kv: f64) -> PyResult<f64> {
    cost::cost_segformerpp(n, d, sr_ratio, r_q, r_kv).py()
}

/// Times `variant` against the original model; returns the record as a dict.
#[pyfunction(name = "bench")]
#[pyo3(signature = (variant, height, width, warmup=3, reps=10, seed=0, threads=1, config=None))]
#[allow(clippy::too_many_arguments)]
fn run_bench<'py>(
    py: Python<'py>,
    variant: &str,
    height: usize,
    width: usize,
    warmup: usize,
    reps: usize,
    seed: u64,
    threads: usize,
    config: Option<&PyModelConfig>,
) -> PyResult<Bound<'py, PyDict>> {
    let v: BenchVariant = variant.parse().py()?;
    let opts = BenchOptions {
        warmup,
        reps,
        seed,
        threads,
        base: config.map_or_else(encoder::ModelConfig::toy, |c| c.inner.clone()),
    };
    let r = py
        .detach(|| segmerge::bench::bench(v, height, width, &opts))
        .py()?;
    let d = PyDict::new(py);
    d.set_item("variant", r.variant.name())?;
    d.set_item("height", r.height)?;
    d.set_item("width", r.width)?;
    d.set_item("warmup_runs", r.warmup_runs)?;
    d.set_item("timed_runs", r.timed_runs)?;
    d.set_item("median_s", r.median_s)?;
    d.set_item("t_orig_s", r.t_orig_s)?;
    d.set_item("speedup", r.speedup)?;
    Ok(d)
}

#[pymodule]
fn pysegmerge(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTensor>()?;
    m.add_class::<PyModelConfig>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(random_tensor, m)?)?;
    m.add_function(wrap_pyfunction!(bipartite_soft_matching, m)?)?;
    m.add_function(wrap_pyfunction!(merge_tokens, m)?)?;
    m.add_function(wrap_pyfunction!(model_cost, m)?)?;
    m.add_function(wrap_pyfunction!(cost_vanilla, m)?)?;
    m.add_function(wrap_pyfunction!(cost_sra, m)?)?;
    m.add_function(wrap_pyfunction!(cost_tome_sd, m)?)?;
    m.add_function(wrap_pyfunction!(cost_segformerpp, m)?)?;
    m.add_function(wrap_pyfunction!(run_bench, m)?)?;
    m.add("VARIANTS", AttentionVariant::ALL.map(|v| v.name()).to_vec())?;
    Ok(())
}
