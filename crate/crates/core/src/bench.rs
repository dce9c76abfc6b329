//! Wall-clock latency harness.
//!
//! Every measurement pairs the variant with the `original` model in the same
//! call. All models under comparison run interleaved round-robin, so slow
//! drift in machine state hits all of them equally, and the reported latency
//! is the median of the timed runs.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::attention::AttentionVariant;
use crate::encoder::{Model, ModelConfig, RatePreset, NUM_STAGES};
use crate::io::{random_model, random_tensor};
use crate::tensor::{self, Tensor};
use crate::{Error, Result};

pub const MIN_TIMED_RUNS: usize = 3;

/// Per-stage merge rate used by the `tome_sd` bench variant.
pub const TOME_SD_RATES: [f64; NUM_STAGES] = [0.9, 0.9, 0.9, 0.9];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchVariant {
    /// Spatial-reduction attention, no merging. The speedup baseline.
    Original,
    Hq,
    Fast,
    Neighbor2d,
    TomeSd,
    Vanilla,
    /// Original model on a half-resolution input, logits resized back.
    Downsample,
}

impl BenchVariant {
    pub const ALL: [BenchVariant; 7] = [
        BenchVariant::Original,
        BenchVariant::Hq,
        BenchVariant::Fast,
        BenchVariant::Neighbor2d,
        BenchVariant::TomeSd,
        BenchVariant::Vanilla,
        BenchVariant::Downsample,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BenchVariant::Original => "original",
            BenchVariant::Hq => "hq",
            BenchVariant::Fast => "fast",
            BenchVariant::Neighbor2d => "neighbor2d",
            BenchVariant::TomeSd => "tome_sd",
            BenchVariant::Vanilla => "vanilla",
            BenchVariant::Downsample => "downsample",
        }
    }

    /// Model configuration, derived from `base`.
    pub fn config(self, base: &ModelConfig) -> ModelConfig {
        let base = base.clone();
        match self {
            BenchVariant::Original | BenchVariant::Downsample => {
                base.with_variant(AttentionVariant::Sra)
            }
            BenchVariant::Hq => base.with_preset(RatePreset::Hq),
            BenchVariant::Fast => base.with_preset(RatePreset::Fast),
            BenchVariant::Neighbor2d => base.with_variant(AttentionVariant::Neighbor2d),
            BenchVariant::TomeSd => base
                .with_variant(AttentionVariant::TomeSd)
                .with_rates(TOME_SD_RATES.map(|r| (r, r))),
            BenchVariant::Vanilla => base.with_variant(AttentionVariant::Vanilla),
        }
    }

    /// Resolution constraint on the full-size input.
    pub fn check_input(self, config: &ModelConfig, height: usize, width: usize) -> Result<()> {
        config.check_input(height, width)?;
        if self == BenchVariant::Downsample {
            config.check_input(height / 2, width / 2).map_err(|_| {
                Error::Config(format!(
                    "downsample needs H and W divisible by 128, got {height}x{width}"
                ))
            })?;
        }
        Ok(())
    }
}

impl fmt::Display for BenchVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BenchVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BenchVariant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = BenchVariant::ALL.iter().map(|v| v.name()).collect();
                Error::Config(format!(
                    "unknown bench variant '{s}' (expected one of {})",
                    names.join(", ")
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchOptions {
    pub warmup: usize,
    pub reps: usize,
    /// Weights use `seed`, the input uses `seed + 1`.
    pub seed: u64,
    pub threads: usize,
    pub base: ModelConfig,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            warmup: 3,
            reps: 10,
            seed: 0,
            threads: 1,
            base: ModelConfig::toy(),
        }
    }
}

impl BenchOptions {
    fn validate(&self) -> Result<()> {
        if self.reps < MIN_TIMED_RUNS {
            return Err(Error::Config(format!(
                "reps must be at least {MIN_TIMED_RUNS}, got {}",
                self.reps
            )));
        }
        if self.threads == 0 {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkRecord {
    pub variant: BenchVariant,
    pub height: usize,
    pub width: usize,
    pub warmup_runs: usize,
    pub timed_runs: usize,
    pub median_s: f64,
    pub t_orig_s: f64,
    pub speedup: f64,
}

impl fmt::Display for BenchmarkRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "variant: {}", self.variant)?;
        writeln!(f, "input: {}x{}", self.height, self.width)?;
        writeln!(f, "warmup_runs: {}", self.warmup_runs)?;
        writeln!(f, "timed_runs: {}", self.timed_runs)?;
        writeln!(f, "median_s: {:.6}", self.median_s)?;
        writeln!(f, "t_orig_s: {:.6}", self.t_orig_s)?;
        writeln!(f, "speedup: {:.4}", self.speedup)
    }
}

/// `t_orig / t_mod`
pub fn speedup(t_orig: f64, t_mod: f64) -> f64 {
    t_orig / t_mod
}

/// Median of a non-empty sample; mean of the middle pair for even lengths.
pub fn median(samples: &[f64]) -> f64 {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    BuildModel,
    GenerateInput,
    Warmup,
    Timed,
}

/// One instrumented interval, relative to the start of the call.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseSpan {
    pub phase: Phase,
    pub label: String,
    pub start: Duration,
    pub end: Duration,
}

struct PhaseLog {
    t0: Instant,
    spans: Vec<PhaseSpan>,
}

impl PhaseLog {
    fn new() -> Self {
        Self {
            t0: Instant::now(),
            spans: Vec::new(),
        }
    }

    fn span<R>(&mut self, phase: Phase, label: &str, f: impl FnOnce() -> R) -> (R, Duration) {
        let start = self.t0.elapsed();
        let t = Instant::now();
        let out = f();
        let took = t.elapsed();
        self.spans.push(PhaseSpan {
            phase,
            label: label.to_string(),
            start,
            end: self.t0.elapsed(),
        });
        (out, took)
    }
}

struct Runner {
    variant: BenchVariant,
    model: Model,
}

impl Runner {
    fn run(&self, input: &Tensor) -> Result<Tensor> {
        match self.variant {
            BenchVariant::Downsample => {
                let (h, w, _) = input.dims3("downsample")?;
                let small = tensor::bilinear_resize(input, h / 2, w / 2)?;
                let logits = self.model.forward(&small)?;
                tensor::bilinear_resize(&logits, h / 4, w / 4)
            }
            _ => self.model.forward(input),
        }
    }
}

/// Result of one interleaved measurement at a single resolution.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Measurement {
    pub records: Vec<BenchmarkRecord>,
    pub phases: Vec<PhaseSpan>,
}

/// Measures `original` plus every entry of `variants` on one `H × W` input.
/// Records come back in the order of `variants`.
pub fn measure(
    variants: &[BenchVariant],
    height: usize,
    width: usize,
    opts: &BenchOptions,
) -> Result<Measurement> {
    opts.validate()?;
    let mut order = vec![BenchVariant::Original];
    for &v in variants {
        let cfg = v.config(&opts.base);
        cfg.validate()?;
        v.check_input(&cfg, height, width)?;
        if !order.contains(&v) {
            order.push(v);
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| run_measurement(&order, variants, height, width, opts))
}

fn run_measurement(
    order: &[BenchVariant],
    variants: &[BenchVariant],
    height: usize,
    width: usize,
    opts: &BenchOptions,
) -> Result<Measurement> {
    let mut log = PhaseLog::new();
    let mut runners = Vec::with_capacity(order.len());
    for &v in order {
        let (model, _) = log.span(Phase::BuildModel, v.name(), || {
            random_model(v.config(&opts.base), opts.seed)
        });
        runners.push(Runner {
            variant: v,
            model: model?,
        });
    }
    let (input, _) = log.span(Phase::GenerateInput, "input", || {
        random_tensor(
            &[height, width, opts.base.in_channels],
            opts.seed.wrapping_add(1),
        )
    });
    let input = input?;

    for _ in 0..opts.warmup {
        for r in &runners {
            let (out, _) = log.span(Phase::Warmup, r.variant.name(), || r.run(&input));
            std::hint::black_box(out?);
        }
    }
    let mut times = vec![Vec::with_capacity(opts.reps); runners.len()];
    for _ in 0..opts.reps {
        for (r, t) in runners.iter().zip(&mut times) {
            let (out, took) = log.span(Phase::Timed, r.variant.name(), || r.run(&input));
            std::hint::black_box(out?);
            t.push(took.as_secs_f64());
        }
    }

    let medians: Vec<f64> = times.iter().map(|t| median(t)).collect();
    let t_orig = medians[0];
    let records = variants
        .iter()
        .map(|&v| {
            let i = order.iter().position(|&o| o == v).unwrap_or(0);
            BenchmarkRecord {
                variant: v,
                height,
                width,
                warmup_runs: opts.warmup,
                timed_runs: opts.reps,
                median_s: medians[i],
                t_orig_s: t_orig,
                speedup: if v == BenchVariant::Original {
                    1.0
                } else {
                    speedup(t_orig, medians[i])
                },
            }
        })
        .collect();
    Ok(Measurement {
        records,
        phases: log.spans,
    })
}

/// Latency of `variant` and its speedup over `original` at `H × W`.
pub fn bench(
    variant: BenchVariant,
    height: usize,
    width: usize,
    opts: &BenchOptions,
) -> Result<BenchmarkRecord> {
    let mut m = measure(&[variant], height, width, opts)?;
    Ok(m.records.remove(0))
}

/// Cartesian product `variants × resolutions`, variant-major. The baseline
/// is re-measured once per resolution alongside that resolution's variants.
pub fn sweep(
    variants: &[BenchVariant],
    resolutions: &[(usize, usize)],
    opts: &BenchOptions,
) -> Result<Vec<BenchmarkRecord>> {
    if variants.is_empty() || resolutions.is_empty() {
        return Err(Error::Config(
            "sweep needs at least one variant and one resolution".into(),
        ));
    }
    opts.validate()?;
    for &v in variants {
        let cfg = v.config(&opts.base);
        cfg.validate()?;
        for &(h, w) in resolutions {
            v.check_input(&cfg, h, w)?;
        }
    }
    let mut per_res = Vec::with_capacity(resolutions.len());
    for &(h, w) in resolutions {
        per_res.push(measure(variants, h, w, opts)?.records);
    }
    let mut rows = Vec::with_capacity(variants.len() * resolutions.len());
    for vi in 0..variants.len() {
        for recs in &per_res {
            rows.push(recs[vi].clone());
        }
    }
    Ok(rows)
}

/// RFC-4180 CSV with header `variant,H,W,median_s,speedup`.
pub fn write_csv<W: Write>(records: &[BenchmarkRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["variant", "H", "W", "median_s", "speedup"])?;
    for r in records {
        w.write_record([
            r.variant.name().to_string(),
            r.height.to_string(),
            r.width.to_string(),
            format!("{:.6}", r.median_s),
            format!("{:.4}", r.speedup),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Parses `HxW` (or a bare `N` for square inputs).
pub fn parse_resolution(s: &str) -> Result<(usize, usize)> {
    let bad = || Error::Config(format!("bad resolution '{s}' (expected HxW)"));
    let mut parts = s.split(['x', 'X']);
    let h: usize = parts
        .next()
        .ok_or_else(bad)?
        .trim()
        .parse()
        .map_err(|_| bad())?;
    let w: usize = match parts.next() {
        Some(p) => p.trim().parse().map_err(|_| bad())?,
        None => h,
    };
    if parts.next().is_some() {
        return Err(bad());
    }
    Ok((h, w))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_opts() -> BenchOptions {
        let mut base = ModelConfig::toy();
        for (s, ch) in base.stages.iter_mut().zip([8, 16, 24, 32]) {
            s.channels = ch;
            s.depth = 1;
            s.heads = 1;
        }
        base.decoder_dim = 8;
        base.num_classes = 3;
        BenchOptions {
            warmup: 0,
            reps: 3,
            seed: 7,
            threads: 1,
            base,
        }
    }

    #[test]
    fn speedup_definition() {
        assert_eq!(speedup(2.0, 1.0), 2.0);
    }

    #[test]
    fn median_odd_and_even() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn original_speedup_is_one() {
        let r = bench(BenchVariant::Original, 128, 128, &tiny_opts()).unwrap();
        assert_eq!(r.speedup, 1.0);
        assert_eq!(r.median_s, r.t_orig_s);
        assert!(r.median_s > 0.0);
        assert_eq!(r.timed_runs, 3);
    }

    #[test]
    fn rejects_before_timing() {
        let mut o = tiny_opts();
        o.reps = 2;
        assert!(matches!(
            bench(BenchVariant::Fast, 128, 128, &o),
            Err(Error::Config(_))
        ));
        assert!(bench(BenchVariant::Fast, 100, 128, &tiny_opts()).is_err());
        assert!(matches!(
            bench(BenchVariant::Downsample, 64, 64, &tiny_opts()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn timing_excludes_setup() {
        let m = measure(
            &[BenchVariant::Fast, BenchVariant::Downsample],
            128,
            128,
            &tiny_opts(),
        )
        .unwrap();
        let setup_end = m
            .phases
            .iter()
            .filter(|p| matches!(p.phase, Phase::BuildModel | Phase::GenerateInput))
            .map(|p| p.end)
            .max()
            .unwrap();
        let timed: Vec<_> = m
            .phases
            .iter()
            .filter(|p| p.phase == Phase::Timed)
            .collect();
        assert_eq!(timed.len(), 3 * 3);
        assert!(timed.iter().all(|p| p.start >= setup_end));
        assert_eq!(
            m.phases
                .iter()
                .filter(|p| p.phase == Phase::BuildModel)
                .count(),
            3
        );
    }

    #[test]
    fn sweep_rows_and_csv() {
        let vs = [
            BenchVariant::Original,
            BenchVariant::Hq,
            BenchVariant::Downsample,
        ];
        let res = [(128, 128), (128, 256), (256, 128)];
        let rows = sweep(&vs, &res, &tiny_opts()).unwrap();
        assert_eq!(rows.len(), 9);
        assert_eq!(rows[0].variant, BenchVariant::Original);
        assert_eq!((rows[1].height, rows[1].width), (128, 256));
        assert_eq!(rows[3].variant, BenchVariant::Hq);
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 10);
        assert_eq!(text.lines().next().unwrap(), "variant,H,W,median_s,speedup");
    }

    #[test]
    fn variant_names_round_trip() {
        for v in BenchVariant::ALL {
            assert_eq!(v.name().parse::<BenchVariant>().unwrap(), v);
        }
        assert!("turbo".parse::<BenchVariant>().is_err());
    }

    #[test]
    fn resolutions_parse() {
        assert_eq!(parse_resolution("2048x1024").unwrap(), (2048, 1024));
        assert_eq!(parse_resolution("512").unwrap(), (512, 512));
        assert!(parse_resolution("1x2x3").is_err());
        assert!(parse_resolution("abc").is_err());
    }
}
