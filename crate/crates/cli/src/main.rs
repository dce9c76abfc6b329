use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use segmerge::bench::{self, parse_resolution, BenchOptions, BenchVariant};
use segmerge::cost::model_cost;
use segmerge::encoder::ModelConfig;
use segmerge::io::{load_config, random_model, save_weights};
use segmerge::{Error, Result};

#[derive(Parser)]
#[command(
    name = "segmerge",
    version,
    about = "Latency benchmarks and cost reports for token-merging attention"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Time one variant against the original model.
    Bench(BenchArgs),
    /// Time every variant at every resolution and write a CSV report.
    Sweep(SweepArgs),
    /// Print the analytical attention cost of a configuration.
    Cost(CostArgs),
    /// Write seeded random weights and the matching config.
    GenWeights(GenArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Hq,
    Fast,
}

impl Preset {
    fn variant(self) -> BenchVariant {
        match self {
            Preset::Hq => BenchVariant::Hq,
            Preset::Fast => BenchVariant::Fast,
        }
    }
}

#[derive(Args)]
struct ModelArgs {
    /// Model variant: original, hq, fast, neighbor2d, tome_sd, vanilla, downsample.
    #[arg(long, conflicts_with = "preset")]
    variant: Option<BenchVariant>,
    /// Shorthand for `--variant hq` or `--variant fast`.
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    /// Base model config (JSON); defaults to the built-in toy model.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl ModelArgs {
    fn variant(&self) -> Option<BenchVariant> {
        self.variant.or(self.preset.map(Preset::variant))
    }

    fn base(&self) -> Result<ModelConfig> {
        match &self.config {
            Some(p) => load_config(p),
            None => Ok(ModelConfig::toy()),
        }
    }
}

#[derive(Args)]
struct TimingArgs {
    #[arg(long, default_value_t = 3)]
    warmup: usize,
    #[arg(long, default_value_t = 10)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

impl TimingArgs {
    fn options(&self, base: ModelConfig) -> BenchOptions {
        BenchOptions {
            warmup: self.warmup,
            reps: self.reps,
            seed: self.seed,
            threads: self.threads,
            base,
        }
    }
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    timing: TimingArgs,
    #[arg(long, default_value_t = 512)]
    height: usize,
    #[arg(long, default_value_t = 512)]
    width: usize,
    /// Also write the record as CSV to this path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Comma-separated variants.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "original,hq,fast,neighbor2d,downsample"
    )]
    variants: Vec<BenchVariant>,
    /// Comma-separated resolutions as HxW.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "512x512,1024x1024,2048x1024"
    )]
    resolutions: Vec<String>,
    /// Base model config (JSON); defaults to the built-in toy model.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    timing: TimingArgs,
    /// CSV destination; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CostArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 1024)]
    height: usize,
    #[arg(long, default_value_t = 1024)]
    width: usize,
    /// Emit JSON instead of the text report.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// File stem: writes `<name>.manifest.json`, `<name>.weights.bin`, `<name>.config.json`.
    #[arg(long, default_value = "toy")]
    name: String,
}

fn write_csv_to(records: &[bench::BenchmarkRecord], path: Option<&Path>) -> Result<()> {
    match path {
        Some(p) => bench::write_csv(records, BufWriter::new(File::create(p)?)),
        None => bench::write_csv(records, io::stdout().lock()),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Bench(a) => {
            let variant = a.model.variant().unwrap_or(BenchVariant::Fast);
            let opts = a.timing.options(a.model.base()?);
            let record = bench::bench(variant, a.height, a.width, &opts)?;
            print!("{record}");
            if let Some(p) = &a.out {
                write_csv_to(std::slice::from_ref(&record), Some(p))?;
            }
        }
        Command::Sweep(a) => {
            let resolutions = a
                .resolutions
                .iter()
                .map(|r| parse_resolution(r))
                .collect::<Result<Vec<_>>>()?;
            let base = match &a.config {
                Some(p) => load_config(p)?,
                None => ModelConfig::toy(),
            };
            let rows = bench::sweep(&a.variants, &resolutions, &a.timing.options(base))?;
            write_csv_to(&rows, a.out.as_deref())?;
        }
        Command::Cost(a) => {
            let base = a.model.base()?;
            let config = match a.model.variant() {
                Some(BenchVariant::Downsample) => {
                    return Err(Error::Config(
                        "downsample has no attention cost of its own".into(),
                    ))
                }
                Some(v) => v.config(&base),
                None => base,
            };
            let report = model_cost(&config, a.height, a.width)?;
            let mut out = io::stdout().lock();
            if a.json {
                writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?;
            } else {
                write!(out, "{report}")?;
            }
        }
        Command::GenWeights(a) => {
            let base = a.model.base()?;
            let config = match a.model.variant() {
                Some(v) => v.config(&base),
                None => base,
            };
            std::fs::create_dir_all(&a.out)?;
            let model = random_model(config, a.seed)?;
            let files = save_weights(&model, &a.out, &a.name)?;
            println!("manifest: {}", files.manifest.display());
            println!("weights: {}", files.blob.display());
            println!("config: {}", files.config.display());
            println!("parameters: {}", model.num_parameters());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
