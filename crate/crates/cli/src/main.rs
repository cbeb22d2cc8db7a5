mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use bmt_core::cfa::CfaPattern;
use bmt_core::cost::OpsConvention;

/// Exit status for malformed invocations.
const EXIT_USAGE: u8 = 1;
/// Exit status for unreadable, inconsistent or malformed data.
const EXIT_DATA: u8 = 2;
/// Exit status when a verification suite reports failures.
const EXIT_VERIFY: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "bmtnet", version, about = "Binarized Mamba-Transformer demosaicing for hybrid event sensors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Mosaic an RGB image and erase event pixels.
    Simulate(SimulateArgs),
    /// Reconstruct RGB from a RAW frame and its event mask.
    Demosaic(DemosaicArgs),
    /// Parameter and operation counts of a model configuration.
    Account(AccountArgs),
    /// PSNR and SSIM between two images.
    Metrics(MetricsArgs),
    /// Kernel throughput against the float baseline.
    Bench(BenchArgs),
    /// Run the verification suites.
    Check(CheckArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum Pattern {
    Quad,
    Bayer,
}

impl From<Pattern> for CfaPattern {
    fn from(p: Pattern) -> Self {
        match p {
            Pattern::Quad => CfaPattern::QuadBayer,
            Pattern::Bayer => CfaPattern::Bayer,
        }
    }
}

#[derive(Args, Debug, Serialize)]
struct SimulateArgs {
    /// Source RGB image (PNG, PPM).
    #[arg(long)]
    input: PathBuf,
    /// RAW output, written as a 16-bit PGM.
    #[arg(long)]
    output: PathBuf,
    /// Event mask sidecar; defaults to the output path with a `.mask` extension.
    #[arg(long)]
    mask: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fraction of event pixels per 4x4 tile.
    #[arg(long, default_value_t = bmt_core::cfa::DEFAULT_EVENT_DENSITY, value_parser = unit_interval)]
    event_density: f64,
    /// Standard deviation of additive Gaussian noise on the [0, 1] scale.
    #[arg(long, value_parser = non_negative)]
    noise_sigma: Option<f64>,
    #[arg(long, value_enum, default_value_t = Pattern::Quad)]
    pattern: Pattern,
}

#[derive(Args, Debug, Serialize)]
struct DemosaicArgs {
    /// RAW input (16-bit or 8-bit PGM, or single-channel PNG).
    #[arg(long)]
    raw: PathBuf,
    /// Event mask sidecar; without one no pixel is treated as an event.
    #[arg(long)]
    mask: Option<PathBuf>,
    /// Weight container; without one the model uses its seeded random init.
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Model configuration: a TOML file or a preset (@default, @compact, @fp-mamba).
    #[arg(long, default_value = "@default")]
    config: String,
    /// 8-bit RGB PNG output.
    #[arg(long)]
    output: PathBuf,
    /// Run the main network on tiles of this size.
    #[arg(long)]
    tile: Option<usize>,
    /// Context around each tile; defaults to half the tile.
    #[arg(long, requires = "tile")]
    overlap: Option<usize>,
    /// Use the classical bilinear demosaic instead of the network.
    #[arg(long)]
    bilinear: bool,
    /// CFA layout assumed by `--bilinear`.
    #[arg(long, value_enum, default_value_t = Pattern::Quad)]
    pattern: Pattern,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Convention {
    /// Parametric layers only.
    Layers,
    /// Also charge scans, attention products, norms and activations.
    Full,
}

impl From<Convention> for OpsConvention {
    fn from(c: Convention) -> Self {
        match c {
            Convention::Layers => OpsConvention::Layers,
            Convention::Full => OpsConvention::Full,
        }
    }
}

#[derive(Args, Debug, Serialize)]
struct AccountArgs {
    /// Model configuration: a TOML file or a preset (@default, @compact, @fp-mamba).
    #[arg(long, default_value = "@default")]
    config: String,
    /// Input size as HxW.
    #[arg(long, default_value = "256x256", value_parser = resolution)]
    resolution: (usize, usize),
    /// Baseline configuration to report reductions against.
    #[arg(long)]
    compare: Option<String>,
    #[arg(long, value_enum, default_value_t = Convention::Layers)]
    convention: Convention,
    /// Also write the per-layer CSV here.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct MetricsArgs {
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Kernel {
    XnorGemm,
    Scan,
}

#[derive(Args, Debug, Serialize)]
struct BenchArgs {
    #[arg(long, value_enum, default_value_t = Kernel::XnorGemm)]
    kernel: Kernel,
    /// Comma-separated sizes (GEMM depth or scan length).
    #[arg(long, value_delimiter = ',', value_parser = positive)]
    sizes: Vec<usize>,
    /// Minimum timing budget per measurement.
    #[arg(long, default_value_t = 200)]
    budget_ms: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum SuiteArg {
    All,
    Kernels,
    Scan,
    Blocks,
    Sim,
}

#[derive(Args, Debug, Serialize)]
struct CheckArgs {
    #[arg(long, value_enum, default_value_t = SuiteArg::All)]
    suite: SuiteArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn unit_interval(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("{v} is outside [0, 1]"))
    }
}

fn non_negative(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{v} must be a finite non-negative number"))
    }
}

fn positive(s: &str) -> Result<usize, String> {
    match s.trim().parse::<usize>() {
        Ok(n) if n > 0 => Ok(n),
        _ => Err(format!("'{s}' is not a positive integer")),
    }
}

fn resolution(s: &str) -> Result<(usize, usize), String> {
    let (h, w) = s.split_once(['x', 'X']).ok_or_else(|| format!("expected HxW, got '{s}'"))?;
    Ok((positive(h)?, positive(w)?))
}

/// Prints the fully resolved arguments of a run.
fn echo<T: Serialize>(command: &str, args: &T) {
    let json = serde_json::to_string(args).unwrap_or_else(|e| format!("<unserializable: {e}>"));
    println!("{command}: {json}");
}

/// The error chain joined with `: `, skipping causes whose text the
/// previous message already contains.
fn describe(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if !out.contains(&msg) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&msg);
        }
    }
    out
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => {
            echo("simulate", &a);
            commands::simulate(&a)
        }
        Command::Demosaic(a) => {
            echo("demosaic", &a);
            commands::demosaic(&a)
        }
        Command::Account(a) => {
            echo("account", &a);
            commands::account(&a)
        }
        Command::Metrics(a) => {
            echo("metrics", &a);
            commands::metrics(&a)
        }
        Command::Bench(a) => {
            echo("bench", &a);
            commands::bench(&a)
        }
        Command::Check(a) => {
            echo("check", &a);
            commands::check(&a)
        }
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_VERIFY),
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(EXIT_DATA)
        }
    }
}
