//! `dsp`: dataset generation, training, evaluation and export.

mod commands;
mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "dsp",
    version,
    about = "Dynamic semantic prototype training for generative zero-shot learning"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate or validate a dataset directory.
    Data {
        #[command(subcommand)]
        action: DataCmd,
    },
    /// Train on a dataset, evaluate, and write run artifacts.
    Train(TrainArgs),
    /// Evaluate a checkpoint, optionally retraining an ablated variant.
    Eval(EvalArgs),
    /// Write a 2-D PCA of real and synthesized unseen features.
    ExportEmbed(ExportArgs),
    /// Train and evaluate several variants over several seeds.
    Sweep(SweepArgs),
}

#[derive(Subcommand)]
enum DataCmd {
    Gen {
        #[arg(long, value_enum, default_value = "mini")]
        preset: DataPreset,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write CSV mirrors of features and prototypes.
        #[arg(long)]
        csv: bool,
        out: PathBuf,
    },
    Check {
        dir: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum DataPreset {
    /// Small synthetic benchmark with corrupted prototypes.
    Mini,
    /// 200-class, 312-attribute scaffold without samples.
    CubShape,
}

#[derive(Args)]
struct ConfigArgs {
    /// `key = value` configuration file.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Named configuration preset (default: mini).
    #[arg(long)]
    preset: Option<String>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, conflicts_with = "baseline")]
    ablate: Option<AblateArg>,
    /// Turn every DSP path off.
    #[arg(long)]
    baseline: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum AblateArg {
    NoScyc,
    NoS2s,
    NoV2s,
    NoSmooth,
    NoEnhance,
}

impl AblateArg {
    fn name(self) -> &'static str {
        match self {
            AblateArg::NoScyc => "no-scyc",
            AblateArg::NoS2s => "no-s2s",
            AblateArg::NoV2s => "no-v2s",
            AblateArg::NoSmooth => "no-smooth",
            AblateArg::NoEnhance => "no-enhance",
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    dataset: PathBuf,
    #[command(flatten)]
    cfg: ConfigArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    checkpoint: PathBuf,
    dataset: PathBuf,
    /// Configuration used for training (default: config.txt next to the checkpoint).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, conflicts_with = "baseline")]
    ablate: Option<AblateArg>,
    #[arg(long)]
    baseline: bool,
    /// Metrics CSV to write.
    #[arg(long, default_value = "metrics.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct ExportArgs {
    checkpoint: PathBuf,
    dataset: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    dataset: PathBuf,
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
    seeds: Vec<u64>,
    /// Comma-separated variants: full, baseline, no-scyc, no-s2s, no-v2s, no-smooth, no-enhance.
    #[arg(long, value_delimiter = ',', default_value = "baseline,full")]
    variants: Vec<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug)]
pub enum CliError {
    Core(dsp_core::Error),
    Usage(String),
    Io(PathBuf, std::io::Error),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Io(path.to_path_buf(), e)
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_format_error() => 2,
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Io(p, e) => write!(f, "{}: {e}", p.display()),
        }
    }
}

impl From<dsp_core::Error> for CliError {
    fn from(e: dsp_core::Error) -> Self {
        CliError::Core(e)
    }
}

fn init_threads() {
    if let Some(n) = std::env::var("DSP_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
    {
        // Ignore failure: the global pool may already exist.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global();
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_threads();
    let result = match cli.command {
        Cmd::Data { action } => match action {
            DataCmd::Gen {
                preset,
                seed,
                csv,
                out,
            } => commands::data_gen(preset, seed, csv, &out),
            DataCmd::Check { dir } => commands::data_check(&dir),
        },
        Cmd::Train(a) => commands::train(&a),
        Cmd::Eval(a) => commands::eval(&a),
        Cmd::ExportEmbed(a) => commands::export_embed(&a),
        Cmd::Sweep(a) => commands::sweep(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
