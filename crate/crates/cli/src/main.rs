//! `microexp`: synthesize data, inspect architectures, train, evaluate, run
//! the kernel ablation grid and export saliency maps.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Failure classes mapped onto exit codes 2 and 1.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl From<microexp_core::Error> for CliError {
    fn from(e: microexp_core::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

#[derive(Parser)]
#[command(name = "microexp", version, about = "3D-CNN micro-expression recognition toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum KindArg {
    Stcnn,
    FuseIntermediate,
    FuseLate,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum PrecisionArg {
    F32,
    F64,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum TemporalArg {
    Uniform,
    Head,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SignArg {
    Abs,
    Relu,
}

/// Architecture overrides.
#[derive(Args, Debug, Default)]
pub struct ArchFlags {
    #[arg(long)]
    pub kind: Option<KindArg>,
    /// Temporal depth in frames.
    #[arg(long)]
    pub depth: Option<usize>,
    /// Spatial side of each input stream.
    #[arg(long)]
    pub hw: Option<usize>,
    /// Convolution kernel as h,w,d.
    #[arg(long, value_parser = parse_kernel)]
    pub kernel: Option<[usize; 3]>,
    #[arg(long)]
    pub filters: Option<usize>,
    /// Hidden dense widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
}

/// Training overrides.
#[derive(Args, Debug, Default)]
pub struct TrainFlags {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub precision: Option<PrecisionArg>,
    #[arg(long)]
    pub eval_every: Option<usize>,
    /// Fraction of the dataset assigned to training when splitting.
    #[arg(long)]
    pub split_fraction: Option<f64>,
    #[arg(long)]
    pub split_seed: Option<u64>,
    /// Frame selection when clips are longer than the model depth.
    #[arg(long)]
    pub sampling: Option<TemporalArg>,
}

fn parse_kernel(s: &str) -> Result<[usize; 3], String> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|e| format!("`{p}`: {e}")))
        .collect::<Result<_, _>>()?;
    <[usize; 3]>::try_from(parts).map_err(|p| format!("expected h,w,d, got {} values", p.len()))
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic motion-blob dataset.
    Synth {
        #[arg(long, value_parser = clap::value_parser!(u64).range(2..))]
        classes: u64,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        per_class: u64,
        #[arg(long, default_value_t = 64, value_parser = clap::value_parser!(u64).range(4..))]
        hw: u64,
        #[arg(long, default_value_t = 96, value_parser = clap::value_parser!(u64).range(1..))]
        depth: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print layer output shapes and parameter counts.
    Inspect {
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        arch: ArchFlags,
    },
    /// Train a model and write checkpoint and metrics.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Dataset manifest or its directory.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        arch: ArchFlags,
        #[command(flatten)]
        train: TrainFlags,
    },
    /// Evaluate a checkpoint on the validation subset.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Train one model per (s, s, t) kernel and tabulate the accuracies.
    Ablate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "3,5,7")]
        spatial: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "3,7,15,19")]
        temporal: Vec<usize>,
        /// Grid cells trained concurrently.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[command(flatten)]
        arch: ArchFlags,
        #[command(flatten)]
        train: TrainFlags,
    },
    /// Export input-gradient saliency frames for one clip.
    Saliency {
        #[arg(long)]
        ckpt: PathBuf,
        /// Clip pack or directory of PGM frames.
        #[arg(long)]
        clip: PathBuf,
        #[arg(long)]
        landmarks: Option<PathBuf>,
        #[arg(long = "class")]
        class: usize,
        #[arg(long, default_value_t = 90.0)]
        percentile: f64,
        #[arg(long, value_enum, default_value = "abs")]
        sign: SignArg,
        #[arg(long, value_enum, default_value = "uniform")]
        sampling: TemporalArg,
        /// Fail unless the eyes/mouth/other energy report can be produced.
        #[arg(long)]
        regions: bool,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Synth {
            classes,
            per_class,
            hw,
            depth,
            seed,
            out,
        } => commands::synth(classes as usize, per_class as usize, hw as usize, depth as usize, seed, &out),
        Command::Inspect { config, arch } => commands::inspect(config.as_deref(), &arch),
        Command::Train {
            config,
            data,
            out,
            arch,
            train,
        } => commands::train(config.as_deref(), data.as_deref(), &out, &arch, &train),
        Command::Eval { ckpt, data } => commands::eval(&ckpt, &data),
        Command::Ablate {
            config,
            data,
            out,
            spatial,
            temporal,
            jobs,
            arch,
            train,
        } => commands::ablate(
            config.as_deref(),
            data.as_deref(),
            &out,
            spatial,
            temporal,
            jobs,
            &arch,
            &train,
        ),
        Command::Saliency {
            ckpt,
            clip,
            landmarks,
            class,
            percentile,
            sign,
            sampling,
            regions,
            out,
        } => commands::saliency(commands::SaliencyArgs {
            ckpt,
            clip,
            landmarks,
            class,
            percentile,
            sign,
            sampling,
            regions,
            out,
        }),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            eprintln!("run `microexp --help` for usage");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
