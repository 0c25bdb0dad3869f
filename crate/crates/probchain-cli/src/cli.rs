use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Monte-Carlo experiments on error propagation in probability products.
///
/// Every run is reproducible from its seed: the same seed and parameters
/// produce byte-identical CSV bodies regardless of --jobs. Option
/// precedence is command line > config file > defaults.
#[derive(Debug, Parser)]
#[command(name = "probchain", version, about, max_term_width = 100)]
pub struct Cli {
    /// 32-bit seed, or the literal `time-microseconds` to seed from the
    /// microseconds field of the start time [default: 42]
    #[arg(long, global = true, value_parser = parse_seed)]
    pub seed: Option<SeedArg>,

    /// Output directory [default: $PROBCHAIN_OUTDIR or .]
    #[arg(long, global = true)]
    pub outdir: Option<PathBuf>,

    /// Scale preset for sample counts [default: desk]
    #[arg(long, global = true, value_enum)]
    pub scale: Option<Scale>,

    /// Worker thread count [default: all cores]
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    /// Flat key=value config file, overridden by explicit flags
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeedArg {
    Fixed(u32),
    TimeMicroseconds,
}

pub fn parse_seed(s: &str) -> Result<SeedArg, String> {
    if s == "time-microseconds" {
        return Ok(SeedArg::TimeMicroseconds);
    }
    s.parse::<u32>()
        .map(SeedArg::Fixed)
        .map_err(|_| format!("expected a 32-bit integer or `time-microseconds`, got {s:?}"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Scale {
    /// Full published sample counts.
    Paper,
    /// At least 16x smaller, for desk and CI runs.
    Desk,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NoiseArg {
    Uniform,
    Gaussian,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Relative error of probability products over the amplitude and
    /// chain-length grid; writes a long-form CSV and per-n plot data.
    Errprop(ErrpropArgs),
    /// Sum-log histograms and the continuous-Poisson model fit.
    Cpoiss(CpoissArgs),
    /// Balanced-tree lexical search under perturbed transition
    /// probabilities.
    Treeclass(TreeclassArgs),
    /// Letter-count nearest-neighbor word classification.
    Lexnn(LexnnArgs),
    /// Transition-matrix flattening test on discrete HMMs.
    Hmmflat(HmmflatArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Errprop(_) => "errprop",
            Command::Cpoiss(_) => "cpoiss",
            Command::Treeclass(_) => "treeclass",
            Command::Lexnn(_) => "lexnn",
            Command::Hmmflat(_) => "hmmflat",
        }
    }
}

#[derive(Debug, Args)]
pub struct ErrpropArgs {
    /// Noise family [default: uniform]
    #[arg(long, value_enum)]
    pub noise: Option<NoiseArg>,

    /// Fold perturbed probabilities back into [0, 1]
    #[arg(long)]
    pub truncated: bool,

    /// Probability vectors per repetition and amplitude
    /// [default: paper 100000, desk 10000]
    #[arg(long)]
    pub samples: Option<usize>,

    /// Repetitions averaged per grid cell [default: paper 20, desk 5]
    #[arg(long)]
    pub repetitions: Option<usize>,

    /// Run amplitude curves at these chain lengths instead of the
    /// standard table grid (comma separated)
    #[arg(long, value_delimiter = ',')]
    pub chain_lengths: Option<Vec<usize>>,

    /// Amplitude grid step for curve mode [default: 0.01]
    #[arg(long)]
    pub amplitude_step: Option<f64>,

    /// Amplitude count for curve mode [default: 100]
    #[arg(long)]
    pub amplitude_count: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CpoissArgs {
    /// Chain lengths, used as the Poisson lambdas (comma separated)
    /// [default: 11,21,31,41]
    #[arg(long, value_delimiter = ',')]
    pub lambdas: Option<Vec<usize>>,

    /// Lower bound of the probability interval [default: 0]
    #[arg(long)]
    pub pmin: Option<f64>,

    /// Upper bound of the probability interval [default: 0.84]
    #[arg(long)]
    pub pmax: Option<f64>,

    /// Sum-log samples per lambda [default: paper 1000000, desk 100000]
    #[arg(long)]
    pub samples: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TreeclassArgs {
    /// Tree depths (comma separated) [default: 3,5,7,9]
    #[arg(long, value_delimiter = ',')]
    pub depths: Option<Vec<usize>>,

    /// Tree breadths (comma separated) [default: 2,3,4,5,6]
    #[arg(long, value_delimiter = ',')]
    pub breadths: Option<Vec<usize>>,

    /// Perturbation amplitudes (comma separated)
    /// [default: 0.01,0.02,0.04,0.08,0.16,0.32]
    #[arg(long, value_delimiter = ',')]
    pub eps: Option<Vec<f64>>,

    /// Random models per (depth, breadth) topology
    /// [default: paper 100, desk 25]
    #[arg(long)]
    pub models: Option<usize>,

    /// Perturbation trials per model and eps [default: paper 400, desk 100]
    #[arg(long)]
    pub trials: Option<usize>,

    /// Cap on root-to-leaf paths per tree; larger topologies are
    /// skipped [default: 10000000]
    #[arg(long)]
    pub budget: Option<u64>,
}

#[derive(Debug, Args)]
pub struct LexnnArgs {
    /// Lexicon file: UTF-8, one word per line, '#' comments
    #[arg(long, required = true)]
    pub lexicon: PathBuf,

    /// Words sampled per repetition [default: paper 20000, desk 2000]
    #[arg(long)]
    pub sample: Option<usize>,

    /// Repetitions [default: paper 6, desk 3]
    #[arg(long)]
    pub repeats: Option<usize>,

    /// Bipolar count-noise amplitude [default: 0.0001]
    #[arg(long)]
    pub noise: Option<f64>,
}

#[derive(Debug, Args)]
pub struct HmmflatArgs {
    /// Model files (comma separated); at least two. Without this flag a
    /// built-in demo pair is used
    #[arg(long, value_delimiter = ',')]
    pub models: Option<Vec<PathBuf>>,

    /// Built-in demo model pair when no files are given
    /// [default: cycles]
    #[arg(long, value_enum)]
    pub demo: Option<DemoSet>,

    /// Test sequences generated per class [default: paper 10000, desk 1000]
    #[arg(long)]
    pub sequences: Option<usize>,

    /// Length of each test sequence [default: 20]
    #[arg(long)]
    pub length: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DemoSet {
    /// Two deterministic symbol cycles with identical symbol
    /// frequencies; flattening collapses accuracy to chance.
    Cycles,
    /// Two models that differ only in emissions over a uniform
    /// transition matrix; flattening changes nothing.
    Emissions,
}
