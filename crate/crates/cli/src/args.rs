use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use symselect_core::harness::DEFAULT_SEED;

#[derive(Debug, Parser)]
#[command(
    name = "symselect",
    version,
    about = "QuickSelect on words from probabilistic sources: simulation, limit laws and expectations"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOptions,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalOptions {
    /// Master seed for every random stream.
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Output file (or directory for `converge`); stdout when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Progress messages on stderr; repeat for more.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    /// Worker threads for replications and quadrature grids.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Describe a source.
    Source {
        #[command(subcommand)]
        action: SourceAction,
    },
    /// Run QuickVal, QuickQuant or random-pivot QuickSelect.
    Simulate(SimulateArgs),
    /// Draw samples of the limit S.
    SampleLimit(SampleLimitArgs),
    /// Evaluate E S, or the QuickRand average with `expect quickrand`.
    Expect(ExpectArgs),
    /// Coupled convergence experiment from a config file.
    Converge(ConvergeArgs),
    /// Compare the pivot-chain measure of a rectangle with its closed form.
    NuCheck(NuCheckArgs),
    /// Draw Dickman samples.
    Dickman(DickmanArgs),
}

#[derive(Debug, Subcommand)]
pub enum SourceAction {
    Inspect(InspectArgs),
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[arg(long, default_value = "uniform-binary")]
    pub source: String,
    /// Prefix to locate, as digits (`0110`) or a comma list (`0,12,3`).
    #[arg(long)]
    pub prefix: Option<String>,
    /// Requested tameness exponent for the symbol cost.
    #[arg(long, default_value_t = 0.1)]
    pub epsilon: f64,
    /// Number of `pi_k` values to list.
    #[arg(long, default_value_t = 8)]
    pub pi_depth: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum AlgoArg {
    Quickval,
    Quickquant,
    QsRandom,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub algo: AlgoArg,
    #[arg(long)]
    pub n: usize,
    /// Target value in [0, 1]; QuickQuant uses rank floor(alpha n) + 1.
    #[arg(long, required_unless_present = "m", conflicts_with = "m")]
    pub alpha: Option<f64>,
    /// Target rank, 1-based (not for QuickVal).
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub reps: usize,
    #[arg(long, default_value = "uniform-binary")]
    pub source: String,
    #[arg(long, default_value = "symbol")]
    pub cost: String,
}

#[derive(Debug, Args)]
pub struct SampleLimitArgs {
    #[arg(long)]
    pub alpha: f64,
    #[arg(long, default_value = "symbol")]
    pub cost: String,
    #[arg(long, default_value = "uniform-binary")]
    pub source: String,
    #[arg(long, default_value_t = 1000)]
    pub reps: usize,
    /// Certified bound on the truncation error of each sample.
    #[arg(long, default_value_t = 1e-3)]
    pub delta: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Closed,
    Series,
    Integral,
}

#[derive(Debug, Args)]
#[command(args_conflicts_with_subcommands = true, subcommand_negates_reqs = true)]
pub struct ExpectArgs {
    #[command(subcommand)]
    pub quickrand: Option<ExpectSub>,
    /// Defaults to closed for the key cost, series for the symbol cost and
    /// integral otherwise.
    #[arg(long, value_enum)]
    pub method: Option<MethodArg>,
    #[arg(long, default_value = "key")]
    pub cost: String,
    #[arg(long, default_value = "uniform-binary")]
    pub source: String,
    #[arg(long, required = true)]
    pub alpha: Option<f64>,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
}

#[derive(Debug, Subcommand)]
pub enum ExpectSub {
    /// Average of E S over a uniformly random target.
    Quickrand(QuickRandArgs),
}

#[derive(Debug, Args)]
pub struct QuickRandArgs {
    #[arg(long, default_value = "key")]
    pub cost: String,
    #[arg(long, default_value = "uniform-binary")]
    pub source: String,
    #[arg(long, default_value_t = 64)]
    pub panels: usize,
    /// Gauss–Legendre nodes per panel.
    #[arg(long, default_value_t = 4)]
    pub points: usize,
    /// Dyadic refinements of the two end panels.
    #[arg(long, default_value_t = 10)]
    pub levels: usize,
    /// Accuracy of each inner evaluation.
    #[arg(long, default_value_t = 1e-3)]
    pub tol: f64,
}

#[derive(Debug, Args)]
pub struct ConvergeArgs {
    #[arg(long)]
    pub config: PathBuf,
}

#[derive(Debug, Args)]
pub struct NuCheckArgs {
    #[arg(long)]
    pub alpha: f64,
    /// `x1,x2,y1,y2` with `x1 < x2 <= alpha <= y1 < y2`.
    #[arg(long, value_delimiter = ',', required = true)]
    pub rect: Vec<f64>,
    #[arg(long, default_value_t = 100_000)]
    pub reps: usize,
}

#[derive(Debug, Args)]
pub struct DickmanArgs {
    #[arg(long, default_value_t = 1000)]
    pub reps: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub delta: f64,
}
