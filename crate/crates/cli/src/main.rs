mod commands;
mod config;
mod run;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use ssb_core::training::{Activation, CellKind, InputInit, OptimizerKind, RecInit};
use ssb_core::{Family, SsbError};

/// Equivariant deep networks: mean-field theory, ensembles and training.
#[derive(Parser, Debug)]
#[command(name = "ssb", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Mean-field c⋆ and ξ_Δ over a grid of σ_w.
    PhaseDiagram(PhaseDiagramArgs),
    /// Empirical ensemble c⋆ against the mean-field fixed point.
    EnsembleCompare(EnsembleArgs),
    /// Deep equivariant MLP on an IDX image dataset.
    TrainMlp(MlpArgs),
    /// Recurrent cell on the variable-delay copy task.
    TrainCopy(CopyArgs),
    /// Recurrent cell on (permuted) sequential images.
    TrainSeqImage(SeqImageArgs),
    /// Convolutional U(1) cell on the copy task.
    TrainConvCopy(ConvCopyArgs),
    /// Vortex statistics of a convolutional U(1) rollout.
    Vortices(VortexArgs),
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct Common {
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Worker threads; defaults to the number of CPUs.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct PhaseDiagramArgs {
    /// `start:stop:step` or a comma-separated list.
    #[arg(long, default_value = "0.5:2.0:0.05")]
    pub sigma: String,
    /// Depth of the finite-depth `c` column in the JSON output.
    #[arg(long, default_value_t = 100)]
    pub depth: usize,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct EnsembleArgs {
    #[arg(long, default_value = "0.5,0.8,1.2,1.5,2.0")]
    pub sigma: String,
    /// Capsules per layer.
    #[arg(long, default_value_t = 16)]
    pub n: usize,
    #[arg(long, default_value_t = 100)]
    pub depth: usize,
    #[arg(long, default_value_t = 200)]
    pub networks: usize,
    /// Exit 1 unless every |theory − empirical| is within `--tol`.
    #[arg(long)]
    pub assert: bool,
    #[arg(long, default_value_t = 0.05)]
    pub tol: f64,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct OptimArgs {
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value = "adam")]
    pub optimizer: OptimizerKind,
    /// Global gradient-norm clip.
    #[arg(long)]
    pub clip: Option<f64>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct DataArgs {
    /// Directory with the four IDX files; falls back to `$SSB_DATA_DIR`.
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    /// Use only the first this many training images.
    #[arg(long)]
    pub train_limit: Option<usize>,
    /// Use only the first this many test images.
    #[arg(long)]
    pub test_limit: Option<usize>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct MlpArgs {
    #[arg(long, default_value = "u1")]
    pub family: Family,
    /// Capsule dimension; U(1) and SO(2) need 2.
    #[arg(long, default_value_t = 2)]
    pub k: usize,
    #[arg(long, default_value_t = 100)]
    pub layers: usize,
    /// Capsules per layer.
    #[arg(long, default_value_t = 64)]
    pub features: usize,
    #[arg(long, default_value_t = 1.5)]
    pub sigma: f64,
    #[arg(long, default_value_t = 5)]
    pub epochs: usize,
    #[arg(long, default_value_t = 256)]
    pub batch: usize,
    #[command(flatten)]
    pub optim: OptimArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct CellArgs {
    /// Recurrent initialization.
    #[arg(long, default_value = "identity")]
    pub rec_init: RecInit,
    /// Input-matrix initialization; `low-var` also freezes the blank column
    /// on copy tasks.
    #[arg(long, default_value = "low-var")]
    pub input_init: InputInit,
    /// Elementwise activation of `rnn_generic`.
    #[arg(long, default_value = "tanh")]
    pub activation: Activation,
    /// Update-gate bias of the GRU cells.
    #[arg(long)]
    pub gate_bias_z: Option<f64>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct CopyTaskArgs {
    /// Maximum delay.
    #[arg(long, default_value_t = 10)]
    pub tmax: usize,
    #[arg(long, default_value_t = 50_000)]
    pub steps: u64,
    #[arg(long, default_value_t = 128)]
    pub batch: usize,
    #[arg(long, default_value_t = 1000)]
    pub eval_every: u64,
    #[arg(long, default_value_t = 50)]
    pub eval_batch: usize,
    /// Stop once the test recall loss falls below this.
    #[arg(long)]
    pub stop_below: Option<f64>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct CopyArgs {
    #[arg(long, default_value = "rnn_u1")]
    pub cell: CellKind,
    /// Hidden units (capsules for equivariant cells).
    #[arg(long, default_value_t = 16)]
    pub n: usize,
    /// Capsule dimension of `rnn_ok`.
    #[arg(long, default_value_t = 2)]
    pub k: usize,
    #[command(flatten)]
    pub cell_opts: CellArgs,
    #[command(flatten)]
    pub task: CopyTaskArgs,
    #[command(flatten)]
    pub optim: OptimArgs,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct ConvGridArgs {
    #[arg(long, default_value_t = 16)]
    pub channels: usize,
    #[arg(long, default_value_t = 20)]
    pub height: usize,
    #[arg(long, default_value_t = 20)]
    pub width: usize,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct ConvCopyArgs {
    #[command(flatten)]
    pub grid: ConvGridArgs,
    #[command(flatten)]
    pub cell_opts: CellArgs,
    #[command(flatten)]
    pub task: CopyTaskArgs,
    #[command(flatten)]
    pub optim: OptimArgs,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct SeqImageArgs {
    #[arg(long, default_value = "rnn_u1")]
    pub cell: CellKind,
    #[arg(long, default_value_t = 64)]
    pub n: usize,
    #[arg(long, default_value_t = 2)]
    pub k: usize,
    #[arg(long, default_value_t = 120)]
    pub epochs: usize,
    #[arg(long, default_value_t = 128)]
    pub batch: usize,
    /// Divide the learning rate by 10 after this many epochs.
    #[arg(long, default_value_t = 100)]
    pub decay_after: usize,
    /// Pixel permutation seed; omit for the unpermuted order.
    #[arg(long)]
    pub permute_seed: Option<u64>,
    #[arg(long, default_value_t = ssb_core::data::VALIDATION_SIZE)]
    pub val_size: usize,
    #[command(flatten)]
    pub cell_opts: CellArgs,
    #[command(flatten)]
    pub optim: OptimArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct VortexArgs {
    /// Checkpoint stem written by `train-conv-copy`.
    #[arg(long, conflicts_with = "random_init")]
    pub checkpoint: Option<PathBuf>,
    /// Roll out a freshly initialized cell instead of a checkpoint.
    #[arg(long)]
    pub random_init: bool,
    /// Only check the analytic single-vortex field and print PASS/FAIL.
    #[arg(long)]
    pub self_test: bool,
    #[command(flatten)]
    pub grid: ConvGridArgs,
    #[arg(long, default_value_t = 50)]
    pub steps: usize,
    #[arg(long, default_value_t = 0)]
    pub channel: usize,
    /// Magnitude below which a plaquette is not scored.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Also write per-step phase, magnitude and winding grids.
    #[arg(long)]
    pub dump: bool,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Assertion(String),
    Core(SsbError),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Assertion(m) => write!(f, "assertion failed: {m}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<SsbError> for CliError {
    fn from(e: SsbError) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Assertion(_) => 1,
            CliError::Usage(_) | CliError::Core(SsbError::Argument(_)) => 2,
            CliError::Core(
                SsbError::Format { .. } | SsbError::Io { .. } | SsbError::Json(_) | SsbError::Shape { .. },
            ) => 3,
            CliError::Core(_) => 4,
        }
    }
}

fn main() -> ExitCode {
    let args = match config::expand_args(std::env::args().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("ssb: {e}");
            return ExitCode::from(e.exit_code());
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match commands::dispatch(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ssb: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
