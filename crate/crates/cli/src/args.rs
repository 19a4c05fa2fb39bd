//! Command-line argument definitions.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ddm_privacy::pdp::Mode;
use ddm_privacy::schedule::DEFAULT_COSINE_OFFSET;
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "ddm-audit", version, about = "Per-instance privacy audits for discrete diffusion models")]
#[command(arg_required_else_help = true)]
pub struct Cli {
    /// Worker threads (0 = all cores). Results do not depend on this.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Per-instance delta for every distinct row of a CSV dataset.
    Audit(AuditArgs),
    /// Repeatedly remove the highest-delta records and re-audit.
    Curate(CurateArgs),
    /// Sample synthetic rows from the perfectly trained model.
    Generate(GenerateArgs),
    /// Lower bound for the two-feature worst-case pair.
    LowerBound(LowerBoundArgs),
    /// Dataset-free worst-case delta.
    Dp(DpArgs),
    /// Main-term sweep over the majority probability of a skewed distribution.
    Synth(SynthArgs),
    /// Derived kernel table of a schedule.
    Schedule(ScheduleCmdArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleChoice {
    Linear,
    Sigmoid,
    Cosine,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeChoice {
    Main,
    Relaxed,
}

impl From<ModeChoice> for Mode {
    fn from(m: ModeChoice) -> Self {
        match m {
            ModeChoice::Main => Mode::Main,
            ModeChoice::Relaxed => Mode::Relaxed,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ScheduleArgs {
    #[arg(long, value_enum, default_value_t = ScheduleChoice::Linear)]
    pub schedule: ScheduleChoice,
    /// Decay rate of the linear or sigmoid schedule.
    #[arg(long, default_value_t = 1.0)]
    pub decay: f64,
    /// Offset of the cosine schedule.
    #[arg(long, default_value_t = DEFAULT_COSINE_OFFSET)]
    pub offset: f64,
    /// Number of diffusion steps.
    #[arg(short = 'T', long = "steps", default_value_t = 10)]
    pub steps: usize,
    /// One-column CSV of alpha_t for `--schedule custom`.
    #[arg(long)]
    pub alphas_file: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BoundArgs {
    #[arg(long, default_value_t = 1.0)]
    pub epsilon: f64,
    /// Number of released samples.
    #[arg(short = 'm', long = "samples", default_value_t = 1)]
    pub m: usize,
    #[arg(long, default_value_t = 0)]
    pub release_step: usize,
    #[arg(long, value_enum, default_value_t = ModeChoice::Main)]
    pub mode: ModeChoice,
    /// Use the main-text forms of the radius conditions.
    #[arg(long)]
    pub literal_main_text: bool,
    /// Two-column CSV of (gamma_t, gamma_tilde_t) for t = 1..T.
    #[arg(long)]
    pub gamma_file: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct IngestArgs {
    /// Headed CSV dataset.
    pub input: PathBuf,
    /// Maximum number of equal-frequency bins per numeric column.
    #[arg(long, default_value_t = 5)]
    pub max_bins: usize,
    /// Map missing values to a sentinel category instead of failing.
    #[arg(long)]
    pub allow_missing: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct AuditArgs {
    #[command(flatten)]
    pub data: IngestArgs,
    #[command(flatten)]
    pub schedule: ScheduleArgs,
    #[command(flatten)]
    pub bound: BoundArgs,
    /// Audit only the first N distinct rows (lexicographic order).
    #[arg(long)]
    pub limit: Option<usize>,
    /// Exit with status 3 when any delta is infinite.
    #[arg(long)]
    pub strict: bool,
    /// Report JSON path; the category map is written alongside.
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
    /// Per-step CSV of every audited point.
    #[arg(long)]
    #[serde(skip)]
    pub trace_csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CurateArgs {
    #[command(flatten)]
    pub data: IngestArgs,
    #[command(flatten)]
    pub schedule: ScheduleArgs,
    #[command(flatten)]
    pub bound: BoundArgs,
    /// Ascending cumulative removal fractions.
    #[arg(long, value_delimiter = ',', required = true)]
    pub ratios: Vec<f64>,
    #[arg(long)]
    pub strict: bool,
    /// Rounds JSON path.
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
    /// CSV of (ratio, mean_delta, max_delta, size).
    #[arg(long)]
    #[serde(skip)]
    pub plot_csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub data: IngestArgs,
    #[command(flatten)]
    pub schedule: ScheduleArgs,
    /// Number of rows to draw.
    #[arg(short = 'm', long = "samples", default_value_t = 100)]
    pub m: usize,
    #[arg(long, default_value_t = 0)]
    pub release_step: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// CSV path for the decoded samples.
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct LowerBoundArgs {
    #[command(flatten)]
    pub schedule: ScheduleArgs,
    /// Number of `[0,0]` rows plus one; the pair differs in one `[1,1]` row.
    #[arg(long = "s")]
    pub s: usize,
    /// Also enumerate both generated distributions exactly.
    #[arg(long)]
    pub exact: bool,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DpArgs {
    #[command(flatten)]
    pub schedule: ScheduleArgs,
    #[arg(long = "s")]
    pub s: usize,
    #[arg(long = "n")]
    pub n: usize,
    #[arg(long = "k")]
    pub k: usize,
    #[arg(long, default_value_t = 1.0)]
    pub epsilon: f64,
    #[arg(short = 'm', long = "samples", default_value_t = 1)]
    pub m: usize,
    #[arg(long, default_value_t = 0)]
    pub release_step: usize,
    #[arg(long)]
    pub literal_main_text: bool,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SynthArgs {
    #[command(flatten)]
    pub schedule: ScheduleArgs,
    /// Majority probabilities to sweep.
    #[arg(long, value_delimiter = ',', required = true)]
    pub p_grid: Vec<f64>,
    #[arg(long = "s", default_value_t = 1000)]
    pub s: usize,
    #[arg(long = "n", default_value_t = 5)]
    pub n: usize,
    #[arg(long = "k", default_value_t = 5)]
    pub k: usize,
    #[arg(long, default_value_t = 10.0)]
    pub epsilon: f64,
    #[arg(long, value_enum, default_value_t = ModeChoice::Main)]
    pub mode: ModeChoice,
    #[arg(long)]
    pub literal_main_text: bool,
    /// Seeds averaged per p: seed, seed+1, ...
    #[arg(long, default_value_t = 5)]
    pub seeds: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// CSV with columns p,t,psi_term,radius,main_term.
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ScheduleCmdArgs {
    #[command(flatten)]
    pub schedule: ScheduleArgs,
    #[arg(long = "k", default_value_t = 2)]
    pub k: usize,
    /// CSV path; stdout when absent.
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}
