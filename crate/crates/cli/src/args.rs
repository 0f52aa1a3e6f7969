//! Command-line surface. Every argument struct also serializes, so the
//! resolved configuration can be embedded in each report. Output paths are
//! skipped: they do not affect results, and reports must be byte-identical
//! wherever they are written.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sop_core::{GeneratorConfig, MarginSpec, Scenario, TaskLoss};

#[derive(Debug, Parser)]
#[command(name = "sop", version, about = "Structured prediction margin bounds: data, training, bounds and audits")]
pub struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a seeded synthetic dataset (JSONL).
    GenData(GenDataArgs),
    /// Train by SGD or regularized risk minimization.
    Train(TrainArgs),
    /// Evaluate every bound for a set of problem constants.
    Bounds(BoundsArgs),
    #[command(subcommand)]
    Audit(AuditCommand),
    #[command(subcommand)]
    Mixing(MixingCommand),
    /// Summarize verdicts from existing report files.
    Report(ReportArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::GenData(_) => "gen-data",
            Command::Train(_) => "train",
            Command::Bounds(_) => "bounds",
            Command::Audit(a) => match a {
                AuditCommand::Lipschitz(_) => "audit lipschitz",
                AuditCommand::Dominance(_) => "audit dominance",
                AuditCommand::StabilitySgd(_) => "audit stability-sgd",
                AuditCommand::StabilityRrm(_) => "audit stability-rrm",
                AuditCommand::Gap(_) => "audit gap",
                AuditCommand::Rademacher(_) => "audit rademacher",
                AuditCommand::Gradcheck(_) => "audit gradcheck",
            },
            Command::Mixing(m) => match m {
                MixingCommand::Gen(_) => "mixing gen",
                MixingCommand::Profile(_) => "mixing profile",
                MixingCommand::Sweep(_) => "mixing sweep",
                MixingCommand::Gap(_) => "mixing gap",
            },
            Command::Report(_) => "report",
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum AuditCommand {
    /// Loss change vs score change, by enumeration.
    Lipschitz(LipschitzArgs),
    /// Margin loss dominates the task loss of the decoded output.
    Dominance(DominanceArgs),
    /// Coupled SGD runs on neighbouring datasets.
    StabilitySgd(StabilitySgdArgs),
    /// RRM solutions on neighbouring datasets.
    StabilityRrm(StabilityRrmArgs),
    /// Train/test gap vs the high-probability bound.
    Gap(GapArgs),
    /// Monte-Carlo Rademacher estimate vs its bound.
    Rademacher(RademacherArgs),
    /// Finite differences vs analytic subgradients.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Subcommand)]
pub enum MixingCommand {
    /// Generate documents driven by a Markov source.
    Gen(MixingGenArgs),
    /// Exact and Dobrushin β(a) over block lengths.
    Profile(MixingProfileArgs),
    /// Document bound at every admissible block length.
    Sweep(MixingSweepArgs),
    /// Train on documents and compare the gap with the best feasible bound.
    Gap(MixingGapArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct OutputArgs {
    /// JSON report path (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-trial CSV path (default: the report path with a .csv extension).
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    /// Pairwise (or window-v) chain Markov network.
    Chain,
    /// Single-node multi-class classification.
    Multiclass,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ScenarioArgs {
    #[arg(long, value_enum, default_value = "chain")]
    pub scenario: ScenarioKind,
    /// Chain length.
    #[arg(long, default_value_t = 4)]
    pub l: usize,
    /// Alphabet size (classes for multiclass).
    #[arg(long, default_value_t = 3)]
    pub c: usize,
    /// Factor window.
    #[arg(long, default_value_t = 2)]
    pub v: usize,
    /// Context dimension.
    #[arg(long, default_value_t = 5)]
    pub n: usize,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub noise: f64,
    #[arg(long, default_value_t = 3.0, allow_negative_numbers = true)]
    pub teacher_norm: f64,
    /// Seed of the teacher and training data.
    #[arg(long, default_value_t = 1)]
    pub data_seed: u64,
}

impl ScenarioArgs {
    pub fn generator_config(&self) -> GeneratorConfig {
        let scenario = match self.scenario {
            ScenarioKind::Chain => Scenario::ChainMarkovNet { l: self.l, c: self.c, v: self.v, n: self.n },
            ScenarioKind::Multiclass => Scenario::MultiClass { c: self.c, n: self.n },
        };
        GeneratorConfig { scenario, noise: self.noise, teacher_norm: self.teacher_norm, seed: self.data_seed }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Hamming,
    HammingNormalized,
    ZeroOne,
}

impl From<LossKind> for TaskLoss {
    fn from(k: LossKind) -> Self {
        match k {
            LossKind::Hamming => TaskLoss::HammingUnnormalized,
            LossKind::HammingNormalized => TaskLoss::HammingNormalized,
            LossKind::ZeroOne => TaskLoss::ZeroOne,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct LossArgs {
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub rho: f64,
    #[arg(long, value_enum, default_value = "hamming")]
    pub loss: LossKind,
}

impl LossArgs {
    pub fn spec(&self) -> sop_core::Result<MarginSpec> {
        MarginSpec::new(self.rho, self.loss.into())
    }
}

#[derive(Debug, Args, Serialize)]
pub struct GenDataArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub scenario: ScenarioArgs,
    #[arg(long)]
    pub m: usize,
    /// Dataset JSONL path.
    #[arg(long)]
    #[serde(skip)]
    pub data_out: PathBuf,
    #[command(flatten)]
    #[serde(skip)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Sgd,
    Rrm,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    #[serde(skip)]
    pub data: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    pub loss: LossArgs,
    #[arg(long, value_enum, default_value = "sgd")]
    pub algorithm: Algorithm,
    /// SGD step size (default: the schedule η = T^{-3/4}/κ).
    #[arg(long, allow_negative_numbers = true)]
    pub eta: Option<f64>,
    /// SGD iterations (default: the schedule T = ⌈β_T m²⌉).
    #[arg(long = "T")]
    #[serde(rename = "T")]
    pub iterations: Option<usize>,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub beta_t: f64,
    /// RRM regularization (default: the excess-risk-optimal λ for ‖w*‖ = --w-star-norm).
    #[arg(long, allow_negative_numbers = true)]
    pub lambda: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub w_star_norm: f64,
    #[arg(long, default_value_t = 1e-6, allow_negative_numbers = true)]
    pub tol: f64,
    #[arg(long, default_value_t = 200_000)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Record every SGD iterate (CSV of iterate norms).
    #[arg(long)]
    pub trajectory: bool,
    #[command(flatten)]
    #[serde(skip)]
    pub output: OutputArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct BoundsArgs {
    /// ProblemConstants JSON.
    #[arg(long)]
    #[serde(skip)]
    pub constants: PathBuf,
    #[command(flatten)]
    #[serde(skip)]
    pub output: OutputArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct LipschitzArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub scenario: ScenarioArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub loss: LossArgs,
    #[arg(long, default_value_t = 10_000)]
    pub trials: usize,
    /// Scale of random inputs and weights.
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub scale: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    #[serde(skip)]
    pub output: OutputArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct DominanceArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub scenario: ScenarioArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub loss: LossArgs,
    #[arg(long, default_value_t = 10_000)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    #[serde(skip)]
    pub output: OutputArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct GradcheckArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub scenario: ScenarioArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub loss: LossArgs,
    /// Non-degenerate draws to check.
    #[arg(long, default_value_t = 1000)]
    pub accept: usize,
    #[arg(long, default_value_t = 1e-6, allow_negative_numbers = true)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    #[serde(skip)]
    pub output: OutputArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct StabilitySgdArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub scenario: ScenarioArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub loss: LossArgs,
    #[arg(long, default_value_t = 20)]
    pub m: usize,
    #[arg(long, default_value_t = 0.01, allow_negative_numbers = true)]
    pub eta: f64,
    #[arg(long, value_delimiter = ',', default_value = "100,200,400")]
    pub checkpoints: Vec<usize>,
    #[arg(long, default_value_t = 200)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Give the neighbour run its own sampling stream (diagnostic only).
    #[arg(long)]
    pub uncoupled: bool,
    #[command(flatten)]
    #[serde(skip)]
    pub output: OutputArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct StabilityRrmArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub scenario: ScenarioArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub loss: LossArgs,
    #[arg(long, default_value_t = 50)]
    pub m: usize,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub lambda: f64,
    /// Solver slack as a fraction of the stability bound.
    #[arg(long, default_value_t = 0.1, allow_negative_numbers = true)]
    pub slack_fraction: f64,
    #[arg(long, default_value_t = 50)]
    pub trials: usize,
    /// Fresh inputs probed per trial, in addition to the training inputs.
    #[arg(long, default_value_t = 20)]
    pub eval_inputs: usize,
    #[arg(long, default_value_t = 1_000_000)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    #[serde(skip)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GapAlgorithm {
    /// SGD at T = ⌈β_T m²⌉, η = T^{-3/4}/κ.
    SgdSchedule,
    Sgd,
    Rrm,
}

#[derive(Debug, Args, Serialize)]
pub struct GapArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub scenario: ScenarioArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub loss: LossArgs,
    #[arg(long, default_value_t = 100)]
    pub m: usize,
    /// Test examples per draw (default 10m).
    #[arg(long)]
    pub m_test: Option<usize>,
    #[arg(long, value_enum, default_value = "sgd-schedule")]
    pub algorithm: GapAlgorithm,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub beta_t: f64,
    #[arg(long, default_value_t = 0.01, allow_negative_numbers = true)]
    pub eta: f64,
    #[arg(long = "T", default_value_t = 1000)]
    #[serde(rename = "T")]
    pub iterations: usize,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub lambda: f64,
    #[arg(long, default_value_t = 1e-6, allow_negative_numbers = true)]
    pub tol: f64,
    #[arg(long, default_value_t = 200_000)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 100)]
    pub repeats: usize,
    #[arg(long, default_value_t = 0.05, allow_negative_numbers = true)]
    pub delta: f64,
    /// Radius Λ of the weight ball (raised to ‖w‖ when the learner exceeds it).
    #[arg(long = "Lambda", default_value_t = 1.0)]
    #[serde(rename = "Lambda")]
    pub lambda_ball: f64,
    #[arg(long, default_value_t = 0.95, allow_negative_numbers = true)]
    pub required_fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    #[serde(skip)]
    pub output: OutputArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct RademacherArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub scenario: ScenarioArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub loss: LossArgs,
    /// Use this dataset instead of generating one.
    #[arg(long)]
    #[serde(skip)]
    pub data: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    pub m: usize,
    #[arg(long = "Lambda", default_value_t = 1.0)]
    #[serde(rename = "Lambda")]
    pub lambda_ball: f64,
    #[arg(long, default_value_t = 64)]
    pub n_sigma: usize,
    #[arg(long, default_value_t = 8)]
    pub restarts: usize,
    #[arg(long, default_value_t = 50)]
    pub ascent_iters: usize,
    #[arg(long, default_value_t = 0.05, allow_negative_numbers = true)]
    pub delta: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    #[serde(skip)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SourceArgs {
    /// Transition matrix JSON: {"transition": [[...], ...]}.
    #[arg(long)]
    #[serde(skip)]
    pub source: Option<PathBuf>,
    /// Laziness ε of the built-in two-state chain (used without --source).
    #[arg(long, default_value_t = 0.1, allow_negative_numbers = true)]
    pub eps: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct MixingGenArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub source: SourceArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub scenario: ScenarioArgs,
    #[arg(long, default_value_t = 20)]
    pub m: usize,
    #[arg(long = "J", default_value_t = 64)]
    #[serde(rename = "J")]
    pub j: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Document JSONL path.
    #[arg(long)]
    #[serde(skip)]
    pub data_out: PathBuf,
    #[command(flatten)]
    #[serde(skip)]
    pub output: OutputArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct MixingProfileArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub source: SourceArgs,
    #[arg(long = "J", default_value_t = 64)]
    #[serde(rename = "J")]
    pub j: usize,
    /// Also estimate β(a) from this many simulated paths.
    #[arg(long, default_value_t = 0)]
    pub paths: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    #[serde(skip)]
    pub output: OutputArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct MixingSweepArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub source: SourceArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub scenario: ScenarioArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub loss: LossArgs,
    #[arg(long, default_value_t = 20)]
    pub m: usize,
    #[arg(long = "J", default_value_t = 64)]
    #[serde(rename = "J")]
    pub j: usize,
    #[arg(long, default_value_t = 0.05, allow_negative_numbers = true)]
    pub delta: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub empirical_risk: f64,
    #[arg(long = "Lambda", default_value_t = 1.0)]
    #[serde(rename = "Lambda")]
    pub lambda_ball: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    #[serde(skip)]
    pub output: OutputArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct MixingGapArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub source: SourceArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub scenario: ScenarioArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub loss: LossArgs,
    #[arg(long, default_value_t = 20)]
    pub m: usize,
    #[arg(long = "J", default_value_t = 64)]
    #[serde(rename = "J")]
    pub j: usize,
    /// Test documents.
    #[arg(long, default_value_t = 200)]
    pub m_test: usize,
    #[arg(long, default_value_t = 0.01, allow_negative_numbers = true)]
    pub eta: f64,
    #[arg(long = "T", default_value_t = 5000)]
    #[serde(rename = "T")]
    pub iterations: usize,
    #[arg(long, default_value_t = 0.05, allow_negative_numbers = true)]
    pub delta: f64,
    #[arg(long = "Lambda", default_value_t = 1.0)]
    #[serde(rename = "Lambda")]
    pub lambda_ball: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    #[serde(skip)]
    pub output: OutputArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct ReportArgs {
    /// Report JSON files to summarize.
    #[arg(long, num_args = 1.., required = true)]
    #[serde(skip)]
    pub inputs: Vec<PathBuf>,
    #[command(flatten)]
    #[serde(skip)]
    pub output: OutputArgs,
}
