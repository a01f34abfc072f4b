use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "engage", version, about = "Engagement patterns in online support threads")]
pub struct Cli {
    /// Worker threads for parallel stages; defaults to all cores.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Assemble raw posts (JSONL) into a scaled corpus snapshot.
    Ingest(IngestArgs),
    /// Sample a synthetic corpus from a ground-truth specification.
    Simulate(SimulateArgs),
    /// Fit the engagement mixture by collapsed Gibbs sampling.
    Fit(FitArgs),
    /// Fit a range of cluster counts and suggest one by the elbow rule.
    SweepK(SweepKArgs),
    /// Assign threads to the clusters of a fitted model.
    Assign(AssignArgs),
    /// Name fitted clusters and group them into engagement patterns.
    Taxonomy(TaxonomyArgs),
    /// Retention of seekers or peer-supporters after their first thread.
    Retention(RetentionArgs),
    /// Write every table, report and plot file for a corpus and model.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct ScalingFlags {
    /// Delays above this many seconds are capped before scaling.
    #[arg(long, default_value_t = engage_core::scaling::DEFAULT_DELTA_CAP_SECONDS)]
    pub delta_cap: f64,
    /// Scale ln(1 + delay) instead of the raw delay.
    #[arg(long)]
    pub log_deltas: bool,
    /// Scaled values are clamped to [epsilon, 1 - epsilon].
    #[arg(long, default_value_t = engage_core::scaling::DEFAULT_EPSILON)]
    pub epsilon: f64,
}

#[derive(Debug, Args)]
pub struct FitFlags {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 50)]
    pub sweeps: usize,
    /// Stop once fewer than this fraction of threads move in a sweep.
    #[arg(long, default_value_t = 0.005)]
    pub early_stop: f64,
    /// Clusters smaller than this keep uniform Beta shapes.
    #[arg(long, default_value_t = 5)]
    pub min_cluster: usize,
}

#[derive(Debug, Args)]
pub struct BootFlags {
    #[arg(long, default_value_t = engage_core::analysis::DEFAULT_N_BOOT)]
    pub boot: usize,
    #[arg(long, default_value_t = engage_core::analysis::DEFAULT_LEVEL)]
    pub level: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Only activity within this many seconds of the first thread counts.
    #[arg(long)]
    pub horizon: Option<i64>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Posts, one JSON object per line.
    #[arg(long, short)]
    pub input: PathBuf,
    /// Corpus snapshot to write.
    #[arg(long, short)]
    pub output: PathBuf,
    /// Validation report (JSON); printed to stdout when absent.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[command(flatten)]
    pub scaling: ScalingFlags,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Ground-truth specification (JSON); the built-in four-cluster
    /// benchmark is used when absent.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Draw a random specification with this many clusters instead.
    #[arg(long, conflicts_with = "spec")]
    pub k: Option<usize>,
    #[arg(long, default_value_t = 5000)]
    pub n_threads: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Share of threads generated without replies.
    #[arg(long)]
    pub isolated_fraction: Option<f64>,
    /// Corpus snapshot to write.
    #[arg(long, short)]
    pub output: PathBuf,
    /// True cluster of each thread (CSV).
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Also write the threads as raw posts (JSONL), ready for `ingest`.
    #[arg(long)]
    pub posts: Option<PathBuf>,
    /// Write the specification that was used.
    #[arg(long)]
    pub spec_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Corpus snapshot.
    #[arg(long, short)]
    pub input: PathBuf,
    /// Model file to write.
    #[arg(long, short)]
    pub output: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub k: usize,
    #[command(flatten)]
    pub fit: FitFlags,
    /// Per-sweep log (CSV).
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Ground-truth clusters (CSV) to score the fit against.
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepKArgs {
    #[arg(long, short)]
    pub input: PathBuf,
    /// Likelihood curve (CSV).
    #[arg(long, short)]
    pub output: PathBuf,
    /// Cluster counts, as a list (`2,4,8`) or an inclusive range (`2..10`).
    #[arg(long, default_value = "2..20")]
    pub k: String,
    #[command(flatten)]
    pub fit: FitFlags,
}

#[derive(Debug, Args)]
pub struct AssignArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, short)]
    pub input: PathBuf,
    #[arg(long, short)]
    pub output: PathBuf,
    /// Rescale the corpus with the model's scaling constants first.
    #[arg(long)]
    pub rescale: bool,
    #[arg(long, value_enum, default_value_t = OutputFormat::Csv)]
    pub format: OutputFormat,
}

#[derive(Debug, Args)]
pub struct TaxonomyArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, short)]
    pub input: PathBuf,
    /// Directory for taxonomy.json and taxonomy.txt.
    #[arg(long, short)]
    pub output: PathBuf,
    /// Label overrides: JSON object from cluster id to pattern name.
    #[arg(long)]
    pub labels: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RetentionArgs {
    #[arg(long, short)]
    pub input: PathBuf,
    /// Taxonomy report, needed to group by pattern, size or speed.
    #[arg(long)]
    pub taxonomy: Option<PathBuf>,
    /// `seeker` or `peer`.
    #[arg(long, default_value = "seeker")]
    pub role: String,
    /// `degree`, `party`, `size`, `speed` or `pattern`.
    #[arg(long, default_value = "degree")]
    pub group_by: String,
    #[arg(long, short)]
    pub output: PathBuf,
    #[arg(long, value_enum, default_value_t = OutputFormat::Csv)]
    pub format: OutputFormat,
    #[command(flatten)]
    pub boot: BootFlags,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long, short)]
    pub input: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    /// Label overrides for the taxonomy.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Output directory.
    #[arg(long, short)]
    pub output: PathBuf,
    #[command(flatten)]
    pub boot: BootFlags,
}
