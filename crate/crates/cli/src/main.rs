mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use stepkit_core::reserialize::RootOrder;

/// Error caused by bad invocation or configuration; exits with status 2.
#[derive(Debug)]
pub struct Usage(pub String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

#[derive(Debug, Parser)]
#[command(name = "stepkit", version, about = "STEP file tooling and geometric evaluation")]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true, env = "STEPKIT_CONFIG")]
    pub config: Option<PathBuf>,
    /// Print machine-readable JSON on stdout.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GeometryArgs {
    /// Surface samples per mesh.
    #[arg(long, env = "STEPKIT_N_POINTS")]
    pub n_points: Option<usize>,
    #[arg(long, env = "STEPKIT_SEED")]
    pub seed: Option<u64>,
    #[arg(long)]
    pub delta_low: Option<f64>,
    #[arg(long)]
    pub delta_high: Option<f64>,
}

#[derive(Debug, Args)]
pub struct CheckerArgs {
    /// STEP-to-STL command template with {input} and {output} placeholders.
    #[arg(long, env = "STEPKIT_CHECKER_CMD")]
    pub checker_cmd: Option<String>,
    #[arg(long, env = "STEPKIT_TIMEOUT_S")]
    pub timeout_s: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a STEP file and print statistics.
    Parse { file: PathBuf },
    /// Rewrite a STEP file in DFS order with sequential ids.
    Reserialize {
        input: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Write the original-to-new id map as JSON.
        #[arg(long)]
        id_map: Option<PathBuf>,
        #[arg(long)]
        sig_digits: Option<u32>,
        #[arg(long)]
        no_annotate: bool,
        #[arg(long, value_parser = parse_root_order)]
        root_order: Option<RootOrder>,
    },
    /// Check parse/serialize stability of one file, or equivalence of two.
    Roundtrip { first: PathBuf, second: Option<PathBuf> },
    /// List STEP files with fewer entities than the limit.
    Filter {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
        #[arg(long)]
        max_entities: Option<usize>,
    },
    /// Entity-count statistics with a histogram.
    Stats {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
        #[arg(long, default_value = "files")]
        label: String,
        #[arg(long, default_value_t = stepkit_core::eval::DEFAULT_BIN_WIDTH)]
        bin_width: usize,
        #[arg(long, default_value_t = stepkit_core::eval::DEFAULT_HISTOGRAM_END)]
        histogram_end: usize,
        /// Write the histogram as CSV.
        #[arg(long)]
        histogram_csv: Option<PathBuf>,
    },
    /// Scaled Chamfer distance and reward for one prediction.
    Metrics {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[command(flatten)]
        geometry: GeometryArgs,
        #[command(flatten)]
        checker: CheckerArgs,
    },
    /// Reward for a given scaled Chamfer distance.
    Reward {
        #[arg(long)]
        scd: f64,
        #[arg(long)]
        delta_low: Option<f64>,
        #[arg(long)]
        delta_high: Option<f64>,
    },
    /// Evaluate a directory of predictions against ground truth.
    Batch {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Report JSON path; stdout when absent.
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long, env = "STEPKIT_JOBS")]
        jobs: Option<usize>,
        /// Exit 1 when any pair failed.
        #[arg(long)]
        strict: bool,
        #[command(flatten)]
        geometry: GeometryArgs,
        #[command(flatten)]
        checker: CheckerArgs,
    },
    /// Caption retrieval index.
    #[command(subcommand)]
    Index(IndexCommand),
    /// Build a generation prompt for a caption.
    Prompt {
        #[arg(long)]
        caption: String,
        #[arg(long, required_unless_present = "no_rag")]
        index: Option<PathBuf>,
        /// Omit the retrieved example.
        #[arg(long)]
        no_rag: bool,
        /// Skip index entries whose caption equals the query.
        #[arg(long)]
        for_training: bool,
        /// Template file with {instruction}, {retrieved_step} and {caption} slots.
        #[arg(long)]
        template: Option<PathBuf>,
        #[arg(long)]
        instruction: Option<String>,
        /// Insert the retrieved file as stored instead of reserialized.
        #[arg(long)]
        raw_step: bool,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum IndexCommand {
    /// Embed a JSON-lines caption file.
    Build {
        /// Lines of {"caption": .., "step_ref": ..}.
        #[arg(long)]
        captions: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Remote embedding service; the local hashing embedder otherwise.
        #[arg(long, env = "STEPKIT_EMBED_ENDPOINT")]
        endpoint: Option<String>,
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        dimension: Option<usize>,
    },
    Query {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        caption: String,
        #[arg(short, long)]
        k: Option<usize>,
        /// Skip entries whose caption equals the query.
        #[arg(long)]
        exclude_self: bool,
    },
}

fn parse_root_order(s: &str) -> Result<RootOrder, String> {
    match s {
        "original-id" => Ok(RootOrder::OriginalId),
        "canonical" => Ok(RootOrder::Canonical),
        _ => Err(format!("expected original-id or canonical, got {s:?}")),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("stepkit: {e:#}");
            if e.downcast_ref::<Usage>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
