//! `bugloc`: the bug-localization pipeline as subcommands over a shared
//! artifact directory.

mod commands;
mod config;
mod store;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use bugloc::learner::LearnError;
use bugloc::vsm::cache::CacheError;
use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;
use crate::store::Failure;

#[derive(Debug, Parser)]
#[command(name = "bugloc", version, about = "Rank the source files most likely to fix a bug report")]
#[command(after_help = "Exit status: 0 success, 2 input error, 3 stale or missing artifact, 4 internal invariant violation.")]
struct Cli {
    #[command(flatten)]
    flags: Flags,
    #[command(subcommand)]
    command: Command,
}

/// Settings shared by every subcommand. Each overrides the matching key of
/// the config file.
#[derive(Debug, Clone, Args)]
pub struct Flags {
    /// TOML config file [default: ./bugloc.toml when present]
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Bug export, one JSON record per line ([paths] bugs)
    #[arg(long, global = true, value_name = "FILE")]
    pub bugs: Option<PathBuf>,
    /// Directory of project snapshots, each with manifest.txt and history.txt ([paths] projects)
    #[arg(long, global = true, value_name = "DIR")]
    pub projects: Option<PathBuf>,
    /// Baseline tool results, CSV tool,bug_id,rank,path ([paths] tool_results)
    #[arg(long, global = true, value_name = "FILE")]
    pub tool_results: Option<PathBuf>,
    /// Artifact directory ([paths] cache) [default: bugloc-cache]
    #[arg(long, global = true, value_name = "DIR")]
    pub cache_dir: Option<PathBuf>,
    /// Extra stopword file, e.g. language keywords ([textprep] keywords)
    #[arg(long, global = true, value_name = "FILE")]
    pub keywords: Option<PathBuf>,
    /// English word list for hint detection ([textprep] dictionary)
    #[arg(long, global = true, value_name = "FILE")]
    pub dictionary: Option<PathBuf>,
    /// A tool succeeds on a bug when a fixed file is in its top N ([regions] topn) [default: 1]
    #[arg(long, global = true, value_name = "N")]
    pub topn: Option<usize>,
    /// Bugs created before January 1 of this year train, the rest test ([split] cutoff_year)
    #[arg(long, global = true, value_name = "YEAR")]
    pub cutoff_year: Option<i32>,
    /// Run seed ([train] seed) [default: 0]
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// 10000-tree cap with early stopping instead of the 100-tree quick mode ([train] mode)
    #[arg(long, global = true)]
    pub faithful: bool,
    /// Train one ensemble per project instead of one across projects ([train] scope)
    #[arg(long, global = true)]
    pub per_project: bool,
    /// Comma-separated regions to train, e.g. UNION,INTER ([train] regions) [default: all]
    #[arg(long, global = true, value_delimiter = ',', value_name = "NAMES")]
    pub regions: Option<Vec<String>>,
    /// Share of each region's training bugs held out for early stopping ([train] holdout_fraction) [default: 0.2]
    #[arg(long, global = true, value_name = "F")]
    pub holdout_fraction: Option<f64>,
    /// Min-max normalize each model's probabilities per bug before averaging ([rank] normalize)
    #[arg(long, global = true)]
    pub normalize: bool,
    /// Comma-separated cutoff years for the per-year table; each retrains ([evaluate] years)
    #[arg(long, global = true, value_delimiter = ',', value_name = "YEARS")]
    pub years: Option<Vec<i32>>,
    /// Use upstream artifacts even when their hashes are stale
    #[arg(long, global = true)]
    pub force: bool,
    /// Worker threads [default: all cores]
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,
    /// More log output (-v info, -vv debug)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Read the bug export and snapshots, curate, drop post-fix reports
    Ingest,
    /// Extract the ten code token bags of every source file
    Extract,
    /// Compute the 70 similarity scores of every (report, file) pair
    Featurize,
    /// Partition bugs into regions from baseline tool results
    Regions,
    /// Train one boosted classifier per region on bugs before the cutoff
    Train,
    /// Rank each test bug's files by the averaged probability
    Rank,
    /// Report MAP, MRR and TopN, per region, per year and against baselines
    Evaluate,
    /// MAP and MRR of ranking by each single similarity cell
    Dissect {
        /// Restrict to the bugs of this region
        #[arg(long)]
        region: Option<String>,
        /// Restrict to the bug ids listed in this file, one per line
        #[arg(long, value_name = "FILE")]
        bugs_file: Option<PathBuf>,
    },
    /// Shared and exclusive Top-N successes of pairs of tools
    Overlap {
        #[arg(long, value_name = "TOOL")]
        tool_a: Option<String>,
        #[arg(long, value_name = "TOOL")]
        tool_b: Option<String>,
    },
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.flags.jobs {
        rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global()?;
    }
    let cfg = RunConfig::resolve(&cli.flags)?;
    match cli.command {
        Command::Ingest => commands::ingest(&cfg),
        Command::Extract => commands::extract(&cfg),
        Command::Featurize => commands::featurize(&cfg),
        Command::Regions => commands::build_regions(&cfg),
        Command::Train => commands::train(&cfg),
        Command::Rank => commands::rank(&cfg),
        Command::Evaluate => commands::evaluate(&cfg),
        Command::Dissect { region, bugs_file } => commands::dissect(&cfg, region.as_deref(), bugs_file.as_deref()),
        Command::Overlap { tool_a, tool_b } => commands::overlap(&cfg, tool_a.as_deref(), tool_b.as_deref()),
    }
}

fn exit_status(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if let Some(f) = cause.downcast_ref::<Failure>() {
            return match f {
                Failure::Internal(_) => 4,
                _ => 3,
            };
        }
        if cause.downcast_ref::<CacheError>().is_some() {
            return 3;
        }
        if let Some(LearnError::Malformed(_) | LearnError::FeatureGridMismatch { .. }) = cause.downcast_ref::<LearnError>() {
            return 3;
        }
    }
    2
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.flags.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_status(&e))
        }
        Err(_) => ExitCode::from(4),
    }
}
