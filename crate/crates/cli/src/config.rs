//! Run configuration: a TOML file with one section per pipeline stage,
//! overridden by command-line flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use bugloc::dnc::DncConfig;
use bugloc::learner::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::Flags;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// 100-tree cap with early stopping.
    #[default]
    Quick,
    /// 10000-tree cap, stopped by validation RMSE only.
    Faithful,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Scope {
    /// One ensemble trained on all projects.
    #[default]
    CrossProject,
    /// One ensemble per project.
    PerProject,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    paths: PathsSection,
    textprep: TextprepSection,
    regions: RegionsSection,
    split: SplitSection,
    train: TrainSection,
    rank: RankSection,
    evaluate: EvaluateSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct PathsSection {
    bugs: Option<PathBuf>,
    projects: Option<PathBuf>,
    tool_results: Option<PathBuf>,
    cache: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct TextprepSection {
    keywords: Option<PathBuf>,
    dictionary: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RegionsSection {
    topn: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SplitSection {
    cutoff_year: Option<i32>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct TrainSection {
    mode: Option<Mode>,
    scope: Option<Scope>,
    seed: Option<u64>,
    regions: Option<Vec<String>>,
    holdout_fraction: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RankSection {
    normalize: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct EvaluateSection {
    years: Option<Vec<i32>>,
}

/// Effective settings after merging defaults, the file and the flags.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub bugs: Option<PathBuf>,
    pub projects: Option<PathBuf>,
    pub tool_results: Option<PathBuf>,
    pub cache: PathBuf,
    pub keywords: Option<PathBuf>,
    pub dictionary: Option<PathBuf>,
    pub topn: usize,
    pub cutoff_year: Option<i32>,
    pub mode: Mode,
    pub scope: Scope,
    pub seed: u64,
    pub regions: Option<Vec<String>>,
    pub holdout_fraction: f64,
    pub normalize: bool,
    pub years: Vec<i32>,
    pub force: bool,
}

pub const DEFAULT_CONFIG: &str = "bugloc.toml";

fn rebase(base: &Path, p: Option<PathBuf>) -> Option<PathBuf> {
    p.map(|p| if p.is_absolute() { p } else { base.join(p) })
}

impl RunConfig {
    /// Reads `--config` (or `bugloc.toml` in the working directory when it
    /// exists) and applies the flags on top. Relative paths in the file are
    /// taken from the file's directory.
    pub fn resolve(flags: &Flags) -> Result<Self> {
        let path = match &flags.config {
            Some(p) => Some(p.clone()),
            None => Some(PathBuf::from(DEFAULT_CONFIG)).filter(|p| p.exists()),
        };
        let (file, base) = match &path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                let file: FileConfig = toml::from_str(&text).with_context(|| format!("parsing config {}", p.display()))?;
                (file, p.parent().map(Path::to_path_buf).unwrap_or_default())
            }
            None => (FileConfig::default(), PathBuf::new()),
        };
        let cfg = RunConfig {
            bugs: flags.bugs.clone().or(rebase(&base, file.paths.bugs)),
            projects: flags.projects.clone().or(rebase(&base, file.paths.projects)),
            tool_results: flags.tool_results.clone().or(rebase(&base, file.paths.tool_results)),
            cache: flags
                .cache_dir
                .clone()
                .or(rebase(&base, file.paths.cache))
                .unwrap_or_else(|| PathBuf::from("bugloc-cache")),
            keywords: flags.keywords.clone().or(rebase(&base, file.textprep.keywords)),
            dictionary: flags.dictionary.clone().or(rebase(&base, file.textprep.dictionary)),
            topn: flags.topn.or(file.regions.topn).unwrap_or(1),
            cutoff_year: flags.cutoff_year.or(file.split.cutoff_year),
            mode: if flags.faithful { Mode::Faithful } else { file.train.mode.unwrap_or_default() },
            scope: if flags.per_project { Scope::PerProject } else { file.train.scope.unwrap_or_default() },
            seed: flags.seed.or(file.train.seed).unwrap_or(0),
            regions: flags.regions.clone().or(file.train.regions),
            holdout_fraction: flags.holdout_fraction.or(file.train.holdout_fraction).unwrap_or(0.2),
            normalize: flags.normalize || file.rank.normalize.unwrap_or(false),
            years: flags.years.clone().or(file.evaluate.years).unwrap_or_default(),
            force: flags.force,
        };
        if cfg.topn == 0 {
            bail!("--topn must be at least 1");
        }
        if !(0.0..1.0).contains(&cfg.holdout_fraction) {
            bail!("holdout fraction must be in [0, 1)");
        }
        Ok(cfg)
    }

    pub fn bugs(&self) -> Result<&Path> {
        existing(self.bugs.as_deref(), "bug export", "--bugs or [paths] bugs")
    }

    pub fn projects(&self) -> Result<&Path> {
        existing(self.projects.as_deref(), "projects directory", "--projects or [paths] projects")
    }

    pub fn tool_results(&self) -> Result<&Path> {
        existing(self.tool_results.as_deref(), "tool-result file", "--tool-results or [paths] tool_results")
    }

    pub fn cutoff(&self) -> Result<i32> {
        self.cutoff_year.context("no cutoff year: pass --cutoff-year or set [split] cutoff_year")
    }

    pub fn dnc(&self) -> DncConfig {
        let base = match self.mode {
            Mode::Quick => TrainConfig::quick(),
            Mode::Faithful => TrainConfig::faithful(),
        };
        DncConfig {
            train: TrainConfig { seed: self.seed, ..base },
            holdout_fraction: self.holdout_fraction,
            normalize: self.normalize,
            regions: self.regions.clone(),
        }
    }
}

fn existing<'a>(p: Option<&'a Path>, what: &str, how: &str) -> Result<&'a Path> {
    let p = p.with_context(|| format!("no {what} configured: set {how}"))?;
    if !p.exists() {
        bail!("{what} {} does not exist", p.display());
    }
    Ok(p)
}
