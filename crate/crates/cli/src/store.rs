//! The artifact directory. Every stage writes its files plus a
//! `manifest.json` holding content hashes of its inputs and outputs and a
//! config hash chained through its upstream stages.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use bugloc::corpus::{parse_history, ProjectRegistry, ProjectSnapshot};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

/// Failures with their own exit status.
#[derive(Debug)]
pub enum Failure {
    Missing { artifact: PathBuf, producer: &'static str },
    Stale(String),
    Internal(String),
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Missing { artifact, producer } => write!(
                f,
                "missing upstream artifact {}: run `bugloc {producer}` first",
                artifact.display()
            ),
            Failure::Stale(why) => write!(f, "stale-cache: {why}; rerun the producing command or pass --force"),
            Failure::Internal(why) => write!(f, "internal invariant violated: {why}"),
        }
    }
}

impl std::error::Error for Failure {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Ingest,
    Extract,
    Featurize,
    Regions,
    Train,
    Rank,
    Evaluate,
    Dissect,
    Overlap,
}

impl Stage {
    pub fn command(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Extract => "extract",
            Stage::Featurize => "featurize",
            Stage::Regions => "regions",
            Stage::Train => "train",
            Stage::Rank => "rank",
            Stage::Evaluate => "evaluate",
            Stage::Dissect => "dissect",
            Stage::Overlap => "overlap",
        }
    }

    pub fn dir(self) -> &'static str {
        match self {
            Stage::Featurize => "features",
            Stage::Train => "models",
            Stage::Evaluate => "eval",
            other => other.command(),
        }
    }

    pub fn upstream(self) -> &'static [Stage] {
        use Stage::*;
        match self {
            Ingest | Extract => &[],
            Featurize => &[Ingest, Extract],
            Regions => &[Ingest],
            Train => &[Ingest, Featurize, Regions],
            Rank => &[Ingest, Featurize, Train],
            Evaluate => &[Ingest, Featurize, Regions, Train, Rank],
            Dissect => &[Featurize, Regions],
            Overlap => &[Regions],
        }
    }

    /// Settings that change this stage's output.
    fn params(self, cfg: &RunConfig) -> serde_json::Value {
        let file_hash = |p: &Option<PathBuf>| p.as_ref().map(|p| sha256_file(p).unwrap_or_else(|_| "unreadable".into()));
        match self {
            Stage::Extract => serde_json::json!({
                "keywords": file_hash(&cfg.keywords),
                "dictionary": file_hash(&cfg.dictionary),
            }),
            Stage::Regions => serde_json::json!({ "topn": cfg.topn }),
            Stage::Train => serde_json::json!({
                "cutoff_year": cfg.cutoff_year,
                "train": cfg.dnc().train,
                "scope": cfg.scope,
                "regions": cfg.regions,
                "holdout_fraction": cfg.holdout_fraction,
            }),
            Stage::Rank => serde_json::json!({ "normalize": cfg.normalize }),
            Stage::Evaluate => serde_json::json!({ "years": cfg.years }),
            _ => serde_json::json!({}),
        }
    }

    pub fn config_hash(self, cfg: &RunConfig) -> String {
        let mut h = Sha256::new();
        h.update(self.command());
        h.update(self.params(cfg).to_string());
        for up in self.upstream() {
            h.update(up.config_hash(cfg));
        }
        hex::encode(h.finalize())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    /// External inputs by name and upstream manifests as `stage:<name>`.
    pub inputs: BTreeMap<String, String>,
    /// Files of this stage, relative to its directory.
    pub outputs: BTreeMap<String, String>,
}

pub fn sha256(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(p: &Path) -> Result<String> {
    Ok(sha256(&std::fs::read(p).with_context(|| format!("reading {}", p.display()))?))
}

/// Every project below `dir`: a subdirectory holding `manifest.txt` and
/// optionally `history.txt`.
pub fn load_registry(dir: &Path) -> Result<ProjectRegistry> {
    let mut names: Vec<String> = std::fs::read_dir(dir)
        .with_context(|| format!("reading projects directory {}", dir.display()))?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().join("manifest.txt").is_file())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    let mut registry = ProjectRegistry::new();
    for name in names {
        let root = dir.join(&name);
        let mut snapshot = ProjectSnapshot::load(&name, &root)?;
        let history = root.join("history.txt");
        if history.is_file() {
            let text = std::fs::read_to_string(&history)?;
            snapshot = snapshot.with_history(parse_history(&text).with_context(|| format!("in {}", history.display()))?);
        }
        registry.insert(snapshot);
    }
    if registry.is_empty() {
        anyhow::bail!("no project with a manifest.txt below {}", dir.display());
    }
    Ok(registry)
}

/// Content hash of a set of snapshots, independent of file timestamps.
pub fn registry_hash(registry: &ProjectRegistry) -> String {
    let mut h = Sha256::new();
    for s in registry.iter() {
        let mut put = |part: &str| {
            h.update((part.len() as u64).to_le_bytes());
            h.update(part);
        };
        put(&s.project);
        for (path, text) in &s.files {
            put(path);
            put(text);
        }
        put(&bugloc::corpus::write_history(&s.history));
    }
    hex::encode(h.finalize())
}

pub struct Store<'a> {
    pub root: PathBuf,
    pub cfg: &'a RunConfig,
    external: RefCell<BTreeMap<String, Option<String>>>,
    warned: RefCell<BTreeSet<String>>,
}

impl<'a> Store<'a> {
    pub fn new(cfg: &'a RunConfig) -> Self {
        Store { root: cfg.cache.clone(), cfg, external: RefCell::default(), warned: RefCell::default() }
    }

    pub fn path(&self, stage: Stage, file: &str) -> PathBuf {
        self.root.join(stage.dir()).join(file)
    }

    fn manifest_path(&self, stage: Stage) -> PathBuf {
        self.path(stage, "manifest.json")
    }

    /// Reads an upstream file that `require` has already validated.
    pub fn read(&self, stage: Stage, file: &str) -> Result<Vec<u8>> {
        let p = self.path(stage, file);
        std::fs::read(&p).map_err(|_| {
            Failure::Missing { artifact: p, producer: stage.command() }.into()
        })
    }

    /// Validates `stage`'s artifacts and everything they were derived from.
    /// Stale findings become warnings under `--force`.
    pub fn require(&self, stage: Stage) -> Result<Manifest> {
        let mut stale = Vec::new();
        let m = self.check(stage, &mut stale)?;
        let mut seen = BTreeSet::new();
        stale.retain(|s| seen.insert(s.clone()));
        if !stale.is_empty() {
            if self.cfg.force {
                for s in stale {
                    if self.warned.borrow_mut().insert(s.clone()) {
                        log::warn!("ignoring stale cache (--force): {s}");
                    }
                }
            } else {
                return Err(Failure::Stale(stale.join("; ")).into());
            }
        }
        Ok(m)
    }

    fn check(&self, stage: Stage, stale: &mut Vec<String>) -> Result<Manifest> {
        let mp = self.manifest_path(stage);
        let bytes = std::fs::read(&mp).map_err(|_| Failure::Missing { artifact: mp.clone(), producer: stage.command() })?;
        let m: Manifest = serde_json::from_slice(&bytes)
            .map_err(|e| Failure::Stale(format!("{} is unreadable ({e})", mp.display())))?;
        let who = stage.command();
        if m.version != env!("CARGO_PKG_VERSION") {
            stale.push(format!("`{who}` output was written by version {}", m.version));
        }
        for (file, hash) in &m.outputs {
            match sha256_file(&self.path(stage, file)) {
                Ok(h) if &h == hash => {}
                Ok(_) => stale.push(format!("{}/{file} changed since `{who}` wrote it", stage.dir())),
                Err(_) => {
                    return Err(Failure::Missing { artifact: self.path(stage, file), producer: who }.into());
                }
            }
        }
        if m.config_hash != stage.config_hash(self.cfg) {
            stale.push(format!("configuration changed since `{who}` ran"));
        }
        for up in stage.upstream() {
            let key = format!("stage:{}", up.command());
            self.check(*up, stale)?;
            let current = sha256_file(&self.manifest_path(*up))?;
            if m.inputs.get(&key) != Some(&current) {
                stale.push(format!("`{}` ran again after `{who}`", up.command()));
            }
        }
        for (name, hash) in &m.inputs {
            if name.starts_with("stage:") {
                continue;
            }
            if let Some(current) = self.external_hash(name)? {
                if &current != hash {
                    stale.push(format!("input {name} changed since `{who}` ran"));
                }
            }
        }
        Ok(m)
    }

    /// Current hash of a named external input, if it is configured.
    pub fn external_hash(&self, name: &str) -> Result<Option<String>> {
        if let Some(h) = self.external.borrow().get(name) {
            return Ok(h.clone());
        }
        let h = self.hash_input(name)?;
        self.external.borrow_mut().insert(name.to_string(), h.clone());
        Ok(h)
    }

    fn hash_input(&self, name: &str) -> Result<Option<String>> {
        let p = match name {
            "bugs" => self.cfg.bugs.as_ref(),
            "tool_results" => self.cfg.tool_results.as_ref(),
            "projects" => {
                return match &self.cfg.projects {
                    Some(p) if p.exists() => Ok(Some(registry_hash(&load_registry(p)?))),
                    _ => Ok(None),
                }
            }
            _ => None,
        };
        match p {
            Some(p) if p.exists() => Ok(Some(sha256_file(p)?)),
            _ => Ok(None),
        }
    }

    /// Replaces `stage`'s directory with `files` and a fresh manifest.
    pub fn write(&self, stage: Stage, external: BTreeMap<String, String>, files: Vec<(String, Vec<u8>)>) -> Result<Manifest> {
        let dir = self.root.join(stage.dir());
        if dir.exists() {
            std::fs::remove_dir_all(&dir).with_context(|| format!("clearing {}", dir.display()))?;
        }
        let mut inputs = external;
        for up in stage.upstream() {
            inputs.insert(format!("stage:{}", up.command()), sha256_file(&self.manifest_path(*up))?);
        }
        let mut outputs = BTreeMap::new();
        for (name, bytes) in files {
            let p = dir.join(&name);
            std::fs::create_dir_all(p.parent().expect("inside the stage directory"))?;
            std::fs::write(&p, &bytes).with_context(|| format!("writing {}", p.display()))?;
            outputs.insert(name, sha256(&bytes));
        }
        let m = Manifest {
            command: stage.command().into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config_hash: stage.config_hash(self.cfg),
            seed: self.cfg.seed,
            inputs,
            outputs,
        };
        std::fs::create_dir_all(&dir)?;
        std::fs::write(self.manifest_path(stage), serde_json::to_vec_pretty(&m)?)?;
        Ok(m)
    }
}
