//! Bug reports, project snapshots and commit history: ingestion and curation.
//!
//! Reports arrive as line-delimited JSON exports, snapshots as a directory
//! tree with a manifest, and history as a sectioned text export (see
//! [`history`]). Curation keeps reports whose ground-truth files all still
//! exist and whose status is resolved, fixed or closed; the pre-fix filter
//! then removes reports that look like post-fix bookkeeping.

pub mod history;

use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;
use std::path::Path;

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use history::{parse_history, write_history, HistoryCommit, HistoryParseError, ProjectHistory};

/// Patch evidence within this many seconds after report creation marks the
/// report as post-fix. The interval is closed.
pub const PATCH_WINDOW_SECS: i64 = 3600;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("uncurated-report: bug {0} has no fix commits")]
    UncuratedReport(String),
    #[error("snapshot manifest lists {path} but the file could not be read: {source}")]
    SnapshotFile {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Resolved,
    Fixed,
    Closed,
    Other,
}

impl Status {
    /// Case-insensitive mapping of a tracker status string; unknown values
    /// become [`Status::Other`].
    pub fn parse(s: &str) -> Self {
        match s.trim().to_ascii_lowercase().as_str() {
            "resolved" => Status::Resolved,
            "fixed" => Status::Fixed,
            "closed" => Status::Closed,
            _ => Status::Other,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comment {
    pub author_email: String,
    pub timestamp: DateTime<Utc>,
    pub has_patch_attachment: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attachment {
    pub timestamp: DateTime<Utc>,
    pub is_patch: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommitRef {
    pub hash: String,
    pub committer_email: String,
    pub timestamp: DateTime<Utc>,
    pub touched_files: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BugReport {
    pub id: String,
    pub project: String,
    pub summary: String,
    pub description: String,
    pub created_at: DateTime<Utc>,
    pub status: Status,
    pub reporter_email: String,
    pub comments: Vec<Comment>,
    pub attachments: Vec<Attachment>,
    pub fix_commits: Vec<CommitRef>,
    /// Ground truth: repo-relative paths changed by the fix.
    pub fixed_files: BTreeSet<String>,
}

/// One project's source files plus its per-file commit history.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProjectSnapshot {
    pub project: String,
    pub files: BTreeMap<String, String>,
    pub history: ProjectHistory,
}

impl ProjectSnapshot {
    /// Loads `<dir>/manifest.txt` (one repo-relative path per line, `#`
    /// comments allowed) and reads every listed file below `dir`.
    pub fn load(project: &str, dir: &Path) -> Result<Self, CorpusError> {
        let manifest = std::fs::read_to_string(dir.join("manifest.txt"))?;
        let mut files = BTreeMap::new();
        for line in manifest.lines() {
            let path = line.trim();
            if path.is_empty() || path.starts_with('#') {
                continue;
            }
            let text = std::fs::read_to_string(dir.join(path)).map_err(|source| {
                CorpusError::SnapshotFile {
                    path: path.to_string(),
                    source,
                }
            })?;
            files.insert(path.to_string(), text);
        }
        Ok(ProjectSnapshot {
            project: project.to_string(),
            files,
            history: ProjectHistory::default(),
        })
    }

    pub fn with_history(mut self, history: ProjectHistory) -> Self {
        self.history = history;
        self
    }
}

/// Projects known to a run, keyed by name.
#[derive(Debug, Clone, Default)]
pub struct ProjectRegistry {
    projects: BTreeMap<String, ProjectSnapshot>,
}

impl ProjectRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, snapshot: ProjectSnapshot) {
        self.projects.insert(snapshot.project.clone(), snapshot);
    }

    pub fn get(&self, project: &str) -> Option<&ProjectSnapshot> {
        self.projects.get(project)
    }

    pub fn iter(&self) -> impl Iterator<Item = &ProjectSnapshot> {
        self.projects.values()
    }

    pub fn len(&self) -> usize {
        self.projects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.projects.is_empty()
    }
}

// ---------------------------------------------------------------------------
// Export ingestion
// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawComment {
    author_email: String,
    timestamp: DateTime<Utc>,
    #[serde(default)]
    has_patch_attachment: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAttachment {
    timestamp: DateTime<Utc>,
    #[serde(default)]
    is_patch: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    id: String,
    project: String,
    summary: String,
    description: String,
    created_at: DateTime<Utc>,
    status: String,
    reporter_email: String,
    comments: Vec<RawComment>,
    attachments: Vec<RawAttachment>,
    fix_commits: Vec<CommitRef>,
    fixed_files: Vec<String>,
}

/// A record that failed schema validation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordError {
    /// 1-based line number in the export stream.
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Default)]
pub struct IngestOutcome {
    pub reports: Vec<BugReport>,
    pub errors: Vec<RecordError>,
}

/// Parses a line-delimited export. Blank lines are skipped; malformed
/// records are collected in [`IngestOutcome::errors`] and do not affect
/// their neighbours.
pub fn ingest_bug_reports<R: BufRead>(reader: R) -> Result<IngestOutcome, CorpusError> {
    let mut out = IngestOutcome::default();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<RawRecord>(&line)
            .map_err(|e| e.to_string())
            .and_then(validate_record)
        {
            Ok(report) => out.reports.push(report),
            Err(message) => out.errors.push(RecordError {
                line: lineno,
                message,
            }),
        }
    }
    Ok(out)
}

fn validate_record(raw: RawRecord) -> Result<BugReport, String> {
    for c in &raw.fix_commits {
        if c.touched_files.is_empty() {
            return Err(format!("fix commit {} touches no files", c.hash));
        }
        if c.timestamp <= raw.created_at {
            return Err(format!(
                "fix commit {} is not later than the report creation time",
                c.hash
            ));
        }
    }
    Ok(BugReport {
        id: raw.id,
        project: raw.project,
        summary: raw.summary,
        description: raw.description,
        created_at: raw.created_at,
        status: Status::parse(&raw.status),
        reporter_email: raw.reporter_email,
        comments: raw
            .comments
            .into_iter()
            .map(|c| Comment {
                author_email: c.author_email,
                timestamp: c.timestamp,
                has_patch_attachment: c.has_patch_attachment,
            })
            .collect(),
        attachments: raw
            .attachments
            .into_iter()
            .map(|a| Attachment {
                timestamp: a.timestamp,
                is_patch: a.is_patch,
            })
            .collect(),
        fix_commits: raw.fix_commits,
        fixed_files: raw.fixed_files.into_iter().collect(),
    })
}

/// Serializes a report as one export line (the inverse of ingestion).
pub fn export_line(report: &BugReport) -> String {
    let value = serde_json::json!({
        "id": report.id,
        "project": report.project,
        "summary": report.summary,
        "description": report.description,
        "created_at": report.created_at,
        "status": report.status,
        "reporter_email": report.reporter_email,
        "comments": report.comments,
        "attachments": report.attachments,
        "fix_commits": report.fix_commits,
        "fixed_files": report.fixed_files,
    });
    value.to_string()
}

// ---------------------------------------------------------------------------
// Curation and the pre-fix filter
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DropReason {
    Status,
    NoFixedFiles,
    MissingFile,
}

impl std::fmt::Display for DropReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DropReason::Status => "status",
            DropReason::NoFixedFiles => "no-fixed-files",
            DropReason::MissingFile => "missing-file",
        })
    }
}

#[derive(Debug, Default)]
pub struct Curated {
    pub kept: Vec<BugReport>,
    pub dropped: Vec<(BugReport, DropReason)>,
}

/// Keeps reports that are resolved/fixed/closed and whose every fixed file
/// is present in the snapshot. Status is checked first.
pub fn curate(reports: Vec<BugReport>, snapshot: &ProjectSnapshot) -> Curated {
    let mut out = Curated::default();
    for report in reports {
        let reason = if report.status == Status::Other {
            Some(DropReason::Status)
        } else if report.fixed_files.is_empty() {
            Some(DropReason::NoFixedFiles)
        } else if report
            .fixed_files
            .iter()
            .any(|f| !snapshot.files.contains_key(f))
        {
            Some(DropReason::MissingFile)
        } else {
            None
        };
        match reason {
            Some(r) => out.dropped.push((report, r)),
            None => out.kept.push(report),
        }
    }
    out
}

fn normalize_email(e: &str) -> String {
    e.trim().to_lowercase()
}

/// Why a report was classified as post-fix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PostfixEvidence {
    ReporterIsFixer,
    EarlyPatch,
}

/// Returns the post-fix evidence for one report, if any.
pub fn postfix_evidence(report: &BugReport) -> Result<Option<PostfixEvidence>, CorpusError> {
    if report.fix_commits.is_empty() {
        return Err(CorpusError::UncuratedReport(report.id.clone()));
    }
    let reporter = normalize_email(&report.reporter_email);
    if report
        .fix_commits
        .iter()
        .any(|c| normalize_email(&c.committer_email) == reporter)
    {
        return Ok(Some(PostfixEvidence::ReporterIsFixer));
    }
    let window_end = report.created_at + Duration::seconds(PATCH_WINDOW_SECS);
    let in_window = |t: &DateTime<Utc>| *t >= report.created_at && *t <= window_end;
    let early_patch = report
        .attachments
        .iter()
        .any(|a| a.is_patch && in_window(&a.timestamp))
        || report
            .comments
            .iter()
            .any(|c| c.has_patch_attachment && in_window(&c.timestamp));
    Ok(early_patch.then_some(PostfixEvidence::EarlyPatch))
}

#[derive(Debug, Default)]
pub struct PrefixSplit {
    pub prefix: Vec<BugReport>,
    pub postfix: Vec<(BugReport, PostfixEvidence)>,
}

/// Partitions curated reports into pre-fix and post-fix populations.
pub fn filter_prefix(reports: Vec<BugReport>) -> Result<PrefixSplit, CorpusError> {
    let mut out = PrefixSplit::default();
    for report in reports {
        match postfix_evidence(&report)? {
            Some(ev) => out.postfix.push((report, ev)),
            None => out.prefix.push(report),
        }
    }
    Ok(out)
}
