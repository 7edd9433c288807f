//! Per-file history export.
//!
//! ```text
//! === src/main/java/org/demo/Foo.java
//! --- commit 3f2a9c dev@example.org 2012-04-01T10:00:00Z
//! log:
//! Fix null check in Foo
//! hunk:
//! @@ -10,3 +10,4 @@
//! -    if (x == null)
//! +    if (x == null || x.isEmpty())
//! ```
//!
//! A `log:` block runs until the next `hunk:`, `--- commit` or `===` line. A
//! `hunk:` block runs until the next `hunk:`, `--- commit` or `===` line.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryCommit {
    pub hash: String,
    pub committer_email: String,
    pub timestamp: DateTime<Utc>,
    pub log: String,
    pub hunks: Vec<String>,
}

/// Path to the commits that touched it, in export order.
pub type ProjectHistory = BTreeMap<String, Vec<HistoryCommit>>;

#[derive(Debug, Error, PartialEq)]
#[error("history export line {line}: {message}")]
pub struct HistoryParseError {
    pub line: usize,
    pub message: String,
}

enum Block {
    None,
    Log,
    Hunk,
}

pub fn parse_history(text: &str) -> Result<ProjectHistory, HistoryParseError> {
    let mut history = ProjectHistory::new();
    let mut path: Option<String> = None;
    let mut block = Block::None;
    let err = |line: usize, message: &str| HistoryParseError {
        line,
        message: message.to_string(),
    };

    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if let Some(p) = line.strip_prefix("=== ") {
            let p = p.trim().to_string();
            if p.is_empty() {
                return Err(err(lineno, "empty path in section header"));
            }
            history.entry(p.clone()).or_default();
            path = Some(p);
            block = Block::None;
            continue;
        }
        if let Some(rest) = line.strip_prefix("--- commit ") {
            let Some(p) = &path else {
                return Err(err(lineno, "commit outside of a file section"));
            };
            let parts: Vec<&str> = rest.split_whitespace().collect();
            if parts.len() != 3 {
                return Err(err(lineno, "expected `--- commit <hash> <email> <rfc3339>`"));
            }
            let timestamp = DateTime::parse_from_rfc3339(parts[2])
                .map_err(|e| err(lineno, &format!("bad timestamp: {e}")))?
                .with_timezone(&Utc);
            history.get_mut(p).expect("section exists").push(HistoryCommit {
                hash: parts[0].to_string(),
                committer_email: parts[1].to_string(),
                timestamp,
                log: String::new(),
                hunks: Vec::new(),
            });
            block = Block::None;
            continue;
        }
        let current = path
            .as_ref()
            .and_then(|p| history.get_mut(p))
            .and_then(|commits| commits.last_mut());
        match line {
            "log:" => {
                if current.is_none() {
                    return Err(err(lineno, "`log:` outside of a commit"));
                }
                block = Block::Log;
            }
            "hunk:" => {
                let Some(c) = current else {
                    return Err(err(lineno, "`hunk:` outside of a commit"));
                };
                c.hunks.push(String::new());
                block = Block::Hunk;
            }
            _ => match (&block, current) {
                (Block::Log, Some(c)) => push_line(&mut c.log, line),
                (Block::Hunk, Some(c)) => {
                    push_line(c.hunks.last_mut().expect("hunk opened"), line)
                }
                _ if line.trim().is_empty() => {}
                _ => return Err(err(lineno, "text outside of a log or hunk block")),
            },
        }
    }
    Ok(history)
}

fn push_line(buf: &mut String, line: &str) {
    if !buf.is_empty() {
        buf.push('\n');
    }
    buf.push_str(line);
}

/// Writes history in the export format; `parse_history` reads it back.
pub fn write_history(history: &ProjectHistory) -> String {
    let mut out = String::new();
    for (path, commits) in history {
        out.push_str(&format!("=== {path}\n"));
        for c in commits {
            out.push_str(&format!(
                "--- commit {} {} {}\n",
                c.hash,
                c.committer_email,
                c.timestamp.to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
            ));
            out.push_str("log:\n");
            if !c.log.is_empty() {
                out.push_str(&c.log);
                out.push('\n');
            }
            for h in &c.hunks {
                out.push_str("hunk:\n");
                if !h.is_empty() {
                    out.push_str(h);
                    out.push('\n');
                }
            }
        }
    }
    out
}
