//! Source-side token bags.
//!
//! Structure comes from a lexical scanner that tracks braces and
//! parentheses rather than a full parser, so broken files still yield
//! best-effort bags (flagged `degraded`). The [`StructureExtractor`] trait
//! lets a real parser take its place.

mod scanner;

use serde::{Deserialize, Serialize};

use crate::corpus::HistoryCommit;
use crate::textprep::{Lexicon, SourceKind, TokenBag};

pub use scanner::ScannerExtractor;

/// Names of the ten source channels, in grid order.
pub const CODE_CHANNELS: [&str; 10] = [
    "packageNames",
    "className",
    "methodNames",
    "methodInvocation",
    "formalParameter",
    "memberReference",
    "documentation",
    "rawSource",
    "hunks",
    "commitLogs",
];

/// The eight bags derived from file text alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileStructure {
    pub package_names: TokenBag,
    pub class_name: TokenBag,
    pub method_names: TokenBag,
    pub method_invocation: TokenBag,
    pub formal_parameter: TokenBag,
    pub member_reference: TokenBag,
    pub documentation: TokenBag,
    pub raw_source: TokenBag,
    /// Set when braces or parentheses did not balance.
    pub degraded: bool,
}

pub trait StructureExtractor: Sync {
    fn extract(&self, lexicon: &Lexicon, file_text: &str) -> FileStructure;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceDocument {
    pub path: String,
    pub structure: FileStructure,
    pub hunks: TokenBag,
    pub commit_logs: TokenBag,
}

impl SourceDocument {
    /// The ten bags in [`CODE_CHANNELS`] order.
    pub fn channels(&self) -> [&TokenBag; 10] {
        let s = &self.structure;
        [
            &s.package_names,
            &s.class_name,
            &s.method_names,
            &s.method_invocation,
            &s.formal_parameter,
            &s.member_reference,
            &s.documentation,
            &s.raw_source,
            &self.hunks,
            &self.commit_logs,
        ]
    }
}

/// Scanner-based extraction with the bundled lexicon.
pub fn extract_structure(file_text: &str) -> FileStructure {
    ScannerExtractor.extract(Lexicon::bundled(), file_text)
}

/// Hunk bodies (added, removed and context lines alike) are code-tokenized;
/// commit logs are natural-tokenized. `None` history yields empty bags.
pub fn extract_history(lexicon: &Lexicon, commits: Option<&[HistoryCommit]>) -> (TokenBag, TokenBag) {
    let mut hunks = TokenBag::new(SourceKind::Code);
    let mut logs = TokenBag::new(SourceKind::Natural);
    for c in commits.unwrap_or_default() {
        logs.merge(&lexicon.tokenize_natural(&c.log));
        for h in &c.hunks {
            hunks.merge(&lexicon.tokenize_code(h));
        }
    }
    (hunks, logs)
}

pub fn build_source_document(
    lexicon: &Lexicon,
    extractor: &dyn StructureExtractor,
    path: &str,
    file_text: &str,
    commits: Option<&[HistoryCommit]>,
) -> SourceDocument {
    let (hunks, commit_logs) = extract_history(lexicon, commits);
    SourceDocument {
        path: path.to_string(),
        structure: extractor.extract(lexicon, file_text),
        hunks,
        commit_logs,
    }
}
