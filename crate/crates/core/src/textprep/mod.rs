//! Text normalization into token bags.
//!
//! Three pathways share one [`Lexicon`] (stopwords plus an English word
//! list):
//!
//! * natural language: whitespace split, punctuation stripped, unknown
//!   words discarded, stopwords removed, Porter-stemmed;
//! * code: split on punctuation, camelCase and snake_case, stopwords
//!   removed, stemmed, no dictionary check;
//! * stack traces and identifier hints: regex detection, then the code
//!   pathway.
//!
//! Numbers and one-character tokens are always discarded.

pub mod porter;

use std::collections::{BTreeMap, HashSet};
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::corpus::BugReport;

const BUNDLED_STOPWORDS: &str = include_str!("../../data/stopwords_en.txt");
const BUNDLED_KEYWORDS: &str = include_str!("../../data/java_keywords.txt");
const BUNDLED_DICTIONARY: &str = include_str!("../../data/dictionary.txt");

/// Words of the bundled English word list, in file order.
pub(crate) fn bundled_dictionary_words() -> impl Iterator<Item = &'static str> {
    BUNDLED_DICTIONARY.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceKind {
    Natural,
    Stacktrace,
    Code,
}

/// A multiset of normalized terms.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenBag {
    pub kind: SourceKind,
    counts: BTreeMap<String, u32>,
}

impl TokenBag {
    pub fn new(kind: SourceKind) -> Self {
        TokenBag {
            kind,
            counts: BTreeMap::new(),
        }
    }

    /// Builds a bag from raw counts, bypassing normalization. Intended for
    /// deserialized data and tests.
    pub fn from_counts(kind: SourceKind, counts: impl IntoIterator<Item = (String, u32)>) -> Self {
        let counts = counts.into_iter().filter(|(_, c)| *c > 0).collect();
        TokenBag { kind, counts }
    }

    pub fn add(&mut self, term: &str, n: u32) {
        if n > 0 && !term.is_empty() {
            *self.counts.entry(term.to_string()).or_insert(0) += n;
        }
    }

    /// Adds every occurrence of `other` (multiset sum).
    pub fn merge(&mut self, other: &TokenBag) {
        for (t, c) in &other.counts {
            self.add(t, *c);
        }
    }

    pub fn count(&self, term: &str) -> u32 {
        self.counts.get(term).copied().unwrap_or(0)
    }

    pub fn contains(&self, term: &str) -> bool {
        self.counts.contains_key(term)
    }

    /// Distinct terms with their multiplicities, in term order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, u32)> {
        self.counts.iter().map(|(t, c)| (t.as_str(), *c))
    }

    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.counts.keys().map(String::as_str)
    }

    pub fn distinct(&self) -> usize {
        self.counts.len()
    }

    /// Total number of occurrences.
    pub fn total(&self) -> u64 {
        self.counts.values().map(|&c| c as u64).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }
}

/// Stopword set and English word list.
#[derive(Debug, Clone)]
pub struct Lexicon {
    stopwords: HashSet<String>,
    dictionary: HashSet<String>,
}

fn parse_word_file(text: &str) -> impl Iterator<Item = String> + '_ {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
}

impl Lexicon {
    /// Builds a lexicon from stopword-file and dictionary-file contents.
    pub fn from_texts<'a>(stopword_texts: impl IntoIterator<Item = &'a str>, dictionary: &str) -> Self {
        let stopwords = stopword_texts.into_iter().flat_map(parse_word_file).collect();
        Lexicon {
            stopwords,
            dictionary: parse_word_file(dictionary).collect(),
        }
    }

    /// English stopwords, Java keywords and the bundled word list.
    pub fn bundled() -> &'static Lexicon {
        static LEXICON: OnceLock<Lexicon> = OnceLock::new();
        LEXICON.get_or_init(|| {
            Lexicon::from_texts([BUNDLED_STOPWORDS, BUNDLED_KEYWORDS], BUNDLED_DICTIONARY)
        })
    }

    /// Bundled English stopwords plus the given keyword file, and the given
    /// dictionary file (or the bundled word list).
    pub fn load(keywords: Option<&Path>, dictionary: Option<&Path>) -> std::io::Result<Self> {
        let kw = match keywords {
            Some(p) => std::fs::read_to_string(p)?,
            None => BUNDLED_KEYWORDS.to_string(),
        };
        let dict = match dictionary {
            Some(p) => std::fs::read_to_string(p)?,
            None => BUNDLED_DICTIONARY.to_string(),
        };
        Ok(Lexicon::from_texts([BUNDLED_STOPWORDS, kw.as_str()], &dict))
    }

    pub fn is_stopword(&self, term: &str) -> bool {
        self.stopwords.contains(term)
    }

    /// Dictionary lookup with light inflection stripping, so that plural
    /// and verb forms of listed base words are accepted.
    pub fn is_known_word(&self, word: &str) -> bool {
        if self.dictionary.contains(word) {
            return true;
        }
        const DETACH: &[(&str, &str)] = &[
            ("ies", "y"),
            ("sses", "ss"),
            ("ses", "s"),
            ("xes", "x"),
            ("zes", "z"),
            ("ches", "ch"),
            ("shes", "sh"),
            ("men", "man"),
            ("s", ""),
            ("ied", "y"),
            ("ed", "e"),
            ("ed", ""),
            ("ing", "e"),
            ("ing", ""),
            ("er", ""),
            ("er", "e"),
            ("est", ""),
            ("est", "e"),
        ];
        for (suffix, repl) in DETACH {
            if let Some(base) = word.strip_suffix(suffix) {
                if base.len() < 2 {
                    continue;
                }
                let candidate = format!("{base}{repl}");
                if self.dictionary.contains(&candidate) {
                    return true;
                }
                // doubled final consonant: running -> run, stopped -> stop
                let b = base.as_bytes();
                if repl.is_empty()
                    && b.len() >= 3
                    && b[b.len() - 1] == b[b.len() - 2]
                    && self.dictionary.contains(&base[..base.len() - 1])
                {
                    return true;
                }
            }
        }
        false
    }

    /// Lowercase, length/number filter, stopword filter, stem, and stopword
    /// filter again on the stem.
    pub(crate) fn normalize(&self, raw: &str) -> Option<String> {
        let lower = raw.to_lowercase();
        if lower.chars().count() < 2 || lower.chars().all(|c| c.is_ascii_digit()) {
            return None;
        }
        if !lower.chars().all(char::is_alphanumeric) || lower.chars().any(|c| c.is_ascii_digit()) {
            return None;
        }
        if self.is_stopword(&lower) {
            return None;
        }
        let stemmed = porter::stem(&lower);
        if stemmed.chars().count() < 2 || self.is_stopword(&stemmed) {
            return None;
        }
        Some(stemmed)
    }

    pub fn tokenize_natural(&self, text: &str) -> TokenBag {
        let mut bag = TokenBag::new(SourceKind::Natural);
        for chunk in text.split_whitespace() {
            for piece in chunk.split(|c: char| !c.is_alphanumeric()) {
                if piece.is_empty() {
                    continue;
                }
                let lower = piece.to_lowercase();
                if !self.is_known_word(&lower) {
                    continue;
                }
                if let Some(t) = self.normalize(&lower) {
                    bag.add(&t, 1);
                }
            }
        }
        bag
    }

    pub fn tokenize_code(&self, text: &str) -> TokenBag {
        let mut bag = TokenBag::new(SourceKind::Code);
        self.add_code_tokens(&mut bag, text);
        bag
    }

    fn add_code_tokens(&self, bag: &mut TokenBag, text: &str) {
        for piece in text.split(|c: char| !c.is_alphanumeric()) {
            for part in split_identifier(piece) {
                if let Some(t) = self.normalize(part) {
                    bag.add(&t, 1);
                }
            }
        }
    }

    /// Removes stack-trace frames, exception headers and `... N more`
    /// lines from `description`. Returns the trace tokens and the remaining
    /// text.
    pub fn extract_stack_traces(&self, description: &str) -> (TokenBag, String) {
        let re = trace_regexes();
        let mut bag = TokenBag::new(SourceKind::Stacktrace);
        let mut remainder = description.to_string();
        loop {
            let mut changed = false;
            if re.frame.is_match(&remainder) {
                for cap in re.frame.captures_iter(&remainder) {
                    self.add_code_tokens(&mut bag, &cap[1]);
                    self.add_code_tokens(&mut bag, &cap[2]);
                    let location = &cap[3];
                    if location.contains('.') {
                        let file = location.split(':').next().unwrap_or("");
                        self.add_code_tokens(&mut bag, file);
                    }
                }
                remainder = re.frame.replace_all(&remainder, " ").into_owned();
                changed = true;
            }
            if re.header.is_match(&remainder) {
                for cap in re.header.captures_iter(&remainder) {
                    self.add_code_tokens(&mut bag, &cap[1]);
                }
                remainder = re.header.replace_all(&remainder, " ").into_owned();
                changed = true;
            }
            if re.more.is_match(&remainder) {
                remainder = re.more.replace_all(&remainder, " ").into_owned();
                changed = true;
            }
            if !changed {
                break;
            }
        }
        (bag, remainder)
    }

    /// Tokens from code-like substrings: camelCase words, dotted names,
    /// snake_case identifiers.
    pub fn extract_hints(&self, text: &str) -> TokenBag {
        let mut bag = TokenBag::new(SourceKind::Code);
        for m in trace_regexes().candidate.find_iter(text) {
            if is_identifier_like(m.as_str()) {
                self.add_code_tokens(&mut bag, m.as_str());
            }
        }
        bag
    }

    pub fn build_bug_features(&self, report: &BugReport) -> BugReportFeatures {
        let summary = self.tokenize_natural(&report.summary);
        let description = self.tokenize_natural(&report.description);
        let (stack_traces, remainder) = self.extract_stack_traces(&report.description);
        let mut code_elements = TokenBag::new(SourceKind::Code);
        for block in code_blocks(&remainder) {
            self.add_code_tokens(&mut code_elements, &block);
        }
        let summary_hints = self.extract_hints(&report.summary);
        let description_hints = self.extract_hints(&remainder);

        let mut raw = TokenBag::new(SourceKind::Natural);
        for b in [
            &summary,
            &description,
            &stack_traces,
            &code_elements,
            &summary_hints,
            &description_hints,
        ] {
            raw.merge(b);
        }
        BugReportFeatures {
            summary,
            description,
            raw_bug_report: raw,
            stack_traces,
            code_elements,
            summary_hints,
            description_hints,
        }
    }
}

/// Splits one alphanumeric run at camelCase humps and letter/digit
/// boundaries. Runs of capitals keep together except for the last capital
/// when it starts a new word: `XMLHttpRequest` -> `XML`, `Http`, `Request`.
pub fn split_identifier(piece: &str) -> Vec<&str> {
    let chars: Vec<(usize, char)> = piece.char_indices().collect();
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..chars.len() {
        let (pos, c) = chars[i];
        let prev = chars[i - 1].1;
        let next = chars.get(i + 1).map(|x| x.1);
        let boundary = (prev.is_lowercase() && c.is_uppercase())
            || (prev.is_uppercase()
                && c.is_uppercase()
                && next.is_some_and(char::is_lowercase))
            || (prev.is_ascii_digit() != c.is_ascii_digit());
        if boundary {
            out.push(&piece[start..pos]);
            start = pos;
        }
    }
    if start < piece.len() {
        out.push(&piece[start..]);
    }
    out
}

fn is_identifier_like(s: &str) -> bool {
    let s = s.trim_end_matches("()");
    if s.contains('.') {
        return true;
    }
    let chars: Vec<char> = s.chars().collect();
    if chars
        .windows(3)
        .any(|w| w[1] == '_' && w[0].is_alphanumeric() && w[2].is_alphanumeric())
    {
        return true;
    }
    chars.windows(2).any(|w| w[0].is_lowercase() && w[1].is_uppercase())
        || chars
            .windows(3)
            .any(|w| w[0].is_uppercase() && w[1].is_uppercase() && w[2].is_lowercase())
}

struct TraceRegexes {
    frame: Regex,
    header: Regex,
    more: Regex,
    candidate: Regex,
}

fn trace_regexes() -> &'static TraceRegexes {
    static RE: OnceLock<TraceRegexes> = OnceLock::new();
    RE.get_or_init(|| TraceRegexes {
        frame: Regex::new(
            r"\bat\s+((?:[A-Za-z_$][\w$]*\.)+)([A-Za-z_$<][\w$<>]*)\s*\(([^()\n]*)\)",
        )
        .unwrap(),
        header: Regex::new(
            r#"(?m)^[ \t]*(?:Exception in thread "[^"\n]*"[ \t]+|Caused by:[ \t]+)?((?:[A-Za-z_$][\w$]*\.)+[A-Za-z_$][\w$]*(?:Exception|Error|Throwable))\b"#,
        )
        .unwrap(),
        more: Regex::new(r"(?m)^[ \t]*\.\.\.[ \t]*\d+[ \t]+more[ \t]*$").unwrap(),
        candidate: Regex::new(r"[A-Za-z_$][\w$]*(?:\.[A-Za-z_$][\w$]*)*(?:\(\))?").unwrap(),
    })
}

/// Fenced (```), JIRA `{code}`/`{noformat}` and four-space/tab indented
/// blocks.
pub fn code_blocks(text: &str) -> Vec<String> {
    let mut blocks = Vec::new();
    let mut current: Option<(String, &str)> = None;
    let mut indented: Vec<&str> = Vec::new();
    let flush_indented = |indented: &mut Vec<&str>, blocks: &mut Vec<String>| {
        if !indented.is_empty() {
            blocks.push(indented.join("\n"));
            indented.clear();
        }
    };
    for line in text.lines() {
        let trimmed = line.trim();
        if let Some((buf, closer)) = current.as_mut() {
            if trimmed.starts_with(*closer) {
                blocks.push(std::mem::take(buf));
                current = None;
            } else {
                if !buf.is_empty() {
                    buf.push('\n');
                }
                buf.push_str(line);
            }
            continue;
        }
        let opener = if trimmed.starts_with("```") {
            Some("```")
        } else if trimmed.starts_with("{code") {
            Some("{code")
        } else if trimmed.starts_with("{noformat") {
            Some("{noformat")
        } else {
            None
        };
        if let Some(closer) = opener {
            flush_indented(&mut indented, &mut blocks);
            // `{code:java}x = 1;{code}` may open and close on one line
            let rest = match (closer, trimmed.find('}')) {
                ("```", _) | (_, None) => "",
                (_, Some(i)) => &trimmed[i + 1..],
            };
            if let Some(end) = rest.find(closer) {
                blocks.push(rest[..end].to_string());
            } else {
                current = Some((rest.to_string(), closer));
            }
            continue;
        }
        if (line.starts_with("    ") || line.starts_with('\t')) && !trimmed.is_empty() {
            indented.push(line);
        } else {
            flush_indented(&mut indented, &mut blocks);
        }
    }
    flush_indented(&mut indented, &mut blocks);
    if let Some((buf, _)) = current {
        blocks.push(buf);
    }
    blocks
}

/// Names of the seven bug-report channels, in grid order.
pub const BUG_CHANNELS: [&str; 7] = [
    "summary",
    "description",
    "rawBugReport",
    "stackTraces",
    "codeElements",
    "summaryHints",
    "descriptionHints",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BugReportFeatures {
    pub summary: TokenBag,
    pub description: TokenBag,
    pub raw_bug_report: TokenBag,
    pub stack_traces: TokenBag,
    pub code_elements: TokenBag,
    pub summary_hints: TokenBag,
    pub description_hints: TokenBag,
}

impl BugReportFeatures {
    /// The seven bags in [`BUG_CHANNELS`] order.
    pub fn channels(&self) -> [&TokenBag; 7] {
        [
            &self.summary,
            &self.description,
            &self.raw_bug_report,
            &self.stack_traces,
            &self.code_elements,
            &self.summary_hints,
            &self.description_hints,
        ]
    }
}

pub fn tokenize_natural(text: &str) -> TokenBag {
    Lexicon::bundled().tokenize_natural(text)
}

pub fn tokenize_code(text: &str) -> TokenBag {
    Lexicon::bundled().tokenize_code(text)
}

pub fn extract_stack_traces(description: &str) -> (TokenBag, String) {
    Lexicon::bundled().extract_stack_traces(description)
}

pub fn extract_hints(text: &str) -> TokenBag {
    Lexicon::bundled().extract_hints(text)
}

pub fn build_bug_features(report: &BugReport) -> BugReportFeatures {
    Lexicon::bundled().build_bug_features(report)
}
