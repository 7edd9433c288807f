//! Baseline tool results, TopN success and the region family.
//!
//! A region is a set of bug ids defined by which tools localize each bug
//! within their first `n` recommendations. For tools `T1..Tk` the family is
//! `<Ti>`, `Only-<Ti>`, `UNION`, `NOT-UNION` and `INTER`, where `INTER` means
//! localized by every tool present in the result files.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RegionError {
    #[error("ambiguous-result: tool {tool} reports bug {bug_id} more than once")]
    AmbiguousResult { tool: String, bug_id: String },
    #[error("empty-universe: both sets are empty")]
    EmptyUniverse,
    #[error("no tool results")]
    NoTools,
    #[error("tool result record {line}: {message}")]
    Record { line: u64, message: String },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// One tool's ranked files for one bug.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolResult {
    pub tool: String,
    pub bug_id: String,
    pub ranked_files: Vec<String>,
}

#[derive(Debug, Deserialize)]
struct ResultRow {
    tool: String,
    bug_id: String,
    rank: u32,
    path: String,
}

/// Reads `tool,bug_id,rank,path` rows. Rows may arrive in any order; each
/// (tool, bug) group is sorted by rank. Repeated ranks or paths within a
/// group are record errors.
pub fn read_tool_results<R: Read>(r: R) -> Result<Vec<ToolResult>, RegionError> {
    let mut groups: BTreeMap<(String, String), Vec<(u32, String)>> = BTreeMap::new();
    let mut input = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    for (i, row) in input.deserialize::<ResultRow>().enumerate() {
        let line = i as u64 + 2;
        let row = row.map_err(|e| RegionError::Record { line, message: e.to_string() })?;
        if row.rank == 0 {
            return Err(RegionError::Record { line, message: "rank is 1-based".into() });
        }
        groups.entry((row.tool, row.bug_id)).or_default().push((row.rank, row.path));
    }
    let mut out = Vec::with_capacity(groups.len());
    for ((tool, bug_id), mut rows) in groups {
        rows.sort();
        let mut seen = BTreeSet::new();
        for w in rows.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(RegionError::Record {
                    line: 0,
                    message: format!("{tool}/{bug_id}: rank {} repeated", w[0].0),
                });
            }
        }
        for (_, p) in &rows {
            if !seen.insert(p.clone()) {
                return Err(RegionError::Record {
                    line: 0,
                    message: format!("{tool}/{bug_id}: path {p} ranked twice"),
                });
            }
        }
        out.push(ToolResult { tool, bug_id, ranked_files: rows.into_iter().map(|(_, p)| p).collect() });
    }
    Ok(out)
}

pub fn write_tool_results<W: std::io::Write>(w: W, results: &[ToolResult]) -> Result<(), RegionError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["tool", "bug_id", "rank", "path"])?;
    for r in results {
        for (k, p) in r.ranked_files.iter().enumerate() {
            out.write_record([r.tool.as_str(), &r.bug_id, &(k + 1).to_string(), p])?;
        }
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// 1 when any of the first `n` files is a truth file.
pub fn topn_success(result: &ToolResult, truth: &BTreeSet<String>, n: usize) -> bool {
    assert!(n >= 1, "n must be at least 1");
    result.ranked_files.iter().take(n).any(|p| truth.contains(p))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region {
    pub name: String,
    pub bug_ids: BTreeSet<String>,
}

pub const UNION: &str = "UNION";
pub const NOT_UNION: &str = "NOT-UNION";
pub const INTER: &str = "INTER";

pub fn only_name(tool: &str) -> String {
    format!("Only-{tool}")
}

/// The whole family plus the per-tool success sets it was derived from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSet {
    pub tools: Vec<String>,
    pub all_bugs: BTreeSet<String>,
    /// Per tool, the bugs it localizes within the first `n`.
    pub success: BTreeMap<String, BTreeSet<String>>,
    /// Bugs present in result files but absent from `all_bugs`.
    pub ignored: BTreeSet<String>,
    pub regions: Vec<Region>,
}

impl RegionSet {
    pub fn get(&self, name: &str) -> Option<&Region> {
        self.regions.iter().find(|r| r.name == name)
    }

    pub fn names(&self) -> Vec<&str> {
        self.regions.iter().map(|r| r.name.as_str()).collect()
    }
}

/// Builds `<tool>` and `Only-<tool>` for every tool (sorted by name),
/// then `UNION`, `INTER` and `NOT-UNION`. A tool with no result for a bug
/// does not localize it. Result bugs outside `all_bugs` are ignored and
/// logged.
pub fn build_regions(
    results: &[ToolResult],
    truths: &BTreeMap<String, BTreeSet<String>>,
    all_bugs: &BTreeSet<String>,
    n: usize,
) -> Result<RegionSet, RegionError> {
    let mut success: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    let mut seen = BTreeSet::new();
    let mut ignored = BTreeSet::new();
    for r in results {
        if !seen.insert((r.tool.as_str(), r.bug_id.as_str())) {
            return Err(RegionError::AmbiguousResult { tool: r.tool.clone(), bug_id: r.bug_id.clone() });
        }
        let set = success.entry(r.tool.clone()).or_default();
        if !all_bugs.contains(&r.bug_id) {
            ignored.insert(r.bug_id.clone());
            continue;
        }
        let empty = BTreeSet::new();
        if topn_success(r, truths.get(&r.bug_id).unwrap_or(&empty), n) {
            set.insert(r.bug_id.clone());
        }
    }
    if success.is_empty() {
        return Err(RegionError::NoTools);
    }
    if !ignored.is_empty() {
        log::warn!("{} result bugs are not in the corpus and were ignored", ignored.len());
    }

    let tools: Vec<String> = success.keys().cloned().collect();
    let mut regions = Vec::new();
    for t in &tools {
        regions.push(Region { name: t.clone(), bug_ids: success[t].clone() });
    }
    for t in &tools {
        let only = success[t]
            .iter()
            .filter(|b| tools.iter().all(|o| o == t || !success[o].contains(*b)))
            .cloned()
            .collect();
        regions.push(Region { name: only_name(t), bug_ids: only });
    }
    let union: BTreeSet<String> = success.values().flatten().cloned().collect();
    let inter = union
        .iter()
        .filter(|b| success.values().all(|s| s.contains(*b)))
        .cloned()
        .collect();
    let not_union = all_bugs.difference(&union).cloned().collect();
    regions.push(Region { name: UNION.into(), bug_ids: union });
    regions.push(Region { name: INTER.into(), bug_ids: inter });
    regions.push(Region { name: NOT_UNION.into(), bug_ids: not_union });
    Ok(RegionSet { tools, all_bugs: all_bugs.clone(), success, ignored, regions })
}

/// Percentages of `a ∪ b` in both, only `a`, and only `b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Overlap {
    pub both: f64,
    pub only_a: f64,
    pub only_b: f64,
}

pub fn overlap(a: &BTreeSet<String>, b: &BTreeSet<String>) -> Result<Overlap, RegionError> {
    let union = a.union(b).count();
    if union == 0 {
        return Err(RegionError::EmptyUniverse);
    }
    let pct = |k: usize| 100.0 * k as f64 / union as f64;
    Ok(Overlap {
        both: pct(a.intersection(b).count()),
        only_a: pct(a.difference(b).count()),
        only_b: pct(b.difference(a).count()),
    })
}

/// `region,count` table, one line per region, in family order.
pub fn counts_table(set: &RegionSet) -> String {
    let width = set.regions.iter().map(|r| r.name.len()).max().unwrap_or(0);
    let mut out = String::new();
    for r in &set.regions {
        out.push_str(&format!("{:<width$}  {}\n", r.name, r.bug_ids.len()));
    }
    out
}
