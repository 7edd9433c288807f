//! Ranking metrics, reports and the per-cell dissection.
//!
//! Ranked lists are slices of paths, best first. Average precision runs over
//! the whole list and divides by the number of truth files, so truth files
//! never retrieved count as misses.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::regions::ToolResult;
use crate::vsm::{cell_name, PairFeatureVector, GRID_CELLS};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("no-ground-truth: empty truth set")]
    NoGroundTruth,
    #[error("empty population")]
    EmptyPopulation,
}

pub type Truth = BTreeSet<String>;

fn hits(ranked: &[String], truth: &Truth, n: usize) -> usize {
    ranked.iter().take(n).filter(|p| truth.contains(*p)).count()
}

pub fn precision_at(ranked: &[String], truth: &Truth, n: usize) -> f64 {
    assert!(n >= 1, "n must be at least 1");
    hits(ranked, truth, n) as f64 / n as f64
}

pub fn recall_at(ranked: &[String], truth: &Truth, n: usize) -> Result<f64, EvalError> {
    assert!(n >= 1, "n must be at least 1");
    if truth.is_empty() {
        return Err(EvalError::NoGroundTruth);
    }
    Ok(hits(ranked, truth, n) as f64 / truth.len() as f64)
}

pub fn average_precision(ranked: &[String], truth: &Truth) -> Result<f64, EvalError> {
    if truth.is_empty() {
        return Err(EvalError::NoGroundTruth);
    }
    let mut found = 0usize;
    let mut sum = 0.0;
    for (i, p) in ranked.iter().enumerate() {
        if truth.contains(p) {
            found += 1;
            sum += found as f64 / (i + 1) as f64;
        }
    }
    Ok(sum / truth.len() as f64)
}

/// 1-based rank of the first truth file.
pub fn first_hit(ranked: &[String], truth: &Truth) -> Option<usize> {
    ranked.iter().position(|p| truth.contains(p)).map(|i| i + 1)
}

pub fn reciprocal_rank(ranked: &[String], truth: &Truth) -> f64 {
    first_hit(ranked, truth).map_or(0.0, |r| 1.0 / r as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BugMetrics {
    pub bug_id: String,
    pub ap: f64,
    pub rr: f64,
    pub first_hit: Option<usize>,
}

pub fn bug_metrics(bug_id: &str, ranked: &[String], truth: &Truth) -> Result<BugMetrics, EvalError> {
    Ok(BugMetrics {
        bug_id: bug_id.to_string(),
        ap: average_precision(ranked, truth)?,
        rr: reciprocal_rank(ranked, truth),
        first_hit: first_hit(ranked, truth),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TopN {
    pub count: usize,
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub population: String,
    pub size: usize,
    pub map: f64,
    pub mrr: f64,
    pub top1: TopN,
    pub top5: TopN,
    pub top10: TopN,
    pub per_bug: Vec<BugMetrics>,
}

pub fn aggregate(population: &str, per_bug: Vec<BugMetrics>) -> Result<EvalReport, EvalError> {
    if per_bug.is_empty() {
        return Err(EvalError::EmptyPopulation);
    }
    let size = per_bug.len();
    let mean = |f: fn(&BugMetrics) -> f64| per_bug.iter().map(f).sum::<f64>() / size as f64;
    let top = |n: usize| {
        let count = per_bug.iter().filter(|b| b.first_hit.is_some_and(|r| r <= n)).count();
        TopN { count, percent: 100.0 * count as f64 / size as f64 }
    };
    Ok(EvalReport {
        population: population.to_string(),
        size,
        map: mean(|b| b.ap),
        mrr: mean(|b| b.rr),
        top1: top(1),
        top5: top(5),
        top10: top(10),
        per_bug,
    })
}

/// Evaluates every bug of `rankings` that has a non-empty truth set.
pub fn evaluate(
    population: &str,
    rankings: &BTreeMap<String, Vec<String>>,
    truths: &BTreeMap<String, Truth>,
) -> Result<EvalReport, EvalError> {
    let per_bug = rankings
        .par_iter()
        .filter_map(|(bug, ranked)| {
            let truth = truths.get(bug).filter(|t| !t.is_empty())?;
            bug_metrics(bug, ranked, truth).ok()
        })
        .collect();
    aggregate(population, per_bug)
}

const HEADER: [&str; 7] = ["population", "bugs", "MAP", "MRR", "Top1", "Top5", "Top10"];

fn summary_cells(r: &EvalReport) -> [String; 7] {
    let top = |t: TopN| format!("{} ({:.1}%)", t.count, t.percent);
    [
        r.population.clone(),
        r.size.to_string(),
        format!("{:.3}", r.map),
        format!("{:.3}", r.mrr),
        top(r.top1),
        top(r.top5),
        top(r.top10),
    ]
}

/// Left-aligns the first column and right-aligns the rest.
pub fn align(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| rows.iter().filter_map(|r| r.get(c)).map(|s| s.chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for r in rows {
        let line: Vec<String> = r
            .iter()
            .enumerate()
            .map(|(c, s)| if c == 0 { format!("{s:<w$}", w = widths[c]) } else { format!("{s:>w$}", w = widths[c]) })
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}

/// One aligned line per report under a shared header.
pub fn reports_text(reports: &[&EvalReport]) -> String {
    let mut rows = vec![HEADER.iter().map(|s| s.to_string()).collect::<Vec<_>>()];
    rows.extend(reports.iter().map(|r| summary_cells(r).to_vec()));
    align(&rows)
}

impl EvalReport {
    pub fn to_text(&self) -> String {
        reports_text(&[self])
    }
}

/// One validation year: training and test counts plus the test report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YearResult {
    pub year: i32,
    pub n_train: usize,
    pub report: EvalReport,
}

/// Years as columns, a final mean column; rows are training and validation
/// counts, MAP, MRR, and Top1/5/10 percentages.
pub fn per_year_table(years: &[YearResult]) -> String {
    let mean = |f: &dyn Fn(&YearResult) -> f64| {
        if years.is_empty() {
            0.0
        } else {
            years.iter().map(f).sum::<f64>() / years.len() as f64
        }
    };
    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut head = vec![String::new()];
    head.extend(years.iter().map(|y| y.year.to_string()));
    head.push("mean".into());
    rows.push(head);
    let count_row = |label: &str, f: &dyn Fn(&YearResult) -> usize| {
        let mut r = vec![label.to_string()];
        r.extend(years.iter().map(|y| f(y).to_string()));
        r.push(String::new());
        r
    };
    rows.push(count_row("bugs in training", &|y| y.n_train));
    rows.push(count_row("bugs in validation", &|y| y.report.size));
    let metric_row = |label: &str, f: &dyn Fn(&YearResult) -> f64, pct: bool| {
        let fmt = |x: f64| if pct { format!("{x:.0}%") } else { format!("{x:.3}") };
        let mut r = vec![label.to_string()];
        r.extend(years.iter().map(|y| fmt(f(y))));
        r.push(fmt(mean(f)));
        r
    };
    rows.push(metric_row("MAP", &|y| y.report.map, false));
    rows.push(metric_row("MRR", &|y| y.report.mrr, false));
    rows.push(metric_row("Top1", &|y| y.report.top1.percent, true));
    rows.push(metric_row("Top5", &|y| y.report.top5.percent, true));
    rows.push(metric_row("Top10", &|y| y.report.top10.percent, true));
    align(&rows)
}

/// A baseline tool and our ranking evaluated on the same bugs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub tool: String,
    pub tool_report: EvalReport,
    pub ours: EvalReport,
}

/// Per tool, restricts both sides to bugs that the tool reports, we rank,
/// and that have ground truth.
pub fn compare_with_baselines(
    ours: &BTreeMap<String, Vec<String>>,
    baselines: &[ToolResult],
    truths: &BTreeMap<String, Truth>,
) -> Result<Vec<Comparison>, EvalError> {
    let mut by_tool: BTreeMap<&str, BTreeMap<String, Vec<String>>> = BTreeMap::new();
    for r in baselines {
        if ours.contains_key(&r.bug_id) && truths.get(&r.bug_id).is_some_and(|t| !t.is_empty()) {
            by_tool.entry(&r.tool).or_default().insert(r.bug_id.clone(), r.ranked_files.clone());
        }
    }
    by_tool
        .into_iter()
        .map(|(tool, theirs)| {
            let mine: BTreeMap<String, Vec<String>> =
                theirs.keys().map(|b| (b.clone(), ours[b].clone())).collect();
            Ok(Comparison {
                tool: tool.to_string(),
                tool_report: evaluate(tool, &theirs, truths)?,
                ours: evaluate("ours", &mine, truths)?,
            })
        })
        .collect()
}

pub fn comparison_text(comparisons: &[Comparison]) -> String {
    let mut rows = vec![HEADER.iter().map(|s| s.to_string()).collect::<Vec<_>>()];
    for c in comparisons {
        rows.push(summary_cells(&c.tool_report).to_vec());
        let mut ours = summary_cells(&c.ours).to_vec();
        ours[0] = format!("  ours vs {}", c.tool);
        rows.push(ours);
    }
    align(&rows)
}

/// Indices of `scores` sorted descending; ties keep input order.
pub fn rank_order(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    idx
}

/// Pairs of one bug, in feature-store order.
pub fn group_by_bug(pairs: &[PairFeatureVector]) -> Vec<(&str, Vec<&PairFeatureVector>)> {
    let mut order: Vec<(&str, Vec<&PairFeatureVector>)> = Vec::new();
    let mut slot: BTreeMap<&str, usize> = BTreeMap::new();
    for p in pairs {
        let k = *slot.entry(&p.bug_id).or_insert_with(|| {
            order.push((&p.bug_id, Vec::new()));
            order.len() - 1
        });
        order[k].1.push(p);
    }
    order
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellScore {
    pub cell: String,
    pub map: f64,
    pub mrr: f64,
}

/// 70 cells in grid order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dissection {
    pub bugs: usize,
    pub cells: Vec<CellScore>,
}

impl Dissection {
    /// Cell with the highest MAP; the first in grid order on ties.
    pub fn best_cell(&self) -> &CellScore {
        self.cells.iter().reduce(|a, b| if b.map > a.map { b } else { a }).expect("70 cells")
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("bug_channel,code_channel,map,mrr\n");
        for c in &self.cells {
            let (b, s) = c.cell.split_once('/').unwrap_or((&c.cell, ""));
            out.push_str(&format!("{b},{s},{},{}\n", c.map, c.mrr));
        }
        out
    }
}

/// Ranks each bug's files by each single grid cell and aggregates. Truth
/// comes from pair labels; bugs without a positive pair are skipped, as are
/// bugs outside `subset` when one is given.
pub fn dissect_pairs(pairs: &[PairFeatureVector], subset: Option<&BTreeSet<String>>) -> Result<Dissection, EvalError> {
    let bugs: Vec<_> = group_by_bug(pairs)
        .into_iter()
        .filter(|(b, ps)| subset.is_none_or(|s| s.contains(*b)) && ps.iter().any(|p| p.label))
        .collect();
    if bugs.is_empty() {
        return Err(EvalError::EmptyPopulation);
    }
    let cells = (0..GRID_CELLS)
        .into_par_iter()
        .map(|c| {
            let per_bug = bugs
                .iter()
                .map(|(bug, ps)| {
                    let truth: Truth = ps.iter().filter(|p| p.label).map(|p| p.file_path.clone()).collect();
                    let scores: Vec<f64> = ps.iter().map(|p| p.scores[c]).collect();
                    let ranked: Vec<String> = rank_order(&scores).into_iter().map(|i| ps[i].file_path.clone()).collect();
                    bug_metrics(bug, &ranked, &truth)
                })
                .collect::<Result<Vec<_>, _>>()?;
            let r = aggregate(&cell_name(c), per_bug)?;
            Ok(CellScore { cell: cell_name(c), map: r.map, mrr: r.mrr })
        })
        .collect::<Result<Vec<_>, EvalError>>()?;
    Ok(Dissection { bugs: bugs.len(), cells })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn list(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    fn truth(xs: &[&str]) -> Truth {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn precision_and_recall() {
        let r = list(&["a", "x", "b", "y", "z"]);
        assert_eq!(precision_at(&r, &truth(&["a"]), 1), 1.0);
        assert_eq!(precision_at(&r, &truth(&["a", "b"]), 5), 0.4);
        assert_eq!(precision_at(&r, &truth(&["q"]), 5), 0.0);
        assert_eq!(recall_at(&r, &truth(&["a", "b", "z"]), 10), Ok(1.0));
        assert_eq!(recall_at(&r, &truth(&["a", "q"]), 5), Ok(0.5));
        assert_eq!(recall_at(&r, &truth(&[]), 5), Err(EvalError::NoGroundTruth));
    }

    #[test]
    fn ap_and_rr() {
        assert_eq!(average_precision(&list(&["a", "b"]), &truth(&["a"])), Ok(1.0));
        let ap = average_precision(&list(&["a", "x", "b"]), &truth(&["a", "b"])).unwrap();
        assert!((ap - 0.8333333333333334).abs() < 1e-12);
        assert_eq!(average_precision(&list(&["x"]), &truth(&["a"])), Ok(0.0));
        assert_eq!(reciprocal_rank(&list(&["x", "y", "z", "a"]), &truth(&["a"])), 0.25);
        assert_eq!(reciprocal_rank(&list(&["x"]), &truth(&["a"])), 0.0);
    }

    #[test]
    fn aggregate_examples() {
        let one = bug_metrics("1", &list(&["a"]), &truth(&["a"])).unwrap();
        let r = aggregate("p", vec![one.clone()]).unwrap();
        assert_eq!((r.map, r.mrr, r.top1.count, r.top1.percent), (1.0, 1.0, 1, 100.0));
        let half = BugMetrics { bug_id: "2".into(), ap: 0.5, rr: 0.5, first_hit: Some(2) };
        assert_eq!(aggregate("p", vec![one, half]).unwrap().map, 0.75);
        assert_eq!(aggregate("p", vec![]), Err(EvalError::EmptyPopulation));
    }

    #[test]
    fn stable_rank_order() {
        assert_eq!(rank_order(&[0.1, 0.5, 0.5, 0.9]), [3, 1, 2, 0]);
    }

    #[test]
    fn per_year_layout() {
        let r = aggregate("2012", vec![BugMetrics { bug_id: "1".into(), ap: 1.0, rr: 1.0, first_hit: Some(1) }]).unwrap();
        let t = per_year_table(&[YearResult { year: 2012, n_train: 4, report: r }]);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines.len(), 8);
        assert!(lines[0].contains("2012") && lines[0].ends_with("mean"));
        assert!(lines[3].starts_with("MAP"));
    }

    #[test]
    fn baseline_comparison_uses_intersection() {
        let ours: BTreeMap<_, _> = [("1".to_string(), list(&["a"])), ("2".to_string(), list(&["x", "b"]))].into();
        let truths: BTreeMap<_, _> = [("1".to_string(), truth(&["a"])), ("2".to_string(), truth(&["b"]))].into();
        let tool = ToolResult { tool: "T".into(), bug_id: "2".into(), ranked_files: list(&["b"]) };
        let c = compare_with_baselines(&ours, &[tool], &truths).unwrap();
        assert_eq!(c[0].tool_report.size, 1);
        assert_eq!(c[0].ours.size, 1);
        assert_eq!((c[0].tool_report.map, c[0].ours.map), (1.0, 0.5));
    }
}
