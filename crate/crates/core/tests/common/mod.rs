//! Independent oracles shared by the oracle suites and the acceptance run.
//! Nothing here calls into the library code it checks.

#![allow(dead_code)]

pub mod checks;

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------- metrics

/// Precision at every relevant position, recounted from scratch.
pub fn oracle_ap(ranked: &[String], truth: &BTreeSet<String>) -> f64 {
    let mut sum = 0.0;
    for k in 1..=ranked.len() {
        if truth.contains(&ranked[k - 1]) {
            let hits = ranked[..k].iter().filter(|p| truth.contains(*p)).count();
            sum += hits as f64 / k as f64;
        }
    }
    sum / truth.len() as f64
}

pub fn oracle_rr(ranked: &[String], truth: &BTreeSet<String>) -> f64 {
    for (i, p) in ranked.iter().enumerate() {
        if truth.contains(p) {
            return 1.0 / (i + 1) as f64;
        }
    }
    0.0
}

pub fn oracle_top(ranked: &[String], truth: &BTreeSet<String>, n: usize) -> bool {
    ranked.iter().take(n).any(|p| truth.contains(p))
}

/// A ranked list over a small file pool and a non-empty truth set, which
/// may include files missing from the list.
pub fn random_instance(rng: &mut ChaCha8Rng) -> (Vec<String>, BTreeSet<String>) {
    let pool: Vec<String> = (0..rng.gen_range(1..40)).map(|i| format!("f{i}.java")).collect();
    let mut ranked = pool.clone();
    ranked.shuffle(rng);
    ranked.truncate(rng.gen_range(0..=pool.len()));
    let mut truth: BTreeSet<String> = pool.iter().filter(|_| rng.gen_bool(0.15)).cloned().collect();
    if truth.is_empty() {
        truth.insert(pool[rng.gen_range(0..pool.len())].clone());
    }
    (ranked, truth)
}

// ---------------------------------------------------------- class weights

pub fn oracle_class_weights(labels: &[bool], groups: &[String]) -> Option<Vec<f64>> {
    let mut out = Vec::new();
    for (l, g) in labels.iter().zip(groups) {
        let pos = labels.iter().zip(groups).filter(|(l, h)| **l && *h == g).count();
        let neg = labels.iter().zip(groups).filter(|(l, h)| !**l && *h == g).count();
        if pos == 0 {
            return None;
        }
        let label = if *l { 1.0 } else { 0.0 };
        out.push(label * (neg as f64 / pos as f64) + 1.0);
    }
    Some(out)
}

// ----------------------------------------------------- boosting reference

#[derive(Debug, Clone)]
pub struct RefConfig {
    pub learning_rate: f64,
    pub trees: usize,
    pub num_leaves: usize,
    pub lambda: f64,
    pub min_weight: f64,
    pub min_hessian: f64,
    pub max_depth: Option<usize>,
}

/// A leaf of a reference tree, described by the conditions on its path.
#[derive(Debug, Clone)]
struct RefLeaf {
    conds: Vec<(usize, f64, bool)>,
    value: f64,
}

#[derive(Debug, Clone)]
pub struct RefModel {
    pub base: f64,
    trees: Vec<Vec<RefLeaf>>,
}

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl RefModel {
    pub fn raw(&self, row: &[f64]) -> f64 {
        let mut s = self.base;
        for tree in &self.trees {
            let leaf = tree
                .iter()
                .find(|l| l.conds.iter().all(|&(f, t, left)| (row[f] <= t) == left))
                .expect("leaves tile the space");
            s += leaf.value;
        }
        s
    }

    pub fn prob(&self, row: &[f64]) -> f64 {
        sig(self.raw(row))
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }
}

fn threshold(lo: f64, hi: f64) -> f64 {
    let m = lo + (hi - lo) / 2.0;
    if m < hi {
        m
    } else {
        lo
    }
}

struct Open {
    rows: Vec<usize>,
    conds: Vec<(usize, f64, bool)>,
    depth: usize,
}

/// Exact greedy, leaf-wise boosting with every feature considered at every
/// split. Sums are recomputed from the row sets for each candidate.
pub fn reference_boost(rows: &[Vec<f64>], labels: &[bool], weights: &[f64], cfg: &RefConfig) -> RefModel {
    let n = rows.len();
    let nf = rows[0].len();
    let y: Vec<f64> = labels.iter().map(|l| if *l { 1.0 } else { 0.0 }).collect();
    let wsum: f64 = weights.iter().sum();
    let p0: f64 = y.iter().zip(weights).map(|(a, b)| a * b).sum::<f64>() / wsum;
    let mut model = RefModel {
        base: (p0 / (1.0 - p0)).ln(),
        trees: vec![],
    };
    for _ in 0..cfg.trees {
        let raw: Vec<f64> = rows.iter().map(|r| model.raw(r)).collect();
        let g: Vec<f64> = (0..n).map(|i| weights[i] * (sig(raw[i]) - y[i])).collect();
        let h: Vec<f64> = (0..n).map(|i| weights[i] * sig(raw[i]) * (1.0 - sig(raw[i]))).collect();
        let sum = |set: &[usize], v: &[f64]| set.iter().map(|&i| v[i]).sum::<f64>();
        let score = |gs: f64, hs: f64| gs * gs / (hs + cfg.lambda);

        let best_split = |leaf: &Open| -> Option<(f64, usize, f64)> {
            if cfg.max_depth.is_some_and(|d| leaf.depth >= d) {
                return None;
            }
            let (gp, hp) = (sum(&leaf.rows, &g), sum(&leaf.rows, &h));
            let mut best: Option<(f64, usize, f64)> = None;
            #[allow(clippy::needless_range_loop)]
            for f in 0..nf {
                let mut values: Vec<f64> = leaf.rows.iter().map(|&i| rows[i][f]).collect();
                values.sort_by(f64::total_cmp);
                values.dedup();
                for pair in values.windows(2) {
                    let t = threshold(pair[0], pair[1]);
                    let (l, r): (Vec<usize>, Vec<usize>) = leaf.rows.iter().partition(|&&i| rows[i][f] <= t);
                    if sum(&l, weights) < cfg.min_weight || sum(&r, weights) < cfg.min_weight {
                        continue;
                    }
                    let (hl, hr) = (sum(&l, &h), sum(&r, &h));
                    if hl < cfg.min_hessian || hr < cfg.min_hessian {
                        continue;
                    }
                    let gain = 0.5 * (score(sum(&l, &g), hl) + score(sum(&r, &g), hr) - score(gp, hp));
                    if gain > 1e-12 && best.is_none_or(|b| gain > b.0) {
                        best = Some((gain, f, t));
                    }
                }
            }
            best
        };

        let mut open = vec![Open {
            rows: (0..n).collect(),
            conds: vec![],
            depth: 0,
        }];
        let mut splits = 0;
        while open.len() < cfg.num_leaves {
            let cands: Vec<Option<(f64, usize, f64)>> = open.iter().map(&best_split).collect();
            let mut pick: Option<usize> = None;
            for (i, c) in cands.iter().enumerate() {
                if let Some(c) = c {
                    if pick.is_none_or(|p| c.0 > cands[p].unwrap().0) {
                        pick = Some(i);
                    }
                }
            }
            let Some(i) = pick else { break };
            let (_, f, t) = cands[i].unwrap();
            let leaf = open.remove(i);
            let (l, r): (Vec<usize>, Vec<usize>) = leaf.rows.iter().partition(|&&k| rows[k][f] <= t);
            let mut lc = leaf.conds.clone();
            lc.push((f, t, true));
            let mut rc = leaf.conds;
            rc.push((f, t, false));
            open.insert(
                i,
                Open {
                    rows: r,
                    conds: rc,
                    depth: leaf.depth + 1,
                },
            );
            open.insert(
                i,
                Open {
                    rows: l,
                    conds: lc,
                    depth: leaf.depth + 1,
                },
            );
            splits += 1;
        }
        if splits == 0 {
            break;
        }
        let tree = open
            .into_iter()
            .map(|leaf| {
                let (gs, hs) = (sum(&leaf.rows, &g), sum(&leaf.rows, &h));
                let value = if hs + cfg.lambda > 0.0 {
                    -gs / (hs + cfg.lambda) * cfg.learning_rate
                } else {
                    0.0
                };
                RefLeaf {
                    conds: leaf.conds,
                    value,
                }
            })
            .collect();
        model.trees.push(tree);
    }
    model
}

/// Rank-based AUC with ties counted as one half.
pub fn auc(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (i, a) in scores.iter().enumerate() {
        if !labels[i] {
            continue;
        }
        for (j, b) in scores.iter().enumerate() {
            if labels[j] {
                continue;
            }
            den += 1.0;
            if a > b {
                num += 1.0;
            } else if a == b {
                num += 0.5;
            }
        }
    }
    num / den
}

/// Rows with distinct values per column, mixed labels, positive weights.
pub fn random_dataset(rng: &mut ChaCha8Rng, n: usize, nf: usize) -> (Vec<Vec<f64>>, Vec<bool>, Vec<f64>) {
    loop {
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..nf).map(|_| rng.gen::<f64>()).collect()).collect();
        let labels: Vec<bool> = rows
            .iter()
            .map(|r| r[0] + 0.5 * r[nf - 1] + rng.gen_range(-0.4..0.4) > 0.8)
            .collect();
        let weights: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..3.0)).collect();
        if labels.iter().any(|l| *l) && labels.iter().any(|l| !*l) {
            return (rows, labels, weights);
        }
    }
}

// ---------------------------------------------------------------- regions

/// Tool results over a random universe: tool name, bug, ranked list,
/// plus the truth map and the bug population.
pub struct Universe {
    pub tools: Vec<String>,
    pub bugs: BTreeSet<String>,
    pub truths: BTreeMap<String, BTreeSet<String>>,
    /// (tool, bug, ranked files)
    pub results: Vec<(String, String, Vec<String>)>,
}

pub fn random_universe(rng: &mut ChaCha8Rng) -> Universe {
    let tools: Vec<String> = (0..rng.gen_range(1..=6)).map(|t| format!("tool{t}")).collect();
    let bugs: BTreeSet<String> = (0..rng.gen_range(0..25)).map(|b| format!("B-{b}")).collect();
    let mut truths = BTreeMap::new();
    for b in &bugs {
        truths.insert(b.clone(), BTreeSet::from([format!("{b}/fix.java")]));
    }
    let mut results = Vec::new();
    for t in &tools {
        for b in &bugs {
            if rng.gen_bool(0.1) {
                continue;
            }
            let mut ranked: Vec<String> = (0..rng.gen_range(0..12))
                .map(|k| format!("{b}/other{k}.java"))
                .collect();
            if rng.gen_bool(0.6) {
                let at = rng.gen_range(0..=ranked.len());
                ranked.insert(at, format!("{b}/fix.java"));
            }
            results.push((t.clone(), b.clone(), ranked));
        }
        // a bug outside the population
        if rng.gen_bool(0.2) {
            results.push((t.clone(), "STRAY-1".into(), vec!["x.java".into()]));
        }
    }
    Universe {
        tools,
        bugs,
        truths,
        results,
    }
}

/// Success sets computed directly from the raw results.
pub fn oracle_success(u: &Universe, n: usize) -> BTreeMap<String, BTreeSet<String>> {
    let mut out: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for (t, b, ranked) in &u.results {
        let set = out.entry(t.clone()).or_default();
        if u.bugs.contains(b) && ranked.iter().take(n).any(|p| u.truths[b].contains(p)) {
            set.insert(b.clone());
        }
    }
    out
}

/// Checks every region invariant; returns the first violation.
pub fn check_regions(
    u: &Universe,
    n: usize,
    regions: &BTreeMap<String, BTreeSet<String>>,
    order: &[String],
) -> Result<(), String> {
    let success = oracle_success(u, n);
    let tools: Vec<&String> = success.keys().collect();
    let mut expected_order: Vec<String> = tools.iter().map(|t| t.to_string()).collect();
    expected_order.extend(tools.iter().map(|t| format!("Only-{t}")));
    expected_order.extend(["UNION", "INTER", "NOT-UNION"].map(String::from));
    if order != expected_order.as_slice() {
        return Err(format!("region order {order:?}"));
    }
    let union: BTreeSet<String> = success.values().flatten().cloned().collect();
    for t in &tools {
        let tool_set = &regions[*t];
        if tool_set != &success[*t] {
            return Err(format!("{t} differs from its success set"));
        }
        let only = &regions[&format!("Only-{t}")];
        if !only.is_subset(tool_set) {
            return Err(format!("Only-{t} is not a subset of {t}"));
        }
        for b in tool_set {
            let exclusive = tools.iter().all(|o| o == t || !success[*o].contains(b));
            if exclusive != only.contains(b) {
                return Err(format!("Only-{t} membership of {b}"));
            }
        }
        for o in &tools {
            if o != t && !only.is_disjoint(&regions[&format!("Only-{o}")]) {
                return Err(format!("Only-{t} meets Only-{o}"));
            }
        }
        if !regions["INTER"].is_subset(tool_set) {
            return Err(format!("INTER is not inside {t}"));
        }
    }
    if regions["UNION"] != union {
        return Err("UNION is not the union".into());
    }
    let inter: BTreeSet<String> = union
        .iter()
        .filter(|b| success.values().all(|s| s.contains(*b)))
        .cloned()
        .collect();
    if regions["INTER"] != inter {
        return Err("INTER is not the intersection".into());
    }
    let not_union: BTreeSet<String> = u.bugs.difference(&union).cloned().collect();
    if regions["NOT-UNION"] != not_union {
        return Err("NOT-UNION is not the complement".into());
    }
    // tiling: every bug is in exactly one of NOT-UNION, some Only set,
    // INTER (with two or more tools), or the shared remainder
    for b in &u.bugs {
        let hits = tools.iter().filter(|t| success[**t].contains(b)).count();
        let in_not_union = regions["NOT-UNION"].contains(b);
        let in_only = tools.iter().any(|t| regions[&format!("Only-{t}")].contains(b));
        if (hits == 0) != in_not_union || (hits == 1) != in_only {
            return Err(format!("tiling fails at {b}"));
        }
    }
    Ok(())
}

pub fn oracle_overlap(a: &BTreeSet<String>, b: &BTreeSet<String>) -> (f64, f64, f64) {
    let all: BTreeSet<&String> = a.iter().chain(b).collect();
    let total = all.len() as f64;
    let both = all.iter().filter(|x| a.contains(**x) && b.contains(**x)).count() as f64;
    let only_a = all.iter().filter(|x| a.contains(**x) && !b.contains(**x)).count() as f64;
    let only_b = all.iter().filter(|x| !a.contains(**x) && b.contains(**x)).count() as f64;
    (100.0 * both / total, 100.0 * only_a / total, 100.0 * only_b / total)
}
