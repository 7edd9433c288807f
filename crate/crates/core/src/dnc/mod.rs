//! Timeline splits, per-region training and the averaged ensemble ranking.
//!
//! Each region gets its own boosted model, trained only on pairs of region
//! bugs created before the cutoff. Test pairs are scored by every model,
//! the probabilities averaged (unweighted), and each bug's candidate files
//! ranked by that mean. Equal means keep feature-store order and receive
//! distinct consecutive ranks.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use chrono::{DateTime, TimeZone, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::BugReport;
use crate::eval::{group_by_bug, rank_order};
use crate::learner::{train, BoostedModel, LearnError, TrainConfig, WeightedDataset};
use crate::regions::RegionSet;
use crate::vsm::PairFeatureVector;

#[derive(Debug, Error)]
pub enum DncError {
    #[error("empty-ensemble: no region could be trained")]
    EmptyEnsemble,
    #[error("unknown region {0}")]
    UnknownRegion(String),
    #[error("bug {0} has pairs but no creation date")]
    UndatedBug(String),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type BugDates = BTreeMap<String, DateTime<Utc>>;

pub fn bug_dates<'a>(reports: impl IntoIterator<Item = &'a BugReport>) -> BugDates {
    reports.into_iter().map(|r| (r.id.clone(), r.created_at)).collect()
}

/// Midnight UTC on January 1 of `year`.
pub fn cutoff_instant(year: i32) -> DateTime<Utc> {
    Utc.with_ymd_and_hms(year, 1, 1, 0, 0, 0).single().expect("valid year")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineSplit {
    pub cutoff_year: i32,
    pub train: BTreeSet<String>,
    pub test: BTreeSet<String>,
}

/// Bugs created strictly before January 1 of `cutoff_year` train; the rest,
/// including the boundary instant, test.
pub fn timeline_split(dates: &BugDates, cutoff_year: i32) -> TimelineSplit {
    let cutoff = cutoff_instant(cutoff_year);
    let (train, test): (Vec<_>, Vec<_>) = dates.iter().partition(|(_, t)| **t < cutoff);
    let ids = |v: Vec<(&String, _)>| v.into_iter().map(|(b, _)| b.clone()).collect();
    TimelineSplit { cutoff_year, train: ids(train), test: ids(test) }
}

/// Splits training bugs into a fitting set and the latest `fraction` of
/// them (by creation time, then id) held out for early stopping.
pub fn chronological_holdout(bugs: &BTreeSet<String>, dates: &BugDates, fraction: f64) -> (BTreeSet<String>, BTreeSet<String>) {
    let mut ordered: Vec<&String> = bugs.iter().collect();
    ordered.sort_by_key(|b| (dates.get(*b).copied(), b.as_str()));
    let held = ((ordered.len() as f64) * fraction).floor() as usize;
    let cut = ordered.len() - held;
    (
        ordered[..cut].iter().map(|b| b.to_string()).collect(),
        ordered[cut..].iter().map(|b| b.to_string()).collect(),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DncConfig {
    pub train: TrainConfig,
    /// Fraction of each region's training bugs held out for early stopping.
    pub holdout_fraction: f64,
    /// Min-max normalize each model's probabilities per bug before
    /// averaging.
    pub normalize: bool,
    /// Regions to train; `None` trains all.
    pub regions: Option<Vec<String>>,
}

impl Default for DncConfig {
    fn default() -> Self {
        DncConfig { train: TrainConfig::quick(), holdout_fraction: 0.2, normalize: false, regions: None }
    }
}

/// What went into one region model, for the leakage audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingManifest {
    pub region: String,
    pub seed: u64,
    pub fit_bugs: Vec<String>,
    pub holdout_bugs: Vec<String>,
    /// Latest creation time over fitting and holdout bugs.
    pub max_created_at: Option<DateTime<Utc>>,
    pub rows: usize,
    pub positives: usize,
    pub best_iteration: usize,
    pub iterations_trained: usize,
}

#[derive(Debug, Clone)]
pub struct RegionModel {
    pub region: String,
    pub model: BoostedModel,
    pub manifest: TrainingManifest,
}

#[derive(Debug, Clone)]
pub struct Ensemble {
    pub cutoff_year: i32,
    pub models: Vec<RegionModel>,
    /// Region name and the reason it was not trained.
    pub skipped: Vec<(String, String)>,
}

impl Ensemble {
    pub fn model(&self, region: &str) -> Option<&RegionModel> {
        self.models.iter().find(|m| m.region == region)
    }
}

/// 64-bit FNV-1a, used to derive per-region seeds from names.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ *b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

pub fn region_seed(seed: u64, region: &str) -> u64 {
    seed ^ fnv1a(region.as_bytes())
}

fn rows_for<'a>(pairs: &'a [PairFeatureVector], bugs: &BTreeSet<String>) -> Vec<&'a PairFeatureVector> {
    pairs.iter().filter(|p| bugs.contains(&p.bug_id)).collect()
}

/// Trains one model per selected region on `region ∩ split.train`.
/// Regions whose rows cannot train (no bugs, no positives in some project,
/// a single label) are skipped with the reason recorded.
pub fn train_regions(
    regions: &RegionSet,
    pairs: &[PairFeatureVector],
    dates: &BugDates,
    split: &TimelineSplit,
    cfg: &DncConfig,
) -> Result<Ensemble, DncError> {
    let selected: Vec<&crate::regions::Region> = match &cfg.regions {
        None => regions.regions.iter().collect(),
        Some(names) => names
            .iter()
            .map(|n| regions.get(n).ok_or_else(|| DncError::UnknownRegion(n.clone())))
            .collect::<Result<_, _>>()?,
    };
    let outcomes: Vec<Result<RegionModel, (String, String)>> = selected
        .par_iter()
        .map(|region| {
            let name = region.name.clone();
            let skip = |why: String| Err((name.clone(), why));
            let bugs: BTreeSet<String> = region.bug_ids.intersection(&split.train).cloned().collect();
            if bugs.is_empty() {
                return skip("no training bugs".into());
            }
            let (fit, holdout) = chronological_holdout(&bugs, dates, cfg.holdout_fraction);
            let fit_rows = rows_for(pairs, &fit);
            if fit_rows.is_empty() {
                return skip("no featurized pairs".into());
            }
            let data = match WeightedDataset::from_pairs(&fit_rows) {
                Ok(d) => d,
                Err(e) => return skip(e.to_string()),
            };
            let valid = WeightedDataset::from_pairs(&rows_for(pairs, &holdout))
                .unwrap_or_else(|_| WeightedDataset::from_pairs_unweighted(&rows_for(pairs, &holdout)));
            let seed = region_seed(cfg.train.seed, &name);
            let tc = TrainConfig { seed, ..cfg.train.clone() };
            let model = match train(&data, &valid, &tc) {
                Ok(m) => m,
                Err(e) => return skip(e.to_string()),
            };
            let max_created_at = fit.iter().chain(&holdout).filter_map(|b| dates.get(b)).max().copied();
            let manifest = TrainingManifest {
                region: name.clone(),
                seed,
                fit_bugs: fit.into_iter().collect(),
                holdout_bugs: holdout.into_iter().collect(),
                max_created_at,
                rows: data.len(),
                positives: data.labels.iter().filter(|l| **l).count(),
                best_iteration: model.best_iteration,
                iterations_trained: model.iterations_trained,
            };
            Ok(RegionModel { region: name, model, manifest })
        })
        .collect();
    let mut models = Vec::new();
    let mut skipped = Vec::new();
    for o in outcomes {
        match o {
            Ok(m) => models.push(m),
            Err(s) => {
                log::info!("region {} skipped: {}", s.0, s.1);
                skipped.push(s);
            }
        }
    }
    if models.is_empty() {
        return Err(DncError::EmptyEnsemble);
    }
    Ok(Ensemble { cutoff_year: split.cutoff_year, models, skipped })
}

/// Regions whose training data reaches the cutoff, with the offending time.
pub fn audit_leakage(ensemble: &Ensemble) -> Vec<(String, DateTime<Utc>)> {
    let cutoff = cutoff_instant(ensemble.cutoff_year);
    ensemble
        .models
        .iter()
        .filter_map(|m| m.manifest.max_created_at.filter(|t| *t >= cutoff).map(|t| (m.region.clone(), t)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub path: String,
    pub probability: f64,
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub bug_id: String,
    pub entries: Vec<RankedEntry>,
}

impl RankedList {
    pub fn paths(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.path.clone()).collect()
    }
}

fn min_max(xs: &mut [f64]) {
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    for x in xs.iter_mut() {
        *x = if hi > lo { (*x - lo) / (hi - lo) } else { 0.0 };
    }
}

/// Ranks every bug of `pairs` by the mean model probability. Bugs appear in
/// feature-store order.
pub fn ensemble_rank(
    models: &[&BoostedModel],
    pairs: &[PairFeatureVector],
    normalize: bool,
) -> Result<Vec<RankedList>, DncError> {
    if models.is_empty() {
        return Err(DncError::EmptyEnsemble);
    }
    group_by_bug(pairs)
        .into_par_iter()
        .map(|(bug, ps)| {
            let mut mean = vec![0.0; ps.len()];
            for m in models {
                let mut p = m.predict_pairs(&ps)?;
                if normalize {
                    min_max(&mut p);
                }
                for (acc, x) in mean.iter_mut().zip(p) {
                    *acc += x;
                }
            }
            for x in &mut mean {
                *x /= models.len() as f64;
            }
            let entries = rank_order(&mean)
                .into_iter()
                .enumerate()
                .map(|(k, i)| RankedEntry { path: ps[i].file_path.clone(), probability: mean[i], rank: k + 1 })
                .collect();
            Ok(RankedList { bug_id: bug.to_string(), entries })
        })
        .collect()
}

/// `bug_id -> ranked paths`, the form the metrics take.
pub fn rankings_map(lists: &[RankedList]) -> BTreeMap<String, Vec<String>> {
    lists.iter().map(|l| (l.bug_id.clone(), l.paths())).collect()
}

/// `bug_id,rank,path,probability`; probabilities in shortest round-trip
/// form.
pub fn write_rankings_csv<W: Write>(w: W, lists: &[RankedList]) -> Result<(), DncError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["bug_id", "rank", "path", "probability"])?;
    for l in lists {
        for e in &l.entries {
            out.write_record([l.bug_id.as_str(), &e.rank.to_string(), &e.path, &e.probability.to_string()])?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_rankings_csv<R: std::io::Read>(r: R) -> Result<Vec<RankedList>, DncError> {
    #[derive(Deserialize)]
    struct Row {
        bug_id: String,
        rank: usize,
        path: String,
        probability: f64,
    }
    let mut lists: Vec<RankedList> = Vec::new();
    for row in csv::Reader::from_reader(r).deserialize::<Row>() {
        let row = row?;
        let entry = RankedEntry { path: row.path, probability: row.probability, rank: row.rank };
        match lists.last_mut() {
            Some(l) if l.bug_id == row.bug_id => l.entries.push(entry),
            _ => lists.push(RankedList { bug_id: row.bug_id, entries: vec![entry] }),
        }
    }
    for l in &mut lists {
        l.entries.sort_by_key(|e| e.rank);
    }
    Ok(lists)
}

/// Summary written next to a ranking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub cutoff_year: i32,
    pub regions_trained: Vec<String>,
    pub regions_skipped: Vec<(String, String)>,
    pub seeds: BTreeMap<String, u64>,
    pub config_hash: String,
    pub normalize: bool,
}

impl RunManifest {
    pub fn new(ensemble: &Ensemble, config_hash: &str, normalize: bool) -> Self {
        RunManifest {
            cutoff_year: ensemble.cutoff_year,
            regions_trained: ensemble.models.iter().map(|m| m.region.clone()).collect(),
            regions_skipped: ensemble.skipped.clone(),
            seeds: ensemble.models.iter().map(|m| (m.region.clone(), m.manifest.seed)).collect(),
            config_hash: config_hash.to_string(),
            normalize,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learner::{Node, Tree};
    use crate::vsm::{grid_manifest, GRID_CELLS};

    fn dates(items: &[(&str, DateTime<Utc>)]) -> BugDates {
        items.iter().map(|(b, t)| (b.to_string(), *t)).collect()
    }

    #[test]
    fn split_boundary_goes_to_test() {
        let d = dates(&[
            ("early", Utc.with_ymd_and_hms(2007, 6, 1, 0, 0, 0).unwrap()),
            ("edge", cutoff_instant(2008)),
            ("late", Utc.with_ymd_and_hms(2009, 3, 1, 0, 0, 0).unwrap()),
        ]);
        let s = timeline_split(&d, 2008);
        assert_eq!(s.train.iter().collect::<Vec<_>>(), ["early"]);
        assert_eq!(s.test.iter().collect::<Vec<_>>(), ["edge", "late"]);
    }

    #[test]
    fn holdout_takes_latest() {
        let d = dates(&[
            ("a", cutoff_instant(2001)),
            ("b", cutoff_instant(2003)),
            ("c", cutoff_instant(2002)),
            ("d", cutoff_instant(2000)),
            ("e", cutoff_instant(2004)),
        ]);
        let bugs = d.keys().cloned().collect();
        let (fit, held) = chronological_holdout(&bugs, &d, 0.2);
        assert_eq!(held.into_iter().collect::<Vec<_>>(), ["e"]);
        assert_eq!(fit.len(), 4);
    }

    /// A model returning `value` for every row.
    fn constant(value: f64) -> BoostedModel {
        BoostedModel {
            config: TrainConfig::quick(),
            feature_names: grid_manifest(),
            base_score: (value / (1.0 - value)).ln(),
            trees: vec![],
            best_iteration: 0,
            iterations_trained: 0,
            valid_rmse: vec![],
            degenerate: false,
        }
    }

    /// Probability = sigmoid(logit(hi)) when feature 0 <= 0.5, else lo.
    fn stump(low_x: f64, high_x: f64) -> BoostedModel {
        let logit = |p: f64| (p / (1.0 - p)).ln();
        BoostedModel {
            base_score: 0.0,
            trees: vec![Tree {
                nodes: vec![
                    Node::Split { feature: 0, threshold: 0.5, left: 1, right: 2, gain: 1.0 },
                    Node::Leaf { value: logit(low_x) },
                    Node::Leaf { value: logit(high_x) },
                ],
            }],
            best_iteration: 1,
            ..constant(0.5)
        }
    }

    fn pair(bug: &str, path: &str, x: f64) -> PairFeatureVector {
        let mut scores = vec![0.0; GRID_CELLS];
        scores[0] = x;
        PairFeatureVector { project: "p".into(), bug_id: bug.into(), file_path: path.into(), scores, label: false, year: 2010 }
    }

    #[test]
    fn averaging_example() {
        // File A is low on feature 0, file B high.
        let pairs = [pair("1", "A", 0.0), pair("1", "B", 1.0)];
        let m1 = stump(0.9, 0.1);
        let m2 = stump(0.5, 0.7);
        let lists = ensemble_rank(&[&m1, &m2], &pairs, false).unwrap();
        let e = &lists[0].entries;
        assert_eq!((e[0].path.as_str(), e[0].rank), ("A", 1));
        assert!((e[0].probability - 0.7).abs() < 1e-12);
        assert!((e[1].probability - 0.4).abs() < 1e-12);
    }

    #[test]
    fn constant_model_changes_nothing() {
        let pairs = [pair("1", "A", 0.0), pair("1", "B", 1.0), pair("1", "C", 0.2)];
        let m = stump(0.3, 0.8);
        let c = constant(0.42);
        let alone = ensemble_rank(&[&m], &pairs, false).unwrap();
        let with = ensemble_rank(&[&m, &c], &pairs, false).unwrap();
        assert_eq!(alone[0].paths(), with[0].paths());
        let twice = ensemble_rank(&[&m, &m], &pairs, false).unwrap();
        assert_eq!(alone[0].paths(), twice[0].paths());
    }

    #[test]
    fn ties_keep_store_order() {
        let pairs = [pair("1", "A", 0.0), pair("1", "B", 0.0), pair("1", "C", 0.0)];
        let lists = ensemble_rank(&[&constant(0.5)], &pairs, false).unwrap();
        assert_eq!(lists[0].paths(), ["A", "B", "C"]);
        assert_eq!(lists[0].entries.iter().map(|e| e.rank).collect::<Vec<_>>(), [1, 2, 3]);
    }

    #[test]
    fn rankings_csv_round_trip() {
        let pairs = [pair("1", "A", 0.0), pair("1", "B", 1.0), pair("2", "A", 1.0)];
        let lists = ensemble_rank(&[&stump(0.3, 0.8)], &pairs, false).unwrap();
        let mut buf = Vec::new();
        write_rankings_csv(&mut buf, &lists).unwrap();
        assert_eq!(read_rankings_csv(buf.as_slice()).unwrap(), lists);
    }
}
