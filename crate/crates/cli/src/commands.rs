use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::BufReader;

use anyhow::{bail, Context, Result};
use bugloc::codeextract::{ScannerExtractor, SourceDocument};
use bugloc::corpus::{export_line, ingest_bug_reports, BugReport};
use bugloc::dnc::{self, BugDates, Ensemble, RegionModel, TimelineSplit, TrainingManifest};
use bugloc::eval::{self, Comparison, EvalReport, Truth, YearResult};
use bugloc::learner;
use bugloc::regions::{self, RegionSet};
use bugloc::textprep::{BugReportFeatures, Lexicon};
use bugloc::vsm::{self, cache, PairFeatureVector};
use bugloc::pipeline;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, Scope};
use crate::store::{load_registry, registry_hash, sha256_file, Failure, Stage, Store};

fn lexicon(cfg: &RunConfig) -> Result<Lexicon> {
    if cfg.keywords.is_none() && cfg.dictionary.is_none() {
        return Ok(Lexicon::bundled().clone());
    }
    Lexicon::load(cfg.keywords.as_deref(), cfg.dictionary.as_deref()).context("loading keyword or dictionary file")
}

fn external(store: &Store, names: &[&str]) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for n in names {
        if let Some(h) = store.external_hash(n)? {
            out.insert(n.to_string(), h);
        }
    }
    Ok(out)
}

fn parse_reports(bytes: &[u8]) -> Result<Vec<BugReport>> {
    let outcome = ingest_bug_reports(bytes)?;
    if let Some(e) = outcome.errors.first() {
        return Err(Failure::Stale(format!("ingest/reports.jsonl line {}: {}", e.line, e.message)).into());
    }
    Ok(outcome.reports)
}

fn load_reports(store: &Store) -> Result<Vec<BugReport>> {
    parse_reports(&store.read(Stage::Ingest, "reports.jsonl")?)
}

fn truths(reports: &[BugReport]) -> BTreeMap<String, Truth> {
    reports.iter().map(|r| (r.id.clone(), r.fixed_files.clone())).collect()
}

pub fn ingest(cfg: &RunConfig) -> Result<()> {
    let store = Store::new(cfg);
    let bugs = cfg.bugs()?;
    let registry = load_registry(cfg.projects()?)?;
    let file = std::fs::File::open(bugs).with_context(|| format!("opening {}", bugs.display()))?;
    let outcome = ingest_bug_reports(BufReader::new(file))?;
    let mut rejected = String::from("line,message\n");
    for e in &outcome.errors {
        log::warn!("{}:{}: {}", bugs.display(), e.line, e.message);
        writeln!(rejected, "{},\"{}\"", e.line, e.message.replace('"', "\"\""))?;
    }
    let read = outcome.reports.len();
    let prepared = pipeline::prepare(outcome.reports, &registry)?;
    if prepared.reports.is_empty() {
        bail!("no report survived curation ({} read, {} rejected)", read, outcome.errors.len());
    }
    let mut reports = String::new();
    for r in &prepared.reports {
        reports.push_str(&export_line(r));
        reports.push('\n');
    }
    let mut removed = String::from("bug_id,reason\n");
    for (id, why) in &prepared.removed {
        writeln!(removed, "{id},\"{why}\"")?;
    }
    let mut inputs = BTreeMap::new();
    inputs.insert("bugs".into(), sha256_file(bugs)?);
    inputs.insert("projects".into(), registry_hash(&registry));
    store.write(
        Stage::Ingest,
        inputs,
        vec![
            ("reports.jsonl".into(), reports.into_bytes()),
            ("removed.csv".into(), removed.into_bytes()),
            ("rejected.csv".into(), rejected.into_bytes()),
        ],
    )?;
    println!(
        "ingest: {} reports kept, {} removed by curation or the pre-fix filter, {} malformed lines",
        prepared.reports.len(),
        prepared.removed.len(),
        outcome.errors.len()
    );
    Ok(())
}

pub fn extract(cfg: &RunConfig) -> Result<()> {
    let store = Store::new(cfg);
    let registry = load_registry(cfg.projects()?)?;
    let lexicon = lexicon(cfg)?;
    let mut files = Vec::new();
    let (mut n_files, mut degraded) = (0, 0);
    for snapshot in registry.iter() {
        let docs = pipeline::source_documents(&lexicon, &ScannerExtractor, snapshot);
        n_files += docs.len();
        for d in docs.iter().filter(|d| d.structure.degraded) {
            log::warn!("{}: unbalanced braces, extraction degraded", d.path);
            degraded += 1;
        }
        files.push((format!("{}.json", snapshot.project), serde_json::to_vec(&docs)?));
    }
    let mut inputs = BTreeMap::new();
    inputs.insert("projects".into(), registry_hash(&registry));
    store.write(Stage::Extract, inputs, files)?;
    println!("extract: {n_files} files in {} projects, {degraded} degraded", registry.len());
    Ok(())
}

pub fn featurize(cfg: &RunConfig) -> Result<()> {
    let store = Store::new(cfg);
    store.require(Stage::Ingest)?;
    let extracted = store.require(Stage::Extract)?;
    let reports = load_reports(&store)?;
    let lexicon = lexicon(cfg)?;
    let mut files = Vec::new();
    let mut total = 0;
    let mut covered = BTreeSet::new();
    for name in extracted.outputs.keys() {
        let Some(project) = name.strip_suffix(".json") else { continue };
        let docs: Vec<SourceDocument> = serde_json::from_slice(&store.read(Stage::Extract, name)?)
            .map_err(|e| Failure::Stale(format!("extract/{name} is unreadable ({e})")))?;
        let mine: Vec<&BugReport> = reports.iter().filter(|r| r.project == project).collect();
        if mine.is_empty() {
            continue;
        }
        covered.insert(project.to_string());
        let features: Vec<BugReportFeatures> = mine.par_iter().map(|r| lexicon.build_bug_features(r)).collect();
        let pairs: Vec<(&BugReport, &BugReportFeatures)> = mine.iter().copied().zip(&features).collect();
        let rows = vsm::featurize_project(&pairs, &docs);
        total += rows.len();
        let mut bin = Vec::new();
        cache::write_binary(&mut bin, project, &rows)?;
        let mut csv = Vec::new();
        cache::write_csv(&mut csv, &rows)?;
        files.push((format!("{project}.bin"), bin));
        files.push((format!("{project}.csv"), csv));
    }
    for r in reports.iter().filter(|r| !covered.contains(&r.project)) {
        log::warn!("{}: project {} was not extracted", r.id, r.project);
    }
    store.write(Stage::Featurize, BTreeMap::new(), files)?;
    println!("featurize: {total} pairs in {} projects", covered.len());
    Ok(())
}

/// All cached pairs, projects in name order.
fn load_pairs(store: &Store) -> Result<Vec<PairFeatureVector>> {
    let m = store.require(Stage::Featurize)?;
    let mut out = Vec::new();
    for name in m.outputs.keys().filter(|n| n.ends_with(".bin")) {
        let bytes = store.read(Stage::Featurize, name)?;
        let (_, rows) = cache::read_binary(bytes.as_slice())?;
        out.extend(rows);
    }
    Ok(out)
}

pub fn build_regions(cfg: &RunConfig) -> Result<()> {
    let store = Store::new(cfg);
    store.require(Stage::Ingest)?;
    let reports = load_reports(&store)?;
    let path = cfg.tool_results()?;
    let results = regions::read_tool_results(std::fs::File::open(path)?)?;
    let all: BTreeSet<String> = reports.iter().map(|r| r.id.clone()).collect();
    let set = regions::build_regions(&results, &truths(&reports), &all, cfg.topn)?;
    if !set.ignored.is_empty() {
        log::warn!("{} tool-result bugs are outside the population and were ignored", set.ignored.len());
    }
    let table = regions::counts_table(&set);
    store.write(
        Stage::Regions,
        external(&store, &["tool_results"])?,
        vec![
            ("regions.json".into(), serde_json::to_vec_pretty(&set)?),
            ("counts.txt".into(), table.clone().into_bytes()),
        ],
    )?;
    print!("regions (Top{}):\n{table}", cfg.topn);
    Ok(())
}

fn load_regions(store: &Store) -> Result<RegionSet> {
    store.require(Stage::Regions)?;
    serde_json::from_slice(&store.read(Stage::Regions, "regions.json")?)
        .map_err(|e| Failure::Stale(format!("regions/regions.json is unreadable ({e})")).into())
}

/// Training groups: every project together, or one group per project.
fn groups(cfg: &RunConfig, pairs: &[PairFeatureVector]) -> Vec<(String, Vec<PairFeatureVector>)> {
    match cfg.scope {
        Scope::CrossProject => vec![("all".into(), pairs.to_vec())],
        Scope::PerProject => {
            let mut by: BTreeMap<String, Vec<PairFeatureVector>> = BTreeMap::new();
            for p in pairs {
                by.entry(p.project.clone()).or_default().push(p.clone());
            }
            by.into_iter().collect()
        }
    }
}

/// One trained ensemble per group.
fn train_groups(
    cfg: &RunConfig,
    set: &RegionSet,
    pairs: &[PairFeatureVector],
    dates: &BugDates,
    split: &TimelineSplit,
) -> Result<Vec<(String, Ensemble)>> {
    let dnc_cfg = cfg.dnc();
    let mut out = Vec::new();
    for (name, rows) in groups(cfg, pairs) {
        match dnc::train_regions(set, &rows, dates, split, &dnc_cfg) {
            Ok(e) => {
                let leaks = dnc::audit_leakage(&e);
                if !leaks.is_empty() {
                    return Err(Failure::Internal(format!("training data at or after the cutoff: {leaks:?}")).into());
                }
                out.push((name, e));
            }
            Err(dnc::DncError::EmptyEnsemble) if cfg.scope == Scope::PerProject => {
                log::warn!("project {name}: no region could be trained");
            }
            Err(e) => return Err(e.into()),
        }
    }
    if out.is_empty() {
        return Err(dnc::DncError::EmptyEnsemble.into());
    }
    Ok(out)
}

fn group_projects(cfg: &RunConfig, group: &str, pairs: &[PairFeatureVector]) -> Vec<String> {
    match cfg.scope {
        Scope::CrossProject => pairs.iter().map(|p| p.project.clone()).collect::<BTreeSet<_>>().into_iter().collect(),
        Scope::PerProject => vec![group.to_string()],
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct GroupRecord {
    group: String,
    projects: Vec<String>,
    trained: Vec<TrainingManifest>,
    skipped: Vec<(String, String)>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TrainingRecord {
    cutoff_year: i32,
    train_bugs: usize,
    test_bugs: usize,
    groups: Vec<GroupRecord>,
}

fn split_for(reports: &[BugReport], pairs: &[PairFeatureVector], year: i32) -> (BugDates, TimelineSplit) {
    let featurized: BTreeSet<&str> = pairs.iter().map(|p| p.bug_id.as_str()).collect();
    let dates = dnc::bug_dates(reports.iter().filter(|r| featurized.contains(r.id.as_str())));
    let split = dnc::timeline_split(&dates, year);
    (dates, split)
}

pub fn train(cfg: &RunConfig) -> Result<()> {
    let store = Store::new(cfg);
    store.require(Stage::Ingest)?;
    let cutoff = cfg.cutoff()?;
    let reports = load_reports(&store)?;
    let pairs = load_pairs(&store)?;
    let set = load_regions(&store)?;
    let (dates, split) = split_for(&reports, &pairs, cutoff);
    if split.train.is_empty() || split.test.is_empty() {
        bail!("cutoff {cutoff} leaves {} training and {} test bugs", split.train.len(), split.test.len());
    }
    let ensembles = train_groups(cfg, &set, &pairs, &dates, &split)?;
    let mut files = Vec::new();
    let mut record = TrainingRecord { cutoff_year: cutoff, train_bugs: split.train.len(), test_bugs: split.test.len(), groups: vec![] };
    let mut summary = String::new();
    for (group, e) in &ensembles {
        for m in &e.models {
            let mut bytes = Vec::new();
            learner::write_model(&mut bytes, &m.model)?;
            files.push((format!("{group}/{}.model", m.region), bytes));
            files.push((format!("{group}/{}.txt", m.region), m.model.dump().into_bytes()));
            writeln!(
                summary,
                "  {group}/{}: {} rows, {} trees (best of {})",
                m.region, m.manifest.rows, m.model.best_iteration, m.model.iterations_trained
            )?;
        }
        for (region, why) in &e.skipped {
            writeln!(summary, "  {group}/{region}: skipped ({why})")?;
        }
        record.groups.push(GroupRecord {
            group: group.clone(),
            projects: group_projects(cfg, group, &pairs),
            trained: e.models.iter().map(|m| m.manifest.clone()).collect(),
            skipped: e.skipped.clone(),
        });
    }
    files.push(("training.json".into(), serde_json::to_vec_pretty(&record)?));
    store.write(Stage::Train, BTreeMap::new(), files)?;
    print!("train: cutoff {cutoff}, {} training bugs, {} test bugs\n{summary}", split.train.len(), split.test.len());
    Ok(())
}

fn load_ensembles(store: &Store) -> Result<(TrainingRecord, Vec<(GroupRecord, Ensemble)>)> {
    store.require(Stage::Train)?;
    let mut record: TrainingRecord = serde_json::from_slice(&store.read(Stage::Train, "training.json")?)
        .map_err(|e| Failure::Stale(format!("models/training.json is unreadable ({e})")))?;
    let mut out = Vec::new();
    for g in std::mem::take(&mut record.groups) {
        let mut models = Vec::new();
        for manifest in &g.trained {
            let bytes = store.read(Stage::Train, &format!("{}/{}.model", g.group, manifest.region))?;
            let model = learner::read_model(bytes.as_slice())?;
            models.push(RegionModel { region: manifest.region.clone(), model, manifest: manifest.clone() });
        }
        let e = Ensemble { cutoff_year: record.cutoff_year, models, skipped: g.skipped.clone() };
        out.push((g, e));
    }
    Ok((record, out))
}

fn test_pairs(pairs: &[PairFeatureVector], split: &TimelineSplit, projects: &[String]) -> Vec<PairFeatureVector> {
    pairs
        .iter()
        .filter(|p| split.test.contains(&p.bug_id) && projects.contains(&p.project))
        .cloned()
        .collect()
}

fn rank_groups(
    groups: &[(GroupRecord, Ensemble)],
    pairs: &[PairFeatureVector],
    split: &TimelineSplit,
    normalize: bool,
) -> Result<Vec<dnc::RankedList>> {
    let mut lists = Vec::new();
    for (g, e) in groups {
        let models: Vec<&learner::BoostedModel> = e.models.iter().map(|m| &m.model).collect();
        lists.extend(dnc::ensemble_rank(&models, &test_pairs(pairs, split, &g.projects), normalize)?);
    }
    Ok(lists)
}

#[derive(Debug, Serialize)]
struct RunRecord {
    cutoff_year: i32,
    seed: u64,
    config_hash: String,
    normalize: bool,
    groups: BTreeMap<String, dnc::RunManifest>,
    inputs: BTreeMap<String, String>,
}

pub fn rank(cfg: &RunConfig) -> Result<()> {
    let store = Store::new(cfg);
    store.require(Stage::Ingest)?;
    let reports = load_reports(&store)?;
    let pairs = load_pairs(&store)?;
    let (record, groups) = load_ensembles(&store)?;
    let (_, split) = split_for(&reports, &pairs, record.cutoff_year);
    let lists = rank_groups(&groups, &pairs, &split, cfg.normalize)?;
    let mut csv = Vec::new();
    dnc::write_rankings_csv(&mut csv, &lists)?;
    let config_hash = Stage::Rank.config_hash(cfg);
    let run = RunRecord {
        cutoff_year: record.cutoff_year,
        seed: cfg.seed,
        config_hash: config_hash.clone(),
        normalize: cfg.normalize,
        groups: groups.iter().map(|(g, e)| (g.group.clone(), dnc::RunManifest::new(e, &config_hash, cfg.normalize))).collect(),
        inputs: [Stage::Ingest, Stage::Featurize, Stage::Train]
            .iter()
            .map(|s| Ok((s.command().to_string(), sha256_file(&store.path(*s, "manifest.json"))?)))
            .collect::<Result<_>>()?,
    };
    store.write(
        Stage::Rank,
        BTreeMap::new(),
        vec![("rankings.csv".into(), csv), ("run.json".into(), serde_json::to_vec_pretty(&run)?)],
    )?;
    println!("rank: {} bugs ranked with {} models", lists.len(), groups.iter().map(|(_, e)| e.models.len()).sum::<usize>());
    Ok(())
}

#[derive(Debug, Serialize)]
struct EvalRecord {
    dnc: EvalReport,
    regions: Vec<EvalReport>,
    comparisons: Vec<Comparison>,
    years: Vec<YearResult>,
}

pub fn evaluate(cfg: &RunConfig) -> Result<()> {
    let store = Store::new(cfg);
    store.require(Stage::Rank)?;
    let reports = load_reports(&store)?;
    let truths = truths(&reports);
    let pairs = load_pairs(&store)?;
    let (record, groups) = load_ensembles(&store)?;
    let (_, split) = split_for(&reports, &pairs, record.cutoff_year);
    let lists = dnc::read_rankings_csv(store.read(Stage::Rank, "rankings.csv")?.as_slice())?;
    let ours = dnc::rankings_map(&lists);
    let dnc_report = eval::evaluate("D&C", &ours, &truths)?;

    let mut per_region = Vec::new();
    let single_groups = groups.len() == 1;
    for (g, e) in &groups {
        let tp = test_pairs(&pairs, &split, &g.projects);
        for m in &e.models {
            let lists = dnc::ensemble_rank(&[&m.model], &tp, false)?;
            let name = if single_groups { m.region.clone() } else { format!("{}/{}", g.group, m.region) };
            per_region.push(eval::evaluate(&name, &dnc::rankings_map(&lists), &truths)?);
        }
    }

    let comparisons = match &cfg.tool_results {
        Some(p) if p.exists() => {
            let results = regions::read_tool_results(std::fs::File::open(p)?)?;
            eval::compare_with_baselines(&ours, &results, &truths)?
        }
        _ => Vec::new(),
    };

    let years = if cfg.years.is_empty() {
        vec![YearResult { year: record.cutoff_year, n_train: record.train_bugs, report: dnc_report.clone() }]
    } else {
        let set = load_regions(&store)?;
        let mut out = Vec::new();
        for &year in &cfg.years {
            let (dates, split) = split_for(&reports, &pairs, year);
            if split.train.is_empty() || split.test.is_empty() {
                log::warn!("year {year}: {} training and {} test bugs, skipped", split.train.len(), split.test.len());
                continue;
            }
            let ensembles = train_groups(cfg, &set, &pairs, &dates, &split)?;
            let groups: Vec<(GroupRecord, Ensemble)> = ensembles
                .into_iter()
                .map(|(name, e)| {
                    let projects = group_projects(cfg, &name, &pairs);
                    (GroupRecord { group: name, projects, trained: vec![], skipped: vec![] }, e)
                })
                .collect();
            let lists = rank_groups(&groups, &pairs, &split, cfg.normalize)?;
            let report = eval::evaluate(&year.to_string(), &dnc::rankings_map(&lists), &truths)?;
            out.push(YearResult { year, n_train: split.train.len(), report });
        }
        out
    };

    let mut text = String::new();
    let mut all: Vec<&EvalReport> = vec![&dnc_report];
    all.extend(per_region.iter());
    text.push_str(&eval::reports_text(&all));
    if !comparisons.is_empty() {
        text.push('\n');
        text.push_str(&eval::comparison_text(&comparisons));
    }
    let table = eval::per_year_table(&years);
    let out = EvalRecord { dnc: dnc_report, regions: per_region, comparisons, years };
    store.write(
        Stage::Evaluate,
        BTreeMap::new(),
        vec![
            ("report.json".into(), serde_json::to_vec_pretty(&out)?),
            ("report.txt".into(), text.clone().into_bytes()),
            ("per_year.txt".into(), table.clone().into_bytes()),
        ],
    )?;
    print!("{text}\n{table}");
    Ok(())
}

pub fn dissect(cfg: &RunConfig, region: Option<&str>, bugs_file: Option<&std::path::Path>) -> Result<()> {
    let store = Store::new(cfg);
    let pairs = load_pairs(&store)?;
    let subset: Option<BTreeSet<String>> = match (region, bugs_file) {
        (Some(_), Some(_)) => bail!("pass either --region or --bugs-file, not both"),
        (Some(name), None) => {
            let set = load_regions(&store)?;
            let r = set.get(name).with_context(|| format!("no region named {name}; known: {}", set.names().join(", ")))?;
            Some(r.bug_ids.clone())
        }
        (None, Some(p)) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Some(
                text.lines()
                    .filter_map(|l| l.split(',').next())
                    .map(str::trim)
                    .filter(|l| !l.is_empty() && !l.starts_with('#') && *l != "bug_id")
                    .map(String::from)
                    .collect(),
            )
        }
        (None, None) => None,
    };
    let d = eval::dissect_pairs(&pairs, subset.as_ref())?;
    let name = match region {
        Some(r) => format!("dissection-{r}.csv"),
        None if bugs_file.is_some() => "dissection-subset.csv".into(),
        None => "dissection.csv".into(),
    };
    let mut cells = d.cells.clone();
    cells.sort_by(|a, b| b.map.total_cmp(&a.map));
    let mut rows = vec![vec!["cell".to_string(), "MAP".into(), "MRR".into()]];
    rows.extend(cells.iter().take(10).map(|c| vec![c.cell.clone(), format!("{:.3}", c.map), format!("{:.3}", c.mrr)]));
    store.write(Stage::Dissect, BTreeMap::new(), vec![(name.clone(), d.to_csv().into_bytes())])?;
    print!("dissect: {} bugs, best cell {}; top cells:\n{}", d.bugs, d.best_cell().cell, eval::align(&rows));
    Ok(())
}

pub fn overlap(cfg: &RunConfig, a: Option<&str>, b: Option<&str>) -> Result<()> {
    let store = Store::new(cfg);
    let set = load_regions(&store)?;
    let success = |t: &str| -> Result<&BTreeSet<String>> {
        set.success.get(t).with_context(|| format!("unknown tool {t}; known: {}", set.tools.join(", ")))
    };
    let pairs: Vec<(String, String)> = match (a, b) {
        (Some(a), Some(b)) => vec![(a.to_string(), b.to_string())],
        (None, None) => {
            let mut v = Vec::new();
            for (i, x) in set.tools.iter().enumerate() {
                for y in &set.tools[i + 1..] {
                    v.push((x.clone(), y.clone()));
                }
            }
            v
        }
        _ => bail!("pass both --tool-a and --tool-b, or neither"),
    };
    let mut csv = String::from("tool_a,tool_b,both,only_a,only_b\n");
    let mut rows = vec![vec!["tool A".to_string(), "tool B".into(), "both %".into(), "only A %".into(), "only B %".into()]];
    for (x, y) in &pairs {
        match regions::overlap(success(x)?, success(y)?) {
            Ok(o) => {
                writeln!(csv, "{x},{y},{},{},{}", o.both, o.only_a, o.only_b)?;
                rows.push(vec![x.clone(), y.clone(), format!("{:.1}", o.both), format!("{:.1}", o.only_a), format!("{:.1}", o.only_b)]);
            }
            Err(regions::RegionError::EmptyUniverse) => {
                rows.push(vec![x.clone(), y.clone(), "-".into(), "-".into(), "-".into()]);
            }
            Err(e) => return Err(e.into()),
        }
    }
    store.write(Stage::Overlap, BTreeMap::new(), vec![("overlap.csv".into(), csv.into_bytes())])?;
    print!("{}", eval::align(&rows));
    Ok(())
}
