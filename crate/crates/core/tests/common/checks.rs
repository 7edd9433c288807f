//! Suites that run library code against the oracles in the parent module.
//! Each returns a one-line summary on success and the first discrepancy on
//! failure.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use bugloc::codeextract::{build_source_document, ScannerExtractor};
use bugloc::corpus::{BugReport, CommitRef, HistoryCommit, Status};
use bugloc::eval;
use bugloc::learner::{self, LearnError, TrainConfig, WeightedDataset};
use bugloc::regions::{self, RegionError, ToolResult};
use bugloc::textprep::{Lexicon, TokenBag};
use bugloc::vsm::{self, CorpusIndex, TermVector, GRID_COLS};
use chrono::{TimeZone, Utc};
use rand::Rng;

use super::*;

pub type Outcome = Result<String, String>;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

// ---------------------------------------------------------------- metrics

pub fn metric_suite(instances: usize, seed: u64) -> Outcome {
    let mut rng = rng(seed);
    let mut bugs_checked = 0;
    for inst in 0..instances {
        let n_bugs = rng.gen_range(1..=8);
        let mut rankings = BTreeMap::new();
        let mut truths = BTreeMap::new();
        for b in 0..n_bugs {
            let (ranked, truth) = random_instance(&mut rng);
            rankings.insert(format!("B{b}"), ranked);
            truths.insert(format!("B{b}"), truth);
        }
        let report = eval::evaluate("oracle", &rankings, &truths).map_err(|e| e.to_string())?;
        let (mut ap_sum, mut rr_sum) = (0.0, 0.0);
        let mut tops = [0usize; 3];
        for m in &report.per_bug {
            let (ranked, truth) = (&rankings[&m.bug_id], &truths[&m.bug_id]);
            let (ap, rr) = (oracle_ap(ranked, truth), oracle_rr(ranked, truth));
            if !close(m.ap, ap, 1e-12) || !close(m.rr, rr, 1e-12) {
                return Err(format!(
                    "instance {inst} bug {}: ap {} vs {ap}, rr {} vs {rr}",
                    m.bug_id, m.ap, m.rr
                ));
            }
            ap_sum += ap;
            rr_sum += rr;
            for (k, n) in [1, 5, 10].iter().enumerate() {
                tops[k] += oracle_top(ranked, truth, *n) as usize;
            }
            bugs_checked += 1;
        }
        let size = n_bugs as f64;
        if !close(report.map, ap_sum / size, 1e-12) || !close(report.mrr, rr_sum / size, 1e-12) {
            return Err(format!("instance {inst}: MAP {} MRR {}", report.map, report.mrr));
        }
        if [report.top1.count, report.top5.count, report.top10.count] != tops {
            return Err(format!("instance {inst}: TopN counts differ"));
        }
        if !close(report.top5.percent, 100.0 * tops[1] as f64 / size, 1e-12) {
            return Err(format!("instance {inst}: Top5 percent"));
        }
    }
    Ok(format!("{instances} populations, {bugs_checked} ranked lists"))
}

// ----------------------------------------------------------------- tf-idf

fn bag(terms: &[(&str, u32)]) -> TokenBag {
    TokenBag::from_counts(
        bugloc::textprep::SourceKind::Code,
        terms.iter().map(|(t, c)| (t.to_string(), *c)),
    )
}

// literal expected values from worked examples, not the std constants
#[allow(clippy::approx_constant)]
pub fn analytic_suite() -> Outcome {
    let mut checks = Vec::new();
    let mut check = |name: &str, got: f64, want: f64| {
        checks.push((name.to_string(), got, want));
    };
    check("tf(1)", vsm::tf(1), 1.0);
    check("tf(10)", vsm::tf(10), 1.0 + 10f64.ln());
    check("tf(10) literal", vsm::tf(10), 3.302585);
    let all = CorpusIndex::build([&bag(&[("a", 1)]), &bag(&[("a", 3)])]);
    check("idf(all docs)", all.idf("a"), 1.0);
    let three = CorpusIndex::build([&bag(&[("a", 1)]), &bag(&[("b", 1)]), &bag(&[("c", 1)])]);
    check("idf(n=3, df=1)", three.idf("a"), 1.693147);
    let one = CorpusIndex::build([&bag(&[("a", 1)])]);
    check("idf(unseen, n=1)", one.idf("zzz"), 1.693147);
    check(
        "weight(single doc)",
        vsm::vectorize(&bag(&[("a", 1)]), &one).weight("a"),
        1.0,
    );
    check(
        "weight(f=2, n=3, df=1)",
        vsm::vectorize(&bag(&[("a", 2)]), &three).weight("a"),
        2.867,
    );
    let q = TermVector::from_weights([("a".to_string(), 1.0), ("b".to_string(), 1.0)]);
    check("cosine(self)", vsm::cosine(&q, &q), 1.0);
    check(
        "cosine(orthogonal)",
        vsm::cosine(&q, &TermVector::from_weights([("c".to_string(), 4.0)])),
        0.0,
    );
    check(
        "cosine({a,b},{a})",
        vsm::cosine(&q, &TermVector::from_weights([("a".to_string(), 1.0)])),
        0.7071,
    );
    for (name, got, want) in &checks {
        // literals from the worked examples carry 4-6 decimals
        let tol = if name.contains("literal") || *want == 1.693147 || *want == 2.867 || *want == 0.7071 {
            let digits = format!("{want}").split('.').nth(1).map_or(0, str::len) as i32;
            0.5 * 10f64.powi(-digits)
        } else {
            1e-9
        };
        if !close(*got, *want, tol) {
            return Err(format!("{name}: got {got}, want {want}"));
        }
    }
    let exact = [
        ("idf(n=3, df=1)", three.idf("a"), 2f64.ln() + 1.0),
        (
            "weight(f=2)",
            vsm::vectorize(&bag(&[("a", 2)]), &three).weight("a"),
            (1.0 + 2f64.ln()) * (2f64.ln() + 1.0),
        ),
        (
            "cosine 1/sqrt2",
            vsm::cosine(&q, &TermVector::from_weights([("a".to_string(), 1.0)])),
            0.5f64.sqrt(),
        ),
    ];
    for (name, got, want) in exact {
        if !close(got, want, 1e-9) {
            return Err(format!("{name}: got {got}, want {want}"));
        }
    }
    Ok(format!("{} worked examples", checks.len() + 3))
}

fn toy_report(id: &str, summary: &str, description: &str, fixed: &str) -> BugReport {
    let t = Utc.with_ymd_and_hms(2012, 5, 1, 12, 0, 0).unwrap();
    BugReport {
        id: id.into(),
        project: "toy".into(),
        summary: summary.into(),
        description: description.into(),
        created_at: t,
        status: Status::Fixed,
        reporter_email: "reporter@example.org".into(),
        comments: vec![],
        attachments: vec![],
        fix_commits: vec![CommitRef {
            hash: "f1".into(),
            committer_email: "dev@example.org".into(),
            timestamp: t + chrono::Duration::days(2),
            touched_files: [fixed.to_string()].into(),
        }],
        fixed_files: [fixed.to_string()].into(),
    }
}

/// The toy fixture: two reports, three files, one with history.
pub type ToyFiles = Vec<(String, String, Vec<HistoryCommit>)>;

pub fn toy_fixture() -> (Vec<BugReport>, ToyFiles) {
    let reports = vec![
        toy_report(
            "TOY-1",
            "Parser crashes on empty input",
            "Opening an empty document crashes the parser.\n\tat org.toy.text.DocumentParser.parseHeader(DocumentParser.java:41)\n",
            "src/org/toy/text/DocumentParser.java",
        ),
        toy_report(
            "TOY-2",
            "Cache returns stale entries",
            "After an update the `EntryCache` still returns the previous value.\n```\ncache.lookup(key);\n```\n",
            "src/org/toy/store/EntryCache.java",
        ),
    ];
    let t = Utc.with_ymd_and_hms(2011, 1, 1, 0, 0, 0).unwrap();
    let files = vec![
        (
            "src/org/toy/text/DocumentParser.java".to_string(),
            "package org.toy.text;\n/** Parses documents with a header. */\npublic class DocumentParser {\n  public void parseHeader(String input) {\n    reader.consume(input);\n  }\n}\n".to_string(),
            vec![HistoryCommit {
                hash: "c1".into(),
                committer_email: "dev@example.org".into(),
                timestamp: t,
                log: "Guard against empty header".into(),
                hunks: vec!["@@ -1,1 +1,2 @@\n+    if (input.isEmpty()) return;".into()],
            }],
        ),
        (
            "src/org/toy/store/EntryCache.java".to_string(),
            "package org.toy.store;\n// keeps recent entries\npublic class EntryCache {\n  public Object lookup(String key) {\n    return entries.get(key);\n  }\n}\n".to_string(),
            vec![],
        ),
        (
            "src/org/toy/ui/Window.java".to_string(),
            "package org.toy.ui;\npublic class Window {\n  public void render(Document document) {\n    painter.draw(document);\n  }\n}\n".to_string(),
            vec![],
        ),
    ];
    (reports, files)
}

fn oracle_vector(bag: &TokenBag, df: &HashMap<String, usize>, n: usize) -> HashMap<String, f64> {
    bag.iter()
        .map(|(t, c)| {
            let d = df.get(t).copied().unwrap_or(0) as f64;
            let idf = ((1.0 + n as f64) / (1.0 + d)).ln() + 1.0;
            (t.to_string(), (1.0 + (c as f64).ln()) * idf)
        })
        .collect()
}

fn oracle_cosine(a: &HashMap<String, f64>, b: &HashMap<String, f64>) -> f64 {
    let dot: f64 = a.iter().map(|(t, w)| w * b.get(t).copied().unwrap_or(0.0)).sum();
    let na = a.values().map(|w| w * w).sum::<f64>().sqrt();
    let nb = b.values().map(|w| w * w).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na * nb)).clamp(0.0, 1.0)
    }
}

/// Featurizes the toy fixture and recomputes all 70 cells of every pair
/// from the token bags with plain hash maps.
pub fn fixture_grid_suite() -> Outcome {
    let lexicon = Lexicon::bundled();
    let (reports, files) = toy_fixture();
    let docs: Vec<_> = files
        .iter()
        .map(|(p, text, hist)| build_source_document(lexicon, &ScannerExtractor, p, text, Some(hist.as_slice())))
        .collect();
    let features: Vec<_> = reports.iter().map(|r| lexicon.build_bug_features(r)).collect();
    let pairs: Vec<_> = reports.iter().zip(&features).collect();
    let got = vsm::featurize_project(&pairs, &docs);
    if got.len() != 6 {
        return Err(format!("{} pairs, want 6", got.len()));
    }
    let mut nonzero = 0;
    for j in 0..GRID_COLS {
        let mut df: HashMap<String, usize> = HashMap::new();
        for d in &docs {
            for (t, _) in d.channels()[j].iter() {
                *df.entry(t.to_string()).or_default() += 1;
            }
        }
        for (r, bf) in features.iter().enumerate() {
            for (f, d) in docs.iter().enumerate() {
                let pair = &got[r * docs.len() + f];
                for (i, b) in bf.channels().into_iter().enumerate() {
                    let want = oracle_cosine(
                        &oracle_vector(b, &df, docs.len()),
                        &oracle_vector(d.channels()[j], &df, docs.len()),
                    );
                    let cell = i * GRID_COLS + j;
                    if !close(pair.scores[cell], want, 1e-12) {
                        return Err(format!(
                            "{} x {} cell {}: {} vs {want}",
                            pair.bug_id,
                            pair.file_path,
                            vsm::cell_name(cell),
                            pair.scores[cell]
                        ));
                    }
                    nonzero += (want > 0.0) as usize;
                }
            }
        }
    }
    for p in &got {
        if p.label
            != reports
                .iter()
                .any(|r| r.id == p.bug_id && r.fixed_files.contains(&p.file_path))
        {
            return Err(format!("label of {} x {}", p.bug_id, p.file_path));
        }
    }
    if nonzero == 0 {
        return Err("fixture produced no overlap at all".into());
    }
    Ok(format!("6 pairs x 70 cells recomputed, {nonzero} non-zero"))
}

// ---------------------------------------------------------- class weights

pub fn class_weight_suite(vectors: usize, seed: u64) -> Outcome {
    let mut rng = rng(seed);
    let mut rejected = 0;
    for v in 0..vectors {
        let n = rng.gen_range(1..60);
        let n_groups = rng.gen_range(1..5);
        let rate = rng.gen_range(0.02..0.5);
        let labels: Vec<bool> = (0..n).map(|_| rng.gen_bool(rate)).collect();
        let groups: Vec<String> = (0..n).map(|_| format!("P{}", rng.gen_range(0..n_groups))).collect();
        match (
            learner::class_weights(&labels, &groups),
            oracle_class_weights(&labels, &groups),
        ) {
            (Ok(got), Some(want)) => {
                if got != want {
                    return Err(format!("vector {v}: weights differ"));
                }
            }
            (Err(LearnError::NoPositiveSamples(_)), None) => rejected += 1,
            (got, want) => return Err(format!("vector {v}: library {got:?}, oracle {want:?}")),
        }
    }
    // an explicit all-negative group
    let labels = [true, false, false, false];
    let groups: Vec<String> = ["A", "A", "B", "B"].iter().map(|s| s.to_string()).collect();
    if !matches!(learner::class_weights(&labels, &groups), Err(LearnError::NoPositiveSamples(g)) if g == "B") {
        return Err("group without positives was accepted".into());
    }
    Ok(format!(
        "{vectors} label vectors, {rejected} rejected for a group without positives"
    ))
}

// ---------------------------------------------------------------- learner

fn names(nf: usize) -> Vec<String> {
    (0..nf).map(|f| format!("x{f}")).collect()
}

pub fn dataset(rows: Vec<Vec<f64>>, labels: Vec<bool>, weights: Vec<f64>) -> WeightedDataset {
    let n = rows.len();
    let nf = rows[0].len();
    WeightedDataset::new(names(nf), rows, labels, weights, vec!["g".into(); n]).expect("consistent dataset")
}

/// Library config with every feature available and no early stopping.
pub fn exact_config(r: &RefConfig) -> TrainConfig {
    TrainConfig {
        learning_rate: r.learning_rate,
        n_estimators: r.trees,
        num_leaves: r.num_leaves,
        feature_fraction: 1.0,
        early_stopping_rounds: 0,
        lambda: r.lambda,
        min_weight_in_leaf: r.min_weight,
        min_sum_hessian_in_leaf: r.min_hessian,
        max_depth: r.max_depth,
        seed: 0,
    }
}

pub fn learner_oracle_suite(datasets: usize, seed: u64) -> Outcome {
    let mut rng = rng(seed);
    let mut worst: f64 = 0.0;
    for d in 0..datasets {
        let n = rng.gen_range(20..=200);
        let nf = rng.gen_range(2..=5);
        let (rows, labels, weights) = random_dataset(&mut rng, n, nf);
        let rc = RefConfig {
            learning_rate: [0.05, 0.1, 0.3][d % 3],
            trees: 15,
            num_leaves: [2, 4, 7, 31][d % 4],
            lambda: [0.0, 1.0, 3.0][d % 3],
            min_weight: [0.0, 5.0, 20.0][(d / 3) % 3],
            min_hessian: [0.0, 1e-3][d % 2],
            max_depth: if d % 5 == 4 { Some(2) } else { None },
        };
        let reference = reference_boost(&rows, &labels, &weights, &rc);
        let data = dataset(rows.clone(), labels, weights);
        let model =
            learner::train(&data, &WeightedDataset::default(), &exact_config(&rc)).map_err(|e| e.to_string())?;
        if model.trees.len() != reference.n_trees() {
            return Err(format!(
                "dataset {d}: {} trees vs reference {}",
                model.trees.len(),
                reference.n_trees()
            ));
        }
        if !close(model.base_score, reference.base, 1e-12) {
            return Err(format!("dataset {d}: base score"));
        }
        // Unseen rows probe the thresholds, but tiny leaves admit several
        // splits with the same partition of the training rows.
        let mut probe = rows;
        if rc.min_weight >= 20.0 {
            probe.extend((0..100).map(|_| (0..nf).map(|_| rng.gen::<f64>()).collect::<Vec<_>>()));
        }
        for (i, r) in probe.iter().enumerate() {
            let diff = (model.predict_row(r) - reference.prob(r)).abs();
            worst = worst.max(diff);
            if diff > 1e-6 {
                return Err(format!("dataset {d} ({rc:?}) row {i}: diff {diff}"));
            }
        }
    }
    Ok(format!("{datasets} datasets of 20-200 rows, max |diff| {worst:.1e}"))
}

/// Two uniform features, labelled by which side of the diagonal they fall.
pub fn separable(rng: &mut ChaCha8Rng, n: usize) -> (Vec<Vec<f64>>, Vec<bool>) {
    let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.gen::<f64>(), rng.gen::<f64>()]).collect();
    let labels = rows.iter().map(|r| r[0] + r[1] > 1.0).collect();
    (rows, labels)
}

fn weighted(rows: Vec<Vec<f64>>, labels: Vec<bool>) -> Result<WeightedDataset, String> {
    let groups = vec!["g".to_string(); rows.len()];
    let weights = learner::class_weights(&labels, &groups).map_err(|e| e.to_string())?;
    WeightedDataset::new(names(2), rows, labels, weights, groups).map_err(|e| e.to_string())
}

pub fn separable_suite(seed: u64) -> Outcome {
    let mut rng = rng(seed);
    let (rows, labels) = separable(&mut rng, 500);
    let (vrows, vlabels) = separable(&mut rng, 500);
    let train = weighted(rows, labels)?;
    let valid = weighted(vrows.clone(), vlabels.clone())?;
    // column sampling is sized for the 70-cell grid; on two columns it
    // leaves one per tree, so the fixture trains on both
    let cfg = TrainConfig {
        feature_fraction: 1.0,
        n_estimators: 100,
        seed,
        ..TrainConfig::quick()
    };
    let model = learner::train(&train, &valid, &cfg).map_err(|e| e.to_string())?;
    let scores: Vec<f64> = vrows.iter().map(|r| model.predict_row(r)).collect();
    let a = auc(&scores, &vlabels);
    if a < 0.99 {
        return Err(format!("AUC {a:.4} after {} iterations", model.iterations_trained));
    }
    let mut parts = vec![format!("AUC {a:.4} with {} trees", model.best_iteration)];
    let cfg = TrainConfig::quick();
    let rc = RefConfig {
        learning_rate: cfg.learning_rate,
        trees: 100,
        num_leaves: cfg.num_leaves,
        lambda: cfg.lambda,
        min_weight: cfg.min_weight_in_leaf,
        min_hessian: cfg.min_sum_hessian_in_leaf,
        max_depth: cfg.max_depth,
    };
    let reference = reference_boost(&train.rows, &train.labels, &train.weights, &rc);
    let a = auc(&vrows.iter().map(|r| reference.prob(r)).collect::<Vec<_>>(), &vlabels);
    if a < 0.99 {
        return Err(format!("reference booster: AUC {a:.4}"));
    }
    parts.push(format!("reference AUC {a:.4}"));
    Ok(parts.join(", "))
}

pub fn early_stopping_suite(seed: u64) -> Outcome {
    let mut rng = rng(seed);
    let mut stops = Vec::new();
    for round in 0..5 {
        let (rows, labels, weights) = random_dataset(&mut rng, 150, 4);
        let (vrows, vlabels, vweights) = random_dataset(&mut rng, 100, 4);
        let train = dataset(rows, labels, weights);
        let valid = dataset(vrows, vlabels, vweights);
        let cfg = TrainConfig {
            n_estimators: 2000,
            learning_rate: 0.3,
            feature_fraction: 1.0,
            early_stopping_rounds: 10,
            min_weight_in_leaf: 1.0,
            seed: round,
            ..TrainConfig::quick()
        };
        let m = learner::train(&train, &valid, &cfg).map_err(|e| e.to_string())?;
        if m.iterations_trained > m.best_iteration + 10 {
            return Err(format!(
                "ran {} iterations past best {}",
                m.iterations_trained, m.best_iteration
            ));
        }
        if m.iterations_trained < cfg.n_estimators && m.iterations_trained != m.best_iteration + 10 {
            return Err(format!(
                "stopped at {} with best {}",
                m.iterations_trained, m.best_iteration
            ));
        }
        if m.trees.len() != m.best_iteration || m.valid_rmse.len() != m.iterations_trained {
            return Err("kept trees do not match best_iteration".into());
        }
        let min = m.valid_rmse.iter().copied().fold(f64::INFINITY, f64::min);
        if m.best_iteration == 0 || m.valid_rmse[m.best_iteration - 1] != min {
            return Err("best_iteration is not the first validation minimum".into());
        }
        stops.push(format!("{}/{}", m.best_iteration, m.iterations_trained));
    }
    Ok(format!("best/trained: {}", stops.join(" ")))
}

pub fn weight_doubling_suite(seed: u64) -> Outcome {
    let mut rng = rng(seed);
    let mut worst: f64 = 0.0;
    for round in 0..5 {
        let (rows, labels, weights) = random_dataset(&mut rng, 120, 3);
        let doubled: Vec<f64> = weights.iter().map(|w| 2.0 * w).collect();
        let cfg = TrainConfig {
            n_estimators: 30,
            feature_fraction: 0.67,
            lambda: 0.0,
            min_weight_in_leaf: 0.0,
            min_sum_hessian_in_leaf: 0.0,
            early_stopping_rounds: 0,
            seed: round,
            ..TrainConfig::quick()
        };
        let a = learner::train(
            &dataset(rows.clone(), labels.clone(), weights),
            &WeightedDataset::default(),
            &cfg,
        )
        .map_err(|e| e.to_string())?;
        let b = learner::train(
            &dataset(rows.clone(), labels, doubled),
            &WeightedDataset::default(),
            &cfg,
        )
        .map_err(|e| e.to_string())?;
        for r in &rows {
            worst = worst.max((a.predict_row(r) - b.predict_row(r)).abs());
        }
    }
    if worst > 1e-9 {
        return Err(format!("doubling weights moved a prediction by {worst:e}"));
    }
    Ok(format!("max |diff| {worst:.1e}"))
}

pub fn model_round_trip_suite(seed: u64) -> Outcome {
    let mut rng = rng(seed);
    let (rows, labels, weights) = random_dataset(&mut rng, 150, 5);
    let (vrows, vlabels, vweights) = random_dataset(&mut rng, 50, 5);
    let cfg = TrainConfig {
        feature_fraction: 0.6,
        min_weight_in_leaf: 2.0,
        max_depth: Some(4),
        seed,
        ..TrainConfig::quick()
    };
    let m = learner::train(
        &dataset(rows.clone(), labels.clone(), weights.clone()),
        &dataset(vrows, vlabels, vweights),
        &cfg,
    )
    .map_err(|e| e.to_string())?;
    let mut bytes = Vec::new();
    learner::write_model(&mut bytes, &m).map_err(|e| e.to_string())?;
    let back = learner::read_model(bytes.as_slice()).map_err(|e| e.to_string())?;
    let mut again = Vec::new();
    learner::write_model(&mut again, &back).map_err(|e| e.to_string())?;
    if bytes != again {
        return Err("re-serialized model differs".into());
    }
    for r in &rows {
        if m.predict_row(r).to_bits() != back.predict_row(r).to_bits() {
            return Err("reloaded model predicts differently".into());
        }
    }
    let twice = learner::train(
        &dataset(rows, labels, weights),
        &WeightedDataset::default(),
        &TrainConfig {
            early_stopping_rounds: 0,
            ..cfg.clone()
        },
    )
    .map_err(|e| e.to_string())?;
    let thrice = learner::train(
        &twice_data(&mut super::rng(seed)),
        &WeightedDataset::default(),
        &TrainConfig {
            early_stopping_rounds: 0,
            ..cfg
        },
    )
    .map_err(|e| e.to_string())?;
    if twice != thrice {
        return Err("same data and seed gave different models".into());
    }
    Ok(format!("{} bytes, {} trees, bit-identical", bytes.len(), m.trees.len()))
}

fn twice_data(rng: &mut ChaCha8Rng) -> WeightedDataset {
    let (rows, labels, weights) = random_dataset(rng, 150, 5);
    dataset(rows, labels, weights)
}

// ---------------------------------------------------------------- regions

pub fn to_tool_results(u: &Universe) -> Vec<ToolResult> {
    u.results
        .iter()
        .map(|(t, b, r)| ToolResult {
            tool: t.clone(),
            bug_id: b.clone(),
            ranked_files: r.clone(),
        })
        .collect()
}

pub fn region_suite(universes: usize, seed: u64) -> Outcome {
    let mut rng = rng(seed);
    let mut overlaps = 0;
    for k in 0..universes {
        let u = random_universe(&mut rng);
        let n = rng.gen_range(1..=3);
        let results = to_tool_results(&u);
        if results.is_empty() {
            if regions::build_regions(&results, &u.truths, &u.bugs, n).is_ok() {
                return Err(format!("universe {k}: regions built without tool results"));
            }
            continue;
        }
        let set = regions::build_regions(&results, &u.truths, &u.bugs, n).map_err(|e| format!("universe {k}: {e}"))?;
        let order: Vec<String> = set.names().iter().map(|s| s.to_string()).collect();
        let map: BTreeMap<String, BTreeSet<String>> = set
            .regions
            .iter()
            .map(|r| (r.name.clone(), r.bug_ids.clone()))
            .collect();
        check_regions(&u, n, &map, &order).map_err(|e| format!("universe {k}: {e}"))?;

        let wider = regions::build_regions(&results, &u.truths, &u.bugs, n + 5).map_err(|e| e.to_string())?;
        for t in &set.tools {
            if !set.success[t].is_subset(&wider.success[t]) {
                return Err(format!("universe {k}: {t} shrank when n grew"));
            }
        }

        for (a, b) in [
            (set.tools[0].as_str(), set.tools[set.tools.len() - 1].as_str()),
            ("UNION", "INTER"),
            ("NOT-UNION", "UNION"),
        ] {
            let (sa, sb) = (&map[a], &map[b]);
            match regions::overlap(sa, sb) {
                Ok(o) => {
                    let (both, only_a, only_b) = oracle_overlap(sa, sb);
                    if !close(o.both, both, 1e-9) || !close(o.only_a, only_a, 1e-9) || !close(o.only_b, only_b, 1e-9) {
                        return Err(format!("universe {k}: overlap({a},{b})"));
                    }
                    if !close(o.both + o.only_a + o.only_b, 100.0, 1e-9) {
                        return Err(format!(
                            "universe {k}: overlap({a},{b}) sums to {}",
                            o.both + o.only_a + o.only_b
                        ));
                    }
                    overlaps += 1;
                }
                Err(RegionError::EmptyUniverse) if sa.is_empty() && sb.is_empty() => {}
                Err(e) => return Err(format!("universe {k}: overlap({a},{b}): {e}")),
            }
        }
    }
    Ok(format!("{universes} universes, {overlaps} overlap decompositions"))
}

/// Tool A localizes bugs 1 and 2, tool B only bug 2, bug 3 is missed.
pub fn two_tool_example() -> Outcome {
    let truth = |b: &str| (b.to_string(), BTreeSet::from([format!("{b}.java")]));
    let truths: BTreeMap<_, _> = ["1", "2", "3"].map(truth).into_iter().collect();
    let bugs: BTreeSet<String> = ["1", "2", "3"].map(String::from).into();
    let hit = |t: &str, b: &str| ToolResult {
        tool: t.into(),
        bug_id: b.into(),
        ranked_files: vec![format!("{b}.java")],
    };
    let miss = |t: &str, b: &str| ToolResult {
        tool: t.into(),
        bug_id: b.into(),
        ranked_files: vec!["other.java".into()],
    };
    let results = vec![
        hit("A", "1"),
        hit("A", "2"),
        miss("A", "3"),
        miss("B", "1"),
        hit("B", "2"),
        miss("B", "3"),
    ];
    let set = regions::build_regions(&results, &truths, &bugs, 1).map_err(|e| e.to_string())?;
    let get = |n: &str| {
        set.get(n)
            .map(|r| r.bug_ids.iter().cloned().collect::<Vec<_>>())
            .unwrap_or_default()
    };
    let want: [(&str, Vec<&str>); 4] = [
        ("Only-A", vec!["1"]),
        ("Only-B", vec![]),
        ("INTER", vec!["2"]),
        ("NOT-UNION", vec!["3"]),
    ];
    for (name, ids) in want {
        if get(name) != ids {
            return Err(format!("{name} = {:?}, want {ids:?}", get(name)));
        }
    }
    Ok("Only-A={1}, Only-B={}, INTER={2}, NOT-UNION={3}".into())
}
