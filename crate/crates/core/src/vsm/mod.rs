//! tf-idf weighting, cosine similarity and the 7 x 10 similarity grid.
//!
//! Weights use `tf = 1 + ln f` and the smoothed `idf = ln((1 + n) / (1 + df)) + 1`.
//! Each source channel has its own [`CorpusIndex`] whose documents are the
//! project's files; the grid cell (bug channel i, source channel j) weights
//! both the report bag and the file bag against source channel j's index,
//! so query and document live in the same space.

pub mod cache;

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codeextract::{SourceDocument, CODE_CHANNELS};
use crate::corpus::BugReport;
use crate::textprep::{BugReportFeatures, TokenBag, BUG_CHANNELS};

pub const GRID_ROWS: usize = BUG_CHANNELS.len();
pub const GRID_COLS: usize = CODE_CHANNELS.len();
pub const GRID_CELLS: usize = GRID_ROWS * GRID_COLS;

/// `bug/code` name of grid cell `idx` (row-major).
pub fn cell_name(idx: usize) -> String {
    format!("{}/{}", BUG_CHANNELS[idx / GRID_COLS], CODE_CHANNELS[idx % GRID_COLS])
}

/// Index of the cell named `bug/code`.
pub fn cell_index(bug_channel: &str, code_channel: &str) -> Option<usize> {
    let i = BUG_CHANNELS.iter().position(|c| *c == bug_channel)?;
    let j = CODE_CHANNELS.iter().position(|c| *c == code_channel)?;
    Some(i * GRID_COLS + j)
}

/// All 70 cell names in grid order.
pub fn grid_manifest() -> Vec<String> {
    (0..GRID_CELLS).map(cell_name).collect()
}

/// The 17 channel names, report channels first, as written in cache headers.
pub fn channel_manifest() -> Vec<String> {
    BUG_CHANNELS
        .iter()
        .chain(CODE_CHANNELS.iter())
        .map(|s| s.to_string())
        .collect()
}

/// Term frequency weight for a term occurring `count` times (`count >= 1`).
pub fn tf(count: u32) -> f64 {
    debug_assert!(count >= 1, "tf of an absent term");
    1.0 + (count as f64).ln()
}

/// Document frequencies over one document collection.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CorpusIndex {
    n: usize,
    df: HashMap<String, u32>,
    dictionary: BTreeMap<String, u32>,
}

impl CorpusIndex {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn build<'a>(docs: impl IntoIterator<Item = &'a TokenBag>) -> Self {
        let mut index = Self::new();
        for d in docs {
            index.add_document(d);
        }
        index
    }

    pub fn add_document(&mut self, doc: &TokenBag) {
        self.n += 1;
        for term in doc.terms() {
            *self.df.entry(term.to_string()).or_insert(0) += 1;
            let next = self.dictionary.len() as u32;
            self.dictionary.entry(term.to_string()).or_insert(next);
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of documents containing `term` (0 when unseen).
    pub fn df(&self, term: &str) -> u32 {
        self.df.get(term).copied().unwrap_or(0)
    }

    pub fn term_id(&self, term: &str) -> Option<u32> {
        self.dictionary.get(term).copied()
    }

    pub fn vocabulary_size(&self) -> usize {
        self.dictionary.len()
    }

    pub fn idf(&self, term: &str) -> f64 {
        ((1.0 + self.n as f64) / (1.0 + self.df(term) as f64)).ln() + 1.0
    }
}

/// Sparse tf-idf vector: strictly positive weights, sorted by term.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TermVector {
    weights: Vec<(String, f64)>,
    norm: f64,
}

impl TermVector {
    /// Builds a vector from explicit weights; non-positive weights are
    /// dropped and duplicate terms summed.
    pub fn from_weights(weights: impl IntoIterator<Item = (String, f64)>) -> Self {
        let mut map: BTreeMap<String, f64> = BTreeMap::new();
        for (t, w) in weights {
            *map.entry(t).or_insert(0.0) += w;
        }
        let weights: Vec<_> = map.into_iter().filter(|(_, w)| *w > 0.0).collect();
        let norm = weights.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
        TermVector { weights, norm }
    }

    pub fn weight(&self, term: &str) -> f64 {
        self.weights
            .binary_search_by(|(t, _)| t.as_str().cmp(term))
            .map_or(0.0, |i| self.weights[i].1)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.weights.iter().map(|(t, w)| (t.as_str(), *w))
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self::from_weights(self.weights.iter().map(|(t, w)| (t.clone(), w * alpha)))
    }
}

pub fn vectorize(bag: &TokenBag, index: &CorpusIndex) -> TermVector {
    TermVector::from_weights(
        bag.iter()
            .map(|(t, c)| (t.to_string(), tf(c) * index.idf(t))),
    )
}

/// Cosine similarity; 0 when either vector is empty.
pub fn cosine(q: &TermVector, d: &TermVector) -> f64 {
    if q.norm == 0.0 || d.norm == 0.0 {
        return 0.0;
    }
    let (mut i, mut j, mut dot) = (0, 0, 0.0);
    let (a, b) = (&q.weights, &d.weights);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                dot += a[i].1 * b[j].1;
                i += 1;
                j += 1;
            }
        }
    }
    (dot / (q.norm * d.norm)).clamp(0.0, 1.0)
}

/// One (report, file) pair: 70 similarity scores and the ground-truth label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairFeatureVector {
    pub project: String,
    pub bug_id: String,
    pub file_path: String,
    /// Row-major over [`BUG_CHANNELS`] x [`CODE_CHANNELS`]; length [`GRID_CELLS`].
    pub scores: Vec<f64>,
    pub label: bool,
    /// Year the report was created.
    pub year: i32,
}

/// The ten per-channel indexes of one project, plus its file vectors.
#[derive(Debug, Clone)]
pub struct ProjectIndexes {
    pub channels: Vec<CorpusIndex>,
    paths: Vec<String>,
    /// `doc_vectors[j][f]`: file f on channel j.
    doc_vectors: Vec<Vec<TermVector>>,
}

impl ProjectIndexes {
    pub fn build(docs: &[SourceDocument]) -> Self {
        let channels: Vec<CorpusIndex> = (0..GRID_COLS)
            .map(|j| CorpusIndex::build(docs.iter().map(|d| d.channels()[j])))
            .collect();
        let doc_vectors = (0..GRID_COLS)
            .map(|j| {
                docs.iter()
                    .map(|d| vectorize(d.channels()[j], &channels[j]))
                    .collect()
            })
            .collect();
        ProjectIndexes {
            channels,
            paths: docs.iter().map(|d| d.path.clone()).collect(),
            doc_vectors,
        }
    }

    pub fn paths(&self) -> &[String] {
        &self.paths
    }

    /// The 70 scores of report `bf` against every indexed file, in file order.
    pub fn score_all(&self, bf: &BugReportFeatures) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; GRID_CELLS]; self.paths.len()];
        for (i, bag) in bf.channels().into_iter().enumerate() {
            for j in 0..GRID_COLS {
                let q = vectorize(bag, &self.channels[j]);
                if q.is_empty() {
                    continue;
                }
                for (f, d) in self.doc_vectors[j].iter().enumerate() {
                    out[f][i * GRID_COLS + j] = cosine(&q, d);
                }
            }
        }
        out
    }
}

/// Scores one pair against an arbitrary index set (one index per source
/// channel).
pub fn featurize_pair(
    report: &BugReport,
    bf: &BugReportFeatures,
    sd: &SourceDocument,
    indexes: &[CorpusIndex],
) -> PairFeatureVector {
    assert_eq!(indexes.len(), GRID_COLS, "one index per source channel");
    let mut scores = vec![0.0; GRID_CELLS];
    let code = sd.channels();
    for (i, bag) in bf.channels().into_iter().enumerate() {
        for j in 0..GRID_COLS {
            let q = vectorize(bag, &indexes[j]);
            let d = vectorize(code[j], &indexes[j]);
            scores[i * GRID_COLS + j] = cosine(&q, &d);
        }
    }
    PairFeatureVector {
        project: report.project.clone(),
        bug_id: report.id.clone(),
        file_path: sd.path.clone(),
        scores,
        label: report.fixed_files.contains(&sd.path),
        year: chrono::Datelike::year(&report.created_at),
    }
}

/// Every (report, file) pair of one project. Output order: reports in input
/// order, files in `docs` order. Parallel over reports.
pub fn featurize_project(
    reports: &[(&BugReport, &BugReportFeatures)],
    docs: &[SourceDocument],
) -> Vec<PairFeatureVector> {
    let indexes = ProjectIndexes::build(docs);
    reports
        .par_iter()
        .map(|(report, bf)| {
            indexes
                .score_all(bf)
                .into_iter()
                .zip(docs)
                .map(|(scores, d)| PairFeatureVector {
                    project: report.project.clone(),
                    bug_id: report.id.clone(),
                    file_path: d.path.clone(),
                    scores,
                    label: report.fixed_files.contains(&d.path),
                    year: chrono::Datelike::year(&report.created_at),
                })
                .collect::<Vec<_>>()
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}
