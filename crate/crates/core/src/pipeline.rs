//! Corpus to feature store: curation, the pre-fix filter, and featurization
//! of every (report, file) pair per project.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::codeextract::{build_source_document, ScannerExtractor, SourceDocument, StructureExtractor};
use crate::corpus::{curate, filter_prefix, BugReport, CorpusError, ProjectRegistry, ProjectSnapshot};
use crate::textprep::{BugReportFeatures, Lexicon};
use crate::vsm::{featurize_project, PairFeatureVector};

/// Reports that survive curation and the pre-fix filter, plus the reason
/// each other report was removed.
#[derive(Debug, Clone, Default)]
pub struct Prepared {
    pub reports: Vec<BugReport>,
    pub removed: Vec<(String, String)>,
}

pub fn prepare(reports: Vec<BugReport>, registry: &ProjectRegistry) -> Result<Prepared, CorpusError> {
    let mut by_project: BTreeMap<String, Vec<BugReport>> = BTreeMap::new();
    for r in reports {
        by_project.entry(r.project.clone()).or_default().push(r);
    }
    let mut out = Prepared::default();
    for (project, reports) in by_project {
        let Some(snapshot) = registry.get(&project) else {
            out.removed.extend(reports.into_iter().map(|r| (r.id, "unknown-project".to_string())));
            continue;
        };
        let curated = curate(reports, snapshot);
        out.removed.extend(curated.dropped.into_iter().map(|(r, why)| (r.id, why.to_string())));
        let split = filter_prefix(curated.kept)?;
        out.removed.extend(split.postfix.into_iter().map(|(r, e)| (r.id, format!("post-fix: {e:?}"))));
        out.reports.extend(split.prefix);
    }
    Ok(out)
}

/// Source documents of one snapshot, in path order.
pub fn source_documents(lexicon: &Lexicon, extractor: &dyn StructureExtractor, snapshot: &ProjectSnapshot) -> Vec<SourceDocument> {
    let files: Vec<(&String, &String)> = snapshot.files.iter().collect();
    files
        .par_iter()
        .map(|(path, text)| {
            let commits = snapshot.history.get(*path).map(Vec::as_slice);
            build_source_document(lexicon, extractor, path, text, commits)
        })
        .collect()
}

/// All pairs, grouped by project (in name order), then report order, then
/// file path order.
pub fn featurize(reports: &[BugReport], registry: &ProjectRegistry) -> Vec<PairFeatureVector> {
    featurize_with(Lexicon::bundled(), &ScannerExtractor, reports, registry)
}

pub fn featurize_with(
    lexicon: &Lexicon,
    extractor: &dyn StructureExtractor,
    reports: &[BugReport],
    registry: &ProjectRegistry,
) -> Vec<PairFeatureVector> {
    let mut out = Vec::new();
    let mut projects: Vec<&ProjectSnapshot> = registry.iter().collect();
    projects.sort_by(|a, b| a.project.cmp(&b.project));
    for snapshot in projects {
        let mine: Vec<&BugReport> = reports.iter().filter(|r| r.project == snapshot.project).collect();
        if mine.is_empty() {
            continue;
        }
        let docs = source_documents(lexicon, extractor, snapshot);
        let features: Vec<BugReportFeatures> = mine.par_iter().map(|r| lexicon.build_bug_features(r)).collect();
        let pairs: Vec<(&BugReport, &BugReportFeatures)> = mine.iter().copied().zip(&features).collect();
        out.extend(featurize_project(&pairs, &docs));
    }
    out
}
