//! Information-retrieval bug localization with region-specific boosted
//! classifiers.
//!
//! The pipeline, module by module:
//!
//! 1. [`corpus`] ingests bug reports, source snapshots and history, and
//!    applies curation and the pre-fix filter.
//! 2. [`textprep`] and [`codeextract`] turn reports and files into token
//!    bags (7 report channels, 10 source channels).
//! 3. [`vsm`] weights bags with tf-idf and scores every (report, file) pair
//!    on the 7 x 10 grid of cosine similarities.
//! 4. [`regions`] partitions reports by which baseline tools localize them.
//! 5. [`learner`] trains one boosted-tree classifier per region and
//!    [`dnc`] averages their probabilities into a ranked list.
//! 6. [`eval`] computes MAP, MRR and TopN and the per-cell dissection.
//!
//! [`synth`] generates the desk-scale corpus used by the acceptance suite
//! and the guide.

pub mod codeextract;
pub mod corpus;
pub mod dnc;
pub mod eval;
pub mod learner;
pub mod pipeline;
pub mod regions;
pub mod synth;
pub mod textprep;
pub mod vsm;

/// Book chapters compiled as doctests.
#[cfg(doctest)]
pub mod guide {
    #[doc = include_str!("../../../book/src/intro.md")]
    pub mod intro {}
    #[doc = include_str!("../../../book/src/tokens.md")]
    pub mod tokens {}
    #[doc = include_str!("../../../book/src/similarity.md")]
    pub mod similarity {}
    #[doc = include_str!("../../../book/src/regions.md")]
    pub mod regions {}
    #[doc = include_str!("../../../book/src/boosting.md")]
    pub mod boosting {}
    #[doc = include_str!("../../../book/src/ensemble.md")]
    pub mod ensemble {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    pub mod metrics {}
    #[doc = include_str!("../../../book/src/cli.md")]
    pub mod cli {}
}
