//! Evaluation: nearest-neighbor candidate matching, pair scoring with ROC
//! curves, and extraction throughput.

mod bench;
mod index;
mod pairclf;
mod report;
mod roc;

pub use bench::{throughput_bench, Throughput};
pub use index::{
    candidate_accuracy_of, candidate_match_accuracy, group_count, nearest_neighbor_match, CandidateOutcome,
    DescriptorIndex, IndexEntry,
};
pub use pairclf::{pair_accuracy, train_pair_classifier, PairClassifier, PairClassifierConfig};
pub use report::{EvalReport, CSV_HEADER};
pub use roc::{roc_auc, RocCurve, RocPoint};

use crate::error::{Error, Result};
use crate::models::{LabeledPair, SiameseModel};
use crate::par::{self, Execution};

/// What turns two descriptors into a match score.
#[derive(Clone, Copy, Debug)]
pub enum PairScorer<'a> {
    /// The Siamese merge head.
    Siamese(&'a SiameseModel),
    /// A secondary classifier over descriptor pairs.
    Classifier(&'a PairClassifier),
}

/// Scores pairs whose descriptors are in `index`, keeping input order.
pub fn score_pairs(
    scorer: PairScorer<'_>,
    pairs: &[LabeledPair],
    index: &DescriptorIndex,
    exec: Execution,
) -> Result<Vec<(f64, u8)>> {
    par::map_slice(exec, pairs, |p| {
        let a = index
            .get(p.id_a)
            .ok_or(Error::NoEligibleEntries("pair references an unindexed segment"))?;
        let b = index
            .get(p.id_b)
            .ok_or(Error::NoEligibleEntries("pair references an unindexed segment"))?;
        let s = match scorer {
            PairScorer::Siamese(m) => m.probability_from_descriptors(&a.descriptor, &b.descriptor)?,
            PairScorer::Classifier(c) => c.probability(&a.descriptor.0, &b.descriptor.0)?,
        };
        Ok((s, p.y))
    })
    .into_iter()
    .collect()
}

/// Pairs as descriptor slices for [`train_pair_classifier`].
/// Descriptor a, descriptor b, match label.
pub type PairExample<'a> = (&'a [f64], &'a [f64], u8);

pub fn pair_examples<'a>(pairs: &[LabeledPair], index: &'a DescriptorIndex) -> Result<Vec<PairExample<'a>>> {
    pairs
        .iter()
        .map(|p| {
            let a = index
                .get(p.id_a)
                .ok_or(Error::NoEligibleEntries("pair references an unindexed segment"))?;
            let b = index
                .get(p.id_b)
                .ok_or(Error::NoEligibleEntries("pair references an unindexed segment"))?;
            Ok((a.descriptor.as_slice(), b.descriptor.as_slice(), p.y))
        })
        .collect()
}
