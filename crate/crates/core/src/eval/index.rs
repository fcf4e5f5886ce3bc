use std::collections::{HashMap, HashSet};

use crate::error::{Error, Result};
use crate::models::{squared_distance, Descriptor};
use crate::par::{self, Execution};

#[derive(Clone, Debug, PartialEq)]
pub struct IndexEntry {
    pub segment_id: u64,
    pub group_id: u64,
    pub descriptor: Descriptor,
}

/// Descriptors searchable by exact brute-force nearest neighbor.
#[derive(Clone, Debug, Default)]
pub struct DescriptorIndex {
    entries: Vec<IndexEntry>,
    by_id: HashMap<u64, usize>,
    dim: usize,
}

impl DescriptorIndex {
    pub fn new(entries: Vec<IndexEntry>) -> Result<Self> {
        let dim = entries.first().map_or(0, |e| e.descriptor.len());
        let mut by_id = HashMap::with_capacity(entries.len());
        for (i, e) in entries.iter().enumerate() {
            if e.descriptor.len() != dim {
                return Err(Error::DimensionMismatch {
                    context: "descriptor index",
                    expected: vec![dim],
                    found: vec![e.descriptor.len()],
                });
            }
            if by_id.insert(e.segment_id, i).is_some() {
                return Err(Error::DuplicateSegmentId(e.segment_id));
            }
        }
        Ok(DescriptorIndex { entries, by_id, dim })
    }

    /// Builds an index from parallel slices.
    pub fn from_parts(ids: &[u64], groups: &[u64], descs: &[Descriptor]) -> Result<Self> {
        if ids.len() != descs.len() || groups.len() != descs.len() {
            return Err(Error::DimensionMismatch {
                context: "descriptor index parts",
                expected: vec![descs.len()],
                found: vec![ids.len(), groups.len()],
            });
        }
        Self::new(
            ids.iter()
                .zip(groups)
                .zip(descs)
                .map(|((&segment_id, &group_id), d)| IndexEntry {
                    segment_id,
                    group_id,
                    descriptor: d.clone(),
                })
                .collect(),
        )
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, segment_id: u64) -> Option<&IndexEntry> {
        self.by_id.get(&segment_id).map(|&i| &self.entries[i])
    }
}

/// Closest entry to `query` by Euclidean distance, skipping `exclude`.
/// Ties go to the lowest segment id.
pub fn nearest_neighbor_match(index: &DescriptorIndex, query: &Descriptor, exclude: Option<u64>) -> Result<(u64, f64)> {
    if query.len() != index.dim && !index.is_empty() {
        return Err(Error::DimensionMismatch {
            context: "nearest-neighbor query",
            expected: vec![index.dim],
            found: vec![query.len()],
        });
    }
    let mut best: Option<(f64, u64)> = None;
    for e in &index.entries {
        if Some(e.segment_id) == exclude {
            continue;
        }
        let d = squared_distance(&query.0, &e.descriptor.0);
        let better = match best {
            None => true,
            Some((bd, bid)) => d < bd || (d == bd && e.segment_id < bid),
        };
        if better {
            best = Some((d, e.segment_id));
        }
    }
    best.map(|(d, id)| (id, d.sqrt()))
        .ok_or(Error::NoEligibleEntries("nearest-neighbor index"))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CandidateOutcome {
    pub accuracy: f64,
    pub correct: usize,
    pub evaluated: usize,
    /// Entries skipped because no other member of their group is indexed.
    pub excluded: usize,
}

/// Fraction of entries whose nearest neighbor (self excluded) shares their
/// group. Entries alone in their group are excluded and counted.
pub fn candidate_match_accuracy(index: &DescriptorIndex, exec: Execution) -> Result<CandidateOutcome> {
    let mut sizes: HashMap<u64, usize> = HashMap::new();
    for e in &index.entries {
        *sizes.entry(e.group_id).or_default() += 1;
    }
    let eligible: Vec<&IndexEntry> = index.entries.iter().filter(|e| sizes[&e.group_id] > 1).collect();
    if eligible.is_empty() {
        return Err(Error::NoEligibleEntries("candidate matching"));
    }
    let hits = par::map_slice(exec, &eligible, |e| {
        nearest_neighbor_match(index, &e.descriptor, Some(e.segment_id))
            .map(|(id, _)| index.get(id).is_some_and(|m| m.group_id == e.group_id))
    });
    let mut correct = 0;
    for h in hits {
        correct += usize::from(h?);
    }
    Ok(CandidateOutcome {
        accuracy: correct as f64 / eligible.len() as f64,
        correct,
        evaluated: eligible.len(),
        excluded: index.len() - eligible.len(),
    })
}

/// Candidate-match accuracy of descriptors labeled by group, identified by
/// position.
pub fn candidate_accuracy_of(descs: &[Descriptor], groups: &[u64]) -> Result<f64> {
    let ids: Vec<u64> = (0..descs.len() as u64).collect();
    let index = DescriptorIndex::from_parts(&ids, groups, descs)?;
    candidate_match_accuracy(&index, Execution::Parallel).map(|o| o.accuracy)
}

/// Number of distinct groups in an index.
pub fn group_count(index: &DescriptorIndex) -> usize {
    index.entries.iter().map(|e| e.group_id).collect::<HashSet<_>>().len()
}
