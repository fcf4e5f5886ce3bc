use std::collections::HashSet;

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::geometry::SegmentGroup;
use crate::rng;

/// An unordered pair of ids with a match label (`1` = same group).
/// Constructed with `id_a < id_b`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LabeledPair {
    pub id_a: u64,
    pub id_b: u64,
    pub y: u8,
}

impl LabeledPair {
    /// Canonicalizes the order; `None` for a self-pair.
    pub fn new(a: u64, b: u64, y: u8) -> Option<Self> {
        match a.cmp(&b) {
            std::cmp::Ordering::Equal => None,
            std::cmp::Ordering::Less => Some(LabeledPair { id_a: a, id_b: b, y }),
            std::cmp::Ordering::Greater => Some(LabeledPair { id_a: b, id_b: a, y }),
        }
    }
}

/// Every within-group pair, groups in order.
pub(crate) fn all_positive_pairs(groups: &[SegmentGroup]) -> Vec<LabeledPair> {
    let mut out = Vec::new();
    for g in groups {
        let m = g.member_ids();
        for i in 0..m.len() {
            for j in (i + 1)..m.len() {
                out.extend(LabeledPair::new(m[i], m[j], 1));
            }
        }
    }
    out
}

fn count_positive(groups: &[SegmentGroup]) -> usize {
    groups.iter().map(|g| g.len() * g.len().saturating_sub(1) / 2).sum()
}

/// Draws `n_pos` distinct positive and `n_pos` distinct negative pairs,
/// shuffled together. Deterministic in `seed`.
pub fn sample_pairs(groups: &[SegmentGroup], n_pos: usize, seed: u64) -> Result<Vec<LabeledPair>> {
    let n_pos_avail = count_positive(groups);
    if n_pos > n_pos_avail {
        return Err(Error::InsufficientPairs {
            kind: "positive",
            requested: n_pos,
            available: n_pos_avail,
        });
    }
    let total: usize = groups.iter().map(SegmentGroup::len).sum();
    let n_neg_avail = total * total.saturating_sub(1) / 2 - n_pos_avail;
    if n_pos > n_neg_avail {
        return Err(Error::InsufficientPairs {
            kind: "negative",
            requested: n_pos,
            available: n_neg_avail,
        });
    }

    let mut r = rng::stream(seed, &[0x5041_4952]);
    let positives = all_positive_pairs(groups);
    let mut out: Vec<LabeledPair> = sample(&mut r, positives.len(), n_pos)
        .into_iter()
        .map(|i| positives[i])
        .collect();

    if n_pos > 0 {
        // Rejection sampling is fine while negatives are plentiful; otherwise
        // enumerate them.
        if n_pos * 2 <= n_neg_avail {
            let members: Vec<(u64, usize)> = groups
                .iter()
                .enumerate()
                .flat_map(|(gi, g)| g.member_ids().iter().map(move |&id| (id, gi)))
                .collect();
            let mut seen = HashSet::with_capacity(n_pos);
            let mut negs = Vec::with_capacity(n_pos);
            while negs.len() < n_pos {
                let (a, ga) = members[r.random_range(0..members.len())];
                let (b, gb) = members[r.random_range(0..members.len())];
                if ga == gb {
                    continue;
                }
                if let Some(p) = LabeledPair::new(a, b, 0) {
                    if seen.insert(p) {
                        negs.push(p);
                    }
                }
            }
            out.extend(negs);
        } else {
            let mut all = Vec::with_capacity(n_neg_avail);
            for (gi, g) in groups.iter().enumerate() {
                for h in &groups[gi + 1..] {
                    for &a in g.member_ids() {
                        for &b in h.member_ids() {
                            all.extend(LabeledPair::new(a, b, 0));
                        }
                    }
                }
            }
            out.extend(sample(&mut r, all.len(), n_pos).into_iter().map(|i| all[i]));
        }
    }
    out.shuffle(&mut r);
    Ok(out)
}
