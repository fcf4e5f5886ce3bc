use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::seq::index::sample;

use super::pairs::LabeledPair;
use super::{squared_distance, Descriptor, DescriptorNet, SampleSet};
use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::rng;

#[derive(Clone, Debug, PartialEq)]
pub struct MiningConfig {
    /// Number of hardest pairs taken from each side before subsampling.
    pub k_hard: usize,
    /// Fraction of each top-k set retained, in (0, 1].
    pub subsample_ratio: f64,
    pub seed: u64,
}

impl Default for MiningConfig {
    fn default() -> Self {
        MiningConfig {
            k_hard: 4 * 32,
            subsample_ratio: 0.5,
            seed: 0,
        }
    }
}

impl MiningConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_hard == 0 {
            return Err(Error::config("k_hard", "must be positive"));
        }
        if !(self.subsample_ratio > 0.0 && self.subsample_ratio <= 1.0) {
            return Err(Error::config("subsample_ratio", "must lie in (0, 1]"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MinedPairs {
    /// Positives first, then negatives, each in hardness order.
    pub pairs: Vec<LabeledPair>,
    /// Hardest within-group pairs before subsampling, hardest first.
    pub hard_positives: Vec<LabeledPair>,
    /// Hardest cross-group pairs before subsampling, hardest first.
    pub hard_negatives: Vec<LabeledPair>,
    pub positives_available: usize,
    pub negatives_available: usize,
    /// Fewer than `k_hard` candidates existed on at least one side.
    pub shortfall: bool,
}

/// Sort key: smaller is harder. Ties fall back to the id pair.
#[derive(Clone, Copy, Debug)]
struct Key {
    score: f64,
    a: u64,
    b: u64,
}

impl PartialEq for Key {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl Eq for Key {}
impl PartialOrd for Key {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Key {
    fn cmp(&self, o: &Self) -> Ordering {
        self.score
            .total_cmp(&o.score)
            .then(self.a.cmp(&o.a))
            .then(self.b.cmp(&o.b))
    }
}

/// Keeps the `k` smallest keys.
struct TopK {
    k: usize,
    heap: BinaryHeap<Key>,
}

impl TopK {
    fn new(k: usize) -> Self {
        TopK {
            k,
            heap: BinaryHeap::with_capacity(k + 1),
        }
    }

    fn push(&mut self, key: Key) {
        if self.heap.len() < self.k {
            self.heap.push(key);
        } else if self.heap.peek().is_some_and(|top| key < *top) {
            self.heap.pop();
            self.heap.push(key);
        }
    }

    fn sorted(self) -> Vec<Key> {
        self.heap.into_sorted_vec()
    }
}

/// Mines hard pairs from precomputed descriptors. `ids` and `groups` are
/// parallel to `descs`.
pub fn mine_from_descriptors(
    descs: &[Descriptor],
    ids: &[u64],
    groups: &[u64],
    cfg: &MiningConfig,
    exec: Execution,
) -> Result<MinedPairs> {
    cfg.validate()?;
    if descs.len() != ids.len() || descs.len() != groups.len() {
        return Err(Error::DimensionMismatch {
            context: "mining inputs",
            expected: vec![descs.len()],
            found: vec![ids.len(), groups.len()],
        });
    }
    let mut distinct = groups.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::TooFewClasses(distinct.len()));
    }

    let k = cfg.k_hard;
    let rows: Vec<usize> = (0..descs.len()).collect();
    let per_row = par::map_slice(exec, &rows, |&i| {
        let (mut pos, mut neg) = (TopK::new(k), TopK::new(k));
        let (mut np, mut nn) = (0usize, 0usize);
        for j in (i + 1)..descs.len() {
            let d = squared_distance(&descs[i].0, &descs[j].0);
            let (a, b) = (ids[i].min(ids[j]), ids[i].max(ids[j]));
            if groups[i] == groups[j] {
                np += 1;
                pos.push(Key { score: -d, a, b });
            } else {
                nn += 1;
                neg.push(Key { score: d, a, b });
            }
        }
        (pos.sorted(), neg.sorted(), np, nn)
    });
    let (mut pos, mut neg) = (TopK::new(k), TopK::new(k));
    let (mut np, mut nn) = (0, 0);
    for (p, n, cp, cn) in per_row {
        p.into_iter().for_each(|x| pos.push(x));
        n.into_iter().for_each(|x| neg.push(x));
        np += cp;
        nn += cn;
    }
    let to_pairs = |keys: Vec<Key>, y| -> Vec<LabeledPair> {
        keys.into_iter()
            .filter_map(|key| LabeledPair::new(key.a, key.b, y))
            .collect()
    };
    let hard_positives = to_pairs(pos.sorted(), 1);
    let hard_negatives = to_pairs(neg.sorted(), 0);

    // Equal counts from each side keep the output balanced.
    let keep = |n: usize| ((n as f64 * cfg.subsample_ratio).ceil() as usize).min(n);
    let n = keep(hard_positives.len()).min(keep(hard_negatives.len()));
    let mut r = rng::stream(cfg.seed, &[0x4d49_4e45]);
    let mut pick = |from: &[LabeledPair]| -> Vec<LabeledPair> {
        let mut idx = sample(&mut r, from.len(), n).into_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| from[i]).collect()
    };
    let mut pairs = pick(&hard_positives);
    pairs.extend(pick(&hard_negatives));
    Ok(MinedPairs {
        pairs,
        shortfall: np < k || nn < k,
        hard_positives,
        hard_negatives,
        positives_available: np,
        negatives_available: nn,
    })
}

/// Hardest pairs of `data` under the current network, descriptors taken in
/// inference mode.
pub fn mine_hard_pairs(
    net: &DescriptorNet,
    data: &SampleSet,
    cfg: &MiningConfig,
    exec: Execution,
) -> Result<MinedPairs> {
    let descs = data.describe_all(net, exec)?;
    let ids: Vec<u64> = data.samples().iter().map(|s| s.sample_id).collect();
    mine_from_descriptors(&descs, &ids, &data.group_ids(), cfg, exec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng as _;

    fn cfg(k: usize, ratio: f64) -> MiningConfig {
        MiningConfig {
            k_hard: k,
            subsample_ratio: ratio,
            seed: 3,
        }
    }

    fn brute(descs: &[Descriptor], groups: &[u64], k: usize) -> (Vec<LabeledPair>, Vec<LabeledPair>) {
        let mut pos = Vec::new();
        let mut neg = Vec::new();
        for i in 0..descs.len() {
            for j in (i + 1)..descs.len() {
                let d: f64 = descs[i].0.iter().zip(&descs[j].0).map(|(a, b)| (a - b) * (a - b)).sum();
                if groups[i] == groups[j] {
                    pos.push((-d, i as u64, j as u64));
                } else {
                    neg.push((d, i as u64, j as u64));
                }
            }
        }
        let take = |mut v: Vec<(f64, u64, u64)>, y| {
            v.sort_by(|x, z| x.0.total_cmp(&z.0).then(x.1.cmp(&z.1)).then(x.2.cmp(&z.2)));
            v.into_iter()
                .take(k)
                .map(|(_, a, b)| LabeledPair { id_a: a, id_b: b, y })
                .collect::<Vec<_>>()
        };
        (take(pos, 1), take(neg, 0))
    }

    #[test]
    fn three_descriptors_closest_cross_pair_is_hardest() {
        let descs = vec![Descriptor(vec![0.0]), Descriptor(vec![1.0]), Descriptor(vec![3.0])];
        let m = mine_from_descriptors(&descs, &[0, 1, 2], &[0, 0, 1], &cfg(1, 1.0), Execution::Sequential).unwrap();
        assert_eq!(m.hard_negatives, vec![LabeledPair { id_a: 1, id_b: 2, y: 0 }]);
        assert_eq!(m.hard_positives, vec![LabeledPair { id_a: 0, id_b: 1, y: 1 }]);
        assert_eq!(m.pairs.len(), 2);
        assert!(!m.shortfall);
    }

    #[test]
    fn shortfall_returns_everything_available() {
        let descs = vec![Descriptor(vec![0.0]), Descriptor(vec![1.0]), Descriptor(vec![3.0])];
        let m = mine_from_descriptors(&descs, &[0, 1, 2], &[0, 0, 1], &cfg(5, 1.0), Execution::Sequential).unwrap();
        assert!(m.shortfall);
        assert_eq!((m.hard_positives.len(), m.hard_negatives.len()), (1, 2));
        assert_eq!(m.pairs.len(), 2);
    }

    #[test]
    fn one_group_is_rejected() {
        let descs = vec![Descriptor(vec![0.0]), Descriptor(vec![1.0])];
        let err = mine_from_descriptors(&descs, &[0, 1], &[4, 4], &cfg(1, 1.0), Execution::Sequential);
        assert!(matches!(err, Err(Error::TooFewClasses(1))));
    }

    #[test]
    fn subsample_is_balanced_and_drawn_from_the_top_sets() {
        let mut r = rng::seeded(11);
        let descs: Vec<Descriptor> = (0..40)
            .map(|_| Descriptor((0..4).map(|_| r.random::<f64>()).collect()))
            .collect();
        let groups: Vec<u64> = (0..40).map(|i| i / 5).collect();
        let ids: Vec<u64> = (0..40).collect();
        let m = mine_from_descriptors(&descs, &ids, &groups, &cfg(20, 0.5), Execution::Parallel).unwrap();
        assert_eq!(m.pairs.iter().filter(|p| p.y == 1).count(), 10);
        assert_eq!(m.pairs.iter().filter(|p| p.y == 0).count(), 10);
        for p in &m.pairs {
            let pool = if p.y == 1 { &m.hard_positives } else { &m.hard_negatives };
            assert!(pool.contains(p));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn top_k_matches_brute_force(seed in 0u64..1000, n in 4usize..30, k in 1usize..40) {
            let mut r = rng::seeded(seed);
            // Coarse values force distance ties.
            let descs: Vec<Descriptor> = (0..n)
                .map(|_| Descriptor((0..3).map(|_| r.random_range(0..3) as f64).collect()))
                .collect();
            let groups: Vec<u64> = (0..n).map(|_| r.random_range(0..3u64)).collect();
            prop_assume!(groups.iter().any(|&g| g != groups[0]));
            let ids: Vec<u64> = (0..n as u64).collect();
            let m = mine_from_descriptors(&descs, &ids, &groups, &cfg(k, 1.0), Execution::Parallel).unwrap();
            let (bp, bn) = brute(&descs, &groups, k);
            prop_assert_eq!(&m.hard_positives, &bp);
            prop_assert_eq!(&m.hard_negatives, &bn);
            let mut got = m.pairs.clone();
            got.sort();
            let n_each = bp.len().min(bn.len());
            prop_assert_eq!(got.len(), 2 * n_each);
        }
    }
}
