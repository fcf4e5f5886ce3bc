use super::voxel::VoxelizedSegment;

/// Number of cells in which two equally sized grids differ.
pub fn hamming_distance(a: &VoxelizedSegment, b: &VoxelizedSegment) -> usize {
    a.values.iter().zip(&b.values).filter(|(x, y)| x != y).count()
}

/// Greedy near-duplicate removal within one group.
///
/// Members are scanned in ascending `segment_id`; a member is kept unless its
/// Hamming distance to an already kept member is strictly below `th_h`.
pub fn hamming_dedup(group_members: &[VoxelizedSegment], th_h: usize) -> Vec<VoxelizedSegment> {
    let mut order: Vec<&VoxelizedSegment> = group_members.iter().collect();
    order.sort_by_key(|v| v.segment_id);
    let mut kept: Vec<&VoxelizedSegment> = Vec::new();
    for v in order {
        if kept.iter().all(|k| hamming_distance(k, v) >= th_h) {
            kept.push(v);
        }
    }
    kept.into_iter().cloned().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn grid(id: u64, ones: &[usize]) -> VoxelizedSegment {
        let mut v = vec![0.0f32; 200];
        for &i in ones {
            v[i] = 1.0;
        }
        VoxelizedSegment::binary(id, [10, 10, 2], v).unwrap()
    }

    #[test]
    fn identical_grids_collapse() {
        let a = grid(1, &[1, 2, 3]);
        let b = grid(2, &[1, 2, 3]);
        let kept = hamming_dedup(&[b, a], 50);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].segment_id, 1);
    }

    #[test]
    fn threshold_is_strict() {
        let a = grid(1, &[]);
        let b = grid(2, &(0..50).collect::<Vec<_>>());
        assert_eq!(hamming_distance(&a, &b), 50);
        assert_eq!(hamming_dedup(&[a.clone(), b.clone()], 50).len(), 2);
        assert_eq!(hamming_dedup(&[a, b], 51).len(), 1);
    }

    #[test]
    fn idempotent_on_random_groups() {
        let mut rng = crate::rng::seeded(6);
        for _ in 0..30 {
            let members: Vec<VoxelizedSegment> = (0..10)
                .map(|i| {
                    let ones: Vec<usize> = (0..200).filter(|_| rng.random_bool(0.1)).collect();
                    grid(i, &ones)
                })
                .collect();
            let once = hamming_dedup(&members, 35);
            let twice = hamming_dedup(&once, 35);
            assert_eq!(once, twice);
        }
    }
}
