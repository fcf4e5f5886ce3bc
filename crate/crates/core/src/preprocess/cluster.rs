use std::collections::HashMap;

use super::PreprocessConfig;
use crate::geometry::{Point, Segment};

type Cell = (i64, i64, i64);

fn cell_of(p: &Point, size: f64) -> Cell {
    (
        (p.x / size).floor() as i64,
        (p.y / size).floor() as i64,
        (p.z / size).floor() as i64,
    )
}

/// Region growing over the graph that links points at most `cluster_radius`
/// apart. Components smaller than `min_cluster_points` are dropped.
///
/// Segments are emitted in order of their lowest point index, points keep
/// their input order, and ids count up from `first_segment_id`.
pub fn euclidean_cluster(
    points: &[Point],
    cfg: &PreprocessConfig,
    observer_position: Point,
    frame_index: u32,
    run_id: &str,
    first_segment_id: u64,
) -> Vec<Segment> {
    let radius = cfg.cluster_radius;
    let r2 = radius * radius;
    let mut cells: HashMap<Cell, Vec<usize>> = HashMap::new();
    for (i, p) in points.iter().enumerate() {
        cells.entry(cell_of(p, radius)).or_default().push(i);
    }

    let mut label = vec![usize::MAX; points.len()];
    let mut components: Vec<Vec<usize>> = Vec::new();
    let mut queue = Vec::new();
    for seed in 0..points.len() {
        if label[seed] != usize::MAX {
            continue;
        }
        let comp = components.len();
        label[seed] = comp;
        queue.clear();
        queue.push(seed);
        let mut members = Vec::new();
        while let Some(i) = queue.pop() {
            members.push(i);
            let (cx, cy, cz) = cell_of(&points[i], radius);
            for dx in -1..=1 {
                for dy in -1..=1 {
                    for dz in -1..=1 {
                        let Some(bucket) = cells.get(&(cx + dx, cy + dy, cz + dz)) else {
                            continue;
                        };
                        for &j in bucket {
                            if label[j] == usize::MAX && points[i].distance_sq(&points[j]) <= r2 {
                                label[j] = comp;
                                queue.push(j);
                            }
                        }
                    }
                }
            }
        }
        members.sort_unstable();
        components.push(members);
    }

    components
        .into_iter()
        .filter(|m| m.len() >= cfg.min_cluster_points.max(1))
        .enumerate()
        .map(|(k, m)| Segment {
            segment_id: first_segment_id + k as u64,
            points: m.iter().map(|&i| points[i]).collect(),
            observer_position,
            frame_index,
            run_id: run_id.to_string(),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn cfg(radius: f64, min_pts: usize) -> PreprocessConfig {
        PreprocessConfig {
            cluster_radius: radius,
            min_cluster_points: min_pts,
            ..Default::default()
        }
    }

    fn run(points: &[Point], c: &PreprocessConfig) -> Vec<Segment> {
        euclidean_cluster(points, c, Point::new(0.0, -10.0, 1.0), 3, "run", 100)
    }

    #[test]
    fn separated_clusters() {
        let mut pts = Vec::new();
        for i in 0..10 {
            pts.push(Point::new(i as f64 * 0.1, 0.0, 0.0));
            pts.push(Point::new(10.0 + i as f64 * 0.1, 0.0, 0.0));
        }
        let segs = run(&pts, &cfg(0.5, 1));
        assert_eq!(segs.len(), 2);
        assert_eq!(segs[0].segment_id, 100);
        assert_eq!(segs[1].frame_index, 3);
        assert_eq!(segs[1].observer_position, Point::new(0.0, -10.0, 1.0));
    }

    #[test]
    fn chain_grows_transitively() {
        let pts: Vec<Point> = (0..50).map(|i| Point::new(i as f64 * 0.4, 0.0, 0.0)).collect();
        let segs = run(&pts, &cfg(0.5, 1));
        assert_eq!(segs.len(), 1);
        assert_eq!(segs[0].points.len(), 50);
    }

    #[test]
    fn small_components_are_discarded_and_empty_input_is_empty() {
        let pts = vec![
            Point::new(0.0, 0.0, 0.0),
            Point::new(5.0, 0.0, 0.0),
            Point::new(5.1, 0.0, 0.0),
        ];
        let segs = run(&pts, &cfg(0.5, 2));
        assert_eq!(segs.len(), 1);
        assert_eq!(segs[0].points.len(), 2);
        assert!(run(&[], &cfg(0.5, 1)).is_empty());
    }

    #[test]
    fn matches_union_find_oracle() {
        let mut rng = crate::rng::seeded(5);
        let pts: Vec<Point> = (0..200)
            .map(|_| {
                Point::new(
                    rng.random_range(0.0..6.0),
                    rng.random_range(0.0..6.0),
                    rng.random_range(0.0..1.0),
                )
            })
            .collect();
        let c = cfg(0.45, 1);
        let got: Vec<Vec<Point>> = run(&pts, &c).into_iter().map(|s| s.points).collect();
        let oracle = crate::preprocess::cluster::oracle::union_find_partition(&pts, 0.45);
        assert_eq!(got, oracle);
    }
}
