//! Acceptance checks, one test per criterion. Each prints a single
//! `criterion N ... PASS|FAIL` line before asserting. Oracles are written
//! out here, independently of the library code under test.

#![allow(clippy::field_reassign_with_default)]

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use rand::Rng as _;
use segdesc::dataset::SyntheticSpec;
use segdesc::eval::{nearest_neighbor_match, roc_auc, DescriptorIndex};
use segdesc::geometry::{Point, RigidZRotation, Segment};
use segdesc::models::{
    mine_from_descriptors, sample_pairs, train_siamese, Branch, Descriptor, DescriptorNet, MiningConfig, NetConfig,
    Preset, Sample, SampleSet,
};
use segdesc::nn::{
    loss_binary_ce, loss_categorical_ce, loss_contrastive, LayerSpec as L, LayerStack, Mode, SgdConfig, Tensor,
};
use segdesc::par::Execution;
use segdesc::pipeline::{self, bench_batch, bench_presets, Method, PipelineConfig, PreparedData};
use segdesc::preprocess::{
    align_segment, build_groups, euclidean_cluster, hamming_dedup, voxelize, PreprocessConfig, VoxelGridSpec,
    VoxelizedSegment,
};
use segdesc::rng;

fn report(n: u32, name: &str, pass: bool, detail: impl std::fmt::Display) {
    println!(
        "criterion {n:>2} {name}: {} ({detail})",
        if pass { "PASS" } else { "FAIL" }
    );
}

// ---------------------------------------------------------------- 1

const STACK_TOL: f64 = 1e-4;
const LOSS_TOL: f64 = 1e-6;
const GRADCHECK_BUDGET_S: f64 = 60.0;

fn rel(a: f64, n: f64) -> f64 {
    (a - n).abs() / (a.abs() + n.abs()).max(1e-8)
}

fn random_tensor(shape: &[usize], seed: u64) -> Tensor {
    let mut r = rng::seeded(seed);
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Central differences over every parameter versus backpropagation.
fn stack_error(stack: &LayerStack, x: &Tensor, loss: &dyn Fn(&Tensor) -> (f64, Tensor)) -> f64 {
    let (out, tape) = stack.forward(x, Mode::Train, 0).unwrap();
    let (_, g) = loss(&out);
    let (_, grads) = stack.backward(&tape, &g).unwrap();
    let h = 1e-5;
    let eval = |s: &LayerStack| loss(&s.forward(x, Mode::Train, 0).unwrap().0).0;
    let mut probe = stack.clone();
    let mut worst: f64 = 0.0;
    for li in 0..stack.layers().len() {
        for bias in [false, true] {
            let len = if bias {
                stack.layers()[li].bias.len()
            } else {
                stack.layers()[li].weight.len()
            };
            for i in 0..len {
                let slot = |s: &mut LayerStack| -> *mut f64 {
                    let l = &mut s.layers_mut()[li];
                    if bias {
                        &mut l.bias[i]
                    } else {
                        &mut l.weight[i]
                    }
                };
                let p = slot(&mut probe);
                // SAFETY: `p` points into `probe`, which is alive and not otherwise borrowed here.
                let orig = unsafe { *p };
                unsafe { *p = orig + h };
                let plus = eval(&probe);
                unsafe { *slot(&mut probe) = orig - h };
                let minus = eval(&probe);
                unsafe { *slot(&mut probe) = orig };
                let analytic = if bias {
                    grads.layers[li].bias[i]
                } else {
                    grads.layers[li].weight[i]
                };
                worst = worst.max(rel(analytic, (plus - minus) / (2.0 * h)));
            }
        }
    }
    worst
}

fn fd(f: &dyn Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let mut a = x.to_vec();
            let mut b = x.to_vec();
            a[i] += h;
            b[i] -= h;
            (f(&a) - f(&b)) / (2.0 * h)
        })
        .collect()
}

#[test]
fn criterion_01_gradient_correctness() {
    let t = Instant::now();
    let bce = |o: &Tensor| {
        let (l, g) = loss_binary_ce(o.data()[0], 1);
        (l, Tensor::from_vec(vec![g]))
    };
    let nll = |o: &Tensor| {
        let p = o.data();
        let mut g = vec![0.0; p.len()];
        g[1] = -1.0 / p[1];
        (-p[1].ln(), Tensor::from_vec(g))
    };
    let s1 = LayerStack::new(
        &[1, 7, 7, 6],
        vec![
            L::conv3d(2, 3),
            L::maxpool3d(2),
            L::Relu,
            L::Flatten,
            L::dense(4),
            L::Sigmoid,
            L::dense(1),
            L::Sigmoid,
        ],
        11,
    )
    .unwrap();
    let s2 = LayerStack::new(
        &[1, 6, 6, 5],
        vec![L::conv3d(2, 2), L::Relu, L::Flatten, L::dense(3), L::Softmax],
        12,
    )
    .unwrap();
    let s3 = LayerStack::new(&[9], vec![L::dense(6), L::Relu, L::dense(4)], 13).unwrap();
    let x3 = random_tensor(&[9], 14);
    let f3 = s3.infer(&x3).unwrap().into_data();
    let partner: Vec<f64> = f3.iter().map(|v| v - 0.15).collect();
    let con = |y: u8| {
        let b = partner.clone();
        move |o: &Tensor| {
            let c = loss_contrastive(o.data(), &b, y, 1.0).unwrap();
            (c.loss, Tensor::from_vec(c.grad_a))
        }
    };
    let stack_err = [
        stack_error(&s1, &random_tensor(&[1, 7, 7, 6], 15), &bce),
        stack_error(&s2, &random_tensor(&[1, 6, 6, 5], 16), &nll),
        stack_error(&s3, &x3, &con(1)),
        stack_error(&s3, &x3, &con(0)),
    ]
    .into_iter()
    .fold(0.0, f64::max);

    let h = 1e-6;
    let mut loss_err: f64 = 0.0;
    for p in [0.1, 0.45, 0.8] {
        for y in [0u8, 1] {
            let n = fd(&|v: &[f64]| loss_binary_ce(v[0], y).0, &[p], h);
            loss_err = loss_err.max(rel(loss_binary_ce(p, y).1, n[0]));
        }
    }
    let z = random_tensor(&[4], 17).into_data();
    let softmax = |v: &[f64]| {
        let m = v.iter().cloned().fold(f64::MIN, f64::max);
        let e: Vec<f64> = v.iter().map(|x| (x - m).exp()).collect();
        let s: f64 = e.iter().sum();
        Tensor::from_vec(e.iter().map(|x| x / s).collect())
    };
    let g = loss_categorical_ce(&softmax(&z), 0).unwrap().1.into_data();
    let n = fd(&|v: &[f64]| loss_categorical_ce(&softmax(v), 0).unwrap().0, &z, h);
    loss_err = g.iter().zip(&n).map(|(a, b)| rel(*a, *b)).fold(loss_err, f64::max);
    let a = random_tensor(&[5], 18).into_data();
    for (y, shift) in [(1u8, 0.4), (0, 0.2)] {
        let b: Vec<f64> = a.iter().map(|v| v + shift).collect();
        let c = loss_contrastive(&a, &b, y, 1.0).unwrap();
        let na = fd(&|v: &[f64]| loss_contrastive(v, &b, y, 1.0).unwrap().loss, &a, h);
        let nb = fd(&|v: &[f64]| loss_contrastive(&a, v, y, 1.0).unwrap().loss, &b, h);
        loss_err = c
            .grad_a
            .iter()
            .zip(&na)
            .map(|(x, y)| rel(*x, *y))
            .fold(loss_err, f64::max);
        loss_err = c
            .grad_b
            .iter()
            .zip(&nb)
            .map(|(x, y)| rel(*x, *y))
            .fold(loss_err, f64::max);
    }
    let secs = t.elapsed().as_secs_f64();
    let pass = stack_err < STACK_TOL && loss_err < LOSS_TOL && secs < GRADCHECK_BUDGET_S;
    report(
        1,
        "gradient correctness",
        pass,
        format!("stacks {stack_err:.2e}, losses {loss_err:.2e}, {secs:.1}s"),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 2

#[test]
fn criterion_02_contrastive_loss_values() {
    let a = [0.3, -1.2, 2.0];
    let same = loss_contrastive(&a, &a, 1, 1.0).unwrap();
    // d^2 = 0.25
    let near = loss_contrastive(&[0.0, 0.0], &[0.3, 0.4], 0, 1.0).unwrap();
    let far = loss_contrastive(&[0.0, 0.0], &[0.6, 0.8], 0, 1.0).unwrap();
    let farther = loss_contrastive(&[0.0, 0.0], &[3.0, 4.0], 0, 1.0).unwrap();
    let zero_grad = |c: &segdesc::nn::ContrastiveLoss| c.grad_a.iter().chain(&c.grad_b).all(|g| *g == 0.0);
    let pass = same.loss.abs() <= 1e-12
        && (near.loss - 0.75).abs() <= 1e-12
        && far.loss.abs() <= 1e-12
        && zero_grad(&far)
        && farther.loss.abs() <= 1e-12
        && zero_grad(&farther);
    report(
        2,
        "contrastive loss values",
        pass,
        format!("{} / {} / {}", same.loss, near.loss, far.loss),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 3

/// A segment already in aligned pose whose points sit at least 0.2 voxel
/// from every cell face, built from mirrored pairs so the centroid is known.
/// Returns the segment and the set of cells it occupies.
fn aligned_segment(seed: u64, spec: &VoxelGridSpec) -> (Segment, BTreeSet<[usize; 3]>) {
    let mut r = rng::seeded(seed);
    let v = spec.voxel_size;
    let c = Point::new(
        r.random_range(-50.0..50.0),
        r.random_range(-50.0..50.0),
        r.random_range(0.0..3.0),
    );
    let mut points = Vec::new();
    let mut cells = BTreeSet::new();
    for _ in 0..r.random_range(10..60) {
        let cell: [usize; 3] = std::array::from_fn(|a| r.random_range(0..spec.dims[a]));
        let off: [f64; 3] = std::array::from_fn(|a| {
            (cell[a] as f64 + 0.5 - spec.dims[a] as f64 / 2.0) * v + r.random_range(-0.3..0.3) * v
        });
        let p = Point::new(c.x + off[0], c.y + off[1], c.z + off[2]);
        let q = Point::new(c.x - off[0], c.y - off[1], c.z - off[2]);
        points.extend([p, q]);
        cells.insert(cell);
        cells.insert(std::array::from_fn(|a| spec.dims[a] - 1 - cell[a]));
    }
    let observer = Point::new(c.x + r.random_range(3.0..25.0), c.y, c.z + 1.7);
    (Segment::new(seed, points, observer, 0, "run").unwrap(), cells)
}

fn occupied(v: &VoxelizedSegment, spec: &VoxelGridSpec) -> BTreeSet<[usize; 3]> {
    let [_, ny, nz] = spec.dims;
    v.values
        .iter()
        .enumerate()
        .filter(|(_, x)| **x != 0.0)
        .map(|(i, _)| [i / (ny * nz), (i / nz) % ny, i % nz])
        .collect()
}

#[test]
fn criterion_03_alignment_invariance() {
    let spec = VoxelGridSpec {
        dims: [16, 16, 8],
        voxel_size: 0.25,
    };
    let mut failures = 0;
    let mut checks = 0;
    for seed in 0..100 {
        let (seg, cells) = aligned_segment(seed, &spec);
        let mut r = rng::seeded(1000 + seed);
        for _ in 0..4 {
            let angle = r.random_range(-std::f64::consts::PI..std::f64::consts::PI);
            let pivot = Point::new(r.random_range(-100.0..100.0), r.random_range(-100.0..100.0), 0.0);
            let moved = seg.rotated(RigidZRotation::new(angle), pivot);
            let grid = voxelize(&align_segment(&moved).unwrap(), &spec).unwrap();
            checks += 1;
            failures += usize::from(occupied(&grid, &spec) != cells);
        }
    }
    report(
        3,
        "alignment invariance",
        failures == 0,
        format!("{failures} of {checks} rotated grids differ"),
    );
    assert_eq!(failures, 0);
}

// ---------------------------------------------------------------- 4

fn voxel_oracle(seg: &Segment, spec: &VoxelGridSpec) -> BTreeSet<[usize; 3]> {
    let c = seg.centroid();
    let v = spec.voxel_size;
    let lo = [
        c.x - v * spec.dims[0] as f64 / 2.0,
        c.y - v * spec.dims[1] as f64 / 2.0,
        c.z - v * spec.dims[2] as f64 / 2.0,
    ];
    let mut out = BTreeSet::new();
    for i in 0..spec.dims[0] {
        for j in 0..spec.dims[1] {
            for k in 0..spec.dims[2] {
                let cell = [i, j, k];
                let inside = seg.points.iter().any(|p| {
                    [p.x, p.y, p.z].iter().enumerate().all(|(a, x)| {
                        let t = (x - lo[a]) / v;
                        t >= cell[a] as f64 && t < cell[a] as f64 + 1.0
                    })
                });
                if inside {
                    out.insert(cell);
                }
            }
        }
    }
    out
}

fn cluster_oracle(points: &[Point], radius: f64, min_points: usize) -> Vec<Vec<Point>> {
    let n = points.len();
    let mut label = vec![usize::MAX; n];
    let mut comps = Vec::new();
    for s in 0..n {
        if label[s] != usize::MAX {
            continue;
        }
        let id = comps.len();
        let mut members = vec![s];
        label[s] = id;
        let mut i = 0;
        while i < members.len() {
            let p = points[members[i]];
            for q in 0..n {
                if label[q] == usize::MAX && p.distance(&points[q]) <= radius {
                    label[q] = id;
                    members.push(q);
                }
            }
            i += 1;
        }
        members.sort_unstable();
        comps.push(members);
    }
    comps
        .into_iter()
        .filter(|m| m.len() >= min_points)
        .map(|m| m.into_iter().map(|i| points[i]).collect())
        .collect()
}

fn dedup_oracle(members: &[VoxelizedSegment], th: usize) -> Vec<u64> {
    let mut sorted: Vec<&VoxelizedSegment> = members.iter().collect();
    sorted.sort_by_key(|m| m.segment_id);
    let mut kept: Vec<&VoxelizedSegment> = Vec::new();
    for m in sorted {
        let dup = kept
            .iter()
            .any(|k| k.values.iter().zip(&m.values).filter(|(a, b)| a != b).count() < th);
        if !dup {
            kept.push(m);
        }
    }
    kept.iter().map(|k| k.segment_id).collect()
}

fn grouping_oracle(segs: &[Segment], d_same: f64) -> Vec<Vec<u64>> {
    let mut order: Vec<&Segment> = segs.iter().collect();
    order.sort_by_key(|s| s.frame_index);
    let mut groups: Vec<Vec<&Segment>> = Vec::new();
    for s in order {
        let target = groups.iter().position(|g| {
            g.iter()
                .any(|m| m.frame_index < s.frame_index && m.centroid().distance(&s.centroid()) < d_same)
        });
        match target {
            Some(i) => groups[i].push(s),
            None => groups.push(vec![s]),
        }
    }
    groups
        .into_iter()
        .map(|g| g.into_iter().map(|s| s.segment_id).collect())
        .collect()
}

#[test]
fn criterion_04_preprocessing_oracles() {
    let spec = VoxelGridSpec {
        dims: [10, 9, 6],
        voxel_size: 0.3,
    };
    let mut bad = BTreeMap::<&str, usize>::new();
    for seed in 0..100u64 {
        let mut r = rng::seeded(seed);

        let pts: Vec<Point> = (0..r.random_range(5..80))
            .map(|_| {
                Point::new(
                    r.random_range(-2.0..2.0),
                    r.random_range(-2.0..2.0),
                    r.random_range(-1.0..1.0),
                )
            })
            .collect();
        let seg = Segment::new(seed, pts.clone(), Point::new(9.0, 0.0, 0.0), 0, "r").unwrap();
        let got = occupied(&voxelize(&seg, &spec).unwrap(), &spec);
        *bad.entry("voxelize").or_default() += usize::from(got != voxel_oracle(&seg, &spec));

        let cfg = PreprocessConfig {
            cluster_radius: r.random_range(0.2..0.8),
            min_cluster_points: r.random_range(1..5),
            ..PreprocessConfig::default()
        };
        let clusters = euclidean_cluster(&pts, &cfg, Point::ORIGIN, 0, "r", 0);
        let got: Vec<Vec<Point>> = clusters.into_iter().map(|s| s.points).collect();
        *bad.entry("euclidean_cluster").or_default() +=
            usize::from(got != cluster_oracle(&pts, cfg.cluster_radius, cfg.min_cluster_points));

        let th = r.random_range(0..12);
        let proto: Vec<bool> = (0..60).map(|_| r.random_bool(0.3)).collect();
        let members: Vec<VoxelizedSegment> = (0..8)
            .map(|i| {
                let vals = proto
                    .iter()
                    .map(|&b| if b != r.random_bool(0.08) { 1.0 } else { 0.0 })
                    .collect();
                VoxelizedSegment::binary(100 - i * 7, [5, 4, 3], vals).unwrap()
            })
            .collect();
        let got: Vec<u64> = hamming_dedup(&members, th).iter().map(|m| m.segment_id).collect();
        let mut got_sorted = got.clone();
        got_sorted.sort_unstable();
        *bad.entry("hamming_dedup").or_default() += usize::from(got_sorted != dedup_oracle(&members, th));

        let d_same = r.random_range(0.5..2.0);
        let segs: Vec<Segment> = (0..r.random_range(2..25))
            .map(|i| {
                let c = Point::new(r.random_range(0.0..6.0), r.random_range(0.0..6.0), 0.0);
                let pts = vec![c, Point::new(c.x + 0.1, c.y, c.z), Point::new(c.x, c.y + 0.1, c.z)];
                Segment::new(i, pts, Point::new(50.0, 0.0, 0.0), r.random_range(0..6), "r").unwrap()
            })
            .collect();
        let cfg = PreprocessConfig {
            d_same,
            ..PreprocessConfig::default()
        };
        let got: Vec<Vec<u64>> = build_groups(&segs, &cfg)
            .iter()
            .map(|g| g.member_ids().to_vec())
            .collect();
        *bad.entry("build_groups").or_default() += usize::from(got != grouping_oracle(&segs, d_same));
    }

    // Strict threshold: two members exactly th_H = 50 apart are both kept.
    let a = VoxelizedSegment::binary(1, [10, 10, 1], vec![0.0; 100]).unwrap();
    let mut vals = vec![0.0; 100];
    vals[..50].fill(1.0);
    let b = VoxelizedSegment::binary(2, [10, 10, 1], vals.clone()).unwrap();
    vals[49] = 0.0;
    let c = VoxelizedSegment::binary(3, [10, 10, 1], vals).unwrap();
    let boundary_kept = hamming_dedup(&[a.clone(), b], 50).len() == 2;
    let below_dropped = hamming_dedup(&[a, c], 50).len() == 1;

    let mismatches: usize = bad.values().sum();
    let pass = mismatches == 0 && boundary_kept && below_dropped;
    report(
        4,
        "preprocessing oracles",
        pass,
        format!("mismatches {bad:?}, distance-50 pair kept {boundary_kept}, distance-49 dropped {below_dropped}"),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 5

const AUC_TOL: f64 = 1e-9;

fn mann_whitney(scored: &[(f64, u8)]) -> f64 {
    let pos: Vec<f64> = scored.iter().filter(|s| s.1 == 1).map(|s| s.0).collect();
    let neg: Vec<f64> = scored.iter().filter(|s| s.1 == 0).map(|s| s.0).collect();
    let mut wins = 0.0;
    for p in &pos {
        for n in &neg {
            wins += if p > n {
                1.0
            } else if p == n {
                0.5
            } else {
                0.0
            };
        }
    }
    wins / (pos.len() * neg.len()) as f64
}

#[test]
fn criterion_05_retrieval_and_roc_oracles() {
    let mut nn_bad = 0;
    let mut auc_worst: f64 = 0.0;
    for seed in 0..50u64 {
        let mut r = rng::seeded(seed);
        let n = r.random_range(3..60);
        // Coarse values make equal distances common.
        let descs: Vec<Descriptor> = (0..n)
            .map(|_| Descriptor((0..3).map(|_| r.random_range(-2..3) as f64).collect()))
            .collect();
        let ids: Vec<u64> = (0..n as u64).map(|i| i * 3 + 1).collect();
        let groups: Vec<u64> = (0..n).map(|_| r.random_range(0..5)).collect();
        let index = DescriptorIndex::from_parts(&ids, &groups, &descs).unwrap();
        for q in 0..n {
            let got = nearest_neighbor_match(&index, &descs[q], Some(ids[q])).unwrap();
            let mut best: Option<(f64, u64)> = None;
            for j in 0..n {
                if j == q {
                    continue;
                }
                let d: f64 = descs[q].0.iter().zip(&descs[j].0).map(|(a, b)| (a - b) * (a - b)).sum();
                if best.is_none_or(|(bd, bi)| d < bd || (d == bd && ids[j] < bi)) {
                    best = Some((d, ids[j]));
                }
            }
            let (bd, bi) = best.unwrap();
            nn_bad += usize::from(got.0 != bi || (got.1 - bd.sqrt()).abs() > 1e-12);
        }

        let m = r.random_range(2..200);
        let mut scored: Vec<(f64, u8)> = (0..m)
            .map(|_| ((r.random_range(0..20) as f64) / 7.0, r.random_range(0..2)))
            .collect();
        scored.push((0.5, 0));
        scored.push((0.5, 1));
        let auc = roc_auc(&scored).unwrap().auc;
        auc_worst = auc_worst.max((auc - mann_whitney(&scored)).abs());
    }
    let pass = nn_bad == 0 && auc_worst <= AUC_TOL;
    report(
        5,
        "retrieval and ROC oracles",
        pass,
        format!("{nn_bad} NN mismatches, max AUC error {auc_worst:.1e}"),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 6

// Frozen after one calibration run on the default synthetic dataset.
const ORDERING_SEEDS: [u64; 3] = [0, 1, 2];
const ORDERING_BUDGET_S: f64 = 30.0 * 60.0;
const CANDIDATE_RATIO: f64 = 2.0;
const AUC_MARGIN: f64 = 0.05;
const CHANCE_RATIO: f64 = 5.0;

fn ordering_config() -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    cfg.preprocess.grid = VoxelGridSpec {
        dims: [24, 24, 14],
        voxel_size: 0.25,
    };
    cfg.preprocess.augmentation_angles = [-10.0f64, 0.0, 10.0].iter().map(|d| d.to_radians()).collect();
    cfg.preprocess.normalization_epsilon = 0.1;
    cfg.preset = Preset::Small;
    cfg
}

/// Per-method settings: epochs split the time budget, and the contrastive
/// run needs a margin on the scale of untrained descriptor distances.
fn method_config(base: &PipelineConfig, method: Method, seed: u64) -> PipelineConfig {
    let mut cfg = base.clone();
    cfg.sgd.seed = seed;
    match method {
        Method::Group => cfg.sgd.epochs = 20,
        Method::Siamese => cfg.sgd.epochs = 12,
        Method::Contrastive => {
            cfg.sgd.epochs = 8;
            cfg.sgd.learning_rate = 3e-4;
            cfg.contrastive.margin = 100.0;
            cfg.contrastive.mining.k_hard = 1000;
            cfg.contrastive.random_positives = 500;
        }
        Method::Eigen => {}
    }
    cfg
}

/// Expected candidate-match accuracy of a uniformly random neighbor.
fn chance_accuracy(test: &SampleSet) -> f64 {
    let groups = test.group_ids();
    let n = groups.len();
    let mut size = BTreeMap::<u64, usize>::new();
    for g in &groups {
        *size.entry(*g).or_default() += 1;
    }
    let eligible: Vec<f64> = groups
        .iter()
        .map(|g| size[g])
        .filter(|&s| s > 1)
        .map(|s| (s - 1) as f64 / (n - 1) as f64)
        .collect();
    eligible.iter().sum::<f64>() / eligible.len() as f64
}

#[test]
#[ignore = "about 20 minutes of CPU; run with `cargo test --release -p segdesc --test acceptance -- --ignored`"]
fn criterion_06_ordering_reproduction() {
    let started = Instant::now();
    let exec = Execution::Parallel;
    let dir = tempfile::tempdir().unwrap();
    let cfg = ordering_config();
    let data_dir = dir.path().join("data");
    pipeline::generate(&SyntheticSpec::default(), &data_dir, exec).unwrap();
    let dataset = data_dir.join(pipeline::SEGMENTS_FILE);
    let records = segdesc::dataset::read_dataset(&dataset).unwrap();
    let prep = pipeline::preprocess_records(&records, &cfg, exec).unwrap();
    let prep_dir = dir.path().join("prep");
    pipeline::write_preprocessed(&prep_dir, &dataset, &cfg, &prep).unwrap();
    let data = PreparedData::open(&prep_dir).unwrap();

    let eigen = pipeline::evaluate_eigen(&data, &cfg, exec).unwrap();
    let chance = chance_accuracy(&data.load(segdesc::dataset::Split::Test, exec).unwrap());
    let c_ok = eigen.candidate.accuracy >= CHANCE_RATIO * chance;
    println!(
        "  eigen: candidate {:.4} (chance {chance:.4}), auc {:.4}",
        eigen.candidate.accuracy, eigen.roc.auc
    );

    let (mut a_ok, mut b_ok) = (true, true);
    for seed in ORDERING_SEEDS {
        for method in Method::LEARNED {
            let mcfg = method_config(&cfg, method, seed);
            let (ckpt, _) = pipeline::train_method(method, &mcfg, &data, exec).unwrap();
            let model = pipeline::LoadedModel::from_checkpoint(&ckpt).unwrap();
            let r = pipeline::evaluate_model(&model, &data, &mcfg, exec).unwrap();
            let ratio = r.candidate.accuracy / eigen.candidate.accuracy;
            let auc_gain = r.roc.auc - eigen.roc.auc;
            if method != Method::Siamese {
                a_ok &= ratio >= CANDIDATE_RATIO;
            }
            b_ok &= auc_gain >= AUC_MARGIN;
            println!(
                "  seed {seed} {method}: candidate {:.4} ({ratio:.2}x eigen), auc {:.4} ({auc_gain:+.4}), {:.0}s elapsed",
                r.candidate.accuracy,
                r.roc.auc,
                started.elapsed().as_secs_f64()
            );
        }
    }
    let secs = started.elapsed().as_secs_f64();
    let in_budget = secs < ORDERING_BUDGET_S;
    let pass = a_ok && b_ok && c_ok && in_budget;
    report(
        6,
        "ordering reproduction",
        pass,
        format!("(a) {a_ok}, (b) {b_ok}, (c) {c_ok}, {secs:.0}s of {ORDERING_BUDGET_S:.0}s"),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 7

const TINY: [usize; 3] = [14, 14, 14];

fn random_samples(groups: u64, members: u64, seed: u64) -> SampleSet {
    let grids = bench_batch(TINY, (groups * members) as usize, seed).unwrap();
    SampleSet::new(
        grids
            .into_iter()
            .enumerate()
            .map(|(i, grid)| Sample {
                sample_id: i as u64,
                segment_id: i as u64,
                group_id: i as u64 / members,
                grid,
            })
            .collect(),
    )
    .unwrap()
}

#[test]
fn criterion_07_siamese_weight_sharing() {
    let net = DescriptorNet::new(&NetConfig {
        preset: Preset::Small,
        grid_dims: TINY,
        descriptor_dim: 8,
        dropout: 0.3,
        seed: 5,
    })
    .unwrap();
    let data = random_samples(4, 4, 6);
    let pairs = sample_pairs(&data.groups(), 12, 7).unwrap();
    let cfg = SgdConfig {
        epochs: 2,
        batch_size: 4,
        ..SgdConfig::default()
    };
    let mut steps = 0;
    let mut shared = true;
    let mut changed = false;
    let initial: Vec<u64> = net.stack.param_values().map(f64::to_bits).collect();
    train_siamese(net, &data, &pairs, None, &cfg, Execution::Parallel, |m| {
        steps += 1;
        let (l, r) = (m.branch(Branch::Left), m.branch(Branch::Right));
        let lb: Vec<u64> = l.stack.param_values().map(f64::to_bits).collect();
        let rb: Vec<u64> = r.stack.param_values().map(f64::to_bits).collect();
        shared &= std::ptr::eq(l, r) && lb == rb;
        changed |= lb != initial;
    })
    .unwrap();
    let pass = shared && changed && steps == 2 * pairs.len().div_ceil(4);
    report(
        7,
        "Siamese weight sharing",
        pass,
        format!("{steps} optimizer steps checked"),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 8

#[test]
fn criterion_08_hard_mining_equivalence() {
    let mut bad = 0;
    for seed in 0..20u64 {
        let mut r = rng::seeded(seed);
        let n = 50;
        let descs: Vec<Descriptor> = (0..n)
            .map(|_| Descriptor((0..4).map(|_| r.random_range(-3..4) as f64 * 0.5).collect()))
            .collect();
        let mut ids: Vec<u64> = (0..n as u64).map(|i| i * 10 + seed).collect();
        ids.reverse();
        let groups: Vec<u64> = (0..n).map(|_| r.random_range(0..8)).collect();
        let k = r.random_range(1..200);
        let cfg = MiningConfig {
            k_hard: k,
            subsample_ratio: 0.5,
            seed,
        };
        let mined = mine_from_descriptors(&descs, &ids, &groups, &cfg, Execution::Parallel).unwrap();
        let (mut pos, mut neg) = (Vec::new(), Vec::new());
        for i in 0..n {
            for j in (i + 1)..n {
                let d: f64 = descs[i].0.iter().zip(&descs[j].0).map(|(a, b)| (a - b) * (a - b)).sum();
                let (a, b) = (ids[i].min(ids[j]), ids[i].max(ids[j]));
                if groups[i] == groups[j] {
                    pos.push((-d, a, b));
                } else {
                    neg.push((d, a, b));
                }
            }
        }
        let top = |mut v: Vec<(f64, u64, u64)>| -> Vec<(u64, u64)> {
            v.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
            v.into_iter().take(k).map(|(_, a, b)| (a, b)).collect()
        };
        let as_ids = |v: &[segdesc::models::LabeledPair]| v.iter().map(|p| (p.id_a, p.id_b)).collect::<Vec<_>>();
        bad += usize::from(as_ids(&mined.hard_positives) != top(pos) || as_ids(&mined.hard_negatives) != top(neg));
    }
    report(
        8,
        "hard-mining equivalence",
        bad == 0,
        format!("{bad} of 20 instances differ"),
    );
    assert_eq!(bad, 0);
}

// ---------------------------------------------------------------- 9

const THROUGHPUT_REPS: usize = 10;

#[test]
fn criterion_09_throughput_ordering() {
    let batch = bench_batch([38, 38, 18], 8, 0).unwrap();
    let rows = bench_presets(
        &[Preset::Default, Preset::Small],
        64,
        &batch,
        THROUGHPUT_REPS,
        Execution::Parallel,
    )
    .unwrap();
    let (default, small) = (rows[0].1.segments_per_second, rows[1].1.segments_per_second);
    let pass = small > default;
    report(
        9,
        "throughput ordering",
        pass,
        format!("small {small:.1} vs default {default:.1} segments/s, median of {THROUGHPUT_REPS}"),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 10

fn pipeline_csv(root: &std::path::Path, exec: Execution) -> Vec<u8> {
    let mut cfg = PipelineConfig::default();
    cfg.synthetic = SyntheticSpec {
        n_groups: 16,
        views_per_group: 5,
        seed: 42,
        ..SyntheticSpec::default()
    };
    cfg.preprocess.grid = VoxelGridSpec {
        dims: [16, 16, 14],
        voxel_size: 0.4,
    };
    cfg.preprocess.augmentation_angles = vec![-0.1, 0.0, 0.1];
    cfg.preprocess.normalization_epsilon = 0.1;
    cfg.preset = Preset::Small;
    cfg.descriptor_dim = 16;
    cfg.sgd.epochs = 3;
    cfg.sgd.batch_size = 8;
    cfg.min_group_size = 2;
    cfg.contrastive.initial_positives = 60;
    cfg.contrastive.mining.k_hard = 40;
    cfg.sgd.seed = 9;
    let data_dir = root.join("data");
    pipeline::generate(&cfg.synthetic, &data_dir, exec).unwrap();
    let records = segdesc::dataset::read_dataset(&data_dir.join(pipeline::SEGMENTS_FILE)).unwrap();
    let prep = pipeline::preprocess_records(&records, &cfg, exec).unwrap();
    let prep_dir = root.join("prep");
    pipeline::write_preprocessed(&prep_dir, &data_dir.join(pipeline::SEGMENTS_FILE), &cfg, &prep).unwrap();
    let data = PreparedData::open(&prep_dir).unwrap();
    let sets: Vec<_> = segdesc::dataset::Split::ALL
        .iter()
        .map(|&s| (s, data.load(s, exec).unwrap()))
        .collect();
    let refs: Vec<_> = sets.iter().map(|(s, set)| (*s, set)).collect();
    let mut out = Vec::new();
    for method in Method::LEARNED {
        let (ckpt, _) = pipeline::train_method(method, &cfg, &data, exec).unwrap();
        let path = root.join(format!("{method}.ckpt"));
        ckpt.save(&path).unwrap();
        let model = pipeline::LoadedModel::load(&path).unwrap();
        out.extend(pipeline::descriptors_csv(&model.net, &refs, exec).unwrap().into_bytes());
    }
    out
}

#[test]
fn criterion_10_determinism() {
    let (a, b, c) = (
        tempfile::tempdir().unwrap(),
        tempfile::tempdir().unwrap(),
        tempfile::tempdir().unwrap(),
    );
    let first = pipeline_csv(a.path(), Execution::Parallel);
    let second = pipeline_csv(b.path(), Execution::Parallel);
    let sequential = pipeline_csv(c.path(), Execution::Sequential);
    let pass = !first.is_empty() && first == second && first == sequential;
    report(
        10,
        "determinism",
        pass,
        format!(
            "{} bytes of descriptors over three learned methods, repeated and sequential",
            first.len()
        ),
    );
    assert!(pass);
}
