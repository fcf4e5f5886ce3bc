use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct RocPoint {
    /// Scores `>= threshold` are called matches. The first point uses
    /// `+inf`.
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RocCurve {
    /// From (0, 0) to (1, 1), non-decreasing in both rates.
    pub points: Vec<RocPoint>,
    pub auc: f64,
    pub scores: Vec<f64>,
    pub labels: Vec<u8>,
}

/// ROC curve over every distinct score, with tied scores sharing a
/// threshold. The trapezoidal area then equals the Mann-Whitney statistic
/// with ties counted one half.
pub fn roc_auc(scored: &[(f64, u8)]) -> Result<RocCurve> {
    if let Some(&(s, _)) = scored.iter().find(|(s, _)| !s.is_finite()) {
        return Err(Error::config("scores", format!("non-finite score {s}")));
    }
    let pos = scored.iter().filter(|(_, y)| *y == 1).count();
    let neg = scored.len() - pos;
    if pos == 0 {
        return Err(Error::SingleLabel(0));
    }
    if neg == 0 {
        return Err(Error::SingleLabel(1));
    }
    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by(|&a, &b| scored[b].0.total_cmp(&scored[a].0));

    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut auc = 0.0;
    let mut i = 0;
    while i < order.len() {
        let t = scored[order[i]].0;
        let (tp0, fp0) = (tp, fp);
        while i < order.len() && scored[order[i]].0 == t {
            if scored[order[i]].1 == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        // Trapezoid in count units; normalized below.
        auc += (fp - fp0) as f64 * (tp + tp0) as f64 / 2.0;
        points.push(RocPoint {
            threshold: t,
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
        });
    }
    Ok(RocCurve {
        points,
        auc: auc / (pos as f64 * neg as f64),
        scores: scored.iter().map(|s| s.0).collect(),
        labels: scored.iter().map(|s| s.1).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;
    use rand::Rng as _;

    fn mann_whitney(scored: &[(f64, u8)]) -> f64 {
        let (mut s, mut n) = (0.0, 0.0);
        for a in scored.iter().filter(|x| x.1 == 1) {
            for b in scored.iter().filter(|x| x.1 == 0) {
                s += if a.0 > b.0 {
                    1.0
                } else if a.0 == b.0 {
                    0.5
                } else {
                    0.0
                };
                n += 1.0;
            }
        }
        s / n
    }

    #[test]
    fn separated_scores_give_one() {
        let r = roc_auc(&[(0.9, 1), (0.8, 1), (0.2, 0), (0.1, 0)]).unwrap();
        assert_eq!(r.auc, 1.0);
        assert_eq!((r.points[2].fpr, r.points[2].tpr), (0.0, 1.0));
    }

    #[test]
    fn equal_scores_give_one_half() {
        let r = roc_auc(&[(0.3, 1), (0.3, 0), (0.3, 0), (0.3, 1), (0.3, 1)]).unwrap();
        assert_eq!(r.auc, 0.5);
        assert_eq!(r.points.len(), 2);
    }

    #[test]
    fn single_label_is_rejected() {
        assert!(matches!(roc_auc(&[(0.1, 1), (0.2, 1)]), Err(Error::SingleLabel(1))));
        assert!(matches!(roc_auc(&[(0.1, 0)]), Err(Error::SingleLabel(0))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn area_is_mann_whitney_and_curve_is_monotone(seed in 0u64..100_000, n in 2usize..200, levels in 2u32..50) {
            let mut r = rng::seeded(seed);
            let mut scored: Vec<(f64, u8)> = (0..n)
                .map(|_| (r.random_range(0..levels) as f64 / levels as f64, r.random_range(0..2u8)))
                .collect();
            scored[0].1 = 0;
            scored[1].1 = 1;
            let roc = roc_auc(&scored).unwrap();
            prop_assert!((roc.auc - mann_whitney(&scored)).abs() < 1e-9);
            let (first, last) = (&roc.points[0], roc.points.last().unwrap());
            prop_assert_eq!((first.fpr, first.tpr, last.fpr, last.tpr), (0.0, 0.0, 1.0, 1.0));
            for w in roc.points.windows(2) {
                prop_assert!(w[1].fpr >= w[0].fpr && w[1].tpr >= w[0].tpr);
            }
        }
    }
}
