//! Eigenvalue shape features of a segment's point covariance.

use crate::error::{Error, Result};
use crate::geometry::{centroid, Segment};
use crate::models::Descriptor;
use crate::par::{self, Execution};

pub const FEATURE_NAMES: [&str; 7] = [
    "linearity",
    "planarity",
    "scattering",
    "omnivariance",
    "anisotropy",
    "eigenentropy",
    "change_of_curvature",
];

/// Eigenvalues below this fraction of the largest are treated as zero.
const EIGEN_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EigenDescriptor {
    /// Features in [`FEATURE_NAMES`] order.
    pub values: [f64; 7],
    /// Raw covariance eigenvalues, descending.
    pub eigenvalues: [f64; 3],
}

impl EigenDescriptor {
    pub fn to_descriptor(&self) -> Descriptor {
        Descriptor(self.values.to_vec())
    }
}

/// Population covariance of the points about their centroid, row-major.
pub fn covariance(points: &[crate::geometry::Point]) -> [[f64; 3]; 3] {
    let c = centroid(points);
    let mut m = [[0.0; 3]; 3];
    for p in points {
        let d = [p.x - c.x, p.y - c.y, p.z - c.z];
        for i in 0..3 {
            for j in i..3 {
                m[i][j] += d[i] * d[j];
            }
        }
    }
    let n = points.len() as f64;
    for i in 0..3 {
        for j in i..3 {
            m[i][j] /= n;
            m[j][i] = m[i][j];
        }
    }
    m
}

/// Closed-form eigenvalues of a symmetric 3x3 matrix, descending.
fn analytic(a: &[[f64; 3]; 3]) -> [f64; 3] {
    let p1 = a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2];
    let q = (a[0][0] + a[1][1] + a[2][2]) / 3.0;
    if p1 == 0.0 {
        let mut e = [a[0][0], a[1][1], a[2][2]];
        e.sort_by(|x, y| y.total_cmp(x));
        return e;
    }
    let p2 = (a[0][0] - q).powi(2) + (a[1][1] - q).powi(2) + (a[2][2] - q).powi(2) + 2.0 * p1;
    let p = (p2 / 6.0).sqrt();
    let mut b = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            b[i][j] = (a[i][j] - if i == j { q } else { 0.0 }) / p;
        }
    }
    let det = b[0][0] * (b[1][1] * b[2][2] - b[1][2] * b[2][1]) - b[0][1] * (b[1][0] * b[2][2] - b[1][2] * b[2][0])
        + b[0][2] * (b[1][0] * b[2][1] - b[1][1] * b[2][0]);
    let phi = (det / 2.0).clamp(-1.0, 1.0).acos() / 3.0;
    let l1 = q + 2.0 * p * phi.cos();
    let l3 = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
    let l2 = 3.0 * q - l1 - l3;
    let mut e = [l1, l2, l3];
    e.sort_by(|x, y| y.total_cmp(x));
    e
}

/// Cyclic Jacobi rotations until the off-diagonal mass is negligible.
fn jacobi(a: &[[f64; 3]; 3]) -> [f64; 3] {
    let mut m = *a;
    let scale: f64 = m.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();
    for _ in 0..64 {
        let off = m[0][1].powi(2) + m[0][2].powi(2) + m[1][2].powi(2);
        if off.sqrt() <= EIGEN_TOL * scale {
            break;
        }
        for (p, q) in [(0, 1), (0, 2), (1, 2)] {
            if m[p][q] == 0.0 {
                continue;
            }
            let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
            let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
            let t = if theta == 0.0 { 1.0 } else { t };
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;
            for k in 0..3 {
                let (mkp, mkq) = (m[k][p], m[k][q]);
                m[k][p] = c * mkp - s * mkq;
                m[k][q] = s * mkp + c * mkq;
            }
            for k in 0..3 {
                let (mpk, mqk) = (m[p][k], m[q][k]);
                m[p][k] = c * mpk - s * mqk;
                m[q][k] = s * mpk + c * mqk;
            }
        }
    }
    let mut e = [m[0][0], m[1][1], m[2][2]];
    e.sort_by(|x, y| y.total_cmp(x));
    e
}

/// Eigenvalues of a symmetric 3x3 matrix, descending. Falls back to
/// Jacobi when the closed form disagrees with the trace and Frobenius
/// invariants.
pub fn symmetric_eigenvalues(a: &[[f64; 3]; 3]) -> [f64; 3] {
    let e = analytic(a);
    let trace = a[0][0] + a[1][1] + a[2][2];
    let frob: f64 = a.iter().flatten().map(|x| x * x).sum();
    let scale = frob.sqrt().max(f64::MIN_POSITIVE);
    let ok = e.iter().all(|v| v.is_finite())
        && (e.iter().sum::<f64>() - trace).abs() <= 1e-10 * scale
        && (e.iter().map(|v| v * v).sum::<f64>() - frob).abs() <= 1e-10 * frob.max(f64::MIN_POSITIVE);
    if ok {
        e
    } else {
        jacobi(a)
    }
}

pub fn eigen_descriptor(segment: &Segment) -> Result<EigenDescriptor> {
    let pts = &segment.points;
    if pts.len() < 4 {
        return Err(Error::DegenerateSegment(format!(
            "segment {} has {} points, need at least 4",
            segment.segment_id,
            pts.len()
        )));
    }
    let cov = covariance(pts);
    let trace = cov[0][0] + cov[1][1] + cov[2][2];
    let mut raw = symmetric_eigenvalues(&cov);
    // Rounding in the centroid can leave a tiny residue for coincident points.
    let residue = 1e-24 * (1.0 + segment.centroid().norm_sq());
    if !(trace > residue) || !(raw[0] > 0.0) {
        return Err(Error::DegenerateSegment(format!(
            "segment {} has zero variance",
            segment.segment_id
        )));
    }
    let floor = EIGEN_TOL * raw[0];
    for v in &mut raw[1..] {
        if *v < floor {
            *v = 0.0;
        }
    }
    let sum: f64 = raw.iter().sum();
    let [l1, l2, l3] = raw.map(|v| v / sum);
    let entropy = -[l1, l2, l3].iter().map(|l| l * (l + 1e-12).ln()).sum::<f64>();
    Ok(EigenDescriptor {
        values: [
            (l1 - l2) / l1,
            (l2 - l3) / l1,
            l3 / l1,
            (l1 * l2 * l3).cbrt(),
            (l1 - l3) / l1,
            entropy,
            l3 / (l1 + l2 + l3),
        ],
        eigenvalues: raw,
    })
}

pub fn eigen_descriptors(segments: &[Segment], exec: Execution) -> Result<Vec<EigenDescriptor>> {
    par::map_slice(exec, segments, eigen_descriptor).into_iter().collect()
}
