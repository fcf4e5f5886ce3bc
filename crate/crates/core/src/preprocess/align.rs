use crate::error::{Error, Result};
use crate::geometry::{RigidZRotation, Segment};

const MIN_HORIZONTAL_OFFSET: f64 = 1e-6;

/// Rotates a segment about the vertical axis through its centroid so that
/// the observer ends up on the ray `y = c_y, x > c_x`.
pub fn align_segment(segment: &Segment) -> Result<Segment> {
    let c = segment.centroid();
    let dx = segment.observer_position.x - c.x;
    let dy = segment.observer_position.y - c.y;
    if dx.hypot(dy) <= MIN_HORIZONTAL_OFFSET {
        return Err(Error::AlignmentUndefined {
            segment_id: segment.segment_id,
        });
    }
    let theta = dy.atan2(dx);
    let mut aligned = segment.rotated(RigidZRotation::new(-theta), c);
    // The observer's angle is exactly zero after alignment; rounding can leave
    // a residue of order 1e-15 in y.
    aligned.observer_position.y = c.y;
    Ok(aligned)
}

/// One rotated copy per angle, pivoting about the centroid.
pub fn augment_rotations(segment: &Segment, angles: &[f64]) -> Vec<Segment> {
    let c = segment.centroid();
    angles
        .iter()
        .map(|&a| {
            if a == 0.0 {
                segment.clone()
            } else {
                segment.rotated(RigidZRotation::new(a), c)
            }
        })
        .collect()
}
