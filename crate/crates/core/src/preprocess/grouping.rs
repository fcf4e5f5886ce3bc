use super::PreprocessConfig;
use crate::geometry::{Point, Segment, SegmentGroup};

/// Chains segments across frames into groups.
///
/// Frames are visited in ascending `frame_index` (input order within a
/// frame). A segment joins the lowest-id group that has a member from a
/// strictly earlier frame whose centroid is closer than `d_same`; otherwise
/// it founds a new group. Group ids count up from zero.
pub fn build_groups(segments: &[Segment], cfg: &PreprocessConfig) -> Vec<SegmentGroup> {
    let mut order: Vec<usize> = (0..segments.len()).collect();
    order.sort_by_key(|&i| segments[i].frame_index);

    let mut groups: Vec<SegmentGroup> = Vec::new();
    // (centroid, frame) of every member, per group
    let mut members: Vec<Vec<(Point, u32)>> = Vec::new();
    for i in order {
        let seg = &segments[i];
        let c = seg.centroid();
        let joined = members.iter().position(|ms| {
            ms.iter()
                .any(|(mc, f)| *f < seg.frame_index && mc.distance(&c) < cfg.d_same)
        });
        match joined {
            Some(g) => {
                groups[g].push(seg.segment_id);
                members[g].push((c, seg.frame_index));
            }
            None => {
                let id = groups.len() as u64;
                groups.push(SegmentGroup::new(id, vec![seg.segment_id]).expect("nonempty"));
                members.push(vec![(c, seg.frame_index)]);
            }
        }
    }
    groups
}
