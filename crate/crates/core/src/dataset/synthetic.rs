use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use super::config::KeyValues;
use super::records::SegmentRecord;
use crate::error::{Error, Result};
use crate::geometry::{Point, Segment};
use crate::par::{self, Execution};
use crate::rng::{self, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Primitive {
    Box,
    Cylinder,
    LShape,
    Wall,
}

pub const PRIMITIVES: [Primitive; 4] = [Primitive::Box, Primitive::Cylinder, Primitive::LShape, Primitive::Wall];

/// Parameters of the synthetic object scenes.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub n_groups: usize,
    pub views_per_group: usize,
    /// Relative weights of box, cylinder, L-shape and wall.
    pub primitive_mix: [f64; 4],
    /// Footprint side lengths (m).
    pub size_range: (f64, f64),
    pub height_range: (f64, f64),
    /// Fraction of the visible angular extent removed per view, in [0, 0.6].
    pub occlusion: f64,
    /// Arc of viewpoint azimuths around each object (degrees).
    pub view_arc_deg: f64,
    /// Horizontal observer distance (m).
    pub view_distance: (f64, f64),
    pub sensor_height: f64,
    /// Surface sampling density (points per square meter).
    pub point_density: f64,
    pub noise_sigma: f64,
    /// Views with fewer retained points are dropped.
    pub min_points: usize,
    /// Distance between neighboring objects (m).
    pub spacing: f64,
    pub run_id: String,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_groups: 300,
            views_per_group: 8,
            primitive_mix: [1.0; 4],
            size_range: (1.0, 4.0),
            height_range: (0.8, 3.0),
            occlusion: 0.3,
            view_arc_deg: 120.0,
            view_distance: (6.0, 14.0),
            sensor_height: 1.73,
            point_density: 50.0,
            noise_sigma: 0.02,
            min_points: 50,
            spacing: 40.0,
            run_id: "synthetic".into(),
            seed: 0,
        }
    }
}

fn range_ok(r: (f64, f64)) -> bool {
    r.0.is_finite() && r.1.is_finite() && r.0 > 0.0 && r.0 <= r.1
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |f: &str, r: &str| Err(Error::config(f, r));
        if self.n_groups == 0 {
            return bad("n_groups", "must be positive");
        }
        if self.views_per_group == 0 {
            return bad("views_per_group", "must be positive");
        }
        if self.primitive_mix.iter().any(|w| !(*w >= 0.0 && w.is_finite()))
            || self.primitive_mix.iter().sum::<f64>() <= 0.0
        {
            return bad("primitive_mix", "weights must be non-negative with a positive sum");
        }
        if !range_ok(self.size_range) {
            return bad("size_range", "need 0 < min <= max");
        }
        if !range_ok(self.height_range) {
            return bad("height_range", "need 0 < min <= max");
        }
        if !range_ok(self.view_distance) {
            return bad("view_distance", "need 0 < min <= max");
        }
        if !(0.0..=0.6).contains(&self.occlusion) {
            return bad("occlusion", "must lie in [0, 0.6]");
        }
        if !(0.0..=360.0).contains(&self.view_arc_deg) {
            return bad("view_arc_deg", "must lie in [0, 360]");
        }
        if !(self.point_density > 0.0 && self.point_density.is_finite()) {
            return bad("point_density", "must be positive");
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad("noise_sigma", "must be non-negative");
        }
        if !(self.sensor_height.is_finite()) {
            return bad("sensor_height", "must be finite");
        }
        if !(self.spacing >= 3.0 * self.size_range.1 && self.spacing.is_finite()) {
            return bad("spacing", "must be at least three times the largest footprint size");
        }
        if self.run_id.is_empty() || self.run_id.contains(['\t', '\n', '\r']) {
            return bad("run_id", "must be nonempty without tabs or newlines");
        }
        Ok(())
    }

    /// Overrides fields from `synthetic.*` keys.
    pub fn apply(&mut self, kv: &KeyValues) -> Result<()> {
        kv.set("synthetic.n_groups", &mut self.n_groups)?;
        kv.set("synthetic.views_per_group", &mut self.views_per_group)?;
        if let Some(m) = kv.list::<f64>("synthetic.primitive_mix")? {
            self.primitive_mix = m
                .try_into()
                .map_err(|_| Error::config("synthetic.primitive_mix", "need 4 weights: box,cylinder,lshape,wall"))?;
        }
        let pair = |key: &str, target: &mut (f64, f64)| -> Result<()> {
            if let Some(v) = kv.list::<f64>(key)? {
                let [a, b]: [f64; 2] = v.try_into().map_err(|_| Error::config(key, "need min,max"))?;
                *target = (a, b);
            }
            Ok(())
        };
        pair("synthetic.size_range", &mut self.size_range)?;
        pair("synthetic.height_range", &mut self.height_range)?;
        pair("synthetic.view_distance", &mut self.view_distance)?;
        kv.set("synthetic.occlusion", &mut self.occlusion)?;
        kv.set("synthetic.view_arc_deg", &mut self.view_arc_deg)?;
        kv.set("synthetic.sensor_height", &mut self.sensor_height)?;
        kv.set("synthetic.point_density", &mut self.point_density)?;
        kv.set("synthetic.noise_sigma", &mut self.noise_sigma)?;
        kv.set("synthetic.min_points", &mut self.min_points)?;
        kv.set("synthetic.spacing", &mut self.spacing)?;
        kv.set("synthetic.run_id", &mut self.run_id)?;
        kv.set("synthetic.seed", &mut self.seed)?;
        self.validate()
    }
}

/// A surface sample with its outward normal.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Surfel {
    pub p: Point,
    pub n: Point,
}

fn count_for(area: f64, density: f64) -> usize {
    (area * density).round().max(1.0) as usize
}

/// Samples the five exposed faces of an axis-aligned box `[x0,x1]x[y0,y1]x[0,h]`.
fn box_surface(r: &mut Rng, x: (f64, f64), y: (f64, f64), h: f64, density: f64, out: &mut Vec<Surfel>) {
    let (w, d) = (x.1 - x.0, y.1 - y.0);
    let faces: [(f64, Point); 5] = [
        (d * h, Point::new(-1.0, 0.0, 0.0)),
        (d * h, Point::new(1.0, 0.0, 0.0)),
        (w * h, Point::new(0.0, -1.0, 0.0)),
        (w * h, Point::new(0.0, 1.0, 0.0)),
        (w * d, Point::new(0.0, 0.0, 1.0)),
    ];
    for (f, &(area, n)) in faces.iter().enumerate() {
        for _ in 0..count_for(area, density) {
            let (u, v, t) = (
                r.random_range(x.0..=x.1),
                r.random_range(y.0..=y.1),
                r.random_range(0.0..=h),
            );
            let p = match f {
                0 => Point::new(x.0, v, t),
                1 => Point::new(x.1, v, t),
                2 => Point::new(u, y.0, t),
                3 => Point::new(u, y.1, t),
                _ => Point::new(u, v, h),
            };
            out.push(Surfel { p, n });
        }
    }
}

/// Object surface in its local frame (footprint centered near the origin,
/// base at z = 0).
pub(crate) fn primitive_surface(r: &mut Rng, kind: Primitive, spec: &SyntheticSpec) -> Vec<Surfel> {
    let (lo, hi) = spec.size_range;
    let h = r.random_range(spec.height_range.0..=spec.height_range.1);
    let rho = spec.point_density;
    let mut out = Vec::new();
    match kind {
        Primitive::Box => {
            let (a, b) = (r.random_range(lo..=hi), r.random_range(lo..=hi));
            box_surface(r, (-a / 2.0, a / 2.0), (-b / 2.0, b / 2.0), h, rho, &mut out);
        }
        Primitive::Cylinder => {
            let rad = r.random_range(lo..=hi) / 2.0;
            let tau = std::f64::consts::TAU;
            for _ in 0..count_for(tau * rad * h, rho) {
                let (t, z) = (r.random_range(0.0..tau), r.random_range(0.0..=h));
                let n = Point::new(t.cos(), t.sin(), 0.0);
                out.push(Surfel {
                    p: Point::new(rad * n.x, rad * n.y, z),
                    n,
                });
            }
            for _ in 0..count_for(tau / 2.0 * rad * rad, rho) {
                let (t, s) = (r.random_range(0.0..tau), rad * r.random::<f64>().sqrt());
                out.push(Surfel {
                    p: Point::new(s * t.cos(), s * t.sin(), h),
                    n: Point::new(0.0, 0.0, 1.0),
                });
            }
        }
        Primitive::LShape => {
            let (a, b) = (r.random_range(lo..=hi), r.random_range(lo..=hi));
            let t = r.random_range(0.3..=0.8f64).min(a / 2.0).min(b / 2.0);
            let (x0, y0) = (-a / 2.0, -b / 2.0);
            let mut arm_a = Vec::new();
            let mut arm_b = Vec::new();
            box_surface(r, (x0, x0 + a), (y0, y0 + t), h, rho, &mut arm_a);
            box_surface(r, (x0, x0 + t), (y0, y0 + b), h, rho, &mut arm_b);
            // Drop samples buried inside the other arm.
            let inside =
                |p: Point, x: (f64, f64), y: (f64, f64)| p.x > x.0 && p.x < x.1 && p.y > y.0 && p.y < y.1 && p.z < h;
            out.extend(arm_a.into_iter().filter(|s| !inside(s.p, (x0, x0 + t), (y0, y0 + b))));
            out.extend(arm_b.into_iter().filter(|s| !inside(s.p, (x0, x0 + a), (y0, y0 + t))));
        }
        Primitive::Wall => {
            let a = r.random_range(lo..=hi) * 1.5;
            box_surface(r, (-a / 2.0, a / 2.0), (-0.1, 0.1), h, rho, &mut out);
        }
    }
    out
}

/// Azimuth of `p` seen from `o`, unwrapped around the direction `dir`.
fn azimuth(o: Point, p: Point, dir: f64) -> f64 {
    let a = (p.y - o.y).atan2(p.x - o.x) - dir;
    (a + std::f64::consts::PI).rem_euclid(std::f64::consts::TAU) - std::f64::consts::PI
}

/// Keeps the observer-facing surfels, then removes a contiguous azimuth
/// sector covering `occlusion` of their angular extent, starting at
/// `start` in [0, 1] of the free range.
pub(crate) fn visible(surfels: &[Surfel], observer: Point, occlusion: f64, start: f64) -> Vec<Point> {
    let facing: Vec<Point> = surfels
        .iter()
        .filter(|s| {
            let v = observer - s.p;
            s.n.x * v.x + s.n.y * v.y + s.n.z * v.z > 0.0
        })
        .map(|s| s.p)
        .collect();
    if facing.is_empty() || occlusion == 0.0 {
        return facing;
    }
    let c = crate::geometry::centroid(&facing);
    let dir = (c.y - observer.y).atan2(c.x - observer.x);
    let az: Vec<f64> = facing.iter().map(|&p| azimuth(observer, p, dir)).collect();
    let (lo, hi) = az
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &a| (l.min(a), h.max(a)));
    let width = (hi - lo) * occlusion;
    let s0 = lo + start * (hi - lo - width);
    facing
        .into_iter()
        .zip(az)
        .filter(|(_, a)| !(*a >= s0 && *a < s0 + width))
        .map(|(p, _)| p)
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticDataset {
    pub records: Vec<SegmentRecord>,
    pub primitives: Vec<Primitive>,
    /// Views dropped for having fewer than `min_points` points.
    pub dropped_views: usize,
}

fn pick(r: &mut Rng, mix: &[f64; 4]) -> Primitive {
    let total: f64 = mix.iter().sum();
    let mut u = r.random_range(0.0..total);
    for (k, w) in mix.iter().enumerate() {
        if u < *w {
            return PRIMITIVES[k];
        }
        u -= w;
    }
    PRIMITIVES[mix.iter().rposition(|w| *w > 0.0).unwrap_or(0)]
}

/// One object per group, placed on a square lattice, observed from
/// `views_per_group` viewpoints sweeping an arc. View `v` is frame `v`.
pub fn generate_synthetic(spec: &SyntheticSpec, exec: Execution) -> Result<SyntheticDataset> {
    spec.validate()?;
    let side = (spec.n_groups as f64).sqrt().ceil() as usize;
    let noise = Normal::new(0.0, spec.noise_sigma).map_err(|e| Error::config("noise_sigma", e.to_string()))?;
    let per_group = par::map_range(exec, spec.n_groups, |g| {
        let mut r = rng::stream(spec.seed, &[g as u64]);
        let kind = pick(&mut r, &spec.primitive_mix);
        let local = primitive_surface(&mut r, kind, spec);
        let yaw: f64 = r.random_range(0.0..std::f64::consts::TAU);
        let base = Point::new((g % side) as f64 * spec.spacing, (g / side) as f64 * spec.spacing, 0.0);
        let (cy, sy) = (yaw.cos(), yaw.sin());
        let world: Vec<Surfel> = local
            .iter()
            .map(|s| Surfel {
                p: Point::new(
                    base.x + cy * s.p.x - sy * s.p.y,
                    base.y + sy * s.p.x + cy * s.p.y,
                    s.p.z,
                ),
                n: Point::new(cy * s.n.x - sy * s.n.y, sy * s.n.x + cy * s.n.y, s.n.z),
            })
            .collect();
        let heading: f64 = r.random_range(0.0..std::f64::consts::TAU);
        let mut views = Vec::new();
        let mut dropped = 0;
        for v in 0..spec.views_per_group {
            let mut vr = rng::stream(spec.seed, &[g as u64, v as u64 + 1]);
            let frac = if spec.views_per_group > 1 {
                v as f64 / (spec.views_per_group - 1) as f64 - 0.5
            } else {
                0.0
            };
            let alpha = heading + frac * spec.view_arc_deg.to_radians();
            let dist = vr.random_range(spec.view_distance.0..=spec.view_distance.1);
            let observer = Point::new(
                base.x + dist * alpha.cos(),
                base.y + dist * alpha.sin(),
                spec.sensor_height,
            );
            let start: f64 = vr.random();
            let pts: Vec<Point> = visible(&world, observer, spec.occlusion, start)
                .into_iter()
                .map(|p| {
                    Point::new(
                        p.x + noise.sample(&mut vr),
                        p.y + noise.sample(&mut vr),
                        p.z + noise.sample(&mut vr),
                    )
                })
                .collect();
            if pts.len() < spec.min_points.max(1) {
                dropped += 1;
                continue;
            }
            let id = (g * spec.views_per_group + v) as u64;
            views.push(SegmentRecord {
                segment: Segment::new(id, pts, observer, v as u32, spec.run_id.as_str())?,
                group_id: g as u64,
            });
        }
        Ok::<_, Error>((kind, views, dropped))
    });
    let mut out = SyntheticDataset {
        records: Vec::new(),
        primitives: Vec::with_capacity(spec.n_groups),
        dropped_views: 0,
    };
    for g in per_group {
        let (kind, views, dropped) = g?;
        out.primitives.push(kind);
        out.records.extend(views);
        out.dropped_views += dropped;
    }
    // Frame-major order, as a sensor log would deliver it.
    out.records
        .sort_by_key(|r| (r.segment.frame_index, r.segment.segment_id));
    Ok(out)
}
