use std::f64::consts::PI;

use rand::Rng;

use super::DomainProfile;
use crate::cloud::{Point, PointCloud};
use crate::geometry::{from_object_frame, to_object_frame, Box3D};

/// Hit points are pulled this far inside the struck box so that containment
/// survives f32 storage and 6-decimal labels.
pub const SURFACE_INSET: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HitTarget {
    Ground,
    Object(usize),
    Backdrop,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayHit {
    pub point: [f64; 3],
    pub range: f64,
    pub target: HitTarget,
}

pub fn direction(elevation: f64, azimuth: f64) -> [f64; 3] {
    let (se, ce) = elevation.sin_cos();
    let (sa, ca) = azimuth.sin_cos();
    [ce * ca, ce * sa, se]
}

/// Entry distance of the ray into `b`, or `None` if it misses or starts inside.
fn slab_entry(origin: [f64; 3], dir: [f64; 3], b: &Box3D) -> Option<f64> {
    let o = to_object_frame(origin, b);
    let (s, c) = b.yaw.sin_cos();
    let d = [dir[0] * c + dir[1] * s, -dir[0] * s + dir[1] * c, dir[2]];
    let half = [0.5 * b.l, 0.5 * b.w, 0.5 * b.h];
    let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
    for a in 0..3 {
        if d[a].abs() < 1e-15 {
            if o[a].abs() > half[a] {
                return None;
            }
            continue;
        }
        let ta = (-half[a] - o[a]) / d[a];
        let tb = (half[a] - o[a]) / d[a];
        t0 = t0.max(ta.min(tb));
        t1 = t1.min(ta.max(tb));
    }
    (t1 >= t0 && t0 > 0.0).then_some(t0)
}

fn inset_hit(origin: [f64; 3], dir: [f64; 3], t: f64, b: &Box3D) -> [f64; 3] {
    let p = [origin[0] + t * dir[0], origin[1] + t * dir[1], origin[2] + t * dir[2]];
    let q = to_object_frame(p, b);
    let half = [0.5 * b.l, 0.5 * b.w, 0.5 * b.h];
    let q = [0, 1, 2].map(|a| {
        let lim = (half[a] - SURFACE_INSET).max(0.0);
        q[a].clamp(-lim, lim)
    });
    from_object_frame(q, b)
}

/// Nearest intersection of the ray with the boxes or the ground plane
/// `z = ground_z`, within `max_range`.
pub fn cast_ray(
    origin: [f64; 3],
    elevation: f64,
    azimuth: f64,
    ground_z: f64,
    boxes: &[Box3D],
    max_range: f64,
) -> Option<RayHit> {
    let idx: Vec<usize> = (0..boxes.len()).collect();
    cast_ray_among(origin, direction(elevation, azimuth), ground_z, boxes, &idx, None, max_range)
}

fn cast_ray_among(
    origin: [f64; 3],
    dir: [f64; 3],
    ground_z: f64,
    boxes: &[Box3D],
    candidates: &[usize],
    backdrop: Option<f64>,
    max_range: f64,
) -> Option<RayHit> {
    let mut best: Option<(f64, HitTarget)> = None;
    if dir[2] < 0.0 {
        let t = (ground_z - origin[2]) / dir[2];
        if t > 0.0 {
            best = Some((t, HitTarget::Ground));
        }
    }
    // the sensor sits on the wall's axis
    if let Some(r) = backdrop {
        let t = r / dir[0].hypot(dir[1]);
        if best.is_none_or(|(bt, _)| t < bt) {
            best = Some((t, HitTarget::Backdrop));
        }
    }
    for &k in candidates {
        if let Some(t) = slab_entry(origin, dir, &boxes[k]) {
            if best.is_none_or(|(bt, _)| t < bt) {
                best = Some((t, HitTarget::Object(k)));
            }
        }
    }
    let (t, target) = best?;
    if t > max_range {
        return None;
    }
    let point = match target {
        HitTarget::Ground => [origin[0] + t * dir[0], origin[1] + t * dir[1], ground_z],
        HitTarget::Object(k) => inset_hit(origin, dir, t, &boxes[k]),
        HitTarget::Backdrop => [origin[0] + t * dir[0], origin[1] + t * dir[1], origin[2] + t * dir[2]],
    };
    Some(RayHit { point, range: t, target })
}

fn wrap_angle(a: f64) -> f64 {
    (a + PI).rem_euclid(2.0 * PI) - PI
}

/// Casts the full elevation × azimuth fan of `profile` from the sensor at the
/// origin. Returns the scan (points quantized to f32) and the number of hits
/// per box.
pub fn cast_scan(profile: &DomainProfile, boxes: &[Box3D], rng: &mut impl Rng) -> (PointCloud, Vec<usize>) {
    let origin = [0.0; 3];
    let ground_z = -profile.sensor_height;
    // angular window of each box as seen from the sensor
    let windows: Vec<(f64, f64)> = boxes
        .iter()
        .map(|b| {
            let dist = b.cx.hypot(b.cy);
            let r = b.bev_radius();
            let half = if dist <= r { PI } else { (r / dist).asin() + 1e-6 };
            (b.cy.atan2(b.cx), half)
        })
        .collect();
    let elevations: Vec<f64> = (0..profile.n_layers).map(|r| profile.elevation(r)).collect();
    let columns = profile.azimuth_columns();
    let step = 2.0 * PI / columns as f64;
    let mut points = Vec::new();
    let mut hits = vec![0usize; boxes.len()];
    let mut candidates = Vec::new();
    for col in 0..columns {
        let az = -PI + col as f64 * step;
        candidates.clear();
        candidates.extend(
            windows
                .iter()
                .enumerate()
                .filter(|(_, &(c, h))| wrap_angle(az - c).abs() <= h)
                .map(|(k, _)| k),
        );
        for (ring, &el) in elevations.iter().enumerate() {
            let dir = direction(el, az);
            let Some(hit) = cast_ray_among(origin, dir, ground_z, boxes, &candidates, profile.backdrop_range, profile.max_range) else {
                continue;
            };
            if let HitTarget::Object(k) = hit.target {
                hits[k] += 1;
            }
            let intensity: f32 = rng.random_range(0.0..1.0);
            points.push(Point {
                x: f64::from(hit.point[0] as f32),
                y: f64::from(hit.point[1] as f32),
                z: f64::from(hit.point[2] as f32),
                intensity,
                ring: ring as u16,
            });
        }
    }
    (PointCloud::new(points), hits)
}
