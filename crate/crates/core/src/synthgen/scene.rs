use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::raycast::cast_scan;
use super::DomainProfile;
use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::geometry::{iou_bev, Box3D, LabeledBox, ObjectClass};
use crate::io::canonical_label;
use crate::seed::stream_rng;

pub const MAX_PLACEMENT_ATTEMPTS: usize = 100;

/// Free space kept between the footprints of neighbouring objects, meters.
pub const PLACEMENT_GAP: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Source,
    Target,
}

impl Domain {
    /// Discriminator target: 0 for source, 1 for target.
    pub fn label(self) -> f64 {
        match self {
            Domain::Source => 0.0,
            Domain::Target => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub scan: PointCloud,
    pub labels: Vec<LabeledBox>,
    pub domain: Domain,
}

fn sample_class(profile: &DomainProfile, rng: &mut impl Rng) -> ObjectClass {
    let u: f64 = rng.random_range(0.0..1.0);
    let mut acc = 0.0;
    for (k, &p) in profile.class_mix.iter().enumerate() {
        acc += p;
        if u < acc {
            return ObjectClass::ALL[k];
        }
    }
    *ObjectClass::ALL.last().expect("non-empty")
}

fn sample_box(profile: &DomainProfile, class: ObjectClass, rng: &mut impl Rng) -> Result<LabeledBox> {
    let k = class.index();
    let (d0, d1) = profile.distance_range[k];
    let dist = rng.random_range(d0..d1);
    let half = profile.placement_half_angle.to_radians();
    let az = rng.random_range(-half..half);
    let mut size = [0.0; 3];
    for (d, s) in size.iter_mut().enumerate() {
        let (m, sd) = (profile.size_mean[k][d], profile.size_std[k][d]);
        let v = if sd > 0.0 {
            Normal::new(m, sd)
                .map_err(|e| Error::Generation(e.to_string()))?
                .sample(rng)
        } else {
            m
        };
        *s = v.clamp(m - 2.0 * sd, m + 2.0 * sd);
    }
    let lim = std::f64::consts::PI - 1e-6;
    let yaw = rng.random_range(-lim..lim);
    let center = [dist * az.cos(), dist * az.sin(), -profile.sensor_height + 0.5 * size[2]];
    let bbox = Box3D::new(center, size, yaw)?;
    Ok(canonical_label(&LabeledBox { bbox, class }))
}

fn inflated(b: &Box3D) -> Box3D {
    Box3D {
        l: b.l + 2.0 * PLACEMENT_GAP,
        w: b.w + 2.0 * PLACEMENT_GAP,
        ..*b
    }
}

fn clear_of(candidate: &Box3D, placed: &[LabeledBox]) -> bool {
    let grown = inflated(candidate);
    let clear_sensor = candidate.cx.hypot(candidate.cy) > candidate.bev_radius() + PLACEMENT_GAP;
    clear_sensor
        && placed.iter().all(|o| {
            let d = (o.bbox.cx - candidate.cx).hypot(o.bbox.cy - candidate.cy);
            d > o.bbox.bev_radius() + grown.bev_radius() || iou_bev(&grown, &o.bbox) == 0.0
        })
}

fn place_object(profile: &DomainProfile, placed: &[LabeledBox], rng: &mut impl Rng) -> Result<LabeledBox> {
    let class = sample_class(profile, rng);
    for _ in 0..MAX_PLACEMENT_ATTEMPTS {
        let lb = sample_box(profile, class, rng)?;
        if clear_of(&lb.bbox, placed) {
            return Ok(lb);
        }
    }
    Err(Error::Generation(format!(
        "could not place a {class} after {MAX_PLACEMENT_ATTEMPTS} attempts"
    )))
}

fn place_layout(profile: &DomainProfile, rng: &mut impl Rng) -> Result<Vec<LabeledBox>> {
    let (lo, hi) = profile.objects_per_scene;
    let n = rng.random_range(lo..=hi);
    let mut labels: Vec<LabeledBox> = Vec::with_capacity(n);
    for _ in 0..n {
        let lb = place_object(profile, &labels, rng)?;
        labels.push(lb);
    }
    Ok(labels)
}

/// Rounds of replacing unseen objects before the whole layout is redrawn.
const REROLLS_PER_LAYOUT: usize = 10;

/// One labeled scene: objects are placed without BEV overlap, the sensor fan
/// is cast, and any object that received no return is replaced. An object
/// stuck in the shadow of a near one can keep failing, so the whole layout is
/// redrawn every few rounds.
pub fn generate_scene(profile: &DomainProfile, rng: &mut impl Rng) -> Result<Scene> {
    profile.validate()?;
    let mut labels = place_layout(profile, rng)?;
    for round in 1..=MAX_PLACEMENT_ATTEMPTS {
        let boxes: Vec<Box3D> = labels.iter().map(|lb| lb.bbox).collect();
        let (scan, hits) = cast_scan(profile, &boxes, rng);
        let empty: Vec<usize> = (0..hits.len()).filter(|&k| hits[k] == 0).collect();
        if empty.is_empty() {
            return Ok(Scene { scan, labels, domain: Domain::Source });
        }
        if round % REROLLS_PER_LAYOUT == 0 {
            labels = place_layout(profile, rng)?;
            continue;
        }
        for k in empty {
            let others: Vec<LabeledBox> = labels
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != k)
                .map(|(_, lb)| *lb)
                .collect();
            labels[k] = place_object(profile, &others, rng)?;
        }
    }
    Err(Error::Generation(format!(
        "objects still without returns after {MAX_PLACEMENT_ATTEMPTS} re-rolls"
    )))
}

/// Scene `index` of the dataset drawn from `(profile, seed)`.
pub fn generate_indexed(profile: &DomainProfile, seed: u64, index: u64) -> Result<Scene> {
    let mut rng = stream_rng(seed, "data", index);
    generate_scene(profile, &mut rng)
}

pub fn generate_dataset(profile: &DomainProfile, n_scenes: usize, seed: u64) -> Result<Vec<Scene>> {
    (0..n_scenes as u64).map(|i| generate_indexed(profile, seed, i)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::contains;

    #[test]
    fn scenes_satisfy_invariants() {
        for profile in [DomainProfile::robot16(), DomainProfile::car16()] {
            for i in 0..10 {
                let s = generate_indexed(&profile, 3, i).unwrap();
                let (lo, hi) = profile.objects_per_scene;
                assert!(s.labels.len() >= lo && s.labels.len() <= hi);
                for (a, lb) in s.labels.iter().enumerate() {
                    assert!(s.scan.points.iter().any(|p| contains(&lb.bbox, p.xyz())));
                    assert!(profile.grid.cell_of(lb.bbox.cx, lb.bbox.cy).is_some());
                    for other in &s.labels[a + 1..] {
                        assert_eq!(iou_bev(&lb.bbox, &other.bbox), 0.0);
                    }
                    assert_eq!(canonical_label(lb), *lb);
                }
            }
        }
    }

    #[test]
    fn fixed_seed_is_deterministic() {
        let p = DomainProfile::robot16();
        assert_eq!(generate_indexed(&p, 11, 2).unwrap(), generate_indexed(&p, 11, 2).unwrap());
        assert_ne!(generate_indexed(&p, 11, 2).unwrap(), generate_indexed(&p, 11, 3).unwrap());
    }

    #[test]
    fn crowded_profile_fails_to_place() {
        let mut p = DomainProfile::robot16();
        p.objects_per_scene = (60, 60);
        p.distance_range = [(3.0, 3.5); 3];
        let mut rng = stream_rng(0, "data", 0);
        assert!(matches!(generate_scene(&p, &mut rng), Err(Error::Generation(_))));
    }

    #[test]
    fn car64_point_count_scale() {
        let s = generate_indexed(&DomainProfile::car64(), 1, 0).unwrap();
        assert!(s.scan.len() > 30_000 && s.scan.len() < 300_000, "{}", s.scan.len());
    }
}
