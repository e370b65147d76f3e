//! Source-side augmentations: random object scaling, ring downsampling and
//! the vertical shift that puts the ground at z = 0.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::geometry::{contains, iou_3d, LabeledBox, NUM_CLASSES};

/// Per-class scaling intervals `(r_min, r_max)`, indexed by class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RosConfig {
    pub intervals: [(f64, f64); NUM_CLASSES],
}

impl Default for RosConfig {
    fn default() -> Self {
        Self {
            intervals: [(0.8, 1.2), (0.9, 1.1), (0.9, 1.1)],
        }
    }
}

impl RosConfig {
    pub fn identity() -> Self {
        Self {
            intervals: [(1.0, 1.0); NUM_CLASSES],
        }
    }

    pub fn validate(&self) -> Result<()> {
        for &(lo, hi) in &self.intervals {
            if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
                return Err(Error::Config(format!("invalid scaling interval ({lo}, {hi})")));
            }
        }
        Ok(())
    }
}

fn draw_scale(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

/// Scales every labeled object about its center by a factor drawn from its
/// class interval. Points inside a box move with it, the box extents grow by
/// the same factor, and all other points are left alone.
pub fn random_object_scaling(
    scan: &PointCloud,
    labels: &[LabeledBox],
    cfg: &RosConfig,
    rng: &mut impl Rng,
) -> Result<(PointCloud, Vec<LabeledBox>)> {
    cfg.validate()?;
    for (i, a) in labels.iter().enumerate() {
        for b in &labels[i + 1..] {
            if iou_3d(&a.bbox, &b.bbox) > 0.0 {
                return Err(Error::Precondition(
                    "overlapping boxes make point ownership ambiguous".into(),
                ));
            }
        }
    }
    let scales: Vec<f64> = labels
        .iter()
        .map(|lb| draw_scale(rng, cfg.intervals[lb.class.index()]))
        .collect();

    let mut out = scan.clone();
    for p in &mut out.points {
        let owner = labels.iter().zip(&scales).find(|(lb, _)| {
            let b = &lb.bbox;
            let reach = b.bev_radius();
            // cheap reject before the exact test
            (p.x - b.cx).abs() <= reach && (p.y - b.cy).abs() <= reach && contains(b, p.xyz())
        });
        if let Some((lb, &r)) = owner {
            let b = &lb.bbox;
            let k = r - 1.0;
            p.x += k * (p.x - b.cx);
            p.y += k * (p.y - b.cy);
            p.z += k * (p.z - b.cz);
        }
    }
    let boxes = labels
        .iter()
        .zip(&scales)
        .map(|(lb, &r)| {
            let mut scaled = *lb;
            scaled.bbox.l *= r;
            scaled.bbox.w *= r;
            scaled.bbox.h *= r;
            scaled
        })
        .collect();
    Ok((out, boxes))
}

/// Keeps rings `≡ 0 (mod keep_every)` and renumbers them `ring / keep_every`.
pub fn downsample_layers(scan: &PointCloud, keep_every: usize) -> Result<PointCloud> {
    if keep_every == 0 {
        return Err(Error::Precondition("keep_every must be at least 1".into()));
    }
    let k = keep_every as u32;
    let points = scan
        .points
        .iter()
        .filter(|p| u32::from(p.ring) % k == 0)
        .map(|p| {
            let mut q = *p;
            q.ring = (u32::from(p.ring) / k) as u16;
            q
        })
        .collect();
    Ok(PointCloud { points })
}

/// Raises points and boxes by the sensor height so the ground sits at z = 0.
pub fn ground_plane_shift(
    scan: &PointCloud,
    labels: &[LabeledBox],
    sensor_height: f64,
) -> Result<(PointCloud, Vec<LabeledBox>)> {
    if !(sensor_height >= 0.0) {
        return Err(Error::Precondition(format!(
            "sensor height must be non-negative, got {sensor_height}"
        )));
    }
    let mut out = scan.clone();
    for p in &mut out.points {
        p.z += sensor_height;
    }
    let boxes = labels
        .iter()
        .map(|lb| {
            let mut b = *lb;
            b.bbox.cz += sensor_height;
            b
        })
        .collect();
    Ok((out, boxes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::Point;
    use crate::geometry::{Box3D, ObjectClass};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pt(x: f64, y: f64, z: f64, ring: u16) -> Point {
        Point { x, y, z, intensity: 0.5, ring }
    }

    fn scene(rng: &mut ChaCha8Rng) -> (PointCloud, Vec<LabeledBox>) {
        let labels = vec![
            LabeledBox {
                bbox: Box3D::new([10.0, 0.0, -1.0], [4.5, 1.9, 1.7], 0.4).unwrap(),
                class: ObjectClass::Vehicle,
            },
            LabeledBox {
                bbox: Box3D::new([5.0, 5.0, -1.0], [0.8, 0.8, 1.7], -2.0).unwrap(),
                class: ObjectClass::Pedestrian,
            },
        ];
        let points = (0..2000)
            .map(|i| {
                let (cx, cy) = if i % 2 == 0 { (10.0, 0.0) } else { (5.0, 5.0) };
                pt(
                    cx + rng.random_range(-3.0..3.0),
                    cy + rng.random_range(-3.0..3.0),
                    rng.random_range(-2.0..0.0),
                    (i % 64) as u16,
                )
            })
            .collect();
        (PointCloud::new(points), labels)
    }

    #[test]
    fn unit_scale_is_bitwise_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (scan, labels) = scene(&mut rng);
        let (out, boxes) = random_object_scaling(&scan, &labels, &RosConfig::identity(), &mut rng).unwrap();
        assert_eq!(out, scan);
        assert_eq!(boxes, labels);
    }

    #[test]
    fn scaling_preserves_membership_and_outside_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let (scan, labels) = scene(&mut rng);
            let (out, boxes) = random_object_scaling(&scan, &labels, &RosConfig::default(), &mut rng).unwrap();
            for (before, after) in scan.points.iter().zip(&out.points) {
                let owner = labels.iter().position(|lb| contains(&lb.bbox, before.xyz()));
                match owner {
                    Some(i) => assert!(contains(&boxes[i].bbox, after.xyz())),
                    None => assert_eq!(before, after),
                }
            }
            for (lb, sb) in labels.iter().zip(&boxes) {
                let r = sb.bbox.l / lb.bbox.l;
                let (lo, hi) = RosConfig::default().intervals[lb.class.index()];
                assert!(r >= lo && r <= hi);
                assert!((sb.bbox.w / lb.bbox.w - r).abs() < 1e-12);
                assert_eq!(sb.bbox.center(), lb.bbox.center());
                assert_eq!(sb.bbox.yaw, lb.bbox.yaw);
            }
        }
    }

    #[test]
    fn overlapping_boxes_are_rejected() {
        let b = Box3D::new([0.0; 3], [2.0, 2.0, 2.0], 0.0).unwrap();
        let labels = [
            LabeledBox { bbox: b, class: ObjectClass::Vehicle },
            LabeledBox { bbox: Box3D { cx: 1.0, ..b }, class: ObjectClass::Vehicle },
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = random_object_scaling(&PointCloud::default(), &labels, &RosConfig::default(), &mut rng);
        assert!(matches!(r, Err(Error::Precondition(_))));
    }

    #[test]
    fn invalid_interval_is_rejected() {
        let cfg = RosConfig { intervals: [(1.2, 0.8), (0.9, 1.1), (0.9, 1.1)] };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn downsample_examples() {
        let scan = PointCloud::new((0..640).map(|i| pt(i as f64, 0.0, 0.0, (i % 64) as u16)).collect());
        assert_eq!(downsample_layers(&scan, 1).unwrap(), scan);
        let d = downsample_layers(&scan, 4).unwrap();
        assert_eq!(d.rings().len(), 16);
        assert_eq!(d.rings().into_iter().max(), Some(15));
        assert!(downsample_layers(&scan, 0).is_err());
    }

    #[test]
    fn ground_shift_examples() {
        let scan = PointCloud::new(vec![pt(1.0, 2.0, -2.0, 0)]);
        let (same, _) = ground_plane_shift(&scan, &[], 0.0).unwrap();
        assert_eq!(same, scan);
        let (up, _) = ground_plane_shift(&scan, &[], 2.0).unwrap();
        assert_eq!(up.points[0].z, 0.0);
        assert!(ground_plane_shift(&scan, &[], -1.0).is_err());
    }

    proptest! {
        #[test]
        fn downsample_composes(k1 in 1usize..5, k2 in 1usize..5) {
            let scan = PointCloud::new((0..(64 * 3)).map(|i| pt(i as f64, 0.0, 0.0, (i % 64) as u16)).collect());
            let twice = downsample_layers(&downsample_layers(&scan, k1).unwrap(), k2).unwrap();
            let once = downsample_layers(&scan, k1 * k2).unwrap();
            prop_assert_eq!(twice, once);
        }

        #[test]
        fn ground_shift_is_invertible_and_rigid(h in 0.0..3.0f64, pts in prop::collection::vec(prop::array::uniform3(-50.0..50.0f64), 2..20)) {
            let scan = PointCloud::new(pts.iter().map(|p| pt(p[0], p[1], p[2], 0)).collect());
            let (up, _) = ground_plane_shift(&scan, &[], h).unwrap();
            for (a, b) in scan.points.iter().zip(&up.points) {
                prop_assert!((b.z - h - a.z).abs() < 1e-12);
            }
            let d = |p: &Point, q: &Point| ((p.x - q.x).powi(2) + (p.y - q.y).powi(2) + (p.z - q.z).powi(2)).sqrt();
            for i in 1..scan.len() {
                let before = d(&scan.points[0], &scan.points[i]);
                let after = d(&up.points[0], &up.points[i]);
                prop_assert!((before - after).abs() < 1e-9);
            }
        }
    }
}
