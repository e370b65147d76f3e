use super::Box3D;

type Pt = [f64; 2];

fn cross(o: Pt, a: Pt, b: Pt) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Shoelace area; positive for counter-clockwise polygons.
pub fn polygon_area(poly: &[Pt]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    let twice: f64 = (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            a[0] * b[1] - b[0] * a[1]
        })
        .sum();
    0.5 * twice
}

fn edge_intersection(p: Pt, q: Pt, a: Pt, b: Pt) -> Pt {
    let d1 = cross(a, b, p);
    let d2 = cross(a, b, q);
    let t = d1 / (d1 - d2);
    [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]
}

/// Sutherland–Hodgman: clips `subject` against the counter-clockwise convex
/// polygon `clip`.
pub fn clip_convex(subject: &[Pt], clip: &[Pt]) -> Vec<Pt> {
    let mut out = subject.to_vec();
    for i in 0..clip.len() {
        if out.is_empty() {
            break;
        }
        let (a, b) = (clip[i], clip[(i + 1) % clip.len()]);
        let input = std::mem::take(&mut out);
        for j in 0..input.len() {
            let cur = input[j];
            let prev = input[(j + input.len() - 1) % input.len()];
            let cur_in = cross(a, b, cur) >= 0.0;
            let prev_in = cross(a, b, prev) >= 0.0;
            if cur_in {
                if !prev_in {
                    out.push(edge_intersection(prev, cur, a, b));
                }
                out.push(cur);
            } else if prev_in {
                out.push(edge_intersection(prev, cur, a, b));
            }
        }
    }
    out
}

fn bev_intersection(a: &Box3D, b: &Box3D) -> f64 {
    let reach = a.bev_radius() + b.bev_radius();
    if (a.cx - b.cx).hypot(a.cy - b.cy) > reach {
        return 0.0;
    }
    let poly = clip_convex(&a.corners_bev(), &b.corners_bev());
    polygon_area(&poly).max(0.0)
}

fn ratio(inter: f64, union: f64) -> f64 {
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// IoU of the rotated footprints.
pub fn iou_bev(a: &Box3D, b: &Box3D) -> f64 {
    let inter = bev_intersection(a, b);
    ratio(inter, a.footprint_area() + b.footprint_area() - inter)
}

/// IoU of the boxes as volumes: footprint intersection times z overlap.
pub fn iou_3d(a: &Box3D, b: &Box3D) -> f64 {
    let (a0, a1) = a.z_range();
    let (b0, b1) = b.z_range();
    let dz = (a1.min(b1) - a0.max(b0)).max(0.0);
    if dz == 0.0 {
        return 0.0;
    }
    let inter = bev_intersection(a, b) * dz;
    ratio(inter, a.volume() + b.volume() - inter)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    use crate::geometry::contains_bev;

    fn b(cx: f64, cy: f64, cz: f64, l: f64, w: f64, h: f64, yaw: f64) -> Box3D {
        Box3D::new([cx, cy, cz], [l, w, h], yaw).unwrap()
    }

    #[test]
    fn identical_and_disjoint() {
        let a = b(1.0, 2.0, 0.0, 4.0, 2.0, 1.5, 0.4);
        assert!((iou_bev(&a, &a) - 1.0).abs() < 1e-12);
        assert!((iou_3d(&a, &a) - 1.0).abs() < 1e-12);
        let far = b(101.0, 2.0, 0.0, 4.0, 2.0, 1.5, 0.4);
        assert_eq!(iou_bev(&a, &far), 0.0);
        assert_eq!(iou_3d(&a, &far), 0.0);
    }

    fn monte_carlo_iou(a: &Box3D, c: &Box3D, n: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<_> = a.corners_bev().into_iter().chain(c.corners_bev()).collect();
        let (x0, x1) = pts.iter().fold((f64::MAX, f64::MIN), |(l, h), p| (l.min(p[0]), h.max(p[0])));
        let (y0, y1) = pts.iter().fold((f64::MAX, f64::MIN), |(l, h), p| (l.min(p[1]), h.max(p[1])));
        let (mut inter, mut union) = (0usize, 0usize);
        for _ in 0..n {
            let x = rng.random_range(x0..x1);
            let y = rng.random_range(y0..y1);
            let (ia, ic) = (contains_bev(a, x, y), contains_bev(c, x, y));
            inter += (ia && ic) as usize;
            union += (ia || ic) as usize;
        }
        inter as f64 / union as f64
    }

    #[test]
    fn half_overlapping_squares() {
        let a = b(0.0, 0.0, 0.0, 2.0, 2.0, 1.0, 0.0);
        let c = b(1.0, 0.0, 0.0, 2.0, 2.0, 1.0, 0.0);
        let exact = iou_bev(&a, &c);
        assert!((exact - 1.0 / 3.0).abs() < 1e-12, "{exact}");
        let mc = monte_carlo_iou(&a, &c, 1_000_000, 1);
        assert!((mc - exact).abs() < 1e-2, "mc {mc}");
    }

    #[test]
    fn rotated_overlap_matches_monte_carlo() {
        let a = b(0.0, 0.0, 0.0, 4.0, 1.8, 1.0, 0.3);
        let c = b(0.8, 0.5, 0.0, 3.5, 2.0, 1.0, -0.9);
        let mc = monte_carlo_iou(&a, &c, 1_000_000, 2);
        assert!((iou_bev(&a, &c) - mc).abs() < 1e-2);
    }

    #[test]
    fn vertical_overlap() {
        let a = b(0.0, 0.0, 0.0, 2.0, 1.0, 2.0, 0.0);
        let half = b(0.0, 0.0, 1.0, 2.0, 1.0, 2.0, 0.0);
        // overlap is half the height: (1/2) / (2 - 1/2)
        assert!((iou_3d(&a, &half) - 1.0 / 3.0).abs() < 1e-12);
        let above = b(0.0, 0.0, 2.0, 2.0, 1.0, 2.0, 0.0);
        assert_eq!(iou_3d(&a, &above), 0.0);
    }

    #[test]
    fn rotation_by_pi_is_the_same_box() {
        let a = b(0.0, 0.0, 0.0, 4.0, 1.0, 1.0, 0.2);
        let c = b(0.0, 0.0, 0.0, 4.0, 1.0, 1.0, 0.2 + PI);
        assert!((iou_bev(&a, &c) - 1.0).abs() < 1e-9);
        let d = b(0.0, 0.0, 0.0, 4.0, 1.0, 1.0, 0.2 + PI / 2.0);
        assert!(iou_bev(&a, &d) < 0.5);
    }

    fn arb_box() -> impl Strategy<Value = Box3D> {
        (-3.0..3.0f64, -3.0..3.0f64, -1.0..1.0f64, 0.5..5.0f64, 0.3..2.5f64, 0.3..2.0f64, -PI..PI)
            .prop_map(|(x, y, z, l, w, h, yaw)| b(x, y, z, l, w, h, yaw))
    }

    proptest! {
        #[test]
        fn iou_symmetric_and_bounded(a in arb_box(), c in arb_box()) {
            let (ab, ba) = (iou_bev(&a, &c), iou_bev(&c, &a));
            prop_assert!((ab - ba).abs() < 1e-9);
            prop_assert!((0.0..=1.0).contains(&ab));
            let (ab3, ba3) = (iou_3d(&a, &c), iou_3d(&c, &a));
            prop_assert!((ab3 - ba3).abs() < 1e-9);
            prop_assert!((0.0..=1.0).contains(&ab3));
        }

        #[test]
        fn iou_one_only_for_identical_non_square(a in arb_box(), dx in -0.5..0.5f64, dyaw in 0.05..1.5f64) {
            prop_assume!((a.l - a.w).abs() > 0.1);
            let shifted = Box3D { cx: a.cx + dx, ..a };
            prop_assume!(dx.abs() > 1e-3);
            prop_assert!(iou_bev(&a, &shifted) < 1.0 - 1e-6);
            let turned = Box3D::new(a.center(), a.size(), a.yaw + dyaw).unwrap();
            prop_assert!(iou_bev(&a, &turned) < 1.0 - 1e-6);
        }
    }

    #[test]
    fn random_pairs_match_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for i in 0..5 {
            let mut r = || rng.random_range(0.0..1.0);
            let a = b(r(), r(), 0.0, 1.0 + 3.0 * r(), 0.5 + 2.0 * r(), 1.0, PI * (2.0 * r() - 1.0));
            let c = b(r(), r(), 0.0, 1.0 + 3.0 * r(), 0.5 + 2.0 * r(), 1.0, PI * (2.0 * r() - 1.0));
            let mc = monte_carlo_iou(&a, &c, 200_000, 100 + i);
            assert!((iou_bev(&a, &c) - mc).abs() < 2e-2);
        }
    }
}
