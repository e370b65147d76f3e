//! Oriented 3D boxes: frame transforms, containment, IoU and NMS.

mod iou;
mod nms;

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use iou::{clip_convex, iou_3d, iou_bev, polygon_area};
pub use nms::{nms, nms_indices, IouMode};

/// Relative slack on the containment bounds, absorbing rounding from the
/// frame rotation.
pub const CONTAINS_REL_TOL: f64 = 1e-9;

pub const NUM_CLASSES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectClass {
    Vehicle,
    Pedestrian,
    Cyclist,
}

impl ObjectClass {
    pub const ALL: [ObjectClass; NUM_CLASSES] =
        [ObjectClass::Vehicle, ObjectClass::Pedestrian, ObjectClass::Cyclist];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ObjectClass::Vehicle => "vehicle",
            ObjectClass::Pedestrian => "pedestrian",
            ObjectClass::Cyclist => "cyclist",
        }
    }

    /// Default (l, w, h) in meters.
    pub fn mean_size(self) -> [f64; 3] {
        match self {
            ObjectClass::Vehicle => [4.5, 1.9, 1.7],
            ObjectClass::Pedestrian => [0.8, 0.8, 1.7],
            ObjectClass::Cyclist => [1.8, 0.6, 1.7],
        }
    }

    /// IoU needed for a match during evaluation.
    pub fn iou_threshold(self) -> f64 {
        match self {
            ObjectClass::Vehicle => 0.7,
            ObjectClass::Pedestrian | ObjectClass::Cyclist => 0.5,
        }
    }
}

impl fmt::Display for ObjectClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Maps an angle into `(-π, π]`.
pub fn normalize_yaw(yaw: f64) -> f64 {
    if yaw > -PI && yaw <= PI {
        return yaw;
    }
    let mut a = yaw.rem_euclid(2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    }
    if a <= -PI {
        a += 2.0 * PI;
    }
    a
}

/// Oriented box: center, extents along the object axes and heading about z.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Box3D {
    pub cx: f64,
    pub cy: f64,
    pub cz: f64,
    pub l: f64,
    pub w: f64,
    pub h: f64,
    pub yaw: f64,
}

impl Box3D {
    pub fn new(center: [f64; 3], size: [f64; 3], yaw: f64) -> Result<Self> {
        if !size.iter().all(|&s| s > 0.0 && s.is_finite()) {
            return Err(Error::Precondition(format!("box extents must be positive, got {size:?}")));
        }
        if !center.iter().all(|c| c.is_finite()) || !yaw.is_finite() {
            return Err(Error::Precondition("box parameters must be finite".into()));
        }
        Ok(Self {
            cx: center[0],
            cy: center[1],
            cz: center[2],
            l: size[0],
            w: size[1],
            h: size[2],
            yaw: normalize_yaw(yaw),
        })
    }

    pub fn center(&self) -> [f64; 3] {
        [self.cx, self.cy, self.cz]
    }

    pub fn size(&self) -> [f64; 3] {
        [self.l, self.w, self.h]
    }

    pub fn volume(&self) -> f64 {
        self.l * self.w * self.h
    }

    pub fn footprint_area(&self) -> f64 {
        self.l * self.w
    }

    pub fn z_range(&self) -> (f64, f64) {
        (self.cz - 0.5 * self.h, self.cz + 0.5 * self.h)
    }

    /// Footprint corners, counter-clockwise.
    pub fn corners_bev(&self) -> [[f64; 2]; 4] {
        let (s, c) = self.yaw.sin_cos();
        let (hl, hw) = (0.5 * self.l, 0.5 * self.w);
        [[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]].map(|[u, v]| {
            [self.cx + u * c - v * s, self.cy + u * s + v * c]
        })
    }

    /// Radius of the footprint's circumcircle.
    pub fn bev_radius(&self) -> f64 {
        0.5 * self.l.hypot(self.w)
    }
}

/// World point to the box frame: translate by the center, then undo the yaw.
pub fn to_object_frame(p: [f64; 3], b: &Box3D) -> [f64; 3] {
    let (s, c) = b.yaw.sin_cos();
    let (dx, dy, dz) = (p[0] - b.cx, p[1] - b.cy, p[2] - b.cz);
    [dx * c + dy * s, -dx * s + dy * c, dz]
}

pub fn from_object_frame(q: [f64; 3], b: &Box3D) -> [f64; 3] {
    let (s, c) = b.yaw.sin_cos();
    [b.cx + q[0] * c - q[1] * s, b.cy + q[0] * s + q[1] * c, b.cz + q[2]]
}

/// Boundary-inclusive membership test.
pub fn contains(b: &Box3D, p: [f64; 3]) -> bool {
    let q = to_object_frame(p, b);
    let tol = 1.0 + CONTAINS_REL_TOL;
    q[0].abs() <= 0.5 * b.l * tol && q[1].abs() <= 0.5 * b.w * tol && q[2].abs() <= 0.5 * b.h * tol
}

/// Footprint-only membership test (z ignored).
pub fn contains_bev(b: &Box3D, x: f64, y: f64) -> bool {
    let q = to_object_frame([x, y, b.cz], b);
    let tol = 1.0 + CONTAINS_REL_TOL;
    q[0].abs() <= 0.5 * b.l * tol && q[1].abs() <= 0.5 * b.w * tol
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabeledBox {
    pub bbox: Box3D,
    pub class: ObjectClass,
}

/// A predicted box with one confidence per class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub bbox: Box3D,
    pub conf: [f64; NUM_CLASSES],
}

impl Detection {
    /// Highest confidence; ties go to the lower class index.
    pub fn class(&self) -> ObjectClass {
        let mut best = 0;
        for k in 1..NUM_CLASSES {
            if self.conf[k] > self.conf[best] {
                best = k;
            }
        }
        ObjectClass::ALL[best]
    }

    pub fn score(&self) -> f64 {
        self.conf[self.class().index()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn b(cx: f64, cy: f64, cz: f64, l: f64, w: f64, h: f64, yaw: f64) -> Box3D {
        Box3D::new([cx, cy, cz], [l, w, h], yaw).unwrap()
    }

    #[test]
    fn object_frame_examples() {
        let bx = b(3.0, -1.0, 0.5, 4.0, 2.0, 1.5, 0.7);
        let q = to_object_frame(bx.center(), &bx);
        assert_eq!(q, [0.0, 0.0, 0.0]);

        let bx = b(3.0, -1.0, 0.5, 4.0, 2.0, 1.5, 0.0);
        let q = to_object_frame([4.0, 1.0, 3.5], &bx);
        assert_eq!(q, [1.0, 2.0, 3.0]);

        let bx = b(0.0, 0.0, 0.0, 4.0, 2.0, 1.5, PI / 2.0);
        let q = to_object_frame([1.0, 0.0, 0.0], &bx);
        assert!(q[0].abs() < 1e-15 && (q[1] + 1.0).abs() < 1e-15 && q[2] == 0.0);
    }

    #[test]
    fn containment_is_boundary_inclusive() {
        let bx = b(1.0, 2.0, 0.0, 4.0, 2.0, 1.0, 0.9);
        assert!(contains(&bx, bx.center()));
        let corner = from_object_frame([2.0, 1.0, 0.5], &bx);
        assert!(contains(&bx, corner));
        let outside = from_object_frame([2.01, 0.0, 0.0], &bx);
        assert!(!contains(&bx, outside));
    }

    #[test]
    fn box_rejects_non_positive_extent() {
        assert!(Box3D::new([0.0; 3], [1.0, 0.0, 1.0], 0.0).is_err());
        assert!(Box3D::new([0.0; 3], [1.0, 1.0, -1.0], 0.0).is_err());
    }

    #[test]
    fn yaw_normalization() {
        assert_eq!(normalize_yaw(PI), PI);
        assert!((normalize_yaw(-PI) - PI).abs() < 1e-15);
        assert!((normalize_yaw(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        assert_eq!(normalize_yaw(0.3), 0.3);
    }

    #[test]
    fn detection_class_prefers_lower_index_on_tie() {
        let d = Detection {
            bbox: b(0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0),
            conf: [0.4, 0.4, 0.1],
        };
        assert_eq!(d.class(), ObjectClass::Vehicle);
        assert_eq!(d.score(), 0.4);
    }

    fn oracle_contains(bx: &Box3D, p: [f64; 3]) -> bool {
        // rotate by -yaw with an explicit matrix
        let m = [[bx.yaw.cos(), bx.yaw.sin()], [-bx.yaw.sin(), bx.yaw.cos()]];
        let d = [p[0] - bx.cx, p[1] - bx.cy];
        let x = m[0][0] * d[0] + m[0][1] * d[1];
        let y = m[1][0] * d[0] + m[1][1] * d[1];
        x.abs() <= bx.l / 2.0 && y.abs() <= bx.w / 2.0 && (p[2] - bx.cz).abs() <= bx.h / 2.0
    }

    fn arb_box() -> impl Strategy<Value = Box3D> {
        (-20.0..20.0f64, -20.0..20.0f64, -2.0..2.0f64, 0.2..6.0f64, 0.2..3.0f64, 0.2..3.0f64, -PI..PI)
            .prop_map(|(x, y, z, l, w, h, yaw)| b(x, y, z, l, w, h, yaw))
    }

    proptest! {
        #[test]
        fn contains_agrees_with_transform_oracle(bx in arb_box(), px in -25.0..25.0f64, py in -25.0..25.0f64, pz in -3.0..3.0f64) {
            // skip points within rounding distance of a face
            let q = to_object_frame([px, py, pz], &bx);
            let margin = [bx.l / 2.0 - q[0].abs(), bx.w / 2.0 - q[1].abs(), bx.h / 2.0 - q[2].abs()];
            prop_assume!(margin.iter().all(|m| m.abs() > 1e-9));
            prop_assert_eq!(contains(&bx, [px, py, pz]), oracle_contains(&bx, [px, py, pz]));
        }

        #[test]
        fn frame_round_trip(bx in arb_box(), p in prop::array::uniform3(-50.0..50.0f64)) {
            let back = from_object_frame(to_object_frame(p, &bx), &bx);
            for i in 0..3 {
                prop_assert!((back[i] - p[i]).abs() < 1e-12);
            }
        }

        #[test]
        fn containment_invariant_under_rigid_motion(
            bx in arb_box(),
            u in prop::array::uniform3(-0.6..0.6f64),
            shift in prop::array::uniform3(-10.0..10.0f64),
            turn in -PI..PI,
        ) {
            let p = from_object_frame([u[0] * bx.l, u[1] * bx.w, u[2] * bx.h], &bx);
            let q = to_object_frame(p, &bx);
            let margin = [bx.l / 2.0 - q[0].abs(), bx.w / 2.0 - q[1].abs(), bx.h / 2.0 - q[2].abs()];
            prop_assume!(margin.iter().all(|m| m.abs() > 1e-6));
            let (s, c) = turn.sin_cos();
            let rot = |x: f64, y: f64| (x * c - y * s, x * s + y * c);
            let (bx2, by2) = rot(bx.cx, bx.cy);
            let moved = b(bx2 + shift[0], by2 + shift[1], bx.cz + shift[2], bx.l, bx.w, bx.h, bx.yaw + turn);
            let (px2, py2) = rot(p[0], p[1]);
            let p2 = [px2 + shift[0], py2 + shift[1], p[2] + shift[2]];
            prop_assert_eq!(contains(&bx, p), contains(&moved, p2));
        }
    }
}
