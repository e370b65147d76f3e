use std::collections::BTreeSet;

/// One LiDAR return.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub intensity: f32,
    pub ring: u16,
}

impl Point {
    pub fn xyz(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Point>,
}

impl PointCloud {
    pub fn new(points: Vec<Point>) -> Self {
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn rings(&self) -> BTreeSet<u16> {
        self.points.iter().map(|p| p.ring).collect()
    }

    /// Keeps points whose BEV position lies in the given rectangle.
    pub fn crop_bev(&self, x: (f64, f64), y: (f64, f64)) -> PointCloud {
        let points = self
            .points
            .iter()
            .filter(|p| p.x >= x.0 && p.x <= x.1 && p.y >= y.0 && p.y <= y.1)
            .copied()
            .collect();
        PointCloud { points }
    }
}
