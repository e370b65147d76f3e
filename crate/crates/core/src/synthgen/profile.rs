use serde::{Deserialize, Serialize};

use crate::detector::GridSpec;
use crate::error::{Error, Result};
use crate::geometry::{ObjectClass, NUM_CLASSES};

/// Sensor geometry plus the object statistics of one synthetic domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainProfile {
    pub name: String,
    pub n_layers: usize,
    /// Lowest and highest beam elevation, degrees.
    pub vertical_fov: (f64, f64),
    /// Degrees between consecutive azimuth columns.
    pub azimuth_step: f64,
    pub sensor_height: f64,
    pub max_range: f64,
    pub class_mix: [f64; NUM_CLASSES],
    /// BEV distance of object centers from the sensor, per class.
    pub distance_range: [(f64, f64); NUM_CLASSES],
    pub size_mean: [[f64; 3]; NUM_CLASSES],
    pub size_std: [[f64; 3]; NUM_CLASSES],
    pub objects_per_scene: (usize, usize),
    /// Object centers are placed within ± this azimuth, degrees.
    pub placement_half_angle: f64,
    /// Horizontal distance of a wall around the scene that stops every ray
    /// not hitting ground or an object first. `None` leaves the scene open.
    #[serde(default)]
    pub backdrop_range: Option<f64>,
    pub grid: GridSpec,
}

fn default_sizes() -> ([[f64; 3]; NUM_CLASSES], [[f64; 3]; NUM_CLASSES]) {
    let mean = ObjectClass::ALL.map(ObjectClass::mean_size);
    let std = mean.map(|m| m.map(|v| 0.1 * v));
    (mean, std)
}

impl DomainProfile {
    pub const BUILTIN: [&'static str; 3] = ["car64", "car16", "robot16"];

    pub fn car64() -> Self {
        let (size_mean, size_std) = default_sizes();
        Self {
            name: "car64".into(),
            n_layers: 64,
            vertical_fov: (-24.9, 2.0),
            azimuth_step: 0.4,
            sensor_height: 2.0,
            max_range: 120.0,
            class_mix: [0.5, 0.3, 0.2],
            distance_range: [(15.0, 45.0); NUM_CLASSES],
            size_mean,
            size_std,
            objects_per_scene: (4, 10),
            placement_half_angle: 30.0,
            backdrop_range: Some(80.0),
            grid: GridSpec::car(),
        }
    }

    pub fn car16() -> Self {
        Self {
            name: "car16".into(),
            n_layers: 16,
            ..Self::car64()
        }
    }

    pub fn robot16() -> Self {
        let (size_mean, size_std) = default_sizes();
        Self {
            name: "robot16".into(),
            n_layers: 16,
            vertical_fov: (-15.0, 15.0),
            azimuth_step: 0.4,
            sensor_height: 0.6,
            max_range: 100.0,
            class_mix: [0.3, 0.4, 0.3],
            distance_range: [(8.0, 15.0), (2.0, 10.0), (2.0, 10.0)],
            size_mean,
            size_std,
            objects_per_scene: (3, 7),
            placement_half_angle: 40.0,
            backdrop_range: Some(80.0),
            grid: GridSpec::robot(),
        }
    }

    pub fn builtin(name: &str) -> Result<Self> {
        match name {
            "car64" => Ok(Self::car64()),
            "car16" => Ok(Self::car16()),
            "robot16" => Ok(Self::robot16()),
            other => Err(Error::Config(format!(
                "unknown profile '{other}' (expected one of {:?})",
                Self::BUILTIN
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(format!("profile {}: {msg}", self.name)));
        if self.n_layers == 0 || self.n_layers > usize::from(u16::MAX) {
            return fail(format!("n_layers {} out of range", self.n_layers));
        }
        if !(self.vertical_fov.0 < self.vertical_fov.1) {
            return fail("vertical fov must have min < max".into());
        }
        if !(self.azimuth_step > 0.0 && self.azimuth_step <= 360.0) {
            return fail("azimuth step must be in (0, 360]".into());
        }
        if !(self.sensor_height >= 0.0 && self.max_range > 0.0) {
            return fail("sensor height must be >= 0 and max range > 0".into());
        }
        let total: f64 = self.class_mix.iter().sum();
        if (total - 1.0).abs() > 1e-9 || self.class_mix.iter().any(|&p| p < 0.0) {
            return fail(format!("class mix {:?} is not a distribution", self.class_mix));
        }
        for (k, &(lo, hi)) in self.distance_range.iter().enumerate() {
            if !(lo < hi && lo >= 0.0) {
                return fail(format!("distance range of class {k} must have 0 <= min < max"));
            }
        }
        for k in 0..NUM_CLASSES {
            for d in 0..3 {
                if !(self.size_mean[k][d] > 0.0 && self.size_std[k][d] >= 0.0) {
                    return fail(format!("size of class {k} must be positive"));
                }
                if self.size_mean[k][d] - 2.0 * self.size_std[k][d] <= 0.0 {
                    return fail(format!("size spread of class {k} reaches zero"));
                }
            }
        }
        if self.objects_per_scene.0 > self.objects_per_scene.1 {
            return fail("objects_per_scene must have min <= max".into());
        }
        if !(self.placement_half_angle > 0.0 && self.placement_half_angle <= 180.0) {
            return fail("placement half angle must be in (0, 180]".into());
        }
        if let Some(r) = self.backdrop_range {
            let farthest = self.distance_range.iter().map(|d| d.1).fold(0.0, f64::max);
            if !(r > farthest) {
                return fail(format!("backdrop range {r} must lie beyond the farthest object distance {farthest}"));
            }
        }
        self.grid.validate()
    }

    /// Beam elevation of `ring` in radians; ring 0 is the lowest beam.
    pub fn elevation(&self, ring: usize) -> f64 {
        let (lo, hi) = self.vertical_fov;
        let deg = if self.n_layers == 1 {
            lo
        } else {
            lo + ring as f64 * (hi - lo) / (self.n_layers - 1) as f64
        };
        deg.to_radians()
    }

    pub fn azimuth_columns(&self) -> usize {
        (360.0 / self.azimuth_step).round() as usize
    }
}
