use serde::{Deserialize, Serialize};

use crate::cloud::PointCloud;
use crate::error::{Error, Result};

/// Number of raw statistics per cell: log(1 + count), mean z, max z, mean intensity.
pub const RAW_FEATURES: usize = 4;

/// Rectangular BEV raster. Rows run along x, columns along y.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    pub cell: f64,
}

impl GridSpec {
    pub fn car() -> Self {
        Self {
            x_range: (0.0, 50.0),
            y_range: (-25.0, 25.0),
            cell: 0.5,
        }
    }

    pub fn robot() -> Self {
        Self {
            x_range: (0.0, 20.0),
            y_range: (-10.0, 10.0),
            cell: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cell > 0.0 && self.cell.is_finite()) {
            return Err(Error::Config(format!("cell size must be positive, got {}", self.cell)));
        }
        for (lo, hi) in [self.x_range, self.y_range] {
            if !(hi > lo) {
                return Err(Error::Config(format!("empty grid range ({lo}, {hi})")));
            }
            let n = (hi - lo) / self.cell;
            if (n - n.round()).abs() > 1e-9 {
                return Err(Error::Config(format!(
                    "range ({lo}, {hi}) is not a whole number of {} m cells",
                    self.cell
                )));
            }
        }
        Ok(())
    }

    pub fn rows(&self) -> usize {
        ((self.x_range.1 - self.x_range.0) / self.cell).round() as usize
    }

    pub fn cols(&self) -> usize {
        ((self.y_range.1 - self.y_range.0) / self.cell).round() as usize
    }

    pub fn num_cells(&self) -> usize {
        self.rows() * self.cols()
    }

    pub fn extent(&self) -> (f64, f64) {
        (self.x_range.1 - self.x_range.0, self.y_range.1 - self.y_range.0)
    }

    /// Cell `(row, col)` holding BEV position `(x, y)`, if inside the grid.
    pub fn cell_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let fi = ((x - self.x_range.0) / self.cell).floor();
        let fj = ((y - self.y_range.0) / self.cell).floor();
        if fi < 0.0 || fj < 0.0 || !fi.is_finite() || !fj.is_finite() {
            return None;
        }
        let (i, j) = (fi as usize, fj as usize);
        (i < self.rows() && j < self.cols()).then_some((i, j))
    }

    pub fn cell_center(&self, i: usize, j: usize) -> (f64, f64) {
        (
            self.x_range.0 + (i as f64 + 0.5) * self.cell,
            self.y_range.0 + (j as f64 + 0.5) * self.cell,
        )
    }
}

/// Raw per-cell statistics, row-major `[rows * cols, RAW_FEATURES]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BevGrid {
    pub spec: GridSpec,
    pub features: Vec<f64>,
}

impl BevGrid {
    pub fn cell(&self, i: usize, j: usize) -> &[f64] {
        let k = (i * self.spec.cols() + j) * RAW_FEATURES;
        &self.features[k..k + RAW_FEATURES]
    }
}

/// Bins points into cells and computes the raw statistics. Points outside the
/// grid are dropped; empty cells stay all zero.
pub fn featurize(scan: &PointCloud, spec: &GridSpec) -> Result<BevGrid> {
    spec.validate()?;
    let n = spec.num_cells();
    let mut count = vec![0u32; n];
    let mut sum_z = vec![0.0; n];
    let mut max_z = vec![f64::NEG_INFINITY; n];
    let mut sum_i = vec![0.0; n];
    let cols = spec.cols();
    for p in &scan.points {
        if let Some((i, j)) = spec.cell_of(p.x, p.y) {
            let c = i * cols + j;
            count[c] += 1;
            sum_z[c] += p.z;
            max_z[c] = max_z[c].max(p.z);
            sum_i[c] += f64::from(p.intensity);
        }
    }
    let mut features = vec![0.0; n * RAW_FEATURES];
    for c in 0..n {
        if count[c] == 0 {
            continue;
        }
        let k = f64::from(count[c]);
        let f = &mut features[c * RAW_FEATURES..(c + 1) * RAW_FEATURES];
        f[0] = k.ln_1p();
        f[1] = sum_z[c] / k;
        f[2] = max_z[c];
        f[3] = sum_i[c] / k;
    }
    Ok(BevGrid { spec: *spec, features })
}
