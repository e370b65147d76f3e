use crate::autodiff::{Array, Graph, Tensor};
use crate::detector::GridSpec;
use crate::error::Result;
use crate::geometry::{contains_bev, Box3D, Detection, ObjectClass};

/// Width of the normalized box vector appended to pooled features.
pub const BOX_FEATURES: usize = 8;

/// Box parameters as seen by the discriminators: center x and y as fractions
/// of the grid extent, z and sizes relative to the class mean size, heading
/// as (sin, cos).
pub fn box_vector(b: &Box3D, class: ObjectClass, spec: &GridSpec) -> [f64; BOX_FEATURES] {
    let [ml, mw, mh] = class.mean_size();
    let (ex, ey) = spec.extent();
    let (s, c) = b.yaw.sin_cos();
    [
        (b.cx - spec.x_range.0) / ex,
        (b.cy - spec.y_range.0) / ey,
        b.cz / mh,
        b.l / ml,
        b.w / mw,
        b.h / mh,
        s,
        c,
    ]
}

/// Row-major indices of the cells whose centers lie inside the footprint.
pub fn footprint_cells(spec: &GridSpec, b: &Box3D) -> Vec<usize> {
    let r = b.bev_radius();
    let lo_i = ((b.cx - r - spec.x_range.0) / spec.cell).floor().max(0.0) as usize;
    let lo_j = ((b.cy - r - spec.y_range.0) / spec.cell).floor().max(0.0) as usize;
    let hi_i = ((b.cx + r - spec.x_range.0) / spec.cell).ceil().max(0.0) as usize;
    let hi_j = ((b.cy + r - spec.y_range.0) / spec.cell).ceil().max(0.0) as usize;
    let (rows, cols) = (spec.rows(), spec.cols());
    let mut cells = Vec::new();
    for i in lo_i..hi_i.min(rows) {
        for j in lo_j..hi_j.min(cols) {
            let (x, y) = spec.cell_center(i, j);
            if contains_bev(b, x, y) {
                cells.push(i * cols + j);
            }
        }
    }
    cells
}

/// Pools `features` (`[cells, F]`) over the detection footprint and appends
/// the box vector, giving a `[1, F + BOX_FEATURES]` row. `None` when no cell
/// center falls inside the footprint.
pub fn mask_features(g: &mut Graph, features: Tensor, spec: &GridSpec, det: &Detection) -> Result<Option<Tensor>> {
    let cells = footprint_cells(spec, &det.bbox);
    if cells.is_empty() {
        return Ok(None);
    }
    let picked = g.gather_rows(features, &cells)?;
    let pooled = g.mean_rows(picked)?;
    let bv = box_vector(&det.bbox, det.class(), spec);
    let bv = g.constant(Array::new(vec![1, BOX_FEATURES], bv.to_vec())?);
    Ok(Some(g.concat(pooled, bv, 1)?))
}
