use super::grid::GridSpec;
use super::net::{BOX_RESIDUALS, HEAD_OUTPUTS};
use crate::autodiff::{Array, Graph, Tensor};
use crate::error::Result;
use crate::geometry::{normalize_yaw, Box3D, LabeledBox, NUM_CLASSES};

/// Weight of the regression term relative to classification.
pub const REG_WEIGHT: f64 = 2.0;

/// Residuals of `b` relative to the center of cell `(i, j)`.
///
/// The heading is encoded at twice its angle: a box and its copy turned by
/// half a revolution have the same footprint, and the points cannot tell
/// them apart, so both map to the same target.
pub fn encode_box(b: &Box3D, spec: &GridSpec, i: usize, j: usize) -> [f64; BOX_RESIDUALS] {
    let (x0, y0) = spec.cell_center(i, j);
    let (s, c) = (2.0 * b.yaw).sin_cos();
    [
        (b.cx - x0) / spec.cell,
        (b.cy - y0) / spec.cell,
        b.cz,
        b.l.ln(),
        b.w.ln(),
        b.h.ln(),
        s,
        c,
    ]
}

/// Inverse of [`encode_box`] up to half a turn of heading; the yaw is
/// `atan2(sin, cos) / 2` and lies in `(-pi/2, pi/2]`.
pub fn decode_box(r: &[f64], spec: &GridSpec, i: usize, j: usize) -> Box3D {
    let (x0, y0) = spec.cell_center(i, j);
    let yaw = normalize_yaw(0.5 * r[6].atan2(r[7]));
    Box3D {
        cx: x0 + r[0] * spec.cell,
        cy: y0 + r[1] * spec.cell,
        cz: r[2],
        l: r[3].exp(),
        w: r[4].exp(),
        h: r[5].exp(),
        yaw,
    }
}

/// Per-cell training targets of one scene.
#[derive(Debug, Clone, PartialEq)]
pub struct Targets {
    /// `[cells, NUM_CLASSES]` one-hot at positive cells.
    pub classes: Array,
    pub positive_cells: Vec<usize>,
    /// `[positives, BOX_RESIDUALS]`.
    pub residuals: Array,
    /// Labels whose center falls outside the grid.
    pub skipped: usize,
    /// Labels that landed on a cell already taken by another label.
    pub collisions: usize,
}

/// A label is assigned to the cell holding its center.
pub fn build_targets(labels: &[LabeledBox], spec: &GridSpec) -> Result<Targets> {
    let cols = spec.cols();
    let mut classes = vec![0.0; spec.num_cells() * NUM_CLASSES];
    let mut positive_cells = Vec::new();
    let mut residuals = Vec::new();
    let (mut skipped, mut collisions) = (0, 0);
    for lb in labels {
        let Some((i, j)) = spec.cell_of(lb.bbox.cx, lb.bbox.cy) else {
            skipped += 1;
            continue;
        };
        let cell = i * cols + j;
        if positive_cells.contains(&cell) {
            collisions += 1;
            continue;
        }
        classes[cell * NUM_CLASSES + lb.class.index()] = 1.0;
        positive_cells.push(cell);
        residuals.extend_from_slice(&encode_box(&lb.bbox, spec, i, j));
    }
    if skipped > 0 {
        log::warn!("{skipped} label(s) outside the grid were skipped");
    }
    let n = positive_cells.len();
    Ok(Targets {
        classes: Array::new(vec![spec.num_cells(), NUM_CLASSES], classes)?,
        positive_cells,
        residuals: Array::new(vec![n, BOX_RESIDUALS], residuals)?,
        skipped,
        collisions,
    })
}

/// Detection loss terms as graph nodes.
#[derive(Debug, Clone, Copy)]
pub struct DetectionLoss {
    pub classification: Tensor,
    pub regression: Option<Tensor>,
    pub total: Tensor,
}

/// Per-cell BCE on the class logits plus L1 on the residuals of positive
/// cells, both normalized by the number of positives (at least one).
pub fn detection_loss(g: &mut Graph, head: Tensor, targets: &Targets) -> Result<DetectionLoss> {
    debug_assert_eq!(g.shape(head)[1], HEAD_OUTPUTS);
    let norm = 1.0 / targets.positive_cells.len().max(1) as f64;
    let logits = g.slice_cols(head, 0, NUM_CLASSES)?;
    let bce = g.bce_with_logits(logits, &targets.classes)?;
    let cls = g.sum(bce)?;
    let cls = g.scalar_mul(cls, norm);
    if targets.positive_cells.is_empty() {
        return Ok(DetectionLoss { classification: cls, regression: None, total: cls });
    }
    let rows = g.gather_rows(head, &targets.positive_cells)?;
    let pred = g.slice_cols(rows, NUM_CLASSES, HEAD_OUTPUTS)?;
    let want = g.constant(targets.residuals.clone());
    let diff = g.sub(pred, want)?;
    let l1 = g.abs(diff);
    let reg = g.sum(l1)?;
    let reg = g.scalar_mul(reg, norm);
    let weighted = g.scalar_mul(reg, REG_WEIGHT);
    let total = g.add(cls, weighted)?;
    Ok(DetectionLoss { classification: cls, regression: Some(reg), total })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{grad_check, grad_check_params, LOGIT_CLAMP};
    use crate::cloud::{Point, PointCloud};
    use crate::detector::{featurize, Detector};
    use crate::geometry::ObjectClass;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn spec() -> GridSpec {
        GridSpec { x_range: (0.0, 3.0), y_range: (0.0, 2.5), cell: 0.5 }
    }

    fn one_label() -> Vec<LabeledBox> {
        vec![LabeledBox {
            bbox: Box3D::new([1.3, 1.1, 0.85], [0.8, 0.7, 1.7], 0.6).unwrap(),
            class: ObjectClass::Pedestrian,
        }]
    }

    #[test]
    fn decode_of_neutral_residuals() {
        let s = spec();
        let r = [0.0, 0.0, 0.4, 2f64.ln(), 1.5f64.ln(), 1.2f64.ln(), 0.0, 1.0];
        let b = decode_box(&r, &s, 2, 3);
        let (x, y) = s.cell_center(2, 3);
        assert_eq!((b.cx, b.cy, b.cz, b.yaw), (x, y, 0.4, 0.0));
        assert!((b.l - 2.0).abs() < 1e-15 && (b.w - 1.5).abs() < 1e-15 && (b.h - 1.2).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn residual_round_trip(dx in -1.0..1.0f64, dy in -1.0..1.0f64, z in -1.0..3.0f64,
                               ll in -1.0..2.0f64, lw in -1.0..1.0f64, lh in -1.0..1.0f64, yaw in -3.14..3.14f64) {
            let s = spec();
            let r = [dx, dy, z, ll, lw, lh, yaw.sin(), yaw.cos()];
            let b = decode_box(&r, &s, 1, 2);
            prop_assert!(b.yaw > -std::f64::consts::PI && b.yaw <= std::f64::consts::PI);
            let back = encode_box(&b, &s, 1, 2);
            for k in 0..8 {
                prop_assert!((back[k] - r[k]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn targets_skip_labels_outside_grid() {
        let mut labels = one_label();
        labels.push(LabeledBox {
            bbox: Box3D::new([10.0, 1.0, 0.5], [1.0, 1.0, 1.0], 0.0).unwrap(),
            class: ObjectClass::Vehicle,
        });
        let t = build_targets(&labels, &spec()).unwrap();
        assert_eq!(t.skipped, 1);
        assert_eq!(t.positive_cells, vec![2 * 5 + 2]);
        assert_eq!(t.classes.data().iter().sum::<f64>(), 1.0);
    }

    /// Loss of a head that reproduces the targets exactly, with saturated logits.
    fn perfect_loss(s: &GridSpec, labels: &[LabeledBox]) -> (f64, f64) {
        let t = build_targets(labels, s).unwrap();
        let mut head = vec![-40.0; s.num_cells() * HEAD_OUTPUTS];
        for (p, &cell) in t.positive_cells.iter().enumerate() {
            let row = &mut head[cell * HEAD_OUTPUTS..(cell + 1) * HEAD_OUTPUTS];
            for k in 0..NUM_CLASSES {
                row[k] = if t.classes.data()[cell * NUM_CLASSES + k] == 1.0 { 40.0 } else { -40.0 };
            }
            row[NUM_CLASSES..].copy_from_slice(&t.residuals.data()[p * BOX_RESIDUALS..(p + 1) * BOX_RESIDUALS]);
        }
        let mut g = Graph::new();
        let h = g.constant(Array::new(vec![s.num_cells(), HEAD_OUTPUTS], head).unwrap());
        let loss = detection_loss(&mut g, h, &t).unwrap();
        (g.value(loss.total).item(), g.value(loss.regression.unwrap()).item())
    }

    #[test]
    fn perfect_prediction_sits_on_the_clamp_floor() {
        let s = spec();
        let (total, reg) = perfect_loss(&s, &one_label());
        let floor = (s.num_cells() * NUM_CLASSES) as f64 * (-LOGIT_CLAMP).exp().ln_1p();
        assert!((total - floor).abs() < 1e-12);
        assert_eq!(reg, 0.0);
        let small = GridSpec { x_range: (0.0, 1.5), y_range: (0.0, 1.5), cell: 0.5 };
        let lb = LabeledBox { bbox: Box3D::new([0.7, 0.8, 0.85], [0.8, 0.7, 1.7], 0.3).unwrap(), class: ObjectClass::Cyclist };
        assert!(perfect_loss(&small, &[lb]).0 < 1e-5);
    }

    #[test]
    fn half_turn_shares_residuals() {
        let s = spec();
        let a = Box3D::new([1.3, 1.1, 0.85], [1.8, 0.6, 1.7], 0.4).unwrap();
        let b = Box3D { yaw: normalize_yaw(a.yaw + std::f64::consts::PI), ..a };
        let (ra, rb) = (encode_box(&a, &s, 2, 2), encode_box(&b, &s, 2, 2));
        for k in 0..BOX_RESIDUALS {
            assert!((ra[k] - rb[k]).abs() < 1e-12);
        }
        assert!((decode_box(&rb, &s, 2, 2).yaw - 0.4).abs() < 1e-12);
    }

    #[test]
    fn empty_scene_is_pure_negative_bce() {
        let s = spec();
        let t = build_targets(&[], &s).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let vals: Vec<f64> = (0..s.num_cells() * HEAD_OUTPUTS).map(|_| rng.random_range(-3.0..3.0)).collect();
        let mut g = Graph::new();
        let h = g.constant(Array::new(vec![s.num_cells(), HEAD_OUTPUTS], vals.clone()).unwrap());
        let loss = detection_loss(&mut g, h, &t).unwrap();
        assert!(loss.regression.is_none());
        let want: f64 = (0..s.num_cells())
            .flat_map(|c| (0..NUM_CLASSES).map(move |k| c * HEAD_OUTPUTS + k))
            .map(|i| (1.0 + vals[i].exp()).ln())
            .sum();
        assert!((g.value(loss.total).item() - want).abs() < 1e-10);
    }

    #[test]
    fn loss_gradient_wrt_head_matches_finite_differences() {
        let s = spec();
        let t = build_targets(&one_label(), &s).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let head = Array::new(
            vec![s.num_cells(), HEAD_OUTPUTS],
            (0..s.num_cells() * HEAD_OUTPUTS).map(|_| rng.random_range(-2.0..2.0)).collect(),
        )
        .unwrap();
        let err = grad_check(|g, x| Ok(detection_loss(g, x, &t)?.total), &head, 1e-5).unwrap();
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn loss_gradient_wrt_every_parameter() {
        let s = spec();
        let labels = one_label();
        let t = build_targets(&labels, &s).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut det = Detector::new(3, &mut rng).unwrap();
        for name in ["conv1.b", "conv2.b", "head.b"] {
            let id = det.store.id_by_name(name).unwrap();
            for v in det.store.value_mut(id).data_mut() {
                *v = rng.random_range(0.05..0.3);
            }
        }
        let pts: Vec<Point> = (0..30)
            .map(|_| Point {
                x: rng.random_range(0.0..3.0),
                y: rng.random_range(0.0..2.5),
                z: rng.random_range(0.0..1.7),
                intensity: 0.5,
                ring: 0,
            })
            .collect();
        let grid = featurize(&PointCloud::new(pts), &s).unwrap();
        let err = grad_check_params(
            &det.store,
            |g, store| {
                let d = Detector::from_store(store.clone())?;
                let f = d.forward(g, &grid)?;
                Ok(detection_loss(g, f.head, &t)?.total)
            },
            1e-5,
            1,
        )
        .unwrap();
        assert!(err < 1e-4, "{err}");
    }
}
