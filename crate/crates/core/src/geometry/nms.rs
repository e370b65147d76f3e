use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::{iou_3d, iou_bev, Box3D, Detection};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IouMode {
    Bev,
    #[serde(rename = "3d")]
    ThreeD,
}

impl IouMode {
    pub fn iou(self, a: &Box3D, b: &Box3D) -> f64 {
        match self {
            IouMode::Bev => iou_bev(a, b),
            IouMode::ThreeD => iou_3d(a, b),
        }
    }
}

/// Score descending, then lower center x, then lower center y.
pub(crate) fn score_order(a: &Detection, b: &Detection) -> Ordering {
    b.score()
        .total_cmp(&a.score())
        .then(a.bbox.cx.total_cmp(&b.bbox.cx))
        .then(a.bbox.cy.total_cmp(&b.bbox.cy))
}

/// Greedy class-wise suppression. Returns indices into `dets` of the kept
/// detections, highest score first.
pub fn nms_indices(dets: &[Detection], iou_threshold: f64, mode: IouMode) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&i, &j| score_order(&dets[i], &dets[j]).then(i.cmp(&j)));
    let mut kept: Vec<usize> = Vec::new();
    for i in order {
        let d = &dets[i];
        let class = d.class();
        let suppressed = kept.iter().any(|&k| {
            dets[k].class() == class && mode.iou(&dets[k].bbox, &d.bbox) >= iou_threshold
        });
        if !suppressed {
            kept.push(i);
        }
    }
    kept
}

pub fn nms(dets: &[Detection], iou_threshold: f64, mode: IouMode) -> Vec<Detection> {
    nms_indices(dets, iou_threshold, mode)
        .into_iter()
        .map(|i| dets[i])
        .collect()
}
