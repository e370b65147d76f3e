use super::grid::GridSpec;
use super::loss::decode_box;
use super::net::HEAD_OUTPUTS;
use crate::autodiff::{sigmoid, Array};
use crate::geometry::{nms, Detection, IouMode, NUM_CLASSES};

/// Decoded log sizes are clamped to this magnitude so a wild residual cannot
/// produce infinite boxes.
pub const MAX_LOG_SIZE: f64 = 6.0;

/// A thresholded cell prediction before suppression.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub cell: usize,
    pub detection: Detection,
}

fn decode_cell(head: &Array, spec: &GridSpec, cell: usize) -> Detection {
    let row = &head.data()[cell * HEAD_OUTPUTS..(cell + 1) * HEAD_OUTPUTS];
    let mut conf = [0.0; NUM_CLASSES];
    for (c, &x) in conf.iter_mut().zip(row) {
        *c = sigmoid(x);
    }
    let mut r = [0.0; HEAD_OUTPUTS - NUM_CLASSES];
    r.copy_from_slice(&row[NUM_CLASSES..]);
    for v in &mut r[3..6] {
        *v = v.clamp(-MAX_LOG_SIZE, MAX_LOG_SIZE);
    }
    let cols = spec.cols();
    Detection { bbox: decode_box(&r, spec, cell / cols, cell % cols), conf }
}

/// Cells whose highest class confidence reaches `threshold`, in cell order.
pub fn candidates(head: &Array, spec: &GridSpec, threshold: f64) -> Vec<Candidate> {
    debug_assert_eq!(head.shape(), &[spec.num_cells(), HEAD_OUTPUTS]);
    (0..spec.num_cells())
        .filter(|&cell| {
            let row = &head.data()[cell * HEAD_OUTPUTS..cell * HEAD_OUTPUTS + NUM_CLASSES];
            row.iter().any(|&x| sigmoid(x) >= threshold)
        })
        .map(|cell| Candidate { cell, detection: decode_cell(head, spec, cell) })
        .collect()
}

/// Thresholded cells followed by class-wise BEV suppression.
pub fn decode_detections(head: &Array, spec: &GridSpec, threshold: f64, nms_iou: f64) -> Vec<Detection> {
    let dets: Vec<Detection> = candidates(head, spec, threshold).into_iter().map(|c| c.detection).collect();
    nms(&dets, nms_iou, IouMode::Bev)
}
