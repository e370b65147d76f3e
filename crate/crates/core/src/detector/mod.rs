//! Toy BEV detector: grid featurization, a two-layer local-window network,
//! a per-cell head, the detection loss and decoding.
mod checkpoint;
mod decode;
mod grid;
mod loss;
mod net;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CheckpointMeta, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION, GRID_RECORD, GROUND_SHIFT_RECORD,
};
pub use decode::{candidates, decode_detections, Candidate, MAX_LOG_SIZE};
pub use grid::{featurize, BevGrid, GridSpec, RAW_FEATURES};
pub use loss::{build_targets, decode_box, detection_loss, encode_box, DetectionLoss, Targets, REG_WEIGHT};
pub use net::{Detector, Forward, BOX_RESIDUALS, CLASS_PRIOR, HEAD_OUTPUTS, PARAM_NAMES, SECOND_LAYER_DILATION};
