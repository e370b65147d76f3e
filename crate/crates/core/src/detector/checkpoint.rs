use std::fs;
use std::path::Path;

use super::grid::GridSpec;
use super::net::Detector;
use crate::autodiff::{Array, ParamStore};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"UADA";
pub const CHECKPOINT_VERSION: u32 = 1;
/// Record holding `[x_min, x_max, y_min, y_max, cell]` of the training grid.
pub const GRID_RECORD: &str = "meta.grid";
/// Record holding 1 when scans were moved to ground level before featurizing.
pub const GROUND_SHIFT_RECORD: &str = "meta.ground_shift";

/// Preprocessing a detector was trained under, stored after its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CheckpointMeta {
    pub grid: Option<GridSpec>,
    pub ground_shift: Option<bool>,
}

impl CheckpointMeta {
    pub fn new(grid: GridSpec, ground_shift: bool) -> Self {
        Self { grid: Some(grid), ground_shift: Some(ground_shift) }
    }
}

fn push_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

fn push_record(out: &mut Vec<u8>, name: &str, value: &Array) {
    push_u32(out, name.len());
    out.extend_from_slice(name.as_bytes());
    push_u32(out, value.shape().len());
    for &d in value.shape() {
        push_u32(out, d);
    }
    for v in value.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

/// Serializes every parameter in store order, followed by the meta records.
pub fn encode_checkpoint(det: &Detector, meta: &CheckpointMeta) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    for (name, value) in det.store.iter() {
        push_record(&mut out, name, value);
    }
    if let Some(grid) = &meta.grid {
        let g = Array::vector(vec![grid.x_range.0, grid.x_range.1, grid.y_range.0, grid.y_range.1, grid.cell]);
        push_record(&mut out, GRID_RECORD, &g);
    }
    if let Some(shift) = meta.ground_shift {
        push_record(&mut out, GROUND_SHIFT_RECORD, &Array::vector(vec![if shift { 1.0 } else { 0.0 }]));
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self
            .at
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format("checkpoint is truncated".into()))?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }
}

/// Parses a checkpoint into a detector and whatever meta records it holds.
pub fn decode_checkpoint(bytes: &[u8]) -> Result<(Detector, CheckpointMeta)> {
    let mut r = Reader { bytes, at: 0 };
    if r.take(4).ok() != Some(CHECKPOINT_MAGIC.as_slice()) {
        return Err(Error::Format("not a UADA checkpoint".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION as usize {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let mut store = ParamStore::new();
    let mut meta = CheckpointMeta::default();
    while r.at < bytes.len() {
        let n = r.u32()?;
        let name = std::str::from_utf8(r.take(n)?)
            .map_err(|_| Error::Format("parameter name is not UTF-8".into()))?
            .to_string();
        let rank = r.u32()?;
        let shape = (0..rank).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        let count = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .filter(|&c| c <= bytes.len() / 8)
            .ok_or_else(|| Error::Format(format!("parameter {name} has an impossible shape {shape:?}")))?;
        let data: Vec<f64> = r
            .take(8 * count)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let value = Array::new(shape, data)?;
        if name == GRID_RECORD {
            let g = value.data();
            if g.len() != 5 {
                return Err(Error::Format("grid record must hold 5 values".into()));
            }
            meta.grid = Some(GridSpec { x_range: (g[0], g[1]), y_range: (g[2], g[3]), cell: g[4] });
        } else if name == GROUND_SHIFT_RECORD {
            meta.ground_shift = match value.data() {
                [v] if *v == 0.0 || *v == 1.0 => Some(*v == 1.0),
                _ => return Err(Error::Format("ground shift record must hold a single 0 or 1".into())),
            };
        } else if store.id_by_name(&name).is_some() {
            return Err(Error::Format(format!("duplicate parameter {name}")));
        } else {
            store.add(name, value);
        }
    }
    Ok((Detector::from_store(store)?, meta))
}

pub fn save_checkpoint(path: &Path, det: &Detector, meta: &CheckpointMeta) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, encode_checkpoint(det, meta))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(Detector, CheckpointMeta)> {
    decode_checkpoint(&fs::read(path)?)
}
