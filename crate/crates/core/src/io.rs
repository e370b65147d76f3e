//! On-disk formats: binary scans, text labels and generated dataset trees.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cloud::{Point, PointCloud};
use crate::error::{Error, Result};
use crate::geometry::{Box3D, LabeledBox, ObjectClass};
use crate::synthgen::{Domain, DomainProfile, Scene};

pub const SCAN_MAGIC: &[u8; 4] = b"PCLD";
pub const SCAN_VERSION: u32 = 1;
const POINT_BYTES: usize = 18;

pub fn encode_scan(scan: &PointCloud) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + POINT_BYTES * scan.len());
    out.extend_from_slice(SCAN_MAGIC);
    out.extend_from_slice(&SCAN_VERSION.to_le_bytes());
    out.extend_from_slice(&(scan.len() as u32).to_le_bytes());
    for p in &scan.points {
        for v in [p.x as f32, p.y as f32, p.z as f32, p.intensity] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&p.ring.to_le_bytes());
    }
    out
}

pub fn decode_scan(bytes: &[u8]) -> Result<PointCloud> {
    if bytes.len() < 12 || &bytes[..4] != SCAN_MAGIC {
        return Err(Error::Format("not a PCLD scan".into()));
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"));
    let version = word(4);
    if version != SCAN_VERSION {
        return Err(Error::Format(format!("unsupported scan version {version}")));
    }
    let count = word(8) as usize;
    let payload = &bytes[12..];
    if payload.len() != count * POINT_BYTES {
        return Err(Error::Format(format!(
            "scan declares {count} points but carries {} bytes",
            payload.len()
        )));
    }
    let points = payload
        .chunks_exact(POINT_BYTES)
        .map(|c| {
            let f = |i: usize| f32::from_le_bytes(c[4 * i..4 * i + 4].try_into().expect("4 bytes"));
            Point {
                x: f64::from(f(0)),
                y: f64::from(f(1)),
                z: f64::from(f(2)),
                intensity: f(3),
                ring: u16::from_le_bytes([c[16], c[17]]),
            }
        })
        .collect();
    Ok(PointCloud { points })
}

pub fn format_label(lb: &LabeledBox) -> String {
    let b = &lb.bbox;
    format!(
        "{} {:.6} {:.6} {:.6} {:.6} {:.6} {:.6} {:.6}",
        lb.class.index(),
        b.cx,
        b.cy,
        b.cz,
        b.l,
        b.w,
        b.h,
        b.yaw
    )
}

pub fn parse_label_line(line: &str) -> Result<LabeledBox> {
    let bad = |why: &str| Error::Format(format!("label '{line}': {why}"));
    let fields: Vec<&str> = line.split(' ').collect();
    if fields.len() != 8 {
        return Err(bad("expected 8 space-separated fields"));
    }
    let class = fields[0]
        .parse::<usize>()
        .ok()
        .and_then(ObjectClass::from_index)
        .ok_or_else(|| bad("class id must be 0, 1 or 2"))?;
    let mut v = [0.0; 7];
    for (slot, text) in v.iter_mut().zip(&fields[1..]) {
        *slot = text.parse().map_err(|_| bad("non-numeric field"))?;
    }
    let bbox = Box3D::new([v[0], v[1], v[2]], [v[3], v[4], v[5]], v[6]).map_err(|e| bad(&e.to_string()))?;
    Ok(LabeledBox { bbox, class })
}

pub fn format_labels(labels: &[LabeledBox]) -> String {
    let mut s = String::new();
    for lb in labels {
        let _ = writeln!(s, "{}", format_label(lb));
    }
    s
}

pub fn parse_labels(text: &str) -> Result<Vec<LabeledBox>> {
    if !text.is_empty() && !text.ends_with('\n') {
        return Err(Error::Format("label file must end with a newline".into()));
    }
    text.lines().map(parse_label_line).collect()
}

/// The box as it reads back from its label line.
pub fn canonical_label(lb: &LabeledBox) -> LabeledBox {
    parse_label_line(&format_label(lb)).expect("formatted labels parse")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub scan: String,
    pub labels: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub profile: DomainProfile,
    pub seed: u64,
    pub n_scenes: usize,
    pub files: Vec<ManifestEntry>,
}

fn is_nonempty_dir(dir: &Path) -> Result<bool> {
    if !dir.exists() {
        return Ok(false);
    }
    Ok(fs::read_dir(dir)?.next().is_some())
}

/// Writes `scans/`, `labels/` and `manifest.json` under `dir`.
pub fn write_dataset(dir: &Path, profile: &DomainProfile, seed: u64, scenes: &[Scene], force: bool) -> Result<Manifest> {
    if !force && is_nonempty_dir(dir)? {
        return Err(Error::Config(format!(
            "{} exists and is not empty (use --force to overwrite)",
            dir.display()
        )));
    }
    fs::create_dir_all(dir.join("scans"))?;
    fs::create_dir_all(dir.join("labels"))?;
    let mut files = Vec::with_capacity(scenes.len());
    for (i, s) in scenes.iter().enumerate() {
        let entry = ManifestEntry {
            scan: format!("scans/{i:06}.pcld"),
            labels: format!("labels/{i:06}.txt"),
        };
        fs::write(dir.join(&entry.scan), encode_scan(&s.scan))?;
        fs::write(dir.join(&entry.labels), format_labels(&s.labels))?;
        files.push(entry);
    }
    let manifest = Manifest {
        profile: profile.clone(),
        seed,
        n_scenes: scenes.len(),
        files,
    };
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join("manifest.json");
    let text = fs::read_to_string(&path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

/// Loads one scene of a dataset. Labels are required only if `with_labels`.
pub fn read_scene(dir: &Path, entry: &ManifestEntry, domain: Domain, with_labels: bool) -> Result<Scene> {
    let scan = decode_scan(&fs::read(dir.join(&entry.scan))?)?;
    let labels = if with_labels {
        let path: PathBuf = dir.join(&entry.labels);
        let text = fs::read_to_string(&path)
            .map_err(|e| Error::Config(format!("missing labels {}: {e}", path.display())))?;
        parse_labels(&text)?
    } else {
        Vec::new()
    };
    Ok(Scene { scan, labels, domain })
}

pub fn read_dataset(dir: &Path, domain: Domain, with_labels: bool) -> Result<(Manifest, Vec<Scene>)> {
    let manifest = read_manifest(dir)?;
    let scenes = manifest
        .files
        .iter()
        .map(|e| read_scene(dir, e, domain, with_labels))
        .collect::<Result<Vec<_>>>()?;
    Ok((manifest, scenes))
}
