use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::Scene;
use crate::error::{Error, Result};
use crate::geometry::{contains, ObjectClass, NUM_CLASSES};

/// Width of a distance bin, meters.
pub const DISTANCE_BIN: f64 = 5.0;
/// Width of a points-per-object bin.
pub const POINTS_BIN: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectRecord {
    pub class: ObjectClass,
    pub distance: f64,
    pub points: usize,
}

/// Per-class histograms. Bins are keyed by their lower edge.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ClassStats {
    pub distance_hist: BTreeMap<u32, usize>,
    pub points_hist: BTreeMap<usize, usize>,
    /// Absent when the class has no objects.
    pub mean_points: Option<f64>,
    /// Mean points per object within each distance bin.
    pub band_mean_points: BTreeMap<u32, f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DatasetStats {
    pub classes: [ClassStats; NUM_CLASSES],
}

fn distance_bin(d: f64) -> u32 {
    ((d / DISTANCE_BIN).floor() * DISTANCE_BIN) as u32
}

pub fn object_records(scenes: &[Scene]) -> Vec<ObjectRecord> {
    let mut out = Vec::new();
    for s in scenes {
        for lb in &s.labels {
            let b = &lb.bbox;
            let r = b.bev_radius();
            let points = s
                .scan
                .points
                .iter()
                .filter(|p| (p.x - b.cx).abs() <= r && (p.y - b.cy).abs() <= r && contains(b, p.xyz()))
                .count();
            out.push(ObjectRecord {
                class: lb.class,
                distance: b.cx.hypot(b.cy),
                points,
            });
        }
    }
    out
}

pub fn stats_from_records(records: &[ObjectRecord]) -> DatasetStats {
    let mut stats = DatasetStats::default();
    let mut totals = [(0usize, 0usize); NUM_CLASSES];
    let mut bands: [BTreeMap<u32, (usize, usize)>; NUM_CLASSES] = Default::default();
    for r in records {
        let k = r.class.index();
        let c = &mut stats.classes[k];
        let band = distance_bin(r.distance);
        *c.distance_hist.entry(band).or_default() += 1;
        *c.points_hist.entry(r.points / POINTS_BIN * POINTS_BIN).or_default() += 1;
        totals[k].0 += r.points;
        totals[k].1 += 1;
        let e = bands[k].entry(band).or_default();
        e.0 += r.points;
        e.1 += 1;
    }
    for k in 0..NUM_CLASSES {
        let (sum, n) = totals[k];
        stats.classes[k].mean_points = (n > 0).then(|| sum as f64 / n as f64);
        stats.classes[k].band_mean_points = bands[k]
            .iter()
            .map(|(&b, &(s, n))| (b, s as f64 / n as f64))
            .collect();
    }
    stats
}

pub fn dataset_stats(scenes: &[Scene]) -> DatasetStats {
    stats_from_records(&object_records(scenes))
}

impl DatasetStats {
    /// One row per histogram bin or mean: `class,kind,bin,value`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("class,kind,bin,value\n");
        for class in ObjectClass::ALL {
            let c = &self.classes[class.index()];
            for (b, n) in &c.distance_hist {
                let _ = writeln!(s, "{class},distance,{b},{n}");
            }
            for (b, n) in &c.points_hist {
                let _ = writeln!(s, "{class},points,{b},{n}");
            }
            if let Some(m) = c.mean_points {
                let _ = writeln!(s, "{class},mean_points,,{m}");
            }
            for (b, m) in &c.band_mean_points {
                let _ = writeln!(s, "{class},band_mean_points,{b},{m}");
            }
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |line: &str| Error::Format(format!("bad stats row '{line}'"));
        let mut stats = DatasetStats::default();
        for line in text.lines().skip(1).filter(|l| !l.is_empty()) {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 {
                return Err(bad(line));
            }
            let class = ObjectClass::ALL
                .into_iter()
                .find(|c| c.name() == f[0])
                .ok_or_else(|| bad(line))?;
            let c = &mut stats.classes[class.index()];
            match f[1] {
                "distance" => {
                    c.distance_hist.insert(f[2].parse().map_err(|_| bad(line))?, f[3].parse().map_err(|_| bad(line))?);
                }
                "points" => {
                    c.points_hist.insert(f[2].parse().map_err(|_| bad(line))?, f[3].parse().map_err(|_| bad(line))?);
                }
                "mean_points" => c.mean_points = Some(f[3].parse().map_err(|_| bad(line))?),
                "band_mean_points" => {
                    c.band_mean_points.insert(f[2].parse().map_err(|_| bad(line))?, f[3].parse().map_err(|_| bad(line))?);
                }
                _ => return Err(bad(line)),
            }
        }
        Ok(stats)
    }
}
