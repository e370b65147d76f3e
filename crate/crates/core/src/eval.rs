//! Detection metrics: per-class average precision in 3D and BEV, mean AP,
//! and the change / closed-gap summary between runs.

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::adapt::DomainData;
use crate::detector::{decode_detections, featurize, load_checkpoint, CheckpointMeta, Detector, GridSpec};
use crate::error::{Error, Result};
use crate::geometry::{Detection, IouMode, LabeledBox, ObjectClass, NUM_CLASSES};
use crate::io::read_dataset;
use crate::synthgen::Domain;

/// Recall levels of the interpolated precision-recall curve.
pub const RECALL_POINTS: usize = 40;

/// Cumulative detection counts at one score threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrPoint {
    pub threshold: f64,
    pub tp: usize,
    pub fp: usize,
}

/// Detections of one class across scenes in [`rank_order`].
fn ranked(preds: &[Vec<Detection>], class: ObjectClass) -> Vec<(usize, Detection)> {
    let mut out: Vec<(usize, Detection)> = preds
        .iter()
        .enumerate()
        .flat_map(|(s, ds)| ds.iter().filter(|d| d.class() == class).map(move |d| (s, *d)))
        .collect();
    out.sort_by(rank_order);
    out
}

/// Greedy matching in rank order: each prediction takes the unmatched
/// ground truth of its scene with the highest IoU, if that reaches
/// `iou_threshold`. Returns the true-positive flag of every ranked prediction.
fn match_ranked(
    ranked: &[(usize, Detection)],
    gts: &[Vec<LabeledBox>],
    class: ObjectClass,
    iou_threshold: f64,
    mode: IouMode,
) -> Vec<bool> {
    let mut used: Vec<Vec<bool>> = gts.iter().map(|g| vec![false; g.len()]).collect();
    ranked
        .iter()
        .map(|(s, d)| {
            let mut best: Option<(usize, f64)> = None;
            for (i, gt) in gts[*s].iter().enumerate() {
                if gt.class != class || used[*s][i] {
                    continue;
                }
                let iou = mode.iou(&d.bbox, &gt.bbox);
                if iou >= iou_threshold && best.is_none_or(|(_, b)| iou > b) {
                    best = Some((i, iou));
                }
            }
            if let Some((i, _)) = best {
                used[*s][i] = true;
            }
            best.is_some()
        })
        .collect()
}

fn count_gt(gts: &[Vec<LabeledBox>], class: ObjectClass) -> usize {
    gts.iter().flatten().filter(|g| g.class == class).count()
}

/// One point per distinct score, cumulative over everything at or above it.
pub fn pr_curve(
    preds: &[Vec<Detection>],
    gts: &[Vec<LabeledBox>],
    class: ObjectClass,
    iou_threshold: f64,
    mode: IouMode,
) -> Vec<PrPoint> {
    let ranked = ranked(preds, class);
    let tp = match_ranked(&ranked, gts, class, iou_threshold, mode);
    let mut out: Vec<PrPoint> = Vec::new();
    let (mut ntp, mut nfp) = (0, 0);
    for (i, ((_, d), &hit)) in ranked.iter().zip(&tp).enumerate() {
        if hit {
            ntp += 1;
        } else {
            nfp += 1;
        }
        let last_of_level = ranked.get(i + 1).is_none_or(|(_, n)| n.score() != d.score());
        if last_of_level {
            out.push(PrPoint { threshold: d.score(), tp: ntp, fp: nfp });
        }
    }
    out
}

/// Mean over recall levels `1/40, …, 1` of the best precision reached at
/// or beyond that recall.
pub fn interpolated_ap(points: &[PrPoint], n_gt: usize) -> f64 {
    let pr: Vec<(f64, f64)> = points
        .iter()
        .map(|p| (p.tp as f64 / n_gt as f64, p.tp as f64 / (p.tp + p.fp) as f64))
        .collect();
    let mut total = 0.0;
    for level in 1..=RECALL_POINTS {
        let r = level as f64 / RECALL_POINTS as f64;
        let best = pr
            .iter()
            .filter(|(rec, _)| *rec >= r)
            .map(|&(_, p)| p)
            .fold(0.0, f64::max);
        total += best;
    }
    total / RECALL_POINTS as f64
}

/// Average precision of one class; `None` when the class has no ground truth.
pub fn average_precision(
    preds: &[Vec<Detection>],
    gts: &[Vec<LabeledBox>],
    class: ObjectClass,
    iou_threshold: f64,
    mode: IouMode,
) -> Option<f64> {
    let n_gt = count_gt(gts, class);
    (n_gt > 0).then(|| interpolated_ap(&pr_curve(preds, gts, class, iou_threshold, mode), n_gt))
}

/// `(model − source) / (oracle − source) × 100`.
pub fn closed_gap(model: f64, source: f64, oracle: f64) -> Result<f64> {
    let denom = oracle - source;
    if denom == 0.0 {
        return Err(Error::UndefinedGap(source));
    }
    Ok((model - source) / denom * 100.0)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

/// Per-class AP in both modes plus class means. AP values are fractions in
/// `[0, 1]`; absent entries mean the class has no ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub ap3d: [Option<f64>; NUM_CLASSES],
    pub apbev: [Option<f64>; NUM_CLASSES],
    /// Matches at the class IoU threshold in 3D over all predictions.
    pub counts: [Counts; NUM_CLASSES],
}

fn mean_present(ap: &[Option<f64>; NUM_CLASSES], include: [bool; NUM_CLASSES]) -> f64 {
    let vals: Vec<f64> = (0..NUM_CLASSES)
        .filter(|&k| include[k])
        .map(|k| ap[k].unwrap_or(0.0))
        .collect();
    if vals.is_empty() {
        0.0
    } else {
        vals.iter().sum::<f64>() / vals.len() as f64
    }
}

impl EvalResult {
    pub fn has_gt(&self) -> [bool; NUM_CLASSES] {
        [0, 1, 2].map(|k| self.ap3d[k].is_some())
    }

    /// Mean over classes with ground truth in this run.
    pub fn map3d(&self) -> f64 {
        mean_present(&self.ap3d, self.has_gt())
    }

    pub fn mapbev(&self) -> f64 {
        mean_present(&self.apbev, self.has_gt())
    }

    /// Means over `classes`, counting an absent AP as zero.
    pub fn map_over(&self, classes: [bool; NUM_CLASSES]) -> (f64, f64) {
        (mean_present(&self.ap3d, classes), mean_present(&self.apbev, classes))
    }

    pub fn to_json(&self) -> Value {
        let mut m = Map::new();
        for class in ObjectClass::ALL {
            let k = class.index();
            m.insert(format!("ap3d_{class}"), json!(self.ap3d[k]));
            m.insert(format!("apbev_{class}"), json!(self.apbev[k]));
            m.insert(format!("counts_{class}"), json!(self.counts[k]));
        }
        m.insert("map3d".into(), json!(self.map3d()));
        m.insert("mapbev".into(), json!(self.mapbev()));
        Value::Object(m)
    }

    /// `class,ap3d,apbev,tp,fp,fn` rows; absent APs are empty fields.
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut s = String::from("class,ap3d,apbev,tp,fp,fn\n");
        for class in ObjectClass::ALL {
            let k = class.index();
            let c = self.counts[k];
            let _ = writeln!(s, "{class},{},{},{},{},{}", opt(self.ap3d[k]), opt(self.apbev[k]), c.tp, c.fp, c.fn_);
        }
        let _ = writeln!(s, "mean,{},{},,,", self.map3d(), self.mapbev());
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |line: &str| Error::Format(format!("bad evaluation row '{line}'"));
        let mut lines = text.lines();
        if lines.next() != Some("class,ap3d,apbev,tp,fp,fn") {
            return Err(Error::Format("evaluation CSV has an unexpected header".into()));
        }
        let mut out = EvalResult { ap3d: [None; 3], apbev: [None; 3], counts: [Counts::default(); 3] };
        let mut seen = [false; NUM_CLASSES];
        for line in lines.filter(|l| !l.is_empty()) {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(bad(line));
            }
            if f[0] == "mean" {
                continue;
            }
            let class = ObjectClass::ALL.into_iter().find(|c| c.name() == f[0]).ok_or_else(|| bad(line))?;
            let k = class.index();
            let opt = |s: &str| -> Result<Option<f64>> {
                if s.is_empty() {
                    Ok(None)
                } else {
                    s.parse().map(Some).map_err(|_| bad(line))
                }
            };
            out.ap3d[k] = opt(f[1])?;
            out.apbev[k] = opt(f[2])?;
            let n = |s: &str| s.parse::<usize>().map_err(|_| bad(line));
            out.counts[k] = Counts { tp: n(f[3])?, fp: n(f[4])?, fn_: n(f[5])? };
            seen[k] = true;
        }
        if seen.contains(&false) {
            return Err(Error::Format("evaluation CSV lacks a class row".into()));
        }
        Ok(out)
    }
}

/// Scores scene-aligned predictions against ground truth at the per-class
/// IoU thresholds.
pub fn evaluate_detections(preds: &[Vec<Detection>], gts: &[Vec<LabeledBox>]) -> Result<EvalResult> {
    if preds.len() != gts.len() {
        return Err(Error::Precondition(format!(
            "{} prediction lists for {} scenes",
            preds.len(),
            gts.len()
        )));
    }
    let mut out = EvalResult { ap3d: [None; 3], apbev: [None; 3], counts: [Counts::default(); 3] };
    for class in ObjectClass::ALL {
        let k = class.index();
        let thr = class.iou_threshold();
        out.ap3d[k] = average_precision(preds, gts, class, thr, IouMode::ThreeD);
        out.apbev[k] = average_precision(preds, gts, class, thr, IouMode::Bev);
        let ranked = ranked(preds, class);
        let hits = match_ranked(&ranked, gts, class, thr, IouMode::ThreeD);
        let tp = hits.iter().filter(|&&h| h).count();
        out.counts[k] = Counts { tp, fp: hits.len() - tp, fn_: count_gt(gts, class) - tp };
    }
    Ok(out)
}

/// Detection settings used when scoring a model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalSettings {
    pub conf_threshold: f64,
    pub nms_iou: f64,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self { conf_threshold: 0.1, nms_iou: 0.25 }
    }
}

/// Runs the detector on preprocessed labeled scenes and scores it.
pub fn evaluate_model(
    det: &Detector,
    scans: &[(crate::cloud::PointCloud, Vec<LabeledBox>)],
    spec: &GridSpec,
    settings: &EvalSettings,
) -> Result<EvalResult> {
    if scans.is_empty() {
        return Err(Error::Config("cannot evaluate on an empty dataset".into()));
    }
    let mut preds = Vec::with_capacity(scans.len());
    let mut gts = Vec::with_capacity(scans.len());
    for (scan, labels) in scans {
        let grid = featurize(scan, spec)?;
        let head = det.predict(&grid)?;
        preds.push(decode_detections(&head, spec, settings.conf_threshold, settings.nms_iou));
        gts.push(labels.clone());
    }
    evaluate_detections(&preds, &gts)
}

/// Scores `det` on `data` under the preprocessing recorded in `meta`. The
/// network is convolutional, so grids may differ in extent but not in cell
/// size.
pub fn evaluate_with_meta(
    det: &Detector,
    meta: &CheckpointMeta,
    data: &DomainData,
    settings: &EvalSettings,
) -> Result<EvalResult> {
    if let Some(g) = meta.grid {
        if (g.cell - data.grid.cell).abs() > 1e-12 {
            return Err(Error::Config(format!(
                "checkpoint was trained on {} m cells but the dataset uses {} m cells",
                g.cell, data.grid.cell
            )));
        }
    }
    let shift = meta.ground_shift.unwrap_or(false);
    let scans = (0..data.len()).map(|i| data.plain(i, shift)).collect::<Result<Vec<_>>>()?;
    evaluate_model(det, &scans, &data.grid, settings)
}

/// Loads a checkpoint and scores it on a labeled dataset directory.
pub fn evaluate_run(checkpoint: &Path, dataset: &Path, settings: &EvalSettings) -> Result<EvalResult> {
    let (det, meta) = load_checkpoint(checkpoint)?;
    let (manifest, scenes) = read_dataset(dataset, Domain::Target, true)?;
    evaluate_with_meta(&det, &meta, &DomainData::new(scenes, &manifest.profile), settings)
}

/// Change and closed gap of one adapted run against the two reference runs.
/// mAP values are taken over classes with ground truth in any of the three.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub map3d: f64,
    pub mapbev: f64,
    pub change3d: f64,
    pub changebev: f64,
    pub closedgap3d: Option<f64>,
    pub closedgapbev: Option<f64>,
}

pub fn gap_report(model: &EvalResult, source: &EvalResult, oracle: &EvalResult) -> GapReport {
    let classes = [0, 1, 2].map(|k| model.has_gt()[k] || source.has_gt()[k] || oracle.has_gt()[k]);
    let (m3, mb) = model.map_over(classes);
    let (s3, sb) = source.map_over(classes);
    let (o3, ob) = oracle.map_over(classes);
    GapReport {
        map3d: m3,
        mapbev: mb,
        change3d: m3 - s3,
        changebev: mb - sb,
        closedgap3d: closed_gap(m3, s3, o3).ok(),
        closedgapbev: closed_gap(mb, sb, ob).ok(),
    }
}

/// Descending score; ties go to the lower scene index, then lower center x
/// and y.
pub fn rank_order(a: &(usize, Detection), b: &(usize, Detection)) -> Ordering {
    b.1.score()
        .total_cmp(&a.1.score())
        .then(a.0.cmp(&b.0))
        .then(a.1.bbox.cx.total_cmp(&b.1.bbox.cx))
        .then(a.1.bbox.cy.total_cmp(&b.1.bbox.cy))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Box3D;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn gt(x: f64, y: f64, class: ObjectClass) -> LabeledBox {
        let [l, w, h] = class.mean_size();
        LabeledBox { bbox: Box3D::new([x, y, h / 2.0], [l, w, h], 0.0).unwrap(), class }
    }

    fn pred(b: &LabeledBox, score: f64) -> Detection {
        let mut conf = [0.0; 3];
        conf[b.class.index()] = score;
        Detection { bbox: b.bbox, conf }
    }

    #[test]
    fn identical_predictions_give_full_ap() {
        let gts = vec![vec![gt(5.0, 0.0, ObjectClass::Vehicle), gt(9.0, 3.0, ObjectClass::Vehicle)]];
        let preds = vec![gts[0].iter().map(|g| pred(g, 1.0)).collect()];
        for mode in [IouMode::Bev, IouMode::ThreeD] {
            assert_eq!(average_precision(&preds, &gts, ObjectClass::Vehicle, 0.7, mode), Some(1.0));
        }
        assert_eq!(average_precision(&preds, &gts, ObjectClass::Cyclist, 0.5, IouMode::Bev), None);
    }

    #[test]
    fn no_predictions_give_zero() {
        let gts = vec![vec![gt(5.0, 0.0, ObjectClass::Pedestrian)]];
        assert_eq!(
            average_precision(&[vec![]], &gts, ObjectClass::Pedestrian, 0.5, IouMode::Bev),
            Some(0.0)
        );
    }

    #[test]
    fn hand_enumerated_curve() {
        let a = gt(5.0, 0.0, ObjectClass::Pedestrian);
        let b = gt(8.0, 2.0, ObjectClass::Pedestrian);
        let miss = gt(12.0, -3.0, ObjectClass::Pedestrian);
        let gts = vec![vec![a, b]];
        let preds = vec![vec![pred(&a, 0.9), pred(&miss, 0.8), pred(&b, 0.7)]];
        // PR points: (r 1/2, p 1), (1/2, 1/2), (1, 2/3)
        // recall levels 1..20 see precision 1, levels 21..40 see 2/3
        let want = (1..=40).map(|l| if l <= 20 { 1.0 } else { 2.0 / 3.0 }).sum::<f64>() / 40.0;
        let got = average_precision(&preds, &gts, ObjectClass::Pedestrian, 0.5, IouMode::ThreeD).unwrap();
        assert_eq!(got, want);
        assert!((got - 5.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn closed_gap_examples() {
        assert!((closed_gap(26.89, 15.96, 52.84).unwrap() - 29.637).abs() < 1e-3);
        assert!((closed_gap(30.67, 17.87, 54.77).unwrap() - 34.688).abs() < 1e-3);
        assert_eq!(closed_gap(15.96, 15.96, 52.84).unwrap(), 0.0);
        assert_eq!(closed_gap(52.84, 15.96, 52.84).unwrap(), 100.0);
        assert!(matches!(closed_gap(3.0, 2.0, 2.0), Err(Error::UndefinedGap(_))));
    }

    proptest! {
        #[test]
        fn closed_gap_is_scale_invariant(m in 0.0..100.0f64, s in 0.0..100.0f64, o in 0.0..100.0f64, c in 0.01..100.0f64) {
            prop_assume!((o - s).abs() > 1e-3);
            let a = closed_gap(m, s, o).unwrap();
            let b = closed_gap(m * c, s * c, o * c).unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
        }
    }

    /// Scenes with a few ground truths and up to `max_preds` jittered or
    /// spurious predictions of mixed classes.
    pub(crate) fn random_case(rng: &mut impl Rng, max_preds: usize) -> (Vec<Vec<Detection>>, Vec<Vec<LabeledBox>>) {
        let n_scenes = rng.random_range(1..4);
        let mut gts = vec![Vec::new(); n_scenes];
        let mut preds = vec![Vec::new(); n_scenes];
        for s in 0..n_scenes {
            for i in 0..rng.random_range(0..4) {
                let class = ObjectClass::ALL[rng.random_range(0..3)];
                gts[s].push(gt(6.0 * i as f64, rng.random_range(-1.0..1.0), class));
            }
        }
        let n_preds = rng.random_range(0..=max_preds);
        for _ in 0..n_preds {
            let s = rng.random_range(0..n_scenes);
            let class = ObjectClass::ALL[rng.random_range(0..3)];
            let base = if !gts[s].is_empty() && rng.random_bool(0.7) {
                let g = gts[s][rng.random_range(0..gts[s].len())];
                let mut b = g.bbox;
                b.cx += rng.random_range(-0.4..0.4);
                b.cy += rng.random_range(-0.4..0.4);
                b.yaw = rng.random_range(-0.3..0.3);
                b
            } else {
                let [l, w, h] = class.mean_size();
                Box3D::new([rng.random_range(0.0..20.0), rng.random_range(-2.0..2.0), h / 2.0], [l, w, h], 0.0).unwrap()
            };
            // coarse scores so that ties happen
            let score = f64::from(rng.random_range(1..8u8)) / 8.0;
            let mut conf = [0.0; 3];
            conf[class.index()] = score;
            preds[s].push(Detection { bbox: base, conf });
        }
        (preds, gts)
    }

    /// For every distinct score threshold, rebuild the kept set from scratch,
    /// match it greedily and record precision and recall.
    pub(crate) fn sweep_ap(
        preds: &[Vec<Detection>],
        gts: &[Vec<LabeledBox>],
        class: ObjectClass,
        thr: f64,
        mode: IouMode,
    ) -> Option<f64> {
        let n_gt = gts.iter().flatten().filter(|g| g.class == class).count();
        if n_gt == 0 {
            return None;
        }
        let mut all: Vec<(usize, Detection)> = preds
            .iter()
            .enumerate()
            .flat_map(|(s, ds)| ds.iter().filter(|d| d.class() == class).map(move |d| (s, *d)))
            .collect();
        let mut scores: Vec<f64> = all.iter().map(|(_, d)| d.score()).collect();
        scores.sort_by(|a, b| b.total_cmp(a));
        scores.dedup();
        all.sort_by(rank_order);
        let mut pr = Vec::new();
        for t in scores {
            let kept: Vec<&(usize, Detection)> = all.iter().filter(|(_, d)| d.score() >= t).collect();
            let mut used: Vec<Vec<bool>> = gts.iter().map(|g| vec![false; g.len()]).collect();
            let mut tp = 0usize;
            for (s, d) in &kept {
                let mut best: Option<usize> = None;
                let mut best_iou = 0.0;
                for (i, g) in gts[*s].iter().enumerate() {
                    if g.class == class && !used[*s][i] {
                        let iou = mode.iou(&d.bbox, &g.bbox);
                        if iou >= thr && (best.is_none() || iou > best_iou) {
                            best = Some(i);
                            best_iou = iou;
                        }
                    }
                }
                if let Some(i) = best {
                    used[*s][i] = true;
                    tp += 1;
                }
            }
            pr.push((tp as f64 / n_gt as f64, tp as f64 / kept.len() as f64));
        }
        let mut total = 0.0;
        for level in 1..=40 {
            let r = level as f64 / 40.0;
            let mut best = 0.0f64;
            for &(rec, p) in &pr {
                if rec >= r && p > best {
                    best = p;
                }
            }
            total += best;
        }
        Some(total / 40.0)
    }

    #[test]
    fn matches_threshold_sweep() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..200 {
            let (preds, gts) = random_case(&mut rng, 10);
            for class in ObjectClass::ALL {
                for mode in [IouMode::Bev, IouMode::ThreeD] {
                    let thr = class.iou_threshold();
                    assert_eq!(
                        average_precision(&preds, &gts, class, thr, mode),
                        sweep_ap(&preds, &gts, class, thr, mode)
                    );
                }
            }
        }
    }

    #[test]
    fn monotone_under_top_tp_and_bottom_fp() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for _ in 0..200 {
            let (preds, gts) = random_case(&mut rng, 8);
            let class = ObjectClass::Vehicle;
            let Some(before) = average_precision(&preds, &gts, class, 0.7, IouMode::Bev) else { continue };
            // a fresh ground truth with a perfect prediction above every score
            let mut g2 = gts.clone();
            let mut p2 = preds.clone();
            let extra = gt(100.0, 50.0, class);
            g2[0].push(extra);
            p2[0].push(pred(&extra, 1.5));
            let mut g_ref = gts.clone();
            g_ref[0].push(extra);
            let with_fn = average_precision(&preds, &g_ref, class, 0.7, IouMode::Bev).unwrap();
            let with_tp = average_precision(&p2, &g2, class, 0.7, IouMode::Bev).unwrap();
            assert!(with_tp >= with_fn, "{with_tp} < {with_fn}");
            // a lowest-score false positive leaves every earlier PR point alone
            let mut p3 = preds.clone();
            p3[0].push(pred(&gt(-100.0, 50.0, class), 0.0));
            let before_pts = pr_curve(&preds, &gts, class, 0.7, IouMode::Bev);
            let after_pts = pr_curve(&p3, &gts, class, 0.7, IouMode::Bev);
            assert_eq!(&after_pts[..before_pts.len()], &before_pts[..]);
            let after = average_precision(&p3, &gts, class, 0.7, IouMode::Bev).unwrap();
            assert!(after <= before);
        }
    }

    #[test]
    fn map_is_class_mean_and_csv_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let (preds, mut gts) = random_case(&mut rng, 10);
        for class in ObjectClass::ALL {
            gts[0].push(gt(60.0 + 7.0 * class.index() as f64, 20.0, class));
        }
        let r = evaluate_detections(&preds, &gts).unwrap();
        let mean = r.ap3d.iter().map(|v| v.unwrap()).sum::<f64>() / 3.0;
        assert!((r.map3d() - mean).abs() <= 1e-12);
        let back = EvalResult::from_csv(&r.to_csv()).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.to_csv(), r.to_csv());
        let j = r.to_json();
        assert_eq!(j["map3d"].as_f64().unwrap(), r.map3d());
        assert!(j.get("apbev_cyclist").is_some());
    }

    #[test]
    fn gap_report_pads_missing_classes() {
        let full = EvalResult { ap3d: [Some(0.6), Some(0.3), Some(0.3)], apbev: [Some(0.9); 3], counts: Default::default() };
        let src = EvalResult { ap3d: [Some(0.3), Some(0.0), None], apbev: [Some(0.3), Some(0.0), None], counts: Default::default() };
        let rep = gap_report(&full, &src, &full);
        assert!((rep.change3d - (0.4 - 0.1)).abs() < 1e-12);
        assert_eq!(rep.closedgap3d, Some(100.0));
        let same = gap_report(&full, &full, &full);
        assert_eq!(same.closedgap3d, None);
    }
}
