use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::disc::Discriminators;
use super::loss::{conditional_loss, instance_weights, marginal_loss};
use super::mask::mask_features;
use super::AlignmentConfig;
use crate::augment::{downsample_layers, ground_plane_shift, random_object_scaling, RosConfig};
use crate::autodiff::{Adam, Array, Graph, GrlCoefficient, ParamStore, Tensor};
use crate::cloud::PointCloud;
use crate::detector::{build_targets, candidates, detection_loss, featurize, Candidate, Detector, GridSpec};
use crate::error::{Error, Result};
use crate::eval::{evaluate_model, EvalSettings};
use crate::geometry::{LabeledBox, NUM_CLASSES};
use crate::seed::stream_rng;
use crate::synthgen::{Domain, DomainProfile, Scene};

/// Points farther than this outside the grid are dropped when a dataset is
/// loaded. Wide enough for any object straddling the border after scaling.
pub const CROP_MARGIN: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    /// Object scaling of source scenes, redrawn every epoch.
    pub ros: Option<RosConfig>,
    /// Keep every k-th ring of source scans; 1 keeps all.
    pub downsample: usize,
    /// Move the ground to z = 0 in every domain, including at evaluation.
    pub ground_shift: bool,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self { ros: None, downsample: 1, ground_shift: true }
    }
}

/// How the detector consumes the two losses of a batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UpdateOrder {
    /// One optimizer step on the summed gradients.
    #[default]
    Combined,
    /// A detection step, then a fresh forward pass and an alignment step.
    Sequential,
}

impl std::fmt::Display for UpdateOrder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Combined => "combined",
            Self::Sequential => "sequential",
        })
    }
}

impl std::str::FromStr for UpdateOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "combined" => Ok(Self::Combined),
            "sequential" => Ok(Self::Sequential),
            other => Err(Error::Config(format!("unknown update order '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub seed: u64,
    pub channels: usize,
    pub epochs: usize,
    /// Source samples per optimizer step.
    pub batch_size: usize,
    pub lr_detector: f64,
    pub lr_discriminator: f64,
    pub lambda: GrlCoefficient,
    /// `None` trains on the source alone and never touches the target set.
    pub alignment: Option<AlignmentConfig>,
    pub augment: AugmentConfig,
    /// Minimum class confidence of an instance fed to the discriminators.
    pub conf_floor: f64,
    /// Highest-scoring instances kept per scene.
    pub max_instances: usize,
    /// Use confidences as constant weights rather than differentiating them.
    pub detach_confidence: bool,
    pub update: UpdateOrder,
    pub eval: EvalSettings,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            channels: 32,
            epochs: 10,
            batch_size: 4,
            lr_detector: 1e-3,
            lr_discriminator: 1e-3,
            lambda: GrlCoefficient::default(),
            alignment: None,
            augment: AugmentConfig::default(),
            conf_floor: 0.1,
            max_instances: 32,
            detach_confidence: true,
            update: UpdateOrder::Combined,
            eval: EvalSettings::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.into()));
        if self.channels == 0 || self.batch_size == 0 {
            return fail("channels and batch size must be positive");
        }
        if self.augment.downsample == 0 {
            return fail("downsample factor must be at least 1");
        }
        if !(self.lr_detector > 0.0 && self.lr_discriminator > 0.0) {
            return fail("learning rates must be positive");
        }
        if !(0.0..=1.0).contains(&self.conf_floor) || !(0.0..=1.0).contains(&self.eval.conf_threshold) {
            return fail("confidence thresholds must lie in [0, 1]");
        }
        if let Some(a) = &self.alignment {
            a.validate()?;
        }
        if let Some(r) = &self.augment.ros {
            r.validate()?;
        }
        Ok(())
    }
}

/// Scenes of one domain together with the sensor and grid they belong to.
#[derive(Debug, Clone)]
pub struct DomainData {
    pub scenes: Vec<Scene>,
    pub grid: GridSpec,
    pub sensor_height: f64,
}

impl DomainData {
    /// Crops every scan to the profile grid plus [`CROP_MARGIN`].
    pub fn new(mut scenes: Vec<Scene>, profile: &DomainProfile) -> Self {
        let g = profile.grid;
        for s in &mut scenes {
            s.scan = s.scan.crop_bev(
                (g.x_range.0 - CROP_MARGIN, g.x_range.1 + CROP_MARGIN),
                (g.y_range.0 - CROP_MARGIN, g.y_range.1 + CROP_MARGIN),
            );
        }
        Self { scenes, grid: g, sensor_height: profile.sensor_height }
    }

    pub fn len(&self) -> usize {
        self.scenes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenes.is_empty()
    }

    /// Scan and labels with only the ground shift applied.
    pub fn plain(&self, index: usize, ground_shift: bool) -> Result<(PointCloud, Vec<LabeledBox>)> {
        let s = &self.scenes[index];
        if ground_shift {
            ground_plane_shift(&s.scan, &s.labels, self.sensor_height)
        } else {
            Ok((s.scan.clone(), s.labels.clone()))
        }
    }

    /// Source scene `index` as seen in `epoch`: scaled, downsampled, shifted.
    pub fn augmented(&self, index: usize, epoch: usize, cfg: &TrainConfig) -> Result<(PointCloud, Vec<LabeledBox>)> {
        let s = &self.scenes[index];
        let (mut scan, mut labels) = match &cfg.augment.ros {
            Some(ros) => {
                let mut rng = stream_rng(cfg.seed, "ros", ((epoch as u64) << 32) | index as u64);
                random_object_scaling(&s.scan, &s.labels, ros, &mut rng)?
            }
            None => (s.scan.clone(), s.labels.clone()),
        };
        if cfg.augment.downsample > 1 {
            scan = downsample_layers(&scan, cfg.augment.downsample)?;
        }
        if cfg.augment.ground_shift {
            (scan, labels) = ground_plane_shift(&scan, &labels, self.sensor_height)?;
        }
        Ok((scan, labels))
    }
}

/// Held-out sets scored after every epoch.
#[derive(Debug, Clone, Default)]
pub struct Monitor {
    /// Unseen source scenes for discriminator accuracy.
    pub source_val: Option<DomainData>,
    /// Labeled target scenes for mAP and discriminator accuracy.
    pub target_eval: Option<DomainData>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub l_det: f64,
    pub l_align: f64,
    pub disc_acc: Option<f64>,
    pub target_map3d: Option<f64>,
    pub target_mapbev: Option<f64>,
    pub lambda: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OrderEntry {
    pub epoch: usize,
    pub batch: usize,
    pub domain: Domain,
    pub index: usize,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub detector: Detector,
    pub discriminators: Option<Discriminators>,
    pub log: Vec<EpochLog>,
    pub order: Vec<OrderEntry>,
    /// Source labels outside the grid, summed over all visits.
    pub skipped_labels: usize,
    /// Selected detections whose footprint covered no cell center.
    pub skipped_instances: usize,
    /// Batches in which the instance discriminators had nothing to judge.
    pub empty_batches: usize,
}

fn optimizer_step(g: &Graph, store: &mut ParamStore, opt: &mut Adam) {
    store.zero_grad();
    store.accumulate(g);
    opt.step(store);
}

/// Visiting order of one epoch: shuffled source and target indices merged
/// at random. The source order depends only on the seed and epoch, so runs
/// with and without a target set see the same source sequence.
pub fn epoch_order(n_source: usize, n_target: usize, seed: u64, epoch: usize) -> Vec<(Domain, usize)> {
    let mut rs = stream_rng(seed, "batch-order", 2 * epoch as u64);
    let mut src: Vec<usize> = (0..n_source).collect();
    src.shuffle(&mut rs);
    if n_target == 0 {
        return src.into_iter().map(|i| (Domain::Source, i)).collect();
    }
    let mut rt = stream_rng(seed, "batch-order", 2 * epoch as u64 + 1);
    let mut tgt: Vec<usize> = (0..n_target).collect();
    tgt.shuffle(&mut rt);
    let mut out = Vec::with_capacity(n_source + n_target);
    let (mut i, mut j) = (0, 0);
    while i < n_source || j < n_target {
        let (rem_s, rem_t) = (n_source - i, n_target - j);
        if rt.random_range(0..rem_s + rem_t) < rem_s {
            out.push((Domain::Source, src[i]));
            i += 1;
        } else {
            out.push((Domain::Target, tgt[j]));
            j += 1;
        }
    }
    out
}

/// Splits an epoch into batches that close after `batch_size` source
/// samples. Target samples after the last source sample join the final batch.
pub fn split_batches(order: &[(Domain, usize)], batch_size: usize) -> Vec<Vec<(Domain, usize)>> {
    let mut out: Vec<Vec<(Domain, usize)>> = Vec::new();
    let mut cur = Vec::new();
    let mut n_src = 0;
    for &item in order {
        cur.push(item);
        if item.0 == Domain::Source {
            n_src += 1;
            if n_src == batch_size {
                out.push(std::mem::take(&mut cur));
                n_src = 0;
            }
        }
    }
    if !cur.is_empty() {
        match out.last_mut() {
            Some(last) if n_src == 0 => last.extend(cur),
            _ => out.push(cur),
        }
    }
    out
}

/// Highest-scoring candidates above the confidence floor, ties by cell.
pub fn select_instances(head: &Array, spec: &GridSpec, floor: f64, max_instances: usize) -> Vec<Candidate> {
    let mut c = candidates(head, spec, floor);
    c.sort_by(|a, b| b.detection.score().total_cmp(&a.detection.score()).then(a.cell.cmp(&b.cell)));
    c.truncate(max_instances);
    c
}

/// Masked instance rows of one scene plus their confidence weights.
struct SceneInstances {
    rows: Vec<Tensor>,
    conf: Vec<Tensor>,
    skipped: usize,
}

fn scene_instances(
    g: &mut Graph,
    reversed: Tensor,
    head: Tensor,
    spec: &GridSpec,
    cfg: &TrainConfig,
) -> Result<SceneInstances> {
    let head_val = g.value(head).clone();
    let picked = select_instances(&head_val, spec, cfg.conf_floor, cfg.max_instances);
    let mut out = SceneInstances { rows: Vec::new(), conf: Vec::new(), skipped: 0 };
    for c in picked {
        let Some(row) = mask_features(g, reversed, spec, &c.detection)? else {
            out.skipped += 1;
            continue;
        };
        out.rows.push(row);
        let conf = if cfg.detach_confidence {
            g.constant(Array::new(vec![1, NUM_CLASSES], c.detection.conf.to_vec())?)
        } else {
            let r = g.gather_rows(head, &[c.cell])?;
            let logits = g.slice_cols(r, 0, NUM_CLASSES)?;
            g.sigmoid(logits)
        };
        out.conf.push(conf);
    }
    Ok(out)
}

fn sum_all(g: &mut Graph, terms: &[Tensor]) -> Result<Option<Tensor>> {
    let mut acc: Option<Tensor> = None;
    for &t in terms {
        acc = Some(match acc {
            None => t,
            Some(a) => g.add(a, t)?,
        });
    }
    Ok(acc)
}

/// Detection (source) and alignment losses of one batch, in one graph.
pub struct BatchLosses {
    pub detection: Option<Tensor>,
    pub alignment: Option<Tensor>,
    pub skipped_labels: usize,
    pub skipped_instances: usize,
    pub instances: usize,
}

/// Builds the batch graph. Detection loss is averaged over source samples;
/// the marginal term over samples and the conditional term over instances.
#[allow(clippy::too_many_arguments)]
pub fn batch_losses(
    g: &mut Graph,
    det: &Detector,
    discs: Option<&Discriminators>,
    samples: &[(Domain, &GridSpec, &PointCloud, &[LabeledBox])],
    cfg: &TrainConfig,
    progress: f64,
) -> Result<BatchLosses> {
    let mut det_terms = Vec::new();
    let mut marg_terms = Vec::new();
    let (mut rows, mut confs, mut domains) = (Vec::new(), Vec::new(), Vec::new());
    let (mut skipped_labels, mut skipped_instances) = (0, 0);
    for &(domain, spec, scan, labels) in samples {
        let grid = featurize(scan, spec)?;
        let fw = det.forward(g, &grid)?;
        if domain == Domain::Source {
            let t = build_targets(labels, spec)?;
            skipped_labels += t.skipped;
            det_terms.push(detection_loss(g, fw.head, &t)?.total);
        }
        let Some(discs) = discs else { continue };
        let d = domain.label();
        let reversed = g.grl(fw.features, &cfg.lambda, progress);
        if discs.cell.is_some() {
            marg_terms.push(marginal_loss(g, discs, reversed, d)?);
        }
        if !discs.instance.is_empty() {
            let inst = scene_instances(g, reversed, fw.head, spec, cfg)?;
            skipped_instances += inst.skipped;
            domains.extend(std::iter::repeat_n(d, inst.rows.len()));
            rows.extend(inst.rows);
            confs.extend(inst.conf);
        }
    }
    let detection = match sum_all(g, &det_terms)? {
        Some(s) => Some(g.scalar_mul(s, 1.0 / det_terms.len() as f64)),
        None => None,
    };
    let marginal = match sum_all(g, &marg_terms)? {
        Some(s) => Some(g.scalar_mul(s, 1.0 / marg_terms.len() as f64)),
        None => None,
    };
    let conditional = match (discs, rows.is_empty()) {
        (Some(discs), false) => {
            let x = g.concat_rows(&rows)?;
            let c = g.concat_rows(&confs)?;
            let w = instance_weights(g, c, discs.config.design)?;
            Some(conditional_loss(g, discs, x, w, &domains)?)
        }
        _ => None,
    };
    let alignment = match (marginal, conditional) {
        (Some(m), Some(c)) => Some(g.add(m, c)?),
        (m, c) => m.or(c),
    };
    Ok(BatchLosses { detection, alignment, skipped_labels, skipped_instances, instances: rows.len() })
}

/// Probability that each selected instance (or, for marginal-only runs,
/// each scan) comes from the target domain.
pub fn domain_probabilities(
    det: &Detector,
    discs: &Discriminators,
    data: &DomainData,
    cfg: &TrainConfig,
) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for i in 0..data.len() {
        let (scan, _) = data.plain(i, cfg.augment.ground_shift)?;
        let grid = featurize(&scan, &data.grid)?;
        let mut g = Graph::new();
        let fw = det.forward(&mut g, &grid)?;
        if discs.instance.is_empty() {
            let mlp = discs.cell.as_ref().expect("a run has at least one discriminator");
            let logits = mlp.logits(&mut g, &discs.store, fw.features)?;
            let p = g.sigmoid(logits);
            let v = g.value(p).data();
            out.push(v.iter().sum::<f64>() / v.len() as f64);
            continue;
        }
        let head = g.value(fw.head).clone();
        for c in select_instances(&head, &data.grid, cfg.conf_floor, cfg.max_instances) {
            let Some(row) = mask_features(&mut g, fw.features, &data.grid, &c.detection)? else {
                continue;
            };
            let probs = discs.instance_probs(&mut g, row)?;
            let p = g.value(probs).data();
            out.push(if p.len() == 1 {
                p[0]
            } else {
                let w: f64 = c.detection.conf.iter().sum();
                let s: f64 = c.detection.conf.iter().zip(p).map(|(c, p)| c * p).sum();
                if w > 0.0 {
                    s / w
                } else {
                    p.iter().sum::<f64>() / p.len() as f64
                }
            });
        }
    }
    Ok(out)
}

/// Mean of the per-domain hit rates when predicting "target" for
/// probabilities above one half; exactly one half goes to source. `None`
/// when either side is empty.
pub fn discriminator_accuracy(source: &[f64], target: &[f64]) -> Option<f64> {
    if source.is_empty() || target.is_empty() {
        return None;
    }
    let src_ok = source.iter().filter(|&&p| p <= 0.5).count() as f64 / source.len() as f64;
    let tgt_ok = target.iter().filter(|&&p| p > 0.5).count() as f64 / target.len() as f64;
    Some(0.5 * (src_ok + tgt_ok))
}

/// Trains the detector on labeled `source` scenes. With an alignment
/// configured, unlabeled `target` scenes are interleaved and the
/// discriminators are trained against the detector through the gradient
/// reversal node; without one the target set is never read.
pub fn train(
    source: &DomainData,
    target: Option<&DomainData>,
    monitor: &Monitor,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if source.is_empty() {
        return Err(Error::Config("source dataset is empty".into()));
    }
    let target = match (cfg.alignment, target) {
        (None, _) => None,
        (Some(_), Some(t)) if !t.is_empty() => Some(t),
        (Some(_), _) => return Err(Error::Config("alignment needs a non-empty target dataset".into())),
    };
    let mut detector = Detector::new(cfg.channels, &mut stream_rng(cfg.seed, "init", 0))?;
    let mut discs = match cfg.alignment {
        Some(a) => Some(Discriminators::new(cfg.channels, a, &mut stream_rng(cfg.seed, "init", 1))?),
        None => None,
    };
    let mut opt_det = Adam::new(cfg.lr_detector);
    let mut opt_disc = Adam::new(cfg.lr_discriminator);
    let n_target = target.map_or(0, DomainData::len);
    let per_epoch = source.len().div_ceil(cfg.batch_size);
    let total_steps = (per_epoch * cfg.epochs).max(1);
    let mut out_log = Vec::new();
    let mut order_log = Vec::new();
    let (mut skipped_labels, mut skipped_instances, mut empty_batches) = (0, 0, 0);
    let mut step = 0usize;
    for epoch in 0..cfg.epochs {
        let order = epoch_order(source.len(), n_target, cfg.seed, epoch);
        let batches = split_batches(&order, cfg.batch_size);
        let (mut sum_det, mut sum_align) = (0.0, 0.0);
        let mut progress = 0.0;
        for (b, batch) in batches.iter().enumerate() {
            progress = step as f64 / total_steps as f64;
            let mut prepared = Vec::with_capacity(batch.len());
            for &(domain, index) in batch {
                order_log.push(OrderEntry { epoch, batch: b, domain, index });
                let (data, pair) = match domain {
                    Domain::Source => (source, source.augmented(index, epoch, cfg)?),
                    Domain::Target => {
                        let t = target.expect("target samples only appear with a target set");
                        (t, t.plain(index, cfg.augment.ground_shift)?)
                    }
                };
                prepared.push((domain, &data.grid, pair));
            }
            let samples: Vec<(Domain, &GridSpec, &PointCloud, &[LabeledBox])> =
                prepared.iter().map(|(d, s, (c, l))| (*d, *s, c, l.as_slice())).collect();
            let finite = |l_det: f64, l_align: f64| {
                if l_det.is_finite() && l_align.is_finite() {
                    Ok(())
                } else {
                    Err(Error::NonFinite(format!(
                        "epoch {epoch} batch {b} (step {step}, p={progress:.4}): L_det={l_det} L_align={l_align}, samples {batch:?}"
                    )))
                }
            };
            let value = |g: &Graph, t: Option<Tensor>| t.map_or(0.0, |t| g.value(t).item());
            let aligned = match cfg.update {
                UpdateOrder::Combined => {
                    let mut g = Graph::new();
                    let losses = batch_losses(&mut g, &detector, discs.as_ref(), &samples, cfg, progress)?;
                    let (l_det, l_align) = (value(&g, losses.detection), value(&g, losses.alignment));
                    finite(l_det, l_align)?;
                    sum_det += l_det;
                    sum_align += l_align;
                    skipped_labels += losses.skipped_labels;
                    let total = match (losses.detection, losses.alignment) {
                        (Some(d), Some(a)) => Some(g.add(d, a)?),
                        (d, a) => d.or(a),
                    };
                    if let Some(total) = total {
                        g.backward(total)?;
                    }
                    optimizer_step(&g, &mut detector.store, &mut opt_det);
                    if let Some(d) = discs.as_mut() {
                        optimizer_step(&g, &mut d.store, &mut opt_disc);
                    }
                    losses
                }
                UpdateOrder::Sequential => {
                    let mut g = Graph::new();
                    let det_only = batch_losses(&mut g, &detector, None, &samples, cfg, progress)?;
                    let l_det = value(&g, det_only.detection);
                    finite(l_det, 0.0)?;
                    sum_det += l_det;
                    skipped_labels += det_only.skipped_labels;
                    if let Some(t) = det_only.detection {
                        g.backward(t)?;
                        optimizer_step(&g, &mut detector.store, &mut opt_det);
                    }
                    let mut g = Graph::new();
                    let losses = batch_losses(&mut g, &detector, discs.as_ref(), &samples, cfg, progress)?;
                    let l_align = value(&g, losses.alignment);
                    finite(l_det, l_align)?;
                    sum_align += l_align;
                    if let (Some(t), Some(d)) = (losses.alignment, discs.as_mut()) {
                        g.backward(t)?;
                        optimizer_step(&g, &mut detector.store, &mut opt_det);
                        optimizer_step(&g, &mut d.store, &mut opt_disc);
                    }
                    losses
                }
            };
            skipped_instances += aligned.skipped_instances;
            if discs.as_ref().is_some_and(|d| !d.instance.is_empty()) && aligned.instances == 0 {
                empty_batches += 1;
            }
            step += 1;
        }
        let n = batches.len().max(1) as f64;
        let mut entry = EpochLog {
            epoch,
            l_det: sum_det / n,
            l_align: sum_align / n,
            disc_acc: None,
            target_map3d: None,
            target_mapbev: None,
            lambda: cfg.lambda.value(progress),
        };
        if let (Some(d), Some(sv), Some(te)) = (discs.as_ref(), &monitor.source_val, &monitor.target_eval) {
            let ps = domain_probabilities(&detector, d, sv, cfg)?;
            let pt = domain_probabilities(&detector, d, te, cfg)?;
            entry.disc_acc = discriminator_accuracy(&ps, &pt);
        }
        if let Some(te) = &monitor.target_eval {
            let r = evaluate_data(&detector, te, cfg)?;
            entry.target_map3d = Some(r.map3d());
            entry.target_mapbev = Some(r.mapbev());
        }
        log::info!(
            "epoch {epoch}: L_det {:.4} L_align {:.4} disc_acc {:?} target mAP3D {:?}",
            entry.l_det,
            entry.l_align,
            entry.disc_acc,
            entry.target_map3d
        );
        out_log.push(entry);
    }
    Ok(TrainOutcome {
        detector,
        discriminators: discs,
        log: out_log,
        order: order_log,
        skipped_labels,
        skipped_instances,
        empty_batches,
    })
}

/// Scores a detector on a labeled domain with the run's preprocessing.
pub fn evaluate_data(det: &Detector, data: &DomainData, cfg: &TrainConfig) -> Result<crate::eval::EvalResult> {
    let scans = (0..data.len())
        .map(|i| data.plain(i, cfg.augment.ground_shift))
        .collect::<Result<Vec<_>>>()?;
    evaluate_model(det, &scans, &data.grid, &cfg.eval)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn train_log_csv(log: &[EpochLog]) -> String {
    let mut s = String::from("epoch,l_det,l_align,disc_acc,target_map3d,target_mapbev,lambda\n");
    for e in log {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            e.epoch,
            e.l_det,
            e.l_align,
            opt(e.disc_acc),
            opt(e.target_map3d),
            opt(e.target_mapbev),
            e.lambda
        );
    }
    s
}

pub fn order_csv(order: &[OrderEntry]) -> String {
    let mut s = String::from("epoch,batch,domain,index\n");
    for o in order {
        let d = match o.domain {
            Domain::Source => "source",
            Domain::Target => "target",
        };
        let _ = writeln!(s, "{},{},{d},{}", o.epoch, o.batch, o.index);
    }
    s
}
