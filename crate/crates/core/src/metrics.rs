//! Segmentation and detection metrics, and dataset overlap statistics.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{box_iou, BinaryMask, BoundingBox};
use crate::scalar::Scalar;

/// Per-pixel instance ids; `0` marks non-planar pixels.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SegLabelMap {
    pub width: u32,
    pub height: u32,
    pub labels: Vec<u32>,
}

impl SegLabelMap {
    pub fn new(width: u32, height: u32, labels: Vec<u32>) -> Result<Self> {
        if labels.len() != width as usize * height as usize {
            return Err(Error::Shape(format!(
                "label map has {} values, expected {}x{}",
                labels.len(),
                width,
                height
            )));
        }
        Ok(Self {
            width,
            height,
            labels,
        })
    }

    pub fn zeros(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            labels: vec![0; width as usize * height as usize],
        }
    }

    #[inline]
    pub fn get(&self, row: u32, col: u32) -> u32 {
        self.labels[row as usize * self.width as usize + col as usize]
    }

    #[inline]
    pub fn set(&mut self, row: u32, col: u32, id: u32) {
        self.labels[row as usize * self.width as usize + col as usize] = id;
    }

    /// Sorted distinct non-zero ids.
    pub fn ids(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self.labels.iter().copied().filter(|&l| l != 0).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    pub fn area_of(&self, id: u32) -> usize {
        self.labels.iter().filter(|&&l| l == id).count()
    }

    pub fn mask_of(&self, id: u32) -> BinaryMask {
        BinaryMask {
            width: self.width,
            height: self.height,
            data: self.labels.iter().map(|&l| l == id).collect(),
        }
    }

    fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::Shape(format!(
                "label maps are {}x{} and {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        Ok(())
    }
}

/// Joint label counts of two equally sized maps.
#[derive(Debug, Clone)]
pub struct Contingency {
    pub total: u64,
    pub joint: HashMap<(u32, u32), u64>,
    pub rows: HashMap<u32, u64>,
    pub cols: HashMap<u32, u64>,
}

impl Contingency {
    pub fn new(a: &SegLabelMap, b: &SegLabelMap) -> Result<Self> {
        a.check_same_shape(b)?;
        let mut joint: HashMap<(u32, u32), u64> = HashMap::new();
        let mut rows: HashMap<u32, u64> = HashMap::new();
        let mut cols: HashMap<u32, u64> = HashMap::new();
        for (&la, &lb) in a.labels.iter().zip(&b.labels) {
            *joint.entry((la, lb)).or_default() += 1;
            *rows.entry(la).or_default() += 1;
            *cols.entry(lb).or_default() += 1;
        }
        Ok(Self {
            total: a.labels.len() as u64,
            joint,
            rows,
            cols,
        })
    }
}

fn pairs(n: u64) -> u128 {
    let n = n as u128;
    n * n.saturating_sub(1) / 2
}

/// Fraction of pixel pairs on which both maps agree about "same region".
///
/// Images with fewer than two pixels have no pairs and score 1.
pub fn rand_index(a: &SegLabelMap, b: &SegLabelMap) -> Result<f64> {
    let t = Contingency::new(a, b)?;
    let all = pairs(t.total);
    if all == 0 {
        return Ok(1.0);
    }
    let same_both: u128 = t.joint.values().map(|&n| pairs(n)).sum();
    let same_a: u128 = t.rows.values().map(|&n| pairs(n)).sum();
    let same_b: u128 = t.cols.values().map(|&n| pairs(n)).sum();
    // agree = same in both + different in both
    let agree = all + 2 * same_both - same_a - same_b;
    Ok(agree as f64 / all as f64)
}

/// `H(a|b) + H(b|a)` in nats.
pub fn variation_of_information(a: &SegLabelMap, b: &SegLabelMap) -> Result<f64> {
    let t = Contingency::new(a, b)?;
    if t.total == 0 {
        return Ok(0.0);
    }
    let n = t.total as f64;
    let mut voi = 0.0;
    for (&(la, lb), &nij) in &t.joint {
        let pij = nij as f64 / n;
        let pi = t.rows[&la] as f64 / n;
        let pj = t.cols[&lb] as f64 / n;
        voi -= pij * ((pij / pj).ln() + (pij / pi).ln());
    }
    Ok(voi.max(0.0))
}

/// `Σ_R |R|/N · max_R' IoU(R, R')` over ground-truth regions `R`.
pub fn segmentation_covering(gt: &SegLabelMap, pred: &SegLabelMap) -> Result<f64> {
    let t = Contingency::new(gt, pred)?;
    if t.total == 0 {
        return Ok(1.0);
    }
    let mut best: HashMap<u32, f64> = HashMap::new();
    for (&(r, p), &inter) in &t.joint {
        let union = t.rows[&r] + t.cols[&p] - inter;
        let iou = inter as f64 / union as f64;
        let e = best.entry(r).or_insert(0.0);
        if iou > *e {
            *e = iou;
        }
    }
    let n = t.total as f64;
    Ok(t.rows
        .iter()
        .map(|(r, &size)| size as f64 / n * best[r])
        .sum())
}

/// Intersection over union of two masks; `0` when both are empty.
pub fn mask_iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(Error::Shape("masks differ in size".into()));
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.data.iter().zip(&b.data) {
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    Ok(if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance<T> {
    pub mask: BinaryMask,
    pub bbox: BoundingBox<T>,
    /// Confidence; required on predictions, ignored on ground truth.
    pub score: Option<T>,
}

impl<T: Scalar> Instance<T> {
    /// Ground-truth instance with its tight box.
    pub fn from_mask(mask: BinaryMask) -> Option<Self> {
        let bbox = mask.bounding_box()?;
        Some(Self {
            mask,
            bbox,
            score: None,
        })
    }

    pub fn with_score(mut self, score: T) -> Self {
        self.score = Some(score);
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceSet<T> {
    pub instances: Vec<Instance<T>>,
}

impl<T: Scalar> InstanceSet<T> {
    pub fn new(instances: Vec<Instance<T>>) -> Self {
        Self { instances }
    }

    /// One instance per non-zero id, in ascending id order.
    pub fn from_labels(labels: &SegLabelMap) -> Self {
        Self {
            instances: labels
                .ids()
                .into_iter()
                .filter_map(|id| Instance::from_mask(labels.mask_of(id)))
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IouMode {
    Box,
    Mask,
}

/// Precision-recall interpolation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Interpolation {
    /// Exact area under the precision envelope.
    #[default]
    AllPoint,
    /// Mean of the envelope sampled at `n` evenly spaced recalls in `[0, 1]`.
    Sampled(usize),
}

impl Interpolation {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "all-point" | "all" => Some(Self::AllPoint),
            _ => s
                .parse::<usize>()
                .ok()
                .filter(|&n| n >= 2)
                .map(Self::Sampled),
        }
    }
}

impl std::fmt::Display for Interpolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::AllPoint => f.write_str("all-point"),
            Self::Sampled(n) => write!(f, "{n}"),
        }
    }
}

fn instance_iou<T: Scalar>(a: &Instance<T>, b: &Instance<T>, mode: IouMode) -> Result<f64> {
    match mode {
        IouMode::Box => Ok(box_iou(&a.bbox, &b.bbox).as_f64()),
        IouMode::Mask => mask_iou(&a.mask, &b.mask),
    }
}

/// Average precision pooled over frames; predictions only match ground
/// truth of their own frame.
///
/// Predictions are visited in descending score order (ties: frame, then
/// input order). Each one takes the unmatched ground truth of highest IoU
/// and is a true positive iff that IoU is `≥ iou_thresh`.
pub fn average_precision_frames<T: Scalar>(
    frames: &[(&InstanceSet<T>, &InstanceSet<T>)],
    iou_thresh: f64,
    mode: IouMode,
    interp: Interpolation,
) -> Result<f64> {
    let total_gt: usize = frames.iter().map(|(_, g)| g.len()).sum();
    let mut order: Vec<(T, usize, usize)> = Vec::new();
    for (f, (preds, _)) in frames.iter().enumerate() {
        for (i, p) in preds.instances.iter().enumerate() {
            let s = p.score.ok_or_else(|| {
                Error::Config(format!("prediction {i} of frame {f} has no score"))
            })?;
            order.push((s, f, i));
        }
    }
    if total_gt == 0 {
        return Ok(if order.is_empty() { 1.0 } else { 0.0 });
    }
    if order.is_empty() {
        return Ok(0.0);
    }
    order.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });

    let mut matched: Vec<Vec<bool>> = frames.iter().map(|(_, g)| vec![false; g.len()]).collect();
    let mut tp = 0usize;
    let mut precision = Vec::with_capacity(order.len());
    let mut recall = Vec::with_capacity(order.len());
    for (k, &(_, f, i)) in order.iter().enumerate() {
        let pred = &frames[f].0.instances[i];
        let mut best: Option<(usize, f64)> = None;
        for (j, g) in frames[f].1.instances.iter().enumerate() {
            if matched[f][j] {
                continue;
            }
            let iou = instance_iou(pred, g, mode)?;
            if best.is_none_or(|(_, b)| iou > b) {
                best = Some((j, iou));
            }
        }
        if let Some((j, iou)) = best {
            if iou >= iou_thresh {
                matched[f][j] = true;
                tp += 1;
            }
        }
        precision.push(tp as f64 / (k + 1) as f64);
        recall.push(tp as f64 / total_gt as f64);
    }

    // precision envelope: max precision at any later point
    for k in (0..precision.len().saturating_sub(1)).rev() {
        precision[k] = precision[k].max(precision[k + 1]);
    }
    Ok(match interp {
        Interpolation::AllPoint => {
            let mut ap = 0.0;
            let mut prev_r = 0.0;
            for (p, r) in precision.iter().zip(&recall) {
                ap += (r - prev_r) * p;
                prev_r = *r;
            }
            ap
        }
        Interpolation::Sampled(n) => {
            let mut acc = 0.0;
            for s in 0..n {
                let r = s as f64 / (n - 1) as f64;
                let k = recall.partition_point(|&x| x < r - 1e-12);
                acc += precision.get(k).copied().unwrap_or(0.0);
            }
            acc / n as f64
        }
    })
}

pub fn average_precision<T: Scalar>(
    preds: &InstanceSet<T>,
    gts: &InstanceSet<T>,
    iou_thresh: f64,
    mode: IouMode,
    interp: Interpolation,
) -> Result<f64> {
    average_precision_frames(&[(preds, gts)], iou_thresh, mode, interp)
}

/// Box-overlap and instance-size statistics, all in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub frames: usize,
    pub instances: usize,
    pub overlapping_pairs: usize,
    /// Frames with at least one pair of boxes with IoU > 0.
    pub overlap_frames_pct: f64,
    /// Overlapping pairs with `0.25 ≤ IoU < 0.5`.
    pub iou_band_25_50_pct: f64,
    /// Overlapping pairs with `IoU ≥ 0.5`.
    pub iou_band_ge_50_pct: f64,
    /// Instances whose mask covers more than 10% of the frame.
    pub large_obj_pct: f64,
}

/// Mergeable counters behind [`StatsReport`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StatsAccumulator {
    pub frames: usize,
    pub overlap_frames: usize,
    pub overlapping_pairs: usize,
    pub band_25_50: usize,
    pub band_ge_50: usize,
    pub instances: usize,
    pub large_instances: usize,
}

fn pct(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        100.0 * num as f64 / den as f64
    }
}

impl StatsAccumulator {
    pub fn add_frame<T: Scalar>(&mut self, frame: &InstanceSet<T>, frame_area: usize) {
        self.frames += 1;
        let mut any = false;
        let inst = &frame.instances;
        for i in 0..inst.len() {
            for j in i + 1..inst.len() {
                let iou = box_iou(&inst[i].bbox, &inst[j].bbox).as_f64();
                if iou > 0.0 {
                    any = true;
                    self.overlapping_pairs += 1;
                    if iou >= 0.5 {
                        self.band_ge_50 += 1;
                    } else if iou >= 0.25 {
                        self.band_25_50 += 1;
                    }
                }
            }
        }
        self.overlap_frames += any as usize;
        self.instances += inst.len();
        // area > 10% of the frame, compared in integers
        self.large_instances += inst
            .iter()
            .filter(|i| i.mask.count() * 10 > frame_area)
            .count();
    }

    pub fn merge(self, o: Self) -> Self {
        Self {
            frames: self.frames + o.frames,
            overlap_frames: self.overlap_frames + o.overlap_frames,
            overlapping_pairs: self.overlapping_pairs + o.overlapping_pairs,
            band_25_50: self.band_25_50 + o.band_25_50,
            band_ge_50: self.band_ge_50 + o.band_ge_50,
            instances: self.instances + o.instances,
            large_instances: self.large_instances + o.large_instances,
        }
    }

    pub fn report(&self) -> StatsReport {
        StatsReport {
            frames: self.frames,
            instances: self.instances,
            overlapping_pairs: self.overlapping_pairs,
            overlap_frames_pct: pct(self.overlap_frames, self.frames),
            iou_band_25_50_pct: pct(self.band_25_50, self.overlapping_pairs),
            iou_band_ge_50_pct: pct(self.band_ge_50, self.overlapping_pairs),
            large_obj_pct: pct(self.large_instances, self.instances),
        }
    }
}

pub fn dataset_stats<'a, T: Scalar, I>(frames: I, frame_area: usize) -> StatsReport
where
    I: IntoIterator<Item = &'a InstanceSet<T>>,
{
    frames
        .into_iter()
        .fold(StatsAccumulator::default(), |mut acc, f| {
            acc.add_frame(f, frame_area);
            acc
        })
        .report()
}

/// Evaluation summary in the column order AP^b₅₀, AP^m₅₀, VOI, RI, SC.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub frames: usize,
    pub ap_box_50: f64,
    pub ap_mask_50: f64,
    pub voi: f64,
    pub ri: f64,
    pub sc: f64,
}

impl MetricReport {
    pub fn to_table(&self) -> String {
        let header = ["AP^b50", "AP^m50", "VOI", "RI", "SC"];
        let values = [self.ap_box_50, self.ap_mask_50, self.voi, self.ri, self.sc];
        let mut s = String::new();
        for h in header {
            s.push_str(&format!("{h:>10}"));
        }
        s.push('\n');
        for v in values {
            s.push_str(&format!("{v:>10.4}"));
        }
        s.push('\n');
        s
    }
}

/// One frame of an evaluation: label maps plus scored instances.
#[derive(Debug, Clone)]
pub struct EvalFrame<T> {
    pub gt_labels: SegLabelMap,
    pub pred_labels: SegLabelMap,
    pub gt: InstanceSet<T>,
    pub pred: InstanceSet<T>,
}

/// AP pooled over frames at IoU 0.5; VOI, RI and SC averaged per frame.
pub fn evaluate<T: Scalar>(frames: &[EvalFrame<T>], interp: Interpolation) -> Result<MetricReport> {
    let pairs: Vec<_> = frames.iter().map(|f| (&f.pred, &f.gt)).collect();
    let ap_box_50 = average_precision_frames(&pairs, 0.5, IouMode::Box, interp)?;
    let ap_mask_50 = average_precision_frames(&pairs, 0.5, IouMode::Mask, interp)?;
    let (mut voi, mut ri, mut sc) = (0.0, 0.0, 0.0);
    for f in frames {
        voi += variation_of_information(&f.gt_labels, &f.pred_labels)?;
        ri += rand_index(&f.gt_labels, &f.pred_labels)?;
        sc += segmentation_covering(&f.gt_labels, &f.pred_labels)?;
    }
    let n = frames.len().max(1) as f64;
    Ok(MetricReport {
        frames: frames.len(),
        ap_box_50,
        ap_mask_50,
        voi: voi / n,
        ri: ri / n,
        sc: sc / n,
    })
}
