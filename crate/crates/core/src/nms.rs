//! Fast NMS and Fast Feature NMS.
//!
//! Both start from the upper-triangular IoU matrix of the score-sorted
//! detections of one class and its column-wise maximum `K`. Fast NMS keeps
//! detection `i` iff `K_i ≤ threshold`. Fast Feature NMS adds a second band:
//! when `N₁ < K_i ≤ N₂` the detection is kept iff the cosine similarity of its
//! mask coefficients to every detection already kept stays `≤ T`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BoundingBox;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection<T> {
    #[serde(rename = "box")]
    pub bbox: BoundingBox<T>,
    pub score: T,
    #[serde(rename = "class")]
    pub class_id: usize,
    pub coeffs: Vec<T>,
}

impl<T: Scalar> Detection<T> {
    pub fn new(bbox: BoundingBox<T>, score: T, class_id: usize, coeffs: Vec<T>) -> Self {
        Self {
            bbox,
            score,
            class_id,
            coeffs,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NmsConfig<T> {
    /// IoU keep threshold `N₁`.
    pub n1: T,
    /// IoU suppress threshold `N₂`.
    pub n2: T,
    /// Cosine-similarity threshold `T`.
    pub t: T,
    /// Maximum detections per class considered.
    pub top_n: usize,
    pub score_thresh: T,
}

impl<T: Scalar> Default for NmsConfig<T> {
    fn default() -> Self {
        Self {
            n1: T::lit(0.5),
            n2: T::lit(0.7),
            t: T::lit(0.9),
            top_n: 200,
            score_thresh: T::lit(0.05),
        }
    }
}

impl<T: Scalar> NmsConfig<T> {
    /// `t` may lie outside `[-1, 1]`: `t ≥ 1` disables the similarity band's
    /// suppression and `t < -1` suppresses the whole band.
    pub fn validate(&self) -> Result<()> {
        if !(T::zero() <= self.n1 && self.n1 <= self.n2 && self.n2 <= T::one()) {
            return Err(Error::Config(format!(
                "NMS thresholds must satisfy 0 <= n1 <= n2 <= 1 (n1={}, n2={})",
                self.n1, self.n2
            )));
        }
        if self.t.is_nan() {
            return Err(Error::Config("similarity threshold t is NaN".into()));
        }
        if self.top_n == 0 {
            return Err(Error::Config("top_n must be at least 1".into()));
        }
        if !self.score_thresh.is_finite() {
            return Err(Error::Config("score_thresh must be finite".into()));
        }
        Ok(())
    }
}

/// Checks detection invariants and that all coefficient vectors share one length.
pub fn validate_detections<T: Scalar>(dets: &[Detection<T>]) -> Result<()> {
    let k = dets.first().map(|d| d.coeffs.len());
    for (i, d) in dets.iter().enumerate() {
        d.bbox.validate()?;
        if !(d.score >= T::zero() && d.score <= T::one()) {
            return Err(Error::Config(format!(
                "detection {i}: score {} outside [0, 1]",
                d.score
            )));
        }
        if Some(d.coeffs.len()) != k {
            return Err(Error::Shape(format!(
                "detection {i} has {} coefficients, expected {}",
                d.coeffs.len(),
                k.unwrap_or(0)
            )));
        }
        if d.coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::Config(format!(
                "detection {i}: non-finite coefficient"
            )));
        }
        if d.coeffs.iter().all(|c| *c == T::zero()) {
            return Err(Error::Degenerate(format!(
                "detection {i}: zero-norm coefficient vector"
            )));
        }
    }
    Ok(())
}

/// Score-sorted detections of one class, as indices into the input slice.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassBatch {
    pub class_id: usize,
    pub indices: Vec<usize>,
}

/// Groups by class (ascending), drops `score < score_thresh`, sorts by
/// descending score (ties keep input order) and truncates to `top_n`.
pub fn prepare<T: Scalar>(dets: &[Detection<T>], cfg: &NmsConfig<T>) -> Vec<ClassBatch> {
    let mut by_class: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for (i, d) in dets.iter().enumerate() {
        if d.score >= cfg.score_thresh {
            by_class.entry(d.class_id).or_default().push(i);
        }
    }
    by_class
        .into_iter()
        .map(|(class_id, mut indices)| {
            indices.sort_by(|&a, &b| {
                dets[b]
                    .score
                    .partial_cmp(&dets[a].score)
                    .unwrap_or(std::cmp::Ordering::Equal)
            });
            indices.truncate(cfg.top_n);
            ClassBatch { class_id, indices }
        })
        .collect()
}

/// Strictly upper-triangular pairwise IoU matrix, row-major `n × n`.
#[derive(Debug, Clone, PartialEq)]
pub struct IouMatrix<T> {
    n: usize,
    values: Vec<T>,
}

impl<T: Scalar> IouMatrix<T> {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// `X[i][j]`; zero on and below the diagonal.
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.values[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    /// `K_j = max_i X[i][j]`, with `K_0 = 0`.
    pub fn column_max(&self) -> Vec<T> {
        let mut k = vec![T::zero(); self.n];
        for i in 0..self.n {
            for (kj, &x) in k.iter_mut().zip(self.row(i)).skip(i + 1) {
                *kj = kj.max(x);
            }
        }
        k
    }
}

pub fn pairwise_iou_triu<T: Scalar>(boxes: &[BoundingBox<T>]) -> IouMatrix<T> {
    let n = boxes.len();
    let x0: Vec<T> = boxes.iter().map(|b| b.x_min).collect();
    let y0: Vec<T> = boxes.iter().map(|b| b.y_min).collect();
    let x1: Vec<T> = boxes.iter().map(|b| b.x_max).collect();
    let y1: Vec<T> = boxes.iter().map(|b| b.y_max).collect();
    let area: Vec<T> = boxes.iter().map(|b| b.area()).collect();
    let mut values = vec![T::zero(); n * n];
    for i in 0..n {
        let row = &mut values[i * n..(i + 1) * n];
        for j in i + 1..n {
            let iw = (x1[i].min(x1[j]) - x0[i].max(x0[j])).max(T::zero());
            let ih = (y1[i].min(y1[j]) - y0[i].max(y0[j])).max(T::zero());
            let inter = iw * ih;
            let union = area[i] + area[j] - inter;
            row[j] = if union > T::zero() {
                (inter / union).min(T::one())
            } else {
                T::zero()
            };
        }
    }
    IouMatrix { n, values }
}

/// Survivor positions (into `boxes`, which must be score-sorted) under Fast NMS.
pub fn fast_nms<T: Scalar>(boxes: &[BoundingBox<T>], threshold: T) -> Vec<usize> {
    pairwise_iou_triu(boxes)
        .column_max()
        .iter()
        .enumerate()
        .filter(|(_, &k)| k <= threshold)
        .map(|(i, _)| i)
        .collect()
}

/// `a·b / (‖a‖‖b‖)`, clamped to `[-1, 1]`.
pub fn cosine_similarity<T: Scalar>(a: &[T], b: &[T]) -> Result<T> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "cosine similarity of vectors with lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    let na = a.iter().map(|x| *x * *x).sum::<T>().sqrt();
    let nb = b.iter().map(|x| *x * *x).sum::<T>().sqrt();
    if !(na > T::zero()) || !(nb > T::zero()) {
        return Err(Error::Degenerate(
            "cosine similarity of a zero-norm vector".into(),
        ));
    }
    let dot: T = a.iter().zip(b).map(|(x, y)| *x * *y).sum();
    Ok((dot / (na * nb)).max(-T::one()).min(T::one()))
}

fn unit_rows<T: Scalar>(dets: &[Detection<T>], indices: &[usize]) -> Vec<Vec<T>> {
    indices
        .iter()
        .map(|&i| {
            let c = &dets[i].coeffs;
            let norm = c.iter().map(|x| *x * *x).sum::<T>().sqrt();
            c.iter().map(|x| *x / norm).collect()
        })
        .collect()
}

/// Fast Feature NMS over one score-sorted class batch. Returns positions into `indices`.
fn ff_nms_batch<T: Scalar>(
    dets: &[Detection<T>],
    indices: &[usize],
    cfg: &NmsConfig<T>,
) -> Vec<usize> {
    let boxes: Vec<BoundingBox<T>> = indices.iter().map(|&i| dets[i].bbox).collect();
    let k = pairwise_iou_triu(&boxes).column_max();
    let units = unit_rows(dets, indices);
    let mut kept: Vec<usize> = Vec::new();
    for (i, &ki) in k.iter().enumerate() {
        let keep = if ki <= cfg.n1 {
            true
        } else if ki <= cfg.n2 {
            let s = kept
                .iter()
                .map(|&d| {
                    let dot: T = units[i].iter().zip(&units[d]).map(|(a, b)| *a * *b).sum();
                    dot.max(-T::one()).min(T::one())
                })
                .fold(T::neg_infinity(), T::max);
            s <= cfg.t
        } else {
            false
        };
        if keep {
            kept.push(i);
        }
    }
    kept
}

fn merge_by_score<T: Scalar>(dets: &[Detection<T>], mut survivors: Vec<usize>) -> Vec<usize> {
    survivors.sort_by(|&a, &b| {
        dets[b]
            .score
            .partial_cmp(&dets[a].score)
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    survivors
}

/// Input indices of the Fast Feature NMS survivors, in non-increasing score order.
pub fn ff_nms_indices<T: Scalar>(dets: &[Detection<T>], cfg: &NmsConfig<T>) -> Result<Vec<usize>> {
    cfg.validate()?;
    validate_detections(dets)?;
    let mut survivors = Vec::new();
    for batch in prepare(dets, cfg) {
        survivors.extend(
            ff_nms_batch(dets, &batch.indices, cfg)
                .into_iter()
                .map(|p| batch.indices[p]),
        );
    }
    Ok(merge_by_score(dets, survivors))
}

pub fn ff_nms<T: Scalar>(dets: &[Detection<T>], cfg: &NmsConfig<T>) -> Result<Vec<Detection<T>>> {
    Ok(ff_nms_indices(dets, cfg)?
        .into_iter()
        .map(|i| dets[i].clone())
        .collect())
}

/// Per-class Fast NMS with the same preparation as [`ff_nms_indices`].
pub fn fast_nms_indices<T: Scalar>(
    dets: &[Detection<T>],
    cfg: &NmsConfig<T>,
    threshold: T,
) -> Result<Vec<usize>> {
    cfg.validate()?;
    validate_detections(dets)?;
    let mut survivors = Vec::new();
    for batch in prepare(dets, cfg) {
        let boxes: Vec<BoundingBox<T>> = batch.indices.iter().map(|&i| dets[i].bbox).collect();
        survivors.extend(
            fast_nms(&boxes, threshold)
                .into_iter()
                .map(|p| batch.indices[p]),
        );
    }
    Ok(merge_by_score(dets, survivors))
}
