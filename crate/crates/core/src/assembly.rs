//! Instance mask assembly from prototypes and coefficients, mask cropping and
//! binarization, and the composite detection loss.

use crate::error::{Error, Result};
use crate::geometry::{BinaryMask, BoundingBox};
use crate::scalar::Scalar;

/// Clamp applied to predicted probabilities before taking logarithms.
pub const BCE_EPS: f64 = 1e-7;
/// Negatives kept per positive during hard-negative mining.
pub const NEG_POS_RATIO: usize = 3;

/// `h × w × k` prototype tensor, stored row-major with the prototype index fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeStack<T> {
    pub h: usize,
    pub w: usize,
    pub k: usize,
    pub values: Vec<T>,
}

impl<T: Scalar> PrototypeStack<T> {
    pub fn new(h: usize, w: usize, k: usize, values: Vec<T>) -> Result<Self> {
        if k == 0 || values.len() != h * w * k {
            return Err(Error::Shape(format!(
                "prototype stack {h}x{w}x{k} needs {} values, got {}",
                h * w * k,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("prototype values must be finite".into()));
        }
        Ok(Self { h, w, k, values })
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, j: usize) -> T {
        self.values[(y * self.w + x) * self.k + j]
    }

    /// Prototypes of pixel `(y, x)`.
    #[inline]
    pub fn pixel(&self, y: usize, x: usize) -> &[T] {
        let start = (y * self.w + x) * self.k;
        &self.values[start..start + self.k]
    }
}

/// `n × k` coefficient matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CoeffMatrix<T> {
    pub n: usize,
    pub k: usize,
    pub values: Vec<T>,
}

impl<T: Scalar> CoeffMatrix<T> {
    pub fn new(n: usize, k: usize, values: Vec<T>) -> Result<Self> {
        if values.len() != n * k {
            return Err(Error::Shape(format!(
                "coefficient matrix {n}x{k} needs {} values, got {}",
                n * k,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("coefficients must be finite".into()));
        }
        Ok(Self { n, k, values })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let k = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::Shape("coefficient rows differ in length".into()));
        }
        Self::new(rows.len(), k, rows.concat())
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.values[i * self.k..(i + 1) * self.k]
    }
}

/// Single-channel real-valued mask, row-major `h × w`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMask<T> {
    pub h: usize,
    pub w: usize,
    pub values: Vec<T>,
}

impl<T: Scalar> ProbMask<T> {
    pub fn filled(h: usize, w: usize, v: T) -> Self {
        Self {
            h,
            w,
            values: vec![v; h * w],
        }
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> T {
        self.values[y * self.w + x]
    }
}

/// `n` assembled masks with values in the open interval `(0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskStack<T> {
    pub masks: Vec<ProbMask<T>>,
}

#[inline]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Pre-sigmoid maps `P Cᵀ`: one logit mask per coefficient row.
pub fn assemble_logits<T: Scalar>(
    p: &PrototypeStack<T>,
    c: &CoeffMatrix<T>,
) -> Result<Vec<ProbMask<T>>> {
    if p.k != c.k {
        return Err(Error::Shape(format!(
            "prototype stack has k={} but coefficients have k={}",
            p.k, c.k
        )));
    }
    let mut out: Vec<ProbMask<T>> = (0..c.n)
        .map(|_| ProbMask::filled(p.h, p.w, T::zero()))
        .collect();
    for (px, protos) in p.values.chunks_exact(p.k).enumerate() {
        for (i, mask) in out.iter_mut().enumerate() {
            mask.values[px] = protos.iter().zip(c.row(i)).map(|(a, b)| *a * *b).sum();
        }
    }
    Ok(out)
}

/// `M = σ(P Cᵀ)`.
///
/// Outputs are clamped into `[min_positive, 1 − ε/2]` so every value stays
/// strictly inside `(0, 1)` even when the logit saturates the sigmoid.
pub fn assemble<T: Scalar>(p: &PrototypeStack<T>, c: &CoeffMatrix<T>) -> Result<MaskStack<T>> {
    let lo = T::min_positive_value();
    let hi = T::one() - T::epsilon() / T::lit(2.0);
    let mut masks = assemble_logits(p, c)?;
    for m in &mut masks {
        for v in &mut m.values {
            *v = sigmoid(*v).max(lo).min(hi);
        }
    }
    Ok(MaskStack { masks })
}

/// Zeroes every pixel whose centre `(x + ½, y + ½)` is outside `[x_min, x_max) × [y_min, y_max)`.
pub fn crop_mask<T: Scalar>(mask: &ProbMask<T>, bbox: &BoundingBox<T>) -> ProbMask<T> {
    let half = T::lit(0.5);
    let mut out = mask.clone();
    for y in 0..mask.h {
        let cy = T::from_usize_lossy(y) + half;
        let row_in = cy >= bbox.y_min && cy < bbox.y_max;
        for x in 0..mask.w {
            let cx = T::from_usize_lossy(x) + half;
            if !(row_in && cx >= bbox.x_min && cx < bbox.x_max) {
                out.values[y * mask.w + x] = T::zero();
            }
        }
    }
    out
}

/// `value > threshold`.
pub fn binarize<T: Scalar>(mask: &ProbMask<T>, threshold: T) -> BinaryMask {
    BinaryMask {
        width: mask.w as u32,
        height: mask.h as u32,
        data: mask.values.iter().map(|v| *v > threshold).collect(),
    }
}

/// Mean pixel-wise binary cross entropy with predictions clamped to `[ε, 1−ε]`.
pub fn mask_bce<T: Scalar>(pred: &ProbMask<T>, gt: &BinaryMask) -> Result<T> {
    if pred.h != gt.height as usize || pred.w != gt.width as usize {
        return Err(Error::Shape(format!(
            "prediction is {}x{}, ground truth {}x{}",
            pred.h, pred.w, gt.height, gt.width
        )));
    }
    if pred.values.is_empty() {
        return Ok(T::zero());
    }
    let eps = T::lit(BCE_EPS);
    let total: T = pred
        .values
        .iter()
        .zip(&gt.data)
        .map(|(&p, &g)| {
            let p = p.max(eps).min(T::one() - eps);
            if g {
                -p.ln()
            } else {
                -(T::one() - p).ln()
            }
        })
        .sum();
    Ok(total / T::from_usize_lossy(pred.values.len()))
}

#[inline]
fn smooth_l1<T: Scalar>(x: T) -> T {
    let a = x.abs();
    if a < T::one() {
        T::lit(0.5) * a * a
    } else {
        a - T::lit(0.5)
    }
}

/// `−log softmax(logits)[class]`, computed with the log-sum-exp shift.
pub fn softmax_cross_entropy<T: Scalar>(logits: &[T], class: usize) -> T {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = max + logits.iter().map(|&l| (l - max).exp()).sum::<T>().ln();
    lse - logits[class]
}

/// Inputs of the composite loss for one image.
///
/// Priors are the anchor slots of the detector. `matches[i]` is the ground
/// truth matched to prior `i` (the binary indicator `x`). Class logits carry
/// background at index 0; ground-truth labels are therefore `≥ 1`. Box
/// regression targets are already-encoded offsets.
#[derive(Debug, Clone, PartialEq)]
pub struct LossInputs<T> {
    pub matches: Vec<Option<usize>>,
    pub conf_logits: Vec<Vec<T>>,
    pub loc_pred: Vec<[T; 4]>,
    pub mask_pred: Vec<ProbMask<T>>,
    pub gt_labels: Vec<usize>,
    pub gt_loc: Vec<[T; 4]>,
    pub gt_masks: Vec<BinaryMask>,
    pub alpha: T,
    pub beta: T,
}

/// Default localization weight.
pub const DEFAULT_ALPHA: f64 = 1.5;
/// Default mask weight.
pub const DEFAULT_BETA: f64 = 6.125;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown<T> {
    pub conf: T,
    pub loc: T,
    pub mask: T,
    /// Positive match count `N`.
    pub positives: usize,
    pub total: T,
}

impl<T: Scalar> LossInputs<T> {
    pub fn positives(&self) -> usize {
        self.matches.iter().filter(|m| m.is_some()).count()
    }

    fn validate(&self) -> Result<()> {
        let priors = self.matches.len();
        if self.conf_logits.len() != priors || self.loc_pred.len() != priors {
            return Err(Error::Shape(format!(
                "{} priors but {} logit rows and {} box predictions",
                priors,
                self.conf_logits.len(),
                self.loc_pred.len()
            )));
        }
        let gts = self.gt_labels.len();
        if self.gt_loc.len() != gts || self.gt_masks.len() != gts {
            return Err(Error::Shape(
                "ground-truth labels, boxes and masks differ in count".into(),
            ));
        }
        if !(self.alpha > T::zero() && self.beta > T::zero()) {
            return Err(Error::Config("loss weights must be positive".into()));
        }
        for (i, m) in self.matches.iter().enumerate() {
            if let Some(j) = *m {
                if j >= gts {
                    return Err(Error::Shape(format!(
                        "prior {i} matched to missing ground truth {j}"
                    )));
                }
                if self.gt_labels[j] == 0 || self.gt_labels[j] >= self.conf_logits[i].len() {
                    return Err(Error::Shape(format!("ground truth {j} has invalid label")));
                }
                if i >= self.mask_pred.len() {
                    return Err(Error::Shape(format!(
                        "no mask prediction for positive prior {i}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Un-normalized `(L_conf, L_loc)`.
///
/// `L_loc` sums smooth-L1 over the four offsets of each positive prior.
/// `L_conf` sums the softmax cross entropy of the positives and of the
/// `3·N` unmatched priors with the highest background loss.
pub fn detection_losses<T: Scalar>(inputs: &LossInputs<T>) -> Result<(T, T)> {
    inputs.validate()?;
    let n = inputs.positives();
    if n == 0 {
        return Err(Error::Normalization("no positive matches (N = 0)".into()));
    }
    let mut loc = T::zero();
    let mut conf = T::zero();
    let mut negatives: Vec<(T, usize)> = Vec::new();
    for (i, m) in inputs.matches.iter().enumerate() {
        match *m {
            Some(j) => {
                for (p, t) in inputs.loc_pred[i].iter().zip(&inputs.gt_loc[j]) {
                    loc += smooth_l1(*p - *t);
                }
                conf += softmax_cross_entropy(&inputs.conf_logits[i], inputs.gt_labels[j]);
            }
            None => negatives.push((softmax_cross_entropy(&inputs.conf_logits[i], 0), i)),
        }
    }
    negatives.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.1.cmp(&b.1))
    });
    conf += negatives
        .iter()
        .take(NEG_POS_RATIO * n)
        .map(|(l, _)| *l)
        .sum::<T>();
    Ok((conf, loc))
}

/// Sum of per-positive mask BCE against the matched ground-truth masks.
pub fn mask_loss<T: Scalar>(inputs: &LossInputs<T>) -> Result<T> {
    inputs.validate()?;
    let mut total = T::zero();
    for (i, m) in inputs.matches.iter().enumerate() {
        if let Some(j) = *m {
            total += mask_bce(&inputs.mask_pred[i], &inputs.gt_masks[j])?;
        }
    }
    Ok(total)
}

/// `(L_conf + α·L_loc + β·L_mask) / N`.
pub fn combine_losses<T: Scalar>(
    conf: T,
    loc: T,
    mask: T,
    alpha: T,
    beta: T,
    positives: usize,
) -> Result<T> {
    if positives == 0 {
        return Err(Error::Normalization("no positive matches (N = 0)".into()));
    }
    Ok((conf + alpha * loc + beta * mask) / T::from_usize_lossy(positives))
}

pub fn loss_breakdown<T: Scalar>(inputs: &LossInputs<T>) -> Result<LossBreakdown<T>> {
    let (conf, loc) = detection_losses(inputs)?;
    let mask = mask_loss(inputs)?;
    let positives = inputs.positives();
    Ok(LossBreakdown {
        conf,
        loc,
        mask,
        positives,
        total: combine_losses(conf, loc, mask, inputs.alpha, inputs.beta, positives)?,
    })
}

pub fn total_loss<T: Scalar>(inputs: &LossInputs<T>) -> Result<T> {
    loss_breakdown(inputs).map(|b| b.total)
}
