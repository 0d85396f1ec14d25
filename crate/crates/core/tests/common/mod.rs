//! Independent scalar oracles and random-instance generators shared by the
//! integration tests and the acceptance runner.
#![allow(dead_code, clippy::needless_range_loop)]

use planeseg::assembly::{CoeffMatrix, LossInputs, PrototypeStack};
use planeseg::geometry::{BinaryMask, BoundingBox};
use planeseg::metrics::{mask_iou, SegLabelMap};
use planeseg::nms::{Detection, NmsConfig};
use planeseg::rfa::{Conv2d, FeatureMap, RfaConfig, RfaWeights};
use rand::Rng;

// ---------------------------------------------------------------- NMS

pub fn iou_oracle(a: [f64; 4], b: [f64; 4]) -> f64 {
    let iw = (a[2].min(b[2]) - a[0].max(b[0])).max(0.0);
    let ih = (a[3].min(b[3]) - a[1].max(b[1])).max(0.0);
    let inter = iw * ih;
    let union = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

fn cos_oracle(a: &[f64], b: &[f64]) -> f64 {
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for i in 0..a.len() {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0)
}

/// Per-class candidate lists: threshold, stable descending sort, truncate.
fn class_lists(dets: &[Detection<f64>], score_thresh: f64, top_n: usize) -> Vec<Vec<usize>> {
    let max_class = dets.iter().map(|d| d.class_id).max();
    let mut out = Vec::new();
    if let Some(mc) = max_class {
        for c in 0..=mc {
            let mut idx: Vec<usize> = (0..dets.len())
                .filter(|&i| dets[i].class_id == c && dets[i].score >= score_thresh)
                .collect();
            // insertion sort: stable by construction
            for a in 1..idx.len() {
                let mut b = a;
                while b > 0 && dets[idx[b - 1]].score < dets[idx[b]].score {
                    idx.swap(b - 1, b);
                    b -= 1;
                }
            }
            idx.truncate(top_n);
            if !idx.is_empty() {
                out.push(idx);
            }
        }
    }
    out
}

fn column_max(dets: &[Detection<f64>], idx: &[usize], i: usize) -> f64 {
    let mut k = 0.0f64;
    for j in 0..i {
        k = k.max(iou_oracle(
            dets[idx[j]].bbox.to_array(),
            dets[idx[i]].bbox.to_array(),
        ));
    }
    k
}

/// Loop transcription of Fast Feature NMS: D grows online, S is the largest
/// cosine similarity against D.
pub fn ff_nms_oracle(dets: &[Detection<f64>], cfg: &NmsConfig<f64>) -> Vec<usize> {
    let mut survivors = Vec::new();
    for idx in class_lists(dets, cfg.score_thresh, cfg.top_n) {
        let mut d: Vec<usize> = Vec::new();
        for i in 0..idx.len() {
            let k = column_max(dets, &idx, i);
            if k <= cfg.n1 {
                d.push(idx[i]);
            } else if k <= cfg.n2 {
                let mut s = f64::NEG_INFINITY;
                for &kept in &d {
                    s = s.max(cos_oracle(&dets[idx[i]].coeffs, &dets[kept].coeffs));
                }
                if s <= cfg.t {
                    d.push(idx[i]);
                }
            }
        }
        survivors.extend(d);
    }
    survivors.sort();
    survivors
}

pub fn fast_nms_oracle(dets: &[Detection<f64>], cfg: &NmsConfig<f64>, thr: f64) -> Vec<usize> {
    let mut survivors = Vec::new();
    for idx in class_lists(dets, cfg.score_thresh, cfg.top_n) {
        for i in 0..idx.len() {
            if column_max(dets, &idx, i) <= thr {
                survivors.push(idx[i]);
            }
        }
    }
    survivors.sort();
    survivors
}

pub fn sorted(mut v: Vec<usize>) -> Vec<usize> {
    v.sort();
    v
}

/// Random thresholds with `0 ≤ N₁ ≤ N₂ ≤ 1`; detections clustered so every
/// IoU band is populated. Scores are distinct with probability one.
pub fn random_nms_case<R: Rng>(
    rng: &mut R,
    max_n: usize,
    k: usize,
) -> (Vec<Detection<f64>>, NmsConfig<f64>) {
    let n = rng.random_range(0..=max_n);
    let classes = rng.random_range(1..=3);
    let dets = planeseg::synthetic::random_detections(
        rng,
        planeseg::synthetic::DetectionSpec {
            n,
            k,
            classes,
            frame: 550.0,
        },
    );
    let a: f64 = rng.random_range(0.0..=1.0);
    let b: f64 = rng.random_range(0.0..=1.0);
    let cfg = NmsConfig {
        n1: a.min(b),
        n2: a.max(b),
        t: rng.random_range(-1.0..=1.0),
        top_n: rng.random_range(1..=60),
        score_thresh: rng.random_range(0.0..0.3),
    };
    (dets, cfg)
}

// ---------------------------------------------------------------- assembly

pub fn random_prototypes<R: Rng>(rng: &mut R, h: usize, w: usize, k: usize) -> PrototypeStack<f64> {
    PrototypeStack::new(
        h,
        w,
        k,
        (0..h * w * k)
            .map(|_| rng.random_range(-3.0..3.0))
            .collect(),
    )
    .unwrap()
}

pub fn random_coeffs<R: Rng>(rng: &mut R, n: usize, k: usize) -> CoeffMatrix<f64> {
    CoeffMatrix::new(
        n,
        k,
        (0..n * k).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )
    .unwrap()
}

/// `out[i][y][x] = 1 / (1 + exp(-Σ_j P[y][x][j]·C[i][j]))`.
pub fn assemble_oracle(p: &PrototypeStack<f64>, c: &CoeffMatrix<f64>) -> Vec<Vec<Vec<f64>>> {
    let mut out = vec![vec![vec![0.0; p.w]; p.h]; c.n];
    for i in 0..c.n {
        for y in 0..p.h {
            for x in 0..p.w {
                let mut z = 0.0;
                for j in 0..p.k {
                    z += p.values[(y * p.w + x) * p.k + j] * c.values[i * c.k + j];
                }
                out[i][y][x] = 1.0 / (1.0 + (-z).exp());
            }
        }
    }
    out
}

fn smooth_l1_oracle(x: f64) -> f64 {
    if x.abs() < 1.0 {
        0.5 * x * x
    } else {
        x.abs() - 0.5
    }
}

fn ce_oracle(logits: &[f64], class: usize) -> f64 {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = logits.iter().map(|l| (l - m).exp()).sum();
    -(logits[class] - m - z.ln())
}

fn bce_oracle(pred: &[f64], gt: &BinaryMask) -> f64 {
    let mut acc = 0.0;
    for (i, &p) in pred.iter().enumerate() {
        let p = p.clamp(1e-7, 1.0 - 1e-7);
        let g = if gt.data[i] { 1.0 } else { 0.0 };
        acc += -(g * p.ln() + (1.0 - g) * (1.0 - p).ln());
    }
    acc / pred.len() as f64
}

/// `(L_conf + α L_loc + β L_mask) / N`, with 3:1 hard negatives.
pub fn loss_oracle(inp: &LossInputs<f64>) -> f64 {
    let n = inp.matches.iter().filter(|m| m.is_some()).count();
    let mut loc = 0.0;
    let mut conf = 0.0;
    let mut mask = 0.0;
    let mut neg = Vec::new();
    for (i, m) in inp.matches.iter().enumerate() {
        match m {
            Some(j) => {
                for c in 0..4 {
                    loc += smooth_l1_oracle(inp.loc_pred[i][c] - inp.gt_loc[*j][c]);
                }
                conf += ce_oracle(&inp.conf_logits[i], inp.gt_labels[*j]);
                mask += bce_oracle(&inp.mask_pred[i].values, &inp.gt_masks[*j]);
            }
            None => neg.push(ce_oracle(&inp.conf_logits[i], 0)),
        }
    }
    neg.sort_by(|a, b| b.partial_cmp(a).unwrap());
    conf += neg.iter().take(3 * n).sum::<f64>();
    (conf + inp.alpha * loc + inp.beta * mask) / n as f64
}

pub fn random_loss_inputs<R: Rng>(
    rng: &mut R,
    priors: usize,
    gts: usize,
    classes: usize,
    hw: usize,
) -> LossInputs<f64> {
    use planeseg::assembly::ProbMask;
    let mut matches: Vec<Option<usize>> = (0..priors)
        .map(|_| rng.random_bool(0.3).then(|| rng.random_range(0..gts)))
        .collect();
    if matches.iter().all(|m| m.is_none()) {
        matches[0] = Some(0);
    }
    LossInputs {
        matches,
        conf_logits: (0..priors)
            .map(|_| {
                (0..classes + 1)
                    .map(|_| rng.random_range(-4.0..4.0))
                    .collect()
            })
            .collect(),
        loc_pred: (0..priors)
            .map(|_| std::array::from_fn(|_| rng.random_range(-2.0..2.0)))
            .collect(),
        mask_pred: (0..priors)
            .map(|_| ProbMask {
                h: hw,
                w: hw,
                values: (0..hw * hw).map(|_| rng.random_range(0.0..1.0)).collect(),
            })
            .collect(),
        gt_labels: (0..gts).map(|_| rng.random_range(1..=classes)).collect(),
        gt_loc: (0..gts)
            .map(|_| std::array::from_fn(|_| rng.random_range(-2.0..2.0)))
            .collect(),
        gt_masks: (0..gts)
            .map(|_| {
                BinaryMask::from_data(
                    hw as u32,
                    hw as u32,
                    (0..hw * hw).map(|_| rng.random_bool(0.5)).collect(),
                )
                .unwrap()
            })
            .collect(),
        alpha: rng.random_range(0.5..2.0),
        beta: rng.random_range(0.5..8.0),
    }
}

// ---------------------------------------------------------------- RFA

type Tensor = Vec<Vec<Vec<f64>>>;

pub fn to_tensor(f: &FeatureMap<f64>) -> Tensor {
    (0..f.channels)
        .map(|c| {
            (0..f.height)
                .map(|y| (0..f.width).map(|x| f.get(c, y, x)).collect())
                .collect()
        })
        .collect()
}

fn pool_oracle(t: &Tensor, ratio: f64) -> Tensor {
    let (h, w) = (t[0].len(), t[0][0].len());
    let oh = ((ratio * h as f64).round() as usize).max(1);
    let ow = ((ratio * w as f64).round() as usize).max(1);
    t.iter()
        .map(|plane| {
            (0..oh)
                .map(|i| {
                    let (y0, y1) = (i * h / oh, ((i + 1) * h).div_ceil(oh));
                    (0..ow)
                        .map(|j| {
                            let (x0, x1) = (j * w / ow, ((j + 1) * w).div_ceil(ow));
                            let mut s = 0.0;
                            for row in &plane[y0..y1] {
                                for v in &row[x0..x1] {
                                    s += v;
                                }
                            }
                            s / ((y1 - y0) * (x1 - x0)) as f64
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

fn conv_oracle(t: &Tensor, conv: &Conv2d<f64>) -> Tensor {
    let (h, w) = (t[0].len(), t[0][0].len());
    let r = (conv.size / 2) as isize;
    let mut out = vec![vec![vec![0.0; w]; h]; conv.out_channels];
    for o in 0..conv.out_channels {
        for y in 0..h {
            for x in 0..w {
                let mut s = conv.bias[o];
                for i in 0..conv.in_channels {
                    for ky in 0..conv.size {
                        for kx in 0..conv.size {
                            let sy = y as isize + ky as isize - r;
                            let sx = x as isize + kx as isize - r;
                            if sy >= 0 && sx >= 0 && (sy as usize) < h && (sx as usize) < w {
                                let wi =
                                    ((o * conv.in_channels + i) * conv.size + ky) * conv.size + kx;
                                s += conv.weight[wi] * t[i][sy as usize][sx as usize];
                            }
                        }
                    }
                }
                out[o][y][x] = s;
            }
        }
    }
    out
}

fn upsample_oracle(t: &Tensor, oh: usize, ow: usize) -> Tensor {
    let (h, w) = (t[0].len(), t[0][0].len());
    let src = |d: usize, inn: usize, out: usize| -> (usize, usize, f64) {
        let s = ((d as f64 + 0.5) * inn as f64 / out as f64 - 0.5).clamp(0.0, (inn - 1) as f64);
        let lo = s.floor() as usize;
        let hi = (lo + 1).min(inn - 1);
        (lo, hi, s - lo as f64)
    };
    t.iter()
        .map(|plane| {
            (0..oh)
                .map(|y| {
                    let (y0, y1, fy) = src(y, h, oh);
                    (0..ow)
                        .map(|x| {
                            let (x0, x1, fx) = src(x, w, ow);
                            let top = plane[y0][x0] * (1.0 - fx) + plane[y0][x1] * fx;
                            let bot = plane[y1][x0] * (1.0 - fx) + plane[y1][x1] * fx;
                            top * (1.0 - fy) + bot * fy
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

/// Pool → 1×1 → resize per ratio, ASF (concat, 1×1, 3×3, softmax, weighted
/// sum), add lateral, 3×3.
pub fn rfa_oracle(
    c5: &FeatureMap<f64>,
    lateral: &FeatureMap<f64>,
    w: &RfaWeights<f64>,
    cfg: &RfaConfig,
) -> Tensor {
    let c5t = to_tensor(c5);
    let (h, wd) = (c5.height, c5.width);
    let branches: Vec<Tensor> = cfg
        .ratios
        .iter()
        .zip(&w.projections)
        .map(|(&r, p)| upsample_oracle(&conv_oracle(&pool_oracle(&c5t, r), p), h, wd))
        .collect();
    let concat: Tensor = branches.iter().flat_map(|b| b.iter().cloned()).collect();
    let logits = conv_oracle(&conv_oracle(&concat, &w.asf.reduce), &w.asf.spatial);
    let lat = to_tensor(lateral);
    let c = cfg.out_channels;
    let mut merged = vec![vec![vec![0.0; wd]; h]; c];
    for y in 0..h {
        for x in 0..wd {
            let m = logits
                .iter()
                .map(|l| l[y][x])
                .fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = logits.iter().map(|l| (l[y][x] - m).exp()).collect();
            let z: f64 = e.iter().sum();
            for ch in 0..c {
                let mut v = lat[ch][y][x];
                for (b, br) in branches.iter().enumerate() {
                    v += e[b] / z * br[ch][y][x];
                }
                merged[ch][y][x] = v;
            }
        }
    }
    conv_oracle(&merged, &w.output)
}

pub fn conv_tensor_oracle(f: &FeatureMap<f64>, conv: &Conv2d<f64>) -> Tensor {
    conv_oracle(&to_tensor(f), conv)
}

pub fn max_abs_diff(a: &Tensor, b: &FeatureMap<f64>) -> f64 {
    let mut m = 0.0f64;
    for (c, plane) in a.iter().enumerate() {
        for (y, row) in plane.iter().enumerate() {
            for (x, v) in row.iter().enumerate() {
                m = m.max((v - b.get(c, y, x)).abs());
            }
        }
    }
    m
}

// ---------------------------------------------------------------- metrics

pub fn random_label_map<R: Rng>(rng: &mut R, w: u32, h: u32, max_label: u32) -> SegLabelMap {
    SegLabelMap::new(
        w,
        h,
        (0..w * h)
            .map(|_| rng.random_range(0..=max_label))
            .collect(),
    )
    .unwrap()
}

/// Agreement over all unordered pixel pairs.
pub fn rand_index_oracle(a: &SegLabelMap, b: &SegLabelMap) -> f64 {
    let n = a.labels.len();
    let (mut agree, mut total) = (0u64, 0u64);
    for i in 0..n {
        for j in i + 1..n {
            let sa = a.labels[i] == a.labels[j];
            let sb = b.labels[i] == b.labels[j];
            agree += (sa == sb) as u64;
            total += 1;
        }
    }
    if total == 0 {
        1.0
    } else {
        agree as f64 / total as f64
    }
}

/// `H(a|b) + H(b|a) = 2H(a,b) − H(a) − H(b)` from per-pixel counting.
pub fn voi_oracle(a: &SegLabelMap, b: &SegLabelMap) -> f64 {
    let n = a.labels.len() as f64;
    let entropy = |keys: Vec<(u32, u32)>| -> f64 {
        let mut uniq = keys.clone();
        uniq.sort();
        uniq.dedup();
        uniq.iter()
            .map(|u| {
                let p = keys.iter().filter(|k| *k == u).count() as f64 / n;
                -p * p.ln()
            })
            .sum()
    };
    let ha = entropy(a.labels.iter().map(|&l| (l, 0)).collect());
    let hb = entropy(b.labels.iter().map(|&l| (l, 0)).collect());
    let hab = entropy(
        a.labels
            .iter()
            .zip(&b.labels)
            .map(|(&x, &y)| (x, y))
            .collect(),
    );
    2.0 * hab - ha - hb
}

pub fn covering_oracle(gt: &SegLabelMap, pred: &SegLabelMap) -> f64 {
    let n = gt.labels.len() as f64;
    let mut total = 0.0;
    for r in gt.ids_with_zero() {
        let rm = gt.mask_of(r);
        let mut best = 0.0f64;
        for q in pred.ids_with_zero() {
            best = best.max(mask_iou(&rm, &pred.mask_of(q)).unwrap());
        }
        total += rm.count() as f64 / n * best;
    }
    total
}

pub trait AllIds {
    fn ids_with_zero(&self) -> Vec<u32>;
}

impl AllIds for SegLabelMap {
    fn ids_with_zero(&self) -> Vec<u32> {
        let mut v = self.labels.clone();
        v.sort();
        v.dedup();
        v
    }
}

pub fn rect_mask(w: u32, h: u32, x0: u32, y0: u32, x1: u32, y1: u32) -> BinaryMask {
    let mut m = BinaryMask::new(w, h);
    for y in y0..y1 {
        for x in x0..x1 {
            m.set(y, x, true);
        }
    }
    m
}

pub fn bbox(x0: f64, y0: f64, x1: f64, y1: f64) -> BoundingBox<f64> {
    BoundingBox::new(x0, y0, x1, y1).unwrap()
}

// ---------------------------------------------------------------- scenes

pub struct SceneOutcome {
    pub annotation: planeseg::dataset_io::Annotation<f64>,
    pub instances: usize,
    /// Per ground-truth plane: (best mask IoU, normal error of that instance in degrees).
    pub per_plane: Vec<(f64, f64)>,
    /// Fraction of valid pixels that carry a non-zero label.
    pub coverage: f64,
    pub elapsed: std::time::Duration,
}

pub fn run_scene(
    frame: &planeseg::synthetic::SyntheticFrame,
    cfg: &planeseg::NdtRansacConfig<f64>,
) -> SceneOutcome {
    let t0 = std::time::Instant::now();
    let ann = planeseg::annotate_depth(&frame.depth, &frame.intrinsics, cfg).unwrap();
    let elapsed = t0.elapsed();
    let per_plane = frame
        .planes
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let gt = frame.gt_labels.mask_of(i as u32 + 1);
            ann.instances
                .iter()
                .map(|inst| {
                    let iou = mask_iou(&ann.labels.mask_of(inst.id), &gt).unwrap();
                    let cos = inst.plane.normal.dot(p.normal).abs().min(1.0);
                    (iou, cos.acos().to_degrees())
                })
                .fold(
                    (0.0, 180.0),
                    |best, cur| if cur.0 > best.0 { cur } else { best },
                )
        })
        .collect();
    let labelled = ann.labels.labels.iter().filter(|&&l| l != 0).count();
    SceneOutcome {
        instances: ann.instances.len(),
        per_plane,
        coverage: labelled as f64 / frame.depth.valid_count().max(1) as f64,
        elapsed,
        annotation: ann,
    }
}
