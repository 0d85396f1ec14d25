//! Wall-clock comparison of Fast NMS and Fast Feature NMS on random detections.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::nms::{fast_nms_indices, ff_nms_indices, NmsConfig};
use crate::synthetic::{random_detections, DetectionSpec};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub n: usize,
    pub k: usize,
    pub trials: usize,
    pub fast_median_ms: f64,
    pub fast_p95_ms: f64,
    pub ff_median_ms: f64,
    pub ff_p95_ms: f64,
    /// `median(ff) − median(fast)`.
    pub overhead_ms: f64,
    pub fast_survivors: usize,
    pub ff_survivors: usize,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Times both filters on `trials` single-class instances of size `(n, k)`.
/// Fast NMS runs at `N₁`. Survivor counts are summed over all trials.
pub fn bench_nms(
    n: usize,
    k: usize,
    trials: usize,
    cfg: &NmsConfig<f32>,
    seed: u64,
) -> Result<BenchReport> {
    cfg.validate()?;
    if k == 0 || trials == 0 {
        return Err(Error::Config("bench needs k ≥ 1 and trials ≥ 1".into()));
    }
    let mut cfg = *cfg;
    cfg.top_n = cfg.top_n.max(n);
    cfg.score_thresh = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = DetectionSpec {
        n,
        k,
        classes: 1,
        frame: 550.0,
    };
    let (mut fast_t, mut ff_t) = (Vec::with_capacity(trials), Vec::with_capacity(trials));
    let (mut fast_s, mut ff_s) = (0, 0);
    for _ in 0..trials {
        let dets = random_detections::<f32, _>(&mut rng, spec);
        let t0 = Instant::now();
        let a = fast_nms_indices(&dets, &cfg, cfg.n1)?;
        let t1 = Instant::now();
        let b = ff_nms_indices(&dets, &cfg)?;
        let t2 = Instant::now();
        fast_t.push((t1 - t0).as_secs_f64() * 1e3);
        ff_t.push((t2 - t1).as_secs_f64() * 1e3);
        fast_s += a.len();
        ff_s += b.len();
    }
    fast_t.sort_by(f64::total_cmp);
    ff_t.sort_by(f64::total_cmp);
    let (fm, ffm) = (quantile(&fast_t, 0.5), quantile(&ff_t, 0.5));
    Ok(BenchReport {
        n,
        k,
        trials,
        fast_median_ms: fm,
        fast_p95_ms: quantile(&fast_t, 0.95),
        ff_median_ms: ffm,
        ff_p95_ms: quantile(&ff_t, 0.95),
        overhead_ms: ffm - fm,
        fast_survivors: fast_s,
        ff_survivors: ff_s,
    })
}
