//! Forward pass of Residual Feature Augmentation with explicit weights.
//!
//! `C₅` is pooled at several ratios, each context map is projected to
//! `out_channels` by a 1×1 convolution and bilinearly resized back to the
//! size of `C₅`. Adaptive Spatial Fusion predicts one weight map per branch
//! (1×1 conv to `asf_hidden`, 3×3 conv to one channel per branch, per-pixel
//! softmax) and blends the branches. The blend is added to the top-down
//! lateral feature and passed through a final 3×3 convolution to form `P₅`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Channel-major `c × h × w` feature tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap<T> {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub values: Vec<T>,
}

impl<T: Scalar> FeatureMap<T> {
    pub fn new(channels: usize, height: usize, width: usize, values: Vec<T>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::Shape(
                "feature map dimensions must be at least 1".into(),
            ));
        }
        if values.len() != channels * height * width {
            return Err(Error::Shape(format!(
                "feature map {channels}x{height}x{width} needs {} values, got {}",
                channels * height * width,
                values.len()
            )));
        }
        Ok(Self {
            channels,
            height,
            width,
            values,
        })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            values: vec![T::zero(); channels * height * width],
        }
    }

    pub fn random<R: Rng>(channels: usize, height: usize, width: usize, rng: &mut R) -> Self {
        Self {
            channels,
            height,
            width,
            values: (0..channels * height * width)
                .map(|_| T::lit(rng.random_range(-1.0..1.0)))
                .collect(),
        }
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> T {
        self.values[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn plane(&self, c: usize) -> &[T] {
        let n = self.height * self.width;
        &self.values[c * n..(c + 1) * n]
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }
}

/// Convolution weights `[out][in][ky][kx]` with per-output bias. Stride 1,
/// zero padding `size / 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<T> {
    pub out_channels: usize,
    pub in_channels: usize,
    pub size: usize,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> Conv2d<T> {
    pub fn new(
        out_channels: usize,
        in_channels: usize,
        size: usize,
        weight: Vec<T>,
        bias: Vec<T>,
    ) -> Result<Self> {
        if size != 1 && size != 3 {
            return Err(Error::Shape(format!(
                "kernel size must be 1 or 3, got {size}"
            )));
        }
        if weight.len() != out_channels * in_channels * size * size || bias.len() != out_channels {
            return Err(Error::Shape(format!(
                "conv {out_channels}x{in_channels}x{size}x{size} got {} weights and {} biases",
                weight.len(),
                bias.len()
            )));
        }
        if weight.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::Config("convolution weights must be finite".into()));
        }
        Ok(Self {
            out_channels,
            in_channels,
            size,
            weight,
            bias,
        })
    }

    pub fn zeros(out_channels: usize, in_channels: usize, size: usize) -> Self {
        Self {
            out_channels,
            in_channels,
            size,
            weight: vec![T::zero(); out_channels * in_channels * size * size],
            bias: vec![T::zero(); out_channels],
        }
    }

    /// Uniform weights in `±1/√fan_in`, zero bias.
    pub fn random<R: Rng>(
        out_channels: usize,
        in_channels: usize,
        size: usize,
        rng: &mut R,
    ) -> Self {
        let bound = 1.0 / ((in_channels * size * size) as f64).sqrt();
        Self {
            out_channels,
            in_channels,
            size,
            weight: (0..out_channels * in_channels * size * size)
                .map(|_| T::lit(rng.random_range(-bound..bound)))
                .collect(),
            bias: (0..out_channels)
                .map(|_| T::lit(rng.random_range(-0.1..0.1)))
                .collect(),
        }
    }

    #[inline]
    pub fn w(&self, o: usize, i: usize, ky: usize, kx: usize) -> T {
        self.weight[((o * self.in_channels + i) * self.size + ky) * self.size + kx]
    }
}

/// Standard cross-correlation preserving the spatial size.
pub fn conv2d<T: Scalar>(f: &FeatureMap<T>, conv: &Conv2d<T>) -> Result<FeatureMap<T>> {
    if conv.in_channels != f.channels {
        return Err(Error::Shape(format!(
            "convolution expects {} input channels, feature map has {}",
            conv.in_channels, f.channels
        )));
    }
    let (h, w) = (f.height, f.width);
    let pad = (conv.size / 2) as isize;
    let mut out = FeatureMap::zeros(conv.out_channels, h, w);
    for o in 0..conv.out_channels {
        let dst = &mut out.values[o * h * w..(o + 1) * h * w];
        dst.fill(conv.bias[o]);
        for i in 0..f.channels {
            let src = f.plane(i);
            for ky in 0..conv.size {
                for kx in 0..conv.size {
                    let k = conv.w(o, i, ky, kx);
                    if k == T::zero() {
                        continue;
                    }
                    let dy = ky as isize - pad;
                    let dx = kx as isize - pad;
                    for y in 0..h {
                        let sy = y as isize + dy;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        let srow = &src[sy as usize * w..(sy as usize + 1) * w];
                        let drow = &mut dst[y * w..(y + 1) * w];
                        let x_lo = (-dx).max(0) as usize;
                        let x_hi = (w as isize - dx).min(w as isize).max(0) as usize;
                        for x in x_lo..x_hi {
                            drow[x] += k * srow[(x as isize + dx) as usize];
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Output extent `max(1, round(ratio · size))`.
pub fn pooled_size(size: usize, ratio: f64) -> usize {
    ((ratio * size as f64).round() as usize).max(1)
}

fn bin(i: usize, n_in: usize, n_out: usize) -> (usize, usize) {
    let start = i * n_in / n_out;
    let end = ((i + 1) * n_in).div_ceil(n_out);
    (start, end)
}

/// Adaptive average pooling to `pooled_size(·, ratio)` per spatial axis.
pub fn adaptive_avg_pool<T: Scalar>(f: &FeatureMap<T>, ratio: f64) -> Result<FeatureMap<T>> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::Config(format!(
            "pooling ratio must lie in (0, 1], got {ratio}"
        )));
    }
    let oh = pooled_size(f.height, ratio);
    let ow = pooled_size(f.width, ratio);
    let mut out = FeatureMap::zeros(f.channels, oh, ow);
    for c in 0..f.channels {
        let src = f.plane(c);
        for oy in 0..oh {
            let (y0, y1) = bin(oy, f.height, oh);
            for ox in 0..ow {
                let (x0, x1) = bin(ox, f.width, ow);
                let mut acc = T::zero();
                for y in y0..y1 {
                    for x in x0..x1 {
                        acc += src[y * f.width + x];
                    }
                }
                out.values[(c * oh + oy) * ow + ox] =
                    acc / T::from_usize_lossy((y1 - y0) * (x1 - x0));
            }
        }
    }
    Ok(out)
}

/// Half-pixel-centre source coordinate and blend weight along one axis.
fn sample_axis<T: Scalar>(dst: usize, n_in: usize, n_out: usize) -> (usize, usize, T) {
    let scale = T::from_usize_lossy(n_in) / T::from_usize_lossy(n_out);
    let src = ((T::from_usize_lossy(dst) + T::lit(0.5)) * scale - T::lit(0.5)).max(T::zero());
    let i0 = src.floor().to_usize().unwrap_or(0).min(n_in - 1);
    let i1 = (i0 + 1).min(n_in - 1);
    let frac = (src - T::from_usize_lossy(i0)).min(T::one());
    (i0, i1, frac)
}

/// Bilinear resize with half-pixel centres, clamped at the borders.
pub fn bilinear_upsample<T: Scalar>(
    f: &FeatureMap<T>,
    out_h: usize,
    out_w: usize,
) -> Result<FeatureMap<T>> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::Shape("upsample target must be at least 1x1".into()));
    }
    let ys: Vec<_> = (0..out_h)
        .map(|y| sample_axis::<T>(y, f.height, out_h))
        .collect();
    let xs: Vec<_> = (0..out_w)
        .map(|x| sample_axis::<T>(x, f.width, out_w))
        .collect();
    let mut out = FeatureMap::zeros(f.channels, out_h, out_w);
    for c in 0..f.channels {
        let src = f.plane(c);
        let at = |y: usize, x: usize| src[y * f.width + x];
        for (oy, &(y0, y1, fy)) in ys.iter().enumerate() {
            for (ox, &(x0, x1, fx)) in xs.iter().enumerate() {
                let top = at(y0, x0) * (T::one() - fx) + at(y0, x1) * fx;
                let bottom = at(y1, x0) * (T::one() - fx) + at(y1, x1) * fx;
                out.values[(c * out_h + oy) * out_w + ox] = top * (T::one() - fy) + bottom * fy;
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RfaConfig {
    /// Pooling ratios, strictly increasing in `(0, 1]`.
    pub ratios: Vec<f64>,
    pub out_channels: usize,
    /// Width of the ASF weight branch.
    pub asf_hidden: usize,
}

impl Default for RfaConfig {
    fn default() -> Self {
        Self::with_channels(256)
    }
}

impl RfaConfig {
    /// Default ratios `(0.1, 0.2, 0.3)` with the weight branch at half width.
    pub fn with_channels(out_channels: usize) -> Self {
        Self {
            ratios: vec![0.1, 0.2, 0.3],
            out_channels,
            asf_hidden: (out_channels / 2).max(1),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.ratios.is_empty() {
            return Err(Error::Config(
                "at least one pooling ratio is required".into(),
            ));
        }
        if self.ratios.iter().any(|r| !(*r > 0.0 && *r <= 1.0)) {
            return Err(Error::Config(format!(
                "ratios must lie in (0, 1]: {:?}",
                self.ratios
            )));
        }
        if self.ratios.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!(
                "ratios must be strictly increasing: {:?}",
                self.ratios
            )));
        }
        if self.out_channels == 0 || self.asf_hidden == 0 {
            return Err(Error::Config("channel counts must be at least 1".into()));
        }
        Ok(())
    }
}

/// Explicit weights of the fusion branch.
#[derive(Debug, Clone, PartialEq)]
pub struct AsfWeights<T> {
    /// 1×1, `branches·out_channels → asf_hidden`.
    pub reduce: Conv2d<T>,
    /// 3×3, `asf_hidden → branches`.
    pub spatial: Conv2d<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RfaWeights<T> {
    /// One 1×1 projection per ratio, `in_channels → out_channels`.
    pub projections: Vec<Conv2d<T>>,
    pub asf: AsfWeights<T>,
    /// 3×3, `out_channels → out_channels`.
    pub output: Conv2d<T>,
}

impl<T: Scalar> RfaWeights<T> {
    pub fn zeros(cfg: &RfaConfig, in_channels: usize) -> Self {
        let b = cfg.ratios.len();
        Self {
            projections: (0..b)
                .map(|_| Conv2d::zeros(cfg.out_channels, in_channels, 1))
                .collect(),
            asf: AsfWeights {
                reduce: Conv2d::zeros(cfg.asf_hidden, b * cfg.out_channels, 1),
                spatial: Conv2d::zeros(b, cfg.asf_hidden, 3),
            },
            output: Conv2d::zeros(cfg.out_channels, cfg.out_channels, 3),
        }
    }

    pub fn random<R: Rng>(cfg: &RfaConfig, in_channels: usize, rng: &mut R) -> Self {
        let b = cfg.ratios.len();
        Self {
            projections: (0..b)
                .map(|_| Conv2d::random(cfg.out_channels, in_channels, 1, rng))
                .collect(),
            asf: AsfWeights {
                reduce: Conv2d::random(cfg.asf_hidden, b * cfg.out_channels, 1, rng),
                spatial: Conv2d::random(b, cfg.asf_hidden, 3, rng),
            },
            output: Conv2d::random(cfg.out_channels, cfg.out_channels, 3, rng),
        }
    }

    /// Checks every kernel against `cfg` and the `C₅` channel count.
    pub fn validate(&self, cfg: &RfaConfig, in_channels: usize) -> Result<()> {
        let b = cfg.ratios.len();
        let expect = |name: &str, c: &Conv2d<T>, o: usize, i: usize, s: usize| -> Result<()> {
            if (c.out_channels, c.in_channels, c.size) != (o, i, s)
                || c.weight.len() != o * i * s * s
                || c.bias.len() != o
            {
                return Err(Error::Shape(format!(
                    "{name}: expected {o}x{i}x{s}x{s}, got {}x{}x{}x{}",
                    c.out_channels, c.in_channels, c.size, c.size
                )));
            }
            Ok(())
        };
        if self.projections.len() != b {
            return Err(Error::Shape(format!(
                "{} projections for {} pooling ratios",
                self.projections.len(),
                b
            )));
        }
        for p in &self.projections {
            expect("projection", p, cfg.out_channels, in_channels, 1)?;
        }
        expect(
            "asf reduce",
            &self.asf.reduce,
            cfg.asf_hidden,
            b * cfg.out_channels,
            1,
        )?;
        expect("asf spatial", &self.asf.spatial, b, cfg.asf_hidden, 3)?;
        expect(
            "output",
            &self.output,
            cfg.out_channels,
            cfg.out_channels,
            3,
        )?;
        Ok(())
    }
}

/// Adaptive Spatial Fusion of equally shaped branch features.
pub fn asf_fuse<T: Scalar>(
    features: &[FeatureMap<T>],
    weights: &AsfWeights<T>,
) -> Result<FeatureMap<T>> {
    let first = features
        .first()
        .ok_or_else(|| Error::Shape("ASF needs at least one branch".into()))?;
    if features.iter().any(|f| f.shape() != first.shape()) {
        return Err(Error::Shape("ASF branches differ in shape".into()));
    }
    if weights.spatial.out_channels != features.len() {
        return Err(Error::Shape(format!(
            "ASF weight branch yields {} maps for {} features",
            weights.spatial.out_channels,
            features.len()
        )));
    }
    let (c, h, w) = first.shape();
    let concat = FeatureMap {
        channels: c * features.len(),
        height: h,
        width: w,
        values: features
            .iter()
            .flat_map(|f| f.values.iter().copied())
            .collect(),
    };
    let hidden = conv2d(&concat, &weights.reduce)?;
    let logits = conv2d(&hidden, &weights.spatial)?;

    let n = h * w;
    let mut out = FeatureMap::zeros(c, h, w);
    let mut wts = vec![T::zero(); features.len()];
    for px in 0..n {
        let max = (0..features.len())
            .map(|b| logits.values[b * n + px])
            .fold(T::neg_infinity(), T::max);
        let mut z = T::zero();
        for (b, wt) in wts.iter_mut().enumerate() {
            *wt = (logits.values[b * n + px] - max).exp();
            z += *wt;
        }
        for ch in 0..c {
            out.values[ch * n + px] = features
                .iter()
                .zip(&wts)
                .map(|(f, wt)| *wt / z * f.values[ch * n + px])
                .sum();
        }
    }
    Ok(out)
}

/// Residual context branch only: pooled, projected, resized and fused.
pub fn rfa_residual<T: Scalar>(
    c5: &FeatureMap<T>,
    w: &RfaWeights<T>,
    cfg: &RfaConfig,
) -> Result<FeatureMap<T>> {
    cfg.validate()?;
    w.validate(cfg, c5.channels)?;
    let branches = cfg
        .ratios
        .iter()
        .zip(&w.projections)
        .map(|(&r, proj)| {
            let pooled = adaptive_avg_pool(c5, r)?;
            let projected = conv2d(&pooled, proj)?;
            bilinear_upsample(&projected, c5.height, c5.width)
        })
        .collect::<Result<Vec<_>>>()?;
    asf_fuse(&branches, &w.asf)
}

/// `P₅ = conv3×3(lateral + ASF(context branches of C₅))`.
pub fn rfa_forward<T: Scalar>(
    c5: &FeatureMap<T>,
    lateral_p5: &FeatureMap<T>,
    w: &RfaWeights<T>,
    cfg: &RfaConfig,
) -> Result<FeatureMap<T>> {
    if (lateral_p5.height, lateral_p5.width) != (c5.height, c5.width) {
        return Err(Error::Shape(format!(
            "lateral is {}x{} but C5 is {}x{}",
            lateral_p5.height, lateral_p5.width, c5.height, c5.width
        )));
    }
    if lateral_p5.channels != cfg.out_channels {
        return Err(Error::Shape(format!(
            "lateral has {} channels, expected {}",
            lateral_p5.channels, cfg.out_channels
        )));
    }
    let mut merged = rfa_residual(c5, w, cfg)?;
    for (m, l) in merged.values.iter_mut().zip(&lateral_p5.values) {
        *m += *l;
    }
    conv2d(&merged, &w.output)
}
