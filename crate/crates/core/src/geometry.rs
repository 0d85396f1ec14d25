//! Camera model, depth unprojection, planes, boxes and binary masks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{sym_eigen3, Mat3, Vec3};
use crate::scalar::Scalar;

/// Pinhole intrinsics. Lens distortion is not modelled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics<T> {
    pub fx: T,
    pub fy: T,
    pub cx: T,
    pub cy: T,
    pub width: u32,
    pub height: u32,
}

impl<T: Scalar> CameraIntrinsics<T> {
    pub fn new(fx: T, fy: T, cx: T, cy: T, width: u32, height: u32) -> Result<Self> {
        let intr = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        intr.validate()?;
        Ok(intr)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.fx, self.fy, self.cx, self.cy]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Config("intrinsics must be finite".into()));
        }
        if self.fx <= T::zero() || self.fy <= T::zero() {
            return Err(Error::Config(format!(
                "focal lengths must be positive (fx={}, fy={})",
                self.fx, self.fy
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::Config("image size must be non-zero".into()));
        }
        let w = T::from_u32(self.width).unwrap();
        let h = T::from_u32(self.height).unwrap();
        if self.cx < T::zero() || self.cx >= w || self.cy < T::zero() || self.cy >= h {
            return Err(Error::Config(format!(
                "principal point ({}, {}) outside {}x{} image",
                self.cx, self.cy, self.width, self.height
            )));
        }
        Ok(())
    }

    /// Projects a camera-frame point to continuous pixel coordinates `(u, v)`.
    pub fn project(&self, p: Vec3<T>) -> (T, T) {
        (self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy)
    }

    pub fn cast<U: Scalar>(&self) -> CameraIntrinsics<U> {
        CameraIntrinsics {
            fx: U::lit(self.fx.as_f64()),
            fy: U::lit(self.fy.as_f64()),
            cx: U::lit(self.cx.as_f64()),
            cy: U::lit(self.cy.as_f64()),
            width: self.width,
            height: self.height,
        }
    }
}

/// Row-major depth image in millimetres. `0` marks an invalid pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DepthImage {
    pub width: u32,
    pub height: u32,
    pub values: Vec<u16>,
}

impl DepthImage {
    pub fn new(width: u32, height: u32, values: Vec<u16>) -> Result<Self> {
        if values.len() != width as usize * height as usize {
            return Err(Error::Shape(format!(
                "depth buffer has {} values, expected {}x{}",
                values.len(),
                width,
                height
            )));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn zeros(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            values: vec![0; width as usize * height as usize],
        }
    }

    #[inline]
    pub fn get(&self, row: u32, col: u32) -> u16 {
        self.values[row as usize * self.width as usize + col as usize]
    }

    pub fn valid_count(&self) -> usize {
        self.values.iter().filter(|&&v| v != 0).count()
    }
}

/// Source pixel of an unprojected point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pixel {
    pub row: u32,
    pub col: u32,
}

/// Points in metres with the pixel each one came from.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud<T> {
    pub points: Vec<Vec3<T>>,
    pub provenance: Vec<Pixel>,
    /// `(width, height)` of the source image, when the cloud came from one.
    pub frame_size: Option<(u32, u32)>,
}

impl<T: Scalar> PointCloud<T> {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn has_provenance(&self) -> bool {
        self.provenance.len() == self.points.len()
    }

    /// Applies `p ↦ R·p + t` to every point, keeping provenance.
    pub fn transformed(&self, rotation: &Mat3<T>, translation: Vec3<T>) -> Self {
        Self {
            points: self
                .points
                .iter()
                .map(|p| crate::linalg::mat3_vec(rotation, *p) + translation)
                .collect(),
            provenance: self.provenance.clone(),
            frame_size: self.frame_size,
        }
    }
}

/// Back-projects every valid depth pixel through the pinhole model.
pub fn unproject<T: Scalar>(
    depth: &DepthImage,
    intr: &CameraIntrinsics<T>,
) -> Result<PointCloud<T>> {
    if depth.width != intr.width || depth.height != intr.height {
        return Err(Error::Config(format!(
            "depth image is {}x{} but intrinsics describe {}x{}",
            depth.width, depth.height, intr.width, intr.height
        )));
    }
    let mm = T::lit(1e-3);
    let mut cloud = PointCloud {
        points: Vec::with_capacity(depth.valid_count()),
        provenance: Vec::with_capacity(depth.valid_count()),
        frame_size: Some((depth.width, depth.height)),
    };
    for row in 0..depth.height {
        let v = T::from_u32(row).unwrap();
        for col in 0..depth.width {
            let d = depth.get(row, col);
            if d == 0 {
                continue;
            }
            let u = T::from_u32(col).unwrap();
            let z = T::from_u16(d).unwrap() * mm;
            cloud.points.push(Vec3::new(
                (u - intr.cx) * z / intr.fx,
                (v - intr.cy) * z / intr.fy,
                z,
            ));
            cloud.provenance.push(Pixel { row, col });
        }
    }
    Ok(cloud)
}

/// Plane `{x : normal·x = offset}` in canonical orientation (`offset ≥ 0`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Plane<T> {
    pub normal: Vec3<T>,
    pub offset: T,
}

impl<T: Scalar> Plane<T> {
    /// Builds a canonical plane from any non-zero normal and matching offset.
    pub fn new(normal: Vec3<T>, offset: T) -> Result<Self> {
        let n = normal.norm();
        if !(n > T::zero()) || !n.is_finite() || !offset.is_finite() {
            return Err(Error::Degenerate(
                "plane normal must be finite and non-zero".into(),
            ));
        }
        Ok(Self {
            normal: normal / n,
            offset: offset / n,
        }
        .canonical())
    }

    pub fn from_point_normal(point: Vec3<T>, normal: Vec3<T>) -> Result<Self> {
        let n = normal
            .normalized()
            .ok_or_else(|| Error::Degenerate("plane normal must be finite and non-zero".into()))?;
        Self::new(n, n.dot(point))
    }

    /// Flips the orientation so that `offset ≥ 0`; at `offset == 0` the
    /// lexicographically larger of `±normal` wins.
    pub fn canonical(self) -> Self {
        let flip = if self.offset < T::zero() {
            true
        } else if self.offset == T::zero() {
            let n = self.normal.to_array();
            let m = (-self.normal).to_array();
            m.partial_cmp(&n) == Some(std::cmp::Ordering::Greater)
        } else {
            false
        };
        if flip {
            Self {
                normal: -self.normal,
                offset: -self.offset,
            }
        } else {
            self
        }
    }

    #[inline]
    pub fn signed_distance(&self, p: Vec3<T>) -> T {
        self.normal.dot(p) - self.offset
    }

    pub fn cast<U: Scalar>(&self) -> Plane<U> {
        Plane {
            normal: self.normal.cast(),
            offset: U::lit(self.offset.as_f64()),
        }
    }
}

/// Unsigned point-to-plane distance `|n·p − d|`.
#[inline]
pub fn point_plane_distance<T: Scalar>(plane: &Plane<T>, p: Vec3<T>) -> T {
    plane.signed_distance(p).abs()
}

/// Total-least-squares plane through `points`.
pub fn fit_plane_lsq<T: Scalar>(points: &[Vec3<T>]) -> Result<Plane<T>> {
    if points.len() < 3 {
        return Err(Error::Degenerate(format!(
            "plane fit needs at least 3 points, got {}",
            points.len()
        )));
    }
    let count = T::from_usize_lossy(points.len());
    let centroid = points.iter().fold(Vec3::zeros(), |acc, p| acc + *p) / count;
    let mut cov: Mat3<T> = [[T::zero(); 3]; 3];
    for p in points {
        let o = (*p - centroid).outer();
        for r in 0..3 {
            for c in 0..3 {
                cov[r][c] += o[r][c];
            }
        }
    }
    let eig = sym_eigen3(&cov);
    let [l1, l2, _] = eig.values;
    if !(l1 > T::zero()) || l2 <= l1 * T::epsilon() * T::lit(64.0) {
        return Err(Error::Degenerate(
            "points are collinear or coincident".into(),
        ));
    }
    Plane::from_point_normal(centroid, eig.vectors[2])
}

/// Axis-aligned box in continuous pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox<T> {
    pub x_min: T,
    pub y_min: T,
    pub x_max: T,
    pub y_max: T,
}

impl<T: Scalar> BoundingBox<T> {
    pub fn new(x_min: T, y_min: T, x_max: T, y_max: T) -> Result<Self> {
        let b = Self {
            x_min,
            y_min,
            x_max,
            y_max,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let a = self.to_array();
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("box coordinates must be finite".into()));
        }
        if self.x_min > self.x_max || self.y_min > self.y_max {
            return Err(Error::Config(format!("inverted box {a:?}")));
        }
        Ok(())
    }

    #[inline]
    pub fn area(&self) -> T {
        (self.x_max - self.x_min) * (self.y_max - self.y_min)
    }

    pub fn to_array(&self) -> [T; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max]
    }

    pub fn from_array(a: [T; 4]) -> Result<Self> {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub fn cast<U: Scalar>(&self) -> BoundingBox<U> {
        BoundingBox {
            x_min: U::lit(self.x_min.as_f64()),
            y_min: U::lit(self.y_min.as_f64()),
            x_max: U::lit(self.x_max.as_f64()),
            y_max: U::lit(self.y_max.as_f64()),
        }
    }
}

/// Intersection over union of two boxes; `0` when the union is empty.
#[inline]
pub fn box_iou<T: Scalar>(a: &BoundingBox<T>, b: &BoundingBox<T>) -> T {
    let iw = (a.x_max.min(b.x_max) - a.x_min.max(b.x_min)).max(T::zero());
    let ih = (a.y_max.min(b.y_max) - a.y_min.max(b.y_min)).max(T::zero());
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union > T::zero() {
        (inter / union).min(T::one())
    } else {
        T::zero()
    }
}

/// Row-major boolean mask over an image.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    pub width: u32,
    pub height: u32,
    pub data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![false; width as usize * height as usize],
        }
    }

    pub fn from_data(width: u32, height: u32, data: Vec<bool>) -> Result<Self> {
        if data.len() != width as usize * height as usize {
            return Err(Error::Shape(format!(
                "mask has {} values, expected {}x{}",
                data.len(),
                width,
                height
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    #[inline]
    pub fn get(&self, row: u32, col: u32) -> bool {
        self.data[row as usize * self.width as usize + col as usize]
    }

    #[inline]
    pub fn set(&mut self, row: u32, col: u32, value: bool) {
        self.data[row as usize * self.width as usize + col as usize] = value;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Tight pixel-extent box: a single pixel `(r, c)` spans `[c, c+1] × [r, r+1]`.
    pub fn bounding_box<T: Scalar>(&self) -> Option<BoundingBox<T>> {
        let mut extent: Option<(u32, u32, u32, u32)> = None;
        for row in 0..self.height {
            for col in 0..self.width {
                if self.get(row, col) {
                    extent = Some(match extent {
                        None => (col, row, col, row),
                        Some((x0, y0, x1, y1)) => {
                            (x0.min(col), y0.min(row), x1.max(col), y1.max(row))
                        }
                    });
                }
            }
        }
        extent.map(|(x0, y0, x1, y1)| BoundingBox {
            x_min: T::from_u32(x0).unwrap(),
            y_min: T::from_u32(y0).unwrap(),
            x_max: T::from_u32(x1 + 1).unwrap(),
            y_max: T::from_u32(y1 + 1).unwrap(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{mat3_mul, mat3_vec};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn intr() -> CameraIntrinsics<f64> {
        CameraIntrinsics::new(500.0, 500.0, 4.0, 3.0, 8, 6).unwrap()
    }

    #[test]
    fn unproject_principal_point_and_offsets() {
        let mut d = DepthImage::zeros(8, 6);
        d.values[3 * 8 + 4] = 1000;
        let cloud = unproject(&d, &intr()).unwrap();
        assert_eq!(cloud.len(), 1);
        assert_eq!(cloud.points[0], Vec3::new(0.0, 0.0, 1.0));
        assert_eq!(cloud.provenance[0], Pixel { row: 3, col: 4 });

        // one focal length to the right of the principal point at 2 m
        let i = CameraIntrinsics::new(2.0f64, 2.0, 1.0, 1.0, 4, 3).unwrap();
        let mut d = DepthImage::zeros(4, 3);
        d.values[4 + 3] = 2000;
        let cloud = unproject(&d, &i).unwrap();
        let p = cloud.points[0];
        assert!((p.x - 2.0).abs() < 1e-12 && p.y.abs() < 1e-12 && (p.z - 2.0).abs() < 1e-12);
    }

    #[test]
    fn unproject_skips_invalid_and_checks_size() {
        let d = DepthImage::zeros(8, 6);
        assert!(unproject(&d, &intr()).unwrap().is_empty());
        let d = DepthImage::zeros(7, 6);
        assert!(matches!(unproject(&d, &intr()), Err(Error::Config(_))));
    }

    #[test]
    fn intrinsics_invariants() {
        assert!(CameraIntrinsics::new(0.0, 1.0, 0.0, 0.0, 2, 2).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 2.0, 0.0, 2, 2).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 1.9, 1.9, 2, 2).is_ok());
    }

    #[test]
    fn project_unproject_roundtrip_within_quantization() {
        let i = CameraIntrinsics::new(525.0, 525.0, 319.5, 239.5, 640, 480).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut d = DepthImage::zeros(640, 480);
        for v in d.values.iter_mut() {
            if rng.random_bool(0.8) {
                *v = rng.random_range(300..8000);
            }
        }
        let cloud = unproject(&d, &i).unwrap();
        for (p, px) in cloud.points.iter().zip(&cloud.provenance) {
            let (u, v) = i.project(*p);
            assert!((u - px.col as f64).abs() < 1e-9 && (v - px.row as f64).abs() < 1e-9);
            let mm = d.get(px.row, px.col) as f64;
            assert!((p.z * 1000.0 - mm).abs() <= 0.5);
        }
    }

    #[test]
    fn distance_examples() {
        let pl = Plane::new(Vec3::new(0.0, 0.0, 1.0), 2.0).unwrap();
        assert_eq!(point_plane_distance(&pl, Vec3::new(5.0, 7.0, 2.0)), 0.0);
        assert_eq!(point_plane_distance(&pl, Vec3::new(0.0, 0.0, 3.5)), 1.5);
    }

    #[test]
    fn distance_matches_direct_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..500 {
            let n = Vec3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0f64),
            );
            let d: f64 = rng.random_range(-3.0..3.0);
            let pl = Plane::new(n, d).unwrap();
            let p = Vec3::new(
                rng.random_range(-5.0..5.0),
                rng.random_range(-5.0..5.0),
                rng.random_range(-5.0..5.0f64),
            );
            let len = (n.x * n.x + n.y * n.y + n.z * n.z).sqrt();
            let direct = ((n.x * p.x + n.y * p.y + n.z * p.z) / len - d / len).abs();
            assert!((point_plane_distance(&pl, p) - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn canonical_orientation() {
        let pl = Plane::new(Vec3::new(0.0, 0.0, -2.0), -2.0f64).unwrap();
        assert_eq!(pl.normal, Vec3::new(0.0, 0.0, 1.0));
        assert_eq!(pl.offset, 1.0);
        let pl = Plane::new(Vec3::new(0.0, -1.0, 0.0), 0.0f64).unwrap();
        assert_eq!(pl.normal, Vec3::new(0.0, 1.0, 0.0));
        assert!(Plane::new(Vec3::zeros(), 1.0f64).is_err());
    }

    #[test]
    fn box_iou_examples() {
        let a = BoundingBox::new(0.0f64, 0.0, 2.0, 2.0).unwrap();
        let b = BoundingBox::new(1.0, 0.0, 3.0, 2.0).unwrap();
        let c = BoundingBox::new(5.0, 5.0, 6.0, 6.0).unwrap();
        assert_eq!(box_iou(&a, &a), 1.0);
        assert_eq!(box_iou(&a, &c), 0.0);
        assert!((box_iou(&a, &b) - 1.0 / 3.0).abs() < 1e-15);
        let z = BoundingBox::new(1.0, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(box_iou(&z, &z), 0.0);
        assert!(BoundingBox::new(2.0, 0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn fit_unit_square() {
        let pts = [
            Vec3::new(0.0, 0.0, 1.0),
            Vec3::new(1.0, 0.0, 1.0),
            Vec3::new(0.0, 1.0, 1.0),
            Vec3::new(1.0, 1.0, 1.0f64),
        ];
        let pl = fit_plane_lsq(&pts).unwrap();
        assert!((pl.normal.z - 1.0).abs() < 1e-12);
        assert!((pl.offset - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fit_three_points_interpolates() {
        let pts = [
            Vec3::new(0.3, -1.0, 2.0),
            Vec3::new(1.0, 0.5, 2.5),
            Vec3::new(-0.7, 0.2, 1.1f64),
        ];
        let pl = fit_plane_lsq(&pts).unwrap();
        for p in pts {
            assert!(point_plane_distance(&pl, p) < 1e-12);
        }
    }

    #[test]
    fn fit_rejects_degenerate() {
        let two = [Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0f64)];
        assert!(matches!(fit_plane_lsq(&two), Err(Error::Degenerate(_))));
        let line: Vec<Vec3<f64>> = (0..10)
            .map(|i| Vec3::new(i as f64, 2.0 * i as f64, 1.0))
            .collect();
        assert!(matches!(fit_plane_lsq(&line), Err(Error::Degenerate(_))));
    }

    #[test]
    fn fit_noisy_plane_within_half_degree() {
        use rand_distr::{Distribution, Normal};
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let noise = Normal::new(0.0, 0.001).unwrap();
        let truth = Plane::new(Vec3::new(0.2, -0.5, 0.84), 1.7f64).unwrap();
        let u = truth
            .normal
            .cross(Vec3::new(1.0, 0.0, 0.0))
            .normalized()
            .unwrap();
        let v = truth.normal.cross(u);
        let origin = truth.normal * truth.offset;
        let pts: Vec<_> = (0..100)
            .map(|_| {
                let a = rng.random_range(-0.5..0.5);
                let b = rng.random_range(-0.5..0.5);
                origin + u * a + v * b + truth.normal * noise.sample(&mut rng)
            })
            .collect();
        let fit = fit_plane_lsq(&pts).unwrap();
        assert!(fit.normal.angle_to(truth.normal).to_degrees() < 0.5);
    }

    #[test]
    fn fit_is_locally_optimal() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pts: Vec<Vec3<f64>> = (0..60)
            .map(|_| {
                Vec3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-0.05..0.05) + 2.0,
                )
            })
            .collect();
        let fit = fit_plane_lsq(&pts).unwrap();
        let cost = |pl: &Plane<f64>| {
            pts.iter()
                .map(|p| pl.signed_distance(*p).powi(2))
                .sum::<f64>()
        };
        let best = cost(&fit);
        for _ in 0..100 {
            let dn = Vec3::new(
                rng.random_range(-0.02..0.02),
                rng.random_range(-0.02..0.02),
                rng.random_range(-0.02..0.02),
            );
            let pl =
                Plane::new(fit.normal + dn, fit.offset + rng.random_range(-0.01..0.01)).unwrap();
            assert!(best <= cost(&pl) + 1e-12);
        }
    }

    #[test]
    fn mask_bounding_box_is_tight() {
        let mut m = BinaryMask::new(5, 4);
        assert!(m.bounding_box::<f64>().is_none());
        m.set(1, 2, true);
        m.set(3, 0, true);
        let b: BoundingBox<f64> = m.bounding_box().unwrap();
        assert_eq!(b.to_array(), [0.0, 1.0, 3.0, 4.0]);
    }

    fn rotation(a: f64, b: f64, c: f64) -> Mat3<f64> {
        let rx = [
            [1.0, 0.0, 0.0],
            [0.0, a.cos(), -a.sin()],
            [0.0, a.sin(), a.cos()],
        ];
        let ry = [
            [b.cos(), 0.0, b.sin()],
            [0.0, 1.0, 0.0],
            [-b.sin(), 0.0, b.cos()],
        ];
        let rz = [
            [c.cos(), -c.sin(), 0.0],
            [c.sin(), c.cos(), 0.0],
            [0.0, 0.0, 1.0],
        ];
        mat3_mul(&rz, &mat3_mul(&ry, &rx))
    }

    proptest! {
        #[test]
        fn box_iou_symmetric_and_bounded(
            a in (0.0..50.0f64, 0.0..50.0f64, 0.0..30.0f64, 0.0..30.0f64),
            b in (0.0..50.0f64, 0.0..50.0f64, 0.0..30.0f64, 0.0..30.0f64),
        ) {
            let ba = BoundingBox::new(a.0, a.1, a.0 + a.2, a.1 + a.3).unwrap();
            let bb = BoundingBox::new(b.0, b.1, b.0 + b.2, b.1 + b.3).unwrap();
            let ab = box_iou(&ba, &bb);
            prop_assert_eq!(ab, box_iou(&bb, &ba));
            prop_assert!((0.0..=1.0).contains(&ab));
            if ba.area() > 0.0 {
                prop_assert!((box_iou(&ba, &ba) - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn distance_rotation_invariant(
            angles in (0.0..6.3f64, 0.0..6.3f64, 0.0..6.3f64),
            n in (-1.0..1.0f64, -1.0..1.0f64, 0.1..1.0f64),
            d in -3.0..3.0f64,
            p in (-4.0..4.0f64, -4.0..4.0f64, -4.0..4.0f64),
        ) {
            let r = rotation(angles.0, angles.1, angles.2);
            let pl = Plane::new(Vec3::new(n.0, n.1, n.2), d).unwrap();
            let pt = Vec3::new(p.0, p.1, p.2);
            let moved = Plane::new(mat3_vec(&r, pl.normal), pl.offset).unwrap();
            let before = point_plane_distance(&pl, pt);
            let after = point_plane_distance(&moved, mat3_vec(&r, pt));
            prop_assert!((before - after).abs() < 1e-9);
        }
    }
}
