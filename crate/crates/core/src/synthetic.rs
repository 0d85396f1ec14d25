//! Analytic test scenes and random detection sets.
//!
//! Camera frame: x right, y down, z forward.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::geometry::{BoundingBox, CameraIntrinsics, DepthImage, Plane};
use crate::linalg::{mat3_identity, mat3_vec, Mat3, Vec3};
use crate::metrics::SegLabelMap;
use crate::nms::Detection;
use crate::scalar::Scalar;

/// 640×480, f = 525, principal point at the image centre.
pub fn default_intrinsics() -> CameraIntrinsics<f64> {
    CameraIntrinsics {
        fx: 525.0,
        fy: 525.0,
        cx: 319.5,
        cy: 239.5,
        width: 640,
        height: 480,
    }
}

/// A rendered depth frame together with its analytic labelling.
#[derive(Debug, Clone)]
pub struct SyntheticFrame {
    pub depth: DepthImage,
    pub intrinsics: CameraIntrinsics<f64>,
    /// Label `i + 1` marks pixels whose ray first hits `planes[i]`; 0 is empty.
    pub gt_labels: SegLabelMap,
    pub planes: Vec<Plane<f64>>,
}

/// Corner of a room seen from inside: back wall, floor and right wall.
#[derive(Debug, Clone, Copy)]
pub struct BoxRoom {
    pub back_z: f64,
    pub floor_y: f64,
    pub side_x: f64,
    /// Rotation applied to the whole room about the camera centre.
    pub rotation: Mat3<f64>,
    /// Standard deviation of depth noise, in millimetres.
    pub noise_mm: f64,
}

impl Default for BoxRoom {
    fn default() -> Self {
        Self {
            back_z: 3.0,
            floor_y: 1.0,
            side_x: 1.2,
            rotation: mat3_identity(),
            noise_mm: 1.0,
        }
    }
}

impl BoxRoom {
    /// The three bounding planes in camera coordinates, normals pointing out of the room.
    pub fn planes(&self) -> Vec<Plane<f64>> {
        [
            (Vec3::new(0.0, 0.0, 1.0), self.back_z),
            (Vec3::new(0.0, 1.0, 0.0), self.floor_y),
            (Vec3::new(1.0, 0.0, 0.0), self.side_x),
        ]
        .into_iter()
        .map(|(n, d)| Plane::new(mat3_vec(&self.rotation, n), d).expect("unit normal"))
        .collect()
    }

    pub fn render(&self, intr: &CameraIntrinsics<f64>, seed: u64) -> SyntheticFrame {
        // The room is convex and contains the camera, so each ray leaves
        // through the plane with the smallest positive hit distance.
        let planes = self.planes();
        render_with(intr, seed, self.noise_mm, &planes, |ray| {
            planes
                .iter()
                .enumerate()
                .filter_map(|(i, p)| {
                    let denom = p.normal.dot(ray);
                    (denom > 1e-12).then(|| (i, p.offset / denom))
                })
                .min_by(|a, b| a.1.total_cmp(&b.1))
        })
    }
}

/// A single sphere in front of the camera with nothing behind it.
#[derive(Debug, Clone, Copy)]
pub struct SphereScene {
    pub center: Vec3<f64>,
    pub radius: f64,
    pub noise_mm: f64,
}

impl Default for SphereScene {
    fn default() -> Self {
        Self {
            center: Vec3::new(0.0, 0.0, 2.0),
            radius: 0.5,
            noise_mm: 1.0,
        }
    }
}

impl SphereScene {
    pub fn render(&self, intr: &CameraIntrinsics<f64>, seed: u64) -> SyntheticFrame {
        let (c, r) = (self.center, self.radius);
        render_with(intr, seed, self.noise_mm, &[], |ray| {
            // |t·ray − c|² = r², nearest root
            let a = ray.dot(ray);
            let b = -2.0 * ray.dot(c);
            let cc = c.dot(c) - r * r;
            let disc = b * b - 4.0 * a * cc;
            if disc < 0.0 {
                return None;
            }
            let t = (-b - disc.sqrt()) / (2.0 * a);
            (t > 0.0).then_some((0, t))
        })
    }
}

/// Rays have z = 1, so the hit parameter is the depth in metres.
fn render_with(
    intr: &CameraIntrinsics<f64>,
    seed: u64,
    noise_mm: f64,
    planes: &[Plane<f64>],
    hit: impl Fn(Vec3<f64>) -> Option<(usize, f64)>,
) -> SyntheticFrame {
    let (w, h) = (intr.width, intr.height);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, noise_mm.max(0.0)).expect("finite noise");
    let mut depth = vec![0u16; (w * h) as usize];
    let mut labels = vec![0u32; (w * h) as usize];
    for row in 0..h {
        for col in 0..w {
            let ray = Vec3::new(
                (col as f64 - intr.cx) / intr.fx,
                (row as f64 - intr.cy) / intr.fy,
                1.0,
            );
            let Some((id, z)) = hit(ray) else { continue };
            let mm = (z * 1000.0 + noise.sample(&mut rng)).round();
            if mm < 1.0 || mm > u16::MAX as f64 {
                continue;
            }
            let i = (row * w + col) as usize;
            depth[i] = mm as u16;
            labels[i] = id as u32 + 1;
        }
    }
    SyntheticFrame {
        depth: DepthImage {
            width: w,
            height: h,
            values: depth,
        },
        intrinsics: *intr,
        gt_labels: SegLabelMap {
            width: w,
            height: h,
            labels,
        },
        planes: planes.to_vec(),
    }
}

/// Parameters of [`random_detections`].
#[derive(Debug, Clone, Copy)]
pub struct DetectionSpec {
    pub n: usize,
    pub k: usize,
    pub classes: usize,
    pub frame: f64,
}

/// Clustered boxes so that IoUs spread across the whole `[0, 1]` range, with
/// coefficient vectors correlated within a cluster.
pub fn random_detections<T: Scalar, R: Rng + ?Sized>(
    rng: &mut R,
    spec: DetectionSpec,
) -> Vec<Detection<T>> {
    let clusters = (spec.n / 5).max(1);
    let std = Normal::new(0.0, 1.0).expect("unit normal");
    let centres: Vec<([f64; 4], Vec<f64>)> = (0..clusters)
        .map(|_| {
            let w = rng.random_range(20.0..spec.frame * 0.4);
            let h = rng.random_range(20.0..spec.frame * 0.4);
            let x = rng.random_range(0.0..spec.frame - w);
            let y = rng.random_range(0.0..spec.frame - h);
            let base = (0..spec.k).map(|_| std.sample(rng)).collect();
            ([x, y, w, h], base)
        })
        .collect();
    (0..spec.n)
        .map(|_| {
            let ([x, y, w, h], base) = &centres[rng.random_range(0..clusters)];
            let jitter = rng.random_range(0.0..0.4);
            let dx = rng.random_range(-jitter..=jitter) * w;
            let dy = rng.random_range(-jitter..=jitter) * h;
            let sw = w * rng.random_range(0.7..1.3);
            let sh = h * rng.random_range(0.7..1.3);
            let bbox = BoundingBox {
                x_min: T::lit(x + dx),
                y_min: T::lit(y + dy),
                x_max: T::lit(x + dx + sw),
                y_max: T::lit(y + dy + sh),
            };
            let spread = rng.random_range(0.0..1.5);
            let mut coeffs: Vec<T> = base
                .iter()
                .map(|b| T::lit(b + spread * std.sample(rng)))
                .collect();
            if coeffs.iter().all(|c| *c == T::zero()) {
                coeffs[0] = T::one();
            }
            let class_id = rng.random_range(0..spec.classes.max(1));
            Detection::new(bbox, T::lit(rng.random_range(0.05..1.0)), class_id, coeffs)
        })
        .collect()
}
