//! Ground-truth plane extraction: NDT voxelization, planarity filtering and
//! RANSAC over planar cells, followed by rasterization into a label map.
//!
//! Hypotheses come from single planar cells (mean + normal). A cell supports a
//! hypothesis only when its mean lies close to the plane *and* its normal
//! agrees with the plane normal, so cells on curved surfaces do not vote for
//! each other beyond a small neighbourhood.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    fit_plane_lsq, point_plane_distance, BinaryMask, CameraIntrinsics, Plane, PointCloud,
};
use crate::linalg::{sym_eigen3, Mat3, Vec3};
use crate::metrics::SegLabelMap;
use crate::scalar::Scalar;

/// Upper bound on refit/re-score passes per extracted plane.
const MAX_REFINEMENTS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NdtRansacConfig<T> {
    /// Voxel edge length in metres.
    pub cell_size: T,
    pub min_points_per_cell: usize,
    /// Maximum `λ3 / λ2` for a planar cell.
    pub planarity_ratio: T,
    /// Hypotheses drawn per extracted plane.
    pub ransac_iters: usize,
    /// Maximum distance (m) from a cell mean or pixel to the plane.
    pub dist_thresh: T,
    /// Maximum angle (degrees) between cell normal and plane normal.
    pub angle_thresh: T,
    pub min_inlier_cells: usize,
    /// Minimum instance area as a fraction of the frame.
    pub min_mask_area: T,
    pub rng_seed: u64,
}

impl<T: Scalar> Default for NdtRansacConfig<T> {
    fn default() -> Self {
        Self {
            cell_size: T::lit(0.10),
            min_points_per_cell: 8,
            planarity_ratio: T::lit(0.05),
            ransac_iters: 200,
            dist_thresh: T::lit(0.02),
            angle_thresh: T::lit(15.0),
            min_inlier_cells: 6,
            min_mask_area: T::lit(0.005),
            rng_seed: 0,
        }
    }
}

impl<T: Scalar> NdtRansacConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("cell_size", self.cell_size),
            ("dist_thresh", self.dist_thresh),
            ("angle_thresh", self.angle_thresh),
            ("min_mask_area", self.min_mask_area),
        ];
        for (name, v) in positive {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.planarity_ratio > T::zero() && self.planarity_ratio < T::one()) {
            return Err(Error::Config(format!(
                "planarity_ratio must lie in (0, 1), got {}",
                self.planarity_ratio
            )));
        }
        if self.min_mask_area >= T::one() {
            return Err(Error::Config(
                "min_mask_area must be a fraction below 1".into(),
            ));
        }
        if self.angle_thresh > T::lit(90.0) {
            return Err(Error::Config(
                "angle_thresh must not exceed 90 degrees".into(),
            ));
        }
        for (name, v) in [
            ("min_points_per_cell", self.min_points_per_cell),
            ("ransac_iters", self.ransac_iters),
            ("min_inlier_cells", self.min_inlier_cells),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        Ok(())
    }
}

/// Integer voxel coordinate, `floor(p / cell_size)` per axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellIndex(pub [i64; 3]);

impl CellIndex {
    pub fn of<T: Scalar>(p: Vec3<T>, cell_size: T) -> Self {
        let f = |v: T| (v / cell_size).floor().to_i64().unwrap_or(i64::MAX);
        CellIndex([f(p.x), f(p.y), f(p.z)])
    }
}

/// Gaussian summary of the points falling in one voxel.
#[derive(Debug, Clone, PartialEq)]
pub struct NdtCell<T> {
    pub mean: Vec3<T>,
    /// Population covariance (divided by `count`).
    pub covariance: Mat3<T>,
    pub count: usize,
    /// `λ1 ≥ λ2 ≥ λ3 ≥ 0`; only present when `count ≥ min_points_per_cell`.
    pub eigenvalues: Option<[T; 3]>,
    /// Unit eigenvector of `λ3`.
    pub normal: Option<Vec3<T>>,
    pub planar: bool,
    /// Indices into the source cloud.
    pub members: Vec<usize>,
}

impl<T: Scalar> NdtCell<T> {
    /// Distance of the mean and normal angle both within thresholds.
    pub fn is_consistent(&self, plane: &Plane<T>, dist_thresh: T, cos_thresh: T) -> bool {
        match self.normal {
            Some(n) => {
                point_plane_distance(plane, self.mean) <= dist_thresh
                    && n.dot(plane.normal).abs() >= cos_thresh
            }
            None => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid<T> {
    pub cell_size: T,
    pub cells: BTreeMap<CellIndex, NdtCell<T>>,
}

impl<T: Scalar> VoxelGrid<T> {
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn planar_count(&self) -> usize {
        self.cells.values().filter(|c| c.planar).count()
    }
}

/// One extracted plane with the cells and pixels it claimed.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneInstance<T> {
    pub plane: Plane<T>,
    pub mask: BinaryMask,
    pub inlier_cells: Vec<CellIndex>,
    pub area_px: usize,
}

/// Voxelizes `cloud` and computes per-cell mean, covariance and eigen-structure.
pub fn build_ndt<T: Scalar>(
    cloud: &PointCloud<T>,
    cfg: &NdtRansacConfig<T>,
) -> Result<VoxelGrid<T>> {
    cfg.validate()?;
    let mut buckets: BTreeMap<CellIndex, Vec<usize>> = BTreeMap::new();
    for (i, p) in cloud.points.iter().enumerate() {
        if !p.is_finite() {
            continue;
        }
        buckets
            .entry(CellIndex::of(*p, cfg.cell_size))
            .or_default()
            .push(i);
    }

    let cells = buckets
        .into_iter()
        .map(|(idx, members)| {
            let count = members.len();
            let n = T::from_usize_lossy(count);
            let mean = members
                .iter()
                .fold(Vec3::zeros(), |acc, &i| acc + cloud.points[i])
                / n;
            let mut covariance = [[T::zero(); 3]; 3];
            for &i in &members {
                let o = (cloud.points[i] - mean).outer();
                for r in 0..3 {
                    for c in 0..3 {
                        covariance[r][c] += o[r][c];
                    }
                }
            }
            for row in covariance.iter_mut() {
                for v in row.iter_mut() {
                    *v /= n;
                }
            }
            let (eigenvalues, normal) = if count >= cfg.min_points_per_cell {
                let e = sym_eigen3(&covariance);
                (Some(e.values.map(|v| v.max(T::zero()))), Some(e.vectors[2]))
            } else {
                (None, None)
            };
            let cell = NdtCell {
                mean,
                covariance,
                count,
                eigenvalues,
                normal,
                planar: false,
                members,
            };
            (idx, cell)
        })
        .collect();

    Ok(VoxelGrid {
        cell_size: cfg.cell_size,
        cells,
    })
}

/// Marks cells planar when `count ≥ min_points_per_cell`, `λ2 > 0` and `λ3/λ2 ≤ planarity_ratio`.
///
/// `λ2` counts as zero when it is below `64·ε·λ1`, which rejects collinear cells.
pub fn classify_cells<T: Scalar>(mut grid: VoxelGrid<T>, cfg: &NdtRansacConfig<T>) -> VoxelGrid<T> {
    let floor = T::epsilon() * T::lit(64.0);
    for cell in grid.cells.values_mut() {
        cell.planar = match cell.eigenvalues {
            Some([l1, l2, l3]) if cell.count >= cfg.min_points_per_cell => {
                l2 > T::zero() && l2 > l1 * floor && l3 / l2 <= cfg.planarity_ratio
            }
            _ => false,
        };
    }
    grid
}

/// Greedy sequential RANSAC over planar cells.
///
/// Each round draws `ransac_iters` single-cell hypotheses from the cells not
/// yet consumed. Starting from the largest consensus, a hypothesis is refitted
/// to the member points of its consensus cells and re-scored until the inlier
/// set is stable. The first one backed by `min_inlier_cells` well-conditioned
/// cells whose normals agree pairwise within `angle_thresh` is accepted and
/// all of its consensus cells are consumed. Rounds stop when no hypothesis is
/// accepted.
pub fn extract_planes<T: Scalar>(
    grid: &VoxelGrid<T>,
    cloud: &PointCloud<T>,
    cfg: &NdtRansacConfig<T>,
) -> Result<Vec<PlaneInstance<T>>> {
    cfg.validate()?;
    let cos_thresh = cfg.angle_thresh.to_radians().cos();
    let planar: Vec<(&CellIndex, &NdtCell<T>)> =
        grid.cells.iter().filter(|(_, c)| c.planar).collect();
    let mut remaining: Vec<usize> = (0..planar.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut out = Vec::new();

    let consensus = |remaining: &[usize], plane: &Plane<T>| -> Vec<usize> {
        remaining
            .iter()
            .copied()
            .filter(|&i| {
                planar[i]
                    .1
                    .is_consistent(plane, cfg.dist_thresh, cos_thresh)
            })
            .collect()
    };

    let refine = |mut plane: Plane<T>, mut inliers: Vec<usize>, remaining: &[usize]| {
        for _ in 0..MAX_REFINEMENTS {
            let pts: Vec<Vec3<T>> = inliers
                .iter()
                .flat_map(|&i| planar[i].1.members.iter().map(|&m| cloud.points[m]))
                .collect();
            let Ok(refined) = fit_plane_lsq(&pts) else {
                break;
            };
            let next = consensus(remaining, &refined);
            if next.len() < cfg.min_inlier_cells {
                break;
            }
            let stable = next == inliers;
            plane = refined;
            inliers = next;
            if stable {
                break;
            }
        }
        (plane, inliers)
    };

    // A cell is well-conditioned when its minor in-plane variance λ2 is at
    // least planarity_ratio times that of a fully covered cell face (s²/12).
    // Slivers where a surface clips a voxel corner, or a single pixel column
    // whose points spread only along the viewing rays, have unreliable normals.
    let min_spread = cfg.planarity_ratio * cfg.cell_size * cfg.cell_size / T::lit(12.0);
    let well_conditioned = |i: usize| -> Option<Vec3<T>> {
        let c = planar[i].1;
        let [_, l2, _] = c.eigenvalues?;
        (l2 >= min_spread).then_some(c.normal?)
    };

    // An accepted plane needs min_inlier_cells well-conditioned cells whose
    // normals agree pairwise within the angle threshold. Cells on a curved
    // patch each pass the test against the hypothesis but not against one
    // another.
    let supported = |inliers: &[usize]| -> bool {
        let normals: Vec<Vec3<T>> = inliers
            .iter()
            .filter_map(|&i| well_conditioned(i))
            .collect();
        normals.len() >= cfg.min_inlier_cells
            && normals.iter().enumerate().all(|(a, na)| {
                normals[a + 1..]
                    .iter()
                    .all(|nb| na.dot(*nb).abs() >= cos_thresh)
            })
    };

    let (width, height) = cloud.frame_size.unwrap_or_else(|| {
        cloud
            .provenance
            .iter()
            .fold((0, 0), |(w, h), px| (w.max(px.col + 1), h.max(px.row + 1)))
    });

    while !remaining.is_empty() && remaining.len() >= cfg.min_inlier_cells {
        let mut hypotheses: Vec<(Plane<T>, Vec<usize>)> = Vec::new();
        for _ in 0..cfg.ransac_iters {
            let cell = planar[remaining[rng.random_range(0..remaining.len())]].1;
            let Some(normal) = cell.normal else { continue };
            let Ok(hyp) = Plane::from_point_normal(cell.mean, normal) else {
                continue;
            };
            let inliers = consensus(&remaining, &hyp);
            if inliers.len() >= cfg.min_inlier_cells
                && !hypotheses.iter().any(|(_, h)| *h == inliers)
            {
                hypotheses.push((hyp, inliers));
            }
        }
        // stable: equal counts keep sampling order
        hypotheses.sort_by_key(|h| std::cmp::Reverse(h.1.len()));

        let mut accepted = None;
        for (hyp, seed_inliers) in hypotheses {
            let (plane, inliers) = refine(hyp, seed_inliers, &remaining);
            if supported(&inliers) {
                accepted = Some((plane, inliers));
                break;
            }
        }
        let Some((plane, inliers)) = accepted else {
            break;
        };

        let mut mask = BinaryMask::new(width, height);
        if cloud.has_provenance() {
            for &i in &inliers {
                for &m in &planar[i].1.members {
                    let px = cloud.provenance[m];
                    if px.col < width && px.row < height {
                        mask.set(px.row, px.col, true);
                    }
                }
            }
        }
        let area_px = mask.count();
        out.push(PlaneInstance {
            plane,
            mask,
            inlier_cells: inliers.iter().map(|&i| *planar[i].0).collect(),
            area_px,
        });
        remaining.retain(|i| inliers.binary_search(i).is_err());
    }
    Ok(out)
}

/// Checks the per-cell consensus predicates of an extracted instance.
pub fn inliers_consistent<T: Scalar>(
    grid: &VoxelGrid<T>,
    instance: &PlaneInstance<T>,
    cfg: &NdtRansacConfig<T>,
) -> bool {
    let cos_thresh = cfg.angle_thresh.to_radians().cos();
    instance.inlier_cells.iter().all(|idx| {
        grid.cells
            .get(idx)
            .is_some_and(|c| c.is_consistent(&instance.plane, cfg.dist_thresh, cos_thresh))
    })
}

/// Label map plus, for each label id `i ≥ 1`, the index of the source instance at `sources[i - 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Rasterization {
    pub labels: SegLabelMap,
    pub sources: Vec<usize>,
}

/// Turns planes into a per-pixel instance labelling.
///
/// Every valid pixel takes the nearest plane within `dist_thresh`; each
/// plane's pixels are split into 4-connected components; components smaller
/// than `min_mask_area` of the frame are dropped; survivors get ids `1..` in
/// descending area order (ties: first pixel in raster order).
pub fn rasterize_instances<T: Scalar>(
    instances: &[PlaneInstance<T>],
    cloud: &PointCloud<T>,
    intr: &CameraIntrinsics<T>,
    cfg: &NdtRansacConfig<T>,
) -> Result<SegLabelMap> {
    rasterize_with_sources(instances, cloud, intr, cfg).map(|r| r.labels)
}

pub fn rasterize_with_sources<T: Scalar>(
    instances: &[PlaneInstance<T>],
    cloud: &PointCloud<T>,
    intr: &CameraIntrinsics<T>,
    cfg: &NdtRansacConfig<T>,
) -> Result<Rasterization> {
    cfg.validate()?;
    if !cloud.has_provenance() {
        return Err(Error::Config(format!(
            "cloud has {} points but {} provenance entries",
            cloud.points.len(),
            cloud.provenance.len()
        )));
    }
    let (w, h) = (intr.width as usize, intr.height as usize);
    let mut owner: Vec<Option<usize>> = vec![None; w * h];
    for (p, px) in cloud.points.iter().zip(&cloud.provenance) {
        if px.col as usize >= w || px.row as usize >= h {
            return Err(Error::Config(format!(
                "provenance pixel ({}, {}) outside {}x{} frame",
                px.row, px.col, w, h
            )));
        }
        let mut best: Option<(usize, T)> = None;
        for (k, inst) in instances.iter().enumerate() {
            let d = point_plane_distance(&inst.plane, *p);
            if d <= cfg.dist_thresh && best.is_none_or(|(_, bd)| d < bd) {
                best = Some((k, d));
            }
        }
        owner[px.row as usize * w + px.col as usize] = best.map(|(k, _)| k);
    }

    // (area, first pixel, source instance, pixels)
    let mut components: Vec<(usize, usize, usize, Vec<usize>)> = Vec::new();
    let mut seen = vec![false; w * h];
    let mut stack = Vec::new();
    for start in 0..w * h {
        let Some(src) = owner[start] else { continue };
        if seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let mut pixels = Vec::new();
        while let Some(i) = stack.pop() {
            pixels.push(i);
            let (r, c) = (i / w, i % w);
            let mut visit = |j: usize| {
                if !seen[j] && owner[j] == Some(src) {
                    seen[j] = true;
                    stack.push(j);
                }
            };
            if c > 0 {
                visit(i - 1);
            }
            if c + 1 < w {
                visit(i + 1);
            }
            if r > 0 {
                visit(i - w);
            }
            if r + 1 < h {
                visit(i + w);
            }
        }
        components.push((pixels.len(), start, src, pixels));
    }

    let min_area = cfg.min_mask_area * T::from_usize_lossy(w * h);
    components.retain(|c| T::from_usize_lossy(c.0) >= min_area);
    components.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));

    let mut labels = SegLabelMap::zeros(intr.width, intr.height);
    let mut sources = Vec::with_capacity(components.len());
    for (id, (_, _, src, pixels)) in components.into_iter().enumerate() {
        let id = u32::try_from(id + 1).expect("label id fits in u32");
        for i in pixels {
            labels.labels[i] = id;
        }
        sources.push(src);
    }
    Ok(Rasterization { labels, sources })
}
