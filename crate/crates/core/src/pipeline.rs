//! Depth frame → annotation, the path driven by `planeseg annotate`.

use crate::dataset_io::Annotation;
use crate::error::Result;
use crate::geometry::{unproject, CameraIntrinsics, DepthImage};
use crate::ndt_ransac::{
    build_ndt, classify_cells, extract_planes, rasterize_with_sources, NdtRansacConfig,
};
use crate::scalar::Scalar;

pub fn annotate_depth<T: Scalar>(
    depth: &DepthImage,
    intr: &CameraIntrinsics<T>,
    cfg: &NdtRansacConfig<T>,
) -> Result<Annotation<T>> {
    cfg.validate()?;
    let cloud = unproject(depth, intr)?;
    let grid = classify_cells(build_ndt(&cloud, cfg)?, cfg);
    let planes = extract_planes(&grid, &cloud, cfg)?;
    let raster = rasterize_with_sources(&planes, &cloud, intr, cfg)?;
    Ok(Annotation::from_rasterization(&raster, &planes))
}
