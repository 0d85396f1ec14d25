//! Piece-wise plane segmentation toolkit for RGB-D frames.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the bottom of this file fix the common choices.

// `!(x > 0)` is deliberate: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assembly;
pub mod bench;
pub mod dataset_io;
pub mod error;
pub mod geometry;
pub mod linalg;
pub mod metrics;
pub mod ndt_ransac;
pub mod nms;
pub mod pipeline;
pub mod rfa;
pub mod scalar;
pub mod synthetic;

pub use error::{Error, Result};
pub use geometry::{
    BinaryMask, BoundingBox, CameraIntrinsics, DepthImage, Pixel, Plane, PointCloud,
};
pub use linalg::Vec3;
pub use metrics::{Interpolation, IouMode, MetricReport, SegLabelMap, StatsReport};
pub use ndt_ransac::{NdtRansacConfig, PlaneInstance};
pub use nms::{Detection, NmsConfig};
pub use pipeline::annotate_depth;
pub use rfa::{FeatureMap, RfaConfig, RfaWeights};
pub use scalar::Scalar;

pub type Vec3f = Vec3<f32>;
pub type Vec3d = Vec3<f64>;
pub type Plane32 = Plane<f32>;
pub type Plane64 = Plane<f64>;
pub type PointCloud32 = PointCloud<f32>;
pub type PointCloud64 = PointCloud<f64>;
pub type BoundingBox32 = BoundingBox<f32>;
pub type BoundingBox64 = BoundingBox<f64>;
pub type Intrinsics32 = CameraIntrinsics<f32>;
pub type Intrinsics64 = CameraIntrinsics<f64>;
pub type NdtRansacConfig32 = NdtRansacConfig<f32>;
pub type NdtRansacConfig64 = NdtRansacConfig<f64>;
pub type Detection32 = Detection<f32>;
pub type Detection64 = Detection<f64>;
pub type NmsConfig32 = NmsConfig<f32>;
pub type NmsConfig64 = NmsConfig<f64>;
pub type FeatureMap32 = FeatureMap<f32>;
pub type FeatureMap64 = FeatureMap<f64>;
pub type RfaWeights32 = RfaWeights<f32>;
pub type RfaWeights64 = RfaWeights<f64>;
