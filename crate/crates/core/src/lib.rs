//! Multi-sequence Gaussian splatting: appearance-aware scene training,
//! transient-mask refinement, TSDF meshing, and synthetic-data generation.
//!
//! All numeric code is generic over the scalar type via [`num::Real`]
//! (f32 or f64); the aliases below pin the two concrete instantiations.

pub mod appearance;
pub mod camera;
pub mod colmap;
pub mod config;
pub mod datagen;
pub mod dataset;
pub mod error;
pub mod img;
pub mod num;
pub mod losses;
pub mod mask_refine;
pub mod meshing;
pub mod metrics;
pub mod raster;
pub mod splat;
pub mod trainer;

pub use error::{Error, Result};
pub use num::Real;

/// f32 pipeline types (the CLI default).
pub type Splat32 = splat::Splat<f32>;
pub type CameraIntrinsics32 = camera::CameraIntrinsics<f32>;
pub type CameraPose32 = camera::CameraPose<f32>;
pub type RenderOutput32 = raster::RenderOutput<f32>;
pub type Dataset32 = dataset::MultiSequenceDataset<f32>;

/// f64 variants used by the oracle and gradient suites.
pub type Splat64 = splat::Splat<f64>;
pub type CameraIntrinsics64 = camera::CameraIntrinsics<f64>;
pub type CameraPose64 = camera::CameraPose<f64>;
pub type RenderOutput64 = raster::RenderOutput<f64>;
pub type Dataset64 = dataset::MultiSequenceDataset<f64>;
