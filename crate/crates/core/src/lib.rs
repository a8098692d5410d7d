//! Learned densification of sparse structure-from-motion point clouds into
//! dense arrays of 3D Gaussian ellipsoids.
//!
//! The pipeline: [`synth`] fabricates scenes (or [`io`] ingests real point
//! clouds), [`spatial`] pairs each sparse point with its nearest
//! ground-truth Gaussians, [`train`] fits the [`net`] encoder/decoder, and
//! [`render`] splats the predicted primitives for PSNR/SSIM evaluation.

pub mod error;
pub mod eval;
pub mod io;
pub mod net;
pub mod render;
pub mod spatial;
pub mod synth;
pub mod train;
pub mod types;

pub use error::{Error, Result};
pub use net::{Architecture, NetworkWeights, DENSIFY_FACTOR};
pub use spatial::{build_training_set, KdIndex, TrainingSample};
pub use types::{
    assemble_covariance, gaussian_density, quaternion_normalize, CameraView, ColoredPoint, GaussianPrimitive,
    ImageBuffer, Intrinsics, Mat3, Pose, Quat, Vec3,
};
