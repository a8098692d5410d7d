//! File formats: PLY point clouds, COLMAP text points, 3DGS-layout Gaussian
//! arrays, network checkpoints, PPM images and camera rigs.

pub mod cameras;
pub mod checkpoint;
pub mod gaussians;
pub mod image;
pub mod ply;
pub mod points;

pub use cameras::{read_cameras, write_cameras};
pub use checkpoint::{load_weights, save_weights, CheckpointManifest};
pub use gaussians::{read_gaussians_3dgs_ply, write_gaussians_3dgs_ply};
pub use image::{read_ppm, write_ppm};
pub use ply::{PlyFormat, PlyHeader};
pub use points::{read_point_cloud, write_point_cloud, PointFormat};
