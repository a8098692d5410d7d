//! Points, Gaussian primitives, cameras and images, plus the covariance
//! algebra shared by the renderer, the exporter and the network head.
//!
//! Quaternions are scalar-first `(w, x, y, z)` and rotate right-handed.
//! Covariances are never stored; they are rebuilt from scale and rotation
//! on demand so they stay positive definite.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Tolerance on `|q| - 1` for a quaternion to count as a unit rotation.
pub const UNIT_QUAT_TOLERANCE: f64 = 1e-6;

/// Number of scalars describing one primitive: mean 3, scale 3, rotation 4,
/// opacity 1, color 3.
pub const PRIMITIVE_DIM: usize = 14;

/// Scalar-first quaternion `(w, x, y, z)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quat(pub [f64; 4]);

impl Quat {
    pub const IDENTITY: Quat = Quat([1.0, 0.0, 0.0, 0.0]);

    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Quat([w, x, y, z])
    }

    pub fn w(&self) -> f64 {
        self.0[0]
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &Quat) -> f64 {
        self.0.iter().zip(other.0.iter()).map(|(a, b)| a * b).sum()
    }

    pub fn is_unit(&self) -> bool {
        (self.norm() - 1.0).abs() <= UNIT_QUAT_TOLERANCE
    }

    /// Hamilton product `self * rhs`.
    pub fn mul(&self, rhs: &Quat) -> Quat {
        let [w1, x1, y1, z1] = self.0;
        let [w2, x2, y2, z2] = rhs.0;
        Quat([
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        ])
    }

    /// Rotation of `angle` radians about `axis` (need not be normalized).
    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Quat {
        let axis = axis.normalize();
        let (s, c) = (0.5 * angle).sin_cos();
        Quat([c, axis.x * s, axis.y * s, axis.z * s])
    }

    /// Rotation matrix of a unit quaternion. The input is assumed normalized.
    pub fn to_matrix(&self) -> Mat3 {
        let [w, x, y, z] = self.0;
        Mat3::new(
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        )
    }
}

/// Returns `q / |q|`.
pub fn quaternion_normalize(q: &Quat) -> Result<Quat> {
    let n = q.norm();
    if n == 0.0 || !n.is_finite() {
        return Err(Error::ZeroQuaternion);
    }
    // Already unit to machine precision: dividing again would only shift bits.
    if (n - 1.0).abs() <= 4.0 * f64::EPSILON {
        return Ok(*q);
    }
    Ok(Quat(q.0.map(|c| c / n)))
}

/// `Σ = R · S · Sᵀ · Rᵀ` with `S = diag(scale)`.
pub fn assemble_covariance(scale: &Vec3, rotation: &Quat) -> Result<Mat3> {
    if !rotation.is_unit() {
        return Err(Error::InvalidRotation { norm: rotation.norm() });
    }
    if !scale.iter().all(|s| *s > 0.0 && s.is_finite()) {
        return Err(Error::InvalidScale([scale.x, scale.y, scale.z]));
    }
    let r = rotation.to_matrix();
    let s2 = Mat3::from_diagonal(&scale.component_mul(scale));
    let sigma = r * s2 * r.transpose();
    // Symmetrize away the rounding asymmetry of the triple product.
    Ok((sigma + sigma.transpose()) * 0.5)
}

/// One entry of a sparse or dense colored point cloud.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColoredPoint {
    pub position: Vec3,
    /// RGB in `[0, 1]`.
    pub color: Vec3,
}

impl ColoredPoint {
    pub fn new(position: Vec3, color: Vec3) -> Self {
        ColoredPoint { position, color }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.position.iter().all(|c| c.is_finite()) {
            return Err(Error::NonFinite("point position".into()));
        }
        if !self.color.iter().all(|c| (0.0..=1.0).contains(c)) {
            return Err(Error::Schema(format!("color {:?} outside [0,1]", self.color)));
        }
        Ok(())
    }
}

/// A 3D Gaussian ellipsoid with linear (not log/logit) attributes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianPrimitive {
    pub mean: Vec3,
    pub scale: Vec3,
    pub rotation: Quat,
    pub opacity: f64,
    pub color: Vec3,
}

impl GaussianPrimitive {
    pub fn validate(&self) -> Result<()> {
        if !self.mean.iter().all(|c| c.is_finite()) {
            return Err(Error::NonFinite("primitive mean".into()));
        }
        if !self.rotation.is_unit() {
            return Err(Error::InvalidRotation { norm: self.rotation.norm() });
        }
        if !self.scale.iter().all(|s| *s > 0.0 && s.is_finite()) {
            return Err(Error::InvalidScale([self.scale.x, self.scale.y, self.scale.z]));
        }
        if !(0.0..=1.0).contains(&self.opacity) {
            return Err(Error::Schema(format!("opacity {} outside [0,1]", self.opacity)));
        }
        if !self.color.iter().all(|c| (0.0..=1.0).contains(c)) {
            return Err(Error::Schema(format!("color {:?} outside [0,1]", self.color)));
        }
        Ok(())
    }

    pub fn covariance(&self) -> Result<Mat3> {
        assemble_covariance(&self.scale, &self.rotation)
    }

    /// The 14 attributes in storage order: mean, scale, rotation, opacity, color.
    pub fn to_array(&self) -> [f64; PRIMITIVE_DIM] {
        let q = self.rotation.0;
        [
            self.mean.x,
            self.mean.y,
            self.mean.z,
            self.scale.x,
            self.scale.y,
            self.scale.z,
            q[0],
            q[1],
            q[2],
            q[3],
            self.opacity,
            self.color.x,
            self.color.y,
            self.color.z,
        ]
    }
}

/// Unnormalized density `exp(-½ (x-μ)ᵀ Σ⁻¹ (x-μ))`.
pub fn gaussian_density(primitive: &GaussianPrimitive, x: &Vec3) -> Result<f64> {
    let sigma = primitive.covariance()?;
    let chol = sigma.cholesky().ok_or(Error::SingularCovariance)?;
    let d = x - primitive.mean;
    let m = d.dot(&chol.solve(&d));
    if !m.is_finite() {
        return Err(Error::SingularCovariance);
    }
    Ok((-0.5 * m).exp())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

/// Rigid world-to-camera transform: `p_cam = rotation · p_world + translation`.
///
/// Camera space is x right, y down, z forward.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl Pose {
    pub fn transform(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn camera_center(&self) -> Vec3 {
        -(self.rotation.transpose() * self.translation)
    }

    /// Camera at `eye` looking toward `target`, with `up` giving the world
    /// up direction (image y points opposite to it).
    pub fn look_at(eye: Vec3, target: Vec3, up: Vec3) -> Pose {
        let forward = (target - eye).normalize();
        let right = forward.cross(&up).normalize();
        let down = forward.cross(&right);
        let rotation = Mat3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        Pose { rotation, translation: -(rotation * eye) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CameraView {
    pub intrinsics: Intrinsics,
    pub pose: Pose,
    pub width: usize,
    pub height: usize,
    pub image: Option<ImageBuffer>,
}

impl CameraView {
    pub fn new(intrinsics: Intrinsics, pose: Pose, width: usize, height: usize) -> Result<Self> {
        let view = CameraView { intrinsics, pose, width, height, image: None };
        view.validate()?;
        Ok(view)
    }

    pub fn validate(&self) -> Result<()> {
        let k = &self.intrinsics;
        if !(k.fx > 0.0 && k.fy > 0.0) {
            return Err(Error::InvalidCamera(format!("focal lengths must be positive: {} {}", k.fx, k.fy)));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidCamera("resolution must be positive".into()));
        }
        let r = &self.pose.rotation;
        let err = (r * r.transpose() - Mat3::identity()).abs().max();
        if err > 1e-6 {
            return Err(Error::InvalidCamera(format!("pose rotation not orthonormal (error {err:e})")));
        }
        if let Some(img) = &self.image {
            if img.width != self.width || img.height != self.height {
                return Err(Error::InvalidCamera("reference image size differs from resolution".into()));
            }
        }
        Ok(())
    }

    /// Pinhole camera with the given horizontal field of view and the
    /// principal point at the image center.
    pub fn with_fov(pose: Pose, width: usize, height: usize, fov_x_deg: f64) -> Result<Self> {
        let fx = 0.5 * width as f64 / (0.5 * fov_x_deg.to_radians()).tan();
        let intrinsics = Intrinsics { fx, fy: fx, cx: 0.5 * width as f64, cy: 0.5 * height as f64 };
        CameraView::new(intrinsics, pose, width, height)
    }
}

/// Row-major RGB image with channels in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[f64; 3]>,
}

impl ImageBuffer {
    pub fn black(width: usize, height: usize) -> Self {
        ImageBuffer { width, height, pixels: vec![[0.0; 3]; width * height] }
    }

    pub fn from_pixels(width: usize, height: usize, pixels: Vec<[f64; 3]>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::Shape(format!(
                "{} pixels for a {width}x{height} image",
                pixels.len()
            )));
        }
        if pixels.iter().flatten().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::Shape("pixel channel outside [0,1]".into()));
        }
        Ok(ImageBuffer { width, height, pixels })
    }

    pub fn get(&self, x: usize, y: usize) -> [f64; 3] {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, rgb: [f64; 3]) {
        self.pixels[y * self.width + x] = rgb;
    }
}
