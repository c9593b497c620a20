//! Posing, orthographic marginalization and rasterization of 3D Gaussians.

mod raster;

pub use raster::{rasterize, rasterize_backward, rasterize_with, RasterSettings, RasterStats};

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};

use crate::error::{Error, Result};
use crate::gmm::{rotation_from_quaternion, GaussianParams};
pub use crate::image::RenderedImage;

const POSE_TOLERANCE: f64 = 1e-9;

/// Rotation `W ∈ SO(3)` plus an in-plane translation `(tx, ty, 0)` in normalized units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    rotation: Matrix3<f64>,
    translation: Vector2<f64>,
}

impl Pose {
    /// Validates that `rotation` is orthonormal with determinant +1 (to 1e-9).
    pub fn new(rotation: Matrix3<f64>, translation: Vector2<f64>) -> Result<Self> {
        let ortho = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        let det = rotation.determinant();
        if !(ortho <= POSE_TOLERANCE) || !((det - 1.0).abs() <= POSE_TOLERANCE) {
            return Err(Error::InvalidArgument(format!(
                "pose rotation is not in SO(3): |WᵀW - I| = {ortho:e}, det = {det}"
            )));
        }
        if !translation.iter().all(|t| t.is_finite()) {
            return Err(Error::InvalidArgument("pose translation must be finite".into()));
        }
        Ok(Self { rotation, translation })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector2::zeros(),
        }
    }

    /// Pose from a scalar-first quaternion (normalized here).
    pub fn from_quaternion(q: &[f64; 4], translation: Vector2<f64>) -> Result<Self> {
        Self::new(rotation_from_quaternion(q)?, translation)
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector2<f64> {
        &self.translation
    }

    fn translation3(&self) -> Vector3<f64> {
        Vector3::new(self.translation.x, self.translation.y, 0.0)
    }
}

/// A Gaussian expressed in the image (beam) frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraSpaceGaussian {
    pub mean: Vector3<f64>,
    pub cov: Matrix3<f64>,
    pub amplitude: f64,
}

/// Normalized 2D Gaussian left after integrating along z.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplatGaussian2D {
    pub mean: Vector2<f64>,
    pub cov: Matrix2<f64>,
    pub amplitude: f64,
}

impl SplatGaussian2D {
    /// `A / (2π |Σ̃|^½) · exp(-½ dᵀ Σ̃⁻¹ d)` at `(x, y)`.
    pub fn density(&self, x: f64, y: f64) -> f64 {
        let det = self.cov.determinant();
        let d = Vector2::new(x - self.mean.x, y - self.mean.y);
        let inv = Matrix2::new(self.cov[(1, 1)], -self.cov[(0, 1)], -self.cov[(1, 0)], self.cov[(0, 0)]) / det;
        let q = d.dot(&(inv * d));
        self.amplitude * (-0.5 * q).exp() / (2.0 * std::f64::consts::PI * det.sqrt())
    }
}

/// `μ̇ = Wμ + t`, `Σ̇ = WΣWᵀ`.
pub fn view_transform(g: &GaussianParams, pose: &Pose) -> Result<CameraSpaceGaussian> {
    Ok(posed(&g.mean, &g.covariance()?, g.amplitude(), pose))
}

pub(crate) fn posed(mean: &Vector3<f64>, cov: &Matrix3<f64>, amplitude: f64, pose: &Pose) -> CameraSpaceGaussian {
    let w = &pose.rotation;
    CameraSpaceGaussian {
        mean: w * mean + pose.translation3(),
        cov: w * cov * w.transpose(),
        amplitude,
    }
}

/// Marginalizes along z by dropping the z rows/columns. The result stays
/// normalized: it integrates to 1 over the plane.
pub fn orthographic_project(cg: &CameraSpaceGaussian) -> Result<SplatGaussian2D> {
    let cov = cg.cov.fixed_view::<2, 2>(0, 0).into_owned();
    let det = cov.determinant();
    if !(cov[(0, 0)] > 0.0 && det > 0.0 && det.is_finite()) {
        return Err(Error::DegenerateSplat);
    }
    Ok(SplatGaussian2D {
        mean: Vector2::new(cg.mean.x, cg.mean.y),
        cov,
        amplitude: cg.amplitude,
    })
}
