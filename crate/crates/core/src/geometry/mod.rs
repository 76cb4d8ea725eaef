//! Camera models and multi-view geometry.
//!
//! World coordinates are meters, image coordinates are pixels. A camera is a
//! 3×4 projection matrix plus a two-coefficient radial distortion model. All
//! functions here are pure and may be called from any thread.
//!
//! Unless stated otherwise, pixel arguments are *distortion-corrected* (ideal
//! pinhole) coordinates. Use [`CameraModel::correct_distortion`] on raw
//! detector output before handing it to [`triangulate`] or
//! [`CameraModel::pixel_ray`].

mod calib_file;
mod camera;
mod distortion;
mod multiview;

pub use calib_file::{read_calibration, write_calibration, CalibrationError};
pub use camera::{CameraModel, HomogeneousPoint2, HomogeneousPoint3, Projection};
pub use distortion::RadialDistortion;
pub use multiview::{
    body_axis, dlt_calibrate, normalize_projection, triangulate, BodyAxis, BodyAxisView,
    Correspondence, Triangulation,
};

use nalgebra::{DMatrix, DVector, Vector3, Vector4};
use thiserror::Error;

/// A pixel location (u, v).
pub type Pixel = nalgebra::Vector2<f64>;

/// Errors from geometric computations.
#[derive(Error, Debug, Clone, PartialEq)]
pub enum GeometryError {
    #[error("point at infinity (homogeneous scale is zero)")]
    PointAtInfinity,
    #[error("point is behind the camera")]
    BehindCamera,
    #[error("distortion inversion did not converge")]
    NoConvergence,
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(&'static str),
    #[error("insufficient points: need at least {needed}, got {got}")]
    InsufficientPoints { needed: usize, got: usize },
    #[error("degenerate point configuration (coplanar or collinear)")]
    DegenerateConfiguration,
    #[error("projection matrix does not have rank 3 with a finite center")]
    InvalidProjection,
}

/// A 3D ray with unit direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray3 {
    pub origin: Vector3<f64>,
    pub direction: Vector3<f64>,
}

impl Ray3 {
    /// Build a ray, normalizing `direction`.
    pub fn new(origin: Vector3<f64>, direction: Vector3<f64>) -> Result<Self, GeometryError> {
        let n = direction.norm();
        if !n.is_finite() || n < 1e-300 {
            return Err(GeometryError::DegenerateGeometry("zero ray direction"));
        }
        Ok(Self {
            origin,
            direction: direction / n,
        })
    }

    pub fn point_at(&self, s: f64) -> Vector3<f64> {
        self.origin + self.direction * s
    }

    /// Parameter of the point on the (infinite) line nearest to `p`.
    pub fn closest_param(&self, p: &Vector3<f64>) -> f64 {
        (p - self.origin).dot(&self.direction)
    }

    pub fn closest_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.point_at(self.closest_param(p))
    }

    /// Euclidean distance from `p` to the line.
    pub fn distance_to(&self, p: &Vector3<f64>) -> f64 {
        (p - self.closest_point(p)).norm()
    }
}

/// A plane `π·(X, 1) = 0` with unit normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plane3 {
    coefficients: Vector4<f64>,
}

impl Plane3 {
    pub fn from_coefficients(c: Vector4<f64>) -> Result<Self, GeometryError> {
        let n = c.fixed_rows::<3>(0).norm();
        if !n.is_finite() || n < 1e-300 {
            return Err(GeometryError::DegenerateGeometry("plane normal is zero"));
        }
        Ok(Self {
            coefficients: c / n,
        })
    }

    pub fn coefficients(&self) -> &Vector4<f64> {
        &self.coefficients
    }

    pub fn normal(&self) -> Vector3<f64> {
        self.coefficients.fixed_rows::<3>(0).into_owned()
    }

    pub fn signed_distance(&self, p: &Vector3<f64>) -> f64 {
        self.normal().dot(p) + self.coefficients[3]
    }
}

/// Singular values (descending) and the full right-singular basis `Vᵀ` of
/// `a`. Rows are zero-padded when `a` is wide so that `Vᵀ` is always square
/// and its last rows span the null space.
pub(crate) fn svd_right(a: DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let (r, c) = a.shape();
    let a = if r < c { a.resize_vertically(c, 0.0) } else { a };
    let svd = nalgebra::SVD::new(a, false, true);
    let v_t = svd.v_t.expect("v_t requested");
    (svd.singular_values, v_t)
}
