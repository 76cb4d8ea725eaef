use nalgebra::{Matrix3, Matrix3x4, Vector3, Vector4};

use super::distortion::RadialDistortion;
use super::{GeometryError, Pixel, Ray3};

/// Homogeneous image point `(r, s, t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomogeneousPoint2 {
    pub r: f64,
    pub s: f64,
    pub t: f64,
}

impl HomogeneousPoint2 {
    pub fn new(r: f64, s: f64, t: f64) -> Self {
        Self { r, s, t }
    }

    /// `(r/t, s/t)`
    pub fn dehomogenize(&self) -> Result<Pixel, GeometryError> {
        if self.t.abs() < 1e-15 {
            return Err(GeometryError::PointAtInfinity);
        }
        Ok(Pixel::new(self.r / self.t, self.s / self.t))
    }
}

/// Homogeneous world point `(X1, X2, X3, X4)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomogeneousPoint3(pub Vector4<f64>);

impl HomogeneousPoint3 {
    pub fn new(x1: f64, x2: f64, x3: f64, x4: f64) -> Self {
        Self(Vector4::new(x1, x2, x3, x4))
    }

    pub fn from_point(p: &Vector3<f64>) -> Self {
        Self(p.push(1.0))
    }

    pub fn to_point(&self) -> Result<Vector3<f64>, GeometryError> {
        let w = self.0[3];
        if w.abs() < 1e-15 {
            return Err(GeometryError::PointAtInfinity);
        }
        Ok(self.0.fixed_rows::<3>(0) / w)
    }
}

/// Result of projecting a world point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub pixel: Pixel,
    /// False when the point lies behind the principal plane.
    pub in_front: bool,
}

/// A calibrated camera: projection matrix, radial distortion and image size.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraModel {
    id: String,
    image_size: (u32, u32),
    projection: Matrix3x4<f64>,
    distortion: RadialDistortion,
    center: Vector3<f64>,
    /// inverse of the left 3×3 block, for back-projection
    m_inv: Matrix3<f64>,
    /// sign of det of the left 3×3 block, for the depth test
    orientation: f64,
}

impl CameraModel {
    /// Build a camera. Fails unless the projection has rank 3 and a finite
    /// center.
    pub fn new(
        id: impl Into<String>,
        image_size: (u32, u32),
        projection: Matrix3x4<f64>,
        distortion: RadialDistortion,
    ) -> Result<Self, GeometryError> {
        if projection.iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::InvalidProjection);
        }
        let m: Matrix3<f64> = projection.fixed_columns::<3>(0).into_owned();
        let p4: Vector3<f64> = projection.column(3).into_owned();

        let svd = nalgebra::SVD::new(m, false, false);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        if !(smax > 0.0) || smin <= 1e-12 * smax {
            return Err(GeometryError::InvalidProjection);
        }
        let m_inv = m.try_inverse().ok_or(GeometryError::InvalidProjection)?;
        let center = -(m_inv * p4);
        let det = m.determinant();
        Ok(Self {
            id: id.into(),
            image_size,
            projection,
            distortion,
            center,
            m_inv,
            orientation: det.signum(),
        })
    }

    /// Camera with no lens distortion.
    pub fn pinhole(
        id: impl Into<String>,
        image_size: (u32, u32),
        projection: Matrix3x4<f64>,
    ) -> Result<Self, GeometryError> {
        Self::new(id, image_size, projection, RadialDistortion::none(image_size))
    }

    /// Camera from intrinsics `K`, world-to-camera rotation `R` and camera
    /// center `C`: `P = K [R | −R C]`.
    pub fn from_parts(
        id: impl Into<String>,
        image_size: (u32, u32),
        k: &Matrix3<f64>,
        rotation: &Matrix3<f64>,
        center: &Vector3<f64>,
        distortion: RadialDistortion,
    ) -> Result<Self, GeometryError> {
        let t = -(rotation * center);
        let mut rt = Matrix3x4::zeros();
        rt.fixed_columns_mut::<3>(0).copy_from(rotation);
        rt.set_column(3, &t);
        Self::new(id, image_size, k * rt, distortion)
    }

    /// Undistorted camera at `eye` aimed at `target`, with square pixels of
    /// focal length `focal` and the principal point at the image center.
    /// Image `v` grows toward world −z when the view is not near vertical.
    pub fn look_at(
        id: impl Into<String>,
        image_size: (u32, u32),
        focal: f64,
        eye: &Vector3<f64>,
        target: &Vector3<f64>,
    ) -> Result<Self, GeometryError> {
        let fwd = (target - eye)
            .try_normalize(0.0)
            .ok_or(GeometryError::DegenerateGeometry("eye coincides with target"))?;
        let up_hint = if fwd.z.abs() > 0.9 {
            Vector3::y()
        } else {
            Vector3::z()
        };
        let right = fwd.cross(&up_hint).normalize();
        let down = fwd.cross(&right);
        let r = Matrix3::from_rows(&[right.transpose(), down.transpose(), fwd.transpose()]);
        let (w, h) = image_size;
        let k = Matrix3::new(focal, 0.0, w as f64 / 2.0, 0.0, focal, h as f64 / 2.0, 0.0, 0.0, 1.0);
        Self::from_parts(id, image_size, &k, &r, eye, RadialDistortion::none(image_size))
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn image_size(&self) -> (u32, u32) {
        self.image_size
    }

    pub fn projection(&self) -> &Matrix3x4<f64> {
        &self.projection
    }

    pub fn distortion(&self) -> &RadialDistortion {
        &self.distortion
    }

    pub fn center(&self) -> &Vector3<f64> {
        &self.center
    }

    /// Ideal pinhole projection of a homogeneous point. Distortion is not
    /// applied.
    pub fn project_point(&self, x: &HomogeneousPoint3) -> Result<Projection, GeometryError> {
        let h = self.projection * x.0;
        let pixel = HomogeneousPoint2::new(h[0], h[1], h[2]).dehomogenize()?;
        let depth_sign = self.orientation * h[2] * x.0[3];
        Ok(Projection {
            pixel,
            in_front: depth_sign > 0.0,
        })
    }

    /// Ideal projection of a finite point that must lie in front of the
    /// camera.
    pub fn project(&self, p: &Vector3<f64>) -> Result<Pixel, GeometryError> {
        let proj = self.project_point(&HomogeneousPoint3::from_point(p))?;
        if !proj.in_front {
            return Err(GeometryError::BehindCamera);
        }
        Ok(proj.pixel)
    }

    /// Whether `pixel` falls on the sensor.
    pub fn contains(&self, pixel: &Pixel) -> bool {
        let (w, h) = self.image_size;
        pixel.x >= 0.0 && pixel.y >= 0.0 && pixel.x <= (w - 1) as f64 && pixel.y <= (h - 1) as f64
    }

    /// Ray from the camera center through an ideal pixel, pointing forward.
    pub fn pixel_ray(&self, p: &Pixel) -> Result<Ray3, GeometryError> {
        let d = self.m_inv * Vector3::new(p.x, p.y, 1.0) * self.orientation;
        Ray3::new(self.center, d)
    }

    pub fn apply_distortion(&self, ideal: &Pixel) -> Pixel {
        self.distortion.apply(ideal)
    }

    pub fn correct_distortion(&self, observed: &Pixel) -> Result<Pixel, GeometryError> {
        self.distortion.correct(observed)
    }
}
