use nalgebra::{DMatrix, Matrix3, Matrix3x4, Matrix4, RowVector4, Vector3, Vector4};

use super::camera::{CameraModel, HomogeneousPoint3};
use super::distortion::RadialDistortion;
use super::{svd_right, GeometryError, Pixel, Plane3, Ray3};

/// Relative singular value below which a stacked system is treated as
/// rank-deficient.
const RANK_TOL: f64 = 1e-10;

/// Output of [`triangulate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triangulation {
    pub point: Vector3<f64>,
    /// Mean Euclidean distance (pixels) between each input pixel and the
    /// reprojection of `point`.
    pub mean_reprojection_error: f64,
}

/// Homogeneous linear triangulation.
///
/// Each view contributes the two rows `u·p3ᵀ − p1ᵀ` and `v·p3ᵀ − p2ᵀ`; the
/// point is the right singular vector of the smallest singular value of the
/// stacked system. Rows are scaled to unit norm first so that cameras with
/// very different projection scales weigh equally.
pub fn triangulate(views: &[(&CameraModel, Pixel)]) -> Result<Triangulation, GeometryError> {
    if views.len() < 2 {
        return Err(GeometryError::InsufficientPoints {
            needed: 2,
            got: views.len(),
        });
    }
    let mut a = DMatrix::<f64>::zeros(2 * views.len(), 4);
    for (i, (cam, px)) in views.iter().enumerate() {
        let p = cam.projection();
        let p1 = p.row(0);
        let p2 = p.row(1);
        let p3 = p.row(2);
        for (k, row) in [p3 * px.x - p1, p3 * px.y - p2].into_iter().enumerate() {
            let n = row.norm();
            let row = if n > 0.0 { row / n } else { row };
            a.row_mut(2 * i + k).copy_from(&row);
        }
    }
    let (sv, v_t) = svd_right(a);
    if sv[2] <= RANK_TOL * sv[0] {
        return Err(GeometryError::DegenerateGeometry(
            "triangulation system is rank deficient",
        ));
    }
    let x = HomogeneousPoint3(v_t.row(3).transpose().fixed_rows::<4>(0).into_owned());
    if x.0[3].abs() <= 1e-12 * x.0.norm() {
        return Err(GeometryError::DegenerateGeometry(
            "triangulated point is at infinity",
        ));
    }
    let point = x.to_point()?;

    let mut total = 0.0;
    for (cam, px) in views {
        let proj = cam.project_point(&HomogeneousPoint3::from_point(&point))?;
        total += (proj.pixel - px).norm();
    }
    Ok(Triangulation {
        point,
        mean_reprojection_error: total / views.len() as f64,
    })
}

/// A 3D/2D pair for [`dlt_calibrate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub world: Vector3<f64>,
    pub image: Pixel,
}

/// Scale `p` to unit Frobenius norm with `det(M) > 0`, where `M` is the left
/// 3×3 block. Two projections describing the same camera compare equal after
/// this normalization.
pub fn normalize_projection(p: &Matrix3x4<f64>) -> Matrix3x4<f64> {
    let n = p.norm();
    let det = p.fixed_columns::<3>(0).determinant();
    let sign = if det < 0.0 { -1.0 } else { 1.0 };
    p * (sign / n)
}

/// Similarity that moves the centroid to the origin and scales the RMS
/// distance to `target_rms`. Returned as (scale, centroid).
fn isotropic_normalization<const D: usize>(
    pts: &[nalgebra::SVector<f64, D>],
    target_rms: f64,
) -> (f64, nalgebra::SVector<f64, D>) {
    let n = pts.len() as f64;
    let centroid = pts.iter().sum::<nalgebra::SVector<f64, D>>() / n;
    let ms = pts.iter().map(|p| (p - centroid).norm_squared()).sum::<f64>() / n;
    let rms = ms.sqrt();
    let scale = if rms > 0.0 { target_rms / rms } else { 1.0 };
    (scale, centroid)
}

/// Direct Linear Transformation: estimate a projection matrix from at least
/// six 3D/2D correspondences.
///
/// Points are pre-normalized (centroid at the origin, RMS distance √2 in the
/// image and √3 in the world) before the homogeneous 2n×12 system is solved
/// by SVD. The returned camera has zero distortion and its projection is
/// normalized with [`normalize_projection`].
pub fn dlt_calibrate(
    id: impl Into<String>,
    image_size: (u32, u32),
    correspondences: &[Correspondence],
) -> Result<CameraModel, GeometryError> {
    let n = correspondences.len();
    if n < 6 {
        return Err(GeometryError::InsufficientPoints { needed: 6, got: n });
    }
    let world: Vec<Vector3<f64>> = correspondences.iter().map(|c| c.world).collect();
    let image: Vec<Pixel> = correspondences.iter().map(|c| c.image).collect();
    let (ws, wc) = isotropic_normalization(&world, 3f64.sqrt());
    let (is, ic) = isotropic_normalization(&image, 2f64.sqrt());

    // coplanar world points leave a 4-dimensional null space; catch that
    // directly as well as through the rank of the design matrix
    let scatter: Matrix3<f64> = world
        .iter()
        .map(|p| {
            let d = (p - wc) * ws;
            d * d.transpose()
        })
        .sum();
    let eig = scatter.symmetric_eigenvalues();
    if eig.min() <= 1e-10 * eig.max() {
        return Err(GeometryError::DegenerateConfiguration);
    }

    let mut a = DMatrix::<f64>::zeros(2 * n, 12);
    for (i, (w, im)) in world.iter().zip(&image).enumerate() {
        let x = ((w - wc) * ws).push(1.0).transpose();
        let u = (im.x - ic.x) * is;
        let v = (im.y - ic.y) * is;
        let r0 = 2 * i;
        let r1 = 2 * i + 1;
        a.view_mut((r0, 0), (1, 4)).copy_from(&x);
        a.view_mut((r0, 8), (1, 4)).copy_from(&(x * -u));
        a.view_mut((r1, 4), (1, 4)).copy_from(&x);
        a.view_mut((r1, 8), (1, 4)).copy_from(&(x * -v));
    }
    let (sv, v_t) = svd_right(a);
    if sv[10] <= 1e-8 * sv[0] {
        return Err(GeometryError::DegenerateConfiguration);
    }
    let sol = v_t.row(11);
    let pn = Matrix3x4::from_fn(|r, c| sol[4 * r + c]);

    // undo the normalizations: P = T_img⁻¹ · Pn · T_world
    let t_img_inv = Matrix3::new(1.0 / is, 0.0, ic.x, 0.0, 1.0 / is, ic.y, 0.0, 0.0, 1.0);
    let mut t_world = Matrix4::<f64>::identity() * ws;
    t_world[(3, 3)] = 1.0;
    t_world
        .fixed_view_mut::<3, 1>(0, 3)
        .copy_from(&(-wc * ws));
    let p = normalize_projection(&(t_img_inv * pn * t_world));
    CameraModel::new(id, image_size, p, RadialDistortion::none(image_size))
}

/// One camera's view of an elongated body: its centroid and image-plane
/// orientation.
#[derive(Debug, Clone, Copy)]
pub struct BodyAxisView<'a> {
    pub camera: &'a CameraModel,
    pub pixel: Pixel,
    /// radians; the image line through `pixel` at this slope
    pub orientation: f64,
}

/// Output of [`body_axis`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodyAxis {
    /// Line of intersection. The origin is the point on the line closest to
    /// the world origin; the direction is canonicalized (see [`body_axis`]).
    pub line: Ray3,
    /// Root-sum-square of the two smallest singular values of the stacked
    /// plane matrix; zero when all planes meet in one line exactly.
    pub residual: f64,
}

/// Best-fit 3D line from image-plane lines seen by several cameras.
///
/// Each view back-projects its image line to a plane through the camera
/// center (`π = Pᵀ l`). The line is spanned by the two right singular vectors
/// with the smallest singular values of the stacked planes. Since an image
/// slope has a 180° ambiguity, the direction is canonicalized to `z ≥ 0`,
/// then `x ≥ 0`, then `y ≥ 0`.
pub fn body_axis(views: &[BodyAxisView<'_>]) -> Result<BodyAxis, GeometryError> {
    if views.len() < 2 {
        return Err(GeometryError::InsufficientPoints {
            needed: 2,
            got: views.len(),
        });
    }
    let mut planes = Vec::with_capacity(views.len());
    for v in views {
        let x1 = Vector3::new(v.pixel.x, v.pixel.y, 1.0);
        let x2 = Vector3::new(
            v.pixel.x + v.orientation.cos(),
            v.pixel.y + v.orientation.sin(),
            1.0,
        );
        let l = x1.cross(&x2);
        let pi: Vector4<f64> = v.camera.projection().transpose() * l;
        planes.push(Plane3::from_coefficients(pi)?);
    }

    let normals = DMatrix::from_fn(3, planes.len(), |r, c| planes[c].normal()[r]);
    let nsv = normals.svd(false, false).singular_values;
    if nsv.len() < 2 || nsv[1] <= 1e-9 {
        return Err(GeometryError::DegenerateGeometry("all planes are parallel"));
    }

    let mut a = DMatrix::<f64>::zeros(planes.len(), 4);
    for (i, p) in planes.iter().enumerate() {
        a.set_row(i, &RowVector4::from(p.coefficients().transpose()));
    }
    let (sv, v_t) = svd_right(a);
    let residual = sv[2].hypot(sv[3]);
    let p: Vector4<f64> = v_t.row(2).transpose().fixed_rows::<4>(0).into_owned();
    let q: Vector4<f64> = v_t.row(3).transpose().fixed_rows::<4>(0).into_owned();

    // point at infinity in span{p, q} gives the direction
    let inf = p * q[3] - q * p[3];
    let mut dir: Vector3<f64> = inf.fixed_rows::<3>(0).into_owned();
    if dir.norm() < 1e-12 {
        return Err(GeometryError::DegenerateGeometry("line lies at infinity"));
    }
    dir /= dir.norm();
    canonicalize_direction(&mut dir);

    // any finite point of the span, then slide to the foot from the origin
    let finite = if p[3].abs() >= q[3].abs() { p } else { q };
    let on_line = HomogeneousPoint3(finite).to_point()?;
    let origin = on_line - dir * on_line.dot(&dir);
    Ok(BodyAxis {
        line: Ray3::new(origin, dir)?,
        residual,
    })
}

fn canonicalize_direction(dir: &mut Vector3<f64>) {
    const TIE: f64 = 1e-12;
    let flip = if dir.z.abs() > TIE {
        dir.z < 0.0
    } else if dir.x.abs() > TIE {
        dir.x < 0.0
    } else {
        dir.y < 0.0
    };
    if flip {
        *dir = -*dir;
    }
}
