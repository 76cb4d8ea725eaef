//! Per-target extended Kalman filter.
//!
//! The state is `(x, y, z, ẋ, ẏ, ż)` under constant-velocity dynamics. The
//! observation of a target in a set of cameras is the concatenation of its
//! ideal pinhole projections; features are expected to be distortion
//! corrected already.

mod trajectory;

pub use trajectory::{read_trajectory, TrajectoryRow, TrajectoryWriter, TRAJECTORY_HEADER};

use nalgebra::{Cholesky, DMatrix, DVector, Matrix2, Matrix3, Matrix6, Vector3, Vector6};
use thiserror::Error;

use crate::geometry::{CameraModel, Pixel};

pub type TargetId = u64;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum TrackerError {
    #[error("target is behind camera {0}")]
    BehindCamera(String),
    #[error("innovation covariance is not invertible")]
    SingularInnovation,
    #[error("camera index {0} is out of range")]
    UnknownCamera(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetState {
    pub id: TargetId,
    /// `(x, y, z)` in meters, then velocity in m/s
    pub mean: Vector6<f64>,
    pub covariance: Matrix6<f64>,
    pub frames_since_observation: u32,
    pub born_at: u64,
}

impl TargetState {
    pub fn new(id: TargetId, mean: Vector6<f64>, covariance: Matrix6<f64>, born_at: u64) -> Self {
        Self {
            id,
            mean,
            covariance,
            frames_since_observation: 0,
            born_at,
        }
    }

    pub fn position(&self) -> Vector3<f64> {
        self.mean.fixed_rows::<3>(0).into_owned()
    }

    pub fn velocity(&self) -> Vector3<f64> {
        self.mean.fixed_rows::<3>(3).into_owned()
    }

    pub fn position_covariance(&self) -> Matrix3<f64> {
        self.covariance.fixed_view::<3, 3>(0, 0).into_owned()
    }
}

/// Constant-velocity motion with additive process noise.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessModel {
    pub dt: f64,
    pub a: Matrix6<f64>,
    pub q: Matrix6<f64>,
}

impl ProcessModel {
    /// Position process variance, m².
    pub const DEFAULT_Q_POSITION: f64 = 1e-4;
    /// Velocity process variance, (m/s)².
    pub const DEFAULT_Q_VELOCITY: f64 = 0.25;

    /// Diagonal `Q` with the given position and velocity variances.
    pub fn new(dt: f64, q_position: f64, q_velocity: f64) -> Self {
        let mut q = Matrix6::zeros();
        for i in 0..3 {
            q[(i, i)] = q_position;
            q[(i + 3, i + 3)] = q_velocity;
        }
        Self::with_q(dt, q)
    }

    pub fn with_q(dt: f64, q: Matrix6<f64>) -> Self {
        let mut a = Matrix6::identity();
        for i in 0..3 {
            a[(i, i + 3)] = dt;
        }
        Self { dt, a, q }
    }

    pub fn with_defaults(dt: f64) -> Self {
        Self::new(dt, Self::DEFAULT_Q_POSITION, Self::DEFAULT_Q_VELOCITY)
    }
}

/// Cameras observed by the filter and the per-camera pixel noise.
#[derive(Debug, Clone)]
pub struct ObservationModel {
    pub cameras: Vec<CameraModel>,
    /// 2×2 pixel covariance, px²
    pub r: Matrix2<f64>,
}

impl ObservationModel {
    pub fn new(cameras: Vec<CameraModel>) -> Self {
        Self {
            cameras,
            r: Matrix2::identity(),
        }
    }

    pub fn with_r(mut self, r: Matrix2<f64>) -> Self {
        self.r = r;
        self
    }
}

fn symmetrize(m: &Matrix6<f64>) -> Matrix6<f64> {
    (m + m.transpose()) * 0.5
}

/// Symmetrize and, if any eigenvalue went negative, rebuild with those
/// eigenvalues set to zero.
fn clamp_psd(m: &Matrix6<f64>) -> Matrix6<f64> {
    let s = symmetrize(m);
    let eig = s.symmetric_eigen();
    if eig.eigenvalues.iter().all(|&l| l >= 0.0) {
        return s;
    }
    let lambda = eig.eigenvalues.map(|l| l.max(0.0));
    let v = &eig.eigenvectors;
    symmetrize(&(v * Matrix6::from_diagonal(&lambda) * v.transpose()))
}

/// Time update: `ŝ ← A ŝ`, `P ← A P Aᵀ + Q`, followed by `(P + Pᵀ)/2`.
pub fn predict(state: &TargetState, pm: &ProcessModel) -> TargetState {
    let cov = pm.a * state.covariance * pm.a.transpose() + pm.q;
    TargetState {
        mean: pm.a * state.mean,
        covariance: symmetrize(&cov),
        ..state.clone()
    }
}

fn project(cam: &CameraModel, p: &Vector3<f64>) -> Result<Pixel, TrackerError> {
    cam.project(p)
        .map_err(|_| TrackerError::BehindCamera(cam.id().to_owned()))
}

/// Concatenated `(ū, v̄)` of the target position in each camera.
pub fn observation_function(
    mean: &Vector6<f64>,
    cams: &[&CameraModel],
) -> Result<DVector<f64>, TrackerError> {
    let p = mean.fixed_rows::<3>(0).into_owned();
    let mut y = DVector::zeros(2 * cams.len());
    for (i, cam) in cams.iter().enumerate() {
        let px = project(cam, &p)?;
        y[2 * i] = px.x;
        y[2 * i + 1] = px.y;
    }
    Ok(y)
}

/// Analytic Jacobian of [`observation_function`]. With `(r, s, t) = P X`,
/// `∂(r/t)/∂xⱼ = (P₀ⱼ t − r P₂ⱼ) / t²`; velocity columns are zero.
pub fn observation_jacobian(
    mean: &Vector6<f64>,
    cams: &[&CameraModel],
) -> Result<DMatrix<f64>, TrackerError> {
    let p = mean.fixed_rows::<3>(0).into_owned();
    let x = p.push(1.0);
    let mut c = DMatrix::zeros(2 * cams.len(), 6);
    for (i, cam) in cams.iter().enumerate() {
        project(cam, &p)?;
        let m = cam.projection();
        let h = m * x;
        let t2 = h[2] * h[2];
        for j in 0..3 {
            c[(2 * i, j)] = (m[(0, j)] * h[2] - h[0] * m[(2, j)]) / t2;
            c[(2 * i + 1, j)] = (m[(1, j)] * h[2] - h[1] * m[(2, j)]) / t2;
        }
    }
    Ok(c)
}

/// Largest condition number accepted for the innovation covariance.
const MAX_INNOVATION_CONDITION: f64 = 1e12;

/// Measurement update from pixel observations `(camera index, pixel)`.
///
/// With no observations the prior is returned with its miss counter
/// incremented. Otherwise all cameras are stacked into one update with a
/// block-diagonal `R`; the innovation is taken against the nonlinear
/// prediction `h(ŝ)` and the covariance uses the Joseph form.
pub fn update(
    prior: &TargetState,
    observations: &[(usize, Pixel)],
    om: &ObservationModel,
) -> Result<TargetState, TrackerError> {
    if observations.is_empty() {
        let mut post = prior.clone();
        post.frames_since_observation += 1;
        return Ok(post);
    }
    let cams = observations
        .iter()
        .map(|&(i, _)| om.cameras.get(i).ok_or(TrackerError::UnknownCamera(i)))
        .collect::<Result<Vec<_>, _>>()?;
    let n = 2 * observations.len();
    let y_bar = observation_function(&prior.mean, &cams)?;
    let c = observation_jacobian(&prior.mean, &cams)?;
    let mut y = DVector::zeros(n);
    let mut r = DMatrix::zeros(n, n);
    for (k, (_, px)) in observations.iter().enumerate() {
        y[2 * k] = px.x;
        y[2 * k + 1] = px.y;
        r.view_mut((2 * k, 2 * k), (2, 2)).copy_from(&om.r);
    }

    let p = DMatrix::from_column_slice(6, 6, prior.covariance.as_slice());
    let cp = &c * &p;
    let mut s = &cp * c.transpose() + &r;
    s = (&s + s.transpose()) * 0.5;
    let eig = s.clone().symmetric_eigenvalues();
    let (lo, hi) = eig
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &l| (lo.min(l), hi.max(l)));
    if !(lo > 0.0) || hi / lo > MAX_INNOVATION_CONDITION {
        return Err(TrackerError::SingularInnovation);
    }
    let chol = Cholesky::new(s).ok_or(TrackerError::SingularInnovation)?;
    // K = P Cᵀ S⁻¹ = (S⁻¹ C P)ᵀ since P and S are symmetric
    let k = chol.solve(&cp).transpose();

    let innovation = y - y_bar;
    let mean = prior.mean + Vector6::from_iterator((&k * innovation).iter().copied());
    let ikc = DMatrix::identity(6, 6) - &k * &c;
    let joseph = &ikc * &p * ikc.transpose() + &k * &r * k.transpose();
    let cov = Matrix6::from_iterator(joseph.iter().copied());

    Ok(TargetState {
        mean,
        covariance: clamp_psd(&cov),
        frames_since_observation: 0,
        ..prior.clone()
    })
}

/// Position after `horizon` seconds of constant velocity.
pub fn extrapolate(state: &TargetState, horizon: f64) -> Vector3<f64> {
    state.position() + state.velocity() * horizon
}
