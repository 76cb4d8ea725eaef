//! Nearest-neighbor data association with two-stage gating, track-merge
//! prevention, combinatorial birth and covariance-based death.

mod spawn;

pub use spawn::{camera_combinations, spawn_targets, Spawned};

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

use crate::features::Feature;
use crate::geometry::{CameraModel, Ray3};
use crate::tracker::TargetState;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum AssociationError {
    #[error("covariance is singular or badly conditioned")]
    SingularCovariance,
    #[error("invalid gate configuration: {0}")]
    InvalidConfig(String),
}

/// Gating, birth and death thresholds.
#[derive(Debug, Clone, PartialEq)]
pub struct GateConfig {
    /// px; a feature must lie strictly closer than this to the projected prior
    pub dist2d_threshold: f64,
    /// px²; a feature's area must strictly exceed this
    pub area_threshold: f64,
    /// largest accepted Mahalanobis ray distance
    pub mahalanobis_gate: f64,
    /// px; mean reprojection error bound for a birth hypothesis
    pub birth_reprojection_threshold: f64,
    /// m²; bound on the largest eigenvalue of the position covariance
    pub death_covariance_threshold: f64,
    pub min_birth_cameras: usize,
    /// m
    pub sigma_birth: f64,
    /// m/s
    pub sigma_vbirth: f64,
}

impl Default for GateConfig {
    fn default() -> Self {
        Self {
            dist2d_threshold: 30.0,
            area_threshold: 1.0,
            mahalanobis_gate: 5.0,
            birth_reprojection_threshold: 3.0,
            death_covariance_threshold: 0.01,
            min_birth_cameras: 2,
            sigma_birth: 0.05,
            sigma_vbirth: 1.0,
        }
    }
}

impl GateConfig {
    pub fn validate(&self) -> Result<(), AssociationError> {
        let positive = [
            ("dist2d_threshold", self.dist2d_threshold),
            ("area_threshold", self.area_threshold),
            ("mahalanobis_gate", self.mahalanobis_gate),
            ("birth_reprojection_threshold", self.birth_reprojection_threshold),
            ("death_covariance_threshold", self.death_covariance_threshold),
            ("sigma_birth", self.sigma_birth),
            ("sigma_vbirth", self.sigma_vbirth),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(AssociationError::InvalidConfig(format!("{name} must be > 0")));
            }
        }
        if self.min_birth_cameras < 2 {
            return Err(AssociationError::InvalidConfig(
                "min_birth_cameras must be at least 2".into(),
            ));
        }
        Ok(())
    }
}

const MAX_COVARIANCE_CONDITION: f64 = 1e12;

/// Point on the line through `ray` minimizing the Mahalanobis distance to
/// `mean` under `sigma`, with that distance.
///
/// The squared distance is quadratic in the line parameter `s`; its
/// minimizer is `s* = dᵀΣ⁻¹(ā − o) / dᵀΣ⁻¹d`.
pub fn mahalanobis_closest_point(
    ray: &Ray3,
    mean: &Vector3<f64>,
    sigma: &Matrix3<f64>,
) -> Result<(Vector3<f64>, f64), AssociationError> {
    let sym = (sigma + sigma.transpose()) * 0.5;
    let eig = sym.symmetric_eigenvalues();
    let (lo, hi) = (eig.min(), eig.max());
    if !(lo > 0.0) || hi / lo > MAX_COVARIANCE_CONDITION {
        return Err(AssociationError::SingularCovariance);
    }
    let inv = sym
        .cholesky()
        .ok_or(AssociationError::SingularCovariance)?
        .inverse();
    let d = ray.direction;
    let w = inv * d;
    let s = w.dot(&(mean - ray.origin)) / w.dot(&d);
    let a = ray.point_at(s);
    let e = a - mean;
    let d2 = e.dot(&(inv * e)).max(0.0);
    Ok((a, d2.sqrt()))
}

/// How one feature fared against one target's gates. Later stages are only
/// reached when the earlier ones pass, so the variant also records which
/// computations were performed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GateOutcome {
    /// area not strictly above the threshold
    Area,
    /// the prior is behind the camera or its ray is undefined
    NotVisible,
    /// too far from the projected prior in the image
    Distance2d(f64),
    /// prior position covariance could not be inverted
    SingularCovariance,
    /// Mahalanobis distance above the gate
    Mahalanobis(f64),
    /// passed every gate; carries the Mahalanobis distance
    Accepted(f64),
}

impl GateOutcome {
    pub fn likelihood(&self) -> f64 {
        match *self {
            GateOutcome::Accepted(d) => (-d).exp(),
            _ => 0.0,
        }
    }

    /// Whether the Mahalanobis distance was computed.
    pub fn evaluated_mahalanobis(&self) -> bool {
        matches!(
            self,
            GateOutcome::Mahalanobis(_) | GateOutcome::Accepted(_) | GateOutcome::SingularCovariance
        )
    }
}

pub fn gate_feature(
    z: &Feature,
    prior: &TargetState,
    cam: &CameraModel,
    gate: &GateConfig,
) -> GateOutcome {
    if !(z.area > gate.area_threshold) {
        return GateOutcome::Area;
    }
    let mean = prior.position();
    let Ok(projected) = cam.project(&mean) else {
        return GateOutcome::NotVisible;
    };
    let dist2d = (projected - z.pixel()).norm();
    if !(dist2d < gate.dist2d_threshold) {
        return GateOutcome::Distance2d(dist2d);
    }
    let Ok(ray) = cam.pixel_ray(&z.pixel()) else {
        return GateOutcome::NotVisible;
    };
    match mahalanobis_closest_point(&ray, &mean, &prior.position_covariance()) {
        Err(_) => GateOutcome::SingularCovariance,
        Ok((_, d)) if d > gate.mahalanobis_gate => GateOutcome::Mahalanobis(d),
        Ok((_, d)) => GateOutcome::Accepted(d),
    }
}

/// `1[dist2d < t] · 1[α > t] · exp(−d_mahal)`, zero outside the gates.
pub fn feature_likelihood(
    z: &Feature,
    prior: &TargetState,
    cam: &CameraModel,
    gate: &GateConfig,
) -> f64 {
    gate_feature(z, prior, cam, gate).likelihood()
}

/// Per target, per camera: the chosen feature index or `None`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssignmentMatrix {
    pub columns: Vec<Vec<Option<usize>>>,
}

impl AssignmentMatrix {
    pub fn n_targets(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty_column(&self, k: usize) -> bool {
        self.columns[k].iter().all(Option::is_none)
    }

    /// `claimed[cam][feature]` for every feature used by some column.
    pub fn claimed(&self, features: &[Vec<Feature>]) -> Vec<Vec<bool>> {
        let mut claimed: Vec<Vec<bool>> = features.iter().map(|f| vec![false; f.len()]).collect();
        for col in &self.columns {
            for (cam, entry) in col.iter().enumerate() {
                if let Some(j) = entry {
                    claimed[cam][*j] = true;
                }
            }
        }
        claimed
    }
}

/// One target's column: in each camera the feature of largest likelihood,
/// ties to the lowest index, `None` when every likelihood is zero.
pub fn assign_target(
    features: &[Vec<Feature>],
    cams: &[CameraModel],
    prior: &TargetState,
    gate: &GateConfig,
) -> Vec<Option<usize>> {
    features
        .iter()
        .zip(cams)
        .map(|(list, cam)| {
            let mut best: Option<(usize, f64)> = None;
            for (j, z) in list.iter().enumerate() {
                let l = feature_likelihood(z, prior, cam, gate);
                if l > 0.0 && best.is_none_or(|(_, b)| l > b) {
                    best = Some((j, l));
                }
            }
            best.map(|(j, _)| j)
        })
        .collect()
}

pub fn assign(
    features: &[Vec<Feature>],
    cams: &[CameraModel],
    targets: &[TargetState],
    gate: &GateConfig,
) -> AssignmentMatrix {
    AssignmentMatrix {
        columns: targets
            .iter()
            .map(|t| assign_target(features, cams, t, gate))
            .collect(),
    }
}

/// Summed image distance between a target's projected prior and the
/// features in its column.
fn column_distance(
    column: &[Option<usize>],
    prior: &TargetState,
    features: &[Vec<Feature>],
    cams: &[CameraModel],
) -> f64 {
    let p = prior.position();
    column
        .iter()
        .enumerate()
        .filter_map(|(c, e)| e.map(|j| (c, j)))
        .map(|(c, j)| match cams[c].project(&p) {
            Ok(px) => (px - features[c][j].pixel()).norm(),
            Err(_) => f64::INFINITY,
        })
        .sum()
}

/// Targets holding exactly the same non-empty column compete for it: the
/// one whose prediction is closest in summed image distance keeps the
/// features (ties to the lower target index) and the rest get empty
/// columns. Partially overlapping columns are left alone.
pub fn resolve_shared(
    assignments: &AssignmentMatrix,
    targets: &[TargetState],
    features: &[Vec<Feature>],
    cams: &[CameraModel],
) -> AssignmentMatrix {
    let mut out = assignments.clone();
    let n = assignments.n_targets();
    let mut handled = vec![false; n];
    for k in 0..n {
        if handled[k] || assignments.is_empty_column(k) {
            continue;
        }
        let group: Vec<usize> = (k..n)
            .filter(|&m| assignments.columns[m] == assignments.columns[k])
            .collect();
        for &m in &group {
            handled[m] = true;
        }
        if group.len() < 2 {
            continue;
        }
        let col = &assignments.columns[k];
        let mut winner = group[0];
        let mut best = column_distance(col, &targets[winner], features, cams);
        for &m in &group[1..] {
            let d = column_distance(col, &targets[m], features, cams);
            if d < best {
                best = d;
                winner = m;
            }
        }
        for &m in &group {
            if m != winner {
                out.columns[m] = vec![None; col.len()];
            }
        }
    }
    out
}

/// Largest eigenvalue of the position block of the covariance.
pub fn position_uncertainty(t: &TargetState) -> f64 {
    t.position_covariance().symmetric_eigenvalues().max()
}

/// Split targets into those kept and those whose position uncertainty
/// exceeds the death threshold. Order is preserved in both outputs.
pub fn cull_targets(
    targets: Vec<TargetState>,
    gate: &GateConfig,
) -> (Vec<TargetState>, Vec<TargetState>) {
    targets
        .into_iter()
        .partition(|t| !(position_uncertainty(t) > gate.death_covariance_threshold))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tracker::{predict, ProcessModel};
    use nalgebra::{Matrix6, Vector6};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(super) fn ring(n: usize) -> Vec<CameraModel> {
        (0..n)
            .map(|i| {
                let a = i as f64 * std::f64::consts::TAU / n as f64;
                let z = if i % 2 == 0 { 1.0 } else { 0.4 };
                let eye = Vector3::new(2.5 * a.cos(), 2.5 * a.sin(), z);
                CameraModel::look_at(format!("c{i}"), (640, 480), 600.0, &eye, &Vector3::zeros())
                    .unwrap()
            })
            .collect()
    }

    pub(super) fn feature_at(cam: &CameraModel, p: &Vector3<f64>) -> Feature {
        let px = cam.project(p).unwrap();
        Feature::from_wire([px.x, px.y, 9.0, 200.0, 0.0, 1.0])
    }

    fn prior_at(p: Vector3<f64>, var: f64) -> TargetState {
        let mut cov = Matrix6::identity() * var;
        for i in 3..6 {
            cov[(i, i)] = 1.0;
        }
        TargetState::new(0, Vector6::new(p.x, p.y, p.z, 0.0, 0.0, 0.0), cov, 0)
    }

    #[test]
    fn identity_covariance_gives_euclidean_foot() {
        let ray = Ray3::new(Vector3::new(0.0, 0.0, 0.0), Vector3::new(1.0, 1.0, 0.0)).unwrap();
        let m = Vector3::new(2.0, 0.0, 1.0);
        let (a, d) = mahalanobis_closest_point(&ray, &m, &Matrix3::identity()).unwrap();
        assert!((a - ray.closest_point(&m)).norm() < 1e-12);
        assert!((d - ray.distance_to(&m)).abs() < 1e-12);
    }

    #[test]
    fn mean_on_ray_has_zero_distance() {
        let ray = Ray3::new(Vector3::new(1.0, 2.0, 3.0), Vector3::new(0.3, -0.2, 1.0)).unwrap();
        let m = ray.point_at(2.5);
        let sigma = Matrix3::new(2.0, 0.3, 0.0, 0.3, 1.0, 0.1, 0.0, 0.1, 0.5);
        let (_, d) = mahalanobis_closest_point(&ray, &m, &sigma).unwrap();
        assert!(d < 1e-7);
    }

    #[test]
    fn anisotropic_matches_line_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let sigma = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, 100.0));
        let inv = sigma.try_inverse().unwrap();
        for _ in 0..20 {
            let o = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0));
            let dir = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0));
            let ray = Ray3::new(o, dir).unwrap();
            let m = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0));
            let (_, d) = mahalanobis_closest_point(&ray, &m, &sigma).unwrap();
            let dist = |s: f64| {
                let e = ray.point_at(s) - m;
                e.dot(&(inv * e)).sqrt()
            };
            // coarse grid, then a 1e-4 grid around the coarse minimum
            let s0 = ray.closest_param(&m);
            let coarse = (-2000..=2000)
                .map(|i| s0 + i as f64 * 1e-2)
                .min_by(|a, b| dist(*a).total_cmp(&dist(*b)))
                .unwrap();
            let best = (-200..=200)
                .map(|i| dist(coarse + i as f64 * 1e-4))
                .fold(f64::INFINITY, f64::min);
            assert!((d - best).abs() < 1e-3, "{d} vs {best}");
        }
    }

    #[test]
    fn singular_covariance_is_an_error() {
        let ray = Ray3::new(Vector3::zeros(), Vector3::x()).unwrap();
        let sigma = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, 0.0));
        assert_eq!(
            mahalanobis_closest_point(&ray, &Vector3::zeros(), &sigma),
            Err(AssociationError::SingularCovariance)
        );
    }

    #[test]
    fn far_feature_skips_mahalanobis() {
        let cams = ring(1);
        let p = Vector3::zeros();
        let mut z = feature_at(&cams[0], &p);
        z.u += 500.0;
        let gate = GateConfig {
            dist2d_threshold: 50.0,
            ..GateConfig::default()
        };
        let out = gate_feature(&z, &prior_at(p, 1e-4), &cams[0], &gate);
        assert!(matches!(out, GateOutcome::Distance2d(d) if d > 499.0));
        assert!(!out.evaluated_mahalanobis());
        assert_eq!(out.likelihood(), 0.0);
    }

    #[test]
    fn area_gate_is_strict() {
        let cams = ring(1);
        let p = Vector3::zeros();
        let mut z = feature_at(&cams[0], &p);
        z.area = GateConfig::default().area_threshold;
        assert_eq!(
            feature_likelihood(&z, &prior_at(p, 1e-4), &cams[0], &GateConfig::default()),
            0.0
        );
    }

    #[test]
    fn feature_on_prior_ray_has_unit_likelihood() {
        let cams = ring(1);
        let p = Vector3::new(0.01, -0.02, 0.03);
        let z = feature_at(&cams[0], &p);
        let l = feature_likelihood(&z, &prior_at(p, 1e-4), &cams[0], &GateConfig::default());
        assert!((l - 1.0).abs() < 1e-9);
    }

    #[test]
    fn assign_picks_nearest_in_mahalanobis_sense() {
        let cams = ring(2);
        let p = Vector3::zeros();
        let prior = prior_at(p, 1e-4);
        let gate = GateConfig::default();
        let mut near = feature_at(&cams[0], &p);
        near.u += 1.0;
        let mut far = feature_at(&cams[0], &p);
        far.u -= 4.0;
        let features = vec![vec![far, near], vec![]];
        let m = assign(&features, &cams, std::slice::from_ref(&prior), &gate);
        let l_far = feature_likelihood(&far, &prior, &cams[0], &gate);
        let l_near = feature_likelihood(&near, &prior, &cams[0], &gate);
        assert!(l_near > l_far && l_far > 0.0);
        assert_eq!(m.columns, vec![vec![Some(1), None]]);
    }

    #[test]
    fn assign_single_and_out_of_gate() {
        let cams = ring(2);
        let p = Vector3::zeros();
        let prior = prior_at(p, 1e-4);
        let z0 = feature_at(&cams[0], &p);
        let mut z1 = feature_at(&cams[1], &p);
        z1.v += 200.0;
        let m = assign(&[vec![z0], vec![z1]], &cams, &[prior], &GateConfig::default());
        assert_eq!(m.columns, vec![vec![Some(0), None]]);
    }

    #[test]
    fn equal_likelihood_ties_go_to_lowest_index() {
        let cams = ring(1);
        let p = Vector3::zeros();
        let z = feature_at(&cams[0], &p);
        let m = assign(&[vec![z, z]], &cams, &[prior_at(p, 1e-4)], &GateConfig::default());
        assert_eq!(m.columns[0], vec![Some(0)]);
    }

    #[test]
    fn resolve_shared_closest_prediction_keeps() {
        let cams = ring(1);
        let truth = Vector3::zeros();
        let z = feature_at(&cams[0], &truth);
        // shift the priors sideways so their projections are ~2 px and ~10 px away
        let right = (cams[0].pixel_ray(&(z.pixel() + crate::geometry::Pixel::new(1.0, 0.0)))
            .unwrap()
            .closest_point(&truth)
            - truth)
            .normalize();
        let per_px = {
            let q = truth + right * 1e-3;
            (cams[0].project(&q).unwrap() - z.pixel()).norm() / 1e-3
        };
        let a = prior_at(truth + right * (2.0 / per_px), 1e-4);
        let b = prior_at(truth + right * (10.0 / per_px), 1e-4);
        let features = vec![vec![z]];
        let m = AssignmentMatrix {
            columns: vec![vec![Some(0)], vec![Some(0)]],
        };
        let r = resolve_shared(&m, &[b.clone(), a.clone()], &features, &cams);
        assert_eq!(r.columns, vec![vec![None], vec![Some(0)]]);
    }

    #[test]
    fn resolve_shared_leaves_distinct_columns() {
        let cams = ring(2);
        let p = Vector3::zeros();
        let features = vec![vec![feature_at(&cams[0], &p)], vec![feature_at(&cams[1], &p)]];
        let t = prior_at(p, 1e-4);
        let m = AssignmentMatrix {
            columns: vec![vec![Some(0), None], vec![Some(0), Some(0)]],
        };
        assert_eq!(resolve_shared(&m, &[t.clone(), t.clone()], &features, &cams), m);

        // three targets: two share, one distinct
        let m3 = AssignmentMatrix {
            columns: vec![vec![Some(0), Some(0)], vec![Some(0), None], vec![Some(0), Some(0)]],
        };
        let r = resolve_shared(&m3, &[t.clone(), t.clone(), t], &features, &cams);
        assert_eq!(r.columns[1], vec![Some(0), None]);
        assert_eq!(r.columns[0], vec![Some(0), Some(0)]);
        assert_eq!(r.columns[2], vec![None, None]);
    }

    #[test]
    fn cull_fresh_and_infinite_threshold() {
        let gate = GateConfig::default();
        let fresh = prior_at(Vector3::zeros(), gate.sigma_birth.powi(2));
        let (kept, removed) = cull_targets(vec![fresh.clone()], &gate);
        assert_eq!((kept.len(), removed.len()), (1, 0));

        let inf = GateConfig {
            death_covariance_threshold: f64::INFINITY,
            ..gate
        };
        let pm = ProcessModel::with_defaults(0.01);
        let mut t = fresh;
        for _ in 0..1000 {
            t = predict(&t, &pm);
        }
        assert!(cull_targets(vec![t], &inf).1.is_empty());
    }

    #[test]
    fn death_frame_matches_closed_form() {
        let gate = GateConfig::default();
        let dt = 1.0 / 60.0;
        let pm = ProcessModel::with_defaults(dt);
        let p0 = gate.sigma_birth.powi(2);
        let v0 = gate.sigma_vbirth.powi(2);
        let (qp, qv) = (ProcessModel::DEFAULT_Q_POSITION, ProcessModel::DEFAULT_Q_VELOCITY);
        // position variance after k predictions from a diagonal start
        let var = |k: f64| {
            p0 + (k * dt).powi(2) * v0 + k * qp + qv * dt * dt * (k - 1.0) * k * (2.0 * k - 1.0) / 6.0
        };
        let expected = (1..).find(|&k| var(k as f64) > gate.death_covariance_threshold).unwrap();

        let mut t = prior_at(Vector3::zeros(), p0);
        let mut k = 0;
        loop {
            t = predict(&t, &pm);
            k += 1;
            let (_, removed) = cull_targets(vec![t.clone()], &gate);
            if !removed.is_empty() {
                break;
            }
        }
        assert_eq!(k, expected);
    }

    #[test]
    fn config_validation() {
        assert!(GateConfig::default().validate().is_ok());
        let bad = GateConfig {
            min_birth_cameras: 1,
            ..GateConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
