//! Oracles and scene builders shared by the integration tests.
#![allow(dead_code)]

use mvtrack::association::{feature_likelihood, GateConfig};
use mvtrack::features::{Feature, Frame};
use mvtrack::geometry::CameraModel;
use mvtrack::sim::{generate_rig, RigSpec};
use mvtrack::tracker::TargetState;
use nalgebra::{Matrix6, Vector3, Vector6};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Exhaustive joint assignment maximizing the product of likelihoods, with
/// each feature used at most once per camera and a miss weighted as a
/// feature sitting exactly on the Mahalanobis gate.
pub fn brute_force_assignment(
    features: &[Vec<Feature>],
    cams: &[CameraModel],
    targets: &[TargetState],
    gate: &GateConfig,
) -> Vec<Vec<Option<usize>>> {
    let miss = (-gate.mahalanobis_gate).exp();
    let n_cam = cams.len();
    let slots: Vec<(usize, usize)> = (0..targets.len())
        .flat_map(|t| (0..n_cam).map(move |c| (t, c)))
        .collect();
    let lik: Vec<Vec<Vec<f64>>> = targets
        .iter()
        .map(|t| {
            (0..n_cam)
                .map(|c| {
                    features[c]
                        .iter()
                        .map(|z| feature_likelihood(z, t, &cams[c], gate))
                        .collect()
                })
                .collect()
        })
        .collect();

    let mut best = (-1.0, vec![vec![None; n_cam]; targets.len()]);
    let mut current = vec![vec![None; n_cam]; targets.len()];
    fn recurse(
        k: usize,
        score: f64,
        slots: &[(usize, usize)],
        lik: &[Vec<Vec<f64>>],
        miss: f64,
        current: &mut Vec<Vec<Option<usize>>>,
        best: &mut (f64, Vec<Vec<Option<usize>>>),
    ) {
        if k == slots.len() {
            if score > best.0 {
                *best = (score, current.clone());
            }
            return;
        }
        let (t, c) = slots[k];
        current[t][c] = None;
        recurse(k + 1, score * miss, slots, lik, miss, current, best);
        for j in 0..lik[t][c].len() {
            let l = lik[t][c][j];
            let taken = (0..t).any(|o| current[o][c] == Some(j));
            if l > 0.0 && !taken {
                current[t][c] = Some(j);
                recurse(k + 1, score * l, slots, lik, miss, current, best);
                current[t][c] = None;
            }
        }
    }
    recurse(0, 1.0, &slots, &lik, miss, &mut current, &mut best);
    best.1
}

fn feature_at(u: f64, v: f64, area: f64) -> Feature {
    Feature::from_wire([u, v, area, 150.0, 0.0, 1.2])
}

/// A small association problem: up to two targets at least 0.3 m apart
/// whose projections are two 2D gates apart in every camera, three
/// cameras, at most three features per camera. Clutter stays 60 px
/// away from every projected target.
pub fn random_nnsf_instance(rng: &mut ChaCha8Rng) -> (Vec<CameraModel>, Vec<TargetState>, Vec<Vec<Feature>>) {
    let spec = RigSpec {
        n_cameras: 3,
        ..RigSpec::smalltunnel()
    };
    let cams = generate_rig(&spec).expect("three-camera rig");
    let n_targets = rng.random_range(1..=2);
    let mut positions: Vec<Vector3<f64>> = Vec::new();
    while positions.len() < n_targets {
        let p = Vector3::new(
            rng.random_range(-0.6..0.6),
            rng.random_range(-0.12..0.12),
            rng.random_range(-0.12..0.12),
        );
        let apart = |q: &Vector3<f64>| {
            (q - p).norm() >= 0.3
                && cams
                    .iter()
                    .all(|c| (c.project(q).unwrap() - c.project(&p).unwrap()).norm() >= 2.0 * GateConfig::default().dist2d_threshold)
        };
        if positions.iter().all(apart) {
            positions.push(p);
        }
    }
    let targets: Vec<TargetState> = positions
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let s = rng.random_range(1e-4..4e-4);
            let mut cov = Matrix6::identity() * 0.01;
            for k in 0..3 {
                cov[(k, k)] = s;
            }
            TargetState::new(i as u64, Vector6::new(p.x, p.y, p.z, 0.0, 0.0, 0.0), cov, 0)
        })
        .collect();

    let jitter = Normal::new(0.0, 0.01).unwrap();
    let features = cams
        .iter()
        .map(|cam| {
            let projected: Vec<_> = positions.iter().map(|p| cam.project(p).unwrap()).collect();
            let mut list = Vec::new();
            for p in &positions {
                if rng.random::<f64>() < 0.8 {
                    let q = p + Vector3::from_fn(|_, _| jitter.sample(rng));
                    let px = cam.project(&q).unwrap();
                    list.push(feature_at(px.x, px.y, rng.random_range(5.0..20.0)));
                }
            }
            let (w, h) = cam.image_size();
            while list.len() < 3 && rng.random::<f64>() < 0.6 {
                let u = rng.random_range(0.0..w as f64);
                let v = rng.random_range(0.0..h as f64);
                if projected.iter().all(|q| (q.x - u).hypot(q.y - v) > 60.0) {
                    list.push(feature_at(u, v, rng.random_range(0.5..20.0)));
                }
            }
            // shuffle so target features are not always first
            for i in (1..list.len()).rev() {
                list.swap(i, rng.random_range(0..=i));
            }
            list
        })
        .collect();
    (cams, targets, features)
}

/// Anisotropic Gaussian spot on a flat background of 20.
pub fn render_blob(size: u32, cx: f64, cy: f64, sx: f64, sy: f64, angle: f64, amp: f64) -> Frame {
    let (c, s) = (angle.cos(), angle.sin());
    let mut pixels = vec![20u8; (size * size) as usize];
    for y in 0..size {
        for x in 0..size {
            let (dx, dy) = (x as f64 - cx, y as f64 - cy);
            let (a, b) = (c * dx + s * dy, -s * dx + c * dy);
            let val = 20.0 + amp * (-0.5 * (a * a / (sx * sx) + b * b / (sy * sy))).exp();
            pixels[(y * size + x) as usize] = val.round().min(255.0) as u8;
        }
    }
    Frame::new("blob", 0, 0.0, size, size, pixels).unwrap()
}

/// Pixel-exact 90° rotation: `(x, y)` moves to `(n − 1 − y, x)`.
pub fn rotate90(f: &Frame) -> Frame {
    let n = f.width;
    assert_eq!(n, f.height);
    let mut out = vec![0u8; f.pixels.len()];
    for y in 0..n {
        for x in 0..n {
            let (nx, ny) = (n - 1 - y, x);
            out[(ny * n + nx) as usize] = f.pixels[(y * n + x) as usize];
        }
    }
    Frame::new(f.camera_id.clone(), f.frame_number, f.timestamp, n, n, out).unwrap()
}

/// Shift by whole pixels, filling with the top-left pixel's value.
pub fn translate(f: &Frame, dx: i64, dy: i64) -> Frame {
    let (w, h) = (f.width as i64, f.height as i64);
    let mut out = vec![f.pixels[0]; f.pixels.len()];
    for y in 0..h {
        for x in 0..w {
            let (sx, sy) = (x - dx, y - dy);
            if sx >= 0 && sy >= 0 && sx < w && sy < h {
                out[(y * w + x) as usize] = f.pixels[(sy * w + sx) as usize];
            }
        }
    }
    Frame::new(f.camera_id.clone(), f.frame_number, f.timestamp, f.width, f.height, out).unwrap()
}

/// Smallest difference between two orientations defined modulo π.
pub fn orientation_gap(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(std::f64::consts::PI);
    d.min(std::f64::consts::PI - d)
}

/// Independent `A P Aᵀ + Q` for a constant-velocity model.
pub fn cv_propagate(p: &Matrix6<f64>, dt: f64, q: &Matrix6<f64>) -> Matrix6<f64> {
    let mut a = Matrix6::identity();
    for i in 0..3 {
        a[(i, i + 3)] = dt;
    }
    a * p * a.transpose() + q
}
