//! Synthetic scenes for exercising and scoring the tracker: camera rigs,
//! ground-truth flight paths, noisy and cluttered observations, rendered
//! frames, and evaluation.

mod evaluate;
mod kinematics;
mod observe;
mod truth;

pub use evaluate::{evaluate, EvalConfig, Report};
pub use kinematics::{kinematics, speed_histogram, write_histogram, HistogramBin, Kinematics};
pub use observe::{render_frames, synthesize_observations, Occlusion, SynthFrame};
pub use truth::{
    crossing_scenario, read_truth, simulate_truth, write_truth, TruthTrajectory,
};

use nalgebra::Vector3;
use thiserror::Error;

use crate::geometry::CameraModel;

#[derive(Error, Debug)]
pub enum SimError {
    #[error("infeasible rig: {0}")]
    InfeasibleSpec(String),
    #[error("unknown preset {0:?}")]
    UnknownPreset(String),
    #[error("trajectory covers frame {0}, which the truth does not")]
    FrameMismatch(u64),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad truth file: {0}")]
    Parse(String),
}

/// Flight volume, centered on the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Arena {
    /// full side lengths along x, y, z
    Box { size: Vector3<f64> },
    /// vertical axis along z
    Cylinder { diameter: f64, height: f64 },
}

impl Arena {
    pub fn half_diagonal(&self) -> f64 {
        match *self {
            Arena::Box { size } => 0.5 * size.norm(),
            Arena::Cylinder { diameter, height } => (0.25 * diameter * diameter + 0.25 * height * height).sqrt(),
        }
    }

    /// Points on the arena boundary used to size the field of view.
    pub fn hull_samples(&self) -> Vec<Vector3<f64>> {
        match *self {
            Arena::Box { size } => {
                let h = size * 0.5;
                (0..8)
                    .map(|i| {
                        Vector3::new(
                            if i & 1 == 0 { -h.x } else { h.x },
                            if i & 2 == 0 { -h.y } else { h.y },
                            if i & 4 == 0 { -h.z } else { h.z },
                        )
                    })
                    .collect()
            }
            Arena::Cylinder { diameter, height } => {
                let r = diameter / 2.0;
                (0..32)
                    .map(|i| {
                        let a = (i / 2) as f64 * std::f64::consts::TAU / 16.0;
                        let z = if i % 2 == 0 { -height / 2.0 } else { height / 2.0 };
                        Vector3::new(r * a.cos(), r * a.sin(), z)
                    })
                    .collect()
            }
        }
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        match *self {
            Arena::Box { size } => (0..3).all(|i| p[i].abs() <= size[i] / 2.0),
            Arena::Cylinder { diameter, height } => {
                p.xy().norm() <= diameter / 2.0 && p.z.abs() <= height / 2.0
            }
        }
    }

    /// Regular grid of interior points, `n` per axis of the bounding box.
    pub fn grid(&self, n: usize) -> Vec<Vector3<f64>> {
        let half = match *self {
            Arena::Box { size } => size * 0.5,
            Arena::Cylinder { diameter, height } => Vector3::new(diameter / 2.0, diameter / 2.0, height / 2.0),
        };
        let axis = |i: usize, h: f64| -h + 2.0 * h * i as f64 / (n - 1).max(1) as f64;
        let mut pts = Vec::new();
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let p = Vector3::new(axis(i, half.x), axis(j, half.y), axis(k, half.z));
                    if self.contains(&p) {
                        pts.push(p);
                    }
                }
            }
        }
        pts
    }

    /// Smallest horizontal half extent.
    pub fn horizontal_radius(&self) -> f64 {
        match *self {
            Arena::Box { size } => size.x.min(size.y) / 2.0,
            Arena::Cylinder { diameter, .. } => diameter / 2.0,
        }
    }
}

/// Rig and sensing conditions for a simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct RigSpec {
    pub name: String,
    pub n_cameras: usize,
    pub arena: Arena,
    pub fps: f64,
    /// RMS length of the 2D pixel error, px; each axis gets `σ/√2`
    pub pixel_noise: f64,
    /// mean false features per camera per frame
    pub clutter_rate: f64,
    /// chance that a visible target yields a feature in a camera
    pub detection_probability: f64,
    pub image_size: (u32, u32),
    pub seed: u64,
}

impl RigSpec {
    pub const PRESETS: [&'static str; 2] = ["smalltunnel", "bigcyl"];

    /// Five cameras around a 0.3 × 0.3 × 1.5 m tunnel at 100 fps.
    pub fn smalltunnel() -> Self {
        Self {
            name: "smalltunnel".into(),
            n_cameras: 5,
            arena: Arena::Box {
                size: Vector3::new(1.5, 0.3, 0.3),
            },
            fps: 100.0,
            pixel_noise: 0.5,
            clutter_rate: 0.0,
            detection_probability: 1.0,
            image_size: (640, 480),
            seed: 0,
        }
    }

    /// Eleven cameras around a 2 m diameter, 0.8 m high cylinder at 60 fps.
    pub fn bigcyl() -> Self {
        Self {
            name: "bigcyl".into(),
            n_cameras: 11,
            arena: Arena::Cylinder {
                diameter: 2.0,
                height: 0.8,
            },
            fps: 60.0,
            ..Self::smalltunnel()
        }
    }

    pub fn preset(name: &str) -> Result<Self, SimError> {
        match name {
            "smalltunnel" => Ok(Self::smalltunnel()),
            "bigcyl" => Ok(Self::bigcyl()),
            other => Err(SimError::UnknownPreset(other.to_owned())),
        }
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.fps
    }
}

/// Place cameras around the arena, all aimed at its center.
///
/// Cameras sit on a sphere of twice the arena's half diagonal, evenly spaced
/// in azimuth with alternating high and low elevation. Each focal length is
/// the largest that keeps the whole arena inside the image with a 10%
/// margin. Every point of an interior grid must then be seen by at least
/// two cameras.
pub fn generate_rig(spec: &RigSpec) -> Result<Vec<CameraModel>, SimError> {
    if spec.n_cameras < 2 {
        return Err(SimError::InfeasibleSpec(format!(
            "{} camera(s); triangulation needs at least 2",
            spec.n_cameras
        )));
    }
    let (w, h) = spec.image_size;
    let radius = 2.0 * spec.arena.half_diagonal();
    let hull = spec.arena.hull_samples();
    let center = Vector3::zeros();
    let mut cams = Vec::with_capacity(spec.n_cameras);
    for i in 0..spec.n_cameras {
        let az = std::f64::consts::TAU * (i as f64 + 0.25) / spec.n_cameras as f64;
        let el = if i % 2 == 0 { 40f64 } else { 15f64 }.to_radians();
        let eye = Vector3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin()) * radius;
        let id = format!("cam{i}");
        let unit = CameraModel::look_at(&id, spec.image_size, 1.0, &eye, &center)
            .map_err(|e| SimError::InfeasibleSpec(e.to_string()))?;
        let (mut max_x, mut max_y) = (0.0f64, 0.0f64);
        for p in &hull {
            let px = unit
                .project(p)
                .map_err(|_| SimError::InfeasibleSpec(format!("arena behind {id}")))?;
            max_x = max_x.max((px.x - w as f64 / 2.0).abs());
            max_y = max_y.max((px.y - h as f64 / 2.0).abs());
        }
        let focal = (0.45 * w as f64 / max_x).min(0.45 * h as f64 / max_y);
        cams.push(
            CameraModel::look_at(&id, spec.image_size, focal, &eye, &center)
                .map_err(|e| SimError::InfeasibleSpec(e.to_string()))?,
        );
    }
    check_coverage(&spec.arena, &cams)?;
    Ok(cams)
}

/// Every grid point of the arena must project into at least two images.
pub fn check_coverage(arena: &Arena, cams: &[CameraModel]) -> Result<(), SimError> {
    for p in arena.grid(7) {
        let seen = cams
            .iter()
            .filter(|c| c.project(&p).is_ok_and(|px| c.contains(&px)))
            .count();
        if seen < 2 {
            return Err(SimError::InfeasibleSpec(format!(
                "point {:?} is seen by {seen} camera(s)",
                p.as_slice()
            )));
        }
    }
    Ok(())
}
