use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, UnitSphere};

use super::{Arena, RigSpec, SimError};
use crate::tracker::TargetId;

/// Ground-truth path of one target.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthTrajectory {
    pub id: TargetId,
    /// frame of `positions[0]`
    pub start_frame: u64,
    pub positions: Vec<Vector3<f64>>,
    pub velocities: Vec<Vector3<f64>>,
}

impl TruthTrajectory {
    /// Constant-velocity path over `n_frames` frames.
    pub fn straight(
        id: TargetId,
        start_frame: u64,
        p0: Vector3<f64>,
        v: Vector3<f64>,
        n_frames: usize,
        dt: f64,
    ) -> Self {
        Self {
            id,
            start_frame,
            positions: (0..n_frames).map(|k| p0 + v * (k as f64 * dt)).collect(),
            velocities: vec![v; n_frames],
        }
    }

    /// One past the last frame.
    pub fn end_frame(&self) -> u64 {
        self.start_frame + self.positions.len() as u64
    }

    pub fn at(&self, frame: u64) -> Option<(Vector3<f64>, Vector3<f64>)> {
        let k = frame.checked_sub(self.start_frame)? as usize;
        Some((*self.positions.get(k)?, self.velocities[k]))
    }
}

/// Mirror a point that has left the arena back inside and flip the
/// velocity's outward component.
fn reflect(arena: &Arena, p: &mut Vector3<f64>, v: &mut Vector3<f64>) {
    let bounce = |x: &mut f64, vx: &mut f64, h: f64| {
        if *x > h {
            *x = 2.0 * h - *x;
            *vx = -vx.abs();
        } else if *x < -h {
            *x = -2.0 * h - *x;
            *vx = vx.abs();
        }
    };
    match *arena {
        Arena::Box { size } => {
            for i in 0..3 {
                let (mut x, mut vx) = (p[i], v[i]);
                bounce(&mut x, &mut vx, size[i] / 2.0);
                p[i] = x;
                v[i] = vx;
            }
        }
        Arena::Cylinder { diameter, height } => {
            let (mut z, mut vz) = (p.z, v.z);
            bounce(&mut z, &mut vz, height / 2.0);
            p.z = z;
            v.z = vz;
            let r = diameter / 2.0;
            let rho = p.xy().norm();
            if rho > r {
                let n = Vector3::new(p.x / rho, p.y / rho, 0.0);
                *p -= n * (2.0 * (rho - r));
                let vn = v.dot(&n);
                if vn > 0.0 {
                    *v -= n * (2.0 * vn);
                }
            }
        }
    }
}

/// Random constant-velocity flights with velocity noise of `maneuver_sigma`
/// m/s per frame per axis, reflected at the arena walls. Every target lives
/// for the whole run. Starting points lie in the inner 80% of the arena and
/// speeds are drawn from 0.1 to 0.4 m/s.
pub fn simulate_truth(
    spec: &RigSpec,
    n_targets: usize,
    n_frames: usize,
    maneuver_sigma: f64,
) -> Vec<TruthTrajectory> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x7472_7574);
    let dt = spec.dt();
    let noise = Normal::new(0.0, maneuver_sigma.max(0.0)).expect("finite sigma");
    (0..n_targets)
        .map(|id| {
            let mut p = loop {
                let hd = spec.arena.half_diagonal();
                let c = Vector3::from_fn(|_, _| rng.random_range(-hd..hd));
                if spec.arena.contains(&(c / 0.8)) {
                    break c;
                }
            };
            let dir: [f64; 3] = UnitSphere.sample(&mut rng);
            let mut v = Vector3::from(dir) * rng.random_range(0.1..0.4);
            let mut positions = Vec::with_capacity(n_frames);
            let mut velocities = Vec::with_capacity(n_frames);
            for k in 0..n_frames {
                if k > 0 {
                    p += v * dt;
                    if maneuver_sigma > 0.0 {
                        v += Vector3::from_fn(|_, _| noise.sample(&mut rng));
                    }
                    reflect(&spec.arena, &mut p, &mut v);
                }
                positions.push(p);
                velocities.push(v);
            }
            TruthTrajectory {
                id: id as TargetId,
                start_frame: 0,
                positions,
                velocities,
            }
        })
        .collect()
}

/// Three straight flights, 120° apart in heading, that all pass the arena
/// center at the middle frame at heights 0, +2.5 cm and −2.5 cm.
pub fn crossing_scenario(spec: &RigSpec, n_frames: usize) -> Vec<TruthTrajectory> {
    let dt = spec.dt();
    let half_time = (n_frames as f64 / 2.0) * dt;
    let speed = 0.8 * spec.arena.horizontal_radius() / half_time;
    let mid = n_frames / 2;
    [0.0, 0.025, -0.025]
        .iter()
        .enumerate()
        .map(|(i, &z)| {
            let heading = std::f64::consts::TAU * i as f64 / 3.0 + 0.3;
            let v = Vector3::new(heading.cos(), heading.sin(), 0.0) * speed;
            let p0 = Vector3::new(0.0, 0.0, z) - v * (mid as f64 * dt);
            TruthTrajectory::straight(i as TargetId, 0, p0, v, n_frames, dt)
        })
        .collect()
}

pub const TRUTH_HEADER: &str = "frame,target_id,x,y,z,vx,vy,vz";

/// Rows ordered by frame, then target id.
pub fn write_truth<W: Write>(mut w: W, truth: &[TruthTrajectory]) -> std::io::Result<()> {
    writeln!(w, "{TRUTH_HEADER}")?;
    let mut rows: Vec<(u64, TargetId, Vector3<f64>, Vector3<f64>)> = truth
        .iter()
        .flat_map(|t| {
            (0..t.positions.len())
                .map(move |k| (t.start_frame + k as u64, t.id, t.positions[k], t.velocities[k]))
        })
        .collect();
    rows.sort_by_key(|r| (r.0, r.1));
    for (f, id, p, v) in rows {
        writeln!(w, "{f},{id},{},{},{},{},{},{}", p.x, p.y, p.z, v.x, v.y, v.z)?;
    }
    Ok(())
}

pub fn read_truth<R: BufRead>(r: R) -> Result<Vec<TruthTrajectory>, SimError> {
    let mut by_id: BTreeMap<TargetId, Vec<(u64, Vector3<f64>, Vector3<f64>)>> = BTreeMap::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let bad = |m: &str| SimError::Parse(format!("line {}: {m}", i + 1));
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 8 {
            return Err(bad("expected 8 fields"));
        }
        let frame: u64 = f[0].parse().map_err(|_| bad("bad frame"))?;
        let id: TargetId = f[1].parse().map_err(|_| bad("bad target id"))?;
        let mut x = [0.0; 6];
        for k in 0..6 {
            x[k] = f[2 + k].parse().map_err(|_| bad("bad number"))?;
        }
        by_id.entry(id).or_default().push((
            frame,
            Vector3::new(x[0], x[1], x[2]),
            Vector3::new(x[3], x[4], x[5]),
        ));
    }
    by_id
        .into_iter()
        .map(|(id, mut rows)| {
            rows.sort_by_key(|r| r.0);
            let start = rows[0].0;
            if rows.iter().enumerate().any(|(k, r)| r.0 != start + k as u64) {
                return Err(SimError::Parse(format!("target {id} has a gap in its frames")));
            }
            Ok(TruthTrajectory {
                id,
                start_frame: start,
                positions: rows.iter().map(|r| r.1).collect(),
                velocities: rows.iter().map(|r| r.2).collect(),
            })
        })
        .collect()
}
