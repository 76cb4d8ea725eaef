//! The per-frame tracking loop.
//!
//! Each assembled frame runs, in order: predict every target, assign
//! features, resolve shared assignments, update, spawn new targets from the
//! features nobody claimed, and cull targets whose position uncertainty has
//! grown too large.

mod config;
mod realtime;

pub use config::{ConfigError, TrackerConfig};
pub use realtime::{assemble_offline, run_realtime};

use std::io::Write;
use std::time::Instant;

use nalgebra::{Matrix2, Vector3};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::association::{
    assign_target, cull_targets, feature_likelihood, resolve_shared, spawn_targets, AssignmentMatrix, GateConfig,
};
use crate::features::Feature;
use crate::geometry::{CameraModel, Pixel};
use crate::netproto::{AssembledFrame, AssemblerStats};
use crate::tracker::{
    predict, update, ObservationModel, ProcessModel, TargetId, TargetState, TrajectoryWriter,
};

#[derive(Error, Debug)]
pub enum HubError {
    #[error("frame {got} arrived after frame {last}")]
    OutOfOrder { last: u64, got: u64 },
    #[error("frame has {got} camera views, the rig has {expected}")]
    CameraCount { expected: usize, got: usize },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("could not start worker threads: {0}")]
    ThreadPool(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "event", rename_all = "lowercase")]
pub enum Event {
    Birth {
        frame: u64,
        id: TargetId,
        position: [f64; 3],
        cameras: usize,
    },
    Death {
        frame: u64,
        id: TargetId,
    },
}

/// Result of processing one frame.
#[derive(Debug, Clone)]
pub struct FrameOutput {
    pub frame: u64,
    /// live targets after the frame, ordered by id
    pub targets: Vec<TargetState>,
    /// assignment of the pre-existing targets after shared-feature
    /// resolution, in the same order as `target_ids`
    pub assignments: AssignmentMatrix,
    pub target_ids: Vec<TargetId>,
    pub events: Vec<Event>,
    /// seconds of processing
    pub latency: f64,
}

/// Accumulated counters for a run.
#[derive(Debug, Clone, Default, Serialize)]
pub struct WorldStats {
    pub frames: u64,
    pub gap_frames: u64,
    pub births: u64,
    pub deaths: u64,
    pub failed_updates: u64,
    /// per processed frame, seconds
    #[serde(skip)]
    pub latencies: Vec<f64>,
}

/// Everything the tracker knows between frames.
pub struct TrackerWorld {
    targets: Vec<TargetState>,
    next_id: TargetId,
    process: ProcessModel,
    observation: ObservationModel,
    gate: GateConfig,
    last_frame: Option<u64>,
    stats: WorldStats,
    pool: Option<rayon::ThreadPool>,
}

impl TrackerWorld {
    pub fn new(cameras: Vec<CameraModel>, config: &TrackerConfig) -> Result<Self, HubError> {
        let pool = if config.threads > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(config.threads)
                    .build()
                    .map_err(|e| HubError::ThreadPool(e.to_string()))?,
            )
        } else {
            None
        };
        Ok(Self {
            targets: Vec::new(),
            next_id: 0,
            process: config.process_model(),
            observation: ObservationModel::new(cameras)
                .with_r(Matrix2::identity() * config.r_pixel),
            gate: config.gate.clone(),
            last_frame: None,
            stats: WorldStats::default(),
            pool,
        })
    }

    pub fn targets(&self) -> &[TargetState] {
        &self.targets
    }

    pub fn cameras(&self) -> &[CameraModel] {
        &self.observation.cameras
    }

    pub fn stats(&self) -> &WorldStats {
        &self.stats
    }

    pub fn last_frame(&self) -> Option<u64> {
        self.last_frame
    }

    /// Map over targets, on the worker pool when there is one. Output order
    /// always matches input order.
    fn map_targets<T, F>(&self, items: &[TargetState], f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(&TargetState) -> T + Sync + Send,
    {
        match &self.pool {
            Some(pool) if items.len() > 1 => pool.install(|| items.par_iter().map(&f).collect()),
            _ => items.iter().map(f).collect(),
        }
    }

    /// Process `frame`, first running any skipped frame numbers as frames
    /// with every camera missing. Returns one output per processed frame.
    pub fn process_frame(&mut self, frame: &AssembledFrame) -> Result<Vec<FrameOutput>, HubError> {
        let n = self.observation.cameras.len();
        if frame.views.len() != n {
            return Err(HubError::CameraCount {
                expected: n,
                got: frame.views.len(),
            });
        }
        let mut out = Vec::new();
        if let Some(last) = self.last_frame {
            if frame.frame <= last {
                return Err(HubError::OutOfOrder {
                    last,
                    got: frame.frame,
                });
            }
            for gap in last + 1..frame.frame {
                self.stats.gap_frames += 1;
                let empty = vec![Vec::new(); n];
                out.push(self.step(gap, &empty));
            }
        }
        out.push(self.step(frame.frame, &frame.feature_lists()));
        Ok(out)
    }

    fn step(&mut self, frame: u64, features: &[Vec<Feature>]) -> FrameOutput {
        let start = Instant::now();
        let cams = &self.observation.cameras;
        let gate = &self.gate;
        let process = &self.process;

        let priors = self.map_targets(&self.targets, |t| predict(t, process));
        let columns = self.map_targets(&priors, |t| assign_target(features, cams, t, gate));
        let resolved = resolve_shared(&AssignmentMatrix { columns }, &priors, features, cams);

        let om = &self.observation;
        let indexed: Vec<(usize, &TargetState)> = priors.iter().enumerate().collect();
        let update_one = |&(k, prior): &(usize, &TargetState)| {
            let obs: Vec<(usize, Pixel)> = resolved.columns[k]
                .iter()
                .enumerate()
                .filter_map(|(c, e)| e.map(|j| (c, features[c][j].pixel())))
                .collect();
            match update(prior, &obs, om) {
                Ok(post) => (post, false),
                Err(e) => {
                    tracing::warn!("frame {frame}: target {} update skipped: {e}", prior.id);
                    let mut post = prior.clone();
                    post.frames_since_observation += 1;
                    (post, true)
                }
            }
        };
        let updated: Vec<(TargetState, bool)> = match &self.pool {
            Some(pool) if indexed.len() > 1 => {
                pool.install(|| indexed.par_iter().map(update_one).collect())
            }
            _ => indexed.iter().map(update_one).collect(),
        };
        let failed = updated.iter().filter(|(_, f)| *f).count() as u64;
        let posteriors: Vec<TargetState> = updated.into_iter().map(|(t, _)| t).collect();

        // a feature inside any existing target's gate is not a birth
        // candidate, so a target seen twice in one camera is not duplicated
        let claimed = resolved.claimed(features);
        let unclaimed: Vec<Vec<usize>> = claimed
            .iter()
            .enumerate()
            .map(|(c, taken)| {
                (0..taken.len())
                    .filter(|&j| !taken[j])
                    .filter(|&j| {
                        !priors
                            .iter()
                            .any(|p| feature_likelihood(&features[c][j], p, &cams[c], gate) > 0.0)
                    })
                    .collect()
            })
            .collect();
        let spawned = spawn_targets(features, &unclaimed, cams, gate, frame, self.next_id);

        // only targets that existed before this frame are culled
        let (kept, removed) = cull_targets(posteriors, gate);
        let births = spawned.len() as u64;
        let target_ids: Vec<TargetId> = priors.iter().map(|t| t.id).collect();

        let mut events = Vec::new();
        for t in &removed {
            events.push(Event::Death { frame, id: t.id });
        }
        let mut targets = kept;
        for s in spawned {
            let p: Vector3<f64> = s.state.position();
            events.push(Event::Birth {
                frame,
                id: s.state.id,
                position: [p.x, p.y, p.z],
                cameras: s.support.len(),
            });
            self.next_id = s.state.id + 1;
            targets.push(s.state);
        }

        self.stats.frames += 1;
        self.stats.failed_updates += failed;
        self.stats.deaths += removed.len() as u64;
        self.stats.births += births;
        self.targets = targets.clone();
        self.last_frame = Some(frame);
        let latency = start.elapsed().as_secs_f64();
        self.stats.latencies.push(latency);

        FrameOutput {
            frame,
            targets,
            assignments: resolved,
            target_ids,
            events,
            latency,
        }
    }
}

/// Summary of a run, written as the JSON stats report.
#[derive(Debug, Clone, Serialize)]
pub struct RunStats {
    #[serde(flatten)]
    pub world: WorldStats,
    pub live_targets: Vec<TargetId>,
    pub latency_p50: f64,
    pub latency_p90: f64,
    pub latency_p99: f64,
    pub latency_max: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub assembly: Option<AssemblerStats>,
}

/// Nearest-rank percentile of `samples`, `q` in `[0, 1]`.
pub fn percentile(samples: &[f64], q: f64) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let rank = ((q * s.len() as f64).ceil() as usize).clamp(1, s.len());
    s[rank - 1]
}

impl RunStats {
    pub fn from_world(world: &TrackerWorld, assembly: Option<AssemblerStats>) -> Self {
        let l = &world.stats.latencies;
        Self {
            world: world.stats.clone(),
            live_targets: world.targets.iter().map(|t| t.id).collect(),
            latency_p50: percentile(l, 0.5),
            latency_p90: percentile(l, 0.9),
            latency_p99: percentile(l, 0.99),
            latency_max: l.iter().copied().fold(0.0, f64::max),
            assembly,
        }
    }
}

#[derive(Serialize)]
struct AssignmentDump<'a> {
    frame: u64,
    targets: Vec<DumpColumn<'a>>,
    events: &'a [Event],
}

#[derive(Serialize)]
struct DumpColumn<'a> {
    id: TargetId,
    features: &'a [Option<usize>],
}

/// Where per-frame results go.
pub struct Sink<'a, W: Write> {
    pub trajectory: &'a mut TrajectoryWriter<W>,
    pub assignments: Option<&'a mut dyn Write>,
}

impl<W: Write> Sink<'_, W> {
    /// Write the frame's rows and flush so they are visible before the
    /// next frame is processed.
    pub fn emit(&mut self, out: &FrameOutput) -> std::io::Result<()> {
        for t in &out.targets {
            self.trajectory.write(out.frame, t)?;
        }
        self.trajectory.flush()?;
        if let Some(w) = self.assignments.as_mut() {
            let dump = AssignmentDump {
                frame: out.frame,
                targets: out
                    .target_ids
                    .iter()
                    .zip(&out.assignments.columns)
                    .map(|(&id, c)| DumpColumn { id, features: c })
                    .collect(),
                events: &out.events,
            };
            serde_json::to_writer(&mut *w, &dump).map_err(std::io::Error::other)?;
            w.write_all(b"\n")?;
            w.flush()?;
        }
        Ok(())
    }
}

/// Drive the world over a frame source, writing results as they appear.
pub fn run<I, W>(world: &mut TrackerWorld, source: I, sink: &mut Sink<'_, W>) -> Result<RunStats, HubError>
where
    I: IntoIterator<Item = AssembledFrame>,
    W: Write,
{
    for frame in source {
        for out in world.process_frame(&frame)? {
            sink.emit(&out)?;
        }
    }
    Ok(RunStats::from_world(world, None))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tracker::TRAJECTORY_HEADER;

    fn rig() -> Vec<CameraModel> {
        (0..4)
            .map(|i| {
                let a = i as f64 * std::f64::consts::FRAC_PI_2;
                let eye = Vector3::new(2.0 * a.cos(), 2.0 * a.sin(), 0.8);
                CameraModel::look_at(format!("c{i}"), (640, 480), 600.0, &eye, &Vector3::zeros())
                    .unwrap()
            })
            .collect()
    }

    fn frame_with(n: u64, cams: &[CameraModel], points: &[Vector3<f64>]) -> AssembledFrame {
        AssembledFrame {
            frame: n,
            trigger_timestamp_us: n * 10_000,
            views: cams
                .iter()
                .map(|c| {
                    Some(
                        points
                            .iter()
                            .map(|p| {
                                let px = c.project(p).unwrap();
                                Feature::from_wire([px.x, px.y, 9.0, 200.0, 0.0, 1.0])
                            })
                            .collect(),
                    )
                })
                .collect(),
            complete: true,
            assembly_latency: 0.0,
        }
    }

    #[test]
    fn cold_start_births_one_target() {
        let cams = rig();
        let mut w = TrackerWorld::new(cams.clone(), &TrackerConfig::default()).unwrap();
        let out = w.process_frame(&frame_with(1, &cams, &[Vector3::new(0.1, 0.0, 0.0)])).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(w.targets().len(), 1);
        assert!(matches!(out[0].events[..], [Event::Birth { id: 0, cameras: 4, .. }]));
    }

    #[test]
    fn empty_frame_keeps_prior() {
        let cams = rig();
        let mut w = TrackerWorld::new(cams.clone(), &TrackerConfig::default()).unwrap();
        w.process_frame(&frame_with(1, &cams, &[Vector3::zeros()])).unwrap();
        let before = w.targets()[0].clone();
        w.process_frame(&frame_with(2, &cams, &[])).unwrap();
        let expected = predict(&before, &TrackerConfig::default().process_model());
        let after = &w.targets()[0];
        assert_eq!(after.mean, expected.mean);
        assert_eq!(after.covariance, expected.covariance);
        assert_eq!(after.frames_since_observation, 1);
    }

    #[test]
    fn gaps_are_filled_and_order_enforced() {
        let cams = rig();
        let mut w = TrackerWorld::new(cams.clone(), &TrackerConfig::default()).unwrap();
        w.process_frame(&frame_with(1, &cams, &[Vector3::zeros()])).unwrap();
        let out = w.process_frame(&frame_with(4, &cams, &[Vector3::zeros()])).unwrap();
        let frames: Vec<u64> = out.iter().map(|o| o.frame).collect();
        assert_eq!(frames, [2, 3, 4]);
        assert_eq!(w.stats().gap_frames, 2);
        assert!(matches!(
            w.process_frame(&frame_with(4, &cams, &[])),
            Err(HubError::OutOfOrder { last: 4, got: 4 })
        ));
    }

    #[test]
    fn tracks_a_moving_point_and_writes_rows() {
        let cams = rig();
        let cfg = TrackerConfig::default();
        let mut w = TrackerWorld::new(cams.clone(), &cfg).unwrap();
        let v = Vector3::new(0.2, -0.1, 0.05);
        let frames: Vec<AssembledFrame> = (0..200)
            .map(|k| frame_with(k, &cams, &[v * (k as f64 * cfg.dt)]))
            .collect();
        let mut traj = TrajectoryWriter::new(Vec::new()).unwrap();
        let mut sink = Sink {
            trajectory: &mut traj,
            assignments: None,
        };
        let stats = run(&mut w, frames, &mut sink).unwrap();
        assert_eq!(stats.world.births, 1);
        assert_eq!(stats.world.deaths, 0);
        assert_eq!(stats.live_targets, vec![0]);
        let t = &w.targets()[0];
        assert!((t.position() - v * (199.0 * cfg.dt)).norm() < 1e-4);
        assert!((t.velocity() - v).norm() < 0.05);
        let text = String::from_utf8(traj.into_inner()).unwrap();
        assert_eq!(text.lines().next(), Some(TRAJECTORY_HEADER));
        assert_eq!(text.lines().count(), 201);
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let cams = rig();
        let pts = |k: u64| {
            let t = k as f64 * 0.01;
            vec![
                Vector3::new(0.3 * t, 0.1, 0.0),
                Vector3::new(-0.1, 0.2 * t, 0.1),
                Vector3::new(0.0, -0.2, 0.1 * t),
            ]
        };
        let run_with = |threads: usize| {
            let cfg = TrackerConfig {
                threads,
                ..TrackerConfig::default()
            };
            let mut w = TrackerWorld::new(cams.clone(), &cfg).unwrap();
            let mut traj = TrajectoryWriter::new(Vec::new()).unwrap();
            let mut sink = Sink {
                trajectory: &mut traj,
                assignments: None,
            };
            run(&mut w, (0..100).map(|k| frame_with(k, &cams, &pts(k))), &mut sink).unwrap();
            traj.into_inner()
        };
        assert_eq!(run_with(1), run_with(4));
    }

    #[test]
    fn percentiles() {
        let s: Vec<f64> = (1..=100).map(|v| v as f64).collect();
        assert_eq!(percentile(&s, 0.5), 50.0);
        assert_eq!(percentile(&s, 0.99), 99.0);
        assert_eq!(percentile(&[], 0.5), 0.0);
    }
}
