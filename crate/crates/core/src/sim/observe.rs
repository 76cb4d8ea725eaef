use std::ops::Range;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

use super::{RigSpec, TruthTrajectory};
use crate::features::{Feature, Frame};
use crate::geometry::{CameraModel, Pixel};
use crate::netproto::{AssembledFrame, FramePacket};
use crate::tracker::TargetId;

/// Peak brightness above background of a rendered target.
pub const RENDER_AMPLITUDE: f64 = 200.0;
/// Standard deviation of a rendered target's Gaussian profile, px.
pub const RENDER_SIGMA: f64 = 1.5;

/// Restrict which cameras see targets during a frame range.
#[derive(Debug, Clone, PartialEq)]
pub struct Occlusion {
    pub frames: Range<u64>,
    /// cameras that still see the affected targets
    pub visible_cameras: Vec<usize>,
    /// affected targets; `None` means all of them
    pub targets: Option<Vec<TargetId>>,
}

impl Occlusion {
    fn hides(&self, frame: u64, cam: usize, target: TargetId) -> bool {
        self.frames.contains(&frame)
            && !self.visible_cameras.contains(&cam)
            && self.targets.as_ref().is_none_or(|t| t.contains(&target))
    }
}

/// Everything the cameras report for one trigger.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthFrame {
    pub frame: u64,
    pub timestamp_us: u64,
    /// per camera, in shuffled order
    pub features: Vec<Vec<Feature>>,
    /// per camera, the target behind each feature; `None` for clutter
    pub origins: Vec<Vec<Option<TargetId>>>,
}

impl SynthFrame {
    pub fn packets(&self, cams: &[CameraModel]) -> Vec<FramePacket> {
        cams.iter()
            .zip(&self.features)
            .map(|(c, f)| FramePacket::new(c.id(), self.frame, self.timestamp_us, f))
            .collect()
    }

    /// The frame as a complete assembly, skipping the network path.
    pub fn assembled(&self) -> AssembledFrame {
        AssembledFrame {
            frame: self.frame,
            trigger_timestamp_us: self.timestamp_us,
            views: self.features.iter().cloned().map(Some).collect(),
            complete: true,
            assembly_latency: 0.0,
        }
    }
}

/// Project the truth into every camera over frames `0..n_frames`.
///
/// A visible target is detected with the spec's probability and its pixel
/// gets Gaussian noise; clutter is a Poisson count per camera of uniformly
/// placed blobs. Each camera's list is shuffled. Runs are reproducible from
/// `spec.seed`.
pub fn synthesize_observations(
    truth: &[TruthTrajectory],
    cams: &[CameraModel],
    spec: &RigSpec,
    occlusions: &[Occlusion],
    n_frames: u64,
) -> Vec<SynthFrame> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x6f62_7365);
    let axis_sigma = spec.pixel_noise / std::f64::consts::SQRT_2;
    let noise = Normal::new(0.0, axis_sigma.max(0.0)).expect("finite noise");
    let clutter = (spec.clutter_rate > 0.0)
        .then(|| Poisson::new(spec.clutter_rate).expect("finite clutter rate"));
    let (w, h) = spec.image_size;

    (0..n_frames)
        .map(|frame| {
            let mut features = Vec::with_capacity(cams.len());
            let mut origins = Vec::with_capacity(cams.len());
            for (ci, cam) in cams.iter().enumerate() {
                let mut list: Vec<(Feature, Option<TargetId>)> = Vec::new();
                for t in truth {
                    let Some((p, _)) = t.at(frame) else { continue };
                    if occlusions.iter().any(|o| o.hides(frame, ci, t.id)) {
                        continue;
                    }
                    let Ok(ideal) = cam.project(&p) else { continue };
                    let px = cam.apply_distortion(&ideal);
                    if !cam.contains(&px) || rng.random::<f64>() >= spec.detection_probability {
                        continue;
                    }
                    let (du, dv) = if axis_sigma > 0.0 {
                        (noise.sample(&mut rng), noise.sample(&mut rng))
                    } else {
                        (0.0, 0.0)
                    };
                    let raw = Pixel::new(px.x + du, px.y + dv);
                    if !cam.contains(&raw) {
                        continue;
                    }
                    list.push((
                        Feature {
                            u: ideal.x + du,
                            v: ideal.y + dv,
                            u_raw: raw.x,
                            v_raw: raw.y,
                            area: rng.random_range(12..=20) as f64,
                            peak: RENDER_AMPLITUDE,
                            orientation: rng.random_range(0.0..std::f64::consts::PI),
                            eccentricity: rng.random_range(1.0..1.3),
                        },
                        Some(t.id),
                    ));
                }
                let n_clutter = clutter.map_or(0, |c| c.sample(&mut rng) as usize);
                for _ in 0..n_clutter {
                    let raw = Pixel::new(
                        rng.random_range(0.0..w as f64),
                        rng.random_range(0.0..h as f64),
                    );
                    let ideal = cam.correct_distortion(&raw).unwrap_or(raw);
                    list.push((
                        Feature {
                            u: ideal.x,
                            v: ideal.y,
                            u_raw: raw.x,
                            v_raw: raw.y,
                            area: rng.random_range(2..=30) as f64,
                            peak: rng.random_range(20.0..RENDER_AMPLITUDE),
                            orientation: rng.random_range(0.0..std::f64::consts::PI),
                            eccentricity: rng.random_range(1.0..3.0),
                        },
                        None,
                    ));
                }
                list.shuffle(&mut rng);
                let (f, o) = list.into_iter().unzip();
                features.push(f);
                origins.push(o);
            }
            SynthFrame {
                frame,
                timestamp_us: (frame as f64 * 1e6 / spec.fps).round() as u64,
                features,
                origins,
            }
        })
        .collect()
}

/// Draw each camera's features as Gaussian spots on a flat background.
///
/// Targets get the fixed rendering amplitude; clutter uses its own peak.
pub fn render_frames(synth: &SynthFrame, cams: &[CameraModel], background: u8) -> Vec<Frame> {
    cams.iter()
        .zip(&synth.features)
        .zip(&synth.origins)
        .map(|((cam, feats), origins)| {
            let (w, h) = cam.image_size();
            let mut acc = vec![background as f64; (w * h) as usize];
            let reach = (5.0 * RENDER_SIGMA).ceil() as i64;
            for (f, o) in feats.iter().zip(origins) {
                let amp = if o.is_some() { RENDER_AMPLITUDE } else { f.peak };
                let (cu, cv) = (f.u_raw.floor() as i64, f.v_raw.floor() as i64);
                for y in (cv - reach).max(0)..=(cv + reach).min(h as i64 - 1) {
                    for x in (cu - reach).max(0)..=(cu + reach).min(w as i64 - 1) {
                        let d2 = (x as f64 - f.u_raw).powi(2) + (y as f64 - f.v_raw).powi(2);
                        acc[y as usize * w as usize + x as usize] +=
                            amp * (-d2 / (2.0 * RENDER_SIGMA * RENDER_SIGMA)).exp();
                    }
                }
            }
            let pixels = acc.iter().map(|v| v.round().clamp(0.0, 255.0) as u8).collect();
            Frame::new(
                cam.id(),
                synth.frame,
                synth.timestamp_us as f64 * 1e-6,
                w,
                h,
                pixels,
            )
            .expect("buffer matches the image size")
        })
        .collect()
}
