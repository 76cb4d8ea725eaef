use std::collections::{BTreeMap, HashMap, VecDeque};

use serde::Serialize;

use super::FramePacket;
use crate::features::Feature;

/// How many emitted frames are remembered to tell duplicates from late
/// packets.
const EMITTED_MEMORY: usize = 1024;

/// All cameras' features for one trigger.
#[derive(Debug, Clone, PartialEq)]
pub struct AssembledFrame {
    pub frame: u64,
    pub trigger_timestamp_us: u64,
    /// indexed like the assembler's camera list; `None` when a camera did
    /// not report
    pub views: Vec<Option<Vec<Feature>>>,
    pub complete: bool,
    /// seconds from the first packet of the frame to its emission
    pub assembly_latency: f64,
}

impl AssembledFrame {
    /// Frame with every camera missing.
    pub fn empty(frame: u64, n_cameras: usize) -> Self {
        Self {
            frame,
            trigger_timestamp_us: 0,
            views: vec![None; n_cameras],
            complete: false,
            assembly_latency: 0.0,
        }
    }

    /// Per-camera feature lists with missing cameras as empty lists.
    pub fn feature_lists(&self) -> Vec<Vec<Feature>> {
        self.views.iter().map(|v| v.clone().unwrap_or_default()).collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct AssemblerStats {
    pub complete: u64,
    pub partial: u64,
    /// packets for frames already emitted without that camera
    pub late: u64,
    /// packets for a (frame, camera) already received
    pub duplicate: u64,
    pub unknown_camera: u64,
}

struct Pending {
    views: Vec<Option<Vec<Feature>>>,
    received: usize,
    first_arrival: f64,
    trigger_timestamp_us: u64,
}

/// Groups per-camera packets into frames.
///
/// A frame is emitted as soon as every camera has reported it, or once
/// `wait_budget` seconds have passed since its first packet. Because each
/// camera's frame numbers never decrease, completing frame `F` also
/// releases every earlier pending frame as partial. Time is supplied by the
/// caller so the same logic runs against a wall clock or a simulated one.
pub struct Assembler {
    index: HashMap<String, usize>,
    n_cameras: usize,
    wait_budget: f64,
    pending: BTreeMap<u64, Pending>,
    last_emitted: Option<u64>,
    emitted: VecDeque<(u64, Vec<bool>)>,
    stats: AssemblerStats,
}

impl Assembler {
    pub const DEFAULT_WAIT_BUDGET: f64 = 0.005;

    pub fn new<S: AsRef<str>>(camera_ids: &[S], wait_budget: f64) -> Self {
        Self {
            index: camera_ids
                .iter()
                .enumerate()
                .map(|(i, id)| (id.as_ref().to_owned(), i))
                .collect(),
            n_cameras: camera_ids.len(),
            wait_budget,
            pending: BTreeMap::new(),
            last_emitted: None,
            emitted: VecDeque::new(),
            stats: AssemblerStats::default(),
        }
    }

    pub fn stats(&self) -> &AssemblerStats {
        &self.stats
    }

    pub fn n_cameras(&self) -> usize {
        self.n_cameras
    }

    pub fn pending_frames(&self) -> usize {
        self.pending.len()
    }

    /// Earliest time at which a pending frame will time out.
    pub fn next_deadline(&self) -> Option<f64> {
        self.pending
            .values()
            .map(|p| p.first_arrival + self.wait_budget)
            .min_by(f64::total_cmp)
    }

    /// Accept one packet received at time `now`, returning any frames that
    /// became ready.
    pub fn push(&mut self, packet: FramePacket, now: f64) -> Vec<AssembledFrame> {
        let mut out = self.poll(now);
        let Some(&cam) = self.index.get(&packet.camera_id) else {
            self.stats.unknown_camera += 1;
            return out;
        };
        let frame = packet.frame;
        if self.last_emitted.is_some_and(|last| frame <= last) {
            let seen = self
                .emitted
                .iter()
                .find(|(f, _)| *f == frame)
                .is_some_and(|(_, cams)| cams[cam]);
            if seen {
                self.stats.duplicate += 1;
            } else {
                self.stats.late += 1;
            }
            return out;
        }
        let n = self.n_cameras;
        let entry = self.pending.entry(frame).or_insert_with(|| Pending {
            views: vec![None; n],
            received: 0,
            first_arrival: now,
            trigger_timestamp_us: packet.timestamp_us,
        });
        if entry.views[cam].is_some() {
            self.stats.duplicate += 1;
            return out;
        }
        entry.views[cam] = Some(packet.to_features());
        entry.received += 1;
        if entry.received == n {
            self.release_through(frame, now, &mut out);
        }
        out
    }

    /// Emit frames whose wait budget has run out by `now`.
    pub fn poll(&mut self, now: f64) -> Vec<AssembledFrame> {
        let mut out = Vec::new();
        let expired = self
            .pending
            .iter()
            .filter(|(_, p)| now - p.first_arrival >= self.wait_budget)
            .map(|(&f, _)| f)
            .max();
        if let Some(f) = expired {
            self.release_through(f, now, &mut out);
        }
        out
    }

    /// Emit everything still pending, as at the end of a stream.
    pub fn flush(&mut self, now: f64) -> Vec<AssembledFrame> {
        let mut out = Vec::new();
        if let Some(&last) = self.pending.keys().next_back() {
            self.release_through(last, now, &mut out);
        }
        out
    }

    fn release_through(&mut self, frame: u64, now: f64, out: &mut Vec<AssembledFrame>) {
        while let Some(entry) = self.pending.first_entry() {
            if *entry.key() > frame {
                break;
            }
            let (f, p) = entry.remove_entry();
            let complete = p.received == self.n_cameras;
            if complete {
                self.stats.complete += 1;
            } else {
                self.stats.partial += 1;
            }
            self.emitted
                .push_back((f, p.views.iter().map(Option::is_some).collect()));
            if self.emitted.len() > EMITTED_MEMORY {
                self.emitted.pop_front();
            }
            self.last_emitted = Some(f);
            out.push(AssembledFrame {
                frame: f,
                trigger_timestamp_us: p.trigger_timestamp_us,
                views: p.views,
                complete,
                assembly_latency: now - p.first_arrival,
            });
        }
    }
}
