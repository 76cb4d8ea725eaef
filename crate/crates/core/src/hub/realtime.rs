use std::io::Write;
use std::sync::mpsc::{Receiver, RecvTimeoutError};
use std::time::{Duration, Instant};

use super::{HubError, RunStats, Sink, TrackerWorld};
use crate::netproto::{AssembledFrame, Assembler, AssemblerStats, FramePacket};

/// Assemble a recorded packet sequence without any timeouts: a frame is
/// released when all cameras have reported it, when a later frame
/// completes, or at the end of the input.
pub fn assemble_offline<I, S>(packets: I, camera_ids: &[S]) -> (Vec<AssembledFrame>, AssemblerStats)
where
    I: IntoIterator<Item = FramePacket>,
    S: AsRef<str>,
{
    let mut asm = Assembler::new(camera_ids, f64::INFINITY);
    let mut frames = Vec::new();
    for p in packets {
        frames.extend(asm.push(p, 0.0));
    }
    frames.extend(asm.flush(0.0));
    (frames, asm.stats().clone())
}

/// Consume packets from a live queue, assembling frames against the wall
/// clock and tracking each one as soon as it is released. Returns when
/// every producer has disconnected.
pub fn run_realtime<W: Write>(
    world: &mut TrackerWorld,
    packets: &Receiver<FramePacket>,
    wait_budget: f64,
    sink: &mut Sink<'_, W>,
) -> Result<RunStats, HubError> {
    let ids: Vec<String> = world.cameras().iter().map(|c| c.id().to_owned()).collect();
    let mut asm = Assembler::new(&ids, wait_budget);
    let t0 = Instant::now();
    let now = || t0.elapsed().as_secs_f64();
    loop {
        let received = match asm.next_deadline() {
            Some(deadline) => {
                let wait = (deadline - now()).max(0.0);
                packets.recv_timeout(Duration::from_secs_f64(wait))
            }
            None => packets.recv().map_err(|_| RecvTimeoutError::Disconnected),
        };
        let (ready, done) = match received {
            Ok(p) => (asm.push(p, now()), false),
            Err(RecvTimeoutError::Timeout) => (asm.poll(now()), false),
            Err(RecvTimeoutError::Disconnected) => (asm.flush(now()), true),
        };
        for frame in ready {
            if world.last_frame().is_some_and(|last| frame.frame <= last) {
                continue;
            }
            for out in world.process_frame(&frame)? {
                sink.emit(&out)?;
            }
        }
        if done {
            break;
        }
    }
    Ok(RunStats::from_world(world, Some(asm.stats().clone())))
}
