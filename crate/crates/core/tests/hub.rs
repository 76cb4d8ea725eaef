use std::sync::mpsc::sync_channel;

use mvtrack::hub::{assemble_offline, run, run_realtime, Event, FrameOutput, Sink, TrackerConfig, TrackerWorld};
use mvtrack::netproto::{AssembledFrame, FramePacket};
use mvtrack::sim::{generate_rig, simulate_truth, synthesize_observations, RigSpec, SynthFrame};
use mvtrack::tracker::{read_trajectory, TrajectoryWriter};
use proptest::prelude::*;

fn scene(seed: u64, frames: u64) -> (RigSpec, Vec<mvtrack::geometry::CameraModel>, Vec<SynthFrame>) {
    let spec = RigSpec {
        clutter_rate: 0.5,
        detection_probability: 0.9,
        seed,
        ..RigSpec::smalltunnel()
    };
    let cams = generate_rig(&spec).unwrap();
    let truth = simulate_truth(&spec, 3, frames as usize, 0.5);
    let synth = synthesize_observations(&truth, &cams, &spec, &[], frames);
    (spec, cams, synth)
}

fn config(spec: &RigSpec, threads: usize) -> TrackerConfig {
    TrackerConfig {
        dt: spec.dt(),
        threads,
        ..TrackerConfig::default()
    }
}

fn packets(cams: &[mvtrack::geometry::CameraModel], synth: &[SynthFrame]) -> Vec<FramePacket> {
    synth.iter().flat_map(|f| f.packets(cams)).collect()
}

/// Trajectory CSV text for a frame source.
fn trajectory_text(world: &mut TrackerWorld, frames: Vec<AssembledFrame>) -> Vec<u8> {
    let mut w = TrajectoryWriter::new(Vec::new()).unwrap();
    let mut sink = Sink {
        trajectory: &mut w,
        assignments: None,
    };
    run(world, frames, &mut sink).unwrap();
    w.into_inner()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn thread_count_does_not_change_results(seed in any::<u64>(), threads in 2usize..6) {
        let (spec, cams, synth) = scene(seed, 150);
        let frames: Vec<AssembledFrame> = synth.iter().map(SynthFrame::assembled).collect();
        let mut a = TrackerWorld::new(cams.clone(), &config(&spec, 1)).unwrap();
        let mut b = TrackerWorld::new(cams, &config(&spec, threads)).unwrap();
        prop_assert_eq!(trajectory_text(&mut a, frames.clone()), trajectory_text(&mut b, frames));
    }
}

#[test]
fn offline_and_realtime_paths_agree() {
    let (spec, cams, synth) = scene(11, 200);
    let ids: Vec<&str> = cams.iter().map(|c| c.id()).collect();
    let (frames, stats) = assemble_offline(packets(&cams, &synth), &ids);
    assert_eq!(stats.complete, 200);
    let mut offline = TrackerWorld::new(cams.clone(), &config(&spec, 1)).unwrap();
    let expected = trajectory_text(&mut offline, frames);

    let (tx, rx) = sync_channel(64);
    let all = packets(&cams, &synth);
    let producer = std::thread::spawn(move || {
        for p in all {
            tx.send(p).unwrap();
        }
    });
    let mut live = TrackerWorld::new(cams, &config(&spec, 1)).unwrap();
    let mut w = TrajectoryWriter::new(Vec::new()).unwrap();
    let mut sink = Sink {
        trajectory: &mut w,
        assignments: None,
    };
    // a generous budget so no frame is released early on a slow machine
    let stats = run_realtime(&mut live, &rx, 30.0, &mut sink).unwrap();
    producer.join().unwrap();
    assert_eq!(stats.assembly.unwrap().complete, 200);
    assert_eq!(w.into_inner(), expected);
}

#[test]
fn skipped_frame_numbers_are_tracked_as_empty_frames() {
    let (spec, cams, synth) = scene(3, 40);
    let mut world = TrackerWorld::new(cams, &config(&spec, 1)).unwrap();
    let mut outputs: Vec<FrameOutput> = Vec::new();
    for f in synth.iter().filter(|f| !(20..25).contains(&f.frame)) {
        outputs.extend(world.process_frame(&f.assembled()).unwrap());
    }
    let numbers: Vec<u64> = outputs.iter().map(|o| o.frame).collect();
    assert_eq!(numbers, (0..40).collect::<Vec<_>>());
    assert_eq!(world.stats().gap_frames, 5);
    for o in &outputs[20..25] {
        assert!(o.assignments.columns.iter().flatten().all(Option::is_none));
        assert!(o.events.iter().all(|e| matches!(e, Event::Death { .. })));
    }
    let late = world.process_frame(&synth[10].assembled());
    assert!(late.is_err());
}

#[test]
fn sink_writes_rows_and_assignment_dump() {
    let (spec, cams, synth) = scene(4, 30);
    let mut world = TrackerWorld::new(cams, &config(&spec, 1)).unwrap();
    let mut w = TrajectoryWriter::new(Vec::new()).unwrap();
    let mut dump = Vec::new();
    let mut sink = Sink {
        trajectory: &mut w,
        assignments: Some(&mut dump),
    };
    let stats = run(&mut world, synth.iter().map(SynthFrame::assembled), &mut sink).unwrap();
    let rows = read_trajectory(w.into_inner().as_slice()).unwrap();
    let live: usize = world.targets().len();
    assert!(live >= 1);
    assert!(rows.iter().filter(|r| r.frame == 29).count() == live);
    let lines: Vec<serde_json::Value> = String::from_utf8(dump)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 30);
    assert_eq!(lines[0]["frame"], 0);
    assert!(lines[0]["events"].as_array().unwrap().iter().any(|e| e["event"] == "birth"));
    assert_eq!(stats.world.frames, 30);
    assert!(stats.latency_p50 <= stats.latency_p99);
}

#[test]
fn config_text_round_trips() {
    let mut c = TrackerConfig::default();
    c.dt = 1.0 / 60.0;
    c.gate.min_birth_cameras = 3;
    c.gate.dist2d_threshold = 22.5;
    c.threads = 4;
    let back = TrackerConfig::parse(&c.to_text()).unwrap();
    assert_eq!(back, c);
    let parsed = TrackerConfig::parse("# comment\nfps = 50\n\nmahalanobis_gate = 4 # trailing\n").unwrap();
    assert!((parsed.dt - 0.02).abs() < 1e-15);
    assert_eq!(parsed.gate.mahalanobis_gate, 4.0);
    assert!(TrackerConfig::parse("bogus = 1").is_err());
    assert!(TrackerConfig::parse("dist2d_threshold = -1").is_err());
}
