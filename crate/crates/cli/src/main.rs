use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use mvtrack::features::pgm::{read_frame_dir, save_frame};
use mvtrack::features::stream::{read_records, write_record, FeatureRecord};
use mvtrack::features::{BackgroundModel, Extractor, Threshold};
use mvtrack::geometry::{
    dlt_calibrate, read_calibration, triangulate, write_calibration, CameraModel, Correspondence, Pixel,
};
use mvtrack::hub::{assemble_offline, run, run_realtime, RunStats, Sink, TrackerConfig, TrackerWorld};
use mvtrack::netproto::transport::{PacketSender, PacketServer};
use mvtrack::netproto::FramePacket;
use mvtrack::sim::{
    evaluate, generate_rig, read_truth, render_frames, simulate_truth, speed_histogram, synthesize_observations,
    write_histogram, write_truth, EvalConfig, RigSpec,
};
use mvtrack::tracker::{read_trajectory, TrajectoryWriter};
use nalgebra::Vector3;
use serde::Deserialize;

#[derive(Parser)]
#[command(name = "mvtrack", version, about = "Multi-camera 3D tracking of small moving targets")]
struct Cli {
    /// log filter, e.g. `info` or `mvtrack=debug`
    #[arg(long, global = true, default_value = "warn")]
    log: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic rig, ground truth and camera features
    Simulate(SimulateArgs),
    /// Run the tracker over a feature file or a live TCP feed
    Track(TrackArgs),
    /// Stream a feature file to a running tracker, one connection per camera
    Send(SendArgs),
    /// Detect features in a directory of PGM frames from one camera
    Extract(ExtractArgs),
    /// Estimate camera matrices from 3D/2D correspondences
    CalibrateDlt(CalibrateArgs),
    /// Reconstruct 3D points from per-camera pixels
    Triangulate(TriangulateArgs),
    /// Score a trajectory against ground truth
    Report(ReportArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value = "smalltunnel")]
    preset: String,
    #[arg(long, default_value_t = 3)]
    targets: usize,
    #[arg(long, default_value_t = 500)]
    frames: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
    /// 2D RMS pixel noise; the preset's value when omitted
    #[arg(long)]
    noise: Option<f64>,
    /// false features per camera and frame
    #[arg(long)]
    clutter: Option<f64>,
    #[arg(long)]
    detection: Option<f64>,
    /// standard deviation of the per-frame velocity change, m/s
    #[arg(long, default_value_t = 0.02)]
    maneuver: f64,
    /// also render PGM frames under `frames/<camera>/`
    #[arg(long)]
    pgm: bool,
}

#[derive(Args)]
struct TrackArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// JSON-lines feature file, or a port / address to listen on
    #[arg(long)]
    features: String,
    #[arg(long)]
    calibration: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    dump_assignments: Option<PathBuf>,
    /// end-of-run statistics as JSON; printed to stderr when omitted
    #[arg(long)]
    stats: Option<PathBuf>,
}

#[derive(Args)]
struct SendArgs {
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    to: SocketAddr,
    /// pace frames at this rate; as fast as possible when omitted
    #[arg(long)]
    fps: Option<f64>,
}

#[derive(Args)]
struct ExtractArgs {
    #[arg(long)]
    frames: PathBuf,
    #[arg(long)]
    camera: String,
    #[arg(long, default_value_t = 100.0)]
    fps: f64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 10)]
    max_features: usize,
    /// absolute difference from the background that marks a pixel
    #[arg(long, default_value_t = BackgroundModel::DEFAULT_THRESHOLD)]
    threshold: f64,
    /// flat background level; the first frame is used when omitted
    #[arg(long)]
    background: Option<f64>,
    /// correct centroids with this camera's distortion
    #[arg(long)]
    calibration: Option<PathBuf>,
}

#[derive(Args)]
struct CalibrateArgs {
    /// CSV with header `camera,x,y,z,u,v`
    #[arg(long)]
    points: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "640x480", value_parser = parse_size)]
    image_size: (u32, u32),
}

#[derive(Args)]
struct TriangulateArgs {
    #[arg(long)]
    calibration: PathBuf,
    /// CSV with header `point,camera,u,v`
    #[arg(long)]
    points: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    traj: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    /// JSON report; stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
    /// directory for the speed and turn-rate histogram CSVs
    #[arg(long)]
    hist_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 100.0)]
    fps: f64,
    /// matching radius, meters
    #[arg(long, default_value_t = 0.05)]
    radius: f64,
    /// `x,y,z` of the landmark for approach angles
    #[arg(long, value_parser = parse_point)]
    landmark: Option<Vector3<f64>>,
    /// also score matched estimates in pixels
    #[arg(long)]
    calibration: Option<PathBuf>,
    #[arg(long, default_value_t = 0.05)]
    speed_bin: f64,
    #[arg(long, default_value_t = 1.0)]
    speed_max: f64,
}

fn parse_size(s: &str) -> Result<(u32, u32), String> {
    let (w, h) = s.split_once('x').ok_or("expected WIDTHxHEIGHT")?;
    Ok((
        w.parse().map_err(|_| format!("bad width {w:?}"))?,
        h.parse().map_err(|_| format!("bad height {h:?}"))?,
    ))
}

fn parse_point(s: &str) -> Result<Vector3<f64>, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse().map_err(|_| format!("bad number {x:?}")))
        .collect::<Result<_, _>>()?;
    match v[..] {
        [x, y, z] => Ok(Vector3::new(x, y, z)),
        _ => Err("expected x,y,z".into()),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(
        File::open(path).with_context(|| format!("opening {}", path.display()))?,
    ))
}

fn load_cameras(path: &Path) -> Result<Vec<CameraModel>> {
    read_calibration(open(path)?).with_context(|| format!("reading {}", path.display()))
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let base = RigSpec::preset(&a.preset)?;
    let spec = RigSpec {
        seed: a.seed,
        pixel_noise: a.noise.unwrap_or(base.pixel_noise),
        clutter_rate: a.clutter.unwrap_or(base.clutter_rate),
        detection_probability: a.detection.unwrap_or(base.detection_probability),
        ..base
    };
    std::fs::create_dir_all(&a.out_dir)?;
    let cams = generate_rig(&spec)?;
    let truth = simulate_truth(&spec, a.targets, a.frames as usize, a.maneuver);
    let synth = synthesize_observations(&truth, &cams, &spec, &[], a.frames);

    write_calibration(create(&a.out_dir.join("calibration.cal"))?, &cams)?;
    write_truth(create(&a.out_dir.join("truth.csv"))?, &truth)?;
    let config = TrackerConfig {
        dt: spec.dt(),
        seed: spec.seed,
        ..TrackerConfig::default()
    };
    std::fs::write(a.out_dir.join("tracker.conf"), config.to_text())?;

    let mut out = create(&a.out_dir.join("features.jsonl"))?;
    for f in &synth {
        let t = f.timestamp_us as f64 * 1e-6;
        for (cam, feats) in cams.iter().zip(&f.features) {
            write_record(&mut out, &FeatureRecord::new(f.frame, cam.id(), t, feats))?;
        }
    }
    out.flush()?;

    if a.pgm {
        for cam in &cams {
            std::fs::create_dir_all(a.out_dir.join("frames").join(cam.id()))?;
        }
        for f in &synth {
            for frame in render_frames(f, &cams, 20) {
                let path = a
                    .out_dir
                    .join("frames")
                    .join(&frame.camera_id)
                    .join(format!("{:06}.pgm", f.frame));
                save_frame(&path, &frame)?;
            }
        }
    }
    tracing::info!(
        "wrote {} cameras, {} targets, {} frames to {}",
        cams.len(),
        truth.len(),
        a.frames,
        a.out_dir.display()
    );
    Ok(())
}

/// All packets of a JSON-lines feature file, in file order.
fn read_packets(path: &Path) -> Result<Vec<FramePacket>> {
    read_records(open(path)?)
        .map(|r| {
            let r = r?;
            Ok(FramePacket::new(r.cam.clone(), r.frame, (r.t * 1e6).round() as u64, &r.to_features()))
        })
        .collect()
}

fn listen_address(s: &str) -> Option<SocketAddr> {
    s.parse::<u16>()
        .ok()
        .map(|port| SocketAddr::from(([0, 0, 0, 0], port)))
        .or_else(|| s.parse().ok())
}

fn track(a: TrackArgs) -> Result<()> {
    let config = match &a.config {
        Some(p) => TrackerConfig::parse(&std::fs::read_to_string(p)?)
            .with_context(|| format!("reading {}", p.display()))?,
        None => TrackerConfig::default(),
    };
    let cams = load_cameras(&a.calibration)?;
    let ids: Vec<String> = cams.iter().map(|c| c.id().to_owned()).collect();
    let mut world = TrackerWorld::new(cams, &config)?;
    let mut writer = TrajectoryWriter::new(create(&a.out)?)?;
    let mut dump = a.dump_assignments.as_deref().map(create).transpose()?;
    let mut sink = Sink {
        trajectory: &mut writer,
        assignments: dump.as_mut().map(|d| d as &mut dyn Write),
    };

    let stats: RunStats = match listen_address(&a.features) {
        Some(addr) if !Path::new(&a.features).exists() => {
            let server = PacketServer::bind(addr, ids.len(), config.queue_capacity)?;
            tracing::info!("listening on {} for {} cameras", server.local_addr, ids.len());
            let stats = run_realtime(&mut world, &server.packets, config.wait_budget, &mut sink)?;
            server.join()?;
            stats
        }
        _ => {
            let (frames, asm) = assemble_offline(read_packets(Path::new(&a.features))?, &ids);
            let mut stats = run(&mut world, frames, &mut sink)?;
            stats.assembly = Some(asm);
            stats
        }
    };
    writer.flush()?;
    if let Some(d) = dump.as_mut() {
        d.flush()?;
    }
    let json = serde_json::to_string_pretty(&stats)?;
    match &a.stats {
        Some(p) => std::fs::write(p, json + "\n")?,
        None => eprintln!("{json}"),
    }
    Ok(())
}

fn send(a: SendArgs) -> Result<()> {
    let packets = read_packets(&a.features)?;
    let mut cams: Vec<String> = Vec::new();
    for p in &packets {
        if !cams.contains(&p.camera_id) {
            cams.push(p.camera_id.clone());
        }
    }
    let start = Instant::now();
    let threads: Vec<_> = cams
        .into_iter()
        .map(|cam| {
            let mine: Vec<FramePacket> = packets.iter().filter(|p| p.camera_id == cam).cloned().collect();
            let (to, fps) = (a.to, a.fps);
            std::thread::spawn(move || -> Result<()> {
                let mut s = PacketSender::connect(to).with_context(|| format!("connecting to {to}"))?;
                let first = mine.first().map_or(0, |p| p.frame);
                for p in &mine {
                    if let Some(fps) = fps {
                        let due = start + Duration::from_secs_f64((p.frame - first) as f64 / fps);
                        std::thread::sleep(due.saturating_duration_since(Instant::now()));
                    }
                    s.send(p)?;
                }
                Ok(())
            })
        })
        .collect();
    for t in threads {
        t.join().map_err(|_| anyhow::anyhow!("sender thread panicked"))??;
    }
    Ok(())
}

fn extract(a: ExtractArgs) -> Result<()> {
    let frames = read_frame_dir(&a.frames, &a.camera, a.fps)?;
    let Some(first) = frames.first() else {
        bail!("no PGM frames in {}", a.frames.display());
    };
    let mut model = match a.background {
        Some(level) => BackgroundModel::uniform(first.width, first.height, level),
        None => BackgroundModel::from_frame(first),
    };
    model.threshold = Threshold::Absolute(a.threshold);
    let mut extractor = Extractor::new(a.max_features);
    if let Some(cal) = &a.calibration {
        let cams = load_cameras(cal)?;
        let cam = cams
            .iter()
            .find(|c| c.id() == a.camera)
            .with_context(|| format!("camera {} not in {}", a.camera, cal.display()))?;
        extractor = extractor.with_distortion(*cam.distortion());
    }
    let mut out = create(&a.out)?;
    for f in &frames {
        let feats = extractor.extract(f, &model)?;
        write_record(&mut out, &FeatureRecord::new(f.frame_number, &a.camera, f.timestamp, &feats))?;
        model.update(f)?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Deserialize)]
struct CalibrationPoint {
    camera: String,
    x: f64,
    y: f64,
    z: f64,
    u: f64,
    v: f64,
}

fn calibrate_dlt(a: CalibrateArgs) -> Result<()> {
    let mut by_cam: Vec<(String, Vec<Correspondence>)> = Vec::new();
    for row in csv::Reader::from_reader(open(&a.points)?).deserialize() {
        let p: CalibrationPoint = row?;
        let c = Correspondence {
            world: Vector3::new(p.x, p.y, p.z),
            image: Pixel::new(p.u, p.v),
        };
        match by_cam.iter_mut().find(|(id, _)| *id == p.camera) {
            Some((_, list)) => list.push(c),
            None => by_cam.push((p.camera, vec![c])),
        }
    }
    let mut cams = Vec::new();
    for (id, corr) in &by_cam {
        let cam = dlt_calibrate(id.as_str(), a.image_size, corr).with_context(|| format!("camera {id}"))?;
        let err: f64 = corr
            .iter()
            .filter_map(|c| cam.project(&c.world).ok().map(|px| (px - c.image).norm()))
            .sum::<f64>()
            / corr.len() as f64;
        eprintln!("{id}: {} points, mean reprojection error {err:.3} px", corr.len());
        cams.push(cam);
    }
    write_calibration(create(&a.out)?, &cams)?;
    Ok(())
}

#[derive(Deserialize)]
struct ImagePoint {
    point: String,
    camera: String,
    u: f64,
    v: f64,
}

fn triangulate_points(a: TriangulateArgs) -> Result<()> {
    let cams = load_cameras(&a.calibration)?;
    let mut points: Vec<(String, Vec<(&CameraModel, Pixel)>)> = Vec::new();
    for row in csv::Reader::from_reader(open(&a.points)?).deserialize() {
        let p: ImagePoint = row?;
        let cam = cams
            .iter()
            .find(|c| c.id() == p.camera)
            .with_context(|| format!("camera {} not in the calibration", p.camera))?;
        let view = (cam, Pixel::new(p.u, p.v));
        match points.iter_mut().find(|(id, _)| *id == p.point) {
            Some((_, views)) => views.push(view),
            None => points.push((p.point, vec![view])),
        }
    }
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    writeln!(out, "point,x,y,z,mean_reprojection_error")?;
    for (id, views) in &points {
        let t = triangulate(views).with_context(|| format!("point {id}"))?;
        writeln!(out, "{id},{},{},{},{}", t.point.x, t.point.y, t.point.z, t.mean_reprojection_error)?;
    }
    Ok(())
}

fn report(a: ReportArgs) -> Result<()> {
    let rows = read_trajectory(open(&a.traj)?)?;
    let truth = read_truth(open(&a.truth)?)?;
    let cfg = EvalConfig {
        radius: a.radius,
        dt: 1.0 / a.fps,
        landmark: a.landmark,
        cameras: a.calibration.as_deref().map(load_cameras).transpose()?,
        latencies: Vec::new(),
    };
    let r = evaluate(&rows, &truth, &cfg)?;
    if let Some(dir) = &a.hist_dir {
        std::fs::create_dir_all(dir)?;
        let speeds: Vec<f64> = r
            .track_kinematics
            .iter()
            .flat_map(|(_, k)| k.horizontal_speed.iter().copied())
            .collect();
        write_histogram(
            create(&dir.join("speed_histogram.csv"))?,
            &speed_histogram(&speeds, a.speed_bin, a.speed_max),
        )?;
        let turns: Vec<f64> = r
            .track_kinematics
            .iter()
            .flat_map(|(_, k)| k.angular_velocity.iter().map(|w| w.abs()))
            .collect();
        write_histogram(
            create(&dir.join("turn_rate_histogram.csv"))?,
            &speed_histogram(&turns, 0.5, 20.0),
        )?;
    }
    let json = serde_json::to_string_pretty(&r)?;
    match &a.out {
        Some(p) => std::fs::write(p, json + "\n")?,
        None => println!("{json}"),
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::new(&cli.log))
        .with_writer(std::io::stderr)
        .init();
    match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Track(a) => track(a),
        Command::Send(a) => send(a),
        Command::Extract(a) => extract(a),
        Command::CalibrateDlt(a) => calibrate_dlt(a),
        Command::Triangulate(a) => triangulate_points(a),
        Command::Report(a) => report(a),
    }
}
