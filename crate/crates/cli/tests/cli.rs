use std::fmt::Write as _;
use std::path::Path;
use std::process::Command;

use mvtrack::geometry::read_calibration;
use nalgebra::Vector3;

fn mvtrack(args: &[&str]) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_mvtrack")).args(args).output().unwrap();
    assert!(
        out.status.success(),
        "mvtrack {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn simulate_track_report() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    mvtrack(&["simulate", "--targets", "2", "--frames", "150", "--seed", "5", "--out-dir", s(d)]);
    for f in ["calibration.cal", "truth.csv", "features.jsonl", "tracker.conf"] {
        assert!(d.join(f).exists(), "{f} missing");
    }
    mvtrack(&[
        "track",
        "--config",
        s(&d.join("tracker.conf")),
        "--features",
        s(&d.join("features.jsonl")),
        "--calibration",
        s(&d.join("calibration.cal")),
        "--out",
        s(&d.join("traj.csv")),
        "--dump-assignments",
        s(&d.join("assign.jsonl")),
        "--stats",
        s(&d.join("stats.json")),
    ]);
    let stats: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("stats.json")).unwrap()).unwrap();
    assert_eq!(stats["frames"], 150);
    assert_eq!(std::fs::read_to_string(d.join("assign.jsonl")).unwrap().lines().count(), 150);

    let text = mvtrack(&[
        "report",
        "--traj",
        s(&d.join("traj.csv")),
        "--truth",
        s(&d.join("truth.csv")),
        "--hist-dir",
        s(&d.join("hist")),
    ]);
    let report: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(report["truth_targets"], 2);
    assert!(report["mota"].as_f64().unwrap() > 0.9);
    assert!(report["rmse"].as_f64().unwrap() < 0.01);
    assert!(d.join("hist/speed_histogram.csv").exists());
}

#[test]
fn extract_finds_rendered_targets() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    mvtrack(&["simulate", "--targets", "1", "--frames", "5", "--clutter", "0", "--detection", "1", "--out-dir", s(d), "--pgm"]);
    let out = d.join("cam0.jsonl");
    mvtrack(&[
        "extract",
        "--frames",
        s(&d.join("frames/cam0")),
        "--camera",
        "cam0",
        "--out",
        s(&out),
        "--background",
        "20",
    ]);
    let lines: Vec<serde_json::Value> = std::fs::read_to_string(out)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 5);
    assert!(lines.iter().all(|l| l["features"].as_array().unwrap().len() == 1));
}

#[test]
fn dlt_then_triangulate_recovers_points() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    mvtrack(&["simulate", "--targets", "1", "--frames", "1", "--out-dir", s(d)]);
    let cams = read_calibration(std::fs::File::open(d.join("calibration.cal")).map(std::io::BufReader::new).unwrap()).unwrap();

    let mut corr = String::from("camera,x,y,z,u,v\n");
    for cam in &cams {
        for i in 0..12 {
            let f = i as f64;
            let p = Vector3::new(0.05 * (f - 6.0), 0.02 * (f % 5.0 - 2.0), 0.03 * (f % 3.0 - 1.0));
            let px = cam.project(&p).unwrap();
            writeln!(corr, "{},{},{},{},{},{}", cam.id(), p.x, p.y, p.z, px.x, px.y).unwrap();
        }
    }
    std::fs::write(d.join("corr.csv"), corr).unwrap();
    let cal = d.join("dlt.cal");
    mvtrack(&["calibrate-dlt", "--points", s(&d.join("corr.csv")), "--out", s(&cal), "--image-size", "640x480"]);

    let target = Vector3::new(0.1, -0.02, 0.01);
    let mut obs = String::from("point,camera,u,v\n");
    for cam in &cams {
        let px = cam.project(&target).unwrap();
        writeln!(obs, "p,{},{},{}", cam.id(), px.x, px.y).unwrap();
    }
    std::fs::write(d.join("obs.csv"), obs).unwrap();
    let text = mvtrack(&["triangulate", "--calibration", s(&cal), "--points", s(&d.join("obs.csv"))]);
    let row: Vec<f64> = text.lines().nth(1).unwrap().split(',').skip(1).map(|x| x.parse().unwrap()).collect();
    assert!((Vector3::new(row[0], row[1], row[2]) - target).norm() < 1e-3, "{text}");
}

#[test]
fn bad_input_fails_cleanly() {
    let out = Command::new(env!("CARGO_BIN_EXE_mvtrack"))
        .args(["simulate", "--preset", "nope", "--out-dir", "/tmp/unused"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope"));
}
