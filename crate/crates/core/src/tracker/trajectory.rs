//! Trajectory CSV: one row per live target per frame.

use std::io::{BufRead, Write};

use nalgebra::{Matrix6, Vector6};

use super::{TargetId, TargetState};

pub const TRAJECTORY_HEADER: &str = "frame,target_id,x,y,z,vx,vy,vz,\
p00,p01,p02,p03,p04,p05,p10,p11,p12,p13,p14,p15,p20,p21,p22,p23,p24,p25,\
p30,p31,p32,p33,p34,p35,p40,p41,p42,p43,p44,p45,p50,p51,p52,p53,p54,p55";

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow {
    pub frame: u64,
    pub target_id: TargetId,
    pub mean: Vector6<f64>,
    pub covariance: Matrix6<f64>,
}

pub struct TrajectoryWriter<W: Write> {
    out: W,
}

impl<W: Write> TrajectoryWriter<W> {
    pub fn new(mut out: W) -> std::io::Result<Self> {
        writeln!(out, "{TRAJECTORY_HEADER}")?;
        Ok(Self { out })
    }

    pub fn write(&mut self, frame: u64, target: &TargetState) -> std::io::Result<()> {
        let mut line = format!("{frame},{}", target.id);
        for v in target.mean.iter() {
            line.push(',');
            line.push_str(&v.to_string());
        }
        for r in 0..6 {
            for c in 0..6 {
                line.push(',');
                line.push_str(&target.covariance[(r, c)].to_string());
            }
        }
        line.push('\n');
        self.out.write_all(line.as_bytes())
    }

    pub fn flush(&mut self) -> std::io::Result<()> {
        self.out.flush()
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

fn invalid(line: usize, msg: impl std::fmt::Display) -> std::io::Error {
    std::io::Error::new(std::io::ErrorKind::InvalidData, format!("line {line}: {msg}"))
}

/// Parse a trajectory CSV written by [`TrajectoryWriter`].
pub fn read_trajectory<R: BufRead>(r: R) -> std::io::Result<Vec<TrajectoryRow>> {
    let mut rows = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 44 {
            return Err(invalid(i + 1, format!("{} fields, expected 44", f.len())));
        }
        let num = |s: &str| s.trim().parse::<f64>().map_err(|e| invalid(i + 1, e));
        let frame = f[0].trim().parse().map_err(|e| invalid(i + 1, e))?;
        let target_id = f[1].trim().parse().map_err(|e| invalid(i + 1, e))?;
        let mut mean = Vector6::zeros();
        for k in 0..6 {
            mean[k] = num(f[2 + k])?;
        }
        let mut covariance = Matrix6::zeros();
        for k in 0..36 {
            covariance[(k / 6, k % 6)] = num(f[8 + k])?;
        }
        rows.push(TrajectoryRow {
            frame,
            target_id,
            mean,
            covariance,
        });
    }
    Ok(rows)
}
