//! Line-oriented calibration file.
//!
//! ```text
//! cal v1 <n_cameras>
//! cam <id> <width> <height>
//! <p00> <p01> <p02> <p03>
//! <p10> <p11> <p12> <p13>
//! <p20> <p21> <p22> <p23>
//! dist <cx> <cy> <k1> <k2>
//! ```
//!
//! Numbers are written with Rust's shortest round-trip formatting, so a
//! write/read cycle reproduces every coefficient bit for bit.

use std::io::{BufRead, Write};

use nalgebra::Matrix3x4;
use thiserror::Error;

use super::{CameraModel, GeometryError, Pixel, RadialDistortion};

#[derive(Error, Debug)]
pub enum CalibrationError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("camera {id}: {source}")]
    Camera {
        id: String,
        #[source]
        source: GeometryError,
    },
}

pub fn write_calibration<W: Write>(mut w: W, cameras: &[CameraModel]) -> std::io::Result<()> {
    writeln!(w, "cal v1 {}", cameras.len())?;
    for cam in cameras {
        let (width, height) = cam.image_size();
        writeln!(w, "cam {} {} {}", cam.id(), width, height)?;
        let p = cam.projection();
        for r in 0..3 {
            writeln!(w, "{} {} {} {}", p[(r, 0)], p[(r, 1)], p[(r, 2)], p[(r, 3)])?;
        }
        let d = cam.distortion();
        writeln!(w, "dist {} {} {} {}", d.center.x, d.center.y, d.k1, d.k2)?;
    }
    Ok(())
}

struct Lines<R> {
    inner: std::io::Lines<R>,
    line_no: usize,
}

impl<R: BufRead> Lines<R> {
    fn next_tokens(&mut self) -> Result<Vec<String>, CalibrationError> {
        loop {
            self.line_no += 1;
            match self.inner.next() {
                None => return Err(self.err("unexpected end of file")),
                Some(line) => {
                    let line = line?;
                    let toks: Vec<String> = line.split_whitespace().map(str::to_owned).collect();
                    if !toks.is_empty() {
                        return Ok(toks);
                    }
                }
            }
        }
    }

    fn err(&self, msg: impl Into<String>) -> CalibrationError {
        CalibrationError::Parse {
            line: self.line_no,
            msg: msg.into(),
        }
    }

    fn num<T: std::str::FromStr>(&self, tok: &str) -> Result<T, CalibrationError> {
        tok.parse()
            .map_err(|_| self.err(format!("invalid number {tok:?}")))
    }
}

pub fn read_calibration<R: BufRead>(r: R) -> Result<Vec<CameraModel>, CalibrationError> {
    let mut lines = Lines {
        inner: r.lines(),
        line_no: 0,
    };
    let header = lines.next_tokens()?;
    if header.len() != 3 || header[0] != "cal" || header[1] != "v1" {
        return Err(lines.err("expected header `cal v1 <n_cameras>`"));
    }
    let n: usize = lines.num(&header[2])?;
    let mut cams = Vec::with_capacity(n);
    for _ in 0..n {
        let t = lines.next_tokens()?;
        if t.len() != 4 || t[0] != "cam" {
            return Err(lines.err("expected `cam <id> <width> <height>`"));
        }
        let id = t[1].clone();
        let size: (u32, u32) = (lines.num(&t[2])?, lines.num(&t[3])?);
        let mut p = Matrix3x4::zeros();
        for r in 0..3 {
            let row = lines.next_tokens()?;
            if row.len() != 4 {
                return Err(lines.err("projection row needs four numbers"));
            }
            for (c, tok) in row.iter().enumerate() {
                p[(r, c)] = lines.num(tok)?;
            }
        }
        let d = lines.next_tokens()?;
        if d.len() != 5 || d[0] != "dist" {
            return Err(lines.err("expected `dist <cx> <cy> <k1> <k2>`"));
        }
        let center = Pixel::new(lines.num(&d[1])?, lines.num(&d[2])?);
        let dist = RadialDistortion::new(center, lines.num(&d[3])?, lines.num(&d[4])?, size);
        let cam = CameraModel::new(id.clone(), size, p, dist)
            .map_err(|source| CalibrationError::Camera { id, source })?;
        cams.push(cam);
    }
    Ok(cams)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let p = Matrix3x4::new(
            812.123456789,
            0.1 + 0.2,
            319.5,
            -1.0 / 3.0,
            1e-17,
            799.0,
            239.5,
            std::f64::consts::PI,
            0.0,
            0.0,
            1.0,
            2.000000000000001,
        );
        let dist = RadialDistortion::new(Pixel::new(320.25, 240.125), -0.123456789012345, 0.01, (640, 480));
        let cam = CameraModel::new("cam_1", (640, 480), p, dist).unwrap();
        let mut buf = Vec::new();
        write_calibration(&mut buf, std::slice::from_ref(&cam)).unwrap();
        let back = read_calibration(buf.as_slice()).unwrap();
        assert_eq!(back.len(), 1);
        for (a, b) in back[0].projection().iter().zip(cam.projection().iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(back[0], cam);
    }

    #[test]
    fn malformed_input_reports_line() {
        let text = "cal v1 1\ncam a 640 480\n1 0 0 0\n0 1 0\n";
        match read_calibration(text.as_bytes()) {
            Err(CalibrationError::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("unexpected {other:?}"),
        }
    }
}
