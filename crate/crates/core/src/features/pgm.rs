//! Binary PGM (P5) images with 8-bit samples.

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use super::{FeatureError, Frame};

fn bad(msg: impl Into<String>) -> FeatureError {
    FeatureError::InvalidFrame(msg.into())
}

fn header_token<R: BufRead>(r: &mut R) -> Result<String, FeatureError> {
    let mut tok = String::new();
    let mut byte = [0u8; 1];
    loop {
        if r.read(&mut byte)? == 0 {
            return if tok.is_empty() {
                Err(bad("truncated PGM header"))
            } else {
                Ok(tok)
            };
        }
        let c = byte[0];
        if c == b'#' && tok.is_empty() {
            let mut comment = Vec::new();
            r.read_until(b'\n', &mut comment)?;
            continue;
        }
        if c.is_ascii_whitespace() {
            if tok.is_empty() {
                continue;
            }
            return Ok(tok);
        }
        tok.push(c as char);
    }
}

/// Read one P5 image, returning `(width, height, pixels)`.
pub fn read_pgm<R: BufRead>(mut r: R) -> Result<(u32, u32, Vec<u8>), FeatureError> {
    if header_token(&mut r)? != "P5" {
        return Err(bad("not a binary PGM"));
    }
    let mut num = |what: &str| -> Result<u32, FeatureError> {
        let t = header_token(&mut r)?;
        t.parse().map_err(|_| bad(format!("bad PGM {what} {t:?}")))
    };
    let w = num("width")?;
    let h = num("height")?;
    let maxval = num("maxval")?;
    if maxval == 0 || maxval > 255 {
        return Err(bad(format!("unsupported PGM maxval {maxval}")));
    }
    // header_token consumed exactly one whitespace byte after maxval
    let mut pixels = vec![0u8; w as usize * h as usize];
    r.read_exact(&mut pixels)?;
    Ok((w, h, pixels))
}

pub fn write_pgm<W: Write>(mut w: W, width: u32, height: u32, pixels: &[u8]) -> std::io::Result<()> {
    write!(w, "P5\n{width} {height}\n255\n")?;
    w.write_all(pixels)
}

pub fn save_frame(path: &Path, frame: &Frame) -> std::io::Result<()> {
    let f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_pgm(f, frame.width, frame.height, &frame.pixels)
}

/// Load every `*.pgm` file in `dir` as one camera's frame sequence.
///
/// The frame number is the integer formed by the digits of the file stem
/// (`000042.pgm` is frame 42); files are returned in frame order and the
/// timestamp is `frame / fps`.
pub fn read_frame_dir(dir: &Path, camera_id: &str, fps: f64) -> Result<Vec<Frame>, FeatureError> {
    let mut entries: Vec<(u64, PathBuf)> = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("pgm") {
            continue;
        }
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("");
        let digits: String = stem.chars().filter(char::is_ascii_digit).collect();
        let n = digits
            .parse()
            .map_err(|_| bad(format!("no frame number in {}", path.display())))?;
        entries.push((n, path));
    }
    entries.sort();
    entries
        .into_iter()
        .map(|(n, path)| {
            let f = std::io::BufReader::new(std::fs::File::open(&path)?);
            let (w, h, px) = read_pgm(f)?;
            Frame::new(camera_id, n, n as f64 / fps, w, h, px)
        })
        .collect()
}
