//! Binary feature packets between camera nodes and the hub, and frame
//! assembly on the hub side.
//!
//! Packet layout, all integers and floats little-endian:
//!
//! ```text
//! "FLYP" | version u8 | id_len u8 | id bytes | frame u64 | timestamp_us u64 | count u16 | count × 6 f64
//! ```

mod assembler;
pub mod transport;

pub use assembler::{AssembledFrame, Assembler, AssemblerStats};

use thiserror::Error;

use crate::features::Feature;

pub const MAGIC: [u8; 4] = *b"FLYP";
pub const VERSION: u8 = 1;
pub const MAX_ID_LEN: usize = 32;
/// Bytes before the id.
const PREFIX_LEN: usize = 6;
/// Fixed bytes excluding the id and the features.
pub const FIXED_LEN: usize = PREFIX_LEN + 8 + 8 + 2;
pub const FEATURE_LEN: usize = 6 * 8;

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("camera id is {0} bytes, limit is 32")]
    IdTooLong(usize),
    #[error("{0} features do not fit in one packet")]
    TooManyFeatures(usize),
    #[error("bad magic")]
    BadMagic,
    #[error("unsupported protocol version {0}")]
    BadVersion(u8),
    #[error("packet truncated: need {needed} bytes, got {got}")]
    Truncated { needed: usize, got: usize },
    #[error("{0} unexpected bytes after the last feature")]
    TrailingBytes(usize),
    #[error("camera id is not valid UTF-8")]
    BadId,
}

/// Features from one camera for one trigger.
#[derive(Debug, Clone, PartialEq)]
pub struct FramePacket {
    pub version: u8,
    pub camera_id: String,
    pub frame: u64,
    /// microseconds since the epoch, stamped at the shared trigger
    pub timestamp_us: u64,
    /// `[u, v, area, peak, orientation, eccentricity]`
    pub features: Vec<[f64; 6]>,
}

impl FramePacket {
    pub fn new(camera_id: impl Into<String>, frame: u64, timestamp_us: u64, features: &[Feature]) -> Self {
        Self {
            version: VERSION,
            camera_id: camera_id.into(),
            frame,
            timestamp_us,
            features: features.iter().map(Feature::to_wire).collect(),
        }
    }

    pub fn to_features(&self) -> Vec<Feature> {
        self.features.iter().copied().map(Feature::from_wire).collect()
    }

    pub fn encoded_len(&self) -> usize {
        FIXED_LEN + self.camera_id.len() + FEATURE_LEN * self.features.len()
    }
}

pub fn encode(p: &FramePacket) -> Result<Vec<u8>, ProtocolError> {
    let id = p.camera_id.as_bytes();
    if id.len() > MAX_ID_LEN {
        return Err(ProtocolError::IdTooLong(id.len()));
    }
    let count = u16::try_from(p.features.len())
        .map_err(|_| ProtocolError::TooManyFeatures(p.features.len()))?;
    let mut out = Vec::with_capacity(p.encoded_len());
    out.extend_from_slice(&MAGIC);
    out.push(p.version);
    out.push(id.len() as u8);
    out.extend_from_slice(id);
    out.extend_from_slice(&p.frame.to_le_bytes());
    out.extend_from_slice(&p.timestamp_us.to_le_bytes());
    out.extend_from_slice(&count.to_le_bytes());
    for f in &p.features {
        for v in f {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ProtocolError> {
        let end = self.pos + n;
        if end > self.buf.len() {
            return Err(ProtocolError::Truncated {
                needed: end,
                got: self.buf.len(),
            });
        }
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], ProtocolError> {
        Ok(self.take(N)?.try_into().expect("slice length"))
    }
}

pub fn decode(bytes: &[u8]) -> Result<FramePacket, ProtocolError> {
    let mut c = Cursor { buf: bytes, pos: 0 };
    // check the magic on whatever is present so a short garbage buffer is
    // reported as such rather than as truncated
    let head = &bytes[..bytes.len().min(4)];
    if head != &MAGIC[..head.len()] {
        return Err(ProtocolError::BadMagic);
    }
    c.take(4)?;
    let version = c.array::<1>()?[0];
    if version != VERSION {
        return Err(ProtocolError::BadVersion(version));
    }
    let id_len = c.array::<1>()?[0] as usize;
    if id_len > MAX_ID_LEN {
        return Err(ProtocolError::IdTooLong(id_len));
    }
    let camera_id = std::str::from_utf8(c.take(id_len)?)
        .map_err(|_| ProtocolError::BadId)?
        .to_owned();
    let frame = u64::from_le_bytes(c.array()?);
    let timestamp_us = u64::from_le_bytes(c.array()?);
    let count = u16::from_le_bytes(c.array()?) as usize;
    let needed = c.pos + count * FEATURE_LEN;
    if bytes.len() < needed {
        return Err(ProtocolError::Truncated {
            needed,
            got: bytes.len(),
        });
    }
    let mut features = Vec::with_capacity(count);
    for _ in 0..count {
        let mut f = [0.0; 6];
        for v in &mut f {
            *v = f64::from_le_bytes(c.array()?);
        }
        features.push(f);
    }
    if c.pos != bytes.len() {
        return Err(ProtocolError::TrailingBytes(bytes.len() - c.pos));
    }
    Ok(FramePacket {
        version,
        camera_id,
        frame,
        timestamp_us,
        features,
    })
}
