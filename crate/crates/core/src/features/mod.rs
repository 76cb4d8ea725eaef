//! 2D feature extraction from grayscale frames.
//!
//! A running-Gaussian background model is kept per camera. Each frame is
//! compared against the background mean; connected regions of the absolute
//! difference image above threshold become [`Feature`]s described by their
//! image moments.

mod background;
mod extract;
pub mod pgm;
pub mod stream;

pub use background::{update_background, BackgroundModel, Threshold};
pub use extract::{extract_features, Extractor, DEFAULT_MOMENT_FRACTION};

use thiserror::Error;

use crate::geometry::Pixel;

/// Eccentricity reported when the minor second moment vanishes.
pub const ECCENTRICITY_DEGENERATE: f64 = f64::MAX;

#[derive(Error, Debug)]
pub enum FeatureError {
    #[error("frame is {got:?} but the model is {expected:?}")]
    DimensionMismatch {
        expected: (u32, u32),
        got: (u32, u32),
    },
    #[error("invalid frame: {0}")]
    InvalidFrame(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad feature record: {0}")]
    Record(#[from] serde_json::Error),
}

/// One 8-bit luminance image from one camera.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub camera_id: String,
    pub frame_number: u64,
    /// seconds
    pub timestamp: f64,
    pub width: u32,
    pub height: u32,
    /// row-major, `width * height` bytes
    pub pixels: Vec<u8>,
}

impl Frame {
    pub fn new(
        camera_id: impl Into<String>,
        frame_number: u64,
        timestamp: f64,
        width: u32,
        height: u32,
        pixels: Vec<u8>,
    ) -> Result<Self, FeatureError> {
        if width == 0 || height == 0 {
            return Err(FeatureError::InvalidFrame("zero-sized frame".into()));
        }
        if pixels.len() != width as usize * height as usize {
            return Err(FeatureError::InvalidFrame(format!(
                "{} bytes for a {width}x{height} frame",
                pixels.len()
            )));
        }
        Ok(Self {
            camera_id: camera_id.into(),
            frame_number,
            timestamp,
            width,
            height,
            pixels,
        })
    }

    pub fn size(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.pixels[y as usize * self.width as usize + x as usize]
    }
}

/// One detected blob: `(u, v, area, peak, orientation, eccentricity)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Feature {
    /// distortion-corrected centroid, pixels
    pub u: f64,
    pub v: f64,
    /// raw centroid as measured on the sensor
    pub u_raw: f64,
    pub v_raw: f64,
    /// pixel count of the blob after clearing faint pixels
    pub area: f64,
    /// largest absolute difference from the background
    pub peak: f64,
    /// radians in `[0, π)`
    pub orientation: f64,
    /// ratio of principal axis lengths, `>= 1`
    pub eccentricity: f64,
}

impl Feature {
    pub fn pixel(&self) -> Pixel {
        Pixel::new(self.u, self.v)
    }

    /// The six values carried over the network.
    pub fn to_wire(&self) -> [f64; 6] {
        [
            self.u,
            self.v,
            self.area,
            self.peak,
            self.orientation,
            self.eccentricity,
        ]
    }

    /// Rebuild from wire values. The raw centroid is not transmitted and is
    /// set to the corrected one.
    pub fn from_wire(w: [f64; 6]) -> Self {
        Self {
            u: w[0],
            v: w[1],
            u_raw: w[0],
            v_raw: w[1],
            area: w[2],
            peak: w[3],
            orientation: w[4],
            eccentricity: w[5],
        }
    }
}
