//! JSON-lines feature stream, one record per (frame, camera).

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{Feature, FeatureError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRecord {
    pub frame: u64,
    pub cam: String,
    /// seconds
    pub t: f64,
    /// `[u, v, area, peak, orientation, eccentricity]`
    pub features: Vec<[f64; 6]>,
}

impl FeatureRecord {
    pub fn new(frame: u64, cam: impl Into<String>, t: f64, features: &[Feature]) -> Self {
        Self {
            frame,
            cam: cam.into(),
            t,
            features: features.iter().map(Feature::to_wire).collect(),
        }
    }

    pub fn to_features(&self) -> Vec<Feature> {
        self.features.iter().copied().map(Feature::from_wire).collect()
    }
}

pub fn write_record<W: Write>(mut w: W, rec: &FeatureRecord) -> Result<(), FeatureError> {
    serde_json::to_writer(&mut w, rec)?;
    w.write_all(b"\n")?;
    Ok(())
}

/// Iterate over the records of a JSON-lines stream, skipping blank lines.
pub fn read_records<R: BufRead>(r: R) -> impl Iterator<Item = Result<FeatureRecord, FeatureError>> {
    r.lines().filter_map(|line| match line {
        Err(e) => Some(Err(e.into())),
        Ok(l) if l.trim().is_empty() => None,
        Ok(l) => Some(serde_json::from_str(&l).map_err(Into::into)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn format_and_round_trip() {
        let f = Feature::from_wire([1.5, 2.25, 9.0, 255.0, 0.1 + 0.2, crate::features::ECCENTRICITY_DEGENERATE]);
        let rec = FeatureRecord::new(3, "cam0", 0.03, &[f]);
        let mut buf = Vec::new();
        write_record(&mut buf, &rec).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(r#"{"frame":3,"cam":"cam0","t":0.03,"features":[[1.5,2.25,9.0,255.0,"#));
        buf.extend_from_slice(b"\n\n");
        let back: Vec<_> = read_records(buf.as_slice()).collect::<Result<_, _>>().unwrap();
        assert_eq!(back, vec![rec]);
        assert_eq!(back[0].to_features()[0].orientation.to_bits(), (0.1f64 + 0.2).to_bits());
    }

    #[test]
    fn malformed_line_is_an_error() {
        let mut it = read_records(&b"{\"frame\":1}\n"[..]);
        assert!(matches!(it.next(), Some(Err(FeatureError::Record(_)))));
    }
}
