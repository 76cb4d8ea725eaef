use std::cmp::Ordering;
use std::collections::VecDeque;

use super::{BackgroundModel, Feature, FeatureError, Frame, ECCENTRICITY_DEGENERATE};
use crate::geometry::{Pixel, RadialDistortion};

/// Pixels fainter than this fraction of a blob's peak are dropped before
/// computing moments.
pub const DEFAULT_MOMENT_FRACTION: f64 = 0.3;

/// Feature extraction settings for one camera stream.
#[derive(Debug, Clone)]
pub struct Extractor {
    pub moment_fraction: f64,
    pub max_features: usize,
    /// applied to raw centroids to produce `(u, v)`; `None` leaves them as is
    pub distortion: Option<RadialDistortion>,
}

impl Extractor {
    pub fn new(max_features: usize) -> Self {
        Self {
            moment_fraction: DEFAULT_MOMENT_FRACTION,
            max_features,
            distortion: None,
        }
    }

    pub fn with_distortion(mut self, d: RadialDistortion) -> Self {
        self.distortion = Some(d);
        self
    }

    /// Detect blobs in `frame` against `model`.
    ///
    /// Above-threshold pixels are grouped into 8-connected regions. Within a
    /// region, pixels below `moment_fraction` of the peak difference are
    /// cleared; the area is the count of the remaining pixels and the
    /// centroid and second moments are weighted by the difference values.
    /// Each pixel is treated as a uniformly filled unit square, which adds
    /// 1/12 to both diagonal second moments. Results are ordered by
    /// decreasing area, then raw `u`, then raw `v`.
    pub fn extract(
        &self,
        frame: &Frame,
        model: &BackgroundModel,
    ) -> Result<Vec<Feature>, FeatureError> {
        model.check(frame)?;
        let w = frame.width as usize;
        let h = frame.height as usize;

        let diff: Vec<f64> = frame
            .pixels
            .iter()
            .zip(&model.mean)
            .map(|(&p, &m)| (p as f64 - m).abs())
            .collect();
        let above: Vec<bool> = diff
            .iter()
            .enumerate()
            .map(|(i, &d)| d > model.threshold_at(i))
            .collect();

        let mut visited = vec![false; w * h];
        let mut features = Vec::new();
        let mut queue = VecDeque::new();
        let mut region = Vec::new();

        for start in 0..w * h {
            if !above[start] || visited[start] {
                continue;
            }
            region.clear();
            visited[start] = true;
            queue.push_back(start);
            while let Some(i) = queue.pop_front() {
                region.push(i);
                let (x, y) = ((i % w) as isize, (i / w) as isize);
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        if dx == 0 && dy == 0 {
                            continue;
                        }
                        let (nx, ny) = (x + dx, y + dy);
                        if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                            continue;
                        }
                        let j = ny as usize * w + nx as usize;
                        if above[j] && !visited[j] {
                            visited[j] = true;
                            queue.push_back(j);
                        }
                    }
                }
            }
            if let Some(f) = self.describe(&region, &diff, w) {
                features.push(f);
            }
        }

        features.sort_by(cmp_features);
        features.truncate(self.max_features);
        Ok(features)
    }

    fn describe(&self, region: &[usize], diff: &[f64], w: usize) -> Option<Feature> {
        let peak = region.iter().map(|&i| diff[i]).fold(0.0, f64::max);
        if !(peak > 0.0) {
            return None;
        }
        let cutoff = self.moment_fraction * peak;
        // local coordinates relative to the region's bounding box keep the
        // sums small and make integer shifts of the blob exact
        let x0 = region.iter().map(|&i| i % w).min()?;
        let y0 = region.iter().map(|&i| i / w).min()?;
        let kept: Vec<(f64, f64, f64)> = region
            .iter()
            .filter(|&&i| diff[i] >= cutoff)
            .map(|&i| (((i % w) - x0) as f64, ((i / w) - y0) as f64, diff[i]))
            .collect();
        let m00: f64 = kept.iter().map(|k| k.2).sum();
        let cx = kept.iter().map(|k| k.0 * k.2).sum::<f64>() / m00;
        let cy = kept.iter().map(|k| k.1 * k.2).sum::<f64>() / m00;
        let (mut mu20, mut mu02, mut mu11) = (0.0, 0.0, 0.0);
        for &(x, y, wt) in &kept {
            let dx = x - cx;
            let dy = y - cy;
            mu20 += wt * dx * dx;
            mu02 += wt * dy * dy;
            mu11 += wt * dx * dy;
        }
        let mu20 = mu20 / m00 + 1.0 / 12.0;
        let mu02 = mu02 / m00 + 1.0 / 12.0;
        let mu11 = mu11 / m00;

        let mut orientation = 0.5 * (2.0 * mu11).atan2(mu20 - mu02);
        if orientation < 0.0 {
            orientation += std::f64::consts::PI;
        }
        if orientation >= std::f64::consts::PI {
            orientation -= std::f64::consts::PI;
        }
        let mean = 0.5 * (mu20 + mu02);
        let spread = (0.25 * (mu20 - mu02).powi(2) + mu11 * mu11).sqrt();
        let (major, minor) = (mean + spread, mean - spread);
        let eccentricity = if minor > 0.0 && (major / minor).is_finite() {
            (major / minor).sqrt()
        } else {
            ECCENTRICITY_DEGENERATE
        };

        let raw = Pixel::new(x0 as f64 + cx, y0 as f64 + cy);
        let corrected = match &self.distortion {
            Some(d) => d.correct(&raw).unwrap_or_else(|e| {
                tracing::warn!("keeping raw centroid {raw:?}: {e}");
                raw
            }),
            None => raw,
        };
        Some(Feature {
            u: corrected.x,
            v: corrected.y,
            u_raw: raw.x,
            v_raw: raw.y,
            area: kept.len() as f64,
            peak,
            orientation,
            eccentricity,
        })
    }
}

/// Extract at most `max_features` blobs with the default moment fraction and
/// no distortion correction.
pub fn extract_features(
    frame: &Frame,
    model: &BackgroundModel,
    max_features: usize,
) -> Result<Vec<Feature>, FeatureError> {
    Extractor::new(max_features).extract(frame, model)
}

fn cmp_features(a: &Feature, b: &Feature) -> Ordering {
    b.area
        .total_cmp(&a.area)
        .then(a.u_raw.total_cmp(&b.u_raw))
        .then(a.v_raw.total_cmp(&b.v_raw))
}
