use std::io::Write;

use nalgebra::Vector3;
use serde::Serialize;

/// Flight descriptors along one trajectory, one entry per sample.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Kinematics {
    /// m/s, from central differences of position
    pub velocity: Vec<[f64; 3]>,
    /// m/s in the xy plane
    pub horizontal_speed: Vec<f64>,
    /// rad/s; the turn rate between sample `i` and `i + 1`, so one shorter
    pub angular_velocity: Vec<f64>,
    /// rad in `(-π, π]`: heading minus the bearing to the landmark, in the
    /// xy plane
    pub approach_angle: Option<Vec<f64>>,
}

fn wrap_angle(a: f64) -> f64 {
    let t = std::f64::consts::TAU;
    let w = a.rem_euclid(t);
    if w > std::f64::consts::PI {
        w - t
    } else {
        w
    }
}

/// Derive speed, turn rate and, given a landmark, approach angle from
/// positions sampled every `dt` seconds. End points use one-sided
/// differences.
pub fn kinematics(positions: &[Vector3<f64>], dt: f64, landmark: Option<Vector3<f64>>) -> Kinematics {
    let n = positions.len();
    let velocity: Vec<Vector3<f64>> = (0..n)
        .map(|i| match (i.checked_sub(1), (i + 1 < n).then_some(i + 1)) {
            (Some(a), Some(b)) => (positions[b] - positions[a]) / (2.0 * dt),
            (None, Some(b)) => (positions[b] - positions[i]) / dt,
            (Some(a), None) => (positions[i] - positions[a]) / dt,
            (None, None) => Vector3::zeros(),
        })
        .collect();
    let horizontal_speed = velocity.iter().map(|v| v.xy().norm()).collect();
    let angular_velocity = velocity
        .windows(2)
        .map(|w| {
            let c = w[0].cross(&w[1]).norm();
            c.atan2(w[0].dot(&w[1])) / dt
        })
        .collect();
    let approach_angle = landmark.map(|l| {
        positions
            .iter()
            .zip(&velocity)
            .map(|(p, v)| {
                let to = l - p;
                wrap_angle(v.y.atan2(v.x) - to.y.atan2(to.x))
            })
            .collect()
    });
    Kinematics {
        velocity: velocity.iter().map(|v| [v.x, v.y, v.z]).collect(),
        horizontal_speed,
        angular_velocity,
        approach_angle,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HistogramBin {
    pub bin_start: f64,
    pub bin_end: f64,
    pub fraction: f64,
}

/// Normalized histogram over `[0, max)` with bins of `width`; values at or
/// above `max` go in the last bin.
pub fn speed_histogram(speeds: &[f64], width: f64, max: f64) -> Vec<HistogramBin> {
    let n_bins = ((max / width).ceil() as usize).max(1);
    let mut counts = vec![0usize; n_bins];
    for &s in speeds.iter().filter(|s| s.is_finite()) {
        let k = ((s.max(0.0) / width) as usize).min(n_bins - 1);
        counts[k] += 1;
    }
    let total = counts.iter().sum::<usize>().max(1) as f64;
    counts
        .iter()
        .enumerate()
        .map(|(k, &c)| HistogramBin {
            bin_start: k as f64 * width,
            bin_end: (k + 1) as f64 * width,
            fraction: c as f64 / total,
        })
        .collect()
}

pub fn write_histogram<W: Write>(mut w: W, bins: &[HistogramBin]) -> std::io::Result<()> {
    writeln!(w, "bin_start,bin_end,fraction")?;
    for b in bins {
        writeln!(w, "{},{},{}", b.bin_start, b.bin_end, b.fraction)?;
    }
    Ok(())
}
