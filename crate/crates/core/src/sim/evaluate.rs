use std::collections::{BTreeMap, HashMap, HashSet};

use nalgebra::Vector3;
use serde::Serialize;

use super::{kinematics, Kinematics, SimError, TruthTrajectory};
use crate::geometry::CameraModel;
use crate::hub::percentile;
use crate::tracker::{TargetId, TrajectoryRow};

#[derive(Debug, Clone)]
pub struct EvalConfig {
    /// meters; an estimate farther than this from a truth never matches it
    pub radius: f64,
    /// seconds per frame, for kinematics
    pub dt: f64,
    pub landmark: Option<Vector3<f64>>,
    /// when given, matched estimates are also scored in pixels
    pub cameras: Option<Vec<CameraModel>>,
    /// per-frame hub latencies, seconds
    pub latencies: Vec<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            radius: 0.05,
            dt: 0.01,
            landmark: None,
            cameras: None,
            latencies: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub frames: u64,
    pub truth_targets: usize,
    pub track_count: usize,
    pub matches: usize,
    pub misses: usize,
    pub false_positives: usize,
    pub id_switches: usize,
    pub fragmentations: usize,
    /// meters, over matched pairs
    pub rmse: f64,
    pub mota: f64,
    /// frames from a truth's first frame to its first match, per matched truth
    pub birth_lag: BTreeMap<TargetId, u64>,
    /// frames the last matching track outlived its truth, per truth that
    /// ends inside the evaluated range
    pub death_lag: BTreeMap<TargetId, i64>,
    /// px; distance between projected estimate and projected truth
    pub mean_reprojection_error: Option<f64>,
    pub latency_p50: Option<f64>,
    pub latency_p90: Option<f64>,
    pub latency_p99: Option<f64>,
    #[serde(skip)]
    pub track_kinematics: Vec<(TargetId, Kinematics)>,
}

/// Score estimated trajectories against the truth.
///
/// Matching follows CLEAR-MOT: in each frame a truth keeps its previous
/// track while that track stays within `radius`; the remaining pairs are
/// matched greedily by distance. A truth matched to a different track than
/// last time counts as an identity switch, and a truth regaining a match
/// after losing it counts as a fragmentation.
pub fn evaluate(
    rows: &[TrajectoryRow],
    truth: &[TruthTrajectory],
    cfg: &EvalConfig,
) -> Result<Report, SimError> {
    let first = truth.iter().map(|t| t.start_frame).min().unwrap_or(0);
    let end = truth.iter().map(TruthTrajectory::end_frame).max().unwrap_or(0);
    let mut by_frame: BTreeMap<u64, Vec<(TargetId, Vector3<f64>)>> = BTreeMap::new();
    for r in rows {
        if r.frame < first || r.frame >= end {
            return Err(SimError::FrameMismatch(r.frame));
        }
        by_frame
            .entry(r.frame)
            .or_default()
            .push((r.target_id, r.mean.fixed_rows::<3>(0).into_owned()));
    }

    let mut mapping: HashMap<TargetId, TargetId> = HashMap::new();
    let mut was_matched: HashMap<TargetId, bool> = HashMap::new();
    let mut birth_lag = BTreeMap::new();
    let mut last_match: HashMap<TargetId, TargetId> = HashMap::new();
    let (mut matches, mut misses, mut fps, mut switches, mut frags) = (0, 0, 0, 0, 0);
    let mut sq = 0.0;
    let mut truth_instances = 0usize;
    let mut pix = (0.0, 0usize);
    let empty = Vec::new();

    for f in first..end {
        let est = by_frame.get(&f).unwrap_or(&empty);
        let present: Vec<(TargetId, Vector3<f64>)> =
            truth.iter().filter_map(|t| t.at(f).map(|(p, _)| (t.id, p))).collect();
        truth_instances += present.len();
        let mut used_truth = HashSet::new();
        let mut used_track = HashSet::new();
        let mut pairs: Vec<(TargetId, TargetId, f64)> = Vec::new();

        for (tid, p) in &present {
            if let Some(&trk) = mapping.get(tid) {
                if let Some((_, q)) = est.iter().find(|(id, _)| *id == trk) {
                    let d = (q - p).norm();
                    if d <= cfg.radius && !used_track.contains(&trk) {
                        used_truth.insert(*tid);
                        used_track.insert(trk);
                        pairs.push((*tid, trk, d));
                    }
                }
            }
        }
        let mut candidates: Vec<(f64, TargetId, TargetId)> = present
            .iter()
            .filter(|(tid, _)| !used_truth.contains(tid))
            .flat_map(|(tid, p)| {
                est.iter()
                    .filter(|(trk, _)| !used_track.contains(trk))
                    .map(move |(trk, q)| ((q - p).norm(), *tid, *trk))
            })
            .filter(|c| c.0 <= cfg.radius)
            .collect();
        candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        for (d, tid, trk) in candidates {
            if used_truth.contains(&tid) || used_track.contains(&trk) {
                continue;
            }
            used_truth.insert(tid);
            used_track.insert(trk);
            if mapping.get(&tid).is_some_and(|&m| m != trk) {
                switches += 1;
            }
            mapping.insert(tid, trk);
            pairs.push((tid, trk, d));
        }

        for (tid, _) in &present {
            let now = used_truth.contains(tid);
            let before = was_matched.insert(*tid, now);
            if now && before == Some(false) && last_match.contains_key(tid) {
                frags += 1;
            }
        }
        for &(tid, trk, d) in &pairs {
            matches += 1;
            sq += d * d;
            last_match.insert(tid, trk);
            let t = truth.iter().find(|t| t.id == tid).expect("present truth");
            birth_lag.entry(tid).or_insert(f - t.start_frame);
            if let Some(cams) = &cfg.cameras {
                let p = t.at(f).expect("present truth").0;
                let q = est.iter().find(|(id, _)| *id == trk).expect("matched track").1;
                for c in cams {
                    if let (Ok(a), Ok(b)) = (c.project(&p), c.project(&q)) {
                        if c.contains(&a) {
                            pix.0 += (a - b).norm();
                            pix.1 += 1;
                        }
                    }
                }
            }
        }
        misses += present.len() - used_truth.len();
        fps += est.len() - used_track.len();
    }

    let mut track_rows: BTreeMap<TargetId, Vec<(u64, Vector3<f64>)>> = BTreeMap::new();
    for (f, list) in &by_frame {
        for (id, p) in list {
            track_rows.entry(*id).or_default().push((*f, *p));
        }
    }
    let death_lag = truth
        .iter()
        .filter(|t| t.end_frame() < end)
        .filter_map(|t| {
            let trk = last_match.get(&t.id)?;
            let last = track_rows[trk].last()?.0;
            Some((t.id, last as i64 - (t.end_frame() as i64 - 1)))
        })
        .collect();
    let track_kinematics = track_rows
        .iter()
        .map(|(id, r)| {
            let pos: Vec<_> = r.iter().map(|x| x.1).collect();
            (*id, kinematics(&pos, cfg.dt, cfg.landmark))
        })
        .collect();
    let lat = |q| (!cfg.latencies.is_empty()).then(|| percentile(&cfg.latencies, q));

    Ok(Report {
        frames: end - first,
        truth_targets: truth.len(),
        track_count: track_rows.len(),
        matches,
        misses,
        false_positives: fps,
        id_switches: switches,
        fragmentations: frags,
        rmse: if matches > 0 { (sq / matches as f64).sqrt() } else { 0.0 },
        mota: if truth_instances > 0 {
            1.0 - (misses + fps + switches) as f64 / truth_instances as f64
        } else {
            1.0
        },
        birth_lag,
        death_lag,
        mean_reprojection_error: (pix.1 > 0).then(|| pix.0 / pix.1 as f64),
        latency_p50: lat(0.5),
        latency_p90: lat(0.9),
        latency_p99: lat(0.99),
        track_kinematics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Matrix6, Vector6};

    fn rows_from(truth: &[TruthTrajectory], relabel: impl Fn(TargetId, u64) -> TargetId) -> Vec<TrajectoryRow> {
        let mut rows = Vec::new();
        for t in truth {
            for (k, (p, v)) in t.positions.iter().zip(&t.velocities).enumerate() {
                let f = t.start_frame + k as u64;
                rows.push(TrajectoryRow {
                    frame: f,
                    target_id: relabel(t.id, f),
                    mean: Vector6::new(p.x, p.y, p.z, v.x, v.y, v.z),
                    covariance: Matrix6::identity(),
                });
            }
        }
        rows
    }

    fn two_lines() -> Vec<TruthTrajectory> {
        vec![
            TruthTrajectory::straight(0, 0, Vector3::zeros(), Vector3::new(0.15, 0.0, 0.0), 50, 0.01),
            TruthTrajectory::straight(1, 0, Vector3::new(0.0, 0.5, 0.0), Vector3::new(0.0, 0.1, 0.0), 50, 0.01),
        ]
    }

    #[test]
    fn perfect_estimate_scores_perfectly() {
        let truth = two_lines();
        let r = evaluate(&rows_from(&truth, |id, _| id + 10), &truth, &EvalConfig::default()).unwrap();
        assert_eq!(r.rmse, 0.0);
        assert_eq!((r.id_switches, r.misses, r.false_positives, r.fragmentations), (0, 0, 0, 0));
        assert_eq!(r.matches, 100);
        assert_eq!(r.mota, 1.0);
        assert_eq!(r.track_count, 2);
        assert_eq!(r.birth_lag.values().copied().collect::<Vec<_>>(), vec![0, 0]);
        let k = &r.track_kinematics[0].1;
        for s in &k.horizontal_speed {
            assert!((s - 0.15).abs() < 1e-9);
        }
        for w in &k.angular_velocity {
            assert!(w.abs() < 1e-6);
        }
    }

    #[test]
    fn relabeling_counts_a_switch() {
        let truth = two_lines();
        let rows = rows_from(&truth, |id, f| if id == 0 && f >= 20 { 7 } else { id });
        let r = evaluate(&rows, &truth, &EvalConfig::default()).unwrap();
        assert_eq!(r.id_switches, 1);
        assert_eq!(r.track_count, 3);
    }

    #[test]
    fn gap_counts_a_fragmentation() {
        let truth = two_lines();
        let rows: Vec<_> = rows_from(&truth, |id, _| id)
            .into_iter()
            .filter(|r| !(r.target_id == 1 && (10..15).contains(&r.frame)))
            .collect();
        let r = evaluate(&rows, &truth, &EvalConfig::default()).unwrap();
        assert_eq!((r.fragmentations, r.misses, r.id_switches), (1, 5, 0));
    }

    #[test]
    fn offset_estimates_give_rmse() {
        let truth = two_lines();
        let mut rows = rows_from(&truth, |id, _| id);
        for r in &mut rows {
            r.mean[2] += 0.003;
        }
        let r = evaluate(&rows, &truth, &EvalConfig::default()).unwrap();
        assert!((r.rmse - 0.003).abs() < 1e-12);
    }

    #[test]
    fn rows_outside_truth_are_rejected() {
        let truth = two_lines();
        let mut rows = rows_from(&truth, |id, _| id);
        rows[0].frame = 50;
        assert!(matches!(
            evaluate(&rows, &truth, &EvalConfig::default()),
            Err(SimError::FrameMismatch(50))
        ));
    }

    #[test]
    fn death_lag_measures_overrun() {
        let mut truth = two_lines();
        truth[0].positions.truncate(30);
        truth[0].velocities.truncate(30);
        let mut rows = rows_from(&truth, |id, _| id);
        let p = *truth[0].positions.last().unwrap();
        for f in 30..34 {
            rows.push(TrajectoryRow {
                frame: f,
                target_id: 0,
                mean: Vector6::new(p.x, p.y, p.z, 0.0, 0.0, 0.0),
                covariance: Matrix6::identity(),
            });
        }
        let r = evaluate(&rows, &truth, &EvalConfig::default()).unwrap();
        assert_eq!(r.death_lag.get(&0), Some(&4));
        assert_eq!(r.false_positives, 4);
    }
}
