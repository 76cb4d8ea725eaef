use std::collections::HashMap;

use nalgebra::{Matrix6, Vector3, Vector6};

use super::GateConfig;
use crate::features::Feature;
use crate::geometry::{triangulate, CameraModel, Pixel};
use crate::tracker::{TargetId, TargetState};

/// All camera subsets with at least `min_size` members, largest first and
/// lexicographic within a size.
pub fn camera_combinations(n: usize, min_size: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    for k in (min_size.max(1)..=n).rev() {
        rec(0, n, k, &mut Vec::with_capacity(k), &mut out);
    }
    out
}

/// A newly created target and the features it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct Spawned {
    pub state: TargetState,
    /// `(camera index, feature index)` pairs, ordered by camera
    pub support: Vec<(usize, usize)>,
    pub mean_reprojection_error: f64,
}

struct Hypothesis {
    point: Vector3<f64>,
    error: f64,
    support: Vec<(usize, usize)>,
}

struct Search<'a> {
    pixels: Vec<Vec<Pixel>>,
    cams: &'a [CameraModel],
    threshold: f64,
    pair_threshold: f64,
    pairs: HashMap<(usize, usize, usize, usize), bool>,
}

impl Search<'_> {
    fn in_front(&self, p: &Vector3<f64>, support: &[(usize, usize)]) -> bool {
        support.iter().all(|&(c, _)| self.cams[c].project(p).is_ok())
    }

    fn evaluate(&self, support: &[(usize, usize)]) -> Option<(Vector3<f64>, f64)> {
        let views: Vec<(&CameraModel, Pixel)> = support
            .iter()
            .map(|&(c, f)| (&self.cams[c], self.pixels[c][f]))
            .collect();
        let t = triangulate(&views).ok()?;
        self.in_front(&t.point, support)
            .then_some((t.point, t.mean_reprojection_error))
    }

    /// Two-view consistency: the pair triangulates in front of both cameras
    /// with reprojection error below the pair threshold.
    fn pair_ok(&mut self, a: (usize, usize), b: (usize, usize)) -> bool {
        let key = (a.0, a.1, b.0, b.1);
        if let Some(&ok) = self.pairs.get(&key) {
            return ok;
        }
        let ok = matches!(self.evaluate(&[a, b]), Some((_, e)) if e < self.pair_threshold);
        self.pairs.insert(key, ok);
        ok
    }

    /// Depth-first over one feature per camera of `combo`, extending only
    /// with features pairwise consistent with everything chosen so far.
    fn search(
        &mut self,
        combo: &[usize],
        available: &[Vec<usize>],
        chosen: &mut Vec<(usize, usize)>,
        best: &mut Option<Hypothesis>,
    ) {
        if chosen.len() == combo.len() {
            if let Some((point, error)) = self.evaluate(chosen) {
                if error < self.threshold && best.as_ref().is_none_or(|b| error < b.error) {
                    *best = Some(Hypothesis {
                        point,
                        error,
                        support: chosen.clone(),
                    });
                }
            }
            return;
        }
        let cam = combo[chosen.len()];
        for &f in &available[cam] {
            let cand = (cam, f);
            let consistent = (0..chosen.len()).all(|i| {
                let prev = chosen[i];
                self.pair_ok(prev, cand)
            });
            if consistent {
                chosen.push(cand);
                self.search(combo, available, chosen, best);
                chosen.pop();
            }
        }
    }
}

/// Create targets from features not claimed by any existing target.
///
/// Camera subsets are visited from largest to smallest. Within a subset,
/// every tuple of one unclaimed feature per camera whose members are
/// pairwise consistent is triangulated. The accepted hypothesis is the one
/// with the most cameras whose mean reprojection error is below the birth
/// threshold, ties going to the lower error and then to the earlier tuple.
/// Its features are removed and the search repeats until nothing is
/// accepted. New targets get ids `first_id, first_id + 1, ...`.
pub fn spawn_targets(
    features: &[Vec<Feature>],
    unclaimed: &[Vec<usize>],
    cams: &[CameraModel],
    gate: &GateConfig,
    frame: u64,
    first_id: TargetId,
) -> Vec<Spawned> {
    let n = cams.len();
    let mut available: Vec<Vec<usize>> = unclaimed.to_vec();
    available.resize(n, Vec::new());
    let mut search = Search {
        pixels: features
            .iter()
            .map(|l| l.iter().map(Feature::pixel).collect())
            .collect(),
        cams,
        threshold: gate.birth_reprojection_threshold,
        pair_threshold: 3.0 * gate.birth_reprojection_threshold,
        pairs: HashMap::new(),
    };
    search.pixels.resize(n, Vec::new());
    let combos = camera_combinations(n, gate.min_birth_cameras);

    let mut out = Vec::new();
    loop {
        let mut best: Option<Hypothesis> = None;
        let mut best_size = 0;
        for combo in &combos {
            if combo.len() < best_size {
                break;
            }
            if combo.iter().any(|&c| available[c].is_empty()) {
                continue;
            }
            search.search(combo, &available, &mut Vec::with_capacity(combo.len()), &mut best);
            if let Some(b) = &best {
                best_size = b.support.len();
            }
        }
        let Some(h) = best else { break };
        for &(c, f) in &h.support {
            available[c].retain(|&x| x != f);
        }
        let mut cov = Matrix6::zeros();
        for i in 0..3 {
            cov[(i, i)] = gate.sigma_birth * gate.sigma_birth;
            cov[(i + 3, i + 3)] = gate.sigma_vbirth * gate.sigma_vbirth;
        }
        let mean = Vector6::new(h.point.x, h.point.y, h.point.z, 0.0, 0.0, 0.0);
        out.push(Spawned {
            state: TargetState::new(first_id + out.len() as TargetId, mean, cov, frame),
            support: h.support,
            mean_reprojection_error: h.error,
        });
    }
    out
}
