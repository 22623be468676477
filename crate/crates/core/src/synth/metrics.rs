use std::time::Instant;

use log::warn;
use serde::{Deserialize, Serialize};

use super::{generate, Face, GroundTruth, SceneSpec};
use crate::formats::PatchRecord;
use crate::geometry3d::{point_hull_sq_dist, PlanarHull, Plane, Vec3};
use crate::pipeline::{run, PipelineConfig};
use crate::Result;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SsdReport {
    /// Sum over matched patches.
    pub total: f64,
    /// `total / matched`, `NaN` when nothing matched.
    pub avg: f64,
    pub matched: usize,
    /// `(patch id, face index, ssd)` for every matched patch.
    pub per_patch: Vec<(usize, usize, f64)>,
    /// Patches whose hull centroid is farther from the nearest face than
    /// that face's radius.
    pub unmatched: Vec<usize>,
}

/// Squared difference of two implicit planes, minimised over the sign of the
/// second.
pub fn plane_ssd(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    let same: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let flip: f64 = a.iter().zip(b).map(|(x, y)| (x + y).powi(2)).sum();
    same.min(flip)
}

/// Plane coefficient error of each patch against the face nearest to the
/// patch's hull centroid. Distance to a face is measured to its polygon.
pub fn ssd_error(gt: &GroundTruth, patches: &[PatchRecord]) -> SsdReport {
    let hulls: Vec<Option<PlanarHull>> = gt.faces.iter().map(face_hull).collect();
    let mut report = SsdReport::default();
    for patch in patches {
        let c = patch.hull_centroid();
        let nearest = hulls
            .iter()
            .enumerate()
            .map(|(i, h)| {
                let d = match h {
                    Some(h) => point_hull_sq_dist(h, &c),
                    None => (gt.faces[i].centroid() - c).norm_squared(),
                };
                (i, d)
            })
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        match nearest {
            Some((face, d)) if d.sqrt() <= gt.faces[face].radius() => {
                let e = plane_ssd(&gt.planes[face], &patch.implicit);
                report.total += e;
                report.per_patch.push((patch.id, face, e));
            }
            _ => report.unmatched.push(patch.id),
        }
    }
    report.matched = report.per_patch.len();
    report.avg = if report.matched == 0 {
        f64::NAN
    } else {
        report.total / report.matched as f64
    };
    report
}

/// `1 - n/N` under a greedy one-to-one assignment of patches to faces on the
/// confusion matrix. Unlabelled points are correct only when unassigned.
pub fn classification_error(gt: &GroundTruth, patches: &[PatchRecord]) -> f64 {
    let n_points = gt.labels.len();
    if n_points == 0 {
        return 0.0;
    }
    let mut predicted: Vec<Option<usize>> = vec![None; n_points];
    for (pi, patch) in patches.iter().enumerate() {
        for &m in &patch.members {
            if m < n_points {
                predicted[m] = Some(pi);
            }
        }
    }
    let n_faces = gt.faces.len();
    let mut confusion = vec![vec![0usize; patches.len()]; n_faces];
    let mut correct = 0usize;
    for (label, pred) in gt.labels.iter().zip(&predicted) {
        match (label, pred) {
            (Some(f), Some(p)) if *f < n_faces => confusion[*f][*p] += 1,
            (None, None) => correct += 1,
            _ => {}
        }
    }
    let mut cells: Vec<(usize, usize, usize)> = confusion
        .iter()
        .enumerate()
        .flat_map(|(f, row)| row.iter().enumerate().map(move |(p, &c)| (c, f, p)))
        .filter(|c| c.0 > 0)
        .collect();
    cells.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut face_used = vec![false; n_faces];
    let mut patch_used = vec![false; patches.len()];
    for (count, f, p) in cells {
        if !face_used[f] && !patch_used[p] {
            face_used[f] = true;
            patch_used[p] = true;
            correct += count;
        }
    }
    1.0 - correct as f64 / n_points as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub points: usize,
    pub patches: usize,
    pub seconds: f64,
}

/// `k` tilted vertical strips side by side, alternating in depth. Used to
/// scale the face count at a fixed scene extent.
pub fn strip_faces(k: usize) -> Vec<Face> {
    let width = 4.0 / k as f64;
    (0..k)
        .map(|i| {
            let x0 = -2.0 + i as f64 * width;
            let z = if i % 2 == 0 { 6.0 } else { 7.0 };
            let corner = Vec3::new(x0, -1.5, z);
            let e1 = Vec3::new(width * 0.95, 0.0, 0.3 * width);
            let e2 = Vec3::new(0.0, 3.0, 0.0);
            Face::quad(&format!("strip{i}"), corner, e1, e2, (i % 2) as f64 * 0.5 + 0.2)
        })
        .collect()
}

/// Times the full pipeline over total point counts (two faces) and over
/// face counts at the first point count. Growth worse than 4× per doubling of
/// the point count is logged as a warning.
pub fn runtime_probe(point_counts: &[usize], patch_counts: &[usize], sigma: f64, seed: u64) -> Result<Vec<ProbeRow>> {
    let mut rows = Vec::new();
    let time_case = |faces: Vec<Face>, total: usize| -> Result<ProbeRow> {
        let k = faces.len();
        let spec = SceneSpec {
            preset: None,
            faces,
            points_per_face: (total / k).max(1),
            rig: Default::default(),
            sigma,
            seed,
        };
        let scene = generate(&spec)?;
        let cfg = PipelineConfig::default();
        let start = Instant::now();
        run(scene.cloud, &scene.rig, &scene.segments, &cfg)?;
        Ok(ProbeRow {
            points: total,
            patches: k,
            seconds: start.elapsed().as_secs_f64(),
        })
    };
    for &n in point_counts {
        rows.push(time_case(strip_faces(2), n)?);
    }
    let base = point_counts.first().copied().unwrap_or(2000);
    for &k in patch_counts {
        rows.push(time_case(strip_faces(k), base)?);
    }
    for pair in rows[..point_counts.len()].windows(2) {
        let ratio = pair[1].points as f64 / pair[0].points as f64;
        if pair[1].seconds > pair[0].seconds * ratio * ratio {
            warn!(
                "runtime grew from {:.3}s at {} points to {:.3}s at {} points",
                pair[0].seconds, pair[0].points, pair[1].seconds, pair[1].points
            );
        }
    }
    Ok(rows)
}

fn face_hull(face: &Face) -> Option<PlanarHull> {
    let plane = Plane::fit_auto(&face.vertices).ok()?;
    PlanarHull::build(&plane, &face.vertices).ok()
}
