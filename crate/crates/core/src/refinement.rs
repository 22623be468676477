//! Post-growth clean-up: small patches are discarded and near-coplanar,
//! adjacent, similarly coloured patches are merged.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::geometry3d::{hull_hull_min_sq_dist, PlanarHull};
use crate::growing::Patch;
use crate::stereo::{PointState, ScenePoint};
use crate::{Error, Result, DIST_FLOOR};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefineConfig {
    /// Minimum `|n_i · n_j|` for a merge.
    pub normal_dot_min: f64,
    /// Maximum squared hull-to-hull distance for a merge.
    pub hull_dist_max: f64,
    pub min_members: usize,
    pub min_area: f64,
    /// Maximum difference of mean segment intensities for a merge.
    pub intensity_tolerance: f64,
}

impl RefineConfig {
    /// Defaults scaled to a cloud with bounding-box diagonal `diag` and seed
    /// radius `radius`.
    pub fn scaled(diag: f64, radius: f64) -> RefineConfig {
        RefineConfig {
            normal_dot_min: 0.98,
            hull_dist_max: (2.0 * radius).powi(2),
            min_members: 10,
            min_area: 1e-4 * diag * diag,
            intensity_tolerance: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.normal_dot_min > 0.0
            && self.normal_dot_min <= 1.0
            && self.hull_dist_max > 0.0
            && self.min_members > 0
            && self.min_area > 0.0
            && self.intensity_tolerance >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter("refinement thresholds out of range".into()))
        }
    }
}

pub fn hull_area(hull: &PlanarHull) -> f64 {
    hull.area()
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefineReport {
    pub discarded: Vec<usize>,
    /// `(kept id, absorbed id)` in merge order.
    pub merged: Vec<(usize, usize)>,
}

/// Discards then merges patches. Points of discarded patches become
/// available again; points of an absorbed patch move to the patch that keeps
/// the lower id.
pub fn refine(patches: Vec<Patch>, cloud: &mut [ScenePoint], cfg: &RefineConfig) -> Result<(Vec<Patch>, RefineReport)> {
    cfg.validate()?;
    let mut report = RefineReport::default();
    let mut kept = Vec::with_capacity(patches.len());
    for patch in patches {
        if patch.members().len() < cfg.min_members || hull_area(patch.hull()) < cfg.min_area {
            for &i in patch.members() {
                cloud[i].state = PointState::Available;
            }
            report.discarded.push(patch.id);
        } else {
            kept.push(patch);
        }
    }
    kept.sort_by_key(|p| p.id);

    // Pairs that failed to merge (refit error) are not retried.
    let mut blocked: Vec<(usize, usize)> = Vec::new();
    while let Some((a, b)) = best_pair(&kept, cfg, &blocked) {
        let (keep_id, drop_id) = (kept[a].id, kept[b].id);
        let mut members = kept[a].members().to_vec();
        members.extend_from_slice(kept[b].members());
        let fallback = mean_finite_dc(&members, cloud);
        let merged = Patch::build(
            keep_id,
            *kept[a].pair(),
            members,
            cloud,
            None,
            kept[a].w(),
            kept[a].zeta(),
            fallback,
        );
        match merged {
            Ok(patch) => {
                for &i in kept[b].members() {
                    cloud[i].state = PointState::Assigned(keep_id);
                }
                kept[a] = patch;
                kept.remove(b);
                report.merged.push((keep_id, drop_id));
            }
            Err(e) => {
                warn!("merge of patches {keep_id} and {drop_id} failed: {e}");
                blocked.push((keep_id, drop_id));
            }
        }
    }
    Ok((kept, report))
}

/// Qualifying pair with the largest `|E|`, ties to the lexicographically
/// lowest id pair. Indices are returned with `a < b`.
fn best_pair(patches: &[Patch], cfg: &RefineConfig, blocked: &[(usize, usize)]) -> Option<(usize, usize)> {
    let mut best: Option<(usize, usize, f64)> = None;
    for a in 0..patches.len() {
        for b in a + 1..patches.len() {
            let (pa, pb) = (&patches[a], &patches[b]);
            if blocked.contains(&(pa.id, pb.id)) {
                continue;
            }
            let e = pa.plane().normal().dot(&pb.plane().normal()).abs().min(1.0);
            if e < cfg.normal_dot_min || (pa.mean_intensity() - pb.mean_intensity()).abs() > cfg.intensity_tolerance {
                continue;
            }
            if best.is_some_and(|(_, _, be)| e <= be) {
                continue;
            }
            if hull_hull_min_sq_dist(pa.hull(), pb.hull()) <= cfg.hull_dist_max {
                best = Some((a, b, e));
            }
        }
    }
    best.map(|(a, b, _)| (a, b))
}

pub(crate) fn mean_finite_dc(ids: &[usize], cloud: &[ScenePoint]) -> f64 {
    let (sum, n) = ids
        .iter()
        .map(|&i| cloud[i].d_c)
        .filter(|d| d.is_finite())
        .fold((0.0, 0usize), |(s, n), d| (s + d, n + 1));
    if n == 0 {
        DIST_FLOOR
    } else {
        sum / n as f64
    }
}
