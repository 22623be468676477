//! The classifier/estimator loop that grows seeded patches.
//!
//! Every candidate point is scored against every patch with
//!
//! ```text
//! log P(Ψᵢ | Υ) ∝ (α-1)·ln d - ζ·(z/2ω + z'/2ω') - d/β + C₁
//! ```
//!
//! where `d = d_Π + w·d_V` is the joint plane/boundary distance. The point
//! joins the best patch when that score clears
//! `τ_L = ln τ + F(Υ) + C₂`; otherwise it goes back to the top of the queue.

use std::collections::VecDeque;

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::geometry3d::{point_hull_sq_dist, PlanarHull, Plane, PlaneType, Vec3};
use crate::probability::{gamma_mle, gamma_sum_approx, GammaParams, WeibullParams};
use crate::seeding::SegmentPair;
use crate::stereo::{PointState, ScenePoint, StereoRig};
use crate::{Error, Result, DIST_FLOOR};

/// The defaults suit metre-scale scenes with sub-pixel noise: the joint
/// distance is in squared world units, so `w` must be small for the boundary
/// term to reach beyond the point spacing, and the threshold is lenient
/// enough that classification is decided by the best patch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GrowConfig {
    /// `ln τ`.
    pub log_tau: f64,
    /// Weight of the boundary distance in the joint distance.
    pub w: f64,
    /// Weight of the intensity priors.
    pub zeta: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
}

impl Default for GrowConfig {
    fn default() -> Self {
        GrowConfig {
            log_tau: -30.0,
            w: 1e-10,
            zeta: 1.0,
            batch_size: 1,
            max_epochs: 10_000,
        }
    }
}

impl GrowConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 1 || self.max_epochs < 1 {
            return Err(Error::InvalidParameter(
                "batch_size and max_epochs must be at least 1".into(),
            ));
        }
        if !(self.w > 0.0 && self.zeta >= 0.0) || self.log_tau.is_nan() {
            return Err(Error::InvalidParameter(
                "w must be positive and zeta non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// A planar region under extraction.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub id: usize,
    plane: Plane,
    hull: PlanarHull,
    members: Vec<usize>,
    theta: GammaParams,
    pair: SegmentPair,
    c1: f64,
    zeta: f64,
    w: f64,
}

impl Patch {
    /// Fits plane, hull and Gamma parameters to `members`.
    ///
    /// When the member distances are too uniform for the Gamma fit, the
    /// parameters are set to the moment-matched sum of two exponentials with
    /// scale `fallback_scale`.
    #[allow(clippy::too_many_arguments)]
    pub fn build(
        id: usize,
        pair: SegmentPair,
        members: Vec<usize>,
        cloud: &[ScenePoint],
        plane_type: Option<PlaneType>,
        w: f64,
        zeta: f64,
        fallback_scale: f64,
    ) -> Result<Patch> {
        let positions: Vec<Vec3> = members.iter().map(|&i| cloud[i].position).collect();
        let plane = match plane_type {
            Some(t) => Plane::fit(&positions, t)?,
            None => Plane::fit_auto(&positions)?,
        };
        let hull = PlanarHull::build(&plane, &positions)?;
        let unit = GammaParams {
            alpha: 1.0,
            beta: fallback_scale.max(DIST_FLOOR),
        };
        let mut patch = Patch {
            id,
            plane,
            hull,
            members,
            theta: gamma_sum_approx(unit, unit, w),
            pair,
            c1: 0.0,
            zeta,
            w,
        };
        match gamma_mle(&patch.member_distances(cloud)) {
            Ok(theta) => patch.theta = theta,
            Err(Error::DegenerateSample) => {}
            Err(e) => return Err(e),
        }
        patch.refresh_constant();
        Ok(patch)
    }

    pub fn plane(&self) -> &Plane {
        &self.plane
    }

    pub fn hull(&self) -> &PlanarHull {
        &self.hull
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn theta(&self) -> GammaParams {
        self.theta
    }

    pub fn pair(&self) -> &SegmentPair {
        &self.pair
    }

    pub fn w(&self) -> f64 {
        self.w
    }

    pub fn zeta(&self) -> f64 {
        self.zeta
    }

    /// `C₁ = -α ln β - ln Γ(α) - ½ ln(ω ω' k1 k3 k1' k3')`.
    pub fn c1(&self) -> f64 {
        self.c1
    }

    pub fn mean_intensity(&self) -> f64 {
        0.5 * (self.pair.first.mean_intensity + self.pair.second.mean_intensity)
    }

    fn refresh_constant(&mut self) {
        self.c1 = self.theta.log_normalizer() - 0.5 * (self.pair.first.log_det() + self.pair.second.log_det());
    }

    /// `d_Π + w·d_V`, floored at [`DIST_FLOOR`]. Inside the hull's slab the
    /// boundary distance equals the plane distance, giving `(1+w)·d_Π`.
    pub fn joint_distance(&self, p: &Vec3) -> f64 {
        let d_plane = self.plane.sq_dist(p);
        let d = if self.hull.contains_projection(p) {
            (1.0 + self.w) * d_plane
        } else {
            d_plane + self.w * point_hull_sq_dist(&self.hull, p)
        };
        d.max(DIST_FLOOR)
    }

    /// Joint distances of all members. Members project into their own hull,
    /// so each is `(1+w)·d_Π` and one pass over the plane suffices.
    pub fn member_distances(&self, cloud: &[ScenePoint]) -> Vec<f64> {
        let n = self.plane.normal();
        let offset = self.plane.offset();
        let scale = 1.0 + self.w;
        self.members
            .iter()
            .map(|&i| {
                let s = n.dot(&cloud[i].position) + offset;
                (scale * s * s).max(DIST_FLOOR)
            })
            .collect()
    }

    /// Log discriminant of `sp` for this patch, up to patch-independent
    /// constants. `-∞` when the point has no finite back-projection.
    pub fn log_posterior(&self, sp: &ScenePoint) -> f64 {
        let Some((x, x_prime)) = &sp.reprojection else {
            return f64::NEG_INFINITY;
        };
        let d = self.joint_distance(&sp.position);
        let prior = self.pair.first.log_kernel(x) + self.pair.second.log_kernel(x_prime);
        (self.theta.alpha - 1.0) * d.ln() + self.zeta * prior - d / self.theta.beta + self.c1
    }

    /// Adds points to the patch: refits the plane from the running sums,
    /// updates the hull, re-estimates θ from all member distances and marks
    /// the points assigned. A degenerate Gamma fit keeps the previous θ, in
    /// which case `Ok(false)` is returned.
    pub fn accept(&mut self, ids: &[usize], cloud: &mut [ScenePoint]) -> Result<bool> {
        if ids.is_empty() {
            return Ok(true);
        }
        let new_points: Vec<Vec3> = ids.iter().map(|&i| cloud[i].position).collect();
        let mut plane = self.plane.clone();
        plane.extend(new_points.iter())?;
        let mut members = self.members.clone();
        members.extend_from_slice(ids);
        let positions: Vec<Vec3> = members.iter().map(|&i| cloud[i].position).collect();
        let hull = self.hull.update(&plane, &positions, &new_points)?;
        self.plane = plane;
        self.hull = hull;
        self.members = members;
        let refit = match gamma_mle(&self.member_distances(cloud)) {
            Ok(theta) => {
                self.theta = theta;
                true
            }
            Err(e) => {
                debug!("patch {}: keeping previous gamma parameters ({e})", self.id);
                false
            }
        };
        self.refresh_constant();
        for &i in ids {
            cloud[i].state = PointState::Assigned(self.id);
        }
        Ok(refit)
    }

    /// Overrides the cached constant by `delta`; used to check that the
    /// classification only depends on score differences.
    #[doc(hidden)]
    pub fn shift_constant(&mut self, delta: f64) {
        self.c1 += delta;
    }
}

/// Threshold on the log discriminant for `sp`.
pub fn log_threshold(sp: &ScenePoint, cfg: &GrowConfig, noise: &WeibullParams) -> f64 {
    cfg.log_tau + sp.penalty + noise.log_constant()
}

/// Index (into `patches`) of the patch the point should join, if any.
/// Ties go to the lowest patch id.
pub fn classify(patches: &[Patch], sp: &ScenePoint, cfg: &GrowConfig, noise: &WeibullParams) -> Option<usize> {
    if sp.is_assigned() {
        return None;
    }
    let mut best: Option<(usize, f64)> = None;
    for (idx, patch) in patches.iter().enumerate() {
        if sp.rejected_by(patch.id) {
            continue;
        }
        let score = patch.log_posterior(sp);
        let better = match best {
            None => true,
            Some((b, s)) => score > s || (score == s && patch.id < patches[b].id),
        };
        if better && !score.is_nan() {
            best = Some((idx, score));
        }
    }
    let (idx, score) = best?;
    (score >= log_threshold(sp, cfg, noise)).then_some(idx)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrowReport {
    pub epochs: usize,
    pub accepted: usize,
    /// Stopped by `max_epochs` rather than by a pass without acceptances.
    pub truncated: bool,
    /// Updates that kept the previous Gamma parameters.
    pub retained_theta: usize,
}

/// Orders the inlier queue so that popping from the back serves the points
/// nearest to the two cameras first.
pub fn initial_queue(cloud: &[ScenePoint], rig: &StereoRig) -> VecDeque<usize> {
    let (c0, c1) = rig.camera_centers();
    let mut keyed: Vec<(f64, usize)> = cloud
        .iter()
        .filter(|sp| !sp.is_assigned() && sp.penalty.is_finite())
        .map(|sp| {
            let p = sp.position;
            ((p - c0).norm_squared() + (p - c1).norm_squared(), sp.id)
        })
        .collect();
    keyed.sort_by(|a, b| b.0.total_cmp(&a.0).then(b.1.cmp(&a.1)));
    keyed.into_iter().map(|(_, id)| id).collect()
}

/// Runs the growing loop until a full pass over the queue accepts nothing,
/// or `max_epochs` passes have run.
pub fn grow(patches: &mut [Patch], cloud: &mut [ScenePoint], cfg: &GrowConfig, rig: &StereoRig) -> Result<GrowReport> {
    cfg.validate()?;
    let noise = rig
        .noise_model
        .ok_or_else(|| Error::InvalidParameter("rig has no calibrated noise model".into()))?;
    let mut queue = initial_queue(cloud, rig);
    let mut report = GrowReport::default();
    if patches.is_empty() {
        return Ok(report);
    }
    let mut accepted_by: Vec<Vec<usize>> = vec![Vec::new(); patches.len()];
    let mut rejected = Vec::with_capacity(cfg.batch_size);
    while !queue.is_empty() {
        if report.epochs >= cfg.max_epochs {
            report.truncated = true;
            break;
        }
        let mut remaining = queue.len();
        let mut accepted_this_epoch = 0;
        while remaining > 0 {
            let take = cfg.batch_size.min(remaining);
            remaining -= take;
            rejected.clear();
            for _ in 0..take {
                let id = queue.pop_back().expect("queue holds `remaining` entries");
                match classify(patches, &cloud[id], cfg, &noise) {
                    Some(idx) => accepted_by[idx].push(id),
                    None => rejected.push(id),
                }
            }
            for (idx, ids) in accepted_by.iter_mut().enumerate() {
                if ids.is_empty() {
                    continue;
                }
                match patches[idx].accept(ids, cloud) {
                    Ok(refit) => {
                        accepted_this_epoch += ids.len();
                        report.retained_theta += usize::from(!refit);
                    }
                    Err(e) => {
                        warn!(
                            "patch {}: update failed ({e}); points returned to the queue",
                            patches[idx].id
                        );
                        rejected.extend_from_slice(ids);
                    }
                }
                ids.clear();
            }
            for &id in &rejected {
                queue.push_front(id);
            }
        }
        report.epochs += 1;
        report.accepted += accepted_this_epoch;
        if accepted_this_epoch == 0 {
            break;
        }
    }
    if report.retained_theta > 0 {
        warn!(
            "{} patch updates kept their previous gamma parameters (member distances too uniform)",
            report.retained_theta
        );
    }
    Ok(report)
}
