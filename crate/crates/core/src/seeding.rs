//! Seed points from corresponding ellipse segments and the initial patch
//! fits around them.

use std::collections::{BTreeSet, VecDeque};

use log::warn;
use serde::{Deserialize, Serialize};

use crate::geometry3d::{choose_plane_type, Plane, Vec3};
use crate::growing::Patch;
use crate::stereo::{EllipsePrior, PointState, ScenePoint, StereoRig, View};
use crate::{Error, Result, DIST_FLOOR};

/// Corresponding segments in the two views and the triangulated seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentPair {
    pub first: EllipsePrior,
    pub second: EllipsePrior,
    pub seed: Vec3,
}

/// Segments of both views and the index pairs that correspond.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SegmentSet {
    pub first: Vec<EllipsePrior>,
    pub second: Vec<EllipsePrior>,
    pub correspondence: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeedConfig {
    /// Sphere radius `R_τ` in world units.
    pub radius: f64,
    pub min_cluster: usize,
    /// Squared-distance cut for the initial fit. `None` uses
    /// `9·(median |residual|)²`.
    pub inlier_residual: Option<f64>,
    /// Seeds sharing more than this fraction of sphere members with an
    /// earlier seed are dropped.
    pub max_overlap: f64,
}

impl SeedConfig {
    /// Radius at 5 % of the cloud's bounding-box diagonal.
    pub fn for_cloud(cloud: &[ScenePoint]) -> SeedConfig {
        SeedConfig {
            radius: 0.05 * bbox_diagonal(cloud),
            min_cluster: 6,
            inlier_residual: None,
            max_overlap: 0.8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0) || self.min_cluster < 4 {
            return Err(Error::InvalidParameter(
                "seed radius must be positive and min_cluster at least 4".into(),
            ));
        }
        Ok(())
    }
}

pub fn bbox_diagonal(cloud: &[ScenePoint]) -> f64 {
    let mut lo = Vec3::repeat(f64::INFINITY);
    let mut hi = Vec3::repeat(f64::NEG_INFINITY);
    for sp in cloud {
        lo = lo.inf(&sp.position);
        hi = hi.sup(&sp.position);
    }
    if cloud.is_empty() {
        0.0
    } else {
        (hi - lo).norm()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Pairing {
    pub pairs: Vec<SegmentPair>,
    /// `(index in first view, index in second view, reason)` of dropped pairs.
    pub dropped: Vec<(usize, usize, String)>,
}

/// Triangulates the centroids of corresponding segments into seed points.
pub fn segment_to_pairs(
    first: &[EllipsePrior],
    second: &[EllipsePrior],
    correspondence: &[(usize, usize)],
    rig: &StereoRig,
) -> Result<Pairing> {
    let mut out = Pairing::default();
    for &(i, j) in correspondence {
        let (Some(a), Some(b)) = (first.get(i), second.get(j)) else {
            return Err(Error::InvalidParameter(format!(
                "correspondence ({i}, {j}) out of range"
            )));
        };
        match rig.triangulate(&a.centroid, &b.centroid) {
            Ok(seed) => out.pairs.push(SegmentPair {
                first: *a,
                second: *b,
                seed,
            }),
            Err(e) => {
                warn!("segment pair ({i}, {j}) dropped: {e}");
                out.dropped.push((i, j, e.to_string()));
            }
        }
    }
    Ok(out)
}

/// Pairs segments of the two views by rank of area. Approximate: only
/// meaningful when both views segment the scene alike.
pub fn pair_by_area(first: &[EllipsePrior], second: &[EllipsePrior]) -> Vec<(usize, usize)> {
    let rank = |segs: &[EllipsePrior]| {
        let mut idx: Vec<usize> = (0..segs.len()).collect();
        idx.sort_by(|&a, &b| segs[b].area().total_cmp(&segs[a].area()).then(a.cmp(&b)));
        idx
    };
    rank(first).into_iter().zip(rank(second)).collect()
}

/// Row-major grayscale image with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<GrayImage> {
        if width == 0 || height == 0 || data.len() != width * height {
            return Err(Error::InvalidParameter(
                "image must be non-empty with width*height samples".into(),
            ));
        }
        Ok(GrayImage { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> GrayImage {
        let data = (0..height)
            .flat_map(|y| (0..width).map(move |x| (x, y)))
            .map(|(x, y)| f(x, y))
            .collect();
        GrayImage { width, height, data }
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }
}

/// Minimal intensity segmenter: 4-connected components of the image
/// quantised to 16 levels, each summarised by its pixel moments. Components
/// under 0.1 % of the image are discarded; the largest `max_segments` are
/// returned, largest first.
pub fn naive_segment(image: &GrayImage, max_segments: usize, view: View) -> Vec<EllipsePrior> {
    const LEVELS: f64 = 16.0;
    let (w, h) = (image.width, image.height);
    let level = |i: usize| ((image.data[i].clamp(0.0, 1.0) * LEVELS) as usize).min(LEVELS as usize - 1);
    let mut label = vec![usize::MAX; w * h];
    let mut components: Vec<(usize, EllipsePrior)> = Vec::new();
    let min_size = ((w * h) as f64 * 0.001).ceil() as usize;
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if label[start] != usize::MAX {
            continue;
        }
        let lvl = level(start);
        let tag = components.len() + label.len();
        label[start] = tag;
        queue.push_back(start);
        let (mut n, mut sx, mut sy, mut sxx, mut sxy, mut syy, mut si) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        while let Some(i) = queue.pop_front() {
            // Pixel centres sit at half-integer coordinates.
            let (x, y) = ((i % w) as f64 + 0.5, (i / w) as f64 + 0.5);
            n += 1.0;
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
            syy += y * y;
            si += image.data[i];
            let (px, py) = (i % w, i / w);
            let mut visit = |j: usize| {
                if label[j] == usize::MAX && level(j) == lvl {
                    label[j] = tag;
                    queue.push_back(j);
                }
            };
            if px > 0 {
                visit(i - 1);
            }
            if px + 1 < w {
                visit(i + 1);
            }
            if py > 0 {
                visit(i - w);
            }
            if py + 1 < h {
                visit(i + w);
            }
        }
        if (n as usize) < min_size {
            continue;
        }
        let (mx, my) = (sx / n, sy / n);
        // Each pixel is a unit square, adding 1/12 to the point variances.
        let k1 = sxx / n - mx * mx + 1.0 / 12.0;
        let k2 = sxy / n - mx * my;
        let k3 = syy / n - my * my + 1.0 / 12.0;
        if let Ok(e) = EllipsePrior::new(view, [mx, my], [k1, k2, k3], si / n) {
            components.push((n as usize, e));
        }
    }
    components.sort_by_key(|c| std::cmp::Reverse(c.0));
    components.truncate(max_segments);
    components.into_iter().map(|(_, e)| e).collect()
}

/// Why a seed did not produce a patch.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SeedRejection {
    #[error("sparse seed ({0} points in sphere)")]
    Sparse(usize),
    #[error("degenerate seed: {0}")]
    Degenerate(Error),
    #[error("duplicate seed (overlaps patch {0})")]
    Duplicate(usize),
}

/// Builds the initial patch around one seed.
///
/// Available points inside the sphere are fitted once, points beyond the
/// residual cut are rejected for this patch for good, and the plane, hull and
/// Gamma parameters are fitted to the rest. Inliers become assigned.
pub fn seed_patch(
    id: usize,
    pair: &SegmentPair,
    cloud: &mut [ScenePoint],
    cfg: &SeedConfig,
    w: f64,
    zeta: f64,
) -> std::result::Result<Patch, SeedRejection> {
    let r2 = cfg.radius * cfg.radius;
    let cluster: Vec<usize> = cloud
        .iter()
        .filter(|sp| !sp.is_assigned() && (sp.position - pair.seed).norm_squared() <= r2)
        .map(|sp| sp.id)
        .collect();
    if cluster.len() < cfg.min_cluster {
        return Err(SeedRejection::Sparse(cluster.len()));
    }
    let positions: Vec<Vec3> = cluster.iter().map(|&i| cloud[i].position).collect();
    let plane_type = choose_plane_type(&positions).map_err(SeedRejection::Degenerate)?;
    let plane = Plane::fit(&positions, plane_type).map_err(SeedRejection::Degenerate)?;

    let sq: Vec<f64> = positions.iter().map(|p| plane.sq_dist(p)).collect();
    let cut = match cfg.inlier_residual {
        Some(c) => c,
        None => {
            let mut abs: Vec<f64> = sq.iter().map(|d| d.sqrt()).collect();
            abs.sort_by(f64::total_cmp);
            let med = abs[abs.len() / 2];
            (9.0 * med * med).max(DIST_FLOOR)
        }
    };
    let mut inliers = Vec::new();
    let mut outliers = Vec::new();
    for (&i, &d) in cluster.iter().zip(&sq) {
        if d <= cut {
            inliers.push(i);
        } else {
            outliers.push(i);
        }
    }
    if inliers.len() < cfg.min_cluster {
        return Err(SeedRejection::Sparse(inliers.len()));
    }

    let finite_dc: Vec<f64> = inliers
        .iter()
        .map(|&i| cloud[i].d_c)
        .filter(|d| d.is_finite())
        .collect();
    let fallback = if finite_dc.is_empty() {
        DIST_FLOOR
    } else {
        finite_dc.iter().sum::<f64>() / finite_dc.len() as f64
    };
    let patch = Patch::build(id, *pair, inliers, cloud, Some(plane_type), w, zeta, fallback)
        .map_err(SeedRejection::Degenerate)?;
    for &i in patch.members() {
        cloud[i].state = PointState::Assigned(id);
    }
    for &i in &outliers {
        cloud[i].reject_for(id);
    }
    Ok(patch)
}

#[derive(Debug, Clone, Default)]
pub struct SeedingOutcome {
    pub patches: Vec<Patch>,
    /// `(index into the input pairs, reason)`.
    pub rejected: Vec<(usize, SeedRejection)>,
}

/// Seeds patches in order of decreasing first-view segment area. Patch ids
/// are assigned consecutively to the seeds that survive.
pub fn seed_all(
    pairs: &[SegmentPair],
    cloud: &mut [ScenePoint],
    cfg: &SeedConfig,
    w: f64,
    zeta: f64,
) -> Result<SeedingOutcome> {
    cfg.validate()?;
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.sort_by(|&a, &b| pairs[b].first.area().total_cmp(&pairs[a].first.area()).then(a.cmp(&b)));
    let r2 = cfg.radius * cfg.radius;
    let mut spheres: Vec<(usize, BTreeSet<usize>)> = Vec::new();
    let mut out = SeedingOutcome::default();
    for idx in order {
        let pair = &pairs[idx];
        let sphere: BTreeSet<usize> = cloud
            .iter()
            .filter(|sp| (sp.position - pair.seed).norm_squared() <= r2)
            .map(|sp| sp.id)
            .collect();
        let duplicate = spheres.iter().find(|(_, other)| {
            let shared = sphere.intersection(other).count();
            let smaller = sphere.len().min(other.len());
            smaller > 0 && shared as f64 > cfg.max_overlap * smaller as f64
        });
        if let Some((patch_id, _)) = duplicate {
            out.rejected.push((idx, SeedRejection::Duplicate(*patch_id)));
            continue;
        }
        let id = out.patches.len();
        match seed_patch(id, pair, cloud, cfg, w, zeta) {
            Ok(patch) => {
                spheres.push((id, sphere));
                out.patches.push(patch);
            }
            Err(reason) => out.rejected.push((idx, reason)),
        }
    }
    Ok(out)
}
