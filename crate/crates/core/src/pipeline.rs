//! End-to-end extraction: uncertainty, noise calibration, seeding, growth and
//! refinement.

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::growing::{grow, GrowConfig, GrowReport, Patch};
use crate::probability::WeibullParams;
use crate::refinement::{refine, RefineConfig, RefineReport};
use crate::seeding::{bbox_diagonal, seed_all, segment_to_pairs, SeedConfig, SeedRejection, SegmentSet};
use crate::stereo::{apply_noise_model, calibrate_noise_model, compute_uncertainties, ScenePoint, StereoRig};
use crate::{Error, Result, DIST_FLOOR};

/// Seeding thresholds; unset values are derived from the cloud.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SeedSettings {
    pub radius: Option<f64>,
    pub min_cluster: usize,
    pub inlier_residual: Option<f64>,
    pub max_overlap: f64,
}

impl Default for SeedSettings {
    fn default() -> Self {
        SeedSettings {
            radius: None,
            min_cluster: 6,
            inlier_residual: None,
            max_overlap: 0.8,
        }
    }
}

impl SeedSettings {
    pub fn resolve(&self, cloud: &[ScenePoint]) -> SeedConfig {
        let auto = SeedConfig::for_cloud(cloud);
        SeedConfig {
            radius: self.radius.unwrap_or(auto.radius),
            min_cluster: self.min_cluster,
            inlier_residual: self.inlier_residual,
            max_overlap: self.max_overlap,
        }
    }
}

/// Refinement thresholds; unset values scale with the cloud.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefineSettings {
    pub normal_dot_min: f64,
    pub hull_dist_max: Option<f64>,
    pub min_members: usize,
    pub min_area: Option<f64>,
    pub intensity_tolerance: f64,
}

impl Default for RefineSettings {
    fn default() -> Self {
        RefineSettings {
            normal_dot_min: 0.98,
            hull_dist_max: None,
            min_members: 10,
            min_area: None,
            intensity_tolerance: 0.1,
        }
    }
}

impl RefineSettings {
    pub fn resolve(&self, cloud: &[ScenePoint], seed_radius: f64) -> RefineConfig {
        let auto = RefineConfig::scaled(bbox_diagonal(cloud), seed_radius);
        RefineConfig {
            normal_dot_min: self.normal_dot_min,
            hull_dist_max: self.hull_dist_max.unwrap_or(auto.hull_dist_max),
            min_members: self.min_members,
            min_area: self.min_area.unwrap_or(auto.min_area),
            intensity_tolerance: self.intensity_tolerance,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Monte-Carlo draws per point for `d_c`.
    pub trials: usize,
    pub seed: u64,
    pub seeding: SeedSettings,
    pub grow: GrowConfig,
    pub refine: RefineSettings,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            trials: 20,
            seed: 0,
            seeding: SeedSettings::default(),
            grow: GrowConfig::default(),
            refine: RefineSettings::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Extraction {
    pub patches: Vec<Patch>,
    pub cloud: Vec<ScenePoint>,
    /// The input rig with the noise model used for thresholding.
    pub rig: StereoRig,
    pub seed_rejections: Vec<(usize, SeedRejection)>,
    pub dropped_pairs: usize,
    pub grow: GrowReport,
    pub refine: RefineReport,
}

impl Extraction {
    pub fn labels(&self) -> Vec<Option<usize>> {
        self.cloud.iter().map(ScenePoint::assigned_to).collect()
    }
}

/// Noise model of the rig if set, otherwise fitted to the cloud's own `d_c`.
/// When that fit fails the exponential law with the mean `d_c` is used.
pub fn resolve_noise_model(rig: &StereoRig, cloud: &[ScenePoint]) -> WeibullParams {
    if let Some(wp) = rig.noise_model {
        return wp;
    }
    match calibrate_noise_model(cloud) {
        Ok(wp) => wp,
        Err(e) => {
            let finite: Vec<f64> = cloud.iter().map(|sp| sp.d_c).filter(|d| d.is_finite()).collect();
            let mean = if finite.is_empty() {
                0.0
            } else {
                finite.iter().sum::<f64>() / finite.len() as f64
            };
            warn!("noise calibration failed ({e}); using an exponential law");
            WeibullParams {
                k: 1.0,
                lambda: mean.max(DIST_FLOOR),
            }
        }
    }
}

pub fn run(
    mut cloud: Vec<ScenePoint>,
    rig: &StereoRig,
    segments: &SegmentSet,
    cfg: &PipelineConfig,
) -> Result<Extraction> {
    rig.validate()?;
    cfg.grow.validate()?;
    if cloud.is_empty() {
        return Err(Error::NotEnoughData("empty point cloud".into()));
    }
    if cloud.iter().enumerate().any(|(i, sp)| sp.id != i) {
        return Err(Error::InvalidParameter(
            "point ids must equal their index in the cloud".into(),
        ));
    }
    compute_uncertainties(&mut cloud, rig, cfg.trials, cfg.seed)?;
    let mut rig = rig.clone();
    let noise = resolve_noise_model(&rig, &cloud);
    rig.noise_model = Some(noise);
    apply_noise_model(&mut cloud, &noise);

    let pairing = segment_to_pairs(&segments.first, &segments.second, &segments.correspondence, &rig)?;
    let seed_cfg = cfg.seeding.resolve(&cloud);
    let seeded = seed_all(&pairing.pairs, &mut cloud, &seed_cfg, cfg.grow.w, cfg.grow.zeta)?;
    info!(
        "{} seeds -> {} patches ({} rejected)",
        pairing.pairs.len(),
        seeded.patches.len(),
        seeded.rejected.len()
    );
    if seeded.patches.is_empty() {
        return Err(Error::NotEnoughData("no seed produced a patch".into()));
    }
    let mut patches = seeded.patches;
    let grow_report = grow(&mut patches, &mut cloud, &cfg.grow, &rig)?;
    info!(
        "grew {} points in {} epochs{}",
        grow_report.accepted,
        grow_report.epochs,
        if grow_report.truncated { " (truncated)" } else { "" }
    );
    let refine_cfg = cfg.refine.resolve(&cloud, seed_cfg.radius);
    let (patches, refine_report) = refine(patches, &mut cloud, &refine_cfg)?;
    Ok(Extraction {
        patches,
        cloud,
        rig,
        seed_rejections: seeded.rejected,
        dropped_pairs: pairing.dropped.len(),
        grow: grow_report,
        refine: refine_report,
    })
}
