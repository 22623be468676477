use std::fmt;
use std::path::Path;

use patchgrow::formats::{
    from_json, read_file, read_ply, to_json, write_file, write_ply, Cameras, GroundTruthDoc, PatchRecord, Patches,
    PointCloud, RunConfig, Segments, Versioned, FORMAT_VERSION,
};
use patchgrow::growing::GrowReport;
use patchgrow::pipeline::{self, PipelineConfig};
use patchgrow::stereo::{calibrate_noise_model, compute_uncertainties};
use patchgrow::synth::{classification_error, generate, ssd_error, Preset, SceneSpec};
use patchgrow::WeibullParams;
use serde::Serialize;

#[derive(Debug)]
pub enum CliError {
    /// Malformed or inconsistent input.
    Input(String),
    /// The pipeline ran but could not produce a result.
    Pipeline(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Pipeline(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(m) | CliError::Pipeline(m) => f.write_str(m),
        }
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;

fn input_err(path: &Path, e: impl fmt::Display) -> CliError {
    CliError::Input(format!("{}: {e}", path.display()))
}

pub fn read_cloud(path: &Path) -> CliResult<PointCloud> {
    let bytes = read_file(path).map_err(|e| CliError::Input(e.to_string()))?;
    let cloud = read_ply(&bytes).map_err(|e| input_err(path, e))?;
    if cloud.points.is_empty() {
        return Err(input_err(path, "point cloud has no vertices"));
    }
    Ok(cloud)
}

pub fn read_doc<T: Versioned>(path: &Path) -> CliResult<T> {
    let bytes = read_file(path).map_err(|e| CliError::Input(e.to_string()))?;
    let text = String::from_utf8(bytes).map_err(|_| input_err(path, "not UTF-8 text"))?;
    from_json(&text).map_err(|e| input_err(path, e))
}

pub fn write_out(dir: &Path, name: &str, bytes: &[u8]) -> CliResult {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Input(format!("{}: {e}", dir.display())))?;
    write_file(&dir.join(name), bytes).map_err(|e| CliError::Input(e.to_string()))
}

pub fn load_config(path: Option<&Path>) -> CliResult<RunConfig> {
    match path {
        Some(p) => read_doc(p),
        None => Ok(RunConfig::default()),
    }
}

/// Preset part of a scene id (`two-plane/n500/...` → `two-plane`).
pub fn preset_of(scene_id: Option<&str>) -> Option<&str> {
    scene_id.map(|id| id.split('/').next().unwrap_or(id))
}

fn check_scene(expected: Option<&str>, other: Option<&str>, path: &Path) -> CliResult {
    match (expected, other) {
        (Some(a), Some(b)) if a != b => Err(input_err(path, format!("scene id '{b}' does not match '{a}'"))),
        _ => Ok(()),
    }
}

#[derive(Debug, Serialize)]
struct ExtractReport {
    format_version: u32,
    scene_id: Option<String>,
    points: usize,
    assigned: usize,
    patches: usize,
    noise_model: Option<WeibullParams>,
    seeds_rejected: Vec<String>,
    dropped_pairs: usize,
    grow: GrowReport,
    merged: Vec<(usize, usize)>,
    discarded: Vec<usize>,
}

#[allow(clippy::too_many_arguments)]
pub fn extract(
    cloud_path: &Path,
    cameras_path: &Path,
    segments_path: &Path,
    config: Option<&Path>,
    preset: Option<&str>,
    seed: Option<u64>,
    out_dir: &Path,
    binary: bool,
) -> CliResult {
    let cloud = read_cloud(cloud_path)?;
    let cameras: Cameras = read_doc(cameras_path)?;
    let segments: Segments = read_doc(segments_path)?;
    let scene_id = cloud.scene_id.clone();
    check_scene(scene_id.as_deref(), cameras.scene_id.as_deref(), cameras_path)?;
    check_scene(scene_id.as_deref(), segments.scene_id.as_deref(), segments_path)?;
    let rig = cameras.to_rig().map_err(|e| input_err(cameras_path, e))?;
    for (i, e) in segments.set.first.iter().chain(&segments.set.second).enumerate() {
        e.validate()
            .map_err(|err| input_err(segments_path, format!("segment {i}: {err}")))?;
    }

    let run_cfg = load_config(config)?;
    let preset = preset.or(preset_of(scene_id.as_deref()));
    let mut cfg: PipelineConfig = run_cfg.resolve(preset).map_err(|e| {
        CliError::Input(format!(
            "{}: {e}",
            config.map_or("config".into(), |p| p.display().to_string())
        ))
    })?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.grow
        .validate()
        .map_err(|e| CliError::Input(format!("config: {e}")))?;

    let ex = pipeline::run(cloud.to_scene_points(), &rig, &segments.set, &cfg)
        .map_err(|e| CliError::Pipeline(format!("extraction failed: {e}")))?;

    let mut records: Vec<PatchRecord> = ex.patches.iter().map(PatchRecord::from).collect();
    records.sort_by_key(|r| r.id);
    let labels = ex.labels();
    let assigned = labels.iter().filter(|l| l.is_some()).count();
    let doc = Patches {
        format_version: FORMAT_VERSION,
        scene_id: scene_id.clone(),
        patches: records,
    };
    write_out(out_dir, "patches.json", to_json(&doc).as_bytes())?;
    let labelled = PointCloud::from_scene_points(scene_id.clone(), &ex.cloud, &labels);
    write_out(out_dir, "labeled.ply", &write_ply(&labelled, binary))?;
    let report = ExtractReport {
        format_version: FORMAT_VERSION,
        scene_id,
        points: ex.cloud.len(),
        assigned,
        patches: doc.patches.len(),
        noise_model: ex.rig.noise_model,
        seeds_rejected: ex
            .seed_rejections
            .iter()
            .map(|(i, r)| format!("pair {i}: {r}"))
            .collect(),
        dropped_pairs: ex.dropped_pairs,
        grow: ex.grow,
        merged: ex.refine.merged,
        discarded: ex.refine.discarded,
    };
    write_out(out_dir, "report.json", to_json(&report).as_bytes())?;
    println!(
        "{} patches, {assigned}/{} points assigned, {} epochs",
        report.patches, report.points, report.grow.epochs
    );
    Ok(())
}

pub fn synth(
    preset: Option<&str>,
    spec_path: Option<&Path>,
    seed: u64,
    points_per_face: usize,
    sigma: f64,
    out_dir: &Path,
    binary: bool,
) -> CliResult {
    let spec = match (preset, spec_path) {
        (_, Some(path)) => {
            let bytes = read_file(path).map_err(|e| CliError::Input(e.to_string()))?;
            serde_json::from_slice::<SceneSpec>(&bytes)
                .map_err(|e| input_err(path, format!("line {} column {}: {e}", e.line(), e.column())))?
        }
        (Some(name), None) => {
            let preset: Preset = name.parse().map_err(|e| CliError::Input(format!("{e}")))?;
            SceneSpec::preset(preset, points_per_face, sigma, seed)
        }
        (None, None) => return Err(CliError::Input("synth needs --preset or --spec".into())),
    };
    let scene = generate(&spec).map_err(|e| CliError::Input(format!("scene: {e}")))?;
    let id = Some(scene.gt.scene_id.clone());
    let cloud = PointCloud::from_scene_points(id.clone(), &scene.cloud, &scene.gt.labels);
    write_out(out_dir, "cloud.ply", &write_ply(&cloud, binary))?;
    write_out(
        out_dir,
        "cameras.json",
        to_json(&Cameras::from_rig(&scene.rig, id.clone())).as_bytes(),
    )?;
    let segments = Segments {
        format_version: FORMAT_VERSION,
        scene_id: id,
        set: scene.segments.clone(),
    };
    write_out(out_dir, "segments.json", to_json(&segments).as_bytes())?;
    let gt = GroundTruthDoc {
        format_version: FORMAT_VERSION,
        gt: scene.gt.clone(),
    };
    write_out(out_dir, "gt.json", to_json(&gt).as_bytes())?;
    println!(
        "{}: {} points on {} faces ({} dropped), {} segment pairs",
        scene.gt.scene_id,
        scene.cloud.len(),
        scene.gt.faces.len(),
        scene.dropped,
        segments.set.correspondence.len()
    );
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct MetricsRow {
    pub dataset: String,
    pub total_error: f64,
    pub avg_plane_error: f64,
    pub classification_error: f64,
    pub matched: usize,
    pub unmatched: usize,
}

pub fn eval(gt_path: &Path, patches_path: &Path, out_dir: Option<&Path>) -> CliResult {
    let gt: GroundTruthDoc = read_doc(gt_path)?;
    let patches: Patches = read_doc(patches_path)?;
    if let Some(id) = &patches.scene_id {
        if *id != gt.gt.scene_id {
            return Err(input_err(
                patches_path,
                format!("scene id '{id}' does not match ground truth '{}'", gt.gt.scene_id),
            ));
        }
    }
    let n = gt.gt.labels.len();
    if let Some(bad) = patches.patches.iter().flat_map(|p| &p.members).find(|&&m| m >= n) {
        return Err(input_err(
            patches_path,
            format!("member {bad} outside the {n}-point cloud"),
        ));
    }
    let ssd = ssd_error(&gt.gt, &patches.patches);
    let row = MetricsRow {
        dataset: gt.gt.scene_id.clone(),
        total_error: ssd.total,
        avg_plane_error: ssd.avg,
        classification_error: classification_error(&gt.gt, &patches.patches),
        matched: ssd.matched,
        unmatched: ssd.unmatched.len(),
    };
    println!(
        "{:<32} {:>14} {:>16} {:>21}",
        "dataset", "total_error", "avg_plane_error", "classification_error"
    );
    println!(
        "{:<32} {:>14.4e} {:>16.4e} {:>21.4}",
        row.dataset, row.total_error, row.avg_plane_error, row.classification_error
    );
    if let Some(dir) = out_dir {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.serialize(&row).map_err(|e| CliError::Input(e.to_string()))?;
        let bytes = w.into_inner().map_err(|e| CliError::Input(e.to_string()))?;
        write_out(dir, "metrics.csv", &bytes)?;
    }
    Ok(())
}

pub fn calibrate(cloud_path: &Path, cameras_path: &Path, trials: usize, seed: u64, out_dir: &Path) -> CliResult {
    let cloud = read_cloud(cloud_path)?;
    let mut cameras: Cameras = read_doc(cameras_path)?;
    let rig = cameras.to_rig().map_err(|e| input_err(cameras_path, e))?;
    let mut points = cloud.to_scene_points();
    compute_uncertainties(&mut points, &rig, trials, seed).map_err(|e| CliError::Input(e.to_string()))?;
    let wp = calibrate_noise_model(&points).map_err(|e| CliError::Pipeline(format!("calibration failed: {e}")))?;
    cameras.noise_model = Some(wp);
    write_out(out_dir, "cameras_calibrated.json", to_json(&cameras).as_bytes())?;
    println!("noise model: k = {:.6}, lambda = {:.6e}", wp.k, wp.lambda);
    Ok(())
}
