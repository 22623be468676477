//! Parameter sweeps: one pipeline run per sample, one CSV row per run.

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::time::Instant;

use patchgrow::formats::PatchRecord;
use patchgrow::pipeline::{self, PipelineConfig};
use patchgrow::synth::{classification_error, generate, ssd_error, strip_faces, Preset, SceneSpec};
use serde::Serialize;

use crate::commands::{load_config, write_out, CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Noise,
    Points,
    Patches,
    Thresholds,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::Noise => "noise",
            Axis::Points => "points",
            Axis::Patches => "patches",
            Axis::Thresholds => "thresholds",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub axis: Axis,
    pub preset: String,
    pub range: Option<(f64, f64)>,
    /// log10 bounds of `w` for the thresholds axis.
    pub w_range: (f64, f64),
    pub samples: Option<usize>,
    pub points_per_face: usize,
    pub sigma: f64,
    pub config: Option<PathBuf>,
    pub seed: u64,
    pub timing: bool,
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct SweepRow {
    pub sample: usize,
    pub sigma: f64,
    pub points: usize,
    pub faces: usize,
    pub log_tau: f64,
    pub w: f64,
    pub patches: usize,
    pub assigned: usize,
    pub ssd_total: f64,
    pub ssd_avg: f64,
    pub class_error: f64,
    /// Exclusive membership, consistent point states and convex hulls.
    pub checks_ok: bool,
    /// Empty unless the sample failed.
    pub error: String,
    pub seconds: Option<f64>,
}

pub fn parse_range(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(':').ok_or_else(|| format!("range '{s}' is not lo:hi"))?;
    let lo: f64 = a.trim().parse().map_err(|_| format!("bad range bound '{a}'"))?;
    let hi: f64 = b.trim().parse().map_err(|_| format!("bad range bound '{b}'"))?;
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(format!("range '{s}' must have finite lo <= hi"));
    }
    Ok((lo, hi))
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

fn geomspace(lo: f64, hi: f64, n: usize) -> Vec<usize> {
    linspace(lo.ln(), hi.ln(), n)
        .into_iter()
        .map(|x| x.exp().round() as usize)
        .collect()
}

/// Generates one scene, runs the pipeline and scores it. Failures are
/// reported in the row's `error` column.
pub fn sample(spec: &SceneSpec, cfg: &PipelineConfig, timing: bool) -> SweepRow {
    let mut row = SweepRow {
        sigma: spec.sigma,
        log_tau: cfg.grow.log_tau,
        w: cfg.grow.w,
        ..SweepRow::default()
    };
    let scene = match generate(spec) {
        Ok(s) => s,
        Err(e) => {
            row.error = format!("scene: {e}");
            return row;
        }
    };
    row.points = scene.cloud.len();
    row.faces = scene.gt.faces.len();
    let start = Instant::now();
    let result = pipeline::run(scene.cloud.clone(), &scene.rig, &scene.segments, cfg);
    if timing {
        row.seconds = Some(start.elapsed().as_secs_f64());
    }
    match result {
        Ok(ex) => {
            let records: Vec<PatchRecord> = ex.patches.iter().map(PatchRecord::from).collect();
            let ssd = ssd_error(&scene.gt, &records);
            row.patches = records.len();
            row.assigned = ex.cloud.iter().filter(|sp| sp.is_assigned()).count();
            row.ssd_total = ssd.total;
            row.ssd_avg = ssd.avg;
            row.class_error = classification_error(&scene.gt, &records);
            row.checks_ok = consistent(&ex);
        }
        Err(e) => {
            row.error = e.to_string();
            row.ssd_total = f64::NAN;
            row.ssd_avg = f64::NAN;
            row.class_error = f64::NAN;
        }
    }
    row
}

/// No point in two patches, every member marked as assigned to its patch,
/// every assigned point a member, and convex hulls.
pub fn consistent(ex: &pipeline::Extraction) -> bool {
    let mut seen = BTreeSet::new();
    for p in &ex.patches {
        if !p.hull().is_convex() {
            return false;
        }
        for &m in p.members() {
            if !seen.insert(m) || ex.cloud[m].assigned_to() != Some(p.id) {
                return false;
            }
        }
    }
    let assigned = ex.cloud.iter().filter(|sp| sp.is_assigned()).count();
    let unassigned = ex.cloud.iter().filter(|sp| !sp.is_assigned()).count();
    assigned == seen.len() && assigned + unassigned == ex.cloud.len()
}

pub fn rows(spec: &SweepSpec) -> CliResult<Vec<SweepRow>> {
    let preset: Preset = spec.preset.parse().map_err(|e| CliError::Input(format!("{e}")))?;
    let run_cfg = load_config(spec.config.as_deref())?;
    let mut cfg = run_cfg
        .resolve(Some(preset.name()))
        .map_err(|e| CliError::Input(format!("config: {e}")))?;
    cfg.seed = spec.seed;
    cfg.grow
        .validate()
        .map_err(|e| CliError::Input(format!("config: {e}")))?;
    let scene = |points_per_face: usize, sigma: f64| SceneSpec::preset(preset, points_per_face, sigma, spec.seed);
    let n_faces = preset.faces(spec.seed).len();

    let mut out = Vec::new();
    match spec.axis {
        Axis::Noise => {
            let (lo, hi) = spec.range.unwrap_or((0.001, 0.5));
            if lo < 0.0 {
                return Err(CliError::Input("noise range must be non-negative".into()));
            }
            for sigma in linspace(lo, hi, spec.samples.unwrap_or(20)) {
                out.push(sample(&scene(spec.points_per_face, sigma), &cfg, spec.timing));
            }
        }
        Axis::Points => {
            let (lo, hi) = spec.range.unwrap_or((1000.0, 4000.0));
            if lo < 1.0 {
                return Err(CliError::Input("points range must be at least 1".into()));
            }
            for total in geomspace(lo, hi, spec.samples.unwrap_or(3)) {
                let per_face = (total / n_faces).max(1);
                out.push(sample(&scene(per_face, spec.sigma), &cfg, spec.timing));
            }
        }
        Axis::Patches => {
            let (lo, hi) = spec.range.unwrap_or((2.0, 8.0));
            if lo < 1.0 {
                return Err(CliError::Input("patch range must be at least 1".into()));
            }
            let total = spec.points_per_face * 2;
            for k in geomspace(lo, hi, spec.samples.unwrap_or(3)) {
                let s = SceneSpec {
                    preset: None,
                    faces: strip_faces(k),
                    points_per_face: (total / k).max(1),
                    rig: Default::default(),
                    sigma: spec.sigma,
                    seed: spec.seed,
                };
                out.push(sample(&s, &cfg, spec.timing));
            }
        }
        Axis::Thresholds => {
            let (lo, hi) = spec.range.unwrap_or((-60.0, 30.0));
            let n = spec.samples.unwrap_or(7);
            let base = scene(spec.points_per_face, spec.sigma);
            for log_tau in linspace(lo, hi, n) {
                for lw in linspace(spec.w_range.0, spec.w_range.1, n) {
                    let mut c = cfg;
                    c.grow.log_tau = log_tau;
                    c.grow.w = 10f64.powf(lw);
                    out.push(sample(&base, &c, spec.timing));
                }
            }
        }
    }
    for (i, r) in out.iter_mut().enumerate() {
        r.sample = i;
    }
    Ok(out)
}

pub fn to_csv(rows: &[SweepRow]) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| CliError::Input(e.to_string()))?;
    }
    w.into_inner().map_err(|e| CliError::Input(e.to_string()))
}

pub fn run(spec: &SweepSpec) -> CliResult {
    let rows = rows(spec)?;
    let bytes = to_csv(&rows)?;
    write_out(&spec.out_dir, &format!("sweep_{}.csv", spec.axis.name()), &bytes)?;
    for r in &rows {
        let status = if r.error.is_empty() {
            String::new()
        } else {
            format!("  [{}]", r.error)
        };
        println!(
            "{:>3}  sigma {:<8} points {:<5} faces {:<2} log_tau {:<7} w {:<9.2e} error {:.4}  ssd {:.3e}{status}",
            r.sample, r.sigma, r.points, r.faces, r.log_tau, r.w, r.class_error, r.ssd_avg
        );
    }
    let failed = rows.iter().filter(|r| !r.error.is_empty()).count();
    if failed > 0 {
        log::warn!("{failed} of {} samples failed", rows.len());
    }
    Ok(())
}
