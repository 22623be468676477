//! Readers and writers for the files exchanged by the command line tool.
//!
//! Point clouds are PLY (ASCII or little-endian binary) with one vertex
//! element carrying `x y z px_u px_v pxp_u pxp_v label`. Everything else is a
//! JSON document with a `format_version` field. Writers are deterministic and
//! a write→read→write cycle reproduces the bytes exactly.

use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::Matrix3x4;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::geometry3d::{PlaneType, Vec3};
use crate::growing::Patch;
use crate::pipeline::PipelineConfig;
use crate::probability::{GammaParams, WeibullParams};
use crate::seeding::SegmentSet;
use crate::stereo::{Pixel, ScenePoint, StereoRig};
use crate::synth::GroundTruth;
use crate::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

const PLY_PROPERTIES: [&str; 8] = ["x", "y", "z", "px_u", "px_v", "pxp_u", "pxp_v", "label"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlyPoint {
    pub position: Vec3,
    pub pixel: Pixel,
    pub pixel_prime: Pixel,
    pub label: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub scene_id: Option<String>,
    pub points: Vec<PlyPoint>,
}

impl PointCloud {
    pub fn from_scene_points(scene_id: Option<String>, cloud: &[ScenePoint], labels: &[Option<usize>]) -> PointCloud {
        let points = cloud
            .iter()
            .enumerate()
            .map(|(i, sp)| PlyPoint {
                position: sp.position,
                pixel: sp.pixel,
                pixel_prime: sp.pixel_prime,
                label: labels.get(i).copied().flatten(),
            })
            .collect();
        PointCloud { scene_id, points }
    }

    /// Scene points with ids equal to their index.
    pub fn to_scene_points(&self) -> Vec<ScenePoint> {
        self.points
            .iter()
            .enumerate()
            .map(|(i, p)| ScenePoint::new(i, p.position, p.pixel, p.pixel_prime))
            .collect()
    }

    pub fn labels(&self) -> Vec<Option<usize>> {
        self.points.iter().map(|p| p.label).collect()
    }
}

fn label_value(label: Option<usize>) -> i32 {
    label.map_or(-1, |l| l as i32)
}

fn header(cloud: &PointCloud, format: &str) -> String {
    let mut h = format!("ply\nformat {format} 1.0\n");
    if let Some(id) = &cloud.scene_id {
        h.push_str(&format!("comment scene {id}\n"));
    }
    h.push_str(&format!("element vertex {}\n", cloud.points.len()));
    for name in &PLY_PROPERTIES[..7] {
        h.push_str(&format!("property double {name}\n"));
    }
    h.push_str("property int label\nend_header\n");
    h
}

pub fn write_ply(cloud: &PointCloud, binary: bool) -> Vec<u8> {
    let mut out = Vec::new();
    if binary {
        out.extend_from_slice(header(cloud, "binary_little_endian").as_bytes());
        for p in &cloud.points {
            for v in [
                p.position.x,
                p.position.y,
                p.position.z,
                p.pixel[0],
                p.pixel[1],
                p.pixel_prime[0],
                p.pixel_prime[1],
            ] {
                out.extend_from_slice(&v.to_le_bytes());
            }
            out.extend_from_slice(&label_value(p.label).to_le_bytes());
        }
    } else {
        out.extend_from_slice(header(cloud, "ascii").as_bytes());
        for p in &cloud.points {
            let _ = writeln!(
                out,
                "{} {} {} {} {} {} {} {}",
                p.position.x,
                p.position.y,
                p.position.z,
                p.pixel[0],
                p.pixel[1],
                p.pixel_prime[0],
                p.pixel_prime[1],
                label_value(p.label)
            );
        }
    }
    out
}

fn parse_err(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Parse(format!("line {line}: {msg}"))
}

pub fn read_ply(bytes: &[u8]) -> Result<PointCloud> {
    let mut pos = 0;
    let mut header = Vec::new();
    loop {
        let rest = &bytes[pos..];
        let Some(end) = rest.iter().position(|&b| b == b'\n') else {
            return Err(parse_err(header.len() + 1, "unexpected end of header"));
        };
        pos += end + 1;
        let line = String::from_utf8_lossy(&rest[..end]).trim_end_matches('\r').to_string();
        let done = line == "end_header";
        header.push(line);
        if done {
            break;
        }
    }
    if header[0] != "ply" {
        return Err(parse_err(1, "missing 'ply' magic"));
    }
    let line_no = header.len();
    let mut binary = None;
    let mut scene_id = None;
    let mut count = None;
    let mut props = Vec::new();
    for (i, line) in header.iter().enumerate().skip(1) {
        let n = i + 1;
        let words: Vec<&str> = line.split_whitespace().collect();
        match words.as_slice() {
            ["format", "ascii", "1.0"] => binary = Some(false),
            ["format", "binary_little_endian", "1.0"] => binary = Some(true),
            ["format", other, ..] => return Err(parse_err(n, format!("unsupported format '{other}'"))),
            ["comment", "scene", id] => scene_id = Some(id.to_string()),
            ["comment", ..] | [] => {}
            ["element", "vertex", c] => {
                count = Some(
                    c.parse::<usize>()
                        .map_err(|_| parse_err(n, format!("bad vertex count '{c}'")))?,
                )
            }
            ["element", other, ..] => return Err(parse_err(n, format!("unsupported element '{other}'"))),
            ["property", ty, name] => props.push((ty.to_string(), name.to_string(), n)),
            ["end_header"] => break,
            _ => return Err(parse_err(n, format!("unrecognised header line '{line}'"))),
        }
    }
    let binary = binary.ok_or_else(|| parse_err(line_no, "missing format line"))?;
    let count = count.ok_or_else(|| parse_err(line_no, "missing 'element vertex'"))?;
    if props.len() != PLY_PROPERTIES.len() {
        return Err(parse_err(
            line_no,
            format!("expected properties {}", PLY_PROPERTIES.join(" ")),
        ));
    }
    for (i, (ty, name, n)) in props.iter().enumerate() {
        let want_int = i == 7;
        let ty_ok = if want_int { ty == "int" } else { ty == "double" };
        if name != PLY_PROPERTIES[i] || !ty_ok {
            return Err(parse_err(
                *n,
                format!(
                    "expected property {} {}",
                    if want_int { "int" } else { "double" },
                    PLY_PROPERTIES[i]
                ),
            ));
        }
    }

    let label_of = |v: i64, n: usize| -> Result<Option<usize>> {
        match v {
            -1 => Ok(None),
            v if v >= 0 => Ok(Some(v as usize)),
            v => Err(parse_err(n, format!("invalid label {v}"))),
        }
    };
    let mut points = Vec::with_capacity(count);
    if binary {
        let stride = 7 * 8 + 4;
        let body = &bytes[pos..];
        if body.len() != count * stride {
            return Err(Error::Parse(format!(
                "binary body holds {} bytes, expected {} for {count} vertices",
                body.len(),
                count * stride
            )));
        }
        for (i, rec) in body.chunks_exact(stride).enumerate() {
            let f = |k: usize| f64::from_le_bytes(rec[8 * k..8 * k + 8].try_into().unwrap());
            let label = i32::from_le_bytes(rec[56..60].try_into().unwrap());
            points.push(PlyPoint {
                position: Vec3::new(f(0), f(1), f(2)),
                pixel: [f(3), f(4)],
                pixel_prime: [f(5), f(6)],
                label: label_of(label as i64, line_no + 1 + i)?,
            });
        }
    } else {
        let text = std::str::from_utf8(&bytes[pos..]).map_err(|_| parse_err(line_no + 1, "body is not UTF-8"))?;
        let mut lines = text.lines();
        for i in 0..count {
            let n = line_no + 1 + i;
            let line = lines
                .next()
                .ok_or_else(|| parse_err(n, format!("expected {count} vertices, found {i}")))?;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 8 {
                return Err(parse_err(n, format!("expected 8 fields, found {}", fields.len())));
            }
            let mut v = [0.0; 7];
            for k in 0..7 {
                v[k] = fields[k]
                    .parse()
                    .map_err(|_| parse_err(n, format!("field {}: bad number '{}'", PLY_PROPERTIES[k], fields[k])))?;
            }
            let label: i64 = fields[7]
                .parse()
                .map_err(|_| parse_err(n, format!("field label: bad integer '{}'", fields[7])))?;
            points.push(PlyPoint {
                position: Vec3::new(v[0], v[1], v[2]),
                pixel: [v[3], v[4]],
                pixel_prime: [v[5], v[6]],
                label: label_of(label, n)?,
            });
        }
        if lines.any(|l| !l.trim().is_empty()) {
            return Err(parse_err(line_no + count + 1, "trailing data after the vertices"));
        }
    }
    Ok(PointCloud { scene_id, points })
}

/// Camera pair document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cameras {
    pub format_version: u32,
    pub scene_id: Option<String>,
    /// Row-major 3×4 projection matrices.
    pub k: [[f64; 4]; 3],
    pub k_prime: [[f64; 4]; 3],
    pub sigma: f64,
    pub sigma_prime: f64,
    pub image_size: (u32, u32),
    pub noise_model: Option<WeibullParams>,
}

fn rows(m: &Matrix3x4<f64>) -> [[f64; 4]; 3] {
    let mut r = [[0.0; 4]; 3];
    for (i, row) in r.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = m[(i, j)];
        }
    }
    r
}

fn matrix(r: &[[f64; 4]; 3]) -> Matrix3x4<f64> {
    Matrix3x4::from_fn(|i, j| r[i][j])
}

impl Cameras {
    pub fn from_rig(rig: &StereoRig, scene_id: Option<String>) -> Cameras {
        Cameras {
            format_version: FORMAT_VERSION,
            scene_id,
            k: rows(&rig.k),
            k_prime: rows(&rig.k_prime),
            sigma: rig.sigma,
            sigma_prime: rig.sigma_prime,
            image_size: rig.image_size,
            noise_model: rig.noise_model,
        }
    }

    pub fn to_rig(&self) -> Result<StereoRig> {
        let rig = StereoRig {
            k: matrix(&self.k),
            k_prime: matrix(&self.k_prime),
            sigma: self.sigma,
            sigma_prime: self.sigma_prime,
            noise_model: self.noise_model,
            image_size: self.image_size,
        };
        rig.validate()?;
        Ok(rig)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segments {
    pub format_version: u32,
    pub scene_id: Option<String>,
    #[serde(flatten)]
    pub set: SegmentSet,
}

/// Serializable summary of an extracted patch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchRecord {
    pub id: usize,
    pub plane_type: PlaneType,
    pub slope_coeffs: [f64; 3],
    /// Unit-normal implicit coefficients `[A, B, C, D]`.
    pub implicit: [f64; 4],
    pub hull: Vec<Vec3>,
    pub members: Vec<usize>,
    pub theta: GammaParams,
    pub mean_intensity: f64,
}

impl PatchRecord {
    pub fn hull_centroid(&self) -> Vec3 {
        if self.hull.is_empty() {
            return Vec3::zeros();
        }
        self.hull.iter().sum::<Vec3>() / self.hull.len() as f64
    }
}

impl From<&Patch> for PatchRecord {
    fn from(p: &Patch) -> PatchRecord {
        let mut members = p.members().to_vec();
        members.sort_unstable();
        PatchRecord {
            id: p.id,
            plane_type: p.plane().plane_type(),
            slope_coeffs: p.plane().slope_coeffs(),
            implicit: p.plane().implicit(),
            hull: p.hull().vertices().to_vec(),
            members,
            theta: p.theta(),
            mean_intensity: p.mean_intensity(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Patches {
    pub format_version: u32,
    pub scene_id: Option<String>,
    pub patches: Vec<PatchRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthDoc {
    pub format_version: u32,
    #[serde(flatten)]
    pub gt: GroundTruth,
}

/// Thresholds with per-preset overrides. An override is a partial
/// [`PipelineConfig`] object merged key by key over `base`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub format_version: u32,
    #[serde(default)]
    pub base: PipelineConfig,
    #[serde(default)]
    pub presets: BTreeMap<String, serde_json::Value>,
}

impl Default for RunConfig {
    /// Built-in thresholds. The chessboard's squares share one plane, so
    /// their patches need a short boundary reach and a tight merge distance.
    fn default() -> Self {
        let mut presets = BTreeMap::new();
        presets.insert(
            "chessboard".to_string(),
            serde_json::json!({"grow": {"log_tau": 0.0, "w": 1e-4}, "refine": {"hull_dist_max": 0.005}}),
        );
        RunConfig {
            format_version: FORMAT_VERSION,
            base: PipelineConfig::default(),
            presets,
        }
    }
}

fn merge(base: &mut serde_json::Value, patch: &serde_json::Value) {
    match (base, patch) {
        (serde_json::Value::Object(b), serde_json::Value::Object(p)) => {
            for (k, v) in p {
                merge(b.entry(k.clone()).or_insert(serde_json::Value::Null), v);
            }
        }
        (b, p) => *b = p.clone(),
    }
}

impl RunConfig {
    /// Effective configuration for `preset` (the base when it has no block).
    pub fn resolve(&self, preset: Option<&str>) -> Result<PipelineConfig> {
        let Some(over) = preset.and_then(|p| self.presets.get(p)) else {
            return Ok(self.base);
        };
        let mut value = serde_json::to_value(self.base).map_err(|e| Error::Parse(e.to_string()))?;
        merge(&mut value, over);
        serde_json::from_value(value).map_err(|e| Error::Parse(format!("preset override '{}': {e}", preset.unwrap())))
    }
}

/// Documents carrying a `format_version`.
pub trait Versioned: Serialize + DeserializeOwned {
    fn version(&self) -> u32;
}

macro_rules! versioned {
    ($($t:ty),*) => {$(
        impl Versioned for $t {
            fn version(&self) -> u32 {
                self.format_version
            }
        }
    )*};
}
versioned!(Cameras, Segments, Patches, GroundTruthDoc, RunConfig);

pub fn to_json<T: Serialize>(doc: &T) -> String {
    let mut s = serde_json::to_string_pretty(doc).expect("documents hold only finite numbers");
    s.push('\n');
    s
}

pub fn from_json<T: Versioned>(text: &str) -> Result<T> {
    let doc: T = serde_json::from_str(text)
        .map_err(|e| Error::Parse(format!("line {} column {}: {e}", e.line(), e.column())))?;
    if doc.version() != FORMAT_VERSION {
        return Err(Error::Parse(format!(
            "format_version {} is not supported (expected {FORMAT_VERSION})",
            doc.version()
        )));
    }
    Ok(doc)
}

pub fn read_file(path: &std::path::Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

pub fn write_file(path: &std::path::Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, Preset, SceneSpec};

    fn cloud() -> PointCloud {
        let scene = generate(&SceneSpec::preset(Preset::TwoPlane, 40, 0.01, 5)).unwrap();
        PointCloud::from_scene_points(Some(scene.gt.scene_id.clone()), &scene.cloud, &scene.gt.labels)
    }

    #[test]
    fn ply_round_trips_bytewise() {
        let c = cloud();
        for binary in [false, true] {
            let bytes = write_ply(&c, binary);
            let back = read_ply(&bytes).unwrap();
            assert_eq!(back, c);
            assert_eq!(write_ply(&back, binary), bytes);
        }
    }

    #[test]
    fn ply_errors_name_the_line() {
        assert!(read_ply(b"").is_err());
        let mut text = String::from_utf8(write_ply(&cloud(), false)).unwrap();
        text = text.replacen("property double y", "property double q", 1);
        let err = read_ply(text.as_bytes()).unwrap_err().to_string();
        assert!(err.starts_with("line 6:"), "{err}");
        let good = String::from_utf8(write_ply(&cloud(), false)).unwrap();
        let header_len = good.lines().position(|l| l == "end_header").unwrap() + 1;
        let broken: Vec<String> = good
            .lines()
            .enumerate()
            .map(|(i, l)| {
                if i == header_len + 2 {
                    "1 2 x 4 5 6 7 0".to_string()
                } else {
                    l.to_string()
                }
            })
            .collect();
        let err = read_ply(broken.join("\n").as_bytes()).unwrap_err().to_string();
        assert!(
            err.contains(&format!("line {}", header_len + 3)) && err.contains("field z"),
            "{err}"
        );
    }

    #[test]
    fn json_documents_round_trip() {
        let scene = generate(&SceneSpec::preset(Preset::Path, 30, 0.0, 2)).unwrap();
        let cams = Cameras::from_rig(&scene.rig, Some(scene.gt.scene_id.clone()));
        let text = to_json(&cams);
        let back: Cameras = from_json(&text).unwrap();
        assert_eq!(to_json(&back), text);
        assert_eq!(back.to_rig().unwrap(), scene.rig);

        let segs = Segments {
            format_version: FORMAT_VERSION,
            scene_id: None,
            set: scene.segments.clone(),
        };
        let text = to_json(&segs);
        assert_eq!(to_json(&from_json::<Segments>(&text).unwrap()), text);

        let gt = GroundTruthDoc {
            format_version: FORMAT_VERSION,
            gt: scene.gt.clone(),
        };
        let text = to_json(&gt);
        assert_eq!(from_json::<GroundTruthDoc>(&text).unwrap(), gt);
        assert!(from_json::<Cameras>(&text.replace("\"format_version\": 1", "\"format_version\": 9")).is_err());
    }

    #[test]
    fn preset_override_merges() {
        let mut cfg = RunConfig::default();
        cfg.presets.insert(
            "path".into(),
            serde_json::json!({"grow": {"log_tau": -5.0}, "trials": 7}),
        );
        let p = cfg.resolve(Some("path")).unwrap();
        assert_eq!(p.grow.log_tau, -5.0);
        assert_eq!(p.trials, 7);
        assert_eq!(p.grow.w, cfg.base.grow.w);
        assert_eq!(cfg.resolve(Some("house")).unwrap(), cfg.base);
        let text = to_json(&cfg);
        assert_eq!(to_json(&from_json::<RunConfig>(&text).unwrap()), text);
    }
}
