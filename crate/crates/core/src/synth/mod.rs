//! Synthetic stereo scenes with ground truth, and the evaluation metrics
//! used to score extractions against them.
//!
//! Scenes are sets of convex planar faces seen by a canonical rig. Points are
//! sampled uniformly on each face, projected into both views, perturbed by
//! Gaussian pixel noise and triangulated back. Occlusion is not modelled:
//! every face is treated as visible wherever it projects into both images.

mod metrics;
mod presets;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::geometry3d::Vec3;
use crate::seeding::SegmentSet;
use crate::stereo::{project, EllipsePrior, Pixel, ScenePoint, StereoRig, View};
use crate::{Error, Result};

pub use metrics::{classification_error, plane_ssd, runtime_probe, ssd_error, strip_faces, ProbeRow, SsdReport};
pub use presets::Preset;

/// A convex planar polygon with a uniform intensity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Face {
    pub name: String,
    pub vertices: Vec<Vec3>,
    pub intensity: f64,
}

impl Face {
    pub fn new(name: &str, vertices: Vec<Vec3>, intensity: f64) -> Face {
        Face {
            name: name.to_string(),
            vertices,
            intensity,
        }
    }

    /// Axis-aligned rectangle spanned by `corner`, `corner + e1` and
    /// `corner + e2`.
    pub fn quad(name: &str, corner: Vec3, e1: Vec3, e2: Vec3, intensity: f64) -> Face {
        Face::new(
            name,
            vec![corner, corner + e1, corner + e1 + e2, corner + e2],
            intensity,
        )
    }

    /// Newell normal, unnormalised; its length is twice the polygon area.
    fn newell(&self) -> Vec3 {
        let v = &self.vertices;
        (0..v.len()).map(|i| v[i].cross(&v[(i + 1) % v.len()])).sum()
    }

    /// Unit-normal implicit coefficients `[A, B, C, D]`.
    pub fn plane(&self) -> [f64; 4] {
        let n = self.newell().normalize();
        let d = -n.dot(&self.centroid());
        [n.x, n.y, n.z, d]
    }

    pub fn area(&self) -> f64 {
        0.5 * self.newell().norm()
    }

    /// Vertex average.
    pub fn centroid(&self) -> Vec3 {
        self.vertices.iter().sum::<Vec3>() / self.vertices.len() as f64
    }

    /// Largest vertex distance from the centroid.
    pub fn radius(&self) -> f64 {
        let c = self.centroid();
        self.vertices.iter().map(|v| (v - c).norm()).fold(0.0, f64::max)
    }

    pub fn validate(&self) -> Result<()> {
        if self.vertices.len() < 3 || !(self.area() > 1e-12) {
            return Err(Error::InvalidParameter(format!("face '{}' is degenerate", self.name)));
        }
        let [a, b, c, d] = self.plane();
        let scale = self.radius().max(1.0);
        if self
            .vertices
            .iter()
            .any(|v| (a * v.x + b * v.y + c * v.z + d).abs() > 1e-9 * scale)
        {
            return Err(Error::InvalidParameter(format!("face '{}' is not planar", self.name)));
        }
        if !(0.0..=1.0).contains(&self.intensity) {
            return Err(Error::InvalidParameter(format!(
                "face '{}' intensity outside [0, 1]",
                self.name
            )));
        }
        Ok(())
    }

    /// Uniform sample on the polygon via its fan triangulation.
    fn sample(&self, rng: &mut impl Rng) -> Vec3 {
        let v = &self.vertices;
        let areas: Vec<f64> = (1..v.len() - 1)
            .map(|i| (v[i] - v[0]).cross(&(v[i + 1] - v[0])).norm())
            .collect();
        let total: f64 = areas.iter().sum();
        let mut pick = rng.random::<f64>() * total;
        let mut t = areas.len() - 1;
        for (i, a) in areas.iter().enumerate() {
            if pick < *a {
                t = i;
                break;
            }
            pick -= a;
        }
        let (mut r1, mut r2): (f64, f64) = (rng.random(), rng.random());
        if r1 + r2 > 1.0 {
            r1 = 1.0 - r1;
            r2 = 1.0 - r2;
        }
        v[0] + (v[t + 1] - v[0]) * r1 + (v[t + 2] - v[0]) * r2
    }
}

/// Intrinsics and baseline of a canonical rig.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigSpec {
    pub focal: f64,
    pub width: u32,
    pub height: u32,
    pub baseline: f64,
}

impl Default for RigSpec {
    fn default() -> Self {
        RigSpec {
            focal: 700.0,
            width: 800,
            height: 600,
            baseline: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    /// Preset name; ignored when `faces` is non-empty.
    pub preset: Option<Preset>,
    #[serde(default)]
    pub faces: Vec<Face>,
    pub points_per_face: usize,
    #[serde(default)]
    pub rig: RigSpec,
    /// Pixel noise standard deviation.
    pub sigma: f64,
    pub seed: u64,
}

impl SceneSpec {
    pub fn preset(preset: Preset, points_per_face: usize, sigma: f64, seed: u64) -> SceneSpec {
        SceneSpec {
            preset: Some(preset),
            faces: Vec::new(),
            points_per_face,
            rig: RigSpec::default(),
            sigma,
            seed,
        }
    }

    pub fn resolved_faces(&self) -> Result<Vec<Face>> {
        let faces = if !self.faces.is_empty() {
            self.faces.clone()
        } else if let Some(p) = self.preset {
            p.faces(self.seed)
        } else {
            return Err(Error::InvalidParameter("scene has neither a preset nor faces".into()));
        };
        for f in &faces {
            f.validate()?;
        }
        Ok(faces)
    }

    /// Identifier written into every generated artifact.
    pub fn scene_id(&self) -> String {
        let name = match (&self.preset, self.faces.is_empty()) {
            (Some(p), true) => p.name().to_string(),
            _ => format!("custom{}", self.faces.len()),
        };
        format!("{name}/n{}/s{:e}/seed{}", self.points_per_face, self.sigma, self.seed)
    }

    pub fn rig(&self) -> StereoRig {
        StereoRig::canonical(
            self.rig.focal,
            (self.rig.width, self.rig.height),
            self.rig.baseline,
            self.sigma,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub scene_id: String,
    pub faces: Vec<Face>,
    /// Unit-normal implicit coefficients per face.
    pub planes: Vec<[f64; 4]>,
    /// Face index of every cloud point, `None` for clutter.
    pub labels: Vec<Option<usize>>,
    /// Face behind each corresponding segment pair.
    pub segment_faces: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthScene {
    pub spec: SceneSpec,
    pub rig: StereoRig,
    pub cloud: Vec<ScenePoint>,
    /// Noise-free positions, parallel to `cloud`.
    pub truth_positions: Vec<Vec3>,
    pub gt: GroundTruth,
    pub segments: SegmentSet,
    /// Sampled points dropped for falling outside a view or failing to
    /// triangulate.
    pub dropped: usize,
}

/// Builds the noisy cloud, its labels and the ideal segments of a scene.
pub fn generate(spec: &SceneSpec) -> Result<SynthScene> {
    if !(spec.sigma >= 0.0) || spec.points_per_face == 0 {
        return Err(Error::InvalidParameter(
            "sigma must be non-negative and points_per_face positive".into(),
        ));
    }
    let faces = spec.resolved_faces()?;
    let rig = spec.rig();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.sigma).map_err(|e| Error::InvalidParameter(e.to_string()))?;

    let mut cloud = Vec::new();
    let mut truth_positions = Vec::new();
    let mut labels = Vec::new();
    let mut dropped = 0;
    for (fi, face) in faces.iter().enumerate() {
        for _ in 0..spec.points_per_face {
            let p = face.sample(&mut rng);
            let mut n = [0.0; 4];
            for v in n.iter_mut() {
                *v = noise.sample(&mut rng);
            }
            let (Ok(x), Ok(xp)) = (project(&rig.k, &p), project(&rig.k_prime, &p)) else {
                dropped += 1;
                continue;
            };
            if !rig.in_view(&x) || !rig.in_view(&xp) {
                dropped += 1;
                continue;
            }
            let xn = [x[0] + n[0], x[1] + n[1]];
            let xpn = [xp[0] + n[2], xp[1] + n[3]];
            match ScenePoint::from_pixels(cloud.len(), xn, xpn, &rig) {
                Ok(sp) => {
                    cloud.push(sp);
                    truth_positions.push(p);
                    labels.push(Some(fi));
                }
                Err(_) => dropped += 1,
            }
        }
    }

    let mut segments = SegmentSet::default();
    let mut segment_faces = Vec::new();
    for (fi, face) in faces.iter().enumerate() {
        let visible = visible_part(face, &rig);
        let first = face_segment(&visible, face.intensity, &rig, View::First);
        let second = face_segment(&visible, face.intensity, &rig, View::Second);
        if let (Some(a), Some(b)) = (first, second) {
            segments
                .correspondence
                .push((segments.first.len(), segments.second.len()));
            segments.first.push(a);
            segments.second.push(b);
            segment_faces.push(fi);
        }
    }

    let gt = GroundTruth {
        scene_id: spec.scene_id(),
        planes: faces.iter().map(Face::plane).collect(),
        faces,
        labels,
        segment_faces,
    };
    Ok(SynthScene {
        spec: spec.clone(),
        rig,
        cloud,
        truth_positions,
        gt,
        segments,
        dropped,
    })
}

/// Part of the face visible in both images, as a 3D polygon.
fn visible_part(face: &Face, rig: &StereoRig) -> Vec<Vec3> {
    let (w, h) = (rig.image_size.0 as f64, rig.image_size.1 as f64);
    let mut poly = face.vertices.clone();
    for k in [&rig.k, &rig.k_prime] {
        let (r0, r1, r2) = (k.row(0).transpose(), k.row(1).transpose(), k.row(2).transpose());
        // Each bound is a linear form in homogeneous coordinates that is
        // non-negative inside the view.
        let mut near = r2;
        near[3] -= 1e-9;
        for bound in [near, r0, r2 * w - r0, r1, r2 * h - r1] {
            poly = clip_polygon(&poly, |p: &Vec3| bound.dot(&p.push(1.0)));
            if poly.is_empty() {
                return poly;
            }
        }
    }
    poly
}

/// Sutherland-Hodgman clip keeping the part where `f >= 0`.
fn clip_polygon(poly: &[Vec3], f: impl Fn(&Vec3) -> f64) -> Vec<Vec3> {
    let mut out = Vec::with_capacity(poly.len() + 1);
    for i in 0..poly.len() {
        let (a, b) = (poly[i], poly[(i + 1) % poly.len()]);
        let (fa, fb) = (f(&a), f(&b));
        if fa >= 0.0 {
            out.push(a);
        }
        if (fa >= 0.0) != (fb >= 0.0) {
            out.push(a + (b - a) * (fa / (fa - fb)));
        }
    }
    out
}

/// Ellipse of the visible face outline as seen in `view`.
fn face_segment(visible: &[Vec3], intensity: f64, rig: &StereoRig, view: View) -> Option<EllipsePrior> {
    let k = match view {
        View::First => &rig.k,
        View::Second => &rig.k_prime,
    };
    let poly: Vec<Pixel> = visible.iter().map(|v| project(k, v)).collect::<Result<_>>().ok()?;
    let (area, centroid, inertia) = polygon_moments(&poly)?;
    if area < 1.0 {
        return None;
    }
    EllipsePrior::new(view, centroid, inertia, intensity).ok()
}

/// Area, centroid and second central moments `[k1, k2, k3]` of a simple
/// polygon, from Green's theorem.
pub(crate) fn polygon_moments(poly: &[Pixel]) -> Option<(f64, Pixel, [f64; 3])> {
    let n = poly.len();
    if n < 3 {
        return None;
    }
    let (mut a, mut cx, mut cy, mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..n {
        let [x0, y0] = poly[i];
        let [x1, y1] = poly[(i + 1) % n];
        let c = x0 * y1 - x1 * y0;
        a += c;
        cx += (x0 + x1) * c;
        cy += (y0 + y1) * c;
        sxx += (x0 * x0 + x0 * x1 + x1 * x1) * c;
        syy += (y0 * y0 + y0 * y1 + y1 * y1) * c;
        sxy += (x0 * y1 + 2.0 * x0 * y0 + 2.0 * x1 * y1 + x1 * y0) * c;
    }
    a *= 0.5;
    if a.abs() < 1e-12 {
        return None;
    }
    let (mx, my) = (cx / (6.0 * a), cy / (6.0 * a));
    let k1 = sxx / (12.0 * a) - mx * mx;
    let k2 = sxy / (24.0 * a) - mx * my;
    let k3 = syy / (12.0 * a) - my * my;
    Some((a.abs(), [mx, my], [k1, k2, k3]))
}
