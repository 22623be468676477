//! Python bindings: synthetic scenes, extraction, evaluation and the
//! numerical kernels.

use std::path::{Path, PathBuf};

use ::patchgrow::formats::{
    from_json, read_file, read_ply, to_json, write_file, write_ply, Cameras, GroundTruthDoc, PatchRecord, PointCloud,
    RunConfig, Segments, FORMAT_VERSION,
};
use ::patchgrow::pipeline;
use ::patchgrow::probability;
use ::patchgrow::seeding::SegmentSet;
use ::patchgrow::stereo::{self, ScenePoint};
use ::patchgrow::synth::{self, GroundTruth, Preset, SceneSpec};
use ::patchgrow::{Error, GammaParams, PlaneType, StereoRig, Vec3, WeibullParams};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

type Point = (f64, f64, f64);

fn err(e: Error) -> PyErr {
    match e {
        Error::InvalidParameter(_) | Error::Parse(_) | Error::Io(_) | Error::NonPositiveDistance(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn vec3(p: Point) -> Vec3 {
    Vec3::new(p.0, p.1, p.2)
}

fn tuple(p: &Vec3) -> Point {
    (p.x, p.y, p.z)
}

fn plane_type(name: &str) -> PyResult<PlaneType> {
    match name {
        "Z" | "z" => Ok(PlaneType::Z),
        "X" | "x" => Ok(PlaneType::X),
        "Y" | "y" => Ok(PlaneType::Y),
        _ => Err(PyValueError::new_err(format!(
            "plane type must be X, Y or Z, got '{name}'"
        ))),
    }
}

fn letter(t: PlaneType) -> &'static str {
    match t {
        PlaneType::X => "X",
        PlaneType::Y => "Y",
        PlaneType::Z => "Z",
    }
}

/// A least-squares plane in slope-intercept form.
#[pyclass(name = "Plane", module = "patchgrow", frozen)]
struct PyPlane(::patchgrow::Plane);

#[pymethods]
impl PyPlane {
    /// Fits `points`; the form is chosen by the slope test unless given.
    #[staticmethod]
    #[pyo3(signature = (points, plane_type=None))]
    fn fit(points: Vec<Point>, plane_type: Option<&str>) -> PyResult<PyPlane> {
        let pts: Vec<Vec3> = points.into_iter().map(vec3).collect();
        let plane = match plane_type {
            Some(t) => ::patchgrow::Plane::fit(&pts, self::plane_type(t)?),
            None => ::patchgrow::Plane::fit_auto(&pts),
        };
        plane.map(PyPlane).map_err(err)
    }

    #[getter]
    fn plane_type(&self) -> &'static str {
        letter(self.0.plane_type())
    }

    #[getter]
    fn slope_coeffs(&self) -> [f64; 3] {
        self.0.slope_coeffs()
    }

    /// Unit-normal `[A, B, C, D]`.
    #[getter]
    fn implicit(&self) -> [f64; 4] {
        self.0.implicit()
    }

    #[getter]
    fn normal(&self) -> Point {
        tuple(&self.0.normal())
    }

    fn sq_dist(&self, p: Point) -> f64 {
        self.0.sq_dist(&vec3(p))
    }

    fn __repr__(&self) -> String {
        let [a, b, c, d] = self.0.implicit();
        format!("Plane({a:.6}x + {b:.6}y + {c:.6}z + {d:.6} = 0)")
    }
}

/// Gamma law with shape `alpha` and scale `beta`.
#[pyclass(name = "Gamma", module = "patchgrow", frozen, get_all, from_py_object)]
#[derive(Clone, Copy)]
struct PyGamma {
    alpha: f64,
    beta: f64,
}

#[pymethods]
impl PyGamma {
    #[new]
    fn new(alpha: f64, beta: f64) -> PyResult<PyGamma> {
        GammaParams::new(alpha, beta).map(PyGamma::from).map_err(err)
    }

    /// Closed-form maximum-likelihood fit.
    #[staticmethod]
    fn fit(samples: Vec<f64>) -> PyResult<PyGamma> {
        probability::gamma_mle(&samples).map(PyGamma::from).map_err(err)
    }

    fn log_pdf(&self, d: f64) -> PyResult<f64> {
        probability::gamma_log_pdf(d, self.params()).map_err(err)
    }

    fn log_likelihood(&self, samples: Vec<f64>) -> f64 {
        probability::gamma_log_likelihood(&samples, self.params())
    }

    fn __repr__(&self) -> String {
        format!("Gamma(alpha={}, beta={})", self.alpha, self.beta)
    }
}

impl PyGamma {
    fn params(&self) -> GammaParams {
        GammaParams {
            alpha: self.alpha,
            beta: self.beta,
        }
    }
}

impl From<GammaParams> for PyGamma {
    fn from(g: GammaParams) -> Self {
        PyGamma {
            alpha: g.alpha,
            beta: g.beta,
        }
    }
}

/// Weibull law with shape `k` and scale `lam`.
#[pyclass(name = "Weibull", module = "patchgrow", frozen, get_all, from_py_object)]
#[derive(Clone, Copy)]
struct PyWeibull {
    k: f64,
    lam: f64,
}

#[pymethods]
impl PyWeibull {
    #[new]
    fn new(k: f64, lam: f64) -> PyResult<PyWeibull> {
        WeibullParams::new(k, lam).map(PyWeibull::from).map_err(err)
    }

    /// Maximum-likelihood fit.
    #[staticmethod]
    fn fit(samples: Vec<f64>) -> PyResult<PyWeibull> {
        probability::weibull_fit(&samples).map(PyWeibull::from).map_err(err)
    }

    fn log_pdf(&self, d: f64) -> PyResult<f64> {
        probability::weibull_log_pdf(d, self.params()).map_err(err)
    }

    fn log_likelihood(&self, samples: Vec<f64>) -> f64 {
        probability::weibull_log_likelihood(&samples, self.params())
    }

    fn __repr__(&self) -> String {
        format!("Weibull(k={}, lam={})", self.k, self.lam)
    }
}

impl PyWeibull {
    fn params(&self) -> WeibullParams {
        WeibullParams {
            k: self.k,
            lambda: self.lam,
        }
    }
}

impl From<WeibullParams> for PyWeibull {
    fn from(w: WeibullParams) -> Self {
        PyWeibull { k: w.k, lam: w.lambda }
    }
}

/// Moment-matched Gamma approximation of the weighted sum of two Gamma
/// variables.
#[pyfunction]
fn gamma_sum_approx(g1: PyGamma, g2: PyGamma, w: f64) -> PyGamma {
    probability::gamma_sum_approx(g1.params(), g2.params(), w).into()
}

/// Two pinhole cameras.
#[pyclass(name = "StereoRig", module = "patchgrow", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyRig(StereoRig);

#[pymethods]
impl PyRig {
    /// Identical cameras looking down +Z, the second shifted by `baseline`
    /// along +X.
    #[staticmethod]
    #[pyo3(signature = (focal=800.0, width=640, height=480, baseline=0.2, sigma=0.0))]
    fn canonical(focal: f64, width: u32, height: u32, baseline: f64, sigma: f64) -> PyResult<PyRig> {
        let rig = StereoRig::canonical(focal, (width, height), baseline, sigma);
        rig.validate().map_err(err)?;
        Ok(PyRig(rig))
    }

    /// Pixels of `p` in the two views.
    fn project(&self, p: Point) -> PyResult<([f64; 2], [f64; 2])> {
        let p = vec3(p);
        let x = stereo::project(&self.0.k, &p).map_err(err)?;
        let xp = stereo::project(&self.0.k_prime, &p).map_err(err)?;
        Ok((x, xp))
    }

    fn triangulate(&self, x: [f64; 2], x_prime: [f64; 2]) -> PyResult<Point> {
        self.0.triangulate(&x, &x_prime).map(|p| tuple(&p)).map_err(err)
    }

    /// Monte-Carlo reconstruction uncertainty of a point seen at `x`, `x_prime`.
    #[pyo3(signature = (p, x, x_prime, trials=20, seed=0))]
    fn uncertainty(&self, p: Point, x: [f64; 2], x_prime: [f64; 2], trials: usize, seed: u64) -> PyResult<f64> {
        stereo::reconstruction_uncertainty(&vec3(p), &x, &x_prime, &self.0, trials, seed, 0).map_err(err)
    }

    #[getter]
    fn sigma(&self) -> f64 {
        self.0.sigma
    }

    #[getter]
    fn image_size(&self) -> (u32, u32) {
        self.0.image_size
    }

    #[getter]
    fn noise_model(&self) -> Option<PyWeibull> {
        self.0.noise_model.map(PyWeibull::from)
    }
}

/// A point cloud with its cameras, segments and, for synthetic scenes, the
/// ground truth.
#[pyclass(name = "Scene", module = "patchgrow")]
struct PyScene {
    scene_id: Option<String>,
    cloud: Vec<ScenePoint>,
    rig: StereoRig,
    segments: SegmentSet,
    gt: Option<GroundTruth>,
}

#[pymethods]
impl PyScene {
    /// Generates a built-in scene.
    #[staticmethod]
    #[pyo3(signature = (preset, points_per_face=1000, sigma=0.001, seed=0))]
    fn synth(preset: &str, points_per_face: usize, sigma: f64, seed: u64) -> PyResult<PyScene> {
        let preset: Preset = preset.parse().map_err(err)?;
        let scene = synth::generate(&SceneSpec::preset(preset, points_per_face, sigma, seed)).map_err(err)?;
        Ok(PyScene {
            scene_id: Some(scene.gt.scene_id.clone()),
            cloud: scene.cloud,
            rig: scene.rig,
            segments: scene.segments,
            gt: Some(scene.gt),
        })
    }

    /// Reads `cloud.ply`, `cameras.json`, `segments.json` and, if present,
    /// `gt.json` from `dir`.
    #[staticmethod]
    fn load(dir: PathBuf) -> PyResult<PyScene> {
        let text = |name: &str| -> PyResult<String> {
            let bytes = read_file(&dir.join(name)).map_err(err)?;
            String::from_utf8(bytes).map_err(|_| PyValueError::new_err(format!("{name}: not UTF-8 text")))
        };
        let cloud = read_ply(&read_file(&dir.join("cloud.ply")).map_err(err)?).map_err(err)?;
        let cameras: Cameras = from_json(&text("cameras.json")?).map_err(err)?;
        let segments: Segments = from_json(&text("segments.json")?).map_err(err)?;
        let gt = if dir.join("gt.json").exists() {
            Some(from_json::<GroundTruthDoc>(&text("gt.json")?).map_err(err)?.gt)
        } else {
            None
        };
        Ok(PyScene {
            scene_id: cloud.scene_id.clone(),
            cloud: cloud.to_scene_points(),
            rig: cameras.to_rig().map_err(err)?,
            segments: segments.set,
            gt,
        })
    }

    /// Writes the scene in the command line tool's file layout.
    #[pyo3(signature = (dir, binary=false))]
    fn save(&self, dir: PathBuf, binary: bool) -> PyResult<()> {
        std::fs::create_dir_all(&dir).map_err(|e| PyValueError::new_err(format!("{}: {e}", dir.display())))?;
        let put = |name: &str, bytes: &[u8]| write_file(&dir.join(name), bytes).map_err(err);
        let labels = self.gt.as_ref().map(|g| g.labels.clone()).unwrap_or_default();
        let cloud = PointCloud::from_scene_points(self.scene_id.clone(), &self.cloud, &labels);
        put("cloud.ply", &write_ply(&cloud, binary))?;
        put(
            "cameras.json",
            to_json(&Cameras::from_rig(&self.rig, self.scene_id.clone())).as_bytes(),
        )?;
        let segments = Segments {
            format_version: FORMAT_VERSION,
            scene_id: self.scene_id.clone(),
            set: self.segments.clone(),
        };
        put("segments.json", to_json(&segments).as_bytes())?;
        if let Some(gt) = &self.gt {
            let doc = GroundTruthDoc {
                format_version: FORMAT_VERSION,
                gt: gt.clone(),
            };
            put("gt.json", to_json(&doc).as_bytes())?;
        }
        Ok(())
    }

    #[getter]
    fn scene_id(&self) -> Option<String> {
        self.scene_id.clone()
    }

    #[getter]
    fn points(&self) -> Vec<Point> {
        self.cloud.iter().map(|sp| tuple(&sp.position)).collect()
    }

    /// Ground-truth face of every point, if known.
    #[getter]
    fn labels(&self) -> Option<Vec<Option<usize>>> {
        self.gt.as_ref().map(|g| g.labels.clone())
    }

    #[getter]
    fn rig(&self) -> PyRig {
        PyRig(self.rig.clone())
    }

    #[getter]
    fn segment_pairs(&self) -> usize {
        self.segments.correspondence.len()
    }

    fn __len__(&self) -> usize {
        self.cloud.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Scene({}, {} points, {} segment pairs)",
            self.scene_id.as_deref().unwrap_or("?"),
            self.cloud.len(),
            self.segments.correspondence.len()
        )
    }
}

/// An extracted patch.
#[pyclass(name = "Patch", module = "patchgrow", frozen)]
struct PyPatch(PatchRecord);

#[pymethods]
impl PyPatch {
    #[getter]
    fn id(&self) -> usize {
        self.0.id
    }

    #[getter]
    fn plane_type(&self) -> &'static str {
        letter(self.0.plane_type)
    }

    #[getter]
    fn implicit(&self) -> [f64; 4] {
        self.0.implicit
    }

    #[getter]
    fn hull(&self) -> Vec<Point> {
        self.0.hull.iter().map(tuple).collect()
    }

    #[getter]
    fn members(&self) -> Vec<usize> {
        self.0.members.clone()
    }

    #[getter]
    fn theta(&self) -> PyGamma {
        self.0.theta.into()
    }

    fn __len__(&self) -> usize {
        self.0.members.len()
    }

    fn __repr__(&self) -> String {
        format!("Patch(id={}, {} members)", self.0.id, self.0.members.len())
    }
}

/// Result of [`extract`].
#[pyclass(name = "Extraction", module = "patchgrow", frozen)]
struct PyExtraction {
    patches: Vec<PatchRecord>,
    labels: Vec<Option<usize>>,
    epochs: usize,
    noise_model: WeibullParams,
}

#[pymethods]
impl PyExtraction {
    #[getter]
    fn patches(&self) -> Vec<PyPatch> {
        self.patches.iter().cloned().map(PyPatch).collect()
    }

    /// Patch id of every point, `None` when unassigned.
    #[getter]
    fn labels(&self) -> Vec<Option<usize>> {
        self.labels.clone()
    }

    #[getter]
    fn epochs(&self) -> usize {
        self.epochs
    }

    #[getter]
    fn noise_model(&self) -> PyWeibull {
        self.noise_model.into()
    }

    fn __len__(&self) -> usize {
        self.patches.len()
    }

    fn __repr__(&self) -> String {
        let assigned = self.labels.iter().filter(|l| l.is_some()).count();
        format!(
            "Extraction({} patches, {assigned}/{} points assigned)",
            self.patches.len(),
            self.labels.len()
        )
    }
}

/// Extracts planar patches from a scene.
///
/// Thresholds come from `config` (a JSON file) or the built-in defaults, with
/// the override block of `preset` (default: the scene's preset) applied;
/// `log_tau` and `w` override the result.
#[pyfunction]
#[pyo3(signature = (scene, config=None, preset=None, seed=None, log_tau=None, w=None))]
fn extract(
    py: Python<'_>,
    scene: &PyScene,
    config: Option<PathBuf>,
    preset: Option<&str>,
    seed: Option<u64>,
    log_tau: Option<f64>,
    w: Option<f64>,
) -> PyResult<PyExtraction> {
    let run_cfg: RunConfig = match config {
        Some(path) => load_json(&path)?,
        None => RunConfig::default(),
    };
    let scene_preset = scene.scene_id.as_deref().map(|id| id.split('/').next().unwrap_or(id));
    let mut cfg = run_cfg.resolve(preset.or(scene_preset)).map_err(err)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(t) = log_tau {
        cfg.grow.log_tau = t;
    }
    if let Some(w) = w {
        cfg.grow.w = w;
    }
    let cloud = scene.cloud.clone();
    let (rig, segments) = (&scene.rig, &scene.segments);
    let ex = py.detach(|| pipeline::run(cloud, rig, segments, &cfg)).map_err(err)?;
    let mut patches: Vec<PatchRecord> = ex.patches.iter().map(PatchRecord::from).collect();
    patches.sort_by_key(|p| p.id);
    Ok(PyExtraction {
        labels: ex.labels(),
        patches,
        epochs: ex.grow.epochs,
        noise_model: ex.rig.noise_model.expect("the pipeline sets a noise model"),
    })
}

fn load_json<T: ::patchgrow::formats::Versioned>(path: &Path) -> PyResult<T> {
    let bytes = read_file(path).map_err(err)?;
    let text =
        String::from_utf8(bytes).map_err(|_| PyValueError::new_err(format!("{}: not UTF-8 text", path.display())))?;
    from_json(&text).map_err(|e| PyValueError::new_err(format!("{}: {e}", path.display())))
}

/// Plane and classification errors of an extraction against the scene's
/// ground truth, as a dict.
#[pyfunction]
fn evaluate<'py>(py: Python<'py>, scene: &PyScene, extraction: &PyExtraction) -> PyResult<Bound<'py, PyDict>> {
    let gt = scene
        .gt
        .as_ref()
        .ok_or_else(|| PyValueError::new_err("scene has no ground truth"))?;
    let ssd = synth::ssd_error(gt, &extraction.patches);
    let out = PyDict::new(py);
    out.set_item("total_error", ssd.total)?;
    out.set_item("avg_plane_error", ssd.avg)?;
    out.set_item(
        "classification_error",
        synth::classification_error(gt, &extraction.patches),
    )?;
    out.set_item("matched", ssd.matched)?;
    out.set_item("unmatched", ssd.unmatched.len())?;
    Ok(out)
}

/// Names of the built-in scenes.
#[pyfunction]
fn presets() -> Vec<&'static str> {
    Preset::ALL.iter().map(|p| p.name()).collect()
}

#[pymodule]
#[pyo3(name = "patchgrow")]
fn py_patchgrow(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPlane>()?;
    m.add_class::<PyGamma>()?;
    m.add_class::<PyWeibull>()?;
    m.add_class::<PyRig>()?;
    m.add_class::<PyScene>()?;
    m.add_class::<PyPatch>()?;
    m.add_class::<PyExtraction>()?;
    m.add_function(wrap_pyfunction!(gamma_sum_approx, m)?)?;
    m.add_function(wrap_pyfunction!(extract, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(presets, m)?)?;
    Ok(())
}
