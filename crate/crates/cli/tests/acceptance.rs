//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line per
//! criterion and exits non-zero if any failed.

use std::cell::Cell;
use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::Instant;

use patchgrow::formats::{PatchRecord, RunConfig};
use patchgrow::geometry3d::{convex_hull_2d, point_hull_sq_dist, PlanarHull, Plane, PlaneType, Vec3};
use patchgrow::pipeline::{self, PipelineConfig};
use patchgrow::probability::{gamma_mle, gamma_sum_approx, weibull_fit, weibull_log_pdf};
use patchgrow::seeding::SegmentPair;
use patchgrow::stereo::View;
use patchgrow::synth::{classification_error, generate, ssd_error, Preset, SceneSpec};
use patchgrow::{EllipsePrior, GammaParams, Patch, ScenePoint, WeibullParams};
use patchgrow_cli::sweep::{self, Axis, SweepRow, SweepSpec};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Weibull};

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn FnOnce() -> Outcome + 'a>);

const CASES: u32 = 256;

fn main() -> ExitCode {
    let sweeps = Sweeps::run();
    let criteria: [Criterion; 8] = [
        ("exact-fit recovery", Box::new(exact_fit)),
        ("low-noise pipeline accuracy", Box::new(low_noise)),
        ("exclusivity and completeness", Box::new(|| exclusivity(&sweeps))),
        ("oracle equivalences", Box::new(oracles)),
        ("statistical estimators", Box::new(estimators)),
        ("noise robustness curve", Box::new(|| noise_curve(&sweeps))),
        ("threshold landscape", Box::new(|| threshold_landscape(&sweeps))),
        ("determinism", Box::new(determinism)),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let result = check();
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("criterion {} {name}: PASS ({detail}; {secs:.1} s)", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} {name}: FAIL ({detail})", i + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn config_for(preset: Preset) -> PipelineConfig {
    RunConfig::default().resolve(Some(preset.name())).unwrap()
}

fn extract(spec: &SceneSpec, cfg: &PipelineConfig) -> Result<(patchgrow::synth::SynthScene, Vec<PatchRecord>), String> {
    let scene = generate(spec).map_err(|e| format!("{}: {e}", spec.scene_id()))?;
    let ex = pipeline::run(scene.cloud.clone(), &scene.rig, &scene.segments, cfg)
        .map_err(|e| format!("{}: {e}", spec.scene_id()))?;
    let records = ex.patches.iter().map(PatchRecord::from).collect();
    Ok((scene, records))
}

fn exact_fit() -> Outcome {
    let mut worst = 0.0_f64;
    for preset in Preset::ALL {
        let spec = SceneSpec::preset(preset, 1000, 0.0, 0);
        let (scene, records) = extract(&spec, &config_for(preset))?;
        let ssd = ssd_error(&scene.gt, &records);
        let covered: BTreeSet<usize> = ssd.per_patch.iter().map(|&(_, f, _)| f).collect();
        ensure(covered.len() == scene.gt.faces.len(), || {
            format!(
                "{preset}: {} of {} faces recovered",
                covered.len(),
                scene.gt.faces.len()
            )
        })?;
        for &(patch, face, e) in &ssd.per_patch {
            ensure(e <= 1e-9, || {
                format!("{preset}: patch {patch} on face {face} has SSD {e:e}")
            })?;
            worst = worst.max(e);
        }
    }
    let spec = SceneSpec::preset(Preset::TwoPlane, 2500, 0.0, 0);
    let start = Instant::now();
    let (scene, _) = extract(&spec, &config_for(Preset::TwoPlane))?;
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 5.0, || format!("{} points took {secs:.2} s", scene.cloud.len()))?;
    Ok(format!(
        "worst per-plane SSD {worst:.1e} over {} presets, {} points in {secs:.2} s",
        Preset::ALL.len(),
        scene.cloud.len()
    ))
}

fn low_noise() -> Outcome {
    let mut parts = Vec::new();
    for (preset, per_face) in [(Preset::TwoPlane, 1000), (Preset::Path, 500)] {
        let spec = SceneSpec::preset(preset, per_face, 0.001, 0);
        let start = Instant::now();
        let (scene, records) = extract(&spec, &config_for(preset))?;
        let secs = start.elapsed().as_secs_f64();
        let ssd = ssd_error(&scene.gt, &records);
        let err = classification_error(&scene.gt, &records);
        ensure(ssd.avg <= 1e-4, || format!("{preset}: avg SSD {:e}", ssd.avg))?;
        ensure(err <= 0.05, || format!("{preset}: classification error {err}"))?;
        ensure(secs < 60.0, || format!("{preset}: {secs:.1} s"))?;
        parts.push(format!(
            "{preset}: avg SSD {:.1e}, error {err:.4}, {} points in {secs:.2} s",
            ssd.avg,
            scene.cloud.len()
        ));
    }
    Ok(parts.join("; "))
}

struct Sweeps {
    noise: Result<Vec<SweepRow>, String>,
    points: Result<Vec<SweepRow>, String>,
    patches: Result<Vec<SweepRow>, String>,
    thresholds: Result<Vec<SweepRow>, String>,
}

impl Sweeps {
    fn run() -> Sweeps {
        let rows = |axis| {
            let spec = SweepSpec {
                axis,
                preset: "two-plane".into(),
                range: None,
                w_range: (-14.0, -2.0),
                samples: None,
                points_per_face: 1000,
                sigma: 0.001,
                config: None,
                seed: 0,
                timing: false,
                out_dir: PathBuf::new(),
            };
            sweep::rows(&spec).map_err(|e| e.to_string())
        };
        Sweeps {
            noise: rows(Axis::Noise),
            points: rows(Axis::Points),
            patches: rows(Axis::Patches),
            thresholds: rows(Axis::Thresholds),
        }
    }
}

fn exclusivity(s: &Sweeps) -> Outcome {
    let mut runs = 0;
    let mut failed = 0;
    for (name, rows) in [
        ("noise", &s.noise),
        ("points", &s.points),
        ("patches", &s.patches),
        ("thresholds", &s.thresholds),
    ] {
        for r in rows.as_ref().map_err(|e| format!("{name} sweep: {e}"))? {
            if !r.error.is_empty() {
                failed += 1;
                continue;
            }
            runs += 1;
            ensure(r.checks_ok, || {
                format!("{name} sweep sample {} violates the checks", r.sample)
            })?;
        }
    }
    Ok(format!(
        "{runs} sweep runs consistent, {failed} samples without patches"
    ))
}

fn noise_curve(s: &Sweeps) -> Outcome {
    let rows = s.noise.as_ref().map_err(|e| e.clone())?;
    ensure(rows.len() == 20, || format!("{} samples", rows.len()))?;
    for r in rows {
        ensure(r.error.is_empty(), || format!("sigma {}: {}", r.sigma, r.error))?;
        ensure(r.class_error.is_finite(), || {
            format!("sigma {}: non-finite error", r.sigma)
        })?;
        ensure(r.ssd_avg < 1e-2, || {
            format!("sigma {}: avg SSD {:e}", r.sigma, r.ssd_avg)
        })?;
    }
    let first = &rows[0];
    ensure(first.sigma == 0.001 && first.class_error <= 0.05, || {
        format!("error at sigma {} is {}", first.sigma, first.class_error)
    })?;
    let worst_ssd = rows.iter().map(|r| r.ssd_avg).fold(0.0, f64::max);
    let worst_err = rows.iter().map(|r| r.class_error).fold(0.0, f64::max);
    Ok(format!(
        "error(0.001) {:.4}, max error {worst_err:.4}, max avg SSD {worst_ssd:.1e}",
        first.class_error
    ))
}

fn threshold_landscape(s: &Sweeps) -> Outcome {
    let rows = s.thresholds.as_ref().map_err(|e| e.clone())?;
    let n = 7;
    ensure(rows.len() == n * n, || format!("{} cells", rows.len()))?;
    let error = |r: &SweepRow| if r.class_error.is_finite() { r.class_error } else { 1.0 };
    let (mut interior, mut boundary) = (f64::INFINITY, f64::INFINITY);
    for (k, r) in rows.iter().enumerate() {
        let (i, j) = (k / n, k % n);
        let edge = i == 0 || j == 0 || i == n - 1 || j == n - 1;
        let slot = if edge { &mut boundary } else { &mut interior };
        *slot = slot.min(error(r));
    }
    ensure(boundary >= interior, || {
        format!("best boundary error {boundary:.4} < best interior error {interior:.4}")
    })?;
    Ok(format!(
        "best interior error {interior:.4}, best boundary error {boundary:.4}"
    ))
}

/// Cases that reached the comparison; degenerate draws are skipped.
struct Counted(Cell<u32>);

impl Counted {
    fn new() -> Counted {
        Counted(Cell::new(0))
    }

    fn hit(&self) {
        self.0.set(self.0.get() + 1);
    }

    fn check(&self, name: &str) -> Result<u32, String> {
        let n = self.0.get();
        ensure(n >= 200, || format!("{name}: only {n} non-degenerate cases"))?;
        Ok(n)
    }
}

fn runner() -> TestRunner {
    TestRunner::new_with_rng(
        Config {
            cases: CASES,
            failure_persistence: None,
            ..Config::default()
        },
        TestRng::deterministic_rng(RngAlgorithm::ChaCha),
    )
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}

/// Orthonormal basis of the plane with unit normal `n`.
fn basis(n: &Vec3) -> (Vec3, Vec3) {
    let helper = if n.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let u = n.cross(&helper).normalize();
    (u, n.cross(&u))
}

fn unit_vector() -> impl Strategy<Value = Vec3> {
    (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64)
        .prop_filter("non-zero", |(x, y, z)| x * x + y * y + z * z > 0.05)
        .prop_map(|(x, y, z)| Vec3::new(x, y, z).normalize())
}

/// Minimum of `|p - q|²` over the fan triangles of a convex polygon by
/// repeated grid refinement in barycentric coordinates.
fn sampled_sq_dist(vertices: &[Vec3], p: &Vec3) -> f64 {
    let mut best = f64::INFINITY;
    for k in 1..vertices.len() - 1 {
        let (a, e1, e2) = (vertices[0], vertices[k] - vertices[0], vertices[k + 1] - vertices[0]);
        let f = |s: f64, t: f64| (a + e1 * s + e2 * t - p).norm_squared();
        let (mut cs, mut ct, mut h) = (1.0 / 3.0, 1.0 / 3.0, 1.0);
        let mut local = f(cs, ct);
        for _ in 0..40 {
            let (mut bs, mut bt) = (cs, ct);
            for i in 0..=20 {
                for j in 0..=20 {
                    let s = cs - h + 2.0 * h * i as f64 / 20.0;
                    let t = ct - h + 2.0 * h * j as f64 / 20.0;
                    if s < 0.0 || t < 0.0 || s + t > 1.0 {
                        continue;
                    }
                    let v = f(s, t);
                    if v < local {
                        local = v;
                        (bs, bt) = (s, t);
                    }
                }
            }
            (cs, ct) = (bs, bt);
            h *= 0.5;
        }
        // Grid points never land exactly on the edges; sample them too.
        for (q0, q1) in [(a, a + e1), (a + e1, a + e2), (a + e2, a)] {
            for i in 0..=2000 {
                let q = q0 + (q1 - q0) * (i as f64 / 2000.0);
                local = local.min((q - p).norm_squared());
            }
        }
        best = best.min(local);
    }
    best
}

fn point_hull_oracle() -> Result<u32, String> {
    let count = Counted::new();
    let strategy = (
        unit_vector(),
        -3.0..3.0f64,
        prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 3..16),
        (-3.0..3.0f64, -3.0..3.0f64, -3.0..3.0f64),
    );
    runner()
        .run(&strategy, |(n, offset, uv, (qx, qy, qz))| {
            let (u, v) = basis(&n);
            let pts: Vec<Vec3> = uv.iter().map(|&(a, b)| n * offset + u * a + v * b).collect();
            let Ok(plane) = Plane::fit_auto(&pts) else {
                return Ok(());
            };
            let Ok(hull) = PlanarHull::build(&plane, &pts) else {
                return Ok(());
            };
            let q = Vec3::new(qx, qy, qz);
            count.hit();
            let got = point_hull_sq_dist(&hull, &q);
            let want = sampled_sq_dist(hull.vertices(), &q);
            if (got - want).abs() <= 1e-3 * want.max(1e-6) {
                Ok(())
            } else {
                Err(TestCaseError::fail(format!(
                    "point_hull_sq_dist {got:e}, sampled {want:e}"
                )))
            }
        })
        .map_err(|e| format!("point-hull distance: {e}"))?;
    count.check("point-hull distance")
}

fn plane_type() -> impl Strategy<Value = PlaneType> {
    prop_oneof![Just(PlaneType::X), Just(PlaneType::Y), Just(PlaneType::Z)]
}

/// Noisy points around a plane whose dependent axis is `t`.
fn noisy_plane_points(t: PlaneType, coeffs: (f64, f64, f64), raw: &[(f64, f64, f64)]) -> Vec<Vec3> {
    let (a1, a2, dep) = t.axes();
    raw.iter()
        .map(|&(s, r, noise)| {
            let mut p = Vec3::zeros();
            p[a1] = s;
            p[a2] = r;
            p[dep] = coeffs.0 * s + coeffs.1 * r + coeffs.2 + noise;
            p
        })
        .collect()
}

fn noisy_plane() -> impl Strategy<Value = (PlaneType, Vec<Vec3>)> {
    (
        plane_type(),
        (-2.0..2.0f64, -2.0..2.0f64, 1.0..10.0f64),
        prop::collection::vec((-5.0..5.0f64, -5.0..5.0f64, -0.05..0.05f64), 8..60),
    )
        .prop_map(|(t, c, raw)| (t, noisy_plane_points(t, c, &raw)))
}

fn incremental_fit_oracle() -> Result<u32, String> {
    let count = Counted::new();
    runner()
        .run(&noisy_plane(), |(t, pts)| {
            let Ok(mut plane) = Plane::fit(&pts[..4], t) else {
                return Ok(());
            };
            for p in &pts[4..] {
                match plane.update_fit(p) {
                    Ok(next) => plane = next,
                    Err(_) => return Ok(()),
                }
            }
            let Ok(batch) = Plane::fit(&pts, t) else { return Ok(()) };
            count.hit();
            let (a, b) = (plane.slope_coeffs(), batch.slope_coeffs());
            for k in 0..3 {
                if !close(a[k], b[k], 1e-9) {
                    return Err(TestCaseError::fail(format!("incremental {a:?} vs batch {b:?}")));
                }
            }
            Ok(())
        })
        .map_err(|e| format!("incremental fit: {e}"))?;
    count.check("incremental fit")
}

fn pair() -> SegmentPair {
    let e = |view| EllipsePrior::new(view, [400.0, 300.0], [400.0, 0.0, 400.0], 0.5).unwrap();
    SegmentPair {
        first: e(View::First),
        second: e(View::Second),
        seed: Vec3::zeros(),
    }
}

fn same_vertices(a: &[Vec3], b: &[Vec3]) -> bool {
    a.len() == b.len()
        && a.iter()
            .all(|p| b.iter().any(|q| (0..3).all(|k| close(p[k], q[k], 1e-9))))
}

fn accept_loop_oracle() -> Result<u32, String> {
    let count = Counted::new();
    let strategy = (noisy_plane(), 1usize..4);
    runner()
        .run(&strategy, |((t, pts), batch)| {
            let mut cloud: Vec<ScenePoint> = pts
                .iter()
                .enumerate()
                .map(|(i, p)| ScenePoint::new(i, *p, [0.0, 0.0], [0.0, 0.0]))
                .collect();
            let Ok(mut patch) = Patch::build(0, pair(), (0..6).collect(), &cloud, Some(t), 1.0, 1.0, 1e-3) else {
                return Ok(());
            };
            let rest: Vec<usize> = (6..pts.len()).collect();
            for ids in rest.chunks(batch) {
                match patch.accept(ids, &mut cloud) {
                    Ok(true) => {}
                    _ => return Ok(()),
                }
            }
            let all: Vec<usize> = (0..pts.len()).collect();
            let Ok(scratch) = Patch::build(0, pair(), all, &cloud, Some(t), 1.0, 1.0, 1e-3) else {
                return Ok(());
            };
            count.hit();
            let (a, b) = (patch.plane().implicit(), scratch.plane().implicit());
            let (ta, tb) = (patch.theta(), scratch.theta());
            let fail = |what: &str| {
                Err(TestCaseError::fail(format!(
                    "{what} differs after accepting in batches of {batch}"
                )))
            };
            if !(0..4).all(|k| close(a[k], b[k], 1e-9)) {
                return fail("plane");
            }
            if !close(ta.alpha, tb.alpha, 1e-9) || !close(ta.beta, tb.beta, 1e-9) {
                return fail("theta");
            }
            if !same_vertices(patch.hull().vertices(), scratch.hull().vertices()) {
                return fail("hull");
            }
            if !close(patch.c1(), scratch.c1(), 1e-9) {
                return fail("constant");
            }
            Ok(())
        })
        .map_err(|e| format!("accept loop: {e}"))?;
    count.check("accept loop")
}

/// Indices of points outside the convex hull of the others.
fn extreme_points(pts: &[[f64; 2]]) -> BTreeSet<usize> {
    let cross = |o: [f64; 2], a: [f64; 2], b: [f64; 2]| (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
    let inside = |p: [f64; 2], a: [f64; 2], b: [f64; 2], c: [f64; 2]| {
        let (d1, d2, d3) = (cross(a, b, p), cross(b, c, p), cross(c, a, p));
        if d1 == 0.0 && d2 == 0.0 && d3 == 0.0 {
            let lo = |k: usize| a[k].min(b[k]).min(c[k]);
            let hi = |k: usize| a[k].max(b[k]).max(c[k]);
            return (0..2).all(|k| lo(k) <= p[k] && p[k] <= hi(k));
        }
        (d1 >= 0.0 && d2 >= 0.0 && d3 >= 0.0) || (d1 <= 0.0 && d2 <= 0.0 && d3 <= 0.0)
    };
    let n = pts.len();
    (0..n)
        .filter(|&i| {
            let others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            !others.iter().any(|&a| {
                others
                    .iter()
                    .any(|&b| others.iter().any(|&c| inside(pts[i], pts[a], pts[b], pts[c])))
            })
        })
        .collect()
}

fn brute_hull_oracle() -> Result<u32, String> {
    let count = Counted::new();
    let strategy = prop::collection::btree_set((0i32..8, 0i32..8), 1..14);
    runner()
        .run(&strategy, |set| {
            let pts: Vec<[f64; 2]> = set.iter().map(|&(x, y)| [x as f64, y as f64]).collect();
            let hull = convex_hull_2d(&pts);
            count.hit();
            let want = extreme_points(&pts);
            if want.len() < 3 || pts.len() < 3 {
                if hull.is_empty() {
                    return Ok(());
                }
                // Collinear sets have no 2D hull.
                let collinear = pts
                    .windows(3)
                    .all(|w| (w[1][0] - w[0][0]) * (w[2][1] - w[0][1]) == (w[1][1] - w[0][1]) * (w[2][0] - w[0][0]));
                if collinear {
                    return Err(TestCaseError::fail("hull of a collinear set"));
                }
            }
            let got: BTreeSet<usize> = hull.iter().copied().collect();
            if want.len() >= 3 && got != want {
                return Err(TestCaseError::fail(format!("hull {got:?}, extreme points {want:?}")));
            }
            let k = hull.len();
            for i in 0..k {
                let (o, a, b) = (pts[hull[i]], pts[hull[(i + 1) % k]], pts[hull[(i + 2) % k]]);
                if (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]) <= 0.0 {
                    return Err(TestCaseError::fail("hull is not strictly counter-clockwise"));
                }
            }
            Ok(())
        })
        .map_err(|e| format!("convex hull: {e}"))?;
    count.check("convex hull")
}

fn oracles() -> Outcome {
    let counts = [
        point_hull_oracle()?,
        incremental_fit_oracle()?,
        accept_loop_oracle()?,
        brute_hull_oracle()?,
    ];
    Ok(format!(
        "cases checked: point-hull {}, incremental fit {}, accept loop {}, hull {}",
        counts[0], counts[1], counts[2], counts[3]
    ))
}

fn estimators() -> Outcome {
    let n = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst_gamma = 0.0_f64;
    let mut worst_weibull = 0.0_f64;
    for trial in 0..20 {
        let alpha = 0.5 + 0.4 * trial as f64;
        let beta = 10f64.powi(trial % 5 - 3);
        let dist = Gamma::new(alpha, beta).unwrap();
        let xs: Vec<f64> = (0..n).map(|_| dist.sample(&mut rng)).collect();
        let g = gamma_mle(&xs).map_err(|e| format!("gamma trial {trial}: {e}"))?;
        let rel = ((g.alpha - alpha) / alpha).abs().max(((g.beta - beta) / beta).abs());
        ensure(rel <= 0.05, || {
            format!(
                "gamma trial {trial}: ({alpha}, {beta}) fitted as ({}, {})",
                g.alpha, g.beta
            )
        })?;
        worst_gamma = worst_gamma.max(rel);

        let k = 0.4 + 0.2 * trial as f64;
        let lambda = 10f64.powi(trial % 4 - 4);
        let dist = Weibull::new(lambda, k).unwrap();
        let xs: Vec<f64> = (0..n).map(|_| dist.sample(&mut rng)).collect();
        let w = weibull_fit(&xs).map_err(|e| format!("weibull trial {trial}: {e}"))?;
        let rel = ((w.k - k) / k).abs().max(((w.lambda - lambda) / lambda).abs());
        ensure(rel <= 0.05, || {
            format!(
                "weibull trial {trial}: ({k}, {lambda}) fitted as ({}, {})",
                w.k, w.lambda
            )
        })?;
        worst_weibull = worst_weibull.max(rel);
    }

    let mut worst_identity = 0.0_f64;
    for trial in 0..200 {
        let t = trial as f64;
        let g1 = GammaParams::new(0.3 + 0.05 * t, 1e-3 * (1.0 + t)).unwrap();
        let g2 = GammaParams::new(2.0 + 0.01 * t, 0.5 / (1.0 + t)).unwrap();
        let w = 10f64.powf(-4.0 + 0.03 * t);
        let s = gamma_sum_approx(g1, g2, w);
        let mean = g1.alpha * g1.beta + g2.alpha * w * g2.beta;
        let var = g1.alpha * g1.beta * g1.beta + g2.alpha * (w * g2.beta).powi(2);
        ensure(close(s.mean(), mean, 1e-12) && close(s.variance(), var, 1e-12), || {
            format!("moment identity fails for {g1:?}, {g2:?}, w {w}")
        })?;

        let wp = WeibullParams::new(0.3 + 0.01 * t, 10f64.powf(-6.0 + 0.04 * t)).unwrap();
        let d = wp.lambda * 10f64.powf(-2.0 + 0.02 * t);
        let lhs = weibull_log_pdf(d, wp).unwrap();
        let rhs = -wp.penalty(d) - wp.log_constant();
        let err = (lhs - rhs).abs() / lhs.abs().max(1.0);
        ensure(err <= 1e-12, || {
            format!("log-density identity off by {err:e} for {wp:?} at {d:e}")
        })?;
        worst_identity = worst_identity.max(err);
    }
    Ok(format!(
        "worst relative error gamma {worst_gamma:.4}, weibull {worst_weibull:.4}, identity {worst_identity:.1e}"
    ))
}

fn patchgrow(args: &[&str], dir: &Path) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_patchgrow"))
        .args(args)
        .current_dir(dir)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), || {
        format!(
            "patchgrow {}: {}",
            args.join(" "),
            String::from_utf8_lossy(&out.stderr).trim()
        )
    })
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect();
    out.sort();
    out
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = tmp.path();
    let commands: [&[&str]; 6] = [
        &[
            "synth",
            "--preset",
            "path",
            "--seed",
            "7",
            "--sigma",
            "0.001",
            "--out-dir",
            "OUT",
        ],
        &[
            "synth",
            "--preset",
            "chessboard",
            "--seed",
            "3",
            "--binary",
            "--out-dir",
            "OUT",
        ],
        &[
            "extract",
            "../scene/cloud.ply",
            "../scene/cameras.json",
            "../scene/segments.json",
            "--out-dir",
            "OUT",
        ],
        &[
            "eval",
            "../scene/gt.json",
            "../patches/patches.json",
            "--out-dir",
            "OUT",
        ],
        &["sweep", "--axis", "noise", "--samples", "3", "--out-dir", "OUT"],
        &[
            "calibrate",
            "../scene/cloud.ply",
            "../scene/cameras.json",
            "--out-dir",
            "OUT",
        ],
    ];
    for (name, args) in [("scene", commands[0]), ("patches", commands[2])] {
        let dir = root.join(name);
        std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
        let args: Vec<&str> = args.iter().map(|a| if *a == "OUT" { "." } else { a }).collect();
        patchgrow(&args, &dir)?;
    }
    let mut compared = 0;
    for (c, args) in commands.iter().enumerate() {
        let mut outputs = Vec::new();
        for run in 0..2 {
            let dir = root.join(format!("run{c}"));
            let out = format!("out{run}");
            std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
            let args: Vec<&str> = args
                .iter()
                .map(|a| if *a == "OUT" { out.as_str() } else { a })
                .collect();
            patchgrow(&args, &dir)?;
            outputs.push(files(&dir.join(&out)));
        }
        ensure(!outputs[0].is_empty(), || format!("{} wrote nothing", args[0]))?;
        ensure(outputs[0] == outputs[1], || {
            format!("{} outputs differ between runs", args.join(" "))
        })?;
        compared += outputs[0].len();
    }
    Ok(format!("{} commands, {compared} files byte-identical", commands.len()))
}
