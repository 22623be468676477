use patchgrow::probability::{
    gamma_log_likelihood, gamma_log_pdf, gamma_mle, gamma_sum_approx, weibull_fit, weibull_log_likelihood,
    weibull_log_pdf,
};
use patchgrow::stereo::{project, reconstruction_uncertainty, triangulate, View};
use patchgrow::{EllipsePrior, GammaParams, StereoRig, Vec3, WeibullParams};
use proptest::prelude::*;

fn rig(sigma: f64) -> StereoRig {
    StereoRig::canonical(800.0, (640, 480), 0.2, sigma)
}

fn positive() -> impl Strategy<Value = f64> {
    (-6.0..6.0f64).prop_map(|e| 10f64.powf(e))
}

fn in_view_point() -> impl Strategy<Value = Vec3> {
    (-0.25..0.25f64, -0.2..0.2f64, 2.0..12.0f64).prop_map(|(x, y, z)| Vec3::new(x * z, y * z, z))
}

proptest! {
    #[test]
    fn log_densities_are_finite_over_the_working_range(
        d_exp in -12.0..12.0f64,
        alpha in positive(),
        beta in positive(),
        k in 0.2..5.0f64,
        lambda in positive(),
    ) {
        let d = 10f64.powf(d_exp);
        let g = GammaParams::new(alpha, beta).unwrap();
        prop_assert!(gamma_log_pdf(d, g).unwrap().is_finite());
        let wp = WeibullParams::new(k, lambda).unwrap();
        prop_assert!(weibull_log_pdf(d, wp).unwrap().is_finite());
    }

    #[test]
    fn gamma_fit_is_scale_equivariant(samples in prop::collection::vec(positive(), 2..50), c in positive()) {
        let Ok(g) = gamma_mle(&samples) else { return Ok(()) };
        let scaled: Vec<f64> = samples.iter().map(|d| d * c).collect();
        let gs = gamma_mle(&scaled).unwrap();
        prop_assert!((gs.alpha - g.alpha).abs() <= 1e-6 * g.alpha, "{g:?} vs {gs:?}");
        prop_assert!((gs.beta - c * g.beta).abs() <= 1e-6 * c * g.beta);
    }

    #[test]
    fn sum_approximation_matches_the_moments(
        a1 in positive(), b1 in positive(), a2 in positive(), b2 in positive(), w in positive(),
    ) {
        let g1 = GammaParams::new(a1, b1).unwrap();
        let g2 = GammaParams::new(a2, b2).unwrap();
        let s = gamma_sum_approx(g1, g2, w);
        let mean = a1 * b1 + a2 * w * b2;
        let var = a1 * b1 * b1 + a2 * (w * b2).powi(2);
        prop_assert!((s.alpha * s.beta - mean).abs() <= 1e-12 * mean);
        prop_assert!((s.alpha * s.beta * s.beta - var).abs() <= 1e-12 * var);
    }

    #[test]
    fn triangulation_reprojects_exactly(p in in_view_point()) {
        let rig = rig(0.0);
        let x = project(&rig.k, &p).unwrap();
        let xp = project(&rig.k_prime, &p).unwrap();
        let q = triangulate(&x, &xp, &rig).unwrap();
        let x2 = project(&rig.k, &q).unwrap();
        let xp2 = project(&rig.k_prime, &q).unwrap();
        for (a, b) in x.iter().chain(&xp).zip(x2.iter().chain(&xp2)) {
            prop_assert!((a - b).abs() <= 1e-8, "{x:?} {xp:?} vs {x2:?} {xp2:?}");
        }
    }

    #[test]
    fn equal_quadratic_forms_give_equal_priors(
        cx in 0.0..640.0f64, cy in 0.0..480.0f64,
        k1 in 1.0..500.0f64, k3 in 1.0..500.0f64, r in -0.95..0.95f64,
        dx in -50.0..50.0f64, dy in -50.0..50.0f64,
    ) {
        let k2 = r * (k1 * k3).sqrt();
        let e = EllipsePrior::new(View::First, [cx, cy], [k1, k2, k3], 0.5).unwrap();
        let a = [cx + dx, cy + dy];
        let b = [cx - dx, cy - dy];
        let z = e.quad_form(&a);
        let tol = 1e-9 * (1.0 + z);
        prop_assert!((e.quad_form(&b) - z).abs() <= tol);
        prop_assert!((e.log_prior(&a) - e.log_prior(&b)).abs() <= tol);
        // A point on the same level set along the first image axis.
        let c = [cx + (z * k1).sqrt(), cy];
        prop_assert!((e.quad_form(&c) - z).abs() <= tol);
        prop_assert!((e.log_prior(&c) - e.log_prior(&a)).abs() <= tol);
    }
}

fn d_c_samples(sigma: f64, n: usize) -> Vec<f64> {
    let rig = rig(sigma);
    (0..n)
        .map(|i| {
            let t = i as f64 / n as f64;
            let p = Vec3::new(-1.0 + 2.0 * t, 0.5 - t, 4.0 + 6.0 * ((7 * i) % n) as f64 / n as f64);
            let x = project(&rig.k, &p).unwrap();
            let xp = project(&rig.k_prime, &p).unwrap();
            reconstruction_uncertainty(&p, &x, &xp, &rig, 1, 42, i as u64).unwrap()
        })
        .collect()
}

#[test]
fn uncertainty_grows_with_pixel_noise() {
    let p = Vec3::new(0.3, -0.2, 6.0);
    let mut last = 0.0;
    for sigma in [0.1, 0.2, 0.4, 0.8] {
        let rig = rig(sigma);
        let x = project(&rig.k, &p).unwrap();
        let xp = project(&rig.k_prime, &p).unwrap();
        let d = reconstruction_uncertainty(&p, &x, &xp, &rig, 10_000, 3, 0).unwrap();
        assert!(d > last, "sigma {sigma}: {d} <= {last}");
        last = d;
    }
}

#[test]
fn weibull_describes_uncertainty_at_least_as_well_as_gamma() {
    let samples = d_c_samples(0.5, 5000);
    let n = samples.len() as f64;
    let wp = weibull_fit(&samples).unwrap();
    let g = gamma_mle(&samples).unwrap();
    let lw = weibull_log_likelihood(&samples, wp);
    let lg = gamma_log_likelihood(&samples, g);
    assert!(lw >= lg - 1e-3 * n, "weibull {lw} gamma {lg}");
}
