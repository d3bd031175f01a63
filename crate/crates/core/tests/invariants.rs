use equidist_core::analysis;
use equidist_core::bergman::{basis_indices, BergmanConfig, SectionSpace};
use equidist_core::quadrature::{integrate_sphere, GridSpec, Pole};
use equidist_core::sampling::{sample_section, RngStream};
use equidist_core::space::chordal;
use equidist_core::weights::{curvature, verify_hoelder, HolderParams, Weight};
use equidist_core::zeros::{roots_sphere, ZeroTolerances};
use equidist_core::{ChartPoint, ModelSpace, Point, C64};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn sphere_preset(kind: usize, re: f64, im: f64, eps: f64) -> Weight {
    let c = if im < 0.0 { format!("{re}{im}i") } else { format!("{re}+{im}i") };
    let name = match kind {
        0 => format!("fs+logpole({c},{eps})"),
        1 => format!("fs+softpole({c},{eps})"),
        _ => format!("fs+cone({c},0.5,{})", eps / 4.0),
    };
    Weight::preset(ModelSpace::Sphere, &name).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn curvature_mass_is_the_degree(kind in 0usize..3, re in -0.5f64..0.5, im in -0.5f64..0.5, eps in 0.05f64..0.5) {
        let w = sphere_preset(kind, re, im, eps);
        let m = curvature(&w, &GridSpec::default()).unwrap();
        prop_assert!((m.total_mass - 1.0).abs() < 1e-8, "{}: {}", w.label, m.total_mass);
    }

    #[test]
    fn atom_mass_is_the_pole_strength(re in -0.5f64..0.5, im in -0.5f64..0.5, eps in 0.05f64..0.9) {
        let w = sphere_preset(0, re, im, eps);
        let m = curvature(&w, &GridSpec::default()).unwrap();
        prop_assert_eq!(m.atom_mass(), eps);
    }

    #[test]
    fn weight_is_finite_off_the_singular_set(kind in 0usize..3, eps in 0.05f64..0.5, x in -5.0f64..5.0, y in -5.0f64..5.0) {
        let w = sphere_preset(kind, 0.1, -0.2, eps);
        let z = C64::new(x, y);
        prop_assume!((z - C64::new(0.1, -0.2)).norm() > 1e-3);
        let pt = Point::finite(z);
        prop_assert!(w.eval(&pt).is_finite());
        // Continuity: a 1e-9 move changes φ by O(1e-9 / distance).
        let near = Point::finite(z + C64::new(1e-9, 0.0));
        prop_assert!((w.eval(&pt) - w.eval(&near)).abs() < 1e-5);
    }

    #[test]
    fn cutoff_poles_are_lipschitz_away_from_the_pole(re in -0.5f64..0.5, eps in 0.05f64..0.5, seed in 0u64..1000) {
        let w = sphere_preset(0, re, 0.0, eps);
        let params = HolderParams::new(1.0, 1.0, 10.0).unwrap();
        let small = verify_hoelder(&w, params, 200, &mut ChaCha8Rng::seed_from_u64(seed));
        let large = verify_hoelder(&w, params, 2000, &mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert!(small.pass && large.pass);
        prop_assert!(large.empirical_constant <= 10.0);
    }

    #[test]
    fn quadrature_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0, cx in -1.0f64..1.0) {
        let spec = GridSpec::default();
        let f = |z: C64| (ChartPoint::Finite(z).stereo()[0] * cx).cos();
        let g = |z: C64| 1.0 / (1.0 + (z - cx).norm_sqr());
        let rf = integrate_sphere(f, &[], 1e-10, &spec).unwrap();
        let rg = integrate_sphere(g, &[], 1e-10, &spec).unwrap();
        let rh = integrate_sphere(|z| a * f(z) + b * g(z), &[], 1e-10, &spec).unwrap();
        let tol = 2.0 * (rf.error_estimate + rg.error_estimate + rh.error_estimate) + 1e-15;
        prop_assert!((rh.value - a * rf.value - b * rg.value).abs() <= tol);
    }

    #[test]
    fn graded_power_poles_match_the_closed_form(s in -0.9f64..-0.01) {
        // d(z, 0)^{2s} = (|z|²/(1+|z|²))ˢ; with u = t/(1+t) the integral is ∫₀¹ uˢ du.
        let exact = 1.0 / (1.0 + s);
        let r = integrate_sphere(|z| (z.norm_sqr() / (1.0 + z.norm_sqr())).powf(s), &[Pole::new(ChartPoint::new(0.0, 0.0), 2.0 * s)], 1e-10, &GridSpec::default()).unwrap();
        prop_assert!(((r.value - exact) / exact).abs() <= 1e-10, "{} vs {exact}", r.value);
    }

    #[test]
    fn doubling_resolution_stays_within_the_error_estimate(cx in -1.0f64..1.0, k in 1.0f64..4.0) {
        let f = |z: C64| {
            let [x, y, h] = ChartPoint::Finite(z).stereo();
            (k * x).sin() + (cx * y + h).exp()
        };
        let base = GridSpec::default();
        let fine = GridSpec { n_gl: 2 * base.n_gl, n_graded: 2 * base.n_graded, n_theta: 2 * base.n_theta, ..base.clone() };
        let a = integrate_sphere(f, &[], 1e-10, &base).unwrap();
        let b = integrate_sphere(f, &[], 1e-10, &fine).unwrap();
        prop_assert!((a.value - b.value).abs() <= a.error_estimate.max(1e-14));
    }

    #[test]
    fn unit_sections_are_dominated_by_the_kernel(p in 1usize..24, sample in 0u64..1000, x in -3.0f64..3.0, y in -3.0f64..3.0) {
        let w = Weight::preset(ModelSpace::Sphere, "fs+softpole(0,0.3)").unwrap();
        let sp = SectionSpace::build(&w, p, &BergmanConfig::default()).unwrap();
        let s = sample_section(&sp, &RngStream::new(1, "reproducing", p, sample)).section;
        let pt = Point::finite(C64::new(x, y));
        prop_assert!(2.0 * s.log_norm(&w, &pt) <= sp.log_kernel(&pt) + 1e-10);
    }

    #[test]
    fn kernel_integrates_to_the_dimension(p in 1usize..24, preset in 0usize..2) {
        let name = ["fs", "fs+softpole(0,0.3)"][preset];
        let w = Weight::preset(ModelSpace::Sphere, name).unwrap();
        let sp = SectionSpace::build(&w, p, &BergmanConfig::default()).unwrap();
        let eps = w.log_pole(0).map_or(0.0, |lp| lp.eps);
        let jmin = basis_indices(&w, p)[0][0] as f64;
        let pole = Pole::new(ChartPoint::new(0.0, 0.0), 2.0 * (jmin - p as f64 * eps));
        let r = integrate_sphere(|z| sp.kernel(&Point::finite(z)), &[pole], 1e-10, &GridSpec::for_degree(p)).unwrap();
        let dim = sp.dim() as f64;
        prop_assert!(((r.value - dim) / dim).abs() <= 1e-6, "{name} p={p}: {} vs {dim}", r.value);
    }

    #[test]
    fn zero_mass_is_conserved(p in 1usize..=32, sample in 0u64..1000) {
        let w = Weight::fubini_study(ModelSpace::Sphere);
        let sp = SectionSpace::build(&w, p, &BergmanConfig::default()).unwrap();
        let s = sample_section(&sp, &RngStream::new(2, "mass", p, sample)).section;
        let m = roots_sphere(&s, &ZeroTolerances::default()).unwrap();
        prop_assert_eq!(m.total_multiplicity(), p);
        prop_assert_eq!(m.scale * m.total_multiplicity() as f64, 1.0);
        prop_assert!(m.max_residual <= 1e-6);
    }

    #[test]
    fn roots_are_chart_covariant(p in 1usize..=32, sample in 0u64..1000) {
        let w = Weight::fubini_study(ModelSpace::Sphere);
        let sp = SectionSpace::build(&w, p, &BergmanConfig::default()).unwrap();
        let s = sample_section(&sp, &RngStream::new(3, "chart", p, sample)).section;
        let mut r = s.clone();
        r.coeffs.reverse();
        let a = roots_sphere(&s, &ZeroTolerances::default()).unwrap();
        let b = roots_sphere(&r, &ZeroTolerances::default()).unwrap();
        prop_assert_eq!(a.points.len(), b.points.len());
        for (pa, _) in &a.points {
            let Point::Sphere(za) = pa else { unreachable!() };
            let d = b
                .points
                .iter()
                .map(|(pb, _)| match pb {
                    Point::Sphere(zb) => chordal(*za, zb.reciprocal()),
                    Point::Product(..) => unreachable!(),
                })
                .fold(f64::INFINITY, f64::min);
            prop_assert!(d <= 1e-8, "p={p}: {d}");
        }
    }

    #[test]
    fn battery_members_are_exact(kind in 0usize..2, re in -0.3f64..0.3, eps in 0.05f64..0.4) {
        let w = sphere_preset(kind, re, 0.0, eps);
        for (name, chi) in analysis::battery(&w) {
            let e = analysis::exactness(&w, &chi, &GridSpec::default()).unwrap();
            prop_assert!(e <= 1e-10, "{name}: {e}");
        }
    }
}

#[test]
fn gram_is_positive_definite_up_to_64_on_the_sphere() {
    for name in ["fs", "fs+softpole(0,0.3)", "fs+logpole(0,0.3)"] {
        let w = Weight::preset(ModelSpace::Sphere, name).unwrap();
        for p in [1usize, 8, 16, 32, 48, 64] {
            SectionSpace::build(&w, p, &BergmanConfig::default()).unwrap_or_else(|e| panic!("{name} p={p}: {e}"));
        }
    }
}

#[test]
fn gram_is_positive_definite_up_to_12_on_the_product() {
    for name in ["fs", "fs+softjointpole(0,0,0.15)"] {
        let w = Weight::preset(ModelSpace::SphereProduct, name).unwrap();
        for p in [1usize, 4, 8, 12] {
            SectionSpace::build(&w, p, &BergmanConfig::default()).unwrap_or_else(|e| panic!("{name} p={p}: {e}"));
        }
    }
}

#[test]
fn kernel_is_basis_independent() {
    use nalgebra::DMatrix;
    use rand::Rng;
    let w = Weight::preset(ModelSpace::Sphere, "fs+logpole(0.2,0.3)").unwrap();
    let p = 12;
    let sp = SectionSpace::build(&w, p, &BergmanConfig::default()).unwrap();
    let n = sp.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let g = DMatrix::from_fn(n, n, |_, _| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
    let u = g.qr().q();
    for z in [C64::new(0.3, 0.1), C64::new(-1.5, 2.0), C64::new(0.21, 0.0), C64::new(7.0, -3.0)] {
        let pt = Point::finite(z);
        let rotated: f64 = (0..n)
            .map(|k| {
                let c: Vec<C64> = u.column(k).iter().copied().collect();
                (2.0 * sp.section(&c).log_norm(&w, &pt)).exp()
            })
            .sum();
        let direct = sp.kernel(&pt);
        assert!(((rotated - direct) / direct).abs() <= 1e-8, "{z}: {rotated} vs {direct}");
    }
}

#[test]
fn fs_potential_lower_bound_is_uniform_in_p() {
    let w = Weight::preset(ModelSpace::Sphere, "fs+softpole(0,0.3)").unwrap();
    let grid: Vec<Point> = equidist_core::space::fibonacci_points(400).into_iter().map(Point::Sphere).collect();
    let constants: Vec<f64> = [4usize, 8, 16, 32]
        .iter()
        .map(|&p| {
            let sp = SectionSpace::build(&w, p, &BergmanConfig::default()).unwrap();
            let min = grid.iter().map(|pt| sp.fs_potential_difference(pt)).filter(|v| v.is_finite()).fold(f64::INFINITY, f64::min);
            -(p as f64) * min
        })
        .collect();
    let c0 = constants[0].max(1.0);
    assert!(constants.iter().all(|&c| c <= 2.0 * c0), "{constants:?}");
}
