use proptest::prelude::*;

use folia::calculus::{basic_laplacian, delta_tilde, integrate, MapData, Measure};
use folia::manifold::{build_model, build_target, ModelFoliation, ModelSpec};
use folia::section::{
    perturbed_map, random_scalar, random_section, read_field_csv, write_field_csv, MapField, ScalarField,
};
use folia::tension::{d_t, tension_of};
use folia::variational::{energy, section_integral, thess_formula};

const MODELS: [(&str, f64); 3] = [("product-flat-torus", 0.0), ("warped-torus", 0.25), ("conformal-torus", 0.2)];
const TARGETS: [&str; 3] = ["flat-torus", "sphere-stereo", "hyperbolic-disk"];

fn model(i: usize, res: usize) -> ModelFoliation {
    let (name, eps) = MODELS[i];
    build_model(&ModelSpec::new(name, eps, res)).unwrap()
}

fn map(m: &ModelFoliation, target: usize, seed: u64) -> MapField {
    let t = build_target(TARGETS[target], None).unwrap();
    let base = match target {
        0 => MapField::identity(m, &t).unwrap(),
        _ => MapField::constant(m, &t, [0.1, -0.05]).unwrap(),
    };
    perturbed_map(m, &base, seed, 2, 0.2).unwrap()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn basic_laplacian_is_self_adjoint(mi in 0usize..3, s1 in 0u64..1000, s2 in 0u64..1000) {
        let m = model(mi, 16);
        let f = random_scalar(&m, s1, 3, 1.0).unwrap();
        let g = random_scalar(&m, s2, 3, 1.0).unwrap();
        let lf = basic_laplacian(&m, &f);
        let lg = basic_laplacian(&m, &g);
        let a: Vec<f64> = f.0.iter().zip(&lg.0).map(|(x, y)| x * y).collect();
        let b: Vec<f64> = g.0.iter().zip(&lf.0).map(|(x, y)| x * y).collect();
        let d = integrate(&m, &a, Measure::Full) - integrate(&m, &b, Measure::Full);
        prop_assert!(d.abs() < 1e-10, "{d:e}");
    }

    #[test]
    fn constants_are_in_the_kernel(mi in 0usize..3, c in -5.0f64..5.0) {
        let m = model(mi, 16);
        let f = ScalarField(vec![c; m.node_count()]);
        prop_assert!(basic_laplacian(&m, &f).0.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn tension_is_minus_delta_tilde_of_the_differential(mi in 0usize..3, ti in 0usize..3, seed in 0u64..1000) {
        let m = model(mi, 16);
        let phi = map(&m, ti, seed);
        let md = MapData::new(&m, &phi).unwrap();
        let tau = tension_of(&m, &md);
        let dt = delta_tilde(&m, &md, &d_t(&md)).unwrap();
        let err = dt.0.iter().zip(&tau.0).fold(0.0f64, |a, (x, y)| a.max((x + y).abs()));
        prop_assert!(err < 1e-10, "{err:e}");
    }

    #[test]
    fn energy_is_nonnegative(mi in 0usize..3, ti in 0usize..3, seed in 0u64..1000) {
        let m = model(mi, 12);
        prop_assert!(energy(&m, &map(&m, ti, seed)).unwrap() >= 0.0);
    }

    #[test]
    fn flat_target_energy_ignores_translation(mi in 0usize..3, seed in 0u64..1000, a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let m = model(mi, 12);
        let phi = map(&m, 0, seed);
        let moved = phi.displaced(&folia::section::PullbackSection::constant(m.node_count(), [a, b])).unwrap();
        let (e0, e1) = (energy(&m, &phi).unwrap(), energy(&m, &moved).unwrap());
        prop_assert!((e0 - e1).abs() < 1e-11 * e0.max(1.0));
    }

    #[test]
    fn hessian_formula_is_symmetric(mi in 0usize..3, ti in 0usize..3, seed in 0u64..1000) {
        let m = model(mi, 12);
        let phi = map(&m, ti, seed);
        let v = random_section(&m, seed + 1, 2, 0.1).unwrap();
        let w = random_section(&m, seed + 2, 2, 0.1).unwrap();
        let md = MapData::new(&m, &phi).unwrap();
        let a = thess_formula(&m, &md, &v, &w).unwrap();
        let b = thess_formula(&m, &md, &w, &v).unwrap();
        prop_assert!((a - b).abs() < 1e-12 * a.abs().max(1.0), "{a} vs {b}");
    }

    #[test]
    fn section_integral_is_a_symmetric_form(mi in 0usize..3, ti in 0usize..3, seed in 0u64..1000, s in -2.0f64..2.0) {
        let m = model(mi, 12);
        let phi = map(&m, ti, seed);
        let md = MapData::new(&m, &phi).unwrap();
        let v = random_section(&m, seed + 1, 2, 1.0).unwrap();
        let w = random_section(&m, seed + 2, 2, 1.0).unwrap();
        let vw = section_integral(&m, &md, &v, &w);
        prop_assert!((vw - section_integral(&m, &md, &w, &v)).abs() < 1e-12 * vw.abs().max(1.0));
        let lin = section_integral(&m, &md, &v.scaled(s).add(&w), &w);
        let expect = s * vw + section_integral(&m, &md, &w, &w);
        prop_assert!((lin - expect).abs() < 1e-10 * expect.abs().max(1.0));
        prop_assert!(section_integral(&m, &md, &v, &v) >= 0.0);
    }

    #[test]
    fn seeded_fields_are_reproducible(mi in 0usize..3, seed in 0u64..1000) {
        let m = model(mi, 12);
        let a = random_section(&m, seed, 2, 0.3).unwrap();
        let b = random_section(&m, seed, 2, 0.3).unwrap();
        prop_assert_eq!(&a.0, &b.0);
        prop_assert!(dot(&a.0, &a.0) > 0.0);
    }

    #[test]
    fn field_csv_round_trips(mi in 0usize..3, seed in 0u64..1000) {
        let m = model(mi, 8);
        let v = random_section(&m, seed, 2, 0.7).unwrap();
        let mut buf = Vec::new();
        write_field_csv(&mut buf, &m.chart, &["u0", "u1"], &v.0).unwrap();
        let back = read_field_csv(buf.as_slice(), m.q()).unwrap();
        prop_assert_eq!(back, v.0);
    }
}
