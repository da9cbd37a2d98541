//! Operators against values computed independently in the test.

use std::f64::consts::PI;

use folia::calculus::MapData;
use folia::manifold::{build_model, build_target, ModelFoliation, ModelSpec, StencilOrder};
use folia::section::{random_section, MapField, PullbackSection, VariationPath};
use folia::tension::{conservation_residual, tension};
use folia::variational::{
    assemble_jacobi, bienergy, energy, fd_first_variation, section_integral, stability_report, EigenSolver, Functional,
    DEFAULT_STEPS,
};

fn flat(res: usize) -> ModelFoliation {
    build_model(&ModelSpec::new("product-flat-torus", 0.0, res)).unwrap()
}

fn circle(m: &ModelFoliation, r: f64) -> MapField {
    let t = build_target("sphere-stereo", None).unwrap();
    MapField::from_fn(m, &t, vec![0; 4], |x| [r * x[0].cos(), r * x[0].sin()]).unwrap()
}

// Fourth-order central difference of e^{ix} is iσ e^{ix}.
fn sigma(res: usize) -> f64 {
    let h = 2.0 * PI / res as f64;
    (8.0 * h.sin() - (2.0 * h).sin()) / (6.0 * h)
}

// For u = r(cos x⁰, sin x⁰) into the stereographic unit sphere,
// τ = u (r² − 1)/(1 + r²) by direct computation with the conformal factor;
// on the grid each derivative carries a factor σ.
#[test]
fn circle_tension_closed_form() {
    for r in [0.3, 0.5, 1.0, 1.7] {
        let m = flat(32);
        let map = circle(&m, r);
        let tau = tension(&m, &map).unwrap();
        let c = sigma(32).powi(2) * (r * r - 1.0) / (1.0 + r * r);
        let mut err: f64 = 0.0;
        for n in 0..m.node_count() {
            let u = map.at(n);
            err = err.max((tau.at(n)[0] - c * u[0]).abs()).max((tau.at(n)[1] - c * u[1]).abs());
        }
        assert!(err < 1e-12, "r = {r}: {err:e}");
    }
}

#[test]
fn equator_is_harmonic() {
    let m = flat(32);
    assert!(tension(&m, &circle(&m, 1.0)).unwrap().max_abs() < 1e-13);
}

// |τ|² in the sphere metric is λ² |τ|² with λ = 2/(1 + r²); E₂ = ½ (2π)² that.
#[test]
fn circle_bienergy_closed_form() {
    let r: f64 = 0.5;
    let lam = 2.0 / (1.0 + r * r);
    let tau = sigma(64).powi(2) * r * (1.0 - r * r) / (1.0 + r * r);
    let expected = 0.5 * 4.0 * PI * PI * lam * lam * tau * tau;
    let m = flat(64);
    let got = bienergy(&m, &circle(&m, r)).unwrap();
    assert!((got - expected).abs() < 1e-12 * expected, "{got} vs {expected}");
}

// E(u) = ½ ∫ |du|² for u = A x on the flat torus is 2π² Σ a_ij².
#[test]
fn linear_map_energies() {
    let t = build_target("flat-torus", None).unwrap();
    for res in [16, 32] {
        let m = flat(res);
        for a in [[1i64, 0, 0, 1], [1, 1, 0, 1], [2, -1, 3, 0], [0, 0, 0, 0]] {
            let e = energy(&m, &MapField::linear(&m, &t, &a, [0.2, 0.7]).unwrap()).unwrap();
            let expected = 2.0 * PI * PI * a.iter().map(|v| (v * v) as f64).sum::<f64>();
            assert!((e - expected).abs() < 1e-10, "{a:?}: {e} vs {expected}");
        }
    }
}

#[test]
fn linear_maps_conserve_stress() {
    let t = build_target("flat-torus", None).unwrap();
    let m = build_model(&ModelSpec::new("warped-torus", 0.3, 24)).unwrap();
    let map = MapField::linear(&m, &t, &[2, 1, -1, 1], [0.0, 0.0]).unwrap();
    assert!(conservation_residual(&m, &map).unwrap() < 1e-10);
}

// Plain central differences of the energy, written out here.
#[test]
fn first_variation_against_hand_difference() {
    let m = build_model(&ModelSpec::new("warped-torus", 0.2, 32)).unwrap();
    let t = build_target("hyperbolic-disk", None).unwrap();
    let map = MapField::from_fn(&m, &t, vec![0; 4], |x| [0.2 * x[0].sin(), 0.1 * (x[0] + x[1]).cos()]).unwrap();
    let v = random_section(&m, 9, 2, 0.1).unwrap();
    let h = 1e-4;
    let e = |s: f64| energy(&m, &map.displaced(&v.scaled(s)).unwrap()).unwrap();
    let hand = (e(h) - e(-h)) / (2.0 * h);
    let r = fd_first_variation(&m, &VariationPath::new(map.clone(), v.clone()).unwrap(), Functional::Energy, &DEFAULT_STEPS)
        .unwrap();
    assert!((r.fd - hand).abs() < 1e-6 * hand.abs().max(1.0), "{} vs {hand}", r.fd);
    let md = MapData::new(&m, &map).unwrap();
    let tau = tension(&m, &map).unwrap();
    let formula = -section_integral(&m, &md, &v, &tau);
    assert!((r.formula - formula).abs() < 1e-12);
}

// The Jacobi operator of the identity is minus the compact Laplacian, whose
// symbol per axis is (30 − 32 cos kh + 2 cos 2kh) / 12h² at fourth order.
#[test]
fn identity_spectrum_matches_stencil_symbol() {
    let res = 12;
    let m = build_model(&ModelSpec::new("product-flat-torus", 0.0, res).with_order(StencilOrder::Fourth)).unwrap();
    let t = build_target("flat-torus", None).unwrap();
    let asm = assemble_jacobi(&m, &MapField::identity(&m, &t).unwrap()).unwrap();
    let h = 2.0 * PI / res as f64;
    let sym = |k: i32| {
        let kh = k as f64 * h;
        (30.0 - 32.0 * kh.cos() + 2.0 * (2.0 * kh).cos()) / (12.0 * h * h)
    };
    let mut expected = Vec::new();
    for k0 in 0..res as i32 {
        for k1 in 0..res as i32 {
            let v = sym(k0) + sym(k1);
            expected.push(v);
            expected.push(v);
        }
    }
    expected.sort_by(|a, b| a.total_cmp(b));
    let k = 40;
    let rep = stability_report(&asm, k, EigenSolver::Dense).unwrap();
    for (a, b) in rep.lowest.iter().zip(&expected[..k]) {
        assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }
}

#[test]
fn zero_variation_gives_zero() {
    let m = flat(16);
    let map = circle(&m, 0.5);
    let v = PullbackSection::zeros(m.node_count());
    let r = fd_first_variation(&m, &VariationPath::new(map, v).unwrap(), Functional::Bienergy, &DEFAULT_STEPS).unwrap();
    assert_eq!(r.fd, 0.0);
    assert_eq!(r.formula, 0.0);
}
