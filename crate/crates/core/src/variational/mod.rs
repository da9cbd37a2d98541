//! Energy and bi-energy functionals, finite-difference variation oracles,
//! Hessian forms and the bi-energy second variation.

pub mod spectrum;

use serde::{Deserialize, Serialize};

use crate::calculus::{integrate, pullback_derivative, MapData, Measure};
use crate::convergence::richardson_t2;
use crate::error::{Error, Result};
use crate::manifold::target::apply_nabla_riemann;
use crate::manifold::{ModelFoliation, TARGET_DIM};
use crate::section::{MapField, PullbackSection, VariationPath};
use crate::tension::{curvature_action, energy_density, jacobi_apply, tension_of};

pub use spectrum::{assemble_jacobi, stability_report, EigenSolver, HessianAssembly, StabilityReport};

const D: usize = TARGET_DIM;

/// Default finite-difference step schedule.
pub const DEFAULT_STEPS: [f64; 3] = [1e-2, 5e-3, 2.5e-3];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Functional {
    Energy,
    Bienergy,
}

/// `E_B(φ) = ½ ∫ |d_Tφ|² (transversal measure)`.
pub fn energy(model: &ModelFoliation, map: &MapField) -> Result<f64> {
    let md = MapData::new(model, map)?;
    Ok(energy_of(model, &md))
}

pub fn energy_of(model: &ModelFoliation, md: &MapData) -> f64 {
    0.5 * integrate(model, &energy_density(model, md).0, Measure::Transversal)
}

/// `(E₂)_B(φ) = ½ ∫ |τ_b(φ)|² (transversal measure)`.
pub fn bienergy(model: &ModelFoliation, map: &MapField) -> Result<f64> {
    let md = MapData::new(model, map)?;
    Ok(bienergy_of(model, &md))
}

pub fn bienergy_of(model: &ModelFoliation, md: &MapData) -> f64 {
    let tau = tension_of(model, md);
    0.5 * section_integral(model, md, &tau, &tau)
}

/// `∫ ⟨V, W⟩ (transversal measure)`.
pub fn section_integral(model: &ModelFoliation, md: &MapData, v: &PullbackSection, w: &PullbackSection) -> f64 {
    let f: Vec<f64> = (0..md.node_count()).map(|n| md.frames[n].dot(v.at(n), w.at(n))).collect();
    integrate(model, &f, Measure::Transversal)
}

pub fn functional(model: &ModelFoliation, map: &MapField, which: Functional) -> Result<f64> {
    match which {
        Functional::Energy => energy(model, map),
        Functional::Bienergy => bienergy(model, map),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct VariationReport {
    pub functional: Functional,
    pub order: &'static str,
    pub steps: Vec<f64>,
    /// Finite-difference quotient at each step.
    pub fd_values: Vec<f64>,
    /// Richardson-extrapolated quotient.
    pub fd: f64,
    pub formula: f64,
    pub residual: f64,
    /// Observed step order of the raw quotients (≈ 2 for central differences).
    pub step_order: Option<f64>,
}

fn check_steps(steps: &[f64]) -> Result<()> {
    if steps.len() < 2 {
        return Err(Error::StepSchedule(steps.len()));
    }
    Ok(())
}

fn step_order(steps: &[f64], fd: &[f64], limit: f64) -> Option<f64> {
    let n = fd.len();
    if n < 2 {
        return None;
    }
    let (e0, e1) = ((fd[n - 2] - limit).abs(), (fd[n - 1] - limit).abs());
    if e0 == 0.0 || e1 == 0.0 {
        return None;
    }
    Some((e0 / e1).ln() / (steps[n - 2] / steps[n - 1]).ln())
}

/// Central-difference `d/dt F(φ + tV)` at 0, extrapolated, against
/// `-∫⟨V, τ_b⟩` (energy) or `-∫⟨V, (τ₂)_b⟩` (bi-energy).
pub fn fd_first_variation(model: &ModelFoliation, path: &VariationPath, which: Functional, steps: &[f64]) -> Result<VariationReport> {
    check_steps(steps)?;
    let mut fd_values = Vec::with_capacity(steps.len());
    for &t in steps {
        let plus = functional(model, &path.eval(t, 0.0)?, which)?;
        let minus = functional(model, &path.eval(-t, 0.0)?, which)?;
        fd_values.push((plus - minus) / (2.0 * t));
    }
    let fd = richardson_t2(steps, &fd_values);
    let md = MapData::new(model, &path.base)?;
    let grad = match which {
        Functional::Energy => tension_of(model, &md),
        Functional::Bienergy => crate::tension::bitension_of(model, &md)?,
    };
    let formula = -section_integral(model, &md, &path.first, &grad);
    Ok(VariationReport {
        functional: which,
        order: "first",
        steps: steps.to_vec(),
        step_order: step_order(steps, &fd_values, fd),
        fd_values,
        fd,
        formula,
        residual: (fd - formula).abs(),
    })
}

/// Second derivative of `F` along the path at the origin: the mixed four-point
/// quotient for two-parameter paths, the three-point one otherwise. The formula
/// side is the transversal Hessian for the energy and the full second-variation
/// expression for the bi-energy (acceleration terms from the straight-line rule).
pub fn fd_second_variation(model: &ModelFoliation, path: &VariationPath, which: Functional, steps: &[f64]) -> Result<VariationReport> {
    check_steps(steps)?;
    let mut fd_values = Vec::with_capacity(steps.len());
    let f = |t: f64, s: f64| -> Result<f64> { functional(model, &path.eval(t, s)?, which) };
    let centre = if path.second.is_none() { f(0.0, 0.0)? } else { 0.0 };
    for &t in steps {
        let q = if path.second.is_some() {
            (f(t, t)? - f(t, -t)? - f(-t, t)? + f(-t, -t)?) / (4.0 * t * t)
        } else {
            (f(t, 0.0)? - 2.0 * centre + f(-t, 0.0)?) / (t * t)
        };
        fd_values.push(q);
    }
    let fd = richardson_t2(steps, &fd_values);
    let v = &path.first;
    let w = path.second.as_ref().unwrap_or(v);
    let formula = match which {
        Functional::Energy => thess_formula(model, &MapData::new(model, &path.base)?, v, w)?,
        Functional::Bienergy => {
            if path.second.is_none() {
                bienergy_hessian(model, &path.base, v)?.total
            } else {
                bienergy_hessian_bilinear(model, &path.base, v, w)?
            }
        }
    };
    Ok(VariationReport {
        functional: which,
        order: "second",
        steps: steps.to_vec(),
        step_order: step_order(steps, &fd_values, fd),
        fd_values,
        fd,
        formula,
        residual: (fd - formula).abs(),
    })
}

/// `∫ (⟨∇_tr V, ∇_tr W⟩ - ⟨tr R'(V, dφ)dφ, W⟩)` in the transversal measure.
pub fn thess_formula(model: &ModelFoliation, md: &MapData, v: &PullbackSection, w: &PullbackSection) -> Result<f64> {
    let q = model.q();
    let nv = pullback_derivative(model, md, v)?;
    let nw = pullback_derivative(model, md, w)?;
    let rv = curvature_action(model, md, v);
    let f: Vec<f64> = (0..md.node_count())
        .map(|node| {
            let gi = model.g_inv(node);
            let tp = &md.frames[node];
            let mut s = 0.0;
            for a in 0..q {
                for b in 0..q {
                    let g = gi[a * q + b];
                    if g != 0.0 {
                        let i = (node * q + a) * D;
                        let j = (node * q + b) * D;
                        s += g * tp.dot(&nv.data[i..i + D], &nw.data[j..j + D]);
                    }
                }
            }
            s - tp.dot(rv.at(node), w.at(node))
        })
        .collect();
    Ok(integrate(model, &f, Measure::Transversal))
}

/// `∫ ⟨J^T_φ V, W⟩` in the transversal measure.
pub fn thess_operator(model: &ModelFoliation, md: &MapData, v: &PullbackSection, w: &PullbackSection) -> Result<f64> {
    let jv = jacobi_apply(model, md, v)?;
    Ok(section_integral(model, md, &jv, w))
}

#[derive(Clone, Debug, Serialize)]
pub struct ThessReport {
    pub formula: f64,
    pub operator: f64,
    /// `|formula - operator|`.
    pub path_difference: f64,
    /// `|⟨JV, W⟩ - ⟨JW, V⟩|` integrated.
    pub swap_difference: f64,
    pub tension_norm: f64,
    /// The formula presumes a harmonic map; set when `‖τ_b‖_∞` exceeds the tolerance.
    pub not_harmonic: bool,
}

pub fn thess(model: &ModelFoliation, map: &MapField, v: &PullbackSection, w: &PullbackSection, harmonic_tol: f64) -> Result<ThessReport> {
    let md = MapData::new(model, map)?;
    let formula = thess_formula(model, &md, v, w)?;
    let operator = thess_operator(model, &md, v, w)?;
    let swapped = thess_operator(model, &md, w, v)?;
    let tension_norm = tension_of(model, &md).max_abs();
    Ok(ThessReport {
        formula,
        operator,
        path_difference: (formula - operator).abs(),
        swap_difference: (operator - swapped).abs(),
        tension_norm,
        not_harmonic: tension_norm > harmonic_tol,
    })
}

/// Term-by-term second variation of the bi-energy along `φ + tV`.
#[derive(Clone, Debug, Serialize)]
pub struct BienergyHessian {
    /// `∫ |J^T_φ V|²`.
    pub jacobi_square: f64,
    /// `-∫ ⟨(τ₂)_b, ∇_V V⟩` with the path acceleration `Γ'(V, V)`.
    pub acceleration: f64,
    /// `-∫ ⟨R'(V, τ)τ, V⟩`.
    pub curvature_tension: f64,
    /// `-2 Σ_a ∫ ⟨(∇_{dφ(E_a)} R')(V, dφ(E_a))τ, V⟩`.
    pub nabla_r_along_map: f64,
    /// `Σ_a ∫ ⟨(∇_τ R')(V, dφ(E_a))dφ(E_a), V⟩`.
    pub nabla_r_along_tension: f64,
    /// `-4 Σ_a ∫ ⟨R'(∇_{E_a}V, τ)dφ(E_a), V⟩`.
    pub curvature_gradient: f64,
    /// Sum of all six terms.
    pub total: f64,
    /// The four curvature terms, which make up the whole second variation at a bi-harmonic map.
    pub curvature_total: f64,
    /// `∫ |τ_b|⁴`.
    pub tension_quartic: f64,
}

pub fn bienergy_hessian(model: &ModelFoliation, map: &MapField, v: &PullbackSection) -> Result<BienergyHessian> {
    let q = model.q();
    let md = MapData::new(model, map)?;
    let tau = tension_of(model, &md);
    let tau2 = jacobi_apply(model, &md, &tau)?;
    let jv = jacobi_apply(model, &md, v)?;
    let path = VariationPath::new(map.clone(), v.clone())?;
    let acc = path.acceleration();
    let nv = pullback_derivative(model, &md, v)?;
    let n = md.node_count();
    let mut f = vec![vec![0.0; n]; 7];
    for node in 0..n {
        let tp = &md.frames[node];
        let gi = model.g_inv(node);
        let (vv, tv) = (v.at(node), tau.at(node));
        let nr = map.target.nabla_riemann(map.at(node));
        f[0][node] = tp.dot(jv.at(node), jv.at(node));
        f[1][node] = -tp.dot(tau2.at(node), acc.at(node));
        f[2][node] = -tp.dot(&tp.curv(vv, tv, tv), vv);
        let (mut t4, mut t5, mut t6) = (0.0, 0.0, 0.0);
        for a in 0..q {
            for b in 0..q {
                let g = gi[a * q + b];
                if g == 0.0 {
                    continue;
                }
                let (pa, pb) = (md.dphi_at(node, a), md.dphi_at(node, b));
                let i = (node * q + a) * D;
                let nav = &nv.data[i..i + D];
                t4 += g * tp.dot(&apply_nabla_riemann(&nr, pa, vv, pb, tv), vv);
                t5 += g * tp.dot(&apply_nabla_riemann(&nr, tv, vv, pa, pb), vv);
                t6 += g * tp.dot(&tp.curv(nav, tv, pb), vv);
            }
        }
        f[3][node] = -2.0 * t4;
        f[4][node] = t5;
        f[5][node] = -4.0 * t6;
        let t2 = tp.dot(tv, tv);
        f[6][node] = t2 * t2;
    }
    let i: Vec<f64> = f.iter().map(|x| integrate(model, x, Measure::Transversal)).collect();
    let curvature_total = i[2] + i[3] + i[4] + i[5];
    Ok(BienergyHessian {
        jacobi_square: i[0],
        acceleration: i[1],
        curvature_tension: i[2],
        nabla_r_along_map: i[3],
        nabla_r_along_tension: i[4],
        curvature_gradient: i[5],
        total: i[0] + i[1] + curvature_total,
        curvature_total,
        tension_quartic: i[6],
    })
}

/// Polarized bi-energy second variation along `φ + tV + sW`: the quadratic
/// part polarizes, the acceleration term uses `Γ'(V, W)`.
pub fn bienergy_hessian_bilinear(model: &ModelFoliation, map: &MapField, v: &PullbackSection, w: &PullbackSection) -> Result<f64> {
    let plus = bienergy_hessian(model, map, &v.add(w))?;
    let minus = bienergy_hessian(model, map, &v.sub(w))?;
    let quad = |h: &BienergyHessian| h.total - h.acceleration;
    let md = MapData::new(model, map)?;
    let tau2 = crate::tension::bitension_of(model, &md)?;
    let acc = VariationPath::two_parameter(map.clone(), v.clone(), w.clone())?.acceleration();
    Ok(0.25 * (quad(&plus) - quad(&minus)) - section_integral(model, &md, &tau2, &acc))
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;
    use crate::manifold::{build_model, build_target, ModelSpec};

    fn flat(res: usize) -> ModelFoliation {
        build_model(&ModelSpec::new("product-flat-torus", 0.0, res)).unwrap()
    }

    #[test]
    fn closed_form_energies() {
        let m = flat(16);
        let t = build_target("flat-torus", None).unwrap();
        let id = MapField::identity(&m, &t).unwrap();
        assert!((energy(&m, &id).unwrap() - 4.0 * PI * PI).abs() < 1e-10);
        let a = MapField::linear(&m, &t, &[1, 0, 0, 2], [0.0, 0.0]).unwrap();
        assert!((energy(&m, &a).unwrap() - 10.0 * PI * PI).abs() < 1e-10);
        let c = MapField::constant(&m, &t, [1.0, 2.0]).unwrap();
        assert_eq!(energy(&m, &c).unwrap(), 0.0);
        assert!(bienergy(&m, &a).unwrap() < 1e-20);
    }

    #[test]
    fn manufactured_bienergy() {
        let m = flat(64);
        let t = build_target("flat-torus", None).unwrap();
        let c = [0.3, -0.4];
        let map = MapField::from_fn(&m, &t, vec![0; 4], |x| [c[0] * x[0].sin(), c[1] * x[0].sin()]).unwrap();
        let e2 = bienergy(&m, &map).unwrap();
        let expect = PI * PI * (c[0] * c[0] + c[1] * c[1]);
        assert!((e2 - expect).abs() < 1e-4 * expect, "{e2} vs {expect}");
    }

    #[test]
    fn step_schedule_needs_two_steps() {
        let m = flat(8);
        let t = build_target("flat-torus", None).unwrap();
        let id = MapField::identity(&m, &t).unwrap();
        let p = VariationPath::new(id, PullbackSection::zeros(64)).unwrap();
        assert!(matches!(fd_first_variation(&m, &p, Functional::Energy, &[1e-3]), Err(Error::StepSchedule(1))));
    }

    #[test]
    fn dirichlet_form_of_a_sine_variation() {
        let m = flat(32);
        let t = build_target("flat-torus", None).unwrap();
        let id = MapField::identity(&m, &t).unwrap();
        let v = PullbackSection::from_fn(&m, |x| [x[0].sin(), 0.0]);
        let p = VariationPath::two_parameter(id, v.clone(), v).unwrap();
        let r = fd_second_variation(&m, &p, Functional::Energy, &DEFAULT_STEPS).unwrap();
        assert!((r.formula - 2.0 * PI * PI).abs() < 1e-2);
        assert!(r.residual < 1e-6, "{}", r.residual);
    }

    #[test]
    fn constant_directions_are_flat() {
        let m = flat(16);
        let t = build_target("flat-torus", None).unwrap();
        let id = MapField::identity(&m, &t).unwrap();
        let v = PullbackSection::constant(m.node_count(), [1.0, -0.5]);
        let r = thess(&m, &id, &v, &v, 1e-8).unwrap();
        assert!(r.formula.abs() < 1e-10 && r.operator.abs() < 1e-10);
    }
}
