//! Task execution at one resolution.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};

use super::config::{Direction, MapConfig, Scenario, TaskKind, VariationOrder};
use crate::calculus::{delta_tilde, divergence_theorem, weitzenbock_check, MapData};
use crate::convergence::{FD2_FLOOR, FD_FLOOR, ROUNDOFF_FLOOR};
use crate::error::{Error, Result};
use crate::flow::flow;
use crate::manifold::{build_model, validate_model, ModelFoliation, TargetGeometry};
use crate::section::{
    random_components, random_normal, random_section, read_field_csv, write_field_csv, MapField, VariationPath,
};
use crate::tension::{
    conservation_residual_of, curvature_action, curvature_action_closed_form, d_t, generalized_jacobi_identity_residual,
    tension_of,
};
use crate::variational::spectrum::write_spectrum_csv;
use crate::variational::{
    assemble_jacobi, bienergy_hessian, bienergy_of, energy_of, fd_first_variation, fd_second_variation,
    stability_report, thess, Functional,
};

/// How a measurement is judged.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    /// Holds to rounding at any resolution.
    Exact,
    /// Vanishes under refinement; `sweep` checks its order.
    Discretization,
    /// Reported only.
    Info,
}

#[derive(Clone, Debug, Serialize)]
pub struct Measurement {
    pub name: String,
    pub value: f64,
    pub kind: Kind,
    pub tolerance: Option<f64>,
    /// Minimum convergence order asserted by `sweep`.
    pub min_order: Option<f64>,
    /// Residuals below this count as converged in `sweep`.
    pub floor: Option<f64>,
    /// Verdict decided by the producer instead of `value <= tolerance`.
    #[serde(skip)]
    pub decided: Option<bool>,
}

impl Measurement {
    fn exact(name: &str, value: f64, tol: f64) -> Self {
        Measurement {
            name: name.into(),
            value,
            kind: Kind::Exact,
            tolerance: Some(tol),
            min_order: None,
            floor: None,
            decided: None,
        }
    }

    fn discretization(name: &str, value: f64, tol: Option<f64>, min_order: f64) -> Self {
        Measurement {
            name: name.into(),
            value,
            kind: Kind::Discretization,
            tolerance: tol,
            min_order: Some(min_order),
            floor: Some(ROUNDOFF_FLOOR),
            decided: None,
        }
    }

    fn info(name: &str, value: f64) -> Self {
        Measurement {
            name: name.into(),
            value,
            kind: Kind::Info,
            tolerance: None,
            min_order: None,
            floor: None,
            decided: None,
        }
    }

    fn with_floor(mut self, floor: f64) -> Self {
        self.floor = Some(floor);
        self
    }

    /// `None` when nothing is asserted.
    pub fn passed(&self) -> Option<bool> {
        if self.decided.is_some() {
            return self.decided;
        }
        self.tolerance.map(|t| self.value.is_finite() && self.value <= t)
    }
}

pub struct TaskOutput {
    pub measurements: Vec<Measurement>,
    pub details: Value,
}

pub fn build_map(sc: &Scenario, model: &ModelFoliation, target: &TargetGeometry, base_dir: &Path) -> Result<MapField> {
    let q = model.q();
    let linear = |matrix: &[i64], offset: [f64; 2]| -> Result<MapField> {
        if matrix.len() != 2 * q {
            return Err(Error::Config(format!("map.matrix needs {} entries, got {}", 2 * q, matrix.len())));
        }
        MapField::linear(model, target, matrix, offset)
    };
    match &sc.map {
        MapConfig::Identity => MapField::identity(model, target),
        MapConfig::Constant { value } => MapField::constant(model, target, *value),
        MapConfig::Linear { matrix, offset } => linear(matrix, *offset),
        MapConfig::SeededRandom {
            bandlimit,
            amplitude,
            matrix,
            offset,
        } => {
            let zero = vec![0; 2 * q];
            let base = linear(matrix.as_deref().unwrap_or(&zero), *offset)?;
            let pert = random_components(&model.chart, 2, sc.seed, *bandlimit, *amplitude)?;
            base.displaced(&crate::section::PullbackSection(pert))
        }
        MapConfig::File { path, winding } => {
            let p = if path.is_absolute() { path.clone() } else { base_dir.join(path) };
            let f = File::open(&p).map_err(|e| Error::Config(format!("map.path {}: {e}", p.display())))?;
            let values = read_field_csv(f, q)?;
            if values.len() != model.node_count() * 2 {
                return Err(Error::Config(format!(
                    "map.path {} holds {} values, the grid needs {}",
                    p.display(),
                    values.len(),
                    model.node_count() * 2
                )));
            }
            MapField::new(target.clone(), q, values, winding.clone().unwrap_or_else(|| vec![0; 2 * q]))
        }
    }
}

pub fn run_task(
    kind: TaskKind,
    sc: &Scenario,
    resolution: usize,
    base_dir: &Path,
    out: Option<&Path>,
) -> Result<TaskOutput> {
    let spec = sc.source.at_resolution(resolution);
    if kind == TaskKind::Validate {
        return validate(sc, &spec);
    }
    let model = build_model(&spec)?;
    let target = sc.target.build()?;
    let map = build_map(sc, &model, &target, base_dir)?;
    let md = MapData::new(&model, &map)?;
    let tau = tension_of(&model, &md);
    let mut ms = vec![
        Measurement::info("energy", energy_of(&model, &md)),
        Measurement::info("bienergy", bienergy_of(&model, &md)),
        Measurement::info("tension_inf", tau.max_abs()),
    ];
    let details = match kind {
        TaskKind::Validate => unreachable!(),
        TaskKind::Identities => identities(sc, &model, &map, &md, &mut ms)?,
        TaskKind::Variation => variation(sc, &model, &map, tau.max_abs(), &mut ms)?,
        TaskKind::HessianBreakdown => breakdown(sc, &model, &map, &md, &mut ms)?,
        TaskKind::Spectrum => {
            let asm = assemble_jacobi(&model, &map)?;
            let rep = stability_report(&asm, sc.task.eigenvalues, sc.task.solver)?;
            ms.push(Measurement::info("lambda_min", rep.lambda_min));
            ms.push(Measurement::info("relative_asymmetry", rep.relative_asymmetry));
            ms.push(Measurement::info("kernel_dimension", rep.kernel_dimension as f64));
            if sc.task.assert_stable {
                ms.push(Measurement::exact("instability", (-rep.lambda_min).max(0.0), rep.tolerance));
            }
            if let Some(dir) = out {
                write_spectrum_csv(BufWriter::new(File::create(dir.join("spectrum.csv"))?), &rep.lowest)?;
            }
            json!({ "stability": rep })
        }
        TaskKind::Flow => {
            let result = flow(&map, &model, &sc.flow, sc.task.flow);
            let (limit, trace) = match result {
                Ok(r) => r,
                Err(Error::FlowAborted { step, reason, trace }) => {
                    if let Some(dir) = out {
                        trace.write_csv(BufWriter::new(File::create(dir.join("trace.csv"))?))?;
                    }
                    return Err(Error::FlowAborted { step, reason, trace });
                }
                Err(e) => return Err(e),
            };
            if let Some(dir) = out {
                trace.write_csv(BufWriter::new(File::create(dir.join("trace.csv"))?))?;
                write_field_csv(
                    BufWriter::new(File::create(dir.join("final_map.csv"))?),
                    &model.chart,
                    &["u0", "u1"],
                    &limit.values,
                )?;
            }
            let lmd = MapData::new(&model, &limit)?;
            let final_tau = tension_of(&model, &lmd).max_abs();
            ms.push(Measurement::info("steps", trace.steps as f64));
            ms.push(Measurement::info("final_energy", energy_of(&model, &lmd)));
            ms.push(Measurement::info("final_bienergy", bienergy_of(&model, &lmd)));
            ms.push(Measurement::info("worst_relative_increase", trace.worst_increase));
            if sc.task.assert_converged {
                ms.push(Measurement::exact("final_residual", trace.residual, sc.flow.stop_tol));
            } else {
                ms.push(Measurement::info("final_residual", trace.residual));
            }
            ms.push(Measurement::info("final_tension_inf", final_tau));
            let mut summary = trace.clone();
            summary.rows.clear();
            json!({ "flow": summary, "kind": sc.task.flow })
        }
    };
    Ok(TaskOutput { measurements: ms, details })
}

fn validate(sc: &Scenario, spec: &crate::manifold::ModelSpec) -> Result<TaskOutput> {
    let model = crate::manifold::build_unchecked(spec)?;
    let rep = validate_model(&model, sc.tolerances.soft_validation);
    let ms = rep
        .checks
        .iter()
        .map(|c| Measurement {
            decided: Some(c.passed),
            ..Measurement::exact(c.name, c.residual, c.tolerance)
        })
        .collect();
    Ok(TaskOutput {
        measurements: ms,
        details: json!({ "validation": rep, "summary": rep.summary() }),
    })
}

fn identities(
    sc: &Scenario,
    model: &ModelFoliation,
    map: &MapField,
    md: &MapData,
    ms: &mut Vec<Measurement>,
) -> Result<Value> {
    let tol = &sc.tolerances;
    let tau = tension_of(model, md);
    let phi = d_t(md);
    let dt = delta_tilde(model, md, &phi)?;
    let realization = dt.0.iter().zip(&tau.0).fold(0.0f64, |m, (a, b)| m.max((a + b).abs()));
    ms.push(Measurement::exact("realization", realization, tol.exact));

    let v = random_section(model, sc.seed.wrapping_add(1), sc.task.bandlimit, sc.task.amplitude.max(1e-3))?;
    // curvature antisymmetry R(V,X)Y = -R(X,V)Y with X, Y the first two columns of dφ
    let mut anti = 0.0f64;
    for node in 0..md.node_count() {
        let tp = &md.frames[node];
        let x = md.dphi_at(node, 0);
        let y = md.dphi_at(node, model.q() - 1);
        let a = tp.curv(v.at(node), x, y);
        let b = tp.curv(x, v.at(node), y);
        anti = anti.max((a[0] + b[0]).abs()).max((a[1] + b[1]).abs());
    }
    ms.push(Measurement::exact("curvature_antisymmetry", anti, tol.exact));
    let generic = curvature_action(model, md, &v);
    if let Some(closed) = curvature_action_closed_form(model, md, map, &v) {
        let d = generic.0.iter().zip(&closed.0).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        ms.push(Measurement::exact("curvature_closed_form", d, tol.exact));
    }

    let cons = conservation_residual_of(model, md);
    ms.push(Measurement::discretization("conservation", cons, tol.conservation, tol.min_order));

    let w = weitzenbock_check(model, md, &phi)?;
    ms.push(Measurement::discretization("weitzenbock", w.residual(), tol.weitzenbock, tol.min_order));

    let y = random_normal(model, sc.seed.wrapping_add(2), sc.task.bandlimit.max(1), 1.0)?;
    let div = divergence_theorem(model, &y)?;
    ms.push(Measurement::discretization("divergence_theorem", div.residual, tol.divergence, tol.min_order));

    let gj = generalized_jacobi_identity_residual(model, &y)?;
    ms.push(Measurement::exact("jacobi_relation", gj.relation_residual, tol.exact));
    ms.push(Measurement::discretization("bochner", gj.bochner_residual, tol.bochner, tol.min_order));
    ms.push(Measurement::info("generalized_jacobi_inf", gj.jacobi_norm));

    let w2 = random_section(model, sc.seed.wrapping_add(3), sc.task.bandlimit, sc.task.amplitude.max(1e-3))?;
    let th = thess(model, map, &v, &w2, tol.harmonic)?;
    ms.push(Measurement::discretization("thess_path_difference", th.path_difference, tol.thess, tol.min_order));
    ms.push(Measurement::discretization("thess_swap_difference", th.swap_difference, tol.thess, tol.min_order));
    Ok(json!({
        "divergence_theorem": div,
        "generalized_jacobi": gj,
        "thess": th,
    }))
}

fn variation(sc: &Scenario, model: &ModelFoliation, map: &MapField, tau_inf: f64, ms: &mut Vec<Measurement>) -> Result<Value> {
    let t = &sc.task;
    let tol = &sc.tolerances;
    let v = random_section(model, sc.seed.wrapping_add(1), t.bandlimit, t.amplitude)?;
    let report = match t.order {
        VariationOrder::First => fd_first_variation(model, &VariationPath::new(map.clone(), v)?, t.functional, &t.steps)?,
        VariationOrder::Second => {
            let path = if t.two_parameter {
                let w = random_section(model, sc.seed.wrapping_add(2), t.bandlimit, t.amplitude)?;
                VariationPath::two_parameter(map.clone(), v, w)?
            } else {
                VariationPath::new(map.clone(), v)?
            };
            fd_second_variation(model, &path, t.functional, &t.steps)?
        }
    };
    let (limit, order) = match t.functional {
        Functional::Energy => (tol.variation_energy, tol.min_order),
        Functional::Bienergy => (tol.variation_bienergy, tol.min_order_bienergy),
    };
    // the energy Hessian formula presumes a harmonic base map
    let extension = t.order == VariationOrder::Second && t.functional == Functional::Energy && tau_inf > tol.harmonic;
    if extension {
        ms.push(Measurement::info("variation_residual", report.residual));
    } else {
        let floor = match t.order {
            VariationOrder::First => FD_FLOOR,
            VariationOrder::Second => FD2_FLOOR,
        };
        ms.push(Measurement::discretization("variation_residual", report.residual, Some(limit), order).with_floor(floor));
    }
    ms.push(Measurement::info("fd", report.fd));
    ms.push(Measurement::info("formula", report.formula));
    Ok(json!({
        "variation": report,
        "formula_extension": extension,
        "note": if extension { "base map is not harmonic: energy Hessian formula evaluated as a diagnostic extension" } else { "" },
    }))
}

fn breakdown(sc: &Scenario, model: &ModelFoliation, map: &MapField, md: &MapData, ms: &mut Vec<Measurement>) -> Result<Value> {
    let tol = &sc.tolerances;
    let v = match sc.task.direction {
        Direction::Tension => tension_of(model, md),
        Direction::Random => random_section(model, sc.seed.wrapping_add(1), sc.task.bandlimit, sc.task.amplitude)?,
    };
    let h = bienergy_hessian(model, map, &v)?;
    for (name, value) in [
        ("jacobi_square", h.jacobi_square),
        ("acceleration", h.acceleration),
        ("curvature_tension", h.curvature_tension),
        ("curvature_gradient", h.curvature_gradient),
        ("total", h.total),
        ("curvature_total", h.curvature_total),
    ] {
        ms.push(Measurement::info(name, value));
    }
    let nabla = h.nabla_r_along_map.abs().max(h.nabla_r_along_tension.abs());
    let constant = map.target.constant_curvature();
    if constant.is_some() {
        ms.push(Measurement::exact("nabla_r_terms", nabla, tol.exact));
    } else {
        ms.push(Measurement::info("nabla_r_terms", nabla));
    }
    let cons = conservation_residual_of(model, md);
    ms.push(Measurement::info("conservation", cons));
    let mut special = Value::Null;
    if let (Some(c), Direction::Tension) = (constant, sc.task.direction) {
        let expect = -4.0 * c * h.tension_quartic;
        let rel = if expect == 0.0 { h.curvature_total.abs() } else { (h.curvature_total - expect).abs() / expect.abs() };
        ms.push(Measurement::discretization("specialization_relative", rel, tol.specialization, tol.min_order));
        special = json!({ "expected": expect, "curvature_total": h.curvature_total, "relative": rel });
    }
    Ok(json!({ "breakdown": h, "specialization": special, "direction": sc.task.direction }))
}
