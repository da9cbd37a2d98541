//! Harmonic-map heat flow and bi-energy descent with explicit RK4.

use serde::{Deserialize, Serialize};

use crate::calculus::MapData;
use crate::error::{Error, Result};
use crate::manifold::ModelFoliation;
use crate::section::{MapField, PullbackSection};
use crate::tension::{jacobi_apply, tension_of};
use crate::variational::{energy_of, section_integral};

pub const HARMONIC_CFL: f64 = 0.2;
pub const BIENERGY_CFL: f64 = 0.05;
pub const MONOTONE_SLACK: f64 = 1e-12;
pub const MAX_HALVINGS: u32 = 6;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    #[default]
    ExplicitRk4,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FlowKind {
    Harmonic,
    Bienergy,
}

/// Which residual ends the run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopOn {
    #[default]
    Tension,
    Bitension,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowConfig {
    pub scheme: Scheme,
    /// Fixed step; the CFL rule is used when absent.
    pub dt: Option<f64>,
    pub cfl: Option<f64>,
    pub max_steps: usize,
    pub stop_tol: f64,
    pub stop_on: StopOn,
    pub record_every: usize,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            scheme: Scheme::ExplicitRk4,
            dt: None,
            cfl: None,
            max_steps: 100_000,
            stop_tol: 1e-8,
            stop_on: StopOn::Tension,
            record_every: 100,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(dt) = self.dt {
            if !(dt > 0.0) {
                return Err(Error::ParameterOutOfRange {
                    name: "dt",
                    value: dt,
                    reason: "time step must be positive",
                });
            }
        }
        if let Some(c) = self.cfl {
            if !(c > 0.0) {
                return Err(Error::ParameterOutOfRange {
                    name: "cfl",
                    value: c,
                    reason: "CFL number must be positive",
                });
            }
        }
        if !(self.stop_tol > 0.0) {
            return Err(Error::ParameterOutOfRange {
                name: "stop_tol",
                value: self.stop_tol,
                reason: "stopping tolerance must be positive",
            });
        }
        if self.record_every == 0 {
            return Err(Error::ParameterOutOfRange {
                name: "record_every",
                value: 0.0,
                reason: "must be at least 1",
            });
        }
        Ok(())
    }

    /// `cfl · h² / max|g^{ab}|` (harmonic) or `cfl · h⁴ / max|g^{ab}|²` (bi-energy).
    pub fn time_step(&self, model: &ModelFoliation, kind: FlowKind) -> f64 {
        if let Some(dt) = self.dt {
            return dt;
        }
        let h = model.chart.min_spacing();
        let g = model.max_inverse_metric();
        match kind {
            FlowKind::Harmonic => self.cfl.unwrap_or(HARMONIC_CFL) * h * h / g,
            FlowKind::Bienergy => self.cfl.unwrap_or(BIENERGY_CFL) * h.powi(4) / (g * g),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    pub time: f64,
    pub energy: f64,
    pub bienergy: f64,
    pub tension_inf: f64,
    pub max_u: f64,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct FlowTrace {
    pub kind: Option<FlowKind>,
    pub rows: Vec<TraceRow>,
    pub dt: f64,
    pub halvings: u32,
    pub steps: usize,
    pub converged: bool,
    /// Final stopping residual.
    pub residual: f64,
    /// Winding matrix of the lift (torus targets); carried unchanged by the flow.
    pub winding: Vec<i64>,
    /// Largest per-step increase of the monitored functional, relative to its value.
    pub worst_increase: f64,
}

impl FlowTrace {
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["step", "energy", "bienergy", "tension_inf", "max_u"])?;
        for r in &self.rows {
            w.write_record([
                r.step.to_string(),
                format!("{:.17e}", r.energy),
                format!("{:.17e}", r.bienergy),
                format!("{:.17e}", r.tension_inf),
                format!("{:.17e}", r.max_u),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }
}

struct State {
    map: MapField,
    velocity: PullbackSection,
    energy: f64,
    bienergy: f64,
    tension_inf: f64,
    bitension_inf: f64,
}

fn evaluate(model: &ModelFoliation, map: MapField, kind: FlowKind, stop_on: StopOn) -> Result<State> {
    let md = MapData::new(model, &map)?;
    let tau = tension_of(model, &md);
    let energy = energy_of(model, &md);
    let bienergy = 0.5 * section_integral(model, &md, &tau, &tau);
    let tension_inf = tau.max_abs();
    let (velocity, bitension_inf) = match kind {
        FlowKind::Harmonic if stop_on == StopOn::Bitension => {
            let m = jacobi_apply(model, &md, &tau)?.max_abs();
            (tau, m)
        }
        FlowKind::Harmonic => (tau, f64::NAN),
        FlowKind::Bienergy => {
            let t2 = jacobi_apply(model, &md, &tau)?;
            let m = t2.max_abs();
            (t2, m)
        }
    };
    Ok(State {
        map,
        velocity,
        energy,
        bienergy,
        tension_inf,
        bitension_inf,
    })
}

fn velocity(model: &ModelFoliation, map: &MapField, kind: FlowKind) -> Result<PullbackSection> {
    let md = MapData::new(model, map)?;
    let tau = tension_of(model, &md);
    match kind {
        FlowKind::Harmonic => Ok(tau),
        FlowKind::Bienergy => jacobi_apply(model, &md, &tau),
    }
}

fn rk4(model: &ModelFoliation, s: &State, dt: f64, kind: FlowKind) -> Result<MapField> {
    let k1 = &s.velocity;
    let k2 = velocity(model, &s.map.displaced(&k1.scaled(0.5 * dt))?, kind)?;
    let k3 = velocity(model, &s.map.displaced(&k2.scaled(0.5 * dt))?, kind)?;
    let k4 = velocity(model, &s.map.displaced(&k3.scaled(dt))?, kind)?;
    let inc: Vec<f64> = (0..k1.0.len())
        .map(|i| dt / 6.0 * (k1.0[i] + 2.0 * k2.0[i] + 2.0 * k3.0[i] + k4.0[i]))
        .collect();
    s.map.displaced(&PullbackSection(inc))
}

fn row(step: usize, time: f64, s: &State) -> TraceRow {
    TraceRow {
        step,
        time,
        energy: s.energy,
        bienergy: s.bienergy,
        tension_inf: s.tension_inf,
        max_u: s.map.max_norm(),
    }
}

fn run(map0: &MapField, model: &ModelFoliation, cfg: &FlowConfig, kind: FlowKind) -> Result<(MapField, FlowTrace)> {
    cfg.validate()?;
    let mut dt = cfg.time_step(model, kind);
    let mut trace = FlowTrace {
        kind: Some(kind),
        dt,
        winding: map0.winding.clone(),
        ..Default::default()
    };
    let monitored = |s: &State| match kind {
        FlowKind::Harmonic => s.energy,
        FlowKind::Bienergy => s.bienergy,
    };
    let residual = |s: &State| match cfg.stop_on {
        StopOn::Tension => s.tension_inf,
        StopOn::Bitension => s.bitension_inf,
    };
    let mut state = evaluate(model, map0.clone(), kind, cfg.stop_on)?;
    let mut time = 0.0;
    trace.rows.push(row(0, time, &state));
    let mut step = 0;
    while residual(&state) >= cfg.stop_tol && step < cfg.max_steps {
        let next = rk4(model, &state, dt, kind).and_then(|m| evaluate(model, m, kind, cfg.stop_on));
        let next = match next {
            Ok(n) => n,
            Err(e @ Error::ChartDomain { .. }) => {
                trace.steps = step;
                trace.rows.push(row(step, time, &state));
                return Err(Error::FlowAborted {
                    step: step + 1,
                    reason: format!("chart exit: {e}"),
                    trace: Box::new(trace),
                });
            }
            Err(e) => return Err(e),
        };
        let (before, after) = (monitored(&state), monitored(&next));
        let increase = after - before;
        if !after.is_finite() || increase > MONOTONE_SLACK * before.abs().max(f64::MIN_POSITIVE) {
            if trace.halvings < MAX_HALVINGS && after.is_finite() {
                trace.halvings += 1;
                dt *= 0.5;
                trace.dt = dt;
                continue;
            }
            trace.steps = step;
            trace.rows.push(row(step, time, &state));
            return Err(Error::FlowAborted {
                step: step + 1,
                reason: format!("functional increased from {before:.6e} to {after:.6e}"),
                trace: Box::new(trace),
            });
        }
        if before != 0.0 {
            trace.worst_increase = trace.worst_increase.max(increase / before.abs());
        }
        state = next;
        step += 1;
        time += dt;
        if step % cfg.record_every == 0 {
            trace.rows.push(row(step, time, &state));
        }
    }
    if trace.rows.last().is_none_or(|r| r.step != step) {
        trace.rows.push(row(step, time, &state));
    }
    trace.steps = step;
    trace.residual = residual(&state);
    trace.converged = trace.residual < cfg.stop_tol;
    Ok((state.map, trace))
}

/// `∂_t φ = τ_b(φ)`.
pub fn harmonic_flow(map0: &MapField, model: &ModelFoliation, cfg: &FlowConfig) -> Result<(MapField, FlowTrace)> {
    run(map0, model, cfg, FlowKind::Harmonic)
}

/// `∂_t φ = (τ₂)_b(φ)`.
pub fn bienergy_descent(map0: &MapField, model: &ModelFoliation, cfg: &FlowConfig) -> Result<(MapField, FlowTrace)> {
    run(map0, model, cfg, FlowKind::Bienergy)
}

pub fn flow(map0: &MapField, model: &ModelFoliation, cfg: &FlowConfig, kind: FlowKind) -> Result<(MapField, FlowTrace)> {
    run(map0, model, cfg, kind)
}
