//! Batch front end: `folia <verb> --config scenario.toml --out dir`.
//!
//! Exit codes: 0 all asserted tolerances pass, 1 a tolerance failed,
//! 2 configuration or usage error, 3 numerical abort.

pub mod config;
pub mod tasks;

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use crate::convergence::{OrderStudy, FD2_FLOOR, FD_FLOOR, ROUNDOFF_FLOOR};
use crate::error::{Error, Result};
use crate::flow::{FlowConfig, BIENERGY_CFL, HARMONIC_CFL, MAX_HALVINGS, MONOTONE_SLACK};
use crate::manifold::StencilOrder;
use crate::variational::spectrum::{DENSE_CAP, LANCZOS_MAX_BASIS, LANCZOS_RESIDUAL};
use crate::variational::DEFAULT_STEPS;
pub use config::{Scenario, TaskKind};
use tasks::{run_task, Kind, Measurement};

pub const SCHEMA: u32 = 1;

pub const EXIT_OK: i32 = 0;
pub const EXIT_TOLERANCE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "folia", version, about = "Transversal harmonic-map operators on discretized foliations")]
pub struct Cli {
    #[command(subcommand)]
    pub verb: Verb,
}

#[derive(Debug, Subcommand)]
pub enum Verb {
    /// Check the source model invariants.
    Validate(Common),
    /// Operator identities (or `task.kind = "hessian-breakdown"`).
    Check(Common),
    /// Finite-difference first or second variation against the formulas.
    Vary(Common),
    /// Lowest eigenvalues of the Jacobi operator.
    Spectrum(Common),
    /// Harmonic or bi-energy gradient flow.
    Flow(Common),
    /// Run `task.kind` over `resolutions` and estimate convergence orders.
    Sweep(Common),
}

#[derive(Debug, Args)]
pub struct Common {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value = "folia-out")]
    pub out: PathBuf,
    #[arg(long)]
    pub threads: Option<usize>,
    /// Overrides the scenario seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

impl Verb {
    fn name(&self) -> &'static str {
        match self {
            Verb::Validate(_) => "validate",
            Verb::Check(_) => "check",
            Verb::Vary(_) => "vary",
            Verb::Spectrum(_) => "spectrum",
            Verb::Flow(_) => "flow",
            Verb::Sweep(_) => "sweep",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Verb::Validate(c) | Verb::Check(c) | Verb::Vary(c) | Verb::Spectrum(c) | Verb::Flow(c) | Verb::Sweep(c) => c,
        }
    }

    fn task(&self, sc: &Scenario) -> Result<TaskKind> {
        Ok(match self {
            Verb::Validate(_) => TaskKind::Validate,
            Verb::Check(_) => match sc.task.kind {
                Some(TaskKind::HessianBreakdown) => TaskKind::HessianBreakdown,
                _ => TaskKind::Identities,
            },
            Verb::Vary(_) => TaskKind::Variation,
            Verb::Spectrum(_) => TaskKind::Spectrum,
            Verb::Flow(_) => TaskKind::Flow,
            Verb::Sweep(_) => sc
                .task
                .kind
                .ok_or_else(|| Error::Config("sweep needs task.kind".into()))?,
        })
    }
}

/// Every default the tool uses, echoed into each report.
pub fn defaults_table() -> Value {
    json!({
        "stencil_order": StencilOrder::default(),
        "fd_steps": DEFAULT_STEPS,
        "roundoff_floor": ROUNDOFF_FLOOR,
        "fd_floor": FD_FLOOR,
        "fd2_floor": FD2_FLOOR,
        "harmonic_cfl": HARMONIC_CFL,
        "bienergy_cfl": BIENERGY_CFL,
        "monotone_slack": MONOTONE_SLACK,
        "max_halvings": MAX_HALVINGS,
        "flow": FlowConfig::default(),
        "dense_cap": DENSE_CAP,
        "lanczos_residual": LANCZOS_RESIDUAL,
        "lanczos_max_basis": LANCZOS_MAX_BASIS,
        "tolerances": config::Tolerances::default(),
        "task": config::TaskConfig::default(),
    })
}

#[derive(Debug, Serialize)]
struct Verdict {
    name: String,
    resolution: Option<usize>,
    value: f64,
    tolerance: Option<f64>,
    min_order: Option<f64>,
    observed_order: Option<f64>,
    passed: bool,
}

#[derive(Debug, Serialize)]
struct RunRecord {
    resolution: usize,
    measurements: Vec<Measurement>,
    details: Value,
    seconds: f64,
}

#[derive(Debug, Serialize)]
struct SweepRow {
    name: String,
    min_order: Option<f64>,
    tolerance: Option<f64>,
    study: OrderStudy,
}

/// Parse arguments and run; returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    run(&cli.verb)
}

pub fn run(verb: &Verb) -> i32 {
    let common = verb.common();
    let t0 = Instant::now();
    let mut report = json!({
        "schema": SCHEMA,
        "tool": { "name": "folia", "version": env!("CARGO_PKG_VERSION") },
        "verb": verb.name(),
        "defaults": defaults_table(),
    });
    let code = match execute(verb, common, &mut report) {
        Ok(passed) => {
            if passed {
                EXIT_OK
            } else {
                EXIT_TOLERANCE
            }
        }
        Err(e) => {
            eprintln!("folia: {e}");
            let code = if e.is_numerical() { EXIT_NUMERICAL } else { EXIT_CONFIG };
            report["error"] = json!({
                "message": e.to_string(),
                "numerical": e.is_numerical(),
            });
            if let Error::FlowAborted { step, trace, .. } = &e {
                report["error"]["step"] = json!(step);
                report["error"]["trace_steps"] = json!(trace.steps);
            }
            code
        }
    };
    report["exit_code"] = json!(code);
    report["timings"]["total_seconds"] = json!(t0.elapsed().as_secs_f64());
    if let Err(e) = write_report(&common.out, &report) {
        eprintln!("folia: cannot write report: {e}");
        return EXIT_CONFIG;
    }
    code
}

fn write_report(out: &Path, report: &Value) -> Result<()> {
    fs::create_dir_all(out)?;
    let mut f = fs::File::create(out.join("report.json"))?;
    serde_json::to_writer_pretty(&mut f, report)?;
    writeln!(f)?;
    Ok(())
}

fn execute(verb: &Verb, common: &Common, report: &mut Value) -> Result<bool> {
    let mut sc = Scenario::load(&common.config)?;
    if let Some(seed) = common.seed {
        sc.seed = seed;
    }
    let kind = verb.task(&sc)?;
    let base_dir = common
        .config
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();
    report["task"] = json!(kind);
    report["seed"] = json!(sc.seed);
    report["threads"] = json!(common.threads);
    report["inputs"] = json!({
        "config_path": common.config,
        "scenario": &sc,
        "scenario_toml": toml::to_string(&sc).unwrap_or_default(),
    });
    fs::create_dir_all(&common.out)?;
    let pool = {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(n) = common.threads {
            if n == 0 {
                return Err(Error::Config("--threads must be at least 1".into()));
            }
            b = b.num_threads(n);
        }
        b.build().map_err(|e| Error::Config(e.to_string()))?
    };
    pool.install(|| match verb {
        Verb::Sweep(_) => sweep(kind, &sc, &base_dir, &common.out, report),
        _ => single(kind, &sc, &base_dir, &common.out, report),
    })
}

fn single(kind: TaskKind, sc: &Scenario, base_dir: &Path, out: &Path, report: &mut Value) -> Result<bool> {
    let n = sc.source.resolution;
    let t = Instant::now();
    let result = run_task(kind, sc, n, base_dir, Some(out));
    let output = result?;
    let verdicts: Vec<Verdict> = output
        .measurements
        .iter()
        .filter_map(|m| {
            m.passed().map(|p| Verdict {
                name: m.name.clone(),
                resolution: Some(n),
                value: m.value,
                tolerance: m.tolerance,
                min_order: None,
                observed_order: None,
                passed: p,
            })
        })
        .collect();
    print_measurements(n, &output.measurements);
    let passed = verdicts.iter().all(|v| v.passed);
    report["runs"] = json!([RunRecord {
        resolution: n,
        measurements: output.measurements,
        details: output.details,
        seconds: t.elapsed().as_secs_f64(),
    }]);
    report["verdicts"] = json!(verdicts);
    report["passed"] = json!(passed);
    println!("{}", if passed { "PASS" } else { "FAIL" });
    Ok(passed)
}

fn sweep(kind: TaskKind, sc: &Scenario, base_dir: &Path, out: &Path, report: &mut Value) -> Result<bool> {
    let ladder = &sc.resolutions;
    if ladder.len() < 2 {
        return Err(Error::Config(format!("sweep needs at least 2 resolutions, got {}", ladder.len())));
    }
    if !ladder.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::Config("resolutions must be strictly increasing".into()));
    }
    let mut runs = Vec::new();
    for &n in ladder {
        let dir = out.join(format!("n{n}"));
        fs::create_dir_all(&dir)?;
        let t = Instant::now();
        let o = run_task(kind, sc, n, base_dir, Some(&dir))?;
        print_measurements(n, &o.measurements);
        runs.push(RunRecord {
            resolution: n,
            measurements: o.measurements,
            details: o.details,
            seconds: t.elapsed().as_secs_f64(),
        });
    }
    let finest = *ladder.last().unwrap();
    let mut verdicts = Vec::new();
    let mut table = Vec::new();
    let first = &runs[0].measurements;
    for (i, m) in first.iter().enumerate() {
        let series: Option<Vec<f64>> = runs
            .iter()
            .map(|r| r.measurements.get(i).filter(|x| x.name == m.name).map(|x| x.value))
            .collect();
        let Some(series) = series else { continue };
        match m.kind {
            Kind::Exact => {
                for (r, &v) in runs.iter().zip(&series) {
                    let mm = &r.measurements[i];
                    if let Some(p) = mm.passed() {
                        verdicts.push(Verdict {
                            name: m.name.clone(),
                            resolution: Some(r.resolution),
                            value: v,
                            tolerance: mm.tolerance,
                            min_order: None,
                            observed_order: None,
                            passed: p,
                        });
                    }
                }
            }
            Kind::Discretization => {
                let study = OrderStudy::new(ladder, &series, m.floor.unwrap_or(ROUNDOFF_FLOOR));
                let order_ok = m.min_order.is_none_or(|p| study.meets(p));
                let tol_ok = m.tolerance.is_none_or(|t| study.finest() <= t);
                println!("  {:<24} {}", m.name, study.describe());
                verdicts.push(Verdict {
                    name: m.name.clone(),
                    resolution: Some(finest),
                    value: study.finest(),
                    tolerance: m.tolerance,
                    min_order: m.min_order,
                    observed_order: study.observed,
                    passed: order_ok && tol_ok && study.finest().is_finite(),
                });
                table.push(SweepRow {
                    name: m.name.clone(),
                    min_order: m.min_order,
                    tolerance: m.tolerance,
                    study,
                });
            }
            Kind::Info => {}
        }
    }
    write_sweep_csv(&out.join("sweep.csv"), &table)?;
    let passed = verdicts.iter().all(|v| v.passed);
    report["runs"] = json!(runs);
    report["sweep"] = json!(table);
    report["verdicts"] = json!(verdicts);
    report["passed"] = json!(passed);
    println!("{}", if passed { "PASS" } else { "FAIL" });
    Ok(passed)
}

fn write_sweep_csv(path: &Path, table: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["measurement", "resolution", "residual", "order", "at_roundoff"])?;
    for row in table {
        let s = &row.study;
        for (i, (n, r)) in s.resolutions.iter().zip(&s.residuals).enumerate() {
            let order = if i == 0 {
                String::new()
            } else if s.residuals[i] <= s.floor {
                "at roundoff".to_string()
            } else {
                format!("{:.4}", s.pair_orders[i - 1])
            };
            w.write_record([
                row.name.clone(),
                n.to_string(),
                format!("{r:.6e}"),
                order,
                (s.at_roundoff && i + 1 == s.resolutions.len()).to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn print_measurements(n: usize, ms: &[Measurement]) {
    println!("resolution {n}");
    for m in ms {
        let verdict = match m.passed() {
            Some(true) => " ok",
            Some(false) => " FAILED",
            None => "",
        };
        match m.tolerance {
            Some(t) => println!("  {:<24} {:.6e} (tol {t:.1e}){verdict}", m.name, m.value),
            None => println!("  {:<24} {:.6e}", m.name, m.value),
        }
    }
}
