//! Source foliations on periodic grids and analytic target charts.
//!
//! Per-node tensors are flat `Vec<f64>` in node-major order; within a node the
//! indices run in the order they are written, last index fastest:
//! `g[a][b]`, `gamma[a][b][c] = Γ^a_{bc}`, `gamma_grad[a][b][c][m] = ∂_m Γ^a_{bc}`,
//! `riemann[a][b][c][d] = R^a_{bcd}`, `ricci[a][c] = ρ^a_c`.

pub mod chart;
pub mod target;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
pub use chart::{BaseChart, StencilOrder, MIN_NODES, PERIOD};
pub use target::{build_target, TargetGeometry, TargetKind, TargetPoint, TARGET_DIM};

/// Catalog entry and discretization of a source foliation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub model: String,
    #[serde(default)]
    pub epsilon: f64,
    #[serde(default = "default_codim")]
    pub codim: usize,
    pub resolution: usize,
    #[serde(default)]
    pub order: StencilOrder,
}

fn default_codim() -> usize {
    2
}

impl ModelSpec {
    pub fn new(model: &str, epsilon: f64, resolution: usize) -> Self {
        ModelSpec {
            model: model.to_string(),
            epsilon,
            codim: 2,
            resolution,
            order: StencilOrder::default(),
        }
    }

    pub fn with_order(mut self, order: StencilOrder) -> Self {
        self.order = order;
        self
    }

    pub fn with_codim(mut self, codim: usize) -> Self {
        self.codim = codim;
        self
    }

    pub fn at_resolution(&self, resolution: usize) -> Self {
        ModelSpec {
            resolution,
            ..self.clone()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Catalog {
    ProductFlatTorus,
    WarpedTorus,
    ConformalTorus,
}

impl Catalog {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "product-flat-torus" => Ok(Catalog::ProductFlatTorus),
            "warped-torus" => Ok(Catalog::WarpedTorus),
            "conformal-torus" => Ok(Catalog::ConformalTorus),
            other => Err(Error::UnknownModel(other.to_string())),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Catalog::ProductFlatTorus => "product-flat-torus",
            Catalog::WarpedTorus => "warped-torus",
            Catalog::ConformalTorus => "conformal-torus",
        }
    }

    /// Conformal factor λ of the transversal metric `λ² δ`.
    pub fn lambda(self, eps: f64, x: &[f64]) -> f64 {
        match self {
            Catalog::ConformalTorus => 1.0 + eps * x[0].cos() * x[1].cos(),
            _ => 1.0,
        }
    }

    pub fn vol(self, eps: f64, x: &[f64]) -> f64 {
        match self {
            Catalog::WarpedTorus => 1.0 + eps * x[0].cos(),
            _ => 1.0,
        }
    }

    /// Components of the basic mean curvature form, `-d log vol_L`.
    pub fn kappa(self, eps: f64, x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        if let Catalog::WarpedTorus = self {
            out[0] = eps * x[0].sin() / (1.0 + eps * x[0].cos());
        }
    }
}

#[derive(Clone, Debug)]
pub struct MetricField {
    pub g: Vec<f64>,
    pub g_inv: Vec<f64>,
    pub sqrt_det: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct ConnectionField {
    pub gamma: Vec<f64>,
    pub gamma_grad: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct CurvatureField {
    pub riemann: Vec<f64>,
    pub ricci: Vec<f64>,
    /// Sectional curvature of the coordinate plane (zero when q = 1).
    pub sectional: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct LeafData {
    pub vol: Vec<f64>,
    pub kappa: Vec<f64>,
    pub kappa_sharp: Vec<f64>,
}

/// Discretized transversal geometry of a source foliation.
#[derive(Clone, Debug)]
pub struct ModelFoliation {
    pub name: String,
    pub epsilon: f64,
    pub chart: BaseChart,
    pub metric: MetricField,
    pub conn: ConnectionField,
    pub curv: CurvatureField,
    pub leaf: LeafData,
}

/// Build and validate a catalog model.
pub fn build_model(spec: &ModelSpec) -> Result<ModelFoliation> {
    let model = build_unchecked(spec)?;
    let report = validate_model(&model, DEFAULT_SOFT_TOL);
    if !report.ok() {
        return Err(Error::InvalidModel(report.summary()));
    }
    Ok(model)
}

/// Like [`build_model`] but skips the validation pass; parameter checks still apply.
pub fn build_unchecked(spec: &ModelSpec) -> Result<ModelFoliation> {
    let cat = Catalog::parse(&spec.model)?;
    if spec.resolution < MIN_NODES {
        return Err(Error::ResolutionTooSmall {
            got: spec.resolution,
            min: MIN_NODES,
        });
    }
    if !(spec.epsilon.abs() < 1.0) {
        return Err(Error::ParameterOutOfRange {
            name: "epsilon",
            value: spec.epsilon,
            reason: "|epsilon| must be below 1",
        });
    }
    if cat == Catalog::ConformalTorus && spec.codim != 2 {
        return Err(Error::ParameterOutOfRange {
            name: "codim",
            value: spec.codim as f64,
            reason: "conformal-torus needs codimension 2",
        });
    }
    let chart = BaseChart::square(spec.codim, spec.resolution, spec.order)?;
    let q = chart.q();
    let n = chart.node_count();
    let eps = spec.epsilon;

    let mut g = vec![0.0; n * q * q];
    let mut vol = vec![0.0; n];
    let mut kappa = vec![0.0; n * q];
    for node in 0..n {
        let x = chart.point(node);
        let l = cat.lambda(eps, x);
        for a in 0..q {
            g[(node * q + a) * q + a] = l * l;
        }
        vol[node] = cat.vol(eps, x);
        cat.kappa(eps, x, &mut kappa[node * q..(node + 1) * q]);
    }
    Ok(ModelFoliation::from_parts(cat.name(), eps, chart, g, vol, kappa))
}

/// Soft-check threshold used by [`build_model`]'s validation pass.
pub const DEFAULT_SOFT_TOL: f64 = 1e-3;

impl ModelFoliation {
    /// Assemble a model from sampled metric and leaf data without validating it.
    pub fn from_parts(
        name: &str,
        epsilon: f64,
        chart: BaseChart,
        g: Vec<f64>,
        vol: Vec<f64>,
        kappa: Vec<f64>,
    ) -> Self {
        let q = chart.q();
        let n = chart.node_count();
        let mut g_inv = vec![0.0; n * q * q];
        let mut sqrt_det = vec![0.0; n];
        for node in 0..n {
            let gn = &g[node * q * q..(node + 1) * q * q];
            let (inv, det) = invert_small(gn, q);
            g_inv[node * q * q..(node + 1) * q * q].copy_from_slice(&inv[..q * q]);
            sqrt_det[node] = det.sqrt();
        }
        let mut kappa_sharp = vec![0.0; n * q];
        for node in 0..n {
            for a in 0..q {
                kappa_sharp[node * q + a] = (0..q)
                    .map(|b| g_inv[(node * q + a) * q + b] * kappa[node * q + b])
                    .sum();
            }
        }
        let metric = MetricField { g, g_inv, sqrt_det };
        let conn = christoffel(&metric, &chart);
        let curv = curvature(&conn, &metric, &chart);
        ModelFoliation {
            name: name.to_string(),
            epsilon,
            chart,
            metric,
            conn,
            curv,
            leaf: LeafData {
                vol,
                kappa,
                kappa_sharp,
            },
        }
    }

    pub fn q(&self) -> usize {
        self.chart.q()
    }

    pub fn node_count(&self) -> usize {
        self.chart.node_count()
    }

    #[inline]
    pub fn g(&self, node: usize) -> &[f64] {
        let q2 = self.q() * self.q();
        &self.metric.g[node * q2..(node + 1) * q2]
    }

    #[inline]
    pub fn g_inv(&self, node: usize) -> &[f64] {
        let q2 = self.q() * self.q();
        &self.metric.g_inv[node * q2..(node + 1) * q2]
    }

    #[inline]
    pub fn gamma(&self, node: usize) -> &[f64] {
        let q3 = self.q().pow(3);
        &self.conn.gamma[node * q3..(node + 1) * q3]
    }

    #[inline]
    pub fn gamma_grad(&self, node: usize) -> &[f64] {
        let q4 = self.q().pow(4);
        &self.conn.gamma_grad[node * q4..(node + 1) * q4]
    }

    #[inline]
    pub fn riemann(&self, node: usize) -> &[f64] {
        let q4 = self.q().pow(4);
        &self.curv.riemann[node * q4..(node + 1) * q4]
    }

    #[inline]
    pub fn ricci(&self, node: usize) -> &[f64] {
        let q2 = self.q() * self.q();
        &self.curv.ricci[node * q2..(node + 1) * q2]
    }

    #[inline]
    pub fn kappa(&self, node: usize) -> &[f64] {
        let q = self.q();
        &self.leaf.kappa[node * q..(node + 1) * q]
    }

    #[inline]
    pub fn kappa_sharp(&self, node: usize) -> &[f64] {
        let q = self.q();
        &self.leaf.kappa_sharp[node * q..(node + 1) * q]
    }

    /// Transversal quadrature weight `√det g · ∏ h`.
    #[inline]
    pub fn weight(&self, node: usize) -> f64 {
        self.metric.sqrt_det[node] * self.chart.cell_volume()
    }

    /// Full quadrature weight, the transversal weight times `vol_L`.
    #[inline]
    pub fn full_weight(&self, node: usize) -> f64 {
        self.weight(node) * self.leaf.vol[node]
    }

    /// Largest `|g^{ab}|` over the grid (sets explicit time steps).
    pub fn max_inverse_metric(&self) -> f64 {
        self.metric.g_inv.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Grid dump with the layout declared in the header.
    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "format": "folia-model",
            "layout": "node-major, axis 0 fastest",
            "name": self.name,
            "epsilon": self.epsilon,
            "dims": self.chart.dims(),
            "spacing": self.chart.spacing(),
            "order": self.chart.order().accuracy(),
            "fields": {
                "g": {"per_node": self.q() * self.q(), "values": self.metric.g},
                "sqrt_det": {"per_node": 1, "values": self.metric.sqrt_det},
                "gamma": {"per_node": self.q().pow(3), "values": self.conn.gamma},
                "riemann": {"per_node": self.q().pow(4), "values": self.curv.riemann},
                "ricci": {"per_node": self.q() * self.q(), "values": self.curv.ricci},
                "sectional": {"per_node": 1, "values": self.curv.sectional},
                "vol_l": {"per_node": 1, "values": self.leaf.vol},
                "kappa": {"per_node": self.q(), "values": self.leaf.kappa},
            }
        })
    }
}

/// Inverse and determinant of a 1×1 or 2×2 matrix.
pub(crate) fn invert_small(m: &[f64], q: usize) -> ([f64; 4], f64) {
    if q == 1 {
        ([1.0 / m[0], 0.0, 0.0, 0.0], m[0])
    } else {
        let det = m[0] * m[3] - m[1] * m[2];
        ([m[3] / det, -m[1] / det, -m[2] / det, m[0] / det], det)
    }
}

/// Levi-Civita symbols from central differences of the sampled metric.
pub fn christoffel(metric: &MetricField, chart: &BaseChart) -> ConnectionField {
    let q = chart.q();
    let n = chart.node_count();
    let q2 = q * q;
    // dg[node][m][a][b] = ∂_m g_ab
    let mut dg = vec![0.0; n * q * q2];
    for node in 0..n {
        for m in 0..q {
            for ab in 0..q2 {
                dg[(node * q + m) * q2 + ab] = chart.d1(node, m, |j| metric.g[j * q2 + ab]);
            }
        }
    }
    let mut gamma = vec![0.0; n * q * q2];
    for node in 0..n {
        let gi = &metric.g_inv[node * q2..(node + 1) * q2];
        let d = |m: usize, a: usize, b: usize| dg[(node * q + m) * q2 + a * q + b];
        for a in 0..q {
            for b in 0..q {
                for c in 0..q {
                    let mut s = 0.0;
                    for e in 0..q {
                        s += gi[a * q + e] * (d(b, e, c) + d(c, b, e) - d(e, b, c));
                    }
                    gamma[((node * q + a) * q + b) * q + c] = 0.5 * s;
                }
            }
        }
    }
    let q3 = q2 * q;
    let mut gamma_grad = vec![0.0; n * q3 * q];
    for node in 0..n {
        for abc in 0..q3 {
            for m in 0..q {
                gamma_grad[(node * q3 + abc) * q + m] = chart.d1(node, m, |j| gamma[j * q3 + abc]);
            }
        }
    }
    ConnectionField { gamma, gamma_grad }
}

/// Riemann tensor from central differences of the connection, with Ricci operator
/// and coordinate-plane sectional curvature.
pub fn curvature(conn: &ConnectionField, metric: &MetricField, chart: &BaseChart) -> CurvatureField {
    let q = chart.q();
    let n = chart.node_count();
    let (q2, q3, q4) = (q * q, q * q * q, q * q * q * q);
    let mut riemann = vec![0.0; n * q4];
    let mut ricci = vec![0.0; n * q2];
    let mut sectional = vec![0.0; n];
    for node in 0..n {
        let gam = |a: usize, b: usize, c: usize| conn.gamma[node * q3 + (a * q + b) * q + c];
        let dgam =
            |a: usize, b: usize, c: usize, m: usize| conn.gamma_grad[(node * q3 + (a * q + b) * q + c) * q + m];
        let r = &mut riemann[node * q4..(node + 1) * q4];
        for a in 0..q {
            for b in 0..q {
                for c in 0..q {
                    for d in 0..q {
                        let mut v = dgam(a, d, b, c) - dgam(a, c, b, d);
                        for e in 0..q {
                            v += gam(a, c, e) * gam(e, d, b) - gam(a, d, e) * gam(e, c, b);
                        }
                        r[((a * q + b) * q + c) * q + d] = v;
                    }
                }
            }
        }
        let gi = &metric.g_inv[node * q2..(node + 1) * q2];
        let r = &riemann[node * q4..(node + 1) * q4];
        for a in 0..q {
            for c in 0..q {
                // ρ(Y) = Σ_e R(Y, E_e) E_e
                let mut s = 0.0;
                for b in 0..q {
                    for d in 0..q {
                        s += gi[b * q + d] * r[((a * q + d) * q + c) * q + b];
                    }
                }
                ricci[node * q2 + a * q + c] = s;
            }
        }
        if q == 2 {
            let g = &metric.g[node * 4..node * 4 + 4];
            let num: f64 = (0..2).map(|e| g[e] * r[((e * 2 + 1) * 2) * 2 + 1]).sum();
            sectional[node] = num / (g[0] * g[3] - g[1] * g[2]);
        }
    }
    CurvatureField {
        riemann,
        ricci,
        sectional,
    }
}

/// One invariant checked by [`validate_model`].
#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub residual: f64,
    pub tolerance: f64,
    /// Hard invariants make the model unusable when they fail.
    pub hard: bool,
    pub passed: bool,
    /// Node with the largest residual, if the check is nodewise.
    pub node: Option<usize>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ValidationReport {
    pub model: String,
    pub resolution: Vec<usize>,
    pub checks: Vec<Check>,
}

impl ValidationReport {
    /// True when no hard invariant failed.
    pub fn ok(&self) -> bool {
        self.checks.iter().all(|c| c.passed || !c.hard)
    }

    /// True when every check passed, hard or soft.
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn summary(&self) -> String {
        let parts: Vec<String> = self
            .failures()
            .iter()
            .map(|c| match c.node {
                Some(node) => format!("{} (residual {:.3e} at node {node})", c.name, c.residual),
                None => format!("{} (residual {:.3e})", c.name, c.residual),
            })
            .collect();
        if parts.is_empty() {
            "all checks passed".to_string()
        } else {
            parts.join("; ")
        }
    }
}

struct Worst {
    value: f64,
    node: Option<usize>,
}

impl Worst {
    fn new() -> Self {
        Worst {
            value: 0.0,
            node: None,
        }
    }

    fn see(&mut self, node: usize, v: f64) {
        // NaN sticks so corrupt data cannot hide
        if self.value.is_nan() {
            return;
        }
        if v.is_nan() || self.node.is_none() || v > self.value {
            self.value = v;
            self.node = Some(node);
        }
    }
}

/// Check every invariant of a model and report residual magnitudes.
/// `soft_tol` bounds the discretization-dependent residuals.
pub fn validate_model(m: &ModelFoliation, soft_tol: f64) -> ValidationReport {
    let q = m.q();
    let n = m.node_count();
    let chart = &m.chart;
    let mut checks = Vec::new();
    let mut push = |name, w: Worst, tolerance: f64, hard: bool, exceeds: bool| {
        checks.push(Check {
            name,
            residual: w.value,
            tolerance,
            hard,
            passed: !exceeds && !w.value.is_nan(),
            node: w.node,
        });
    };

    // SPD: smallest eigenvalue of each nodal metric
    let mut min_eig = f64::INFINITY;
    let mut min_node = 0;
    let mut spd_ok = true;
    for node in 0..n {
        let g = m.g(node);
        let lam = if q == 1 {
            g[0]
        } else {
            let tr = g[0] + g[3];
            let det = g[0] * g[3] - g[1] * g[2];
            0.5 * tr - (0.25 * tr * tr - det).max(0.0).sqrt()
        };
        let sym = q == 1 || g[1] == g[2];
        let bad = !(lam > 0.0) || !sym || !g.iter().all(|v| v.is_finite());
        if (bad && spd_ok) || (spd_ok && lam < min_eig) {
            min_eig = lam;
            min_node = node;
        }
        spd_ok &= !bad;
    }
    push(
        "metric_spd",
        Worst {
            value: min_eig,
            node: Some(min_node),
        },
        0.0,
        true,
        !spd_ok,
    );

    let mut inv = Worst::new();
    for node in 0..n {
        let (g, gi) = (m.g(node), m.g_inv(node));
        for a in 0..q {
            for b in 0..q {
                let s: f64 = (0..q).map(|c| gi[a * q + c] * g[c * q + b]).sum();
                let id = if a == b { 1.0 } else { 0.0 };
                inv.see(node, (s - id).abs());
            }
        }
    }
    let e = inv.value > 1e-12;
    push("inverse_metric", inv, 1e-12, true, e);

    let mut sd = Worst::new();
    let mut sd_fail = false;
    for node in 0..n {
        let v = m.metric.sqrt_det[node];
        if !(v > 0.0) {
            sd_fail = true;
            sd.see(node, if v.is_nan() { f64::NAN } else { -v });
        }
    }
    push("sqrt_det_positive", sd, 0.0, true, sd_fail);

    let mut vol = Worst::new();
    let mut vol_fail = false;
    for node in 0..n {
        let v = m.leaf.vol[node];
        if !(v > 0.0) || !v.is_finite() {
            vol_fail = true;
            vol.see(node, if v.is_nan() { f64::NAN } else { -v });
        }
    }
    push("vol_l_positive", vol, 0.0, true, vol_fail);

    let mut torsion = Worst::new();
    for node in 0..n {
        let gam = m.gamma(node);
        for a in 0..q {
            for b in 0..q {
                for c in 0..q {
                    torsion.see(node, (gam[(a * q + b) * q + c] - gam[(a * q + c) * q + b]).abs());
                }
            }
        }
    }
    let e = torsion.value > 1e-12;
    push("torsion_free", torsion, 1e-12, true, e);

    let mut compat = Worst::new();
    for node in 0..n {
        let gam = m.gamma(node);
        let g = m.g(node);
        for c in 0..q {
            for a in 0..q {
                for b in 0..q {
                    let mut v = chart.d1(node, c, |j| m.metric.g[j * q * q + a * q + b]);
                    for d in 0..q {
                        v -= gam[(d * q + c) * q + a] * g[d * q + b] + gam[(d * q + c) * q + b] * g[a * q + d];
                    }
                    compat.see(node, v.abs());
                }
            }
        }
    }
    let e = compat.value > soft_tol;
    push("metric_compatibility", compat, soft_tol, false, e);

    let mut anti = Worst::new();
    let mut bianchi = Worst::new();
    for node in 0..n {
        let r = m.riemann(node);
        let idx = |a: usize, b: usize, c: usize, d: usize| ((a * q + b) * q + c) * q + d;
        for a in 0..q {
            for b in 0..q {
                for c in 0..q {
                    for d in 0..q {
                        anti.see(node, (r[idx(a, b, c, d)] + r[idx(a, b, d, c)]).abs());
                        bianchi.see(node, (r[idx(a, b, c, d)] + r[idx(a, c, d, b)] + r[idx(a, d, b, c)]).abs());
                    }
                }
            }
        }
    }
    let e = anti.value > 1e-12;
    push("riemann_antisymmetry", anti, 1e-12, true, e);
    let e = bianchi.value > soft_tol;
    push("first_bianchi", bianchi, soft_tol, false, e);

    let mut contraction = Worst::new();
    let mut symmetry = Worst::new();
    for node in 0..n {
        let r = m.riemann(node);
        let gi = m.g_inv(node);
        let g = m.g(node);
        let rho = m.ricci(node);
        for a in 0..q {
            for c in 0..q {
                let mut s = 0.0;
                for b in 0..q {
                    for d in 0..q {
                        s += gi[d * q + b] * r[((a * q + b) * q + c) * q + d];
                    }
                }
                contraction.see(node, (s - rho[a * q + c]).abs());
            }
        }
        // g(ρX, Y) = g(X, ρY)
        for a in 0..q {
            for b in 0..q {
                let lo_ab: f64 = (0..q).map(|e| g[a * q + e] * rho[e * q + b]).sum();
                let lo_ba: f64 = (0..q).map(|e| g[b * q + e] * rho[e * q + a]).sum();
                symmetry.see(node, (lo_ab - lo_ba).abs());
            }
        }
    }
    let e = contraction.value > 1e-12;
    push("ricci_contraction", contraction, 1e-12, true, e);
    let e = symmetry.value > soft_tol;
    push("ricci_symmetry", symmetry, soft_tol, false, e);

    // d_B vol_L + vol_L κ_B = 0
    let mut leaf = Worst::new();
    for node in 0..n {
        for a in 0..q {
            let d = chart.d1(node, a, |j| m.leaf.vol[j]);
            leaf.see(node, (d + m.leaf.vol[node] * m.leaf.kappa[node * q + a]).abs());
        }
    }
    let e = leaf.value > soft_tol;
    push("leaf_volume_identity", leaf, soft_tol, false, e);

    let mut closed = Worst::new();
    for node in 0..n {
        for a in 0..q {
            for b in (a + 1)..q {
                let v = chart.d1(node, a, |j| m.leaf.kappa[j * q + b]) - chart.d1(node, b, |j| m.leaf.kappa[j * q + a]);
                closed.see(node, v.abs());
            }
        }
    }
    let e = closed.value > soft_tol;
    push("kappa_closed", closed, soft_tol, false, e);

    ValidationReport {
        model: m.name.clone(),
        resolution: chart.dims().to_vec(),
        checks,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_model_is_trivial() {
        let m = build_model(&ModelSpec::new("product-flat-torus", 0.0, 32)).unwrap();
        let r = validate_model(&m, 1e-12);
        assert!(r.all_passed(), "{}", r.summary());
        assert!(m.conn.gamma.iter().all(|&v| v == 0.0));
        assert!(m.curv.riemann.iter().all(|&v| v == 0.0));
        assert!(m.leaf.vol.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn warped_kappa_matches_log_derivative() {
        let m = build_model(&ModelSpec::new("warped-torus", 0.3, 32)).unwrap();
        for node in 0..m.node_count() {
            let x = m.chart.coord(node, 0);
            let expect = 0.3 * x.sin() / (1.0 + 0.3 * x.cos());
            assert!((m.kappa(node)[0] - expect).abs() < 1e-15);
            assert_eq!(m.kappa(node)[1], 0.0);
        }
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(matches!(
            build_model(&ModelSpec::new("moebius", 0.0, 16)),
            Err(Error::UnknownModel(_))
        ));
        assert!(matches!(
            build_model(&ModelSpec::new("warped-torus", 0.3, 4)),
            Err(Error::ResolutionTooSmall { got: 4, .. })
        ));
        assert!(matches!(
            build_model(&ModelSpec::new("warped-torus", 1.0, 16)),
            Err(Error::ParameterOutOfRange { name: "epsilon", .. })
        ));
        assert!(build_model(&ModelSpec::new("conformal-torus", 0.2, 16).with_codim(1)).is_err());
    }

    #[test]
    fn codimension_one_models_build() {
        let m = build_model(&ModelSpec::new("warped-torus", 0.5, 16).with_codim(1)).unwrap();
        assert_eq!(m.q(), 1);
        assert_eq!(m.curv.ricci.iter().fold(0.0f64, |a, v| a.max(v.abs())), 0.0);
    }

    #[test]
    fn corrupted_metric_names_the_node() {
        let m = build_model(&ModelSpec::new("product-flat-torus", 0.0, 16)).unwrap();
        let mut g = m.metric.g.clone();
        g[37 * 4] = -1.0;
        let bad = ModelFoliation::from_parts("corrupt", 0.0, m.chart.clone(), g, m.leaf.vol.clone(), m.leaf.kappa.clone());
        let r = validate_model(&bad, 1e-3);
        assert!(!r.ok());
        let spd = r.get("metric_spd").unwrap();
        assert!(!spd.passed);
        assert_eq!(spd.node, Some(37));
        assert!(r.summary().contains("node 37"));
    }

    #[test]
    fn conformal_curvature_is_antisymmetric_exactly() {
        let m = build_model(&ModelSpec::new("conformal-torus", 0.2, 16)).unwrap();
        let r = validate_model(&m, 1e-3);
        assert_eq!(r.get("riemann_antisymmetry").unwrap().residual, 0.0);
        assert!(r.get("ricci_contraction").unwrap().residual < 1e-12);
    }

    #[test]
    fn dump_declares_layout() {
        let m = build_model(&ModelSpec::new("warped-torus", 0.1, 8)).unwrap();
        let v = m.to_json();
        assert_eq!(v["layout"], "node-major, axis 0 fastest");
        assert_eq!(v["fields"]["vol_l"]["values"].as_array().unwrap().len(), 64);
    }
}
