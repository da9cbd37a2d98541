//! Analytic target charts: the flat torus and the conformally flat
//! constant-curvature models (stereographic sphere, Poincaré disk).
//!
//! Index conventions for a target point `u`:
//! - `christoffel[k][i][j]` is `Γ'^k_{ij}`;
//! - `christoffel_grad[k][i][j][m]` is `∂_m Γ'^k_{ij}`;
//! - `riemann[k][l][i][j]` is `R'^k_{lij}` with `R(∂_i, ∂_j)∂_l = R'^k_{lij} ∂_k`
//!   and `R(X, Y) = [∇_X, ∇_Y] - ∇_{[X, Y]}`;
//! - `nabla_riemann[m][k][l][i][j]` is `(∇_m R')^k_{lij}`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dimension of every catalog target chart.
pub const TARGET_DIM: usize = 2;

pub type Point = [f64; 2];
pub type Metric2 = [[f64; 2]; 2];
pub type Christoffel = [[[f64; 2]; 2]; 2];
pub type ChristoffelGrad = [[[[f64; 2]; 2]; 2]; 2];
pub type Riemann = [[[[f64; 2]; 2]; 2]; 2];
pub type NablaRiemann = [Riemann; 2];

/// Default radius bound on the stereographic chart.
pub const DEFAULT_R_MAX: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum TargetKind {
    FlatTorus,
    SphereStereo { curvature: f64 },
    HyperbolicDisk { curvature: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetGeometry {
    pub kind: TargetKind,
    /// Largest admissible `|u|` on the stereographic chart.
    pub r_max: f64,
}

/// Log conformal factor `f = ln μ` and its first three derivatives.
struct LogFactor {
    d1: [f64; 2],
    d2: [[f64; 2]; 2],
    d3: [[[f64; 2]; 2]; 2],
    mu2: f64,
}

impl TargetGeometry {
    pub fn flat_torus() -> Self {
        TargetGeometry {
            kind: TargetKind::FlatTorus,
            r_max: f64::INFINITY,
        }
    }

    pub fn sphere(curvature: f64) -> Result<Self> {
        if !(curvature > 0.0) || !curvature.is_finite() {
            return Err(Error::ParameterOutOfRange {
                name: "curvature",
                value: curvature,
                reason: "sphere-stereo needs C > 0",
            });
        }
        Ok(TargetGeometry {
            kind: TargetKind::SphereStereo { curvature },
            r_max: DEFAULT_R_MAX,
        })
    }

    /// Poincaré disk of curvature `-|curvature|`.
    pub fn hyperbolic(curvature: f64) -> Result<Self> {
        if curvature == 0.0 || !curvature.is_finite() {
            return Err(Error::ParameterOutOfRange {
                name: "curvature",
                value: curvature,
                reason: "hyperbolic-disk needs |C| > 0",
            });
        }
        Ok(TargetGeometry {
            kind: TargetKind::HyperbolicDisk {
                curvature: -curvature.abs(),
            },
            r_max: 1.0,
        })
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            TargetKind::FlatTorus => "flat-torus",
            TargetKind::SphereStereo { .. } => "sphere-stereo",
            TargetKind::HyperbolicDisk { .. } => "hyperbolic-disk",
        }
    }

    pub fn dim(&self) -> usize {
        TARGET_DIM
    }

    /// Whether map values live on a periodic chart (and may carry winding).
    pub fn is_periodic(&self) -> bool {
        matches!(self.kind, TargetKind::FlatTorus)
    }

    pub fn is_flat(&self) -> bool {
        matches!(self.kind, TargetKind::FlatTorus)
    }

    /// Sectional curvature when it is constant on the chart.
    pub fn constant_curvature(&self) -> Option<f64> {
        match self.kind {
            TargetKind::FlatTorus => Some(0.0),
            TargetKind::SphereStereo { curvature } => Some(curvature),
            TargetKind::HyperbolicDisk { curvature } => Some(curvature),
        }
    }

    pub fn contains(&self, u: Point) -> bool {
        let r = norm(u);
        match self.kind {
            TargetKind::FlatTorus => r.is_finite(),
            TargetKind::SphereStereo { .. } => r <= self.r_max,
            TargetKind::HyperbolicDisk { .. } => r < self.r_max,
        }
    }

    pub fn check(&self, node: usize, u: Point) -> Result<()> {
        if self.contains(u) {
            Ok(())
        } else {
            Err(Error::ChartDomain {
                node,
                norm: norm(u),
            })
        }
    }

    fn log_factor(&self, u: Point) -> LogFactor {
        // f = const - ln s, s = 1 + σ|u|²
        let (sigma, c) = match self.kind {
            TargetKind::FlatTorus => {
                return LogFactor {
                    d1: [0.0; 2],
                    d2: [[0.0; 2]; 2],
                    d3: [[[0.0; 2]; 2]; 2],
                    mu2: 1.0,
                }
            }
            TargetKind::SphereStereo { curvature } => (1.0, curvature),
            TargetKind::HyperbolicDisk { curvature } => (-1.0, curvature.abs()),
        };
        let s = 1.0 + sigma * (u[0] * u[0] + u[1] * u[1]);
        let mu2 = 4.0 / (c * s * s);
        let mut d1 = [0.0; 2];
        let mut d2 = [[0.0; 2]; 2];
        let mut d3 = [[[0.0; 2]; 2]; 2];
        for i in 0..2 {
            d1[i] = -2.0 * sigma * u[i] / s;
            for j in 0..2 {
                let dij = if i == j { 1.0 } else { 0.0 };
                d2[i][j] = -2.0 * sigma * dij / s + 4.0 * u[i] * u[j] / (s * s);
                for m in 0..2 {
                    let dim = if i == m { 1.0 } else { 0.0 };
                    let djm = if j == m { 1.0 } else { 0.0 };
                    d3[i][j][m] = 4.0 * dij * u[m] / (s * s)
                        + 4.0 * (dim * u[j] + djm * u[i]) / (s * s)
                        - 16.0 * sigma * u[i] * u[j] * u[m] / (s * s * s);
                }
            }
        }
        LogFactor { d1, d2, d3, mu2 }
    }

    pub fn metric(&self, u: Point) -> Metric2 {
        let mu2 = self.log_factor(u).mu2;
        [[mu2, 0.0], [0.0, mu2]]
    }

    /// `∂_m g'_{ij}`, indexed `[m][i][j]`.
    pub fn metric_grad(&self, u: Point) -> [Metric2; 2] {
        let lf = self.log_factor(u);
        let mut out = [[[0.0; 2]; 2]; 2];
        for m in 0..2 {
            let v = 2.0 * lf.mu2 * lf.d1[m];
            out[m] = [[v, 0.0], [0.0, v]];
        }
        out
    }

    pub fn christoffel(&self, u: Point) -> Christoffel {
        let d1 = self.log_factor(u).d1;
        let mut g = [[[0.0; 2]; 2]; 2];
        for k in 0..2 {
            for i in 0..2 {
                for j in 0..2 {
                    g[k][i][j] = delta(k, i) * d1[j] + delta(k, j) * d1[i] - delta(i, j) * d1[k];
                }
            }
        }
        g
    }

    pub fn christoffel_grad(&self, u: Point) -> ChristoffelGrad {
        let d2 = self.log_factor(u).d2;
        let mut g = [[[[0.0; 2]; 2]; 2]; 2];
        for k in 0..2 {
            for i in 0..2 {
                for j in 0..2 {
                    for m in 0..2 {
                        g[k][i][j][m] =
                            delta(k, i) * d2[j][m] + delta(k, j) * d2[i][m] - delta(i, j) * d2[k][m];
                    }
                }
            }
        }
        g
    }

    /// Curvature from the Christoffel symbols and their derivatives; valid for any chart metric.
    pub fn riemann(&self, u: Point) -> Riemann {
        let gam = self.christoffel(u);
        let dg = self.christoffel_grad(u);
        riemann_from(&gam, &dg)
    }

    /// `C(⟨Y,Z⟩X - ⟨X,Z⟩Y)` for constant-curvature charts.
    pub fn riemann_closed_form(&self, u: Point) -> Option<Riemann> {
        let c = self.constant_curvature()?;
        let g = self.metric(u);
        let mut r = [[[[0.0; 2]; 2]; 2]; 2];
        for k in 0..2 {
            for l in 0..2 {
                for i in 0..2 {
                    for j in 0..2 {
                        r[k][l][i][j] = c * (g[j][l] * delta(k, i) - g[i][l] * delta(k, j));
                    }
                }
            }
        }
        Some(r)
    }

    /// Covariant derivative of the curvature tensor, from analytic third derivatives
    /// of the conformal factor.
    pub fn nabla_riemann(&self, u: Point) -> NablaRiemann {
        let lf = self.log_factor(u);
        let gam = self.christoffel(u);
        let dg = self.christoffel_grad(u);
        let r = riemann_from(&gam, &dg);
        // ∂_n ∂_m Γ^k_{ij}
        let mut ddg = [[[[[0.0; 2]; 2]; 2]; 2]; 2];
        for k in 0..2 {
            for i in 0..2 {
                for j in 0..2 {
                    for m in 0..2 {
                        for n in 0..2 {
                            ddg[k][i][j][m][n] = delta(k, i) * lf.d3[j][m][n]
                                + delta(k, j) * lf.d3[i][m][n]
                                - delta(i, j) * lf.d3[k][m][n];
                        }
                    }
                }
            }
        }
        let mut out = [[[[[0.0; 2]; 2]; 2]; 2]; 2];
        for m in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    for i in 0..2 {
                        for j in 0..2 {
                            // ∂_m R^k_{lij}
                            let mut v = ddg[k][j][l][i][m] - ddg[k][i][l][j][m];
                            for p in 0..2 {
                                v += dg[k][i][p][m] * gam[p][j][l] + gam[k][i][p] * dg[p][j][l][m]
                                    - dg[k][j][p][m] * gam[p][i][l]
                                    - gam[k][j][p] * dg[p][i][l][m];
                            }
                            for p in 0..2 {
                                v += gam[k][m][p] * r[p][l][i][j]
                                    - gam[p][m][l] * r[k][p][i][j]
                                    - gam[p][m][i] * r[k][l][p][j]
                                    - gam[p][m][j] * r[k][l][i][p];
                            }
                            out[m][k][l][i][j] = v;
                        }
                    }
                }
            }
        }
        out
    }

    /// `⟨R(∂_0,∂_1)∂_1, ∂_0⟩ / (g_00 g_11 - g_01²)`.
    pub fn sectional_curvature(&self, u: Point) -> f64 {
        let g = self.metric(u);
        let r = self.riemann(u);
        let num: f64 = (0..2).map(|e| g[0][e] * r[e][1][0][1]).sum();
        num / (g[0][0] * g[1][1] - g[0][1] * g[0][1])
    }

    /// Metric, connection, connection derivative and curvature at one point.
    pub fn frame(&self, u: Point) -> TargetPoint {
        let gam = self.christoffel(u);
        let dgam = self.christoffel_grad(u);
        TargetPoint {
            metric: self.metric(u),
            riemann: riemann_from(&gam, &dgam),
            christoffel: gam,
            christoffel_grad: dgam,
        }
    }
}

/// Target geometry evaluated at one map value.
#[derive(Clone, Copy, Debug)]
pub struct TargetPoint {
    pub metric: Metric2,
    pub christoffel: Christoffel,
    pub christoffel_grad: ChristoffelGrad,
    pub riemann: Riemann,
}

impl TargetPoint {
    #[inline]
    pub fn dot(&self, a: &[f64], b: &[f64]) -> f64 {
        let g = &self.metric;
        g[0][0] * a[0] * b[0] + g[0][1] * (a[0] * b[1] + a[1] * b[0]) + g[1][1] * a[1] * b[1]
    }

    /// `Γ'(a, b)^k`.
    #[inline]
    pub fn gamma(&self, a: &[f64], b: &[f64]) -> [f64; 2] {
        let mut out = [0.0; 2];
        for (k, o) in out.iter_mut().enumerate() {
            for i in 0..2 {
                for j in 0..2 {
                    *o += self.christoffel[k][i][j] * a[i] * b[j];
                }
            }
        }
        out
    }

    /// `R'(x, y) z`.
    #[inline]
    pub fn curv(&self, x: &[f64], y: &[f64], z: &[f64]) -> [f64; 2] {
        apply_riemann(&self.riemann, x, y, z)
    }
}

#[inline]
pub fn apply_riemann(r: &Riemann, x: &[f64], y: &[f64], z: &[f64]) -> [f64; 2] {
    let mut out = [0.0; 2];
    for (k, o) in out.iter_mut().enumerate() {
        for l in 0..2 {
            for i in 0..2 {
                for j in 0..2 {
                    *o += r[k][l][i][j] * z[l] * x[i] * y[j];
                }
            }
        }
    }
    out
}

/// `(∇_w R')(x, y) z`.
#[inline]
pub fn apply_nabla_riemann(nr: &NablaRiemann, w: &[f64], x: &[f64], y: &[f64], z: &[f64]) -> [f64; 2] {
    let mut out = [0.0; 2];
    for m in 0..2 {
        let r = apply_riemann(&nr[m], x, y, z);
        out[0] += w[m] * r[0];
        out[1] += w[m] * r[1];
    }
    out
}

fn riemann_from(gam: &Christoffel, dg: &ChristoffelGrad) -> Riemann {
    let mut r = [[[[0.0; 2]; 2]; 2]; 2];
    for k in 0..2 {
        for l in 0..2 {
            for i in 0..2 {
                for j in 0..2 {
                    let mut v = dg[k][j][l][i] - dg[k][i][l][j];
                    for m in 0..2 {
                        v += gam[k][i][m] * gam[m][j][l] - gam[k][j][m] * gam[m][i][l];
                    }
                    r[k][l][i][j] = v;
                }
            }
        }
    }
    r
}

#[inline]
fn delta(a: usize, b: usize) -> f64 {
    if a == b {
        1.0
    } else {
        0.0
    }
}

#[inline]
pub fn norm(u: Point) -> f64 {
    (u[0] * u[0] + u[1] * u[1]).sqrt()
}

/// Instantiate a catalog target by id. `curvature` is ignored for the flat torus.
pub fn build_target(name: &str, curvature: Option<f64>) -> Result<TargetGeometry> {
    match name {
        "flat-torus" => Ok(TargetGeometry::flat_torus()),
        "sphere-stereo" => TargetGeometry::sphere(curvature.unwrap_or(1.0)),
        "hyperbolic-disk" => TargetGeometry::hyperbolic(curvature.unwrap_or(-1.0)),
        other => Err(Error::UnknownTarget(other.to_string())),
    }
}
