//! Operators on maps: transversal differential, tension, stress-energy,
//! Jacobi operators, bi-tension and the curvature actions they use.

use serde::{Deserialize, Serialize};

use crate::calculus::{
    self, basic_laplacian, covariant_derivative, kappa_derivative, normal_hessian_trace, pullback_derivative,
    pullback_hessian_trace, pullback_kappa, MapData,
};
use crate::error::{Error, Result};
use crate::manifold::target::apply_riemann;
use crate::manifold::{ModelFoliation, TARGET_DIM};
use crate::section::{normal_inner, MapField, NormalField, PullbackOneForm, PullbackSection, ScalarField};

const D: usize = TARGET_DIM;

/// `(d_Tφ)^k_a = ∂_a φ^k`.
pub fn d_t(md: &MapData) -> PullbackOneForm {
    PullbackOneForm {
        q: md.q,
        data: md.dphi.clone(),
    }
}

/// Second fundamental form `(∇̃ d_Tφ)_{ab}`, stored `[node][a][b][k]`.
pub fn second_fundamental_form(model: &ModelFoliation, md: &MapData) -> Vec<f64> {
    let q = model.q();
    let n = md.node_count();
    let mut out = vec![0.0; n * q * q * D];
    for node in 0..n {
        let gam = model.gamma(node);
        let tp = &md.frames[node];
        for a in 0..q {
            for b in 0..q {
                let g = tp.gamma(md.dphi_at(node, a), md.dphi_at(node, b));
                for k in 0..D {
                    let mut s = md.wide[((node * q + a) * q + b) * D + k] + g[k];
                    for c in 0..q {
                        s -= gam[(c * q + a) * q + b] * md.dphi[(node * q + c) * D + k];
                    }
                    out[((node * q + a) * q + b) * D + k] = s;
                }
            }
        }
    }
    out
}

/// `τ_b(φ) = g^{ab}(∂_a∂_bφ - Γ^c_{ab}∂_cφ + Γ'(∂_aφ, ∂_bφ))`.
pub fn tension_of(model: &ModelFoliation, md: &MapData) -> PullbackSection {
    let q = model.q();
    let sff = second_fundamental_form(model, md);
    let n = md.node_count();
    let mut out = vec![0.0; n * D];
    for node in 0..n {
        let gi = model.g_inv(node);
        for a in 0..q {
            for b in 0..q {
                let g = gi[a * q + b];
                if g == 0.0 {
                    continue;
                }
                for k in 0..D {
                    out[node * D + k] += g * sff[((node * q + a) * q + b) * D + k];
                }
            }
        }
    }
    PullbackSection(out)
}

pub fn tension(model: &ModelFoliation, map: &MapField) -> Result<PullbackSection> {
    let md = MapData::new(model, map)?;
    Ok(tension_of(model, &md))
}

/// Max-norm of `∇̃ d_Tφ` over nodes and chart components.
pub fn totally_geodesic_residual(model: &ModelFoliation, map: &MapField) -> Result<f64> {
    let md = MapData::new(model, map)?;
    Ok(crate::section::max_abs(&second_fundamental_form(model, &md)))
}

/// `S_T(φ) = ½|d_Tφ|² g_Q - φ*g_{Q'}`, stored `[node][a][b]`.
pub fn stress_energy(model: &ModelFoliation, md: &MapData) -> Vec<f64> {
    let q = model.q();
    let n = md.node_count();
    let mut out = vec![0.0; n * q * q];
    for node in 0..n {
        let gi = model.g_inv(node);
        let g = model.g(node);
        let tp = &md.frames[node];
        let mut pull = [[0.0; 2]; 2];
        let mut e = 0.0;
        for a in 0..q {
            for b in 0..q {
                pull[a][b] = tp.dot(md.dphi_at(node, a), md.dphi_at(node, b));
                e += gi[a * q + b] * pull[a][b];
            }
        }
        for a in 0..q {
            for b in 0..q {
                out[(node * q + a) * q + b] = 0.5 * e * g[a * q + b] - pull[a][b];
            }
        }
    }
    out
}

/// `(div_∇ S)_b = g^{ac} (∇_c S)_{ab}`, stored `[node][b]`.
pub fn stress_divergence(model: &ModelFoliation, md: &MapData) -> Vec<f64> {
    let q = model.q();
    let n = md.node_count();
    let s = stress_energy(model, md);
    let ds = model.chart.gradient(&s, q * q); // [node][c][a][b]
    let mut out = vec![0.0; n * q];
    for node in 0..n {
        let gi = model.g_inv(node);
        let gam = model.gamma(node);
        let sn = &s[node * q * q..(node + 1) * q * q];
        for b in 0..q {
            let mut acc = 0.0;
            for a in 0..q {
                for c in 0..q {
                    let g = gi[a * q + c];
                    if g == 0.0 {
                        continue;
                    }
                    let mut v = ds[((node * q + c) * q + a) * q + b];
                    for d in 0..q {
                        v -= gam[(d * q + c) * q + a] * sn[d * q + b] + gam[(d * q + c) * q + b] * sn[a * q + d];
                    }
                    acc += g * v;
                }
            }
            out[node * q + b] = acc;
        }
    }
    out
}

/// Max over nodes and orthonormal directions `E_a` of
/// `|div_∇ S_T(E_a) + ⟨τ_b, d_Tφ(E_a)⟩|`.
pub fn conservation_residual(model: &ModelFoliation, map: &MapField) -> Result<f64> {
    let md = MapData::new(model, map)?;
    Ok(conservation_residual_of(model, &md))
}

pub fn conservation_residual_of(model: &ModelFoliation, md: &MapData) -> f64 {
    let q = model.q();
    let div = stress_divergence(model, md);
    let tau = tension_of(model, md);
    let mut worst: f64 = 0.0;
    for node in 0..md.node_count() {
        let tp = &md.frames[node];
        let mut r = [0.0; 2];
        for b in 0..q {
            r[b] = div[node * q + b] + tp.dot(tau.at(node), md.dphi_at(node, b));
        }
        for e in orthonormal_frame(model.g(node), q) {
            let v: f64 = (0..q).map(|b| r[b] * e[b]).sum();
            worst = worst.max(v.abs());
        }
    }
    worst
}

/// Gram-Schmidt on the coordinate vectors.
pub fn orthonormal_frame(g: &[f64], q: usize) -> Vec<[f64; 2]> {
    if q == 1 {
        return vec![[1.0 / g[0].sqrt(), 0.0]];
    }
    let e0 = [1.0 / g[0].sqrt(), 0.0];
    // ∂_1 - ⟨∂_1, e0⟩ e0
    let p = g[1] * e0[0];
    let mut e1 = [-p * e0[0], 1.0];
    let n2 = g[0] * e1[0] * e1[0] + 2.0 * g[1] * e1[0] * e1[1] + g[3] * e1[1] * e1[1];
    let s = 1.0 / n2.sqrt();
    e1 = [e1[0] * s, e1[1] * s];
    vec![e0, e1]
}

/// `tr_Q R'(V, d_Tφ) d_Tφ = g^{ab} R'(V, ∂_aφ) ∂_bφ` from the chart curvature.
pub fn curvature_action(model: &ModelFoliation, md: &MapData, v: &PullbackSection) -> PullbackSection {
    let q = model.q();
    let n = md.node_count();
    let mut out = vec![0.0; n * D];
    for node in 0..n {
        let gi = model.g_inv(node);
        let tp = &md.frames[node];
        for a in 0..q {
            for b in 0..q {
                let g = gi[a * q + b];
                if g == 0.0 {
                    continue;
                }
                let r = tp.curv(v.at(node), md.dphi_at(node, a), md.dphi_at(node, b));
                out[node * D] += g * r[0];
                out[node * D + 1] += g * r[1];
            }
        }
    }
    PullbackSection(out)
}

/// Same action from the constant-curvature closed form
/// `C Σ_a (⟨dφ(E_a), dφ(E_a)⟩ V - ⟨V, dφ(E_a)⟩ dφ(E_a))`.
pub fn curvature_action_closed_form(model: &ModelFoliation, md: &MapData, map: &MapField, v: &PullbackSection) -> Option<PullbackSection> {
    let c = map.target.constant_curvature()?;
    let q = model.q();
    let n = md.node_count();
    let mut out = vec![0.0; n * D];
    for node in 0..n {
        let gi = model.g_inv(node);
        let tp = &md.frames[node];
        let vv = v.at(node);
        for a in 0..q {
            for b in 0..q {
                let g = gi[a * q + b];
                let (pa, pb) = (md.dphi_at(node, a), md.dphi_at(node, b));
                let ab = tp.dot(pa, pb);
                let va = tp.dot(vv, pa);
                for k in 0..D {
                    out[node * D + k] += c * g * (ab * vv[k] - va * pb[k]);
                }
            }
        }
    }
    Some(PullbackSection(out))
}

/// How the first-order κ terms of the Jacobi operator are read.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JacobiReading {
    /// The `-∇_{κ♯}` correction cancels the `+∇_{κ♯}` inside the rough
    /// Laplacian: `J V = -Σ∇²V - tr R'(V, dφ)dφ`.
    #[default]
    Cancelled,
    /// Rough Laplacian without the correction: `J V = ∇*∇V - tr R'(V, dφ)dφ`.
    Uncancelled,
}

/// `J^T_φ(V) = (∇^φ_tr)^*∇^φ_tr V - ∇^φ_{κ♯}V - tr_Q R'(V, d_Tφ)d_Tφ`.
pub fn jacobi_apply(model: &ModelFoliation, md: &MapData, v: &PullbackSection) -> Result<PullbackSection> {
    jacobi_apply_with(model, md, v, JacobiReading::Cancelled)
}

pub fn jacobi_apply_with(model: &ModelFoliation, md: &MapData, v: &PullbackSection, reading: JacobiReading) -> Result<PullbackSection> {
    let h = pullback_hessian_trace(model, md, v)?;
    let r = curvature_action(model, md, v);
    let mut out: Vec<f64> = h.0.iter().zip(&r.0).map(|(a, b)| -a - b).collect();
    if reading == JacobiReading::Uncancelled {
        let k = pullback_kappa(model, md, v)?;
        for (o, kv) in out.iter_mut().zip(&k.0) {
            *o += kv;
        }
    }
    Ok(PullbackSection(out))
}

/// `(τ₂)_b(φ) = J^T_φ(τ_b(φ))`.
pub fn bitension_of(model: &ModelFoliation, md: &MapData) -> Result<PullbackSection> {
    let tau = tension_of(model, md);
    jacobi_apply(model, md, &tau)
}

pub fn bitension(model: &ModelFoliation, map: &MapField) -> Result<PullbackSection> {
    let md = MapData::new(model, map)?;
    bitension_of(model, &md)
}

/// `ρ^∇(Y)`.
pub fn ricci_apply(model: &ModelFoliation, y: &NormalField) -> NormalField {
    let q = model.q();
    let mut out = vec![0.0; y.data.len()];
    for node in 0..model.node_count() {
        let rho = model.ricci(node);
        for a in 0..q {
            out[node * q + a] = (0..q).map(|c| rho[a * q + c] * y.at(node)[c]).sum();
        }
    }
    NormalField { q, data: out }
}

/// Generalized Jacobi operator `J^T_∇(Y) = ∇*∇Y - ρ(Y) + A_Y κ♯`, evaluated
/// directly as `-Σ∇²Y - ρ(Y)` (the κ terms cancel).
pub fn generalized_jacobi(model: &ModelFoliation, y: &NormalField) -> Result<NormalField> {
    let h = normal_hessian_trace(model, y)?;
    let r = ricci_apply(model, y);
    Ok(NormalField {
        q: y.q,
        data: h.data.iter().zip(&r.data).map(|(a, b)| -a - b).collect(),
    })
}

/// Transversal Jacobi operator `J_∇ = ∇*∇ - ρ`.
pub fn transversal_jacobi(model: &ModelFoliation, y: &NormalField) -> Result<NormalField> {
    let l = calculus::rough_laplacian_normal(model, y)?;
    let r = ricci_apply(model, y);
    Ok(NormalField {
        q: y.q,
        data: l.data.iter().zip(&r.data).map(|(a, b)| a - b).collect(),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct GeneralizedJacobiReport {
    /// `‖J^T_∇(Y)‖_∞`.
    pub jacobi_norm: f64,
    /// `‖J^T_∇(Y) - J_∇(Y) - A_Y κ♯‖_∞`.
    pub relation_residual: f64,
    /// Max nodewise gap in `½(Δ_B - κ♯)|Y|² = ⟨J^T_∇Y, Y⟩ + ⟨ρY, Y⟩ - |∇_trY|²`.
    pub bochner_residual: f64,
}

pub fn generalized_jacobi_identity_residual(model: &ModelFoliation, y: &NormalField) -> Result<GeneralizedJacobiReport> {
    let q = model.q();
    let jt = generalized_jacobi(model, y)?;
    let j = transversal_jacobi(model, y)?;
    let ks = NormalField {
        q,
        data: model.leaf.kappa_sharp.clone(),
    };
    let ay = calculus::a_y(model, y, &ks)?;
    let relation_residual = jt
        .data
        .iter()
        .zip(&j.data)
        .zip(&ay.data)
        .fold(0.0f64, |m, ((a, b), c)| m.max((a - b - c).abs()));

    let bochner = bochner_check(model, y, &jt)?;
    Ok(GeneralizedJacobiReport {
        jacobi_norm: jt.max_abs(),
        relation_residual,
        bochner_residual: bochner.residual(),
    })
}

/// Nodewise sides of the Bochner identity for a normal field.
pub fn bochner_check(model: &ModelFoliation, y: &NormalField, jt: &NormalField) -> Result<calculus::NodewiseCheck> {
    let q = model.q();
    let f = normal_inner(model, y, y)?;
    let lb = basic_laplacian(model, &f);
    let kd = kappa_derivative(model, &f);
    let lhs: Vec<f64> = lb.0.iter().zip(&kd.0).map(|(a, b)| 0.5 * (a - b)).collect();
    let rho = ricci_apply(model, y);
    let nab = covariant_derivative(model, y)?;
    let jy = normal_inner(model, jt, y)?;
    let ry = normal_inner(model, &rho, y)?;
    let rhs = (0..model.node_count())
        .map(|node| {
            let gi = model.g_inv(node);
            let g = model.g(node);
            let mut grad2 = 0.0;
            for a in 0..q {
                for b in 0..q {
                    for c in 0..q {
                        for d in 0..q {
                            grad2 += gi[a * q + b] * g[c * q + d] * nab[(node * q + a) * q + c] * nab[(node * q + b) * q + d];
                        }
                    }
                }
            }
            jy.0[node] + ry.0[node] - grad2
        })
        .collect();
    Ok(calculus::NodewiseCheck { lhs, rhs })
}

/// `|d_Tφ|²` per node.
pub fn energy_density(model: &ModelFoliation, md: &MapData) -> ScalarField {
    let q = model.q();
    ScalarField(
        (0..md.node_count())
            .map(|node| {
                let gi = model.g_inv(node);
                let tp = &md.frames[node];
                let mut s = 0.0;
                for a in 0..q {
                    for b in 0..q {
                        let g = gi[a * q + b];
                        if g != 0.0 {
                            s += g * tp.dot(md.dphi_at(node, a), md.dphi_at(node, b));
                        }
                    }
                }
                s
            })
            .collect(),
    )
}

/// Covariant derivative of a section along φ (re-exported for the variational terms).
pub fn nabla_section(model: &ModelFoliation, md: &MapData, v: &PullbackSection) -> Result<PullbackOneForm> {
    pullback_derivative(model, md, v)
}

/// Check that a section is attached to the map's grid.
pub fn check_attached(md: &MapData, v: &PullbackSection) -> Result<()> {
    if v.0.len() != md.node_count() * D {
        return Err(Error::ShapeMismatch(format!(
            "section has {} entries, map has {} nodes",
            v.0.len(),
            md.node_count()
        )));
    }
    Ok(())
}

/// `R'(x, y) z` with the chart curvature at a node (exposed for tests).
pub fn curvature_at(md: &MapData, node: usize, x: &[f64], y: &[f64], z: &[f64]) -> [f64; 2] {
    apply_riemann(&md.frames[node].riemann, x, y, z)
}
