//! Covariant calculus on the source grid and along maps.
//!
//! First derivatives are the central stencil `D`; second derivatives of a field
//! come in two flavours: compact (diagonal second-difference stencil, mixed
//! `D∘D`), used by the Jacobi-type operators, and wide (`D∘D` throughout),
//! which is what composing first-order operators produces.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::manifold::target::TargetPoint;
use crate::manifold::{ModelFoliation, TARGET_DIM};
use crate::section::{MapField, NormalField, PullbackOneForm, PullbackSection, ScalarField};

const D: usize = TARGET_DIM;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Measure {
    /// `√det g · ∏h`, the chart Riemannian volume.
    Transversal,
    /// Transversal weight times `vol_L`.
    Full,
}

pub fn weights(model: &ModelFoliation, measure: Measure) -> Vec<f64> {
    (0..model.node_count())
        .map(|n| match measure {
            Measure::Transversal => model.weight(n),
            Measure::Full => model.full_weight(n),
        })
        .collect()
}

/// Trapezoid quadrature, summed in node order.
pub fn integrate(model: &ModelFoliation, f: &[f64], measure: Measure) -> f64 {
    let mut s = 0.0;
    for (n, v) in f.iter().enumerate() {
        let w = match measure {
            Measure::Transversal => model.weight(n),
            Measure::Full => model.full_weight(n),
        };
        s += v * w;
    }
    s
}

/// Derivative data of a map, computed once and shared by the operators.
#[derive(Clone, Debug)]
pub struct MapData {
    pub q: usize,
    pub frames: Vec<TargetPoint>,
    /// `∂_a φ^k`, `[node][a][k]`.
    pub dphi: Vec<f64>,
    /// Compact second derivatives `∂_a∂_b φ^k`, `[node][a][b][k]`.
    pub hess: Vec<f64>,
    /// `D_a(∂_b φ^k)`, `[node][a][b][k]`.
    pub wide: Vec<f64>,
}

impl MapData {
    pub fn new(model: &ModelFoliation, map: &MapField) -> Result<Self> {
        let q = model.q();
        let n = model.node_count();
        if map.q != q || map.node_count() != n {
            return Err(Error::ShapeMismatch(format!(
                "map has {} nodes (q = {}), model has {n} (q = {q})",
                map.node_count(),
                map.q
            )));
        }
        map.check_domain()?;
        let chart = &model.chart;
        let jumps = map.jumps();
        let mut dphi = vec![0.0; n * q * D];
        for node in 0..n {
            for a in 0..q {
                for k in 0..D {
                    dphi[(node * q + a) * D + k] = chart.d1_lifted(node, a, jumps[k * q + a], |j| map.values[j * D + k]);
                }
            }
        }
        let hess = chart.hessian(&map.values, D, Some(&jumps));
        let wide = chart.gradient(&dphi, q * D);
        Ok(MapData {
            q,
            frames: map.frames(),
            dphi,
            hess,
            wide,
        })
    }

    #[inline]
    pub fn dphi_at(&self, node: usize, a: usize) -> &[f64] {
        let i = (node * self.q + a) * D;
        &self.dphi[i..i + D]
    }

    pub fn node_count(&self) -> usize {
        self.frames.len()
    }
}

#[inline]
fn gamma_apply(tp: &TargetPoint, a: &[f64], b: &[f64]) -> [f64; 2] {
    tp.gamma(a, b)
}

/// `D_a f`, `[node][a]`.
pub fn gradient(model: &ModelFoliation, f: &[f64]) -> Vec<f64> {
    model.chart.gradient(f, 1)
}

/// `Δ_B f = -(1/(√g vol_L)) D_a(√g vol_L g^{ab} D_b f)`, non-negative and
/// self-adjoint for the full measure.
pub fn basic_laplacian(model: &ModelFoliation, f: &ScalarField) -> ScalarField {
    let q = model.q();
    let n = model.node_count();
    let df = gradient(model, &f.0);
    let mut flux = vec![0.0; n * q];
    for node in 0..n {
        let gi = model.g_inv(node);
        let s = model.metric.sqrt_det[node] * model.leaf.vol[node];
        for a in 0..q {
            flux[node * q + a] = s * (0..q).map(|b| gi[a * q + b] * df[node * q + b]).sum::<f64>();
        }
    }
    let chart = &model.chart;
    ScalarField(
        (0..n)
            .map(|node| {
                let div: f64 = (0..q).map(|a| chart.d1(node, a, |j| flux[j * q + a])).sum();
                -div / (model.metric.sqrt_det[node] * model.leaf.vol[node])
            })
            .collect(),
    )
}

/// `κ_B^♯(f) = κ^a D_a f`.
pub fn kappa_derivative(model: &ModelFoliation, f: &ScalarField) -> ScalarField {
    let q = model.q();
    let df = gradient(model, &f.0);
    ScalarField(
        (0..model.node_count())
            .map(|node| {
                let k = model.kappa_sharp(node);
                (0..q).map(|a| k[a] * df[node * q + a]).sum()
            })
            .collect(),
    )
}

fn check_normal(model: &ModelFoliation, y: &NormalField) -> Result<()> {
    if y.q != model.q() || y.data.len() != model.q() * model.node_count() {
        return Err(Error::ShapeMismatch(format!(
            "normal field has {} components over {} entries, model needs q = {}",
            y.q,
            y.data.len(),
            model.q()
        )));
    }
    Ok(())
}

/// `(∇_b Y)^a = D_b Y^a + Γ^a_{bc} Y^c`, stored `[node][b][a]`.
pub fn covariant_derivative(model: &ModelFoliation, y: &NormalField) -> Result<Vec<f64>> {
    check_normal(model, y)?;
    let q = model.q();
    let mut out = model.chart.gradient(&y.data, q);
    for node in 0..model.node_count() {
        let gam = model.gamma(node);
        let yv = y.at(node);
        for b in 0..q {
            for a in 0..q {
                out[(node * q + b) * q + a] += (0..q).map(|c| gam[(a * q + b) * q + c] * yv[c]).sum::<f64>();
            }
        }
    }
    Ok(out)
}

/// `Σ_a ∇²_{E_a,E_a} Y = g^{ab}(∇_a∇_b Y - Γ^c_{ab}∇_c Y)` with compact second derivatives.
pub fn normal_hessian_trace(model: &ModelFoliation, y: &NormalField) -> Result<NormalField> {
    check_normal(model, y)?;
    let q = model.q();
    let n = model.node_count();
    let chart = &model.chart;
    let dy = chart.gradient(&y.data, q); // [node][a][c]
    let hy = chart.hessian(&y.data, q, None); // [node][a][b][c]
    let mut out = vec![0.0; n * q];
    let mut nab = vec![0.0; q * q];
    for node in 0..n {
        let gam = model.gamma(node);
        let dgam = model.gamma_grad(node);
        let gi = model.g_inv(node);
        let yv = y.at(node);
        let dyv = |a: usize, c: usize| dy[(node * q + a) * q + c];
        let gm = |a: usize, b: usize, c: usize| gam[(a * q + b) * q + c];
        // ∇_b Y^c
        for b in 0..q {
            for c in 0..q {
                nab[b * q + c] = dyv(b, c) + (0..q).map(|d| gm(c, b, d) * yv[d]).sum::<f64>();
            }
        }
        for c in 0..q {
            let mut acc = 0.0;
            for a in 0..q {
                for b in 0..q {
                    let gab = gi[a * q + b];
                    if gab == 0.0 {
                        continue;
                    }
                    let mut v = hy[((node * q + a) * q + b) * q + c];
                    for d in 0..q {
                        v += dgam[((c * q + b) * q + d) * q + a] * yv[d] + gm(c, b, d) * dyv(a, d) + gm(c, a, d) * nab[b * q + d]
                            - gm(d, a, b) * nab[d * q + c];
                    }
                    acc += gab * v;
                }
            }
            out[node * q + c] = acc;
        }
    }
    Ok(NormalField { q, data: out })
}

/// `∇_{κ♯} Y`.
pub fn kappa_covariant(model: &ModelFoliation, y: &NormalField) -> Result<NormalField> {
    let q = model.q();
    let nab = covariant_derivative(model, y)?;
    let mut out = vec![0.0; y.data.len()];
    for node in 0..model.node_count() {
        let k = model.kappa_sharp(node);
        for a in 0..q {
            out[node * q + a] = (0..q).map(|b| k[b] * nab[(node * q + b) * q + a]).sum();
        }
    }
    Ok(NormalField { q, data: out })
}

/// `∇_tr^*∇_tr Y = -Σ_a ∇²_{E_a,E_a} Y + ∇_{κ♯} Y`.
pub fn rough_laplacian_normal(model: &ModelFoliation, y: &NormalField) -> Result<NormalField> {
    let h = normal_hessian_trace(model, y)?;
    let k = kappa_covariant(model, y)?;
    Ok(NormalField {
        q: y.q,
        data: h.data.iter().zip(&k.data).map(|(a, b)| -a + b).collect(),
    })
}

/// `div_∇ Y = D_a Y^a + Γ^a_{ab} Y^b`.
pub fn divergence(model: &ModelFoliation, y: &NormalField) -> Result<ScalarField> {
    let q = model.q();
    let nab = covariant_derivative(model, y)?;
    Ok(ScalarField(
        (0..model.node_count())
            .map(|node| (0..q).map(|a| nab[(node * q + a) * q + a]).sum())
            .collect(),
    ))
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct IntegralCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
}

/// Both sides of `∫ div Y = ∫ g(Y, κ♯)` in the full measure.
pub fn divergence_theorem(model: &ModelFoliation, y: &NormalField) -> Result<IntegralCheck> {
    let div = divergence(model, y)?;
    let q = model.q();
    let pairing: Vec<f64> = (0..model.node_count())
        .map(|node| (0..q).map(|a| y.at(node)[a] * model.kappa(node)[a]).sum())
        .collect();
    let lhs = integrate(model, &div.0, Measure::Full);
    let rhs = integrate(model, &pairing, Measure::Full);
    Ok(IntegralCheck {
        lhs,
        rhs,
        residual: (lhs - rhs).abs(),
    })
}

/// `A_Y s = -∇_s Y`.
pub fn a_y(model: &ModelFoliation, y: &NormalField, s: &NormalField) -> Result<NormalField> {
    check_normal(model, s)?;
    let q = model.q();
    let nab = covariant_derivative(model, y)?;
    let mut out = vec![0.0; y.data.len()];
    for node in 0..model.node_count() {
        let sv = s.at(node);
        for a in 0..q {
            out[node * q + a] = -(0..q).map(|b| sv[b] * nab[(node * q + b) * q + a]).sum::<f64>();
        }
    }
    Ok(NormalField { q, data: out })
}

fn check_section(md: &MapData, v: &PullbackSection) -> Result<()> {
    if v.0.len() != md.node_count() * D {
        return Err(Error::ShapeMismatch(format!(
            "section has {} entries, map has {} nodes",
            v.0.len(),
            md.node_count()
        )));
    }
    Ok(())
}

fn check_one_form(md: &MapData, phi: &PullbackOneForm) -> Result<()> {
    if phi.q != md.q || phi.data.len() != md.node_count() * md.q * D {
        return Err(Error::ShapeMismatch("one-form does not match the map".into()));
    }
    Ok(())
}

/// `(∇^φ_a V)^k = D_a V^k + Γ'^k_{ij}(φ) ∂_aφ^i V^j`.
pub fn pullback_derivative(model: &ModelFoliation, md: &MapData, v: &PullbackSection) -> Result<PullbackOneForm> {
    check_section(md, v)?;
    let q = model.q();
    let mut out = model.chart.gradient(&v.0, D);
    for node in 0..md.node_count() {
        for a in 0..q {
            let g = gamma_apply(&md.frames[node], md.dphi_at(node, a), v.at(node));
            out[(node * q + a) * D] += g[0];
            out[(node * q + a) * D + 1] += g[1];
        }
    }
    Ok(PullbackOneForm { q, data: out })
}

/// `(∇^φ_{κ♯} V)`.
pub fn pullback_kappa(model: &ModelFoliation, md: &MapData, v: &PullbackSection) -> Result<PullbackSection> {
    let q = model.q();
    let nab = pullback_derivative(model, md, v)?;
    let mut out = vec![0.0; v.0.len()];
    for node in 0..md.node_count() {
        let k = model.kappa_sharp(node);
        for a in 0..q {
            for c in 0..D {
                out[node * D + c] += k[a] * nab.data[(node * q + a) * D + c];
            }
        }
    }
    Ok(PullbackSection(out))
}

/// `Σ_a ∇²_{E_a,E_a} V` along φ with compact second derivatives of `V` and `φ`.
pub fn pullback_hessian_trace(model: &ModelFoliation, md: &MapData, v: &PullbackSection) -> Result<PullbackSection> {
    check_section(md, v)?;
    let q = model.q();
    let n = model.node_count();
    let chart = &model.chart;
    let dv = chart.gradient(&v.0, D);
    let hv = chart.hessian(&v.0, D, None);
    let mut out = vec![0.0; n * D];
    for node in 0..n {
        let tp = &md.frames[node];
        let vv = v.at(node);
        let gi = model.g_inv(node);
        let gam = model.gamma(node);
        let dva = |a: usize| -> &[f64] { &dv[(node * q + a) * D..(node * q + a) * D + D] };
        // ∇_b V
        let mut nab = [[0.0; 2]; 2];
        for b in 0..q {
            let g = tp.gamma(md.dphi_at(node, b), vv);
            nab[b] = [dva(b)[0] + g[0], dva(b)[1] + g[1]];
        }
        let mut acc = [0.0; 2];
        for a in 0..q {
            for b in 0..q {
                let gab = gi[a * q + b];
                if gab == 0.0 {
                    continue;
                }
                let pa = md.dphi_at(node, a);
                let pb = md.dphi_at(node, b);
                let hphi = &md.hess[((node * q + a) * q + b) * D..((node * q + a) * q + b) * D + D];
                for k in 0..D {
                    let mut s = hv[((node * q + a) * q + b) * D + k];
                    for i in 0..D {
                        for j in 0..D {
                            let dg: f64 = (0..D).map(|m| tp.christoffel_grad[k][i][j][m] * pa[m]).sum();
                            s += dg * pb[i] * vv[j]
                                + tp.christoffel[k][i][j] * (hphi[i] * vv[j] + pb[i] * dva(a)[j] + pa[i] * nab[b][j]);
                        }
                    }
                    for c in 0..q {
                        s -= gam[(c * q + a) * q + b] * nab[c][k];
                    }
                    acc[k] += gab * s;
                }
            }
        }
        out[node * D] = acc[0];
        out[node * D + 1] = acc[1];
    }
    Ok(PullbackSection(out))
}

/// `(∇^φ_tr)^*∇^φ_tr V = -Σ_a ∇²_{E_a,E_a} V + ∇_{κ♯} V`.
pub fn rough_laplacian_pullback(model: &ModelFoliation, md: &MapData, v: &PullbackSection) -> Result<PullbackSection> {
    let h = pullback_hessian_trace(model, md, v)?;
    let k = pullback_kappa(model, md, v)?;
    Ok(PullbackSection(h.0.iter().zip(&k.0).map(|(a, b)| -a + b).collect()))
}

/// Full covariant derivative of a pullback one-form,
/// `(∇_a Φ)_b = D_a Φ_b - Γ^c_{ab} Φ_c + Γ'(∂_aφ, Φ_b)`, stored `[node][a][b][k]`.
pub fn one_form_derivative(model: &ModelFoliation, md: &MapData, phi: &PullbackOneForm) -> Result<Vec<f64>> {
    check_one_form(md, phi)?;
    let q = model.q();
    let mut out = model.chart.gradient(&phi.data, q * D);
    for node in 0..md.node_count() {
        let gam = model.gamma(node);
        let p = phi.at(node);
        let tp = &md.frames[node];
        for a in 0..q {
            for b in 0..q {
                let g = tp.gamma(md.dphi_at(node, a), &p[b * D..b * D + D]);
                for k in 0..D {
                    let mut s = g[k];
                    for c in 0..q {
                        s -= gam[(c * q + a) * q + b] * p[c * D + k];
                    }
                    out[((node * q + a) * q + b) * D + k] += s;
                }
            }
        }
    }
    Ok(out)
}

/// Pullback-valued 2-form, antisymmetric components `[node][a][b][k]`;
/// the pointwise inner product carries a factor ½.
#[derive(Clone, Debug, PartialEq)]
pub struct PullbackTwoForm {
    pub q: usize,
    pub data: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum BundleForm {
    Section(PullbackSection),
    OneForm(PullbackOneForm),
    TwoForm(PullbackTwoForm),
}

impl BundleForm {
    pub fn degree(&self) -> usize {
        match self {
            BundleForm::Section(_) => 0,
            BundleForm::OneForm(_) => 1,
            BundleForm::TwoForm(_) => 2,
        }
    }
}

/// `d_∇` on degrees 0 and 1.
pub fn d_nabla(model: &ModelFoliation, md: &MapData, form: &BundleForm) -> Result<BundleForm> {
    match form {
        BundleForm::Section(v) => Ok(BundleForm::OneForm(pullback_derivative(model, md, v)?)),
        BundleForm::OneForm(phi) => {
            check_one_form(md, phi)?;
            let q = model.q();
            let dphi = model.chart.gradient(&phi.data, q * D); // [node][a][b][k]
            let mut out = vec![0.0; md.node_count() * q * q * D];
            for node in 0..md.node_count() {
                let p = phi.at(node);
                let tp = &md.frames[node];
                for a in 0..q {
                    for b in 0..q {
                        let gab = tp.gamma(md.dphi_at(node, a), &p[b * D..b * D + D]);
                        let gba = tp.gamma(md.dphi_at(node, b), &p[a * D..a * D + D]);
                        for k in 0..D {
                            out[((node * q + a) * q + b) * D + k] = dphi[((node * q + a) * q + b) * D + k]
                                - dphi[((node * q + b) * q + a) * D + k]
                                + gab[k]
                                - gba[k];
                        }
                    }
                }
            }
            Ok(BundleForm::TwoForm(PullbackTwoForm { q, data: out }))
        }
        BundleForm::TwoForm(_) => Err(Error::Degree(2)),
    }
}

/// `δ_∇`, the full-measure adjoint of `d_∇`, on degrees 1 and 2.
pub fn delta_nabla(model: &ModelFoliation, md: &MapData, form: &BundleForm) -> Result<BundleForm> {
    match form {
        BundleForm::Section(_) => Err(Error::Degree(0)),
        BundleForm::OneForm(phi) => Ok(BundleForm::Section(delta_one_form(model, md, phi, true)?)),
        BundleForm::TwoForm(eta) => Ok(BundleForm::OneForm(delta_two_form(model, md, eta)?)),
    }
}

/// `δ̃ = δ_∇ - i(κ♯)` on one-forms.
pub fn delta_tilde(model: &ModelFoliation, md: &MapData, phi: &PullbackOneForm) -> Result<PullbackSection> {
    delta_one_form(model, md, phi, false)
}

fn delta_one_form(model: &ModelFoliation, md: &MapData, phi: &PullbackOneForm, with_kappa: bool) -> Result<PullbackSection> {
    let q = model.q();
    let nab = one_form_derivative(model, md, phi)?;
    let mut out = vec![0.0; md.node_count() * D];
    for node in 0..md.node_count() {
        let gi = model.g_inv(node);
        let k = model.kappa_sharp(node);
        let p = phi.at(node);
        for c in 0..D {
            let mut s = 0.0;
            for a in 0..q {
                for b in 0..q {
                    s -= gi[a * q + b] * nab[((node * q + a) * q + b) * D + c];
                }
                if with_kappa {
                    s += k[a] * p[a * D + c];
                }
            }
            out[node * D + c] = s;
        }
    }
    Ok(PullbackSection(out))
}

fn delta_two_form(model: &ModelFoliation, md: &MapData, eta: &PullbackTwoForm) -> Result<PullbackOneForm> {
    let q = model.q();
    if eta.q != q || eta.data.len() != md.node_count() * q * q * D {
        return Err(Error::ShapeMismatch("two-form does not match the map".into()));
    }
    let w = q * q * D;
    let deta = model.chart.gradient(&eta.data, w); // [node][c][a][b][k]
    let mut out = vec![0.0; md.node_count() * q * D];
    for node in 0..md.node_count() {
        let gi = model.g_inv(node);
        let gam = model.gamma(node);
        let kap = model.kappa_sharp(node);
        let tp = &md.frames[node];
        let e = &eta.data[node * w..(node + 1) * w];
        let eab = |a: usize, b: usize| -> &[f64] { &e[(a * q + b) * D..(a * q + b) * D + D] };
        for b in 0..q {
            let mut acc = [0.0; 2];
            for a in 0..q {
                for c in 0..q {
                    let gac = gi[a * q + c];
                    if gac == 0.0 {
                        continue;
                    }
                    // (∇_c η)_{ab}
                    let g = tp.gamma(md.dphi_at(node, c), eab(a, b));
                    for k in 0..D {
                        let mut s = deta[node * q * w + c * w + (a * q + b) * D + k] + g[k];
                        for d in 0..q {
                            s -= gam[(d * q + c) * q + a] * eab(d, b)[k] + gam[(d * q + c) * q + b] * eab(a, d)[k];
                        }
                        acc[k] -= gac * s;
                    }
                }
                for k in 0..D {
                    acc[k] += kap[a] * eab(a, b)[k];
                }
            }
            out[(node * q + b) * D] = acc[0];
            out[(node * q + b) * D + 1] = acc[1];
        }
    }
    Ok(PullbackOneForm { q, data: out })
}

/// `Δ = d_∇δ_∇ + δ_∇d_∇` on degrees 0 and 1.
pub fn hodge_laplacian(model: &ModelFoliation, md: &MapData, form: &BundleForm) -> Result<BundleForm> {
    match form {
        BundleForm::Section(_) => {
            let d = d_nabla(model, md, form)?;
            delta_nabla(model, md, &d)
        }
        BundleForm::OneForm(phi) => {
            let dd = delta_nabla(model, md, &d_nabla(model, md, form)?)?;
            let BundleForm::OneForm(dd) = dd else { unreachable!() };
            let BundleForm::Section(div) = delta_nabla(model, md, form)? else { unreachable!() };
            let BundleForm::OneForm(grad) = d_nabla(model, md, &BundleForm::Section(div))? else { unreachable!() };
            Ok(BundleForm::OneForm(PullbackOneForm {
                q: phi.q,
                data: grad.data.iter().zip(&dd.data).map(|(a, b)| a + b).collect(),
            }))
        }
        BundleForm::TwoForm(_) => Err(Error::Degree(2)),
    }
}

/// Pointwise inner product of bundle-valued forms of equal degree.
pub fn form_inner(model: &ModelFoliation, md: &MapData, a: &BundleForm, b: &BundleForm) -> Result<ScalarField> {
    let q = model.q();
    let n = md.node_count();
    match (a, b) {
        (BundleForm::Section(v), BundleForm::Section(w)) => crate::section::section_inner(&md.frames, v, w),
        (BundleForm::OneForm(p), BundleForm::OneForm(r)) => crate::section::one_form_inner(model, &md.frames, p, r),
        (BundleForm::TwoForm(p), BundleForm::TwoForm(r)) => Ok(ScalarField(
            (0..n)
                .map(|node| {
                    let gi = model.g_inv(node);
                    let w = q * q * D;
                    let (x, y) = (&p.data[node * w..(node + 1) * w], &r.data[node * w..(node + 1) * w]);
                    let mut s = 0.0;
                    for a in 0..q {
                        for b in 0..q {
                            for c in 0..q {
                                for d in 0..q {
                                    let g = gi[a * q + c] * gi[b * q + d];
                                    if g != 0.0 {
                                        s += g * md.frames[node].dot(&x[(a * q + b) * D..(a * q + b) * D + D], &y[(c * q + d) * D..(c * q + d) * D + D]);
                                    }
                                }
                            }
                        }
                    }
                    0.5 * s
                })
                .collect(),
        )),
        _ => Err(Error::ShapeMismatch("forms of different degree".into())),
    }
}

/// `(A_{κ♯}Φ)_b = Φ_a (∇_b κ♯)^a`.
pub fn a_kappa_one_form(model: &ModelFoliation, phi: &PullbackOneForm) -> Result<PullbackOneForm> {
    let q = model.q();
    let ks = NormalField {
        q,
        data: model.leaf.kappa_sharp.clone(),
    };
    let nk = covariant_derivative(model, &ks)?; // [node][b][a]
    let mut out = vec![0.0; phi.data.len()];
    for node in 0..model.node_count() {
        let p = phi.at(node);
        for b in 0..q {
            for k in 0..D {
                out[(node * q + b) * D + k] = (0..q).map(|a| p[a * D + k] * nk[(node * q + b) * q + a]).sum();
            }
        }
    }
    Ok(PullbackOneForm { q, data: out })
}

/// Curvature term of the Weitzenböck formula on pullback one-forms,
/// `F(Φ)_c = Φ_a ρ^a_c + g^{bd} R'(∂_bφ, ∂_cφ) Φ_d`.
pub fn weitzenbock_curvature(model: &ModelFoliation, md: &MapData, phi: &PullbackOneForm) -> Result<PullbackOneForm> {
    check_one_form(md, phi)?;
    let q = model.q();
    let mut out = vec![0.0; phi.data.len()];
    for node in 0..md.node_count() {
        let rho = model.ricci(node);
        let gi = model.g_inv(node);
        let p = phi.at(node);
        let tp = &md.frames[node];
        for c in 0..q {
            let mut acc = [0.0; 2];
            for a in 0..q {
                for k in 0..D {
                    acc[k] += p[a * D + k] * rho[a * q + c];
                }
            }
            for b in 0..q {
                for d in 0..q {
                    let g = gi[b * q + d];
                    if g == 0.0 {
                        continue;
                    }
                    let r = tp.curv(md.dphi_at(node, b), md.dphi_at(node, c), &p[d * D..d * D + D]);
                    acc[0] += g * r[0];
                    acc[1] += g * r[1];
                }
            }
            out[(node * q + c) * D] = acc[0];
            out[(node * q + c) * D + 1] = acc[1];
        }
    }
    Ok(PullbackOneForm { q, data: out })
}

/// Nodewise sides of `½Δ_B|Φ|² = ⟨ΔΦ,Φ⟩ - |∇_trΦ|² - ⟨A_{κ♯}Φ,Φ⟩ - ⟨F(Φ),Φ⟩`.
#[derive(Clone, Debug)]
pub struct NodewiseCheck {
    pub lhs: Vec<f64>,
    pub rhs: Vec<f64>,
}

impl NodewiseCheck {
    pub fn residual(&self) -> f64 {
        self.lhs.iter().zip(&self.rhs).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn scale(&self) -> f64 {
        self.lhs.iter().chain(&self.rhs).fold(0.0, |m, v| m.max(v.abs()))
    }
}

pub fn weitzenbock_check(model: &ModelFoliation, md: &MapData, phi: &PullbackOneForm) -> Result<NodewiseCheck> {
    let q = model.q();
    let form = BundleForm::OneForm(phi.clone());
    let norm2 = form_inner(model, md, &form, &form)?;
    let lhs: Vec<f64> = basic_laplacian(model, &norm2).0.iter().map(|v| 0.5 * v).collect();

    let lap = hodge_laplacian(model, md, &form)?;
    let lap_phi = form_inner(model, md, &lap, &form)?;
    let nab = one_form_derivative(model, md, phi)?;
    let ak = BundleForm::OneForm(a_kappa_one_form(model, phi)?);
    let ak_phi = form_inner(model, md, &ak, &form)?;
    let f = BundleForm::OneForm(weitzenbock_curvature(model, md, phi)?);
    let f_phi = form_inner(model, md, &f, &form)?;
    let rhs = (0..md.node_count())
        .map(|node| {
            let gi = model.g_inv(node);
            let tp = &md.frames[node];
            let at = |a: usize, b: usize| -> &[f64] { &nab[((node * q + a) * q + b) * D..((node * q + a) * q + b) * D + D] };
            let mut grad2 = 0.0;
            for a in 0..q {
                for b in 0..q {
                    for c in 0..q {
                        for d in 0..q {
                            let g = gi[a * q + c] * gi[b * q + d];
                            if g != 0.0 {
                                grad2 += g * tp.dot(at(a, b), at(c, d));
                            }
                        }
                    }
                }
            }
            lap_phi.0[node] - grad2 - ak_phi.0[node] - f_phi.0[node]
        })
        .collect();
    Ok(NodewiseCheck { lhs, rhs })
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;
    use crate::manifold::{build_model, build_target, ModelSpec};
    use crate::section::{random_normal, random_scalar};

    fn model(name: &str, eps: f64, res: usize) -> ModelFoliation {
        build_model(&ModelSpec::new(name, eps, res)).unwrap()
    }

    #[test]
    fn quadrature_of_trigonometric_integrands() {
        let m = model("product-flat-torus", 0.0, 32);
        let one = vec![1.0; m.node_count()];
        assert!((integrate(&m, &one, Measure::Transversal) - 4.0 * PI * PI).abs() < 1e-12);
        let c2: Vec<f64> = (0..m.node_count()).map(|n| m.chart.coord(n, 0).cos().powi(2)).collect();
        assert!((integrate(&m, &c2, Measure::Transversal) - 2.0 * PI * PI).abs() < 1e-12);
        let w = model("warped-torus", 0.3, 32);
        assert!((integrate(&w, &one, Measure::Full) - 4.0 * PI * PI).abs() < 1e-12);
    }

    #[test]
    fn covariant_derivative_of_a_sine_field() {
        let m = model("product-flat-torus", 0.0, 64);
        let y = NormalField::from_fn(&m, |x, out| {
            out[0] = x[0].sin();
            out[1] = 0.0;
        });
        let nab = covariant_derivative(&m, &y).unwrap();
        for n in 0..m.node_count() {
            assert!((nab[n * 4] - m.chart.coord(n, 0).cos()).abs() < 1e-5);
        }
        let c = NormalField::constant(&m, &[1.0, -2.0]);
        assert!(covariant_derivative(&m, &c).unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn sine_field_is_a_rough_laplacian_eigenfield() {
        let m = model("product-flat-torus", 0.0, 32);
        let y = NormalField::from_fn(&m, |x, out| {
            out[0] = x[0].sin();
            out[1] = 0.0;
        });
        let l = rough_laplacian_normal(&m, &y).unwrap();
        for (a, b) in l.data.iter().zip(&y.data) {
            assert!((a - b).abs() < 1e-4);
        }
    }

    #[test]
    fn a_y_of_a_shear() {
        let m = model("product-flat-torus", 0.0, 64);
        let y = NormalField::from_fn(&m, |x, out| {
            out[0] = 0.0;
            out[1] = x[0].sin();
        });
        let e1 = NormalField::constant(&m, &[1.0, 0.0]);
        let a = a_y(&m, &y, &e1).unwrap();
        for n in 0..m.node_count() {
            assert!(a.at(n)[0].abs() < 1e-15);
            assert!((a.at(n)[1] + m.chart.coord(n, 0).cos()).abs() < 1e-5);
        }
    }

    #[test]
    fn basic_laplacian_is_self_adjoint_in_the_full_measure() {
        let m = model("warped-torus", 0.3, 32);
        let f = random_scalar(&m, 1, 4, 1.0).unwrap();
        let g = random_scalar(&m, 2, 4, 1.0).unwrap();
        let lf = basic_laplacian(&m, &f);
        let lg = basic_laplacian(&m, &g);
        let fg: Vec<f64> = f.0.iter().zip(&lg.0).map(|(a, b)| a * b).collect();
        let gf: Vec<f64> = g.0.iter().zip(&lf.0).map(|(a, b)| a * b).collect();
        let d = integrate(&m, &fg, Measure::Full) - integrate(&m, &gf, Measure::Full);
        assert!(d.abs() < 1e-10, "{d}");
    }

    #[test]
    fn divergence_theorem_on_the_flat_torus() {
        let m = model("product-flat-torus", 0.0, 32);
        let y = random_normal(&m, 7, 3, 1.0).unwrap();
        assert!(divergence_theorem(&m, &y).unwrap().residual < 1e-12);
    }

    #[test]
    fn degree_caps() {
        let m = model("product-flat-torus", 0.0, 8);
        let t = build_target("flat-torus", None).unwrap();
        let map = MapField::identity(&m, &t).unwrap();
        let md = MapData::new(&m, &map).unwrap();
        let two = BundleForm::TwoForm(PullbackTwoForm {
            q: 2,
            data: vec![0.0; 64 * 8],
        });
        assert!(matches!(d_nabla(&m, &md, &two), Err(Error::Degree(2))));
        assert!(matches!(hodge_laplacian(&m, &md, &two), Err(Error::Degree(2))));
        let zero = BundleForm::Section(PullbackSection::zeros(64));
        assert!(matches!(delta_nabla(&m, &md, &zero), Err(Error::Degree(0))));
    }
}
