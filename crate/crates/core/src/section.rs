//! Fields on the source grid: basic functions, normal fields, maps into a
//! target chart, sections of the pulled-back normal bundle, and straight-line
//! variation paths.

use std::f64::consts::PI;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::target::{Point, TargetPoint};
use crate::manifold::{BaseChart, ModelFoliation, TargetGeometry, TARGET_DIM};

const D: usize = TARGET_DIM;

/// Basic function: one value per node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalarField(pub Vec<f64>);

/// Section of the normal bundle: `q` chart components per node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalField {
    pub q: usize,
    pub data: Vec<f64>,
}

/// Section of `φ⁻¹Q'`: two target-chart components per node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PullbackSection(pub Vec<f64>);

/// Element of `Q* ⊗ φ⁻¹Q'`, stored `[node][a][k]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PullbackOneForm {
    pub q: usize,
    pub data: Vec<f64>,
}

impl ScalarField {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn max_abs(&self) -> f64 {
        max_abs(&self.0)
    }
}

impl NormalField {
    pub fn zeros(q: usize, n: usize) -> Self {
        NormalField {
            q,
            data: vec![0.0; q * n],
        }
    }

    /// Constant field with chart components `c`.
    pub fn constant(model: &ModelFoliation, c: &[f64]) -> Self {
        let n = model.node_count();
        NormalField {
            q: c.len(),
            data: (0..n).flat_map(|_| c.iter().copied()).collect(),
        }
    }

    pub fn from_fn(model: &ModelFoliation, f: impl Fn(&[f64], &mut [f64])) -> Self {
        let q = model.q();
        let n = model.node_count();
        let mut data = vec![0.0; n * q];
        for node in 0..n {
            f(model.chart.point(node), &mut data[node * q..(node + 1) * q]);
        }
        NormalField { q, data }
    }

    #[inline]
    pub fn at(&self, node: usize) -> &[f64] {
        &self.data[node * self.q..(node + 1) * self.q]
    }

    pub fn node_count(&self) -> usize {
        self.data.len() / self.q
    }

    pub fn max_abs(&self) -> f64 {
        max_abs(&self.data)
    }
}

impl PullbackSection {
    pub fn zeros(n: usize) -> Self {
        PullbackSection(vec![0.0; n * D])
    }

    pub fn constant(n: usize, c: [f64; 2]) -> Self {
        PullbackSection((0..n).flat_map(|_| c).collect())
    }

    pub fn from_fn(model: &ModelFoliation, f: impl Fn(&[f64]) -> [f64; 2]) -> Self {
        let n = model.node_count();
        PullbackSection((0..n).flat_map(|node| f(model.chart.point(node))).collect())
    }

    #[inline]
    pub fn at(&self, node: usize) -> &[f64] {
        &self.0[node * D..(node + 1) * D]
    }

    pub fn node_count(&self) -> usize {
        self.0.len() / D
    }

    pub fn max_abs(&self) -> f64 {
        max_abs(&self.0)
    }

    pub fn scaled(&self, s: f64) -> Self {
        PullbackSection(self.0.iter().map(|v| v * s).collect())
    }

    pub fn add(&self, other: &PullbackSection) -> Self {
        PullbackSection(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &PullbackSection) -> Self {
        PullbackSection(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }
}

impl PullbackOneForm {
    pub fn zeros(q: usize, n: usize) -> Self {
        PullbackOneForm {
            q,
            data: vec![0.0; n * q * D],
        }
    }

    /// Components `Φ_a` at a node, `[a][k]`.
    #[inline]
    pub fn at(&self, node: usize) -> &[f64] {
        let w = self.q * D;
        &self.data[node * w..(node + 1) * w]
    }

    pub fn node_count(&self) -> usize {
        self.data.len() / (self.q * D)
    }

    pub fn max_abs(&self) -> f64 {
        max_abs(&self.data)
    }
}

/// Induced base map of a foliated map: target chart coordinates per node.
///
/// Maps into the flat torus are stored as lifts; `winding[k * q + a]` counts how
/// many periods component `k` gains across one period of axis `a`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapField {
    pub target: TargetGeometry,
    pub q: usize,
    pub values: Vec<f64>,
    pub winding: Vec<i64>,
}

impl MapField {
    /// Validate shapes and the chart domain.
    pub fn new(target: TargetGeometry, q: usize, values: Vec<f64>, winding: Vec<i64>) -> Result<Self> {
        if !values.len().is_multiple_of(D) {
            return Err(Error::ShapeMismatch(format!(
                "map values have length {}, not a multiple of {D}",
                values.len()
            )));
        }
        if winding.len() != D * q {
            return Err(Error::ShapeMismatch(format!(
                "winding has {} entries, expected {}",
                winding.len(),
                D * q
            )));
        }
        if !target.is_periodic() && winding.iter().any(|&w| w != 0) {
            return Err(Error::ShapeMismatch(format!(
                "{} is not periodic, so maps cannot wind",
                target.name()
            )));
        }
        let m = MapField {
            target,
            q,
            values,
            winding,
        };
        m.check_domain()?;
        Ok(m)
    }

    pub fn constant(model: &ModelFoliation, target: &TargetGeometry, u: [f64; 2]) -> Result<Self> {
        let n = model.node_count();
        Self::new(target.clone(), model.q(), (0..n).flat_map(|_| u).collect(), vec![0; D * model.q()])
    }

    /// `u = A x + b` into the flat torus; `A` (row-major, 2×q) must be integral.
    pub fn linear(model: &ModelFoliation, target: &TargetGeometry, a: &[i64], b: [f64; 2]) -> Result<Self> {
        let q = model.q();
        if a.len() != D * q {
            return Err(Error::ShapeMismatch(format!(
                "linear map matrix has {} entries, expected {}",
                a.len(),
                D * q
            )));
        }
        if !target.is_periodic() && a.iter().any(|&v| v != 0) {
            return Err(Error::ShapeMismatch(format!(
                "non-constant linear maps need a periodic target, got {}",
                target.name()
            )));
        }
        let n = model.node_count();
        let mut values = vec![0.0; n * D];
        for node in 0..n {
            let x = model.chart.point(node);
            for k in 0..D {
                values[node * D + k] = b[k] + (0..q).map(|c| a[k * q + c] as f64 * x[c]).sum::<f64>();
            }
        }
        Self::new(target.clone(), q, values, a.to_vec())
    }

    /// Identity of the flat torus (codimension 2 only).
    pub fn identity(model: &ModelFoliation, target: &TargetGeometry) -> Result<Self> {
        if model.q() != D {
            return Err(Error::ShapeMismatch("identity map needs codimension 2".into()));
        }
        Self::linear(model, target, &[1, 0, 0, 1], [0.0, 0.0])
    }

    pub fn from_fn(model: &ModelFoliation, target: &TargetGeometry, winding: Vec<i64>, f: impl Fn(&[f64]) -> [f64; 2]) -> Result<Self> {
        let n = model.node_count();
        let values = (0..n).flat_map(|node| f(model.chart.point(node))).collect();
        Self::new(target.clone(), model.q(), values, winding)
    }

    #[inline]
    pub fn at(&self, node: usize) -> Point {
        [self.values[node * D], self.values[node * D + 1]]
    }

    pub fn node_count(&self) -> usize {
        self.values.len() / D
    }

    /// Per-period jumps `2π · winding`, indexed like `winding`.
    pub fn jumps(&self) -> Vec<f64> {
        self.winding.iter().map(|&w| 2.0 * PI * w as f64).collect()
    }

    pub fn check_domain(&self) -> Result<()> {
        for node in 0..self.node_count() {
            self.target.check(node, self.at(node))?;
        }
        Ok(())
    }

    /// Largest `|u|` over the grid.
    pub fn max_norm(&self) -> f64 {
        (0..self.node_count())
            .map(|n| crate::manifold::target::norm(self.at(n)))
            .fold(0.0, f64::max)
    }

    /// Target geometry at every map value.
    pub fn frames(&self) -> Vec<TargetPoint> {
        (0..self.node_count()).map(|n| self.target.frame(self.at(n))).collect()
    }

    /// `φ + V` in chart coordinates, keeping the winding.
    pub fn displaced(&self, v: &PullbackSection) -> Result<Self> {
        if v.0.len() != self.values.len() {
            return Err(Error::ShapeMismatch(format!(
                "section has {} entries, map has {}",
                v.0.len(),
                self.values.len()
            )));
        }
        let values = self.values.iter().zip(&v.0).map(|(a, b)| a + b).collect();
        let m = MapField {
            target: self.target.clone(),
            q: self.q,
            values,
            winding: self.winding.clone(),
        };
        m.check_domain()?;
        Ok(m)
    }
}

/// `φ_{t,s} = φ + tV + sW` in target chart coordinates.
#[derive(Clone, Debug)]
pub struct VariationPath {
    pub base: MapField,
    pub first: PullbackSection,
    pub second: Option<PullbackSection>,
}

impl VariationPath {
    pub fn new(base: MapField, first: PullbackSection) -> Result<Self> {
        check_len(&base, &first)?;
        Ok(VariationPath {
            base,
            first,
            second: None,
        })
    }

    pub fn two_parameter(base: MapField, first: PullbackSection, second: PullbackSection) -> Result<Self> {
        check_len(&base, &first)?;
        check_len(&base, &second)?;
        Ok(VariationPath {
            base,
            first,
            second: Some(second),
        })
    }

    pub fn eval(&self, t: f64, s: f64) -> Result<MapField> {
        if t == 0.0 && s == 0.0 {
            return Ok(self.base.clone());
        }
        let mut values = self.base.values.clone();
        for (i, v) in values.iter_mut().enumerate() {
            let mut d = t * self.first.0[i];
            if let Some(w) = &self.second {
                d += s * w.0[i];
            }
            *v += d;
        }
        let m = MapField {
            target: self.base.target.clone(),
            q: self.base.q,
            values,
            winding: self.base.winding.clone(),
        };
        m.check_domain()?;
        Ok(m)
    }

    /// `∇_{∂t} ∂_s φ` at `(0,0)`: `Γ'(V, W)` (with `W = V` for one-parameter paths).
    pub fn acceleration(&self) -> PullbackSection {
        let w = self.second.as_ref().unwrap_or(&self.first);
        let n = self.base.node_count();
        let mut out = vec![0.0; n * D];
        for node in 0..n {
            let gam = self.base.target.christoffel(self.base.at(node));
            let (v, wv) = (self.first.at(node), w.at(node));
            for k in 0..D {
                let mut s = 0.0;
                for i in 0..D {
                    for j in 0..D {
                        s += gam[k][i][j] * v[i] * wv[j];
                    }
                }
                out[node * D + k] = s;
            }
        }
        PullbackSection(out)
    }
}

fn check_len(base: &MapField, v: &PullbackSection) -> Result<()> {
    if v.0.len() != base.values.len() {
        return Err(Error::ShapeMismatch(format!(
            "variation field has {} entries, map has {}",
            v.0.len(),
            base.values.len()
        )));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FieldKind {
    Scalar,
    Normal,
    Pullback,
}

/// Wave vectors `k` with `0 < |k|_∞ ≤ bandlimit`, one from each `±k` pair,
/// in a fixed order.
fn half_lattice(q: usize, bandlimit: usize) -> Vec<Vec<i64>> {
    let b = bandlimit as i64;
    let mut out = Vec::new();
    if q == 1 {
        for k in 1..=b {
            out.push(vec![k]);
        }
    } else {
        for k1 in 0..=b {
            for k0 in -b..=b {
                if k1 == 0 && k0 <= 0 {
                    continue;
                }
                out.push(vec![k0, k1]);
            }
        }
    }
    out
}

/// Band-limited zero-mean trigonometric polynomial per component, each mode
/// carrying `amplitude · U(-1,1) / (1 + |k|²)` cosine and sine coefficients.
/// Coefficients depend only on `(seed, q, bandlimit, components)`, so the same
/// field can be sampled at any resolution.
pub fn random_components(chart: &BaseChart, ncomp: usize, seed: u64, bandlimit: usize, amplitude: f64) -> Result<Vec<f64>> {
    let res = chart.dims().iter().copied().min().unwrap_or(0);
    if 2 * bandlimit >= res {
        return Err(Error::BandlimitTooHigh {
            bandlimit,
            limit: res / 2,
        });
    }
    let q = chart.q();
    let modes = half_lattice(q, bandlimit);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coeffs = Vec::with_capacity(ncomp * modes.len());
    for _ in 0..ncomp {
        for k in &modes {
            let k2: i64 = k.iter().map(|v| v * v).sum();
            let scale = amplitude / (1.0 + k2 as f64);
            let a: f64 = rng.random_range(-1.0..1.0);
            let b: f64 = rng.random_range(-1.0..1.0);
            coeffs.push((scale * a, scale * b));
        }
    }
    let n = chart.node_count();
    let mut out = vec![0.0; n * ncomp];
    for node in 0..n {
        let x = chart.point(node);
        for (mi, k) in modes.iter().enumerate() {
            let phase: f64 = k.iter().zip(x).map(|(&kk, &xx)| kk as f64 * xx).sum();
            let (s, c) = phase.sin_cos();
            for comp in 0..ncomp {
                let (a, b) = coeffs[comp * modes.len() + mi];
                out[node * ncomp + comp] += a * c + b * s;
            }
        }
    }
    Ok(out)
}

/// Seeded random field of the requested kind.
pub enum RandomField {
    Scalar(ScalarField),
    Normal(NormalField),
    Pullback(PullbackSection),
}

pub fn random_field(kind: FieldKind, model: &ModelFoliation, seed: u64, bandlimit: usize, amplitude: f64) -> Result<RandomField> {
    let chart = &model.chart;
    Ok(match kind {
        FieldKind::Scalar => RandomField::Scalar(ScalarField(random_components(chart, 1, seed, bandlimit, amplitude)?)),
        FieldKind::Normal => RandomField::Normal(NormalField {
            q: model.q(),
            data: random_components(chart, model.q(), seed, bandlimit, amplitude)?,
        }),
        FieldKind::Pullback => {
            RandomField::Pullback(PullbackSection(random_components(chart, D, seed, bandlimit, amplitude)?))
        }
    })
}

pub fn random_scalar(model: &ModelFoliation, seed: u64, bandlimit: usize, amplitude: f64) -> Result<ScalarField> {
    Ok(ScalarField(random_components(&model.chart, 1, seed, bandlimit, amplitude)?))
}

pub fn random_normal(model: &ModelFoliation, seed: u64, bandlimit: usize, amplitude: f64) -> Result<NormalField> {
    Ok(NormalField {
        q: model.q(),
        data: random_components(&model.chart, model.q(), seed, bandlimit, amplitude)?,
    })
}

pub fn random_section(model: &ModelFoliation, seed: u64, bandlimit: usize, amplitude: f64) -> Result<PullbackSection> {
    Ok(PullbackSection(random_components(&model.chart, D, seed, bandlimit, amplitude)?))
}

/// `base + random perturbation`, with the same winding as `base`.
pub fn perturbed_map(model: &ModelFoliation, base: &MapField, seed: u64, bandlimit: usize, amplitude: f64) -> Result<MapField> {
    let v = random_section(model, seed, bandlimit, amplitude)?;
    base.displaced(&v)
}

/// Pointwise `g_Q(Y, Z)`.
pub fn normal_inner(model: &ModelFoliation, y: &NormalField, z: &NormalField) -> Result<ScalarField> {
    let q = model.q();
    if y.q != q || z.q != q || y.data.len() != z.data.len() || y.node_count() != model.node_count() {
        return Err(Error::ShapeMismatch("normal fields do not match the model".into()));
    }
    Ok(ScalarField(
        (0..model.node_count())
            .map(|node| {
                let g = model.g(node);
                let (a, b) = (y.at(node), z.at(node));
                let mut s = 0.0;
                for i in 0..q {
                    for j in 0..q {
                        s += g[i * q + j] * a[i] * b[j];
                    }
                }
                s
            })
            .collect(),
    ))
}

/// Pointwise `g_{Q'}(φ(x))(V, W)`.
pub fn section_inner(frames: &[TargetPoint], v: &PullbackSection, w: &PullbackSection) -> Result<ScalarField> {
    if v.0.len() != w.0.len() || v.node_count() != frames.len() {
        return Err(Error::ShapeMismatch("pullback sections do not match the map".into()));
    }
    Ok(ScalarField(
        frames.iter().enumerate().map(|(n, f)| f.dot(v.at(n), w.at(n))).collect(),
    ))
}

/// Pointwise `g^{ab} g'(Φ_a, Ψ_b)`.
pub fn one_form_inner(model: &ModelFoliation, frames: &[TargetPoint], phi: &PullbackOneForm, psi: &PullbackOneForm) -> Result<ScalarField> {
    let q = model.q();
    if phi.q != q || psi.q != q || phi.data.len() != psi.data.len() || phi.node_count() != frames.len() {
        return Err(Error::ShapeMismatch("one-forms do not match the model and map".into()));
    }
    Ok(ScalarField(
        (0..frames.len())
            .map(|node| {
                let gi = model.g_inv(node);
                let (a, b) = (phi.at(node), psi.at(node));
                let mut s = 0.0;
                for i in 0..q {
                    for j in 0..q {
                        s += gi[i * q + j] * frames[node].dot(&a[i * D..i * D + D], &b[j * D..j * D + D]);
                    }
                }
                s
            })
            .collect(),
    ))
}

/// CSV with columns `node, x0[, x1], c0, c1, ...`.
pub fn write_field_csv<W: Write>(out: W, chart: &BaseChart, names: &[&str], data: &[f64]) -> Result<()> {
    let ncomp = names.len();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["node".to_string()];
    header.extend((0..chart.q()).map(|a| format!("x{a}")));
    header.extend(names.iter().map(|s| s.to_string()));
    w.write_record(&header)?;
    for node in 0..chart.node_count() {
        let mut row = vec![node.to_string()];
        row.extend(chart.point(node).iter().map(|v| format!("{v:.17e}")));
        row.extend(data[node * ncomp..(node + 1) * ncomp].iter().map(|v| format!("{v:.17e}")));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Read the component columns back from [`write_field_csv`] output.
pub fn read_field_csv<R: std::io::Read>(input: R, q: usize) -> Result<Vec<f64>> {
    let mut r = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        for field in rec.iter().skip(1 + q) {
            out.push(
                field
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Config(format!("bad number `{field}` in field file: {e}")))?,
            );
        }
    }
    Ok(out)
}

pub(crate) fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::{build_model, build_target, ModelSpec};

    fn flat(res: usize) -> ModelFoliation {
        build_model(&ModelSpec::new("product-flat-torus", 0.0, res)).unwrap()
    }

    #[test]
    fn path_at_origin_is_the_base_map() {
        let m = flat(16);
        let t = build_target("sphere-stereo", Some(1.0)).unwrap();
        let base = MapField::from_fn(&m, &t, vec![0; 4], |x| [0.5 * x[0].cos(), 0.3 * x[1].sin()]).unwrap();
        let p = VariationPath::new(base.clone(), random_section(&m, 3, 2, 0.2).unwrap()).unwrap();
        assert_eq!(p.eval(0.0, 0.0).unwrap(), base);
    }

    #[test]
    fn flat_translation() {
        let m = flat(16);
        let t = build_target("flat-torus", None).unwrap();
        let base = MapField::identity(&m, &t).unwrap();
        let v = PullbackSection::constant(m.node_count(), [0.25, -1.0]);
        let moved = VariationPath::new(base.clone(), v).unwrap().eval(2.0, 0.0).unwrap();
        for n in 0..m.node_count() {
            assert_eq!(moved.at(n)[0], base.at(n)[0] + 0.5);
            assert_eq!(moved.at(n)[1], base.at(n)[1] - 2.0);
        }
        assert_eq!(moved.winding, base.winding);
    }

    #[test]
    fn chart_exit_names_the_node() {
        let m = flat(8);
        let t = build_target("hyperbolic-disk", Some(-1.0)).unwrap();
        let base = MapField::constant(&m, &t, [0.0, 0.0]).unwrap();
        let mut v = PullbackSection::zeros(m.node_count());
        v.0[2 * 5] = 2.0;
        let err = VariationPath::new(base, v).unwrap().eval(1.0, 0.0).unwrap_err();
        assert!(matches!(err, Error::ChartDomain { node: 5, .. }));
    }

    #[test]
    fn random_fields_are_reproducible_and_zero_mean() {
        let m = flat(32);
        let a = random_scalar(&m, 7, 3, 1.0).unwrap();
        let b = random_scalar(&m, 7, 3, 1.0).unwrap();
        assert_eq!(a, b);
        let mean: f64 = a.0.iter().sum::<f64>() / a.len() as f64;
        assert!(mean.abs() < 1e-14);
        assert!(matches!(random_scalar(&m, 7, 16, 1.0), Err(Error::BandlimitTooHigh { .. })));
    }

    #[test]
    fn random_fields_refine_exactly() {
        let coarse = flat(32);
        let fine = flat(64);
        let a = random_normal(&coarse, 11, 3, 1.0).unwrap();
        let b = random_normal(&fine, 11, 3, 1.0).unwrap();
        for i in 0..32 {
            for j in 0..32 {
                let nc = coarse.chart.node_at(&[i, j]);
                let nf = fine.chart.node_at(&[2 * i, 2 * j]);
                for c in 0..2 {
                    assert!((a.at(nc)[c] - b.at(nf)[c]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn identity_has_squared_norm_two() {
        let m = flat(16);
        let t = build_target("flat-torus", None).unwrap();
        let v = PullbackSection::constant(m.node_count(), [1.0, 0.0]);
        let id = MapField::identity(&m, &t).unwrap();
        let s = section_inner(&id.frames(), &v, &v).unwrap();
        assert!(s.0.iter().all(|&x| x == 1.0));
        let mut dphi = PullbackOneForm::zeros(2, m.node_count());
        for n in 0..m.node_count() {
            dphi.data[n * 4] = 1.0;
            dphi.data[n * 4 + 3] = 1.0;
        }
        let s = one_form_inner(&m, &id.frames(), &dphi, &dphi).unwrap();
        assert!(s.0.iter().all(|&x| x == 2.0));
    }

    #[test]
    fn rejects_winding_into_curved_targets() {
        let m = flat(8);
        let t = build_target("sphere-stereo", Some(1.0)).unwrap();
        assert!(MapField::linear(&m, &t, &[1, 0, 0, 1], [0.0, 0.0]).is_err());
        assert!(MapField::linear(&m, &t, &[0, 0], [0.0, 0.0]).is_err());
    }

    #[test]
    fn csv_roundtrip() {
        let m = flat(8);
        let v = random_section(&m, 1, 2, 1.0).unwrap();
        let mut buf = Vec::new();
        write_field_csv(&mut buf, &m.chart, &["v0", "v1"], &v.0).unwrap();
        let back = read_field_csv(&buf[..], 2).unwrap();
        assert_eq!(back, v.0);
    }
}
