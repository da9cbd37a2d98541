//! Assembly of the Jacobi quadratic form and its symmetric eigenproblem.
//!
//! The matrix is recovered by probing: `J` couples nodes within a box of
//! radius `R`, so nodes spaced at least `2R + 1` apart share a probe.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calculus::MapData;
use crate::error::{Error, Result};
use crate::manifold::{ModelFoliation, TARGET_DIM};
use crate::section::{MapField, PullbackSection};
use crate::tension::jacobi_apply;

const D: usize = TARGET_DIM;

pub const DENSE_CAP: usize = 8192;
/// Ritz residual bound, relative to the largest Ritz value.
pub const LANCZOS_RESIDUAL: f64 = 1e-8;
pub const LANCZOS_MAX_BASIS: usize = 4000;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EigenSolver {
    #[default]
    Dense,
    Lanczos,
}

/// Sparse row-compressed matrix.
#[derive(Clone, Debug)]
pub struct Csr {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl Csr {
    fn from_rows(n: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        let mut row_ptr = vec![0];
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        for mut r in rows {
            r.sort_by_key(|e| e.0);
            for (c, v) in r {
                cols.push(c);
                vals.push(v);
            }
            row_ptr.push(cols.len());
        }
        Csr { n, row_ptr, cols, vals }
    }

    pub fn mul(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = (self.row_ptr[i]..self.row_ptr[i + 1]).map(|p| self.vals[p] * x[self.cols[p]]).sum();
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = &self.cols[self.row_ptr[i]..self.row_ptr[i + 1]];
        match r.binary_search(&j) {
            Ok(p) => self.vals[self.row_ptr[i] + p],
            Err(_) => 0.0,
        }
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }
}

/// `M_ij = ⟨J^T_φ(e_j), e_i⟩` in the transversal measure, symmetrized, together
/// with the per-node factors of the mass matrix.
#[derive(Clone, Debug)]
pub struct HessianAssembly {
    pub n: usize,
    pub matrix: Csr,
    /// `max |M - Mᵀ|`.
    pub asymmetry: f64,
    pub max_entry: f64,
    /// Lower Cholesky factor of `w_n g'(φ_n)` per node, row-major 2×2.
    mass_chol: Vec<[f64; 4]>,
}

fn stencil_reach(model: &ModelFoliation) -> usize {
    let r = model.chart.order().radius();
    if model.q() > 1 {
        2 * r
    } else {
        r
    }
}

fn probe_spacing(dim: usize, reach: usize) -> usize {
    (2 * reach + 1..=dim).find(|s| dim.is_multiple_of(*s)).unwrap_or(dim)
}

/// Source coordinate within reach of `x` in the residue class `off` (mod `s`).
fn probe_source(x: usize, off: usize, s: usize, dim: usize, reach: usize) -> Option<usize> {
    let d = (x + s - off % s) % s;
    if s == dim {
        return Some(off);
    }
    if d <= reach {
        Some((x + dim - d) % dim)
    } else if s - d <= reach {
        Some((x + s - d) % dim)
    } else {
        None
    }
}

pub fn assemble_jacobi(model: &ModelFoliation, map: &MapField) -> Result<HessianAssembly> {
    let md = MapData::new(model, map)?;
    let q = model.q();
    let nodes = model.node_count();
    let n = nodes * D;
    let chart = &model.chart;
    let dims = chart.dims().to_vec();
    let reach = stencil_reach(model);
    let spacing: Vec<usize> = dims.iter().map(|&d| probe_spacing(d, reach)).collect();
    let colours: usize = spacing.iter().product();

    let probes: Vec<(usize, usize)> = (0..colours).flat_map(|c| (0..D).map(move |k| (c, k))).collect();
    let blocks: Vec<Vec<(usize, usize, f64)>> = probes
        .par_iter()
        .map(|&(c, k)| -> Result<Vec<(usize, usize, f64)>> {
            let mut off = vec![0; q];
            let mut rest = c;
            for a in 0..q {
                off[a] = rest % spacing[a];
                rest /= spacing[a];
            }
            let mut v = PullbackSection::zeros(nodes);
            for node in 0..nodes {
                if (0..q).all(|a| chart.index(node, a) % spacing[a] == off[a]) {
                    v.0[node * D + k] = 1.0;
                }
            }
            let jv = jacobi_apply(model, &md, &v)?;
            let mut out = Vec::new();
            let mut idx = vec![0; q];
            for m in 0..nodes {
                let mut hit = true;
                for a in 0..q {
                    match probe_source(chart.index(m, a), off[a], spacing[a], dims[a], reach) {
                        Some(s) => idx[a] = s,
                        None => hit = false,
                    }
                }
                if !hit {
                    continue;
                }
                let src = chart.node_at(&idx);
                for kk in 0..D {
                    let val = jv.0[m * D + kk];
                    if val != 0.0 {
                        out.push((m * D + kk, src * D + k, val));
                    }
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    // A_ij = (J e_j)_i; M = B A with B the block mass matrix.
    let mut a_rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for b in blocks {
        for (i, j, v) in b {
            a_rows[i].push((j, v));
        }
    }
    let mut m_rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for node in 0..nodes {
        let w = model.weight(node);
        let g = md.frames[node].metric;
        for k in 0..D {
            let mut acc: std::collections::BTreeMap<usize, f64> = Default::default();
            for l in 0..D {
                let b = w * g[k][l];
                for &(j, v) in &a_rows[node * D + l] {
                    *acc.entry(j).or_insert(0.0) += b * v;
                }
            }
            m_rows[node * D + k] = acc.into_iter().collect();
        }
    }
    let raw = Csr::from_rows(n, m_rows);
    let mut asymmetry = 0.0f64;
    let mut max_entry = 0.0f64;
    let mut sym: Vec<std::collections::BTreeMap<usize, f64>> = vec![Default::default(); n];
    for i in 0..n {
        for p in raw.row_ptr[i]..raw.row_ptr[i + 1] {
            let (j, mij) = (raw.cols[p], raw.vals[p]);
            asymmetry = asymmetry.max((mij - raw.get(j, i)).abs());
            max_entry = max_entry.max(mij.abs());
            *sym[i].entry(j).or_insert(0.0) += 0.5 * mij;
            *sym[j].entry(i).or_insert(0.0) += 0.5 * mij;
        }
    }
    let sym_rows: Vec<Vec<(usize, f64)>> = sym.into_iter().map(|r| r.into_iter().collect()).collect();
    let mass_chol = (0..nodes)
        .map(|node| {
            let w = model.weight(node);
            let g = md.frames[node].metric;
            let l00 = (w * g[0][0]).sqrt();
            let l10 = w * g[1][0] / l00;
            let l11 = (w * g[1][1] - l10 * l10).sqrt();
            [l00, 0.0, l10, l11]
        })
        .collect();
    Ok(HessianAssembly {
        n,
        matrix: Csr::from_rows(n, sym_rows),
        asymmetry,
        max_entry,
        mass_chol,
    })
}

impl HessianAssembly {
    /// Relative asymmetry `max|M - Mᵀ| / max|M|`.
    pub fn relative_asymmetry(&self) -> f64 {
        if self.max_entry == 0.0 {
            0.0
        } else {
            self.asymmetry / self.max_entry
        }
    }

    fn solve_lower(&self, x: &mut [f64]) {
        for (node, l) in self.mass_chol.iter().enumerate() {
            let y0 = x[node * D] / l[0];
            let y1 = (x[node * D + 1] - l[2] * y0) / l[3];
            x[node * D] = y0;
            x[node * D + 1] = y1;
        }
    }

    fn solve_upper(&self, x: &mut [f64]) {
        for (node, l) in self.mass_chol.iter().enumerate() {
            let y1 = x[node * D + 1] / l[3];
            let y0 = (x[node * D] - l[2] * y1) / l[0];
            x[node * D] = y0;
            x[node * D + 1] = y1;
        }
    }

    /// `L⁻¹ M L⁻ᵀ x`.
    fn apply_reduced(&self, x: &[f64], out: &mut [f64]) {
        let mut t = x.to_vec();
        self.solve_upper(&mut t);
        self.matrix.mul(&t, out);
        self.solve_lower(out);
    }

    fn reduced_dense(&self) -> DMatrix<f64> {
        let mut c = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for p in self.matrix.row_ptr[i]..self.matrix.row_ptr[i + 1] {
                c[(i, self.matrix.cols[p])] = self.matrix.vals[p];
            }
        }
        // L⁻¹ from the left on columns, then L⁻ᵀ from the right on rows
        for j in 0..self.n {
            let mut col: Vec<f64> = c.column(j).iter().copied().collect();
            self.solve_lower(&mut col);
            c.set_column(j, &DVector::from_vec(col));
        }
        for i in 0..self.n {
            let mut row: Vec<f64> = c.row(i).iter().copied().collect();
            self.solve_lower(&mut row);
            for (j, v) in row.into_iter().enumerate() {
                c[(i, j)] = v;
            }
        }
        c.fill_upper_triangle_with_lower_triangle();
        c
    }

    /// Eigenvalues of `J` (ascending) in the transversal-measure inner product.
    pub fn eigenvalues(&self, solver: EigenSolver, k: usize) -> Result<Vec<f64>> {
        match solver {
            EigenSolver::Dense => {
                if self.n > DENSE_CAP {
                    return Err(Error::TooLarge { n: self.n, cap: DENSE_CAP });
                }
                let eig = SymmetricEigen::new(self.reduced_dense());
                let mut ev: Vec<f64> = eig.eigenvalues.iter().copied().collect();
                ev.sort_by(|a, b| a.total_cmp(b));
                ev.truncate(k.min(ev.len()));
                Ok(ev)
            }
            EigenSolver::Lanczos => self.lanczos_lowest(k),
        }
    }

    /// Lowest eigenvalues by block Lanczos (Rayleigh-Ritz on a block Krylov
    /// space, full reorthogonalization). The block size is `k`, so repeated
    /// eigenvalues up to multiplicity `k` are resolved.
    fn lanczos_lowest(&self, k: usize) -> Result<Vec<f64>> {
        let n = self.n;
        let k = k.clamp(1, n);
        let cap = n.min(LANCZOS_MAX_BASIS.max(4 * k));
        let mut basis: Vec<Vec<f64>> = Vec::new();
        let mut images: Vec<Vec<f64>> = Vec::new();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5eed);
        let mut block: Vec<Vec<f64>> = (0..k).map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let mut last = Vec::new();
        loop {
            let mut added = 0;
            for mut v in block.drain(..) {
                let n0 = norm(&v);
                for _ in 0..2 {
                    for b in &basis {
                        let c = dot(&v, b);
                        v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
                    }
                }
                let nv = norm(&v);
                if nv <= 1e-10 * n0 || basis.len() == cap {
                    continue;
                }
                v.iter_mut().for_each(|x| *x /= nv);
                let mut w = vec![0.0; n];
                self.apply_reduced(&v, &mut w);
                basis.push(v);
                images.push(w);
                added += 1;
            }
            let m = basis.len();
            let mut t = DMatrix::zeros(m, m);
            for i in 0..m {
                for j in 0..=i {
                    let v = 0.5 * (dot(&basis[i], &images[j]) + dot(&basis[j], &images[i]));
                    t[(i, j)] = v;
                    t[(j, i)] = v;
                }
            }
            let eig = SymmetricEigen::new(t);
            let mut order: Vec<usize> = (0..m).collect();
            order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
            let kk = k.min(m);
            let scale = eig.eigenvalues.iter().fold(1.0f64, |s, x| s.max(x.abs()));
            let mut converged = m >= k;
            last.clear();
            // residual blocks seed the next Krylov block
            let mut next = Vec::with_capacity(kk);
            for &c in &order[..kk] {
                let theta = eig.eigenvalues[c];
                let mut r = vec![0.0; n];
                for i in 0..m {
                    let y = eig.eigenvectors[(i, c)];
                    if y != 0.0 {
                        for ((ri, a), b) in r.iter_mut().zip(&images[i]).zip(&basis[i]) {
                            *ri += y * (a - theta * b);
                        }
                    }
                }
                if norm(&r) > LANCZOS_RESIDUAL * scale {
                    converged = false;
                }
                last.push(theta);
                next.push(r);
            }
            if converged {
                return Ok(last);
            }
            if added == 0 || basis.len() >= cap {
                break;
            }
            block = next;
        }
        Err(Error::NonConvergence(format!(
            "block Lanczos did not reach residual {LANCZOS_RESIDUAL:e} for {k} eigenvalues within {cap} basis vectors (last estimates {last:?})"
        )))
    }

    /// Largest eigenvalue estimate (Gershgorin bound on the reduced matrix).
    pub fn lambda_max_bound(&self) -> f64 {
        let mut best = 0.0f64;
        for i in 0..self.n {
            let node = i / D;
            let l = self.mass_chol[node];
            let s: f64 = (self.matrix.row_ptr[i]..self.matrix.row_ptr[i + 1]).map(|p| self.matrix.vals[p].abs()).sum();
            best = best.max(s / (l[0].min(l[3]).powi(2)));
        }
        best
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[derive(Clone, Debug, Serialize)]
pub struct StabilityReport {
    pub dimension: usize,
    pub solver: EigenSolver,
    pub lowest: Vec<f64>,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub tolerance: f64,
    pub kernel_dimension: usize,
    pub stable: bool,
    pub asymmetry: f64,
    pub relative_asymmetry: f64,
}

/// Lowest `k` eigenvalues and the verdict `λ_min ≥ -1e-6 (1 + |λ_max|)`.
pub fn stability_report(assembly: &HessianAssembly, k: usize, solver: EigenSolver) -> Result<StabilityReport> {
    let (lowest, lambda_max) = match solver {
        EigenSolver::Dense => {
            if assembly.n > DENSE_CAP {
                return Err(Error::TooLarge { n: assembly.n, cap: DENSE_CAP });
            }
            let all = assembly.eigenvalues(EigenSolver::Dense, assembly.n)?;
            let lmax = *all.last().unwrap_or(&0.0);
            (all[..k.min(all.len())].to_vec(), lmax)
        }
        EigenSolver::Lanczos => (assembly.eigenvalues(EigenSolver::Lanczos, k)?, assembly.lambda_max_bound()),
    };
    let tolerance = 1e-6 * (1.0 + lambda_max.abs());
    let lambda_min = lowest.first().copied().unwrap_or(0.0);
    Ok(StabilityReport {
        dimension: assembly.n,
        solver,
        kernel_dimension: lowest.iter().filter(|l| l.abs() <= tolerance).count(),
        stable: lambda_min >= -tolerance,
        lowest,
        lambda_min,
        lambda_max,
        tolerance,
        asymmetry: assembly.asymmetry,
        relative_asymmetry: assembly.relative_asymmetry(),
    })
}

/// Spectrum as CSV rows `index,eigenvalue`.
pub fn write_spectrum_csv<W: std::io::Write>(out: W, values: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["index", "eigenvalue"])?;
    for (i, v) in values.iter().enumerate() {
        w.write_record([i.to_string(), format!("{v:.17e}")])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::{build_model, build_target, ModelSpec};
    use crate::manifold::chart::StencilOrder;

    #[test]
    fn probe_sources_are_unique() {
        for (dim, reach) in [(16, 4), (12, 2), (8, 4), (32, 3)] {
            let s = probe_spacing(dim, reach);
            for off in 0..s {
                for x in 0..dim {
                    let hits: Vec<usize> = (0..dim)
                        .filter(|&y| y % s == off)
                        .filter(|&y| {
                            let d = (x as isize - y as isize).rem_euclid(dim as isize) as usize;
                            d.min(dim - d) <= reach
                        })
                        .collect();
                    let got = probe_source(x, off, s, dim, reach);
                    if s == dim {
                        assert_eq!(got, Some(off));
                    } else {
                        assert_eq!(got, hits.first().copied(), "dim {dim} reach {reach} x {x} off {off}");
                        assert!(hits.len() <= 1);
                    }
                }
            }
        }
    }

    #[test]
    fn probing_matches_columns() {
        let m = build_model(&ModelSpec::new("warped-torus", 0.2, 12).with_order(StencilOrder::Second)).unwrap();
        let t = build_target("sphere-stereo", Some(1.0)).unwrap();
        let map = MapField::from_fn(&m, &t, vec![0; 4], |x| [0.3 * x[0].cos(), 0.2 * x[1].sin()]).unwrap();
        let asm = assemble_jacobi(&m, &map).unwrap();
        let md = MapData::new(&m, &map).unwrap();
        let n = m.node_count();
        for j in [0, 5, 77, 2 * n - 1] {
            let mut e = PullbackSection::zeros(n);
            e.0[j] = 1.0;
            let je = jacobi_apply(&m, &md, &e).unwrap();
            for i in 0..2 * n {
                let node = i / 2;
                let g = md.frames[node].metric;
                let w = m.weight(node);
                let bij: f64 = (0..2).map(|l| w * g[i % 2][l] * je.0[node * 2 + l]).sum();
                let mut ej = PullbackSection::zeros(n);
                ej.0[i] = 1.0;
                let ji = jacobi_apply(&m, &md, &ej).unwrap();
                let nodej = j / 2;
                let gj = md.frames[nodej].metric;
                let bji: f64 = (0..2).map(|l| m.weight(nodej) * gj[j % 2][l] * ji.0[nodej * 2 + l]).sum();
                assert!((asm.matrix.get(i, j) - 0.5 * (bij + bji)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn flat_circle_spectrum() {
        let m = build_model(&ModelSpec::new("product-flat-torus", 0.0, 32).with_codim(1)).unwrap();
        let t = build_target("flat-torus", None).unwrap();
        let map = MapField::linear(&m, &t, &[1, 0], [0.0, 0.0]).unwrap();
        let asm = assemble_jacobi(&m, &map).unwrap();
        assert!(asm.asymmetry < 1e-10);
        let ev = asm.eigenvalues(EigenSolver::Dense, 6).unwrap();
        assert!(ev[0].abs() < 1e-10 && ev[1].abs() < 1e-10);
        for v in &ev[2..6] {
            assert!((v - 1.0).abs() < 1e-4, "{ev:?}");
        }
        let lz = asm.eigenvalues(EigenSolver::Lanczos, 6).unwrap();
        for (a, b) in ev.iter().zip(&lz) {
            assert!((a - b).abs() < 1e-7, "{ev:?} {lz:?}");
        }
    }
}
