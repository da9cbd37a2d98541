//! Periodic structured grids and central-difference stencils.
//!
//! Nodes are stored node-major with axis 0 varying fastest:
//! `node = i0 + n0 * (i1 + n1 * ...)`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Chart period of every axis.
pub const PERIOD: f64 = 2.0 * PI;

/// Fewest nodes allowed per axis.
pub const MIN_NODES: usize = 8;

/// Accuracy order of the central-difference stencils.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
#[derive(Default)]
pub enum StencilOrder {
    Second,
    #[default]
    Fourth,
    Sixth,
}


impl TryFrom<usize> for StencilOrder {
    type Error = Error;

    fn try_from(value: usize) -> Result<Self> {
        match value {
            2 => Ok(StencilOrder::Second),
            4 => Ok(StencilOrder::Fourth),
            6 => Ok(StencilOrder::Sixth),
            other => Err(Error::StencilOrder(other)),
        }
    }
}

impl From<StencilOrder> for usize {
    fn from(o: StencilOrder) -> usize {
        o.accuracy()
    }
}

impl StencilOrder {
    pub fn accuracy(self) -> usize {
        match self {
            StencilOrder::Second => 2,
            StencilOrder::Fourth => 4,
            StencilOrder::Sixth => 6,
        }
    }

    /// Half-width of both stencils.
    pub fn radius(self) -> usize {
        self.accuracy() / 2
    }

    /// First-derivative weights for offsets `1..=radius`; offset `-o` carries `-w[o]`.
    pub fn first_weights(self) -> &'static [f64] {
        match self {
            StencilOrder::Second => &[0.5],
            StencilOrder::Fourth => &[2.0 / 3.0, -1.0 / 12.0],
            StencilOrder::Sixth => &[0.75, -0.15, 1.0 / 60.0],
        }
    }

    /// Second-derivative weights: centre weight, then offsets `1..=radius` (symmetric).
    pub fn second_weights(self) -> (f64, &'static [f64]) {
        match self {
            StencilOrder::Second => (-2.0, &[1.0]),
            StencilOrder::Fourth => (-2.5, &[4.0 / 3.0, -1.0 / 12.0]),
            StencilOrder::Sixth => (-49.0 / 18.0, &[1.5, -0.15, 1.0 / 90.0]),
        }
    }
}

/// Periodic grid over `[0, 2π)^q` carrying the transversal chart of a model.
#[derive(Clone, Debug)]
pub struct BaseChart {
    dims: Vec<usize>,
    spacing: Vec<f64>,
    periodic: Vec<bool>,
    order: StencilOrder,
    coords: Vec<f64>,
    strides: Vec<usize>,
    // neighbour[axis][(offset + r) * n + node]
    neighbour: Vec<Vec<u32>>,
    // number of periods crossed by the same lookup, -1, 0 or 1
    wraps: Vec<Vec<i8>>,
}

impl BaseChart {
    pub fn new(dims: Vec<usize>, order: StencilOrder) -> Result<Self> {
        if dims.is_empty() || dims.len() > 2 {
            return Err(Error::ParameterOutOfRange {
                name: "codimension",
                value: dims.len() as f64,
                reason: "codimension must be 1 or 2",
            });
        }
        if let Some(&n) = dims.iter().find(|&&n| n < MIN_NODES) {
            return Err(Error::ResolutionTooSmall {
                got: n,
                min: MIN_NODES,
            });
        }
        let q = dims.len();
        let spacing: Vec<f64> = dims.iter().map(|&n| PERIOD / n as f64).collect();
        let node_count: usize = dims.iter().product();
        let mut strides = vec![1usize; q];
        for a in 1..q {
            strides[a] = strides[a - 1] * dims[a - 1];
        }

        let mut coords = vec![0.0; node_count * q];
        for node in 0..node_count {
            for a in 0..q {
                let i = (node / strides[a]) % dims[a];
                coords[node * q + a] = i as f64 * spacing[a];
            }
        }

        let r = order.radius() as isize;
        let width = (2 * r + 1) as usize;
        let mut neighbour = vec![vec![0u32; width * node_count]; q];
        let mut wraps = vec![vec![0i8; width * node_count]; q];
        for a in 0..q {
            let n = dims[a] as isize;
            for node in 0..node_count {
                let i = ((node / strides[a]) % dims[a]) as isize;
                let base = node as isize - i * strides[a] as isize;
                for o in -r..=r {
                    let j = i + o;
                    let w = j.div_euclid(n);
                    let jj = j.rem_euclid(n);
                    let slot = (o + r) as usize * node_count + node;
                    neighbour[a][slot] = (base + jj * strides[a] as isize) as u32;
                    wraps[a][slot] = w as i8;
                }
            }
        }

        Ok(BaseChart {
            dims,
            spacing,
            periodic: vec![true; q],
            order,
            coords,
            strides,
            neighbour,
            wraps,
        })
    }

    /// Square grid with `resolution` nodes on each of `q` axes.
    pub fn square(q: usize, resolution: usize, order: StencilOrder) -> Result<Self> {
        Self::new(vec![resolution; q], order)
    }

    pub fn q(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn periodic(&self) -> &[bool] {
        &self.periodic
    }

    pub fn order(&self) -> StencilOrder {
        self.order
    }

    pub fn node_count(&self) -> usize {
        self.coords.len() / self.q()
    }

    /// Chart coordinate of `node` along `axis`.
    #[inline]
    pub fn coord(&self, node: usize, axis: usize) -> f64 {
        self.coords[node * self.q() + axis]
    }

    pub fn point(&self, node: usize) -> &[f64] {
        let q = self.q();
        &self.coords[node * q..(node + 1) * q]
    }

    /// Grid index of `node` along `axis`.
    pub fn index(&self, node: usize, axis: usize) -> usize {
        (node / self.strides[axis]) % self.dims[axis]
    }

    /// Node with the given per-axis indices (taken modulo the extents).
    pub fn node_at(&self, idx: &[usize]) -> usize {
        idx.iter()
            .enumerate()
            .map(|(a, &i)| (i % self.dims[a]) * self.strides[a])
            .sum()
    }

    /// Product of the grid steps; the flat volume of one cell.
    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    pub fn min_spacing(&self) -> f64 {
        self.spacing.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    #[inline]
    fn slot(&self, node: usize, offset: isize) -> usize {
        (offset + self.order.radius() as isize) as usize * self.node_count() + node
    }

    /// Node reached from `node` by `offset` steps along `axis`.
    #[inline]
    pub fn neighbour(&self, node: usize, axis: usize, offset: isize) -> usize {
        self.neighbour[axis][self.slot(node, offset)] as usize
    }

    /// Periods crossed by the same lookup.
    #[inline]
    pub fn wrap(&self, node: usize, axis: usize, offset: isize) -> i32 {
        self.wraps[axis][self.slot(node, offset)] as i32
    }

    /// Central first derivative along `axis` of the periodic function `f`.
    #[inline]
    pub fn d1(&self, node: usize, axis: usize, f: impl Fn(usize) -> f64) -> f64 {
        let w = self.order.first_weights();
        let mut acc = 0.0;
        for (o, &wo) in w.iter().enumerate() {
            let o = o as isize + 1;
            acc += wo * (f(self.neighbour(node, axis, o)) - f(self.neighbour(node, axis, -o)));
        }
        acc / self.spacing[axis]
    }

    /// First derivative of a function whose value jumps by `jump` per period along `axis`.
    #[inline]
    pub fn d1_lifted(&self, node: usize, axis: usize, jump: f64, f: impl Fn(usize) -> f64) -> f64 {
        if jump == 0.0 {
            return self.d1(node, axis, f);
        }
        let w = self.order.first_weights();
        let mut acc = 0.0;
        for (o, &wo) in w.iter().enumerate() {
            let o = o as isize + 1;
            let plus = f(self.neighbour(node, axis, o)) + jump * self.wrap(node, axis, o) as f64;
            let minus = f(self.neighbour(node, axis, -o)) + jump * self.wrap(node, axis, -o) as f64;
            acc += wo * (plus - minus);
        }
        acc / self.spacing[axis]
    }

    /// Compact central second derivative along `axis`.
    #[inline]
    pub fn d2(&self, node: usize, axis: usize, f: impl Fn(usize) -> f64) -> f64 {
        self.d2_lifted(node, axis, 0.0, f)
    }

    #[inline]
    pub fn d2_lifted(&self, node: usize, axis: usize, jump: f64, f: impl Fn(usize) -> f64) -> f64 {
        let (c, w) = self.order.second_weights();
        let mut acc = c * f(node);
        for (o, &wo) in w.iter().enumerate() {
            let o = o as isize + 1;
            let plus = f(self.neighbour(node, axis, o)) + jump * self.wrap(node, axis, o) as f64;
            let minus = f(self.neighbour(node, axis, -o)) + jump * self.wrap(node, axis, -o) as f64;
            acc += wo * (plus + minus);
        }
        acc / (self.spacing[axis] * self.spacing[axis])
    }

    /// Gradient of a node-major field with `ncomp` components: output is
    /// `[node][axis][comp]`.
    pub fn gradient(&self, field: &[f64], ncomp: usize) -> Vec<f64> {
        let n = self.node_count();
        let q = self.q();
        debug_assert_eq!(field.len(), n * ncomp);
        let mut out = vec![0.0; n * q * ncomp];
        for node in 0..n {
            for a in 0..q {
                for c in 0..ncomp {
                    out[(node * q + a) * ncomp + c] = self.d1(node, a, |j| field[j * ncomp + c]);
                }
            }
        }
        out
    }

    /// Second-derivative matrix of a node-major field: `[node][a][b][comp]`.
    /// Diagonal entries use the compact stencil; mixed entries compose first derivatives.
    /// `jumps[c * q + a]` is the per-period jump of component `c` along axis `a`.
    pub fn hessian(&self, field: &[f64], ncomp: usize, jumps: Option<&[f64]>) -> Vec<f64> {
        let n = self.node_count();
        let q = self.q();
        let jump = |c: usize, a: usize| jumps.map_or(0.0, |j| j[c * q + a]);
        let mut out = vec![0.0; n * q * q * ncomp];
        for node in 0..n {
            for a in 0..q {
                for c in 0..ncomp {
                    out[((node * q + a) * q + a) * ncomp + c] =
                        self.d2_lifted(node, a, jump(c, a), |j| field[j * ncomp + c]);
                }
            }
        }
        if q > 1 {
            // first derivatives are periodic, so the jump only enters the inner pass
            let mut first = vec![0.0; n * q * ncomp];
            for node in 0..n {
                for a in 0..q {
                    for c in 0..ncomp {
                        first[(node * q + a) * ncomp + c] =
                            self.d1_lifted(node, a, jump(c, a), |j| field[j * ncomp + c]);
                    }
                }
            }
            for node in 0..n {
                for a in 0..q {
                    for b in 0..q {
                        if a == b {
                            continue;
                        }
                        for c in 0..ncomp {
                            out[((node * q + a) * q + b) * ncomp + c] =
                                self.d1(node, a, |j| first[(j * q + b) * ncomp + c]);
                        }
                    }
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_small_grids_and_bad_orders() {
        assert!(matches!(
            BaseChart::square(2, 7, StencilOrder::Second),
            Err(Error::ResolutionTooSmall { got: 7, .. })
        ));
        assert!(matches!(StencilOrder::try_from(3), Err(Error::StencilOrder(3))));
    }

    #[test]
    fn spacing_times_extent_is_the_period() {
        let c = BaseChart::new(vec![16, 24], StencilOrder::Fourth).unwrap();
        for a in 0..2 {
            assert!((c.spacing()[a] * c.dims()[a] as f64 - PERIOD).abs() < 1e-14);
        }
        assert_eq!(c.node_count(), 16 * 24);
        assert!(c.periodic().iter().all(|&p| p));
    }

    #[test]
    fn neighbours_wrap_around() {
        let c = BaseChart::square(2, 8, StencilOrder::Sixth).unwrap();
        let last = c.node_at(&[7, 3]);
        let first = c.node_at(&[0, 3]);
        assert_eq!(c.neighbour(last, 0, 1), first);
        assert_eq!(c.wrap(last, 0, 1), 1);
        assert_eq!(c.neighbour(first, 0, -2), c.node_at(&[6, 3]));
        assert_eq!(c.wrap(first, 0, -2), -1);
        assert_eq!(c.wrap(first, 1, 2), 0);
    }

    #[test]
    fn derivative_error_shrinks_at_the_stencil_order() {
        for order in [StencilOrder::Second, StencilOrder::Fourth, StencilOrder::Sixth] {
            let err = |n: usize| {
                let c = BaseChart::square(1, n, order).unwrap();
                let f: Vec<f64> = (0..n).map(|i| (c.coord(i, 0)).sin()).collect();
                (0..n)
                    .map(|i| (c.d1(i, 0, |j| f[j]) - c.coord(i, 0).cos()).abs())
                    .fold(0.0, f64::max)
            };
            let rate = (err(32) / err(64)).log2();
            assert!((rate - order.accuracy() as f64).abs() < 0.1, "{order:?}: {rate}");
        }
    }

    #[test]
    fn lifted_derivatives_see_the_linear_part() {
        let c = BaseChart::square(2, 12, StencilOrder::Fourth).unwrap();
        // u = 2 x0 + x1 stored on [0, 2π)^2 with jumps 2·2π and 1·2π
        let u: Vec<f64> = (0..c.node_count())
            .map(|n| 2.0 * c.coord(n, 0) + c.coord(n, 1))
            .collect();
        let jumps = [2.0 * PERIOD, PERIOD];
        for n in 0..c.node_count() {
            assert!((c.d1_lifted(n, 0, jumps[0], |j| u[j]) - 2.0).abs() < 1e-12);
            assert!((c.d1_lifted(n, 1, jumps[1], |j| u[j]) - 1.0).abs() < 1e-12);
            assert!(c.d2_lifted(n, 0, jumps[0], |j| u[j]).abs() < 1e-10);
        }
        let h = c.hessian(&u, 1, Some(&jumps));
        assert!(h.iter().all(|v| v.abs() < 1e-10));
    }
}
