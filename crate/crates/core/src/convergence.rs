//! Richardson extrapolation in the step size and observed convergence orders.

use serde::Serialize;

/// Extrapolate `values[i] ≈ v(steps[i])` to step zero assuming an even error
/// expansion `v(t) = v₀ + c₁t² + c₂t⁴ + …` (Neville's scheme in `t²`).
pub fn richardson_t2(steps: &[f64], values: &[f64]) -> f64 {
    assert_eq!(steps.len(), values.len());
    let x: Vec<f64> = steps.iter().map(|t| t * t).collect();
    let mut p = values.to_vec();
    let n = p.len();
    for level in 1..n {
        for i in 0..n - level {
            let j = i + level;
            p[i] = (x[i] * p[i + 1] - x[j] * p[i]) / (x[i] - x[j]);
        }
    }
    p[0]
}

/// Residuals below this are treated as rounding noise.
pub const ROUNDOFF_FLOOR: f64 = 1e-11;

/// Floor for first difference quotients of `O(1)` functionals.
pub const FD_FLOOR: f64 = 1e-9;

/// Floor for second difference quotients.
pub const FD2_FLOOR: f64 = 1e-7;

#[derive(Clone, Debug, Serialize)]
pub struct OrderStudy {
    pub resolutions: Vec<usize>,
    pub residuals: Vec<f64>,
    /// `log(r_i / r_{i+1}) / log(n_{i+1} / n_i)` for each consecutive pair.
    pub pair_orders: Vec<f64>,
    /// Order of the finest pair whose residuals both sit above the floor.
    pub observed: Option<f64>,
    /// Finest residual is at rounding level.
    pub at_roundoff: bool,
    pub floor: f64,
}

impl OrderStudy {
    pub fn new(resolutions: &[usize], residuals: &[f64], floor: f64) -> Self {
        assert_eq!(resolutions.len(), residuals.len());
        let pair_orders: Vec<f64> = (1..residuals.len())
            .map(|i| (residuals[i - 1] / residuals[i]).ln() / (resolutions[i] as f64 / resolutions[i - 1] as f64).ln())
            .collect();
        let observed = (1..residuals.len())
            .rev()
            .find(|&i| residuals[i] > floor && residuals[i - 1] > floor)
            .map(|i| pair_orders[i - 1]);
        let at_roundoff = residuals.last().is_some_and(|r| *r <= floor);
        OrderStudy {
            resolutions: resolutions.to_vec(),
            residuals: residuals.to_vec(),
            pair_orders,
            observed,
            at_roundoff,
            floor,
        }
    }

    /// Either converged to rounding level or the finest order reaches `min_order`.
    pub fn meets(&self, min_order: f64) -> bool {
        self.at_roundoff || self.observed.is_some_and(|p| p >= min_order)
    }

    pub fn finest(&self) -> f64 {
        *self.residuals.last().unwrap_or(&f64::NAN)
    }

    pub fn describe(&self) -> String {
        let cols: Vec<String> = self
            .resolutions
            .iter()
            .zip(&self.residuals)
            .map(|(n, r)| format!("{n}:{r:.2e}"))
            .collect();
        let order = if self.at_roundoff {
            "at roundoff".to_string()
        } else {
            match self.observed {
                Some(p) => format!("order {p:.2}"),
                None => "order n/a".to_string(),
            }
        };
        format!("{} ({order})", cols.join(" "))
    }
}
