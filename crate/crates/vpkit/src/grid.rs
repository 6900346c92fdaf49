//! Radial grids, quadrature weights and tabulated radial functions.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Result, VpError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GridScheme {
    /// Uniform in ln r.
    Log,
    /// Shifted-log grid r(t) = r_min + c·(e^{γt} − 1); spacing is geometric
    /// below the cluster radius and grows roughly linearly beyond it, so the
    /// nuclear-surface region stays well resolved.
    LogLinear { cluster: f64 },
}

/// Strictly increasing radial mesh with interpolatory quadrature weights.
///
/// Weights come from integrating the local cubic interpolant over each cell,
/// so they are exact for polynomials up to degree three on arbitrary node
/// spacing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialGrid {
    points: Vec<f64>,
    weights: Vec<f64>,
}

// 4-point Gauss-Legendre on [-1, 1].
const GL4_X: [f64; 4] = [
    -0.861_136_311_594_052_6,
    -0.339_981_043_584_856_26,
    0.339_981_043_584_856_26,
    0.861_136_311_594_052_6,
];
const GL4_W: [f64; 4] = [
    0.347_854_845_137_453_85,
    0.652_145_154_862_546_2,
    0.652_145_154_862_546_2,
    0.347_854_845_137_453_85,
];

pub fn build_grid(r_min: f64, r_max: f64, n: usize, scheme: GridScheme) -> Result<RadialGrid> {
    if !(r_min.is_finite() && r_max.is_finite()) || r_min <= 0.0 || r_min >= r_max {
        return Err(VpError::Argument(format!(
            "grid bounds must satisfy 0 < r_min < r_max, got [{r_min}, {r_max}]"
        )));
    }
    if n < 16 {
        return Err(VpError::Argument(format!("grid needs n >= 16 points, got {n}")));
    }
    let mut points = Vec::with_capacity(n);
    match scheme {
        GridScheme::Log => {
            let l = (r_max / r_min).ln();
            for i in 0..n {
                let t = i as f64 / (n - 1) as f64;
                points.push(r_min * (l * t).exp());
            }
        }
        GridScheme::LogLinear { cluster } => {
            if !(cluster > 0.0) || !cluster.is_finite() {
                return Err(VpError::Argument(format!(
                    "log_linear cluster radius must be positive, got {cluster}"
                )));
            }
            let gamma = (1.0 + (r_max - r_min) / cluster).ln();
            for i in 0..n {
                let t = i as f64 / (n - 1) as f64;
                points.push(r_min + cluster * ((gamma * t).exp() - 1.0));
            }
        }
    }
    // Endpoint values can pick up rounding from exp(); pin them.
    points[0] = r_min;
    points[n - 1] = r_max;
    RadialGrid::from_points(points)
}

impl RadialGrid {
    /// Build a grid from explicit strictly increasing positive radii.
    pub fn from_points(points: Vec<f64>) -> Result<Self> {
        if points.len() < 4 {
            return Err(VpError::Argument("grid needs at least 4 points".into()));
        }
        for w in points.windows(2) {
            if !(w[0] > 0.0 && w[1] > w[0] && w[1].is_finite()) {
                return Err(VpError::Argument(
                    "grid points must be finite, positive and strictly increasing".into(),
                ));
            }
        }
        let weights = cubic_cell_weights(&points);
        Ok(Self { points, weights })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn r_min(&self) -> f64 {
        self.points[0]
    }

    pub fn r_max(&self) -> f64 {
        *self.points.last().unwrap()
    }

    /// Quadrature of point values tabulated on this grid.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        assert_eq!(values.len(), self.points.len());
        self.weights.iter().zip(values).map(|(w, v)| w * v).sum()
    }

    pub fn integrate_fn(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.weights
            .iter()
            .zip(&self.points)
            .map(|(w, &r)| w * f(r))
            .sum()
    }

    /// Running integral I(r_i) = ∫_{r_0}^{r_i} f dr of tabulated values,
    /// using the same per-cell cubic interpolant as the global weights.
    pub fn cumulative_integral(&self, values: &[f64]) -> Vec<f64> {
        assert_eq!(values.len(), self.points.len());
        let x = &self.points;
        let n = x.len();
        let mut out = Vec::with_capacity(n);
        out.push(0.0);
        let mut acc = 0.0;
        for i in 0..n - 1 {
            let s = if i == 0 {
                0
            } else if i + 2 >= n {
                n - 4
            } else {
                i - 1
            };
            let a = x[i];
            let b = x[i + 1];
            let hc = 0.5 * (b - a);
            let mid = 0.5 * (a + b);
            let mut cell = 0.0;
            for (gx, gw) in GL4_X.iter().zip(GL4_W) {
                let xq = mid + hc * gx;
                let mut fq = 0.0;
                for j in 0..4 {
                    let mut l = 1.0;
                    for k in 0..4 {
                        if k != j {
                            l *= (xq - x[s + k]) / (x[s + j] - x[s + k]);
                        }
                    }
                    fq += l * values[s + j];
                }
                cell += hc * gw * fq;
            }
            acc += cell;
            out.push(acc);
        }
        out
    }

    /// Index of the last grid point <= r (clamped to a valid window start).
    pub fn locate(&self, r: f64) -> usize {
        match self.points.partition_point(|&p| p <= r) {
            0 => 0,
            i => i - 1,
        }
    }
}

/// Per-cell weights from integrating the 4-point Lagrange interpolant.
fn cubic_cell_weights(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut w = vec![0.0; n];
    for i in 0..n - 1 {
        // Stencil of four nodes around the cell [x_i, x_{i+1}].
        let s = if i == 0 {
            0
        } else if i + 2 >= n {
            n - 4
        } else {
            i - 1
        };
        let a = x[i];
        let b = x[i + 1];
        let hc = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        for (gx, gw) in GL4_X.iter().zip(GL4_W) {
            let xq = mid + hc * gx;
            for j in 0..4 {
                let mut l = 1.0;
                for k in 0..4 {
                    if k != j {
                        l *= (xq - x[s + k]) / (x[s + j] - x[s + k]);
                    }
                }
                w[s + j] += hc * gw * l;
            }
        }
    }
    w
}

/// A real function tabulated on a shared radial grid, with local cubic
/// interpolation between nodes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RadialFunction {
    grid: Arc<RadialGrid>,
    values: Vec<f64>,
    interpolation_order: usize,
}

impl RadialFunction {
    pub fn new(grid: Arc<RadialGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(VpError::Argument(format!(
                "values length {} does not match grid length {}",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(VpError::Argument("radial function values must be finite".into()));
        }
        Ok(Self {
            grid,
            values,
            interpolation_order: 3,
        })
    }

    pub fn from_fn(grid: Arc<RadialGrid>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.points().iter().map(|&r| f(r)).collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn interpolation_order(&self) -> usize {
        self.interpolation_order
    }

    /// Cubic Lagrange interpolation; clamps outside the grid span to the
    /// boundary values.
    pub fn eval(&self, r: f64) -> f64 {
        let pts = self.grid.points();
        let n = pts.len();
        if r <= pts[0] {
            return self.values[0];
        }
        if r >= pts[n - 1] {
            return self.values[n - 1];
        }
        let i = self.grid.locate(r);
        let s = i.saturating_sub(1).min(n - 4);
        let mut acc = 0.0;
        for j in 0..4 {
            let mut l = 1.0;
            for k in 0..4 {
                if k != j {
                    l *= (r - pts[s + k]) / (pts[s + j] - pts[s + k]);
                }
            }
            acc += l * self.values[s + j];
        }
        acc
    }

    /// Quadrature of this function over its grid span.
    pub fn integrate(&self) -> f64 {
        self.grid.integrate(&self.values)
    }

    /// Pointwise combination of two functions sharing a grid.
    pub fn zip_with(&self, other: &RadialFunction, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if !Arc::ptr_eq(&self.grid, &other.grid) && self.grid.points() != other.grid.points() {
            return Err(VpError::Argument("radial functions live on different grids".into()));
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Self::new(self.grid.clone(), values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_grid_spans_bounds() {
        let g = build_grid(1e-6, 10.0, 16, GridScheme::Log).unwrap();
        assert_eq!(g.len(), 16);
        assert_eq!(g.r_min(), 1e-6);
        assert_eq!(g.r_max(), 10.0);
        assert!(g.points().windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn invalid_arguments_rejected() {
        assert!(build_grid(0.0, 1.0, 100, GridScheme::Log).is_err());
        assert!(build_grid(1.0, 0.5, 100, GridScheme::Log).is_err());
        assert!(build_grid(1e-6, 1.0, 8, GridScheme::Log).is_err());
    }

    #[test]
    fn constant_integration_is_exact() {
        for scheme in [GridScheme::Log, GridScheme::LogLinear { cluster: 0.02 }] {
            let g = build_grid(1e-6, 5.0, 200, scheme).unwrap();
            let span = g.r_max() - g.r_min();
            let got = g.integrate_fn(|_| 1.0);
            assert!(
                (got - span).abs() <= 1e-10 * span,
                "scheme {scheme:?}: {got} vs {span}"
            );
        }
    }

    #[test]
    fn polynomial_quadrature() {
        let g = build_grid(1e-3, 1.0, 2000, GridScheme::Log).unwrap();
        let exact = (1.0 - 1e-9) / 3.0;
        let got = g.integrate_fn(|r| r * r);
        assert!((got - exact).abs() < 1e-8 * exact);
        for k in 0..=2 {
            let g = build_grid(1e-3, 1.0, 1000, GridScheme::LogLinear { cluster: 0.05 }).unwrap();
            let exact = (1.0f64.powi(k + 1) - 1e-3f64.powi(k + 1)) / (k + 1) as f64;
            let got = g.integrate_fn(|r| r.powi(k));
            assert!((got - exact).abs() < 1e-8 * exact, "k={k}");
        }
    }

    #[test]
    fn exponential_integral() {
        let g = build_grid(1e-6, 50.0, 4000, GridScheme::Log).unwrap();
        let exact = 0.5 * (-2e-6f64).exp();
        let got = g.integrate_fn(|r| (-2.0 * r).exp());
        assert!((got - exact).abs() < 1e-9 * exact);
    }

    #[test]
    fn interpolation_reproduces_smooth_function() {
        let g = Arc::new(build_grid(1e-4, 10.0, 3000, GridScheme::Log).unwrap());
        let f = RadialFunction::from_fn(g, |r| (-r).exp() * r).unwrap();
        for r in [2e-4, 0.013, 0.4, 1.7, 6.3] {
            let exact = (-r as f64).exp() * r;
            assert!((f.eval(r) - exact).abs() < 1e-8 * exact.abs().max(1e-3));
        }
    }

    #[test]
    fn interpolation_deterministic_and_clamped() {
        let g = Arc::new(build_grid(0.01, 1.0, 64, GridScheme::Log).unwrap());
        let f = RadialFunction::from_fn(g, |r| r.sin()).unwrap();
        assert_eq!(f.eval(0.3), f.eval(0.3));
        assert_eq!(f.eval(0.001), f.values()[0]);
        assert_eq!(f.eval(5.0), *f.values().last().unwrap());
    }
}
