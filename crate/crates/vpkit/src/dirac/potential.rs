//! Central potentials as evaluable objects with known origin and tail
//! Coulomb strengths, so solvers can start series/asymptotic solutions
//! without sampling artifacts.

use std::sync::Arc;

use crate::consts::PhysicalConstants;
use crate::grid::RadialFunction;
use crate::nuclear::{coulomb_potential_at, NuclearModel, NuclearShape};

/// A spherically symmetric potential V(r) in natural units.
pub trait CentralPotential: Send + Sync {
    fn v(&self, r: f64) -> f64;

    /// zα such that V(r) ~ −zα/r as r → 0; zero when V is regular there.
    fn origin_strength(&self) -> f64;

    /// zα such that V(r) ~ −zα/r as r → ∞.
    fn tail_strength(&self) -> f64;
}

impl<P: CentralPotential + ?Sized> CentralPotential for Arc<P> {
    fn v(&self, r: f64) -> f64 {
        (**self).v(r)
    }
    fn origin_strength(&self) -> f64 {
        (**self).origin_strength()
    }
    fn tail_strength(&self) -> f64 {
        (**self).tail_strength()
    }
}

/// Bare Coulomb potential of a nuclear model.
#[derive(Debug, Clone, Copy)]
pub struct NuclearPotential {
    model: NuclearModel,
    consts: PhysicalConstants,
}

impl NuclearPotential {
    pub fn new(model: NuclearModel, consts: PhysicalConstants) -> Self {
        Self { model, consts }
    }

    pub fn model(&self) -> &NuclearModel {
        &self.model
    }
}

impl CentralPotential for NuclearPotential {
    fn v(&self, r: f64) -> f64 {
        coulomb_potential_at(&self.model, r, &self.consts)
    }

    fn origin_strength(&self) -> f64 {
        match self.model.shape {
            NuclearShape::Point => self.model.z_alpha(&self.consts),
            _ => 0.0,
        }
    }

    fn tail_strength(&self) -> f64 {
        self.model.z_alpha(&self.consts)
    }
}

/// A tabulated potential with explicit Coulombic continuations outside its
/// grid span: −origin_za/r below r_min (or the boundary value when regular)
/// and −tail_za/r above r_max.
pub struct TabulatedPotential {
    values: RadialFunction,
    origin_za: f64,
    tail_za: f64,
}

impl TabulatedPotential {
    pub fn new(values: RadialFunction, origin_za: f64, tail_za: f64) -> Self {
        Self {
            values,
            origin_za,
            tail_za,
        }
    }

    pub fn values(&self) -> &RadialFunction {
        &self.values
    }
}

impl CentralPotential for TabulatedPotential {
    fn v(&self, r: f64) -> f64 {
        let g = self.values.grid();
        if r > g.r_max() {
            -self.tail_za / r
        } else if r < g.r_min() && self.origin_za != 0.0 {
            -self.origin_za / r
        } else {
            self.values.eval(r)
        }
    }

    fn origin_strength(&self) -> f64 {
        self.origin_za
    }

    fn tail_strength(&self) -> f64 {
        self.tail_za
    }
}

/// V ≡ 0 (free problem).
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroPotential;

impl CentralPotential for ZeroPotential {
    fn v(&self, _r: f64) -> f64 {
        0.0
    }
    fn origin_strength(&self) -> f64 {
        0.0
    }
    fn tail_strength(&self) -> f64 {
        0.0
    }
}

/// Pointwise sum of potentials.
pub struct SumPotential {
    parts: Vec<Arc<dyn CentralPotential>>,
}

impl SumPotential {
    pub fn new(parts: Vec<Arc<dyn CentralPotential>>) -> Self {
        Self { parts }
    }
}

impl CentralPotential for SumPotential {
    fn v(&self, r: f64) -> f64 {
        self.parts.iter().map(|p| p.v(r)).sum()
    }
    fn origin_strength(&self) -> f64 {
        self.parts.iter().map(|p| p.origin_strength()).sum()
    }
    fn tail_strength(&self) -> f64 {
        self.parts.iter().map(|p| p.tail_strength()).sum()
    }
}

/// A potential multiplied by a constant factor.
pub struct ScaledPotential {
    inner: Arc<dyn CentralPotential>,
    factor: f64,
}

impl ScaledPotential {
    pub fn new(inner: Arc<dyn CentralPotential>, factor: f64) -> Self {
        Self { inner, factor }
    }
}

impl CentralPotential for ScaledPotential {
    fn v(&self, r: f64) -> f64 {
        self.factor * self.inner.v(r)
    }
    fn origin_strength(&self) -> f64 {
        self.factor * self.inner.origin_strength()
    }
    fn tail_strength(&self) -> f64 {
        self.factor * self.inner.tail_strength()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, GridScheme};

    #[test]
    fn nuclear_potential_strengths() {
        let c = PhysicalConstants::default();
        let point = NuclearPotential::new(NuclearModel::point(92).unwrap(), c);
        assert!((point.origin_strength() - 92.0 * c.alpha).abs() < 1e-15);
        let sphere = NuclearPotential::new(
            NuclearModel::uniform_sphere_from_rms(92, 5.8604, &c).unwrap(),
            c,
        );
        assert_eq!(sphere.origin_strength(), 0.0);
        assert!((sphere.tail_strength() - 92.0 * c.alpha).abs() < 1e-15);
        assert!((sphere.v(3.0) + 92.0 * c.alpha / 3.0).abs() < 1e-15);
    }

    #[test]
    fn tabulated_potential_tail_extension() {
        let g = std::sync::Arc::new(build_grid(1e-5, 5.0, 2000, GridScheme::Log).unwrap());
        let za = 0.5;
        let f = RadialFunction::from_fn(g, |r| -za / r).unwrap();
        let p = TabulatedPotential::new(f, za, za);
        assert!((p.v(20.0) + za / 20.0).abs() < 1e-15);
        assert!((p.v(1e-7) + za / 1e-7).abs() < 1e-8 * (za / 1e-7));
        assert!((p.v(2.0) + za / 2.0).abs() < 1e-8 * (za / 2.0));
    }

    #[test]
    fn sum_and_scale_compose() {
        let c = PhysicalConstants::default();
        let a: Arc<dyn CentralPotential> =
            Arc::new(NuclearPotential::new(NuclearModel::point(1).unwrap(), c));
        let s = SumPotential::new(vec![a.clone(), a.clone()]);
        assert!((s.v(1.0) - 2.0 * a.v(1.0)).abs() < 1e-18);
        let h = ScaledPotential::new(a.clone(), 0.5);
        assert!((h.v(2.0) - 0.5 * a.v(2.0)).abs() < 1e-18);
        assert!((h.tail_strength() - 0.5 * a.tail_strength()).abs() < 1e-18);
    }
}
