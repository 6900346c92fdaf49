//! Nuclear charge-distribution models and their bare Coulomb potentials.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::consts::PhysicalConstants;
use crate::error::{Result, VpError};
use crate::grid::{RadialFunction, RadialGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NuclearShape {
    Point,
    UniformSphere,
    SphericalShell,
}

/// A spherically symmetric nuclear charge distribution.
///
/// Densities are charge-number densities: ∫ 4π r² ρ dr = Z. Potentials are
/// the electron potential energy −Zα/r (and its interior continuation) in
/// natural units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NuclearModel {
    pub z: u32,
    pub shape: NuclearShape,
    /// Model radius in natural units; 0 for a point nucleus.
    pub r0: f64,
    /// Root-mean-square radius in fm, when the model was built from one.
    pub rms_fm: Option<f64>,
}

impl NuclearModel {
    pub fn point(z: u32) -> Result<Self> {
        if z == 0 {
            return Err(VpError::Argument("Z must be at least 1".into()));
        }
        Ok(Self {
            z,
            shape: NuclearShape::Point,
            r0: 0.0,
            rms_fm: None,
        })
    }

    /// Uniform ball of charge with the given rms radius: R0 = sqrt(5/3)·rms.
    pub fn uniform_sphere_from_rms(z: u32, rms_fm: f64, consts: &PhysicalConstants) -> Result<Self> {
        if z == 0 {
            return Err(VpError::Argument("Z must be at least 1".into()));
        }
        if !(rms_fm > 0.0) {
            return Err(VpError::Argument(format!("rms radius must be positive, got {rms_fm}")));
        }
        Ok(Self {
            z,
            shape: NuclearShape::UniformSphere,
            r0: consts.fm_to_natural((5.0f64 / 3.0).sqrt() * rms_fm),
            rms_fm: Some(rms_fm),
        })
    }

    /// Thin charged shell with the given rms radius: R0 = rms.
    pub fn spherical_shell_from_rms(z: u32, rms_fm: f64, consts: &PhysicalConstants) -> Result<Self> {
        if z == 0 {
            return Err(VpError::Argument("Z must be at least 1".into()));
        }
        if !(rms_fm > 0.0) {
            return Err(VpError::Argument(format!("rms radius must be positive, got {rms_fm}")));
        }
        Ok(Self {
            z,
            shape: NuclearShape::SphericalShell,
            r0: consts.fm_to_natural(rms_fm),
            rms_fm: Some(rms_fm),
        })
    }

    /// Same shape and Z with an explicit model radius in natural units.
    pub fn with_r0(z: u32, shape: NuclearShape, r0: f64) -> Result<Self> {
        if z == 0 {
            return Err(VpError::Argument("Z must be at least 1".into()));
        }
        if shape != NuclearShape::Point && !(r0 > 0.0) {
            return Err(VpError::Argument(format!(
                "extended shapes need R0 > 0, got {r0}"
            )));
        }
        Ok(Self {
            z,
            shape,
            r0: if shape == NuclearShape::Point { 0.0 } else { r0 },
            rms_fm: None,
        })
    }

    /// Effective Coulomb strength Zα.
    pub fn z_alpha(&self, consts: &PhysicalConstants) -> f64 {
        self.z as f64 * consts.alpha
    }
}

/// Tabulate the charge-number density of an extended model on `grid`.
///
/// The shell model is represented as its total charge spread over the single
/// grid cell containing R0, normalized so the grid quadrature of 4πr²ρ
/// reproduces Z exactly; the shell potential is always taken from the
/// analytic form, the density only enters explicitly integrated quantities.
pub fn charge_density(model: &NuclearModel, grid: &Arc<RadialGrid>) -> Result<RadialFunction> {
    match model.shape {
        NuclearShape::Point => Err(VpError::UnsupportedModel(
            "point nucleus has no density representation".into(),
        )),
        NuclearShape::UniformSphere => {
            let r0 = model.r0;
            if r0 <= grid.r_min() || r0 >= grid.r_max() {
                return Err(VpError::Argument(format!(
                    "nuclear radius {r0} outside grid span [{}, {}]",
                    grid.r_min(),
                    grid.r_max()
                )));
            }
            let rho0 = 3.0 * model.z as f64 / (4.0 * std::f64::consts::PI * r0.powi(3));
            RadialFunction::from_fn(grid.clone(), |r| if r <= r0 { rho0 } else { 0.0 })
        }
        NuclearShape::SphericalShell => {
            let r0 = model.r0;
            if r0 <= grid.r_min() || r0 >= grid.r_max() {
                return Err(VpError::Argument(format!(
                    "nuclear radius {r0} outside grid span [{}, {}]",
                    grid.r_min(),
                    grid.r_max()
                )));
            }
            let i = grid.locate(r0);
            let mut values = vec![0.0; grid.len()];
            // Weight of 4πr²·ρ at the two cell nodes under the grid's own
            // quadrature rule; fix the node amplitudes so the integral is Z.
            let pts = grid.points();
            let w = grid.weights();
            let denom = 4.0 * std::f64::consts::PI
                * (w[i] * pts[i] * pts[i] + w[i + 1] * pts[i + 1] * pts[i + 1]);
            let amp = model.z as f64 / denom;
            values[i] = amp;
            values[i + 1] = amp;
            RadialFunction::new(grid.clone(), values)
        }
    }
}

/// Bare Coulomb potential V^C of the model, evaluated pointwise.
pub fn coulomb_potential_at(model: &NuclearModel, r: f64, consts: &PhysicalConstants) -> f64 {
    let za = model.z_alpha(consts);
    match model.shape {
        NuclearShape::Point => -za / r,
        NuclearShape::UniformSphere => {
            let r0 = model.r0;
            if r < r0 {
                -(za / (2.0 * r0)) * (3.0 - (r / r0).powi(2))
            } else {
                -za / r
            }
        }
        NuclearShape::SphericalShell => {
            let r0 = model.r0;
            if r < r0 {
                -za / r0
            } else {
                -za / r
            }
        }
    }
}

/// Bare Coulomb potential tabulated on `grid`.
pub fn coulomb_potential(
    model: &NuclearModel,
    grid: &Arc<RadialGrid>,
    consts: &PhysicalConstants,
) -> Result<RadialFunction> {
    RadialFunction::from_fn(grid.clone(), |r| coulomb_potential_at(model, r, consts))
}
