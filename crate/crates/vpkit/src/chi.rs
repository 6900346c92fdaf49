//! The χₙ exponential-type integrals, the radial vacuum-polarization kernel
//! f(r,r′), the analytic uniform-sphere polarization density and the
//! polarization / electrostatic potentials of arbitrary radial densities.
//!
//! Charge-density conventions: vacuum-polarization densities are carried in
//! "eρ" scale (one factor of the coupling e included, with e² = α), so that
//! a bare nuclear density of charge number Z corresponds to α·ρ and the
//! charge number is recovered as (1/α)·∫ 4πr² ρ dr.

use std::f64::consts::PI;
use std::sync::Arc;

use once_cell::sync::Lazy;

use crate::consts::ALPHA;
use crate::error::{Result, VpError};
use crate::grid::{RadialFunction, RadialGrid};
use crate::nuclear::{NuclearModel, NuclearShape};
use crate::quad::adaptive_gk;

/// Beyond this argument the χₙ are below the double-precision noise floor.
pub const CHI_Z_MAX: f64 = 60.0;

/// Separations below this are clamped when evaluating the kernel f(r,r′);
/// the kernel singularity is integrable and the clamp sits far below any
/// usable grid resolution.
pub const KERNEL_CLAMP: f64 = 1e-9;

/// χₙ(z) = ∫₁^∞ dξ √(1−1/ξ²)(1 + 1/2ξ²) e^{−zξ}/ξⁿ, evaluated by direct
/// adaptive quadrature after the substitution 1/ξ = sin θ, which removes
/// the square-root endpoint singularity:
///
///   χₙ(z) = ∫₀^{π/2} dθ cos²θ sin^{n−2}θ (1 + sin²θ/2) e^{−z/sin θ}.
pub fn chi(n: u32, z: f64) -> Result<f64> {
    if !(1..=4).contains(&n) {
        return Err(VpError::Argument(format!("chi order must be 1..=4, got {n}")));
    }
    if !(z >= 0.0) || !z.is_finite() {
        return Err(VpError::Domain(format!("chi argument must be finite and >= 0, got {z}")));
    }
    if n == 1 && z == 0.0 {
        return Err(VpError::Domain(
            "chi(1, 0) diverges logarithmically".into(),
        ));
    }
    if z > CHI_Z_MAX {
        return Ok(0.0);
    }
    let integrand = move |theta: f64| {
        let s = theta.sin();
        if s <= 0.0 {
            return 0.0;
        }
        let damp = if z == 0.0 { 1.0 } else { (-z / s).exp() };
        if damp == 0.0 {
            return 0.0;
        }
        let c = theta.cos();
        c * c * s.powi(n as i32 - 2) * (1.0 + 0.5 * s * s) * damp
    };
    // For large z the integrand is confined to a boundary layer of width
    // ~sqrt(2/z) at θ = π/2; seed the subdivision there and near θ = 0 for
    // the n = 1 case.
    let w = (2.0 / (z + 1.0)).sqrt().min(0.5);
    let splits = [
        1e-4,
        1e-2,
        0.1,
        0.5,
        1.0,
        PI / 2.0 - 5.0 * w,
        PI / 2.0 - w,
    ];
    Ok(adaptive_gk(integrand, 0.0, PI / 2.0, &splits, 1e-12, 1e-300))
}

/// Log-log interpolation table for one χₙ, spanning z ∈ [1e−10, 60].
pub struct ChiTable {
    n: u32,
    ln_z0: f64,
    inv_dlnz: f64,
    ln_vals: Vec<f64>,
}

const TABLE_Z_MIN: f64 = 1e-13;
const TABLE_LEN: usize = 32768;

impl ChiTable {
    fn build(n: u32) -> Self {
        let ln_z0 = TABLE_Z_MIN.ln();
        let ln_z1 = CHI_Z_MAX.ln();
        let dlnz = (ln_z1 - ln_z0) / (TABLE_LEN - 1) as f64;
        let ln_vals = (0..TABLE_LEN)
            .map(|i| {
                let z = (ln_z0 + i as f64 * dlnz).exp();
                let v = chi(n, z).expect("table build in valid domain");
                // Near z_max the true value (~1e−27) can be swamped by
                // quadrature noise and come out nonpositive; floor it so
                // the log-log table stays finite.
                v.max(f64::MIN_POSITIVE).ln()
            })
            .collect();
        Self {
            n,
            ln_z0,
            inv_dlnz: 1.0 / dlnz,
            ln_vals,
        }
    }

    /// Interpolated χₙ(z); clamps below the table floor (where χₙ for n ≥ 2
    /// is flat to ~1e−9 and the kernel clamp keeps n = 1 away from its
    /// divergence) and underflows to zero above z_max.
    pub fn eval(&self, z: f64) -> f64 {
        debug_assert!(z >= 0.0);
        if z > CHI_Z_MAX {
            return 0.0;
        }
        let t = ((z.max(TABLE_Z_MIN).ln() - self.ln_z0) * self.inv_dlnz)
            .clamp(0.0, (TABLE_LEN - 1) as f64);
        let i = (t as usize).clamp(1, TABLE_LEN - 3);
        // Cubic Lagrange on the uniform ln z mesh around node i.
        let s = t - i as f64;
        let v = &self.ln_vals;
        let ln_chi = -s * (s - 1.0) * (s - 2.0) / 6.0 * v[i - 1]
            + (s + 1.0) * (s - 1.0) * (s - 2.0) / 2.0 * v[i]
            - (s + 1.0) * s * (s - 2.0) / 2.0 * v[i + 1]
            + (s + 1.0) * s * (s - 1.0) / 6.0 * v[i + 2];
        ln_chi.exp()
    }

    pub fn order(&self) -> u32 {
        self.n
    }
}

static CHI_TABLES: Lazy<[ChiTable; 4]> =
    Lazy::new(|| [1, 2, 3, 4].map(ChiTable::build));

/// Table-interpolated χₙ(z) for hot paths (kernel and density evaluation).
pub fn chi_cached(n: u32, z: f64) -> f64 {
    CHI_TABLES[(n - 1) as usize].eval(z)
}

/// Radial vacuum-polarization kernel
/// f(r,r′) = −(α/3π)·(1/2rr′)·[χ₂(2|r−r′|) − χ₂(2(r+r′))].
///
/// Manifestly symmetric in (r, r′) and negative everywhere (χ₂ is strictly
/// decreasing). |r−r′| is clamped to `KERNEL_CLAMP`.
pub fn uehling_kernel_f(r: f64, r_prime: f64) -> Result<f64> {
    if !(r > 0.0) || !(r_prime > 0.0) {
        return Err(VpError::Domain(format!(
            "kernel radii must be positive, got ({r}, {r_prime})"
        )));
    }
    let d = (r - r_prime).abs().max(KERNEL_CLAMP);
    let s = r + r_prime;
    Ok(-(ALPHA / (3.0 * PI)) / (2.0 * r * r_prime)
        * (chi_cached(2, 2.0 * d) - chi_cached(2, 2.0 * s)))
}

/// Renormalized first-order polarization charge density induced by a
/// uniformly charged sphere, in eρ scale:
///
///   eρ(r) = (Zα/4πR0²)(α/πr)·{ sign(R0−r)χ₁(2|R0−r|) − χ₁(2(R0+r))
///            + (1/2R0)[χ₂(2|R0−r|) − χ₂(2(R0+r))] }.
///
/// The χ₁ term carries an integrable logarithmic singularity at r = R0;
/// callers never evaluate exactly at R0 (the separation is clamped the same
/// way as in the kernel).
pub fn uehling_density_uniform_sphere(model: &NuclearModel, r: f64, alpha: f64) -> Result<f64> {
    if model.shape != NuclearShape::UniformSphere {
        return Err(VpError::UnsupportedModel(
            "closed-form polarization density requires the uniform-sphere model".into(),
        ));
    }
    if !(r > 0.0) {
        return Err(VpError::Domain(format!("radius must be positive, got {r}")));
    }
    let r0 = model.r0;
    // Tighter clamp than the kernel's: the surface log singularity must be
    // resolved well enough that the interior-charge quadrature reproduces
    // the closed form to 1e-8.
    let d = (r0 - r).abs().max(1e-12);
    let s = r0 + r;
    let sign = if r < r0 { 1.0 } else { -1.0 };
    let za = model.z as f64 * alpha;
    let bracket = sign * chi_cached(1, 2.0 * d) - chi_cached(1, 2.0 * s)
        + (chi_cached(2, 2.0 * d) - chi_cached(2, 2.0 * s)) / (2.0 * r0);
    Ok(za / (4.0 * PI * r0 * r0) * (alpha / (PI * r)) * bracket)
}

/// Induced vacuum charge inside the nuclear radius (in units of e, i.e.
/// already divided by nothing — this is ∫₀^{R0} 4πr² eρ dr with the eρ of
/// `uehling_density_uniform_sphere`):
///
///   eQ = (Zα/2R0)(α/π)[χ₂(0) + χ₂(4R0) + χ₃(4R0)/R0 + (χ₄(4R0)−χ₄(0))/(2R0)²].
pub fn induced_charge_interior(model: &NuclearModel, alpha: f64) -> Result<f64> {
    if model.shape != NuclearShape::UniformSphere {
        return Err(VpError::UnsupportedModel(
            "interior-charge closed form requires the uniform-sphere model".into(),
        ));
    }
    let r0 = model.r0;
    let za = model.z as f64 * alpha;
    let bracket = chi(2, 0.0)?
        + chi(2, 4.0 * r0)?
        + chi(3, 4.0 * r0)? / r0
        + (chi(4, 4.0 * r0)? - chi(4, 0.0)?) / (2.0 * r0).powi(2);
    Ok(za / (2.0 * r0) * (alpha / PI) * bracket)
}

/// First-order polarization potential of an analytically supplied radial
/// charge density in eρ scale: V(r) = ∫_a^b dr′ 4πr′² eρ(r′) f(r,r′),
/// evaluated on the output `grid` by adaptive quadrature, splitting at the
/// kernel kink r′ = r and at caller-supplied radii where the density itself
/// is non-smooth (e.g. the nuclear radius).
pub fn uehling_potential_of_fn(
    density: impl Fn(f64) -> f64 + Sync,
    a: f64,
    b: f64,
    grid: &Arc<RadialGrid>,
    density_splits: &[f64],
) -> Result<RadialFunction> {
    use rayon::prelude::*;
    if !(a > 0.0 && b > a) {
        return Err(VpError::Argument(format!(
            "density span must satisfy 0 < a < b, got [{a}, {b}]"
        )));
    }
    let values: Vec<f64> = grid
        .points()
        .par_iter()
        .map(|&r| {
            let mut splits: Vec<f64> = density_splits.to_vec();
            splits.push(r);
            splits.push(0.5 * r);
            splits.push(2.0 * r);
            let f = |rp: f64| {
                4.0 * PI * rp * rp * density(rp) * uehling_kernel_f(r, rp).unwrap_or(0.0)
            };
            adaptive_gk(f, a, b, &splits, 1e-9, 1e-300)
        })
        .collect();
    RadialFunction::new(grid.clone(), values)
}

/// As `uehling_potential_of_fn`, with the density interpolated from a
/// tabulated `RadialFunction` over its own grid span. Intended for smooth
/// densities; step-like densities should go through the closure variant
/// with their analytic form.
pub fn uehling_potential_of_density(
    density: &RadialFunction,
    grid: &Arc<RadialGrid>,
    density_splits: &[f64],
) -> Result<RadialFunction> {
    uehling_potential_of_fn(
        |r| density.eval(r),
        density.grid().r_min(),
        density.grid().r_max(),
        grid,
        density_splits,
    )
}

/// Electrostatic (electron potential-energy) potential of a radial charge
/// density in eρ scale:
///
///   V(r) = −[ (1/r)·∫₀^r 4πr′² eρ dr′ + ∫_r^∞ 4πr′ eρ dr′ ],
///
/// so that the nuclear density α·ρ_nuc yields −Zα/r outside the nucleus.
/// Both running integrals are accumulated on the density's own grid.
pub fn electrostatic_potential_of_density(density: &RadialFunction) -> Result<RadialFunction> {
    let grid = density.grid().clone();
    let pts = grid.points();
    let q_r2: Vec<f64> = pts
        .iter()
        .zip(density.values())
        .map(|(&r, &v)| 4.0 * PI * r * r * v)
        .collect();
    let q_r1: Vec<f64> = pts
        .iter()
        .zip(density.values())
        .map(|(&r, &v)| 4.0 * PI * r * v)
        .collect();
    let inner = grid.cumulative_integral(&q_r2);
    let outer_full = grid.cumulative_integral(&q_r1);
    let outer_total = *outer_full.last().unwrap();
    let values: Vec<f64> = (0..pts.len())
        .map(|i| -(inner[i] / pts[i] + (outer_total - outer_full[i])))
        .collect();
    RadialFunction::new(grid, values)
}
