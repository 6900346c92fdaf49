//! Complete discretized Dirac spectra in a finite spherical cavity.
//!
//! The radial Dirac operator for one κ channel is diagonalized in a
//! B-spline basis with dual kinetic balance: each spline B generates the
//! two-component functions
//!
//!   u⁺ = ( B, (B′ + κB/r)/2 )   and   u⁻ = ( (B′ − κB/r)/2, B ),
//!
//! which suppresses spurious states while discretizing both continua. The
//! first and last splines are dropped, enforcing regularity at the origin
//! and G(R_cav) = 0 at the cavity wall.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::dirac::potential::CentralPotential;
use crate::error::{Result, VpError};
use crate::quad::gauss_legendre;

const SPLINE_ORDER: usize = 7;
const QUAD_PER_INTERVAL: usize = 14;

/// B-spline values, first and second derivatives of all splines of the
/// given order on `knots`, evaluated at one point.
fn bspline_row(knots: &[f64], order: usize, x: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = knots.len() - order;
    // Order-1 (piecewise-constant) seed, then Cox-de Boor up to `order`,
    // retaining the two top levels for derivative recursions.
    let nk = knots.len();
    let mut b = vec![0.0; nk - 1];
    for (i, bi) in b.iter_mut().enumerate() {
        // Half-open intervals, closed at the right end of the domain.
        if (knots[i] <= x && x < knots[i + 1])
            || (x >= knots[i] && i + 2 == nk && x <= knots[i + 1])
        {
            *bi = 1.0;
        }
    }
    let mut lower2 = Vec::new(); // order-2 below the top (for B″)
    let mut lower1 = Vec::new(); // order-1 below the top (for B′)
    for k in 2..=order {
        let m = nk - k;
        let mut next = vec![0.0; m];
        for i in 0..m {
            let d1 = knots[i + k - 1] - knots[i];
            let d2 = knots[i + k] - knots[i + 1];
            let mut v = 0.0;
            if d1 > 0.0 {
                v += (x - knots[i]) / d1 * b[i];
            }
            if d2 > 0.0 {
                v += (knots[i + k] - x) / d2 * b[i + 1];
            }
            next[i] = v;
        }
        if k == order - 1 {
            lower1 = next.clone();
        }
        if k == order.saturating_sub(2) {
            lower2 = next.clone();
        }
        b = next;
    }
    let deriv_from = |low: &[f64], k: usize| -> Vec<f64> {
        let mut d = vec![0.0; knots.len() - k];
        for (i, di) in d.iter_mut().enumerate() {
            let d1 = knots[i + k - 1] - knots[i];
            let d2 = knots[i + k] - knots[i + 1];
            let mut v = 0.0;
            if d1 > 0.0 {
                v += low[i] / d1;
            }
            if d2 > 0.0 {
                v -= low[i + 1] / d2;
            }
            *di = (k as f64 - 1.0) * v;
        }
        d
    };
    let db = deriv_from(&lower1, order);
    let d1_of_lower = deriv_from(&lower2, order - 1);
    let ddb = deriv_from(&d1_of_lower, order);
    (b[..n].to_vec(), db[..n].to_vec(), ddb[..n].to_vec())
}

/// The shared DKB discretization for one κ channel.
pub struct DkbBasis {
    pub kappa: i32,
    pub cavity_radius: f64,
    /// Number of retained splines per component.
    pub n_b: usize,
    /// Quadrature nodes and weights covering (0, R_cav).
    quad_x: Vec<f64>,
    quad_w: Vec<f64>,
    /// Component tables at the quadrature nodes: g, f, g′, f′ for each of
    /// the 2·n_b basis functions (row-major: basis index × node).
    g: DMatrix<f64>,
    f: DMatrix<f64>,
    dg: DMatrix<f64>,
    df: DMatrix<f64>,
}

impl DkbBasis {
    /// Build the basis on exponentially clustered breakpoints, optionally
    /// forcing one interior breakpoint onto the nuclear radius.
    pub fn new(
        kappa: i32,
        basis_size: usize,
        cavity_radius: f64,
        nuclear_radius: Option<f64>,
    ) -> Result<Self> {
        if kappa == 0 {
            return Err(VpError::Argument("kappa must be nonzero".into()));
        }
        if basis_size < 20 {
            return Err(VpError::Argument(format!(
                "basis_size must be at least 20, got {basis_size}"
            )));
        }
        if !(cavity_radius > 0.0) {
            return Err(VpError::Argument("cavity radius must be positive".into()));
        }
        let k = SPLINE_ORDER;
        // basis_size retained splines = (intervals + k - 1) - 2.
        let m = basis_size + 3 - k;
        let sigma: f64 = 9.0;
        let mut tau: Vec<f64> = (0..=m)
            .map(|j| {
                cavity_radius * ((sigma * j as f64 / m as f64).exp() - 1.0) / (sigma.exp() - 1.0)
            })
            .collect();
        tau[m] = cavity_radius;
        if let Some(r0) = nuclear_radius {
            if r0 > 0.0 && r0 < cavity_radius {
                // Snap the nearest interior breakpoint onto the nuclear
                // surface so the potential kink never crosses a cell.
                let j = (1..m)
                    .min_by(|&a, &b| {
                        (tau[a] - r0).abs().partial_cmp(&(tau[b] - r0).abs()).unwrap()
                    })
                    .unwrap();
                tau[j] = r0;
            }
        }
        let mut knots = Vec::with_capacity(m + 2 * k - 1);
        knots.extend(std::iter::repeat_n(0.0, k));
        knots.extend_from_slice(&tau[1..m]);
        knots.extend(std::iter::repeat_n(cavity_radius, k));
        let n_splines = knots.len() - k;
        debug_assert_eq!(n_splines, m + k - 1);

        let (gx, gw) = gauss_legendre(QUAD_PER_INTERVAL);
        let mut quad_x = Vec::with_capacity(m * QUAD_PER_INTERVAL);
        let mut quad_w = Vec::with_capacity(m * QUAD_PER_INTERVAL);
        for j in 0..m {
            let (a, b) = (tau[j], tau[j + 1]);
            let c = 0.5 * (a + b);
            let h = 0.5 * (b - a);
            for (x, w) in gx.iter().zip(&gw) {
                quad_x.push(c + h * x);
                quad_w.push(h * w);
            }
        }

        let n_b = n_splines - 2;
        let nq = quad_x.len();
        let mut g = DMatrix::zeros(2 * n_b, nq);
        let mut f = DMatrix::zeros(2 * n_b, nq);
        let mut dg = DMatrix::zeros(2 * n_b, nq);
        let mut df = DMatrix::zeros(2 * n_b, nq);
        let kap = kappa as f64;
        for (q, &x) in quad_x.iter().enumerate() {
            let (bv, bd, bdd) = bspline_row(&knots, k, x);
            for i in 0..n_b {
                let s = i + 1; // dropped boundary splines
                let (b0, b1, b2) = (bv[s], bd[s], bdd[s]);
                let kb_r = kap * b0 / x;
                let kb_r_d = kap * (b1 / x - b0 / (x * x));
                // u⁺ = (B, (B′ + κB/r)/2)
                g[(i, q)] = b0;
                dg[(i, q)] = b1;
                f[(i, q)] = 0.5 * (b1 + kb_r);
                df[(i, q)] = 0.5 * (b2 + kb_r_d);
                // u⁻ = ((B′ − κB/r)/2, B)
                g[(n_b + i, q)] = 0.5 * (b1 - kb_r);
                dg[(n_b + i, q)] = 0.5 * (b2 - kb_r_d);
                f[(n_b + i, q)] = b0;
                df[(n_b + i, q)] = b1;
            }
        }

        Ok(Self {
            kappa,
            cavity_radius,
            n_b,
            quad_x,
            quad_w,
            g,
            f,
            dg,
            df,
        })
    }

    pub fn quad_points(&self) -> &[f64] {
        &self.quad_x
    }

    pub fn quad_weights(&self) -> &[f64] {
        &self.quad_w
    }

    fn dim(&self) -> usize {
        2 * self.n_b
    }

    /// Overlap and Hamiltonian matrices for the given potential.
    fn assemble(&self, pot: &dyn CentralPotential) -> (DMatrix<f64>, DMatrix<f64>) {
        let n = self.dim();
        let nq = self.quad_x.len();
        let kap = self.kappa as f64;
        let mut s = DMatrix::zeros(n, n);
        let mut h = DMatrix::zeros(n, n);
        let v: Vec<f64> = self.quad_x.iter().map(|&r| pot.v(r)).collect();
        for q in 0..nq {
            let w = self.quad_w[q];
            let r = self.quad_x[q];
            let vq = v[q];
            for a in 0..n {
                let (ga, fa) = (self.g[(a, q)], self.f[(a, q)]);
                if ga == 0.0 && fa == 0.0 {
                    continue;
                }
                for b in 0..n {
                    let (gb, fb) = (self.g[(b, q)], self.f[(b, q)]);
                    let (dgb, dfb) = (self.dg[(b, q)], self.df[(b, q)]);
                    s[(a, b)] += w * (ga * gb + fa * fb);
                    h[(a, b)] += w
                        * (ga * ((vq + 1.0) * gb - dfb + kap * fb / r)
                            + fa * (dgb + kap * gb / r + (vq - 1.0) * fb));
                }
            }
        }
        // The derivative terms are symmetric only up to quadrature error on
        // the non-polynomial 1/r factors; symmetrize explicitly.
        let ht = h.transpose();
        h = 0.5 * (h + ht);
        (s, h)
    }
}

/// One discrete cavity level.
pub struct CavityLevel {
    /// Total energy in natural units (rest mass included); spans both
    /// discretized continua.
    pub energy: f64,
    /// Expansion coefficients over the 2·n_b DKB basis functions.
    pub coeffs: DVector<f64>,
}

/// The complete discretized spectrum of one κ channel in one potential.
pub struct CavitySpectrum {
    pub basis: Arc<DkbBasis>,
    pub potential_tag: String,
    /// Levels sorted by increasing energy.
    pub levels: Vec<CavityLevel>,
}

/// Diagonalize the radial Dirac operator for `kappa` in the cavity.
pub fn cavity_spectrum(
    pot: &dyn CentralPotential,
    basis: &Arc<DkbBasis>,
    tag: &str,
) -> Result<CavitySpectrum> {
    let (s, h) = basis.assemble(pot);
    let chol = nalgebra::Cholesky::new(s.clone()).ok_or_else(|| {
        VpError::Internal("overlap matrix not positive definite".into())
    })?;
    let l = chol.l();
    // A = L⁻¹ H L⁻ᵀ.
    let y = l
        .solve_lower_triangular(&h)
        .ok_or_else(|| VpError::Internal("triangular solve failed".into()))?;
    let a = l
        .solve_lower_triangular(&y.transpose())
        .ok_or_else(|| VpError::Internal("triangular solve failed".into()))?;
    let a = 0.5 * (&a + a.transpose());
    let eig = nalgebra::SymmetricEigen::new(a);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].partial_cmp(&eig.eigenvalues[j]).unwrap());
    let lt = l.transpose();
    let mut levels = Vec::with_capacity(order.len());
    for &i in &order {
        let q = eig.eigenvectors.column(i).into_owned();
        let c = lt
            .solve_upper_triangular(&q)
            .ok_or_else(|| VpError::Internal("back-substitution failed".into()))?;
        levels.push(CavityLevel {
            energy: eig.eigenvalues[i],
            coeffs: c,
        });
    }
    Ok(CavitySpectrum {
        basis: basis.clone(),
        potential_tag: tag.to_string(),
        levels,
    })
}

impl CavitySpectrum {
    pub fn energies(&self) -> Vec<f64> {
        self.levels.iter().map(|l| l.energy).collect()
    }

    /// Lowest level above the gap center (the "1s-like" state for κ = −1
    /// with an attractive potential), with its radial node count implied by
    /// its position among positive levels.
    pub fn positive_levels(&self) -> impl Iterator<Item = &CavityLevel> {
        self.levels.iter().filter(|l| l.energy > 0.0)
    }

    /// Verify there is no level inside the free gap (used as the spurious-
    /// state diagnostic for the free problem).
    pub fn assert_free_gap(&self) -> Result<()> {
        for l in &self.levels {
            if l.energy.abs() < 1.0 - 1e-6 {
                return Err(VpError::Internal(format!(
                    "spurious cavity level at E = {} inside the free gap",
                    l.energy
                )));
            }
        }
        Ok(())
    }

    /// (G, F) of every level at the quadrature nodes: two (levels × nodes)
    /// matrices.
    fn components_at_quad(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let b = &self.basis;
        let n = b.dim();
        let mut c = DMatrix::zeros(self.levels.len(), n);
        for (i, l) in self.levels.iter().enumerate() {
            c.row_mut(i).copy_from(&l.coeffs.transpose());
        }
        (&c * &b.g, &c * &b.f)
    }

    /// sign(ε)-weighted spectral density Σₙ sign(εₙ)(Gₙ² + Fₙ²)(r) at the
    /// quadrature nodes. Positive and negative levels are paired in
    /// |ε|-order before summation to maximize floating-point cancellation.
    pub fn signed_density(&self) -> Vec<f64> {
        let (g, f) = self.components_at_quad();
        let nq = self.basis.quad_x.len();
        let pos: Vec<usize> = (0..self.levels.len())
            .filter(|&i| self.levels[i].energy > 0.0)
            .collect();
        let mut neg: Vec<usize> = (0..self.levels.len())
            .filter(|&i| self.levels[i].energy <= 0.0)
            .collect();
        // negatives ascending in |ε|.
        neg.reverse();
        let mut out = vec![0.0; nq];
        let pairs = pos.len().min(neg.len());
        for j in 0..pairs {
            let (p, m) = (pos[j], neg[j]);
            for q in 0..nq {
                let dp = g[(p, q)] * g[(p, q)] + f[(p, q)] * f[(p, q)];
                let dm = g[(m, q)] * g[(m, q)] + f[(m, q)] * f[(m, q)];
                out[q] += dp - dm;
            }
        }
        for &p in pos.iter().skip(pairs) {
            for q in 0..nq {
                out[q] += g[(p, q)] * g[(p, q)] + f[(p, q)] * f[(p, q)];
            }
        }
        for &m in neg.iter().skip(pairs) {
            for q in 0..nq {
                out[q] -= g[(m, q)] * g[(m, q)] + f[(m, q)] * f[(m, q)];
            }
        }
        out
    }

    /// Gram matrix of the levels under the basis overlap (identity when the
    /// eigensolve is healthy).
    pub fn gram_deviation(&self) -> f64 {
        let (g, f) = self.components_at_quad();
        let nl = self.levels.len();
        let w = &self.basis.quad_w;
        let mut worst = 0.0f64;
        // Sampled pairs only; full O(n²·nq) is unnecessary for a diagnostic.
        let step = (nl / 24).max(1);
        for i in (0..nl).step_by(step) {
            for j in (0..nl).step_by(step) {
                let mut s = 0.0;
                for q in 0..w.len() {
                    s += w[q] * (g[(i, q)] * g[(j, q)] + f[(i, q)] * f[(j, q)]);
                }
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((s - target).abs());
            }
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::consts::PhysicalConstants;
    use crate::dirac::potential::{NuclearPotential, ZeroPotential};
    use crate::dirac::shoot::{solve_bound_state, ShootParams};
    use crate::nuclear::NuclearModel;

    #[test]
    fn bspline_partition_of_unity() {
        let knots = [0.0, 0.0, 0.0, 0.0, 0.3, 0.7, 1.2, 2.0, 2.0, 2.0, 2.0];
        for x in [0.01, 0.3, 0.55, 1.0, 1.9] {
            let (b, db, _) = bspline_row(&knots, 4, x);
            let s: f64 = b.iter().sum();
            assert!((s - 1.0).abs() < 1e-12, "x={x}: sum={s}");
            let ds: f64 = db.iter().sum();
            assert!(ds.abs() < 1e-10, "x={x}: dsum={ds}");
        }
    }

    #[test]
    fn bspline_second_derivative_consistent() {
        let knots = [0.0, 0.0, 0.0, 0.0, 0.0, 0.4, 0.9, 1.5, 2.5, 2.5, 2.5, 2.5, 2.5];
        let h = 1e-6;
        for x in [0.2, 0.6, 1.2, 2.0] {
            let (_, d0, dd0) = bspline_row(&knots, 5, x);
            let (_, dp, _) = bspline_row(&knots, 5, x + h);
            let (_, dm, _) = bspline_row(&knots, 5, x - h);
            for i in 0..d0.len() {
                let fd = (dp[i] - dm[i]) / (2.0 * h);
                assert!(
                    (fd - dd0[i]).abs() < 1e-4 * dd0[i].abs().max(1.0),
                    "x={x}, i={i}: {fd} vs {}",
                    dd0[i]
                );
            }
        }
    }

    #[test]
    fn free_spectrum_gap_and_symmetry() {
        // Charge conjugation maps (E, κ) → (−E, −κ), so the positive free
        // spectrum of κ must mirror the negative free spectrum of −κ.
        for kappa in [-1, 1, -2, 2] {
            let basis = Arc::new(DkbBasis::new(kappa, 60, 5.0, None).unwrap());
            let sp = cavity_spectrum(&ZeroPotential, &basis, "free").unwrap();
            sp.assert_free_gap().unwrap();
            let e = sp.energies();
            assert_eq!(e.len(), 2 * basis.n_b);
            let npos = e.iter().filter(|&&x| x > 0.0).count();
            assert_eq!(npos * 2, e.len());

            let conj = Arc::new(DkbBasis::new(-kappa, 60, 5.0, None).unwrap());
            let spc = cavity_spectrum(&ZeroPotential, &conj, "free").unwrap();
            let ec = spc.energies();
            let ncpos = ec.iter().filter(|&&x| x > 0.0).count();
            for j in 0..30.min(npos).min(ncpos) {
                let ep = e[npos + j];
                let em = -ec[ncpos - 1 - j];
                assert!(
                    ((ep - em) / ep).abs() < 1e-8,
                    "kappa={kappa}, j={j}: {ep} vs {em}"
                );
            }
        }
    }

    #[test]
    fn orthonormal_levels() {
        let c = PhysicalConstants::default();
        let pot = NuclearPotential::new(
            NuclearModel::uniform_sphere_from_rms(92, 5.8604, &c).unwrap(),
            c,
        );
        let basis = Arc::new(DkbBasis::new(-1, 60, 5.0, Some(pot.model().r0)).unwrap());
        let sp = cavity_spectrum(&pot, &basis, "coulomb").unwrap();
        assert!(sp.gram_deviation() < 1e-10);
    }

    #[test]
    fn ground_state_matches_shooting() {
        // A cavity wide enough that the hard-wall shift on the 1s level is
        // below the comparison tolerance (at the production radius of 5 the
        // wall shift itself is ~1e-2 and entirely physical).
        let c = PhysicalConstants::default();
        for &(z, rms) in &[(92u32, 5.8604f64), (82, 5.5012)] {
            let model = NuclearModel::uniform_sphere_from_rms(z, rms, &c).unwrap();
            let pot = NuclearPotential::new(model, c);
            let basis = Arc::new(DkbBasis::new(-1, 60, 20.0, Some(model.r0)).unwrap());
            let sp = cavity_spectrum(&pot, &basis, "coulomb").unwrap();
            let e_cav = sp.positive_levels().next().unwrap().energy;
            let e_shoot = solve_bound_state(&pot, -1, 0, &ShootParams::default())
                .unwrap()
                .energy;
            assert!(
                ((e_cav - e_shoot) / e_shoot).abs() < 1e-6,
                "Z={z}: {e_cav} vs {e_shoot}"
            );
        }
    }

    #[test]
    fn point_coulomb_ground_state_close() {
        // The r^gamma origin behavior is not polynomial, so the basis error
        // is larger than for extended nuclei; assert the documented level.
        let c = PhysicalConstants::default();
        let pot = NuclearPotential::new(NuclearModel::point(92).unwrap(), c);
        let basis = Arc::new(DkbBasis::new(-1, 80, 20.0, None).unwrap());
        let sp = cavity_spectrum(&pot, &basis, "coulomb-point").unwrap();
        let e_cav = sp.positive_levels().next().unwrap().energy;
        let want = crate::dirac::shoot::analytic_coulomb_energy(92, 1, -1, c.alpha).unwrap();
        assert!(((e_cav - want) / want).abs() < 1e-4, "{e_cav} vs {want}");
    }

    #[test]
    fn signed_density_of_free_problem_vanishes_nowhere_spuriously() {
        // The free signed density is not zero pointwise (boundary effects),
        // but its bracket against an identical spectrum is; here we simply
        // check it is finite and the κ = ±1 channels are consistent in size.
        let basis = Arc::new(DkbBasis::new(-1, 60, 5.0, None).unwrap());
        let sp = cavity_spectrum(&ZeroPotential, &basis, "free").unwrap();
        let d = sp.signed_density();
        assert_eq!(d.len(), basis.quad_points().len());
        assert!(d.iter().all(|x| x.is_finite()));
    }
}
