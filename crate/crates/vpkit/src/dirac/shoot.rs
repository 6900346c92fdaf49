//! Bound states of the radial Dirac equation by inward/outward shooting.
//!
//! Conventions: energies are total energies in natural units (rest mass
//! included), so bound levels lie in (0, 1). The coupled radial system for
//! the components (G, F) = (r·g, r·f) reads
//!
//!   G′ = −(κ/r) G + (E + 1 − V) F ,
//!   F′ =  (κ/r) F − (E − 1 − V) G .

use std::sync::Arc;

use crate::dirac::potential::CentralPotential;
use crate::error::{Result, VpError};
use crate::grid::{build_grid, GridScheme, RadialFunction, RadialGrid};

/// A normalized radial Dirac eigenstate.
pub struct BoundState {
    pub kappa: i32,
    pub n_radial: usize,
    /// Total energy in natural units, rest mass included.
    pub energy: f64,
    pub g: RadialFunction,
    pub f: RadialFunction,
}

impl BoundState {
    pub fn grid(&self) -> &Arc<RadialGrid> {
        self.g.grid()
    }

    /// Radial probability density G² + F² at the grid nodes.
    pub fn density(&self) -> Vec<f64> {
        self.g
            .values()
            .iter()
            .zip(self.f.values())
            .map(|(&g, &f)| g * g + f * f)
            .collect()
    }

    /// Expectation value ∫ (G² + F²) w(r) dr for a radial weight.
    pub fn expectation(&self, w: impl Fn(f64) -> f64) -> f64 {
        let grid = self.grid();
        let vals: Vec<f64> = grid
            .points()
            .iter()
            .zip(self.g.values())
            .zip(self.f.values())
            .map(|((&r, &g), &f)| (g * g + f * f) * w(r))
            .collect();
        grid.integrate(&vals)
    }
}

/// Numerical parameters of the shooting solver.
#[derive(Debug, Clone, Copy)]
pub struct ShootParams {
    /// Points of the per-state radial grid.
    pub grid_points: usize,
    /// Innermost radius of the grid.
    pub r_start: f64,
    /// Clustering radius of the log-linear grid.
    pub cluster: f64,
    /// Per-step relative tolerance of the adaptive integrator.
    pub step_tol: f64,
}

impl Default for ShootParams {
    fn default() -> Self {
        Self {
            grid_points: 4000,
            r_start: 1e-7,
            cluster: 0.02,
            step_tol: 1e-12,
        }
    }
}

/// Sommerfeld fine-structure energy of a point-Coulomb Dirac level.
pub fn analytic_coulomb_energy(z: u32, n_principal: u32, kappa: i32, alpha: f64) -> Result<f64> {
    if kappa == 0 {
        return Err(VpError::Argument("kappa must be nonzero".into()));
    }
    let n = n_principal as i64;
    let k = kappa as i64;
    if n < 1 || k.abs() > n || k == n {
        return Err(VpError::Argument(format!(
            "invalid (n, kappa) = ({n_principal}, {kappa})"
        )));
    }
    let za = z as f64 * alpha;
    let kk = kappa.unsigned_abs() as f64;
    if za >= kk {
        return Err(VpError::Domain(format!(
            "Z·alpha = {za} reaches the |kappa| = {kk} critical strength"
        )));
    }
    let gamma = (kk * kk - za * za).sqrt();
    let denom = n_principal as f64 - kk + gamma;
    Ok(1.0 / (1.0 + (za / denom).powi(2)).sqrt())
}

// Cash-Karp embedded 4(5) pair.
const CK_B: [[f64; 5]; 5] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0],
    [3.0 / 10.0, -9.0 / 10.0, 6.0 / 5.0, 0.0, 0.0],
    [-11.0 / 54.0, 5.0 / 2.0, -70.0 / 27.0, 35.0 / 27.0, 0.0],
    [
        1631.0 / 55296.0,
        175.0 / 512.0,
        575.0 / 13824.0,
        44275.0 / 110592.0,
        253.0 / 4096.0,
    ],
];
const CK_C: [f64; 6] = [
    37.0 / 378.0,
    0.0,
    250.0 / 621.0,
    125.0 / 594.0,
    0.0,
    512.0 / 1771.0,
];
const CK_E: [f64; 6] = [
    37.0 / 378.0 - 2825.0 / 27648.0,
    0.0,
    250.0 / 621.0 - 18575.0 / 48384.0,
    125.0 / 594.0 - 13525.0 / 55296.0,
    -277.0 / 14336.0,
    512.0 / 1771.0 - 1.0 / 4.0,
];

struct RadialOde<'a> {
    pot: &'a dyn CentralPotential,
    e: f64,
    kappa: f64,
}

impl RadialOde<'_> {
    #[inline]
    fn derivs(&self, r: f64, y: [f64; 2]) -> [f64; 2] {
        let v = self.pot.v(r);
        [
            -(self.kappa / r) * y[0] + (self.e + 1.0 - v) * y[1],
            (self.kappa / r) * y[1] - (self.e - 1.0 - v) * y[0],
        ]
    }

    /// One adaptive Cash-Karp span from r to r_end (either direction);
    /// mutates y in place. When |y| grows past 1e150 the state is rescaled
    /// and the accumulated log-magnitude recorded in `ls`, so off-eigenvalue
    /// probes deep in the forbidden region can never overflow.
    fn advance(&self, mut r: f64, r_end: f64, y: &mut [f64; 2], ls: &mut f64, tol: f64) {
        let dir = if r_end >= r { 1.0 } else { -1.0 };
        let mut h = (r_end - r).abs().min(0.1 * r.abs().max(1e-12));
        let span = (r_end - r).abs();
        let mut steps = 0usize;
        while (r_end - r) * dir > f64::EPSILON * r_end.abs() {
            steps += 1;
            if steps > 100_000 {
                // Step-size collapse; jump to the segment end with the last
                // accepted state rather than spinning.
                break;
            }
            h = h.min((r_end - r).abs()).max(1e-13 * span);
            loop {
                let hs = h * dir;
                let mut k = [[0.0; 2]; 6];
                k[0] = self.derivs(r, *y);
                for s in 1..6 {
                    let mut ys = *y;
                    for (j, kj) in k.iter().enumerate().take(s) {
                        ys[0] += hs * CK_B[s - 1][j] * kj[0];
                        ys[1] += hs * CK_B[s - 1][j] * kj[1];
                    }
                    let a = [0.2, 0.3, 0.6, 1.0, 0.875][s - 1];
                    k[s] = self.derivs(r + a * hs, ys);
                }
                let mut ynew = *y;
                let mut err = [0.0; 2];
                for (j, kj) in k.iter().enumerate() {
                    ynew[0] += hs * CK_C[j] * kj[0];
                    ynew[1] += hs * CK_C[j] * kj[1];
                    err[0] += hs * CK_E[j] * kj[0];
                    err[1] += hs * CK_E[j] * kj[1];
                }
                let scale = (y[0].abs() + y[1].abs() + ynew[0].abs() + ynew[1].abs()).max(1e-290);
                let emax = (err[0].abs() + err[1].abs()) / scale;
                if emax <= tol {
                    r += hs;
                    *y = ynew;
                    let mag = y[0].abs().max(y[1].abs());
                    if mag > 1e150 {
                        y[0] /= mag;
                        y[1] /= mag;
                        *ls += mag.ln();
                    }
                    let grow = if emax > 0.0 {
                        (0.9 * (tol / emax).powf(0.2)).min(5.0)
                    } else {
                        5.0
                    };
                    h *= grow;
                    break;
                }
                h *= (0.9 * (tol / emax).powf(0.25)).max(0.1);
                if h <= 1e-13 * span {
                    // Step underflow: accept to avoid an infinite loop; the
                    // eigenvalue check catches any resulting inaccuracy.
                    r += hs;
                    *y = ynew;
                    break;
                }
            }
        }
    }

    /// Integrate along an ordered node sequence, returning (y, log-scale)
    /// at every node; the true solution at node k is y_k·exp(ls_k).
    fn propagate(&self, nodes: &[f64], y0: [f64; 2], tol: f64) -> Vec<([f64; 2], f64)> {
        let mut out = Vec::with_capacity(nodes.len());
        let mut y = y0;
        let mut ls = 0.0;
        out.push((y, ls));
        for w in nodes.windows(2) {
            self.advance(w[0], w[1], &mut y, &mut ls, tol);
            out.push((y, ls));
        }
        out
    }
}

/// Starting values for the outward solution at small r.
fn origin_start(pot: &dyn CentralPotential, e: f64, kappa: i32, r: f64) -> [f64; 2] {
    let za = pot.origin_strength();
    if za.abs() > 1e-12 {
        let gamma = ((kappa * kappa) as f64 - za * za).sqrt();
        [1.0, (gamma + kappa as f64) / za]
    } else {
        let v0 = pot.v(r);
        if kappa < 0 {
            let g = 1.0;
            [g, g * (1.0 + v0 - e) * r / (2.0 * kappa.abs() as f64 + 1.0)]
        } else {
            let f = 1.0;
            [f * (e + 1.0 - v0) * r / (2.0 * kappa as f64 + 1.0), f]
        }
    }
}

/// Starting values for the decaying solution at large r.
fn tail_start(pot: &dyn CentralPotential, e: f64, kappa: i32, r: f64) -> [f64; 2] {
    let lambda = (1.0 - e * e).sqrt();
    let za = pot.tail_strength();
    let dln_g = -lambda + za * e / (lambda * r);
    let g = 1.0;
    let f = g * (dln_g + kappa as f64 / r) / (e + 1.0 - pot.v(r));
    [g, f]
}

/// Classical turning radius: the root of V(r) = E − 1.
fn turning_radius(pot: &dyn CentralPotential, e: f64) -> Result<f64> {
    let target = e - 1.0;
    let mut lo = 1e-8;
    let mut hi = 1e9;
    if pot.v(lo) >= target {
        return Err(VpError::SearchFailure(format!(
            "potential not attractive enough at small r for E = {e}"
        )));
    }
    if pot.v(hi) <= target {
        return Err(VpError::SearchFailure(format!(
            "no classical turning point below r = {hi} for E = {e}"
        )));
    }
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if pot.v(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo * hi).sqrt())
}

struct Matcher<'a> {
    pot: &'a dyn CentralPotential,
    kappa: i32,
    nodes: Vec<f64>,
    i_match: usize,
    tol: f64,
}

impl Matcher<'_> {
    fn outward(&self, e: f64) -> Vec<([f64; 2], f64)> {
        let ode = RadialOde {
            pot: self.pot,
            e,
            kappa: self.kappa as f64,
        };
        let y0 = origin_start(self.pot, e, self.kappa, self.nodes[0]);
        ode.propagate(&self.nodes[..=self.i_match], y0, self.tol)
    }

    fn inward(&self, e: f64) -> Vec<([f64; 2], f64)> {
        let ode = RadialOde {
            pot: self.pot,
            e,
            kappa: self.kappa as f64,
        };
        let rev: Vec<f64> = self.nodes[self.i_match..].iter().rev().copied().collect();
        let y0 = tail_start(self.pot, e, self.kappa, rev[0]);
        let mut vals = ode.propagate(&rev, y0, self.tol);
        vals.reverse();
        vals
    }

    fn count_nodes(out: &[([f64; 2], f64)]) -> usize {
        let mut n = 0;
        let mut prev = 0.0f64;
        for (y, _) in out {
            let g = y[0];
            if g != 0.0 {
                if prev != 0.0 && g.signum() != prev.signum() {
                    n += 1;
                }
                prev = g;
            }
        }
        n
    }

    fn nodes_at(&self, e: f64) -> usize {
        Self::count_nodes(&self.outward(e))
    }

    /// Normalized matching determinant; zero at eigenvalues. Log-scales
    /// cancel in the normalization, so only the node values enter.
    fn mismatch(&self, e: f64) -> f64 {
        let (o, _) = *self.outward(e).last().unwrap();
        let (i, _) = self.inward(e)[0];
        // Normalize each branch separately before forming the determinant,
        // so the product of two large magnitudes cannot overflow.
        let no = o[0].hypot(o[1]).max(1e-290);
        let ni = i[0].hypot(i[1]).max(1e-290);
        (o[1] / no) * (i[0] / ni) - (i[1] / ni) * (o[0] / no)
    }
}

/// Solve for the bound state with `n_radial` nodes of G in channel `kappa`.
///
/// The eigenvalue is located by node-count bisection around the Sommerfeld
/// estimate for the potential's Coulomb tail, followed by a sign scan and
/// Illinois refinement of the inward/outward matching determinant at the
/// grid node nearest the classical turning radius.
pub fn solve_bound_state(
    pot: &dyn CentralPotential,
    kappa: i32,
    n_radial: usize,
    params: &ShootParams,
) -> Result<BoundState> {
    if kappa == 0 {
        return Err(VpError::Argument("kappa must be nonzero".into()));
    }
    let za_tail = pot.tail_strength();
    if za_tail <= 0.0 {
        return Err(VpError::Argument(
            "potential tail must be attractive Coulombic".into(),
        ));
    }
    // Sommerfeld guesses from the tail strength; zeff is only used to seed
    // brackets, so rounding Z from the strength is harmless.
    let kk = kappa.unsigned_abs() as f64;
    let gamma = (kk * kk - za_tail * za_tail).sqrt();
    let n_low = n_radial as f64 + if kappa > 0 { kk + 1.0 } else { kk };
    let somm = |n: f64| 1.0 / (1.0 + (za_tail / (n - kk + gamma)).powi(2)).sqrt();
    let e_guess = somm(n_low);
    let e_below = if n_radial == 0 && kappa < 0 {
        0.5 * e_guess
    } else {
        somm(n_low - 1.0)
    };
    let e_above = somm(n_low + 1.0);

    // Per-state grid out to where the decaying tail is negligible.
    let lambda = (1.0 - e_guess * e_guess).sqrt();
    let r_tp = turning_radius(pot, e_guess)?;
    let r_far = r_tp + 30.0 / lambda;
    let grid = Arc::new(build_grid(
        params.r_start,
        r_far,
        params.grid_points,
        GridScheme::LogLinear {
            cluster: params.cluster,
        },
    )?);
    let i_match = grid.locate(r_tp);
    let m = Matcher {
        pot,
        kappa,
        nodes: grid.points().to_vec(),
        i_match,
        tol: params.step_tol,
    };

    // Bracket by node count.
    let mut lo = 0.5 * (e_below + e_guess);
    let mut hi = 0.5 * (e_guess + e_above);
    for _ in 0..40 {
        if m.nodes_at(lo) <= n_radial {
            break;
        }
        lo = (lo - (e_guess - e_below)).max(1e-6);
    }
    for _ in 0..40 {
        if m.nodes_at(hi) > n_radial {
            break;
        }
        let next = 0.5 * (hi + 1.0);
        if next - hi < 1e-15 {
            break;
        }
        hi = next;
    }
    if m.nodes_at(lo) > n_radial {
        return Err(VpError::SearchFailure(format!(
            "cannot bracket level kappa={kappa}, n_radial={n_radial} from below (E in [{lo}, {hi}])"
        )));
    }

    // Upper plateau edge: node count jumps past n_radial.
    let (mut a, mut b) = (lo, hi);
    for _ in 0..60 {
        let mid = 0.5 * (a + b);
        if m.nodes_at(mid) > n_radial {
            b = mid;
        } else {
            a = mid;
        }
    }
    let edge_hi = 0.5 * (a + b);
    // Lower plateau edge (trivial for the nodeless level).
    let edge_lo = if n_radial == 0 {
        lo
    } else {
        let (mut a, mut b) = (lo, edge_hi);
        for _ in 0..60 {
            let mid = 0.5 * (a + b);
            if m.nodes_at(mid) >= n_radial {
                b = mid;
            } else {
                a = mid;
            }
        }
        0.5 * (a + b)
    };

    // Scan the plateau (slightly widened) for a sign change of the
    // matching determinant.
    let w = (edge_hi - edge_lo).max(1e-14 * e_guess);
    let scan_lo = (edge_lo - 0.05 * w).max(1e-6);
    let scan_hi = (edge_hi + 0.05 * w).min(1.0 - 1e-12);
    let n_scan = 32;
    let mut bracket = None;
    let mut prev = (scan_lo, m.mismatch(scan_lo));
    for i in 1..=n_scan {
        let e = scan_lo + (scan_hi - scan_lo) * i as f64 / n_scan as f64;
        let d = m.mismatch(e);
        if prev.1 == 0.0 {
            bracket = Some((prev.0, prev.0, prev.1, prev.1));
            break;
        }
        if d.signum() != prev.1.signum() {
            bracket = Some((prev.0, e, prev.1, d));
            break;
        }
        prev = (e, d);
    }
    let (mut ea, mut eb, mut da, mut db) = bracket.ok_or_else(|| {
        VpError::SearchFailure(format!(
            "no matching-determinant sign change in [{scan_lo}, {scan_hi}] for kappa={kappa}, n_radial={n_radial}"
        ))
    })?;

    // Illinois refinement.
    let mut e_star = 0.5 * (ea + eb);
    for _ in 0..200 {
        if (eb - ea).abs() < 1e-14 * e_star || da == 0.0 || db == 0.0 {
            break;
        }
        let e_new = (ea * db - eb * da) / (db - da);
        let e_new = if e_new <= ea.min(eb) || e_new >= ea.max(eb) {
            0.5 * (ea + eb)
        } else {
            e_new
        };
        let d_new = m.mismatch(e_new);
        e_star = e_new;
        if d_new == 0.0 {
            break;
        }
        if d_new.signum() == da.signum() {
            ea = e_new;
            da = d_new;
            db *= 0.5;
        } else {
            eb = e_new;
            db = d_new;
            da *= 0.5;
        }
    }

    // Assemble and normalize the eigenfunction; log-scales are referenced
    // to the matching node, where they cancel against the branch ratio.
    let out = m.outward(e_star);
    let inw = m.inward(e_star);
    let ls_om = out[i_match].1;
    let ls_im = inw[0].1;
    let (go, fo) = (out[i_match].0[0], out[i_match].0[1]);
    let (gi, fi) = (inw[0].0[0], inw[0].0[1]);
    let scale = if gi.abs() > fi.abs() { go / gi } else { fo / fi };
    let n_pts = grid.len();
    let mut gv = vec![0.0; n_pts];
    let mut fv = vec![0.0; n_pts];
    for (i, (y, ls)) in out.iter().enumerate() {
        let s = (ls - ls_om).exp();
        gv[i] = s * y[0];
        fv[i] = s * y[1];
    }
    for (j, (y, ls)) in inw.iter().enumerate().skip(1) {
        let s = scale * (ls - ls_im).exp();
        gv[i_match + j] = s * y[0];
        fv[i_match + j] = s * y[1];
    }
    let dens: Vec<f64> = gv
        .iter()
        .zip(&fv)
        .map(|(&g, &f)| g * g + f * f)
        .collect();
    let norm = grid.integrate(&dens).sqrt();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(VpError::Internal("bound-state normalization failed".into()));
    }
    for v in gv.iter_mut().chain(fv.iter_mut()) {
        *v /= norm;
    }

    let got_nodes = Matcher::count_nodes(&out);
    if got_nodes != n_radial {
        return Err(VpError::SearchFailure(format!(
            "converged level has {got_nodes} nodes, wanted {n_radial} (kappa={kappa}, E={e_star})"
        )));
    }

    Ok(BoundState {
        kappa,
        n_radial,
        energy: e_star,
        g: RadialFunction::new(grid.clone(), gv)?,
        f: RadialFunction::new(grid, fv)?,
    })
}
