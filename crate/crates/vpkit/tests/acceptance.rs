//! End-to-end acceptance suite: eleven numbered criteria, each printed as a
//! single PASS/FAIL line (run with `--nocapture` to see them on success).
//!
//! Expensive intermediates (bound states, induced densities, spectral
//! engines) are computed once and shared; the induced-density cache lives
//! under the cargo target tmpdir so repeated runs are fast.

use std::f64::consts::PI;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use vpkit::chi::{induced_charge_interior, uehling_density_uniform_sphere};
use vpkit::cli::{doubled_config, system_reports, wk_density_cached, RunConfig, DOUBLED_PARAMS};
use vpkit::consts::PhysicalConstants;
use vpkit::dirac::potential::NuclearPotential;
use vpkit::dirac::shoot::{analytic_coulomb_energy, ShootParams};
use vpkit::greens::zwk;
use vpkit::grid::{build_grid, GridScheme};
use vpkit::nuclear::NuclearModel;
use vpkit::quad::adaptive_gk;
use vpkit::twoloop::{
    furry_residual, solve_state, state_quantum_numbers, EnergyShiftReport, F2Params,
    VPPotentialSet, STATE_LABELS,
};

fn within(value: f64, target: f64, rel: f64) -> bool {
    (value - target).abs() <= rel * target.abs()
}

struct Tally {
    failures: Vec<String>,
}

impl Tally {
    fn record(&mut self, id: usize, pass: bool, detail: String) {
        let verdict = if pass { "PASS" } else { "FAIL" };
        println!("criterion {id:2}: {verdict} — {detail}");
        if !pass {
            self.failures.push(format!("criterion {id}: {detail}"));
        }
    }
}

fn cache_dir() -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance-cache");
    std::fs::create_dir_all(&dir).expect("create cache dir");
    dir
}

#[test]
fn acceptance() {
    let mut tally = Tally { failures: vec![] };
    let c = PhysicalConstants::default();
    let cfg = RunConfig::default();
    let cache = cache_dir();

    // ------------------------------------------------------------------
    // Criterion 1: point-Coulomb eigenvalues vs the fine-structure formula.
    // ------------------------------------------------------------------
    {
        let t0 = Instant::now();
        let mut worst = 0.0f64;
        let mut worst_case = String::new();
        for z in [1u32, 82, 92] {
            let pot = NuclearPotential::new(NuclearModel::point(z).unwrap(), c);
            for label in STATE_LABELS {
                let state = solve_state(&pot, label, &ShootParams::default()).unwrap();
                let (kappa, n_radial) = state_quantum_numbers(label).unwrap();
                let n_principal =
                    (n_radial + kappa.unsigned_abs() as usize + usize::from(kappa > 0)) as u32;
                let exact = analytic_coulomb_energy(z, n_principal, kappa, c.alpha).unwrap();
                let rel = ((state.energy - exact) / exact).abs();
                if rel > worst {
                    worst = rel;
                    worst_case = format!("Z={z} {label}");
                }
            }
        }
        tally.record(
            1,
            worst <= 1e-8,
            format!(
                "Dirac point-Coulomb oracle, worst rel dev {worst:.2e} ({worst_case}, \
                 tol 1e-8, {:.2}s)",
                t0.elapsed().as_secs_f64()
            ),
        );
    }

    // ------------------------------------------------------------------
    // Shared heavy intermediates for criteria 2, 4-7, 9-11.
    // ------------------------------------------------------------------
    let reports: Vec<Vec<EnergyShiftReport>> = cfg
        .systems
        .iter()
        .map(|sys| system_reports(&cfg, sys, Some(&cache), &c).unwrap())
        .collect();
    let (u_reports, pb_reports) = (&reports[0], &reports[1]);

    // ------------------------------------------------------------------
    // Criterion 2: first-order polarization shift of the 1s states.
    // ------------------------------------------------------------------
    {
        let u = u_reports[0].first_order_uehling_ev;
        let pb = pb_reports[0].first_order_uehling_ev;
        let ok = within(u, -93.58, 0.005) && within(pb, -50.70, 0.005);
        tally.record(
            2,
            ok,
            format!("first-order shifts U 1s {u:.3} eV (ref -93.58), Pb 1s {pb:.3} eV (ref -50.70), tol 0.5%"),
        );
    }

    // ------------------------------------------------------------------
    // Criterion 3: interior/exterior charge cancellation of the induced
    // density of a uniformly charged sphere, and the closed-form interior.
    // ------------------------------------------------------------------
    {
        let t0 = Instant::now();
        let model =
            NuclearModel::uniform_sphere_from_rms(92, cfg.systems[0].rms_fm, &c).unwrap();
        let r0 = model.r0;
        let charge = |r: f64| {
            4.0 * PI * r * r * uehling_density_uniform_sphere(&model, r, c.alpha).unwrap()
        };
        let interior = adaptive_gk(charge, r0 * 1e-10, r0, &[], 1e-11, 1e-16);
        let exterior = adaptive_gk(charge, r0, r0 + 18.0, &[r0 + 0.1, r0 + 1.0], 1e-11, 1e-16);
        let closed = induced_charge_interior(&model, c.alpha).unwrap();
        let cancel = (interior + exterior).abs() / interior.abs();
        let form = ((interior - closed) / closed).abs();
        let ok = cancel <= 1e-5 && form <= 1e-8;
        tally.record(
            3,
            ok,
            format!(
                "induced-charge cancellation {cancel:.2e} (tol 1e-5), closed-form dev \
                 {form:.2e} (tol 1e-8, {:.2}s)",
                t0.elapsed().as_secs_f64()
            ),
        );
    }

    // ------------------------------------------------------------------
    // Criterion 4: iterated-Uehling shifts, all six states.
    // ------------------------------------------------------------------
    {
        let refs_u: [f64; 3] = [-0.1150, -0.0220, -0.0023];
        let refs_pb: [f64; 3] = [-0.0520, -0.0092, -0.0006];
        let mut ok = true;
        let mut detail = String::new();
        for (reports, refs, sym) in [(u_reports, refs_u, "U"), (pb_reports, refs_pb, "Pb")] {
            for (r, &target) in reports.iter().zip(&refs) {
                // The two smallest entries carry the wider tolerance.
                let tol = if target.abs() < 0.0025 { 0.05 } else { 0.02 };
                let good = within(r.f1_uehling_ev, target, tol);
                ok &= good;
                detail.push_str(&format!(
                    "{sym} {} {:+.5} (ref {target:+.4}) ",
                    r.state_label, r.f1_uehling_ev
                ));
            }
        }
        tally.record(4, ok, format!("iterated Uehling: {detail}(tol 2%/5%)"));
    }

    // ------------------------------------------------------------------
    // Criterion 5: induced higher-order charge number and total neutrality.
    // ------------------------------------------------------------------
    let mut zwk_vals = Vec::new();
    {
        let mut ok = true;
        let mut detail = String::new();
        for (sys, target) in cfg.systems.iter().zip([-0.006f64, -0.004]) {
            let (density, _) = wk_density_cached(&cfg, sys, Some(&cache), &c).unwrap();
            let z_ind = zwk(&density, &c).unwrap();
            zwk_vals.push(z_ind);
            let grid = density.density.grid();
            let q: Vec<f64> = density
                .density
                .values()
                .iter()
                .zip(grid.points())
                .map(|(&d, &r)| 4.0 * PI * r * r * d / c.alpha)
                .collect();
            let total = grid.integrate(&q);
            let neutral = total.abs() / z_ind.abs();
            let good =
                within(z_ind, target, 0.30) && density.tail_extrapolated && neutral <= 1e-4;
            ok &= good;
            detail.push_str(&format!(
                "{} Z^ind {z_ind:+.5e} (ref {target}), residual charge {neutral:.1e} rel; ",
                sys.symbol
            ));
        }
        tally.record(
            5,
            ok,
            format!("{detail}tol 30% with tail extrapolation, neutrality 1e-4"),
        );
    }

    // ------------------------------------------------------------------
    // Criterion 6: induced-charge (higher-order density) Uehling shifts.
    // ------------------------------------------------------------------
    {
        let u = u_reports[0].f1_wk_ev;
        let pb = pb_reports[0].f1_wk_ev;
        let all_positive = reports
            .iter()
            .flatten()
            .all(|r| r.f1_wk_ev > 0.0);
        let ok = within(u, 0.0040, 0.25) && within(pb, 0.0015, 0.25) && all_positive;
        tally.record(
            6,
            ok,
            format!(
                "induced-density shifts U 1s {u:+.5e} (ref +0.0040), Pb 1s {pb:+.5e} \
                 (ref +0.0015), tol 25%, all six positive: {all_positive}"
            ),
        );
    }

    // ------------------------------------------------------------------
    // Criterion 7: scaling estimate as exact arithmetic, published values,
    // and strict overestimation of the exact induced-density shifts.
    // ------------------------------------------------------------------
    {
        let mut ok = true;
        let mut detail = String::new();
        for ((reports, &z_ind), target) in
            [(u_reports, &zwk_vals[0]), (pb_reports, &zwk_vals[1])]
                .into_iter()
                .zip([0.0061f64, 0.0024])
        {
            let r1s = &reports[0];
            // The identity must use the report's own induced charge number
            // (from its diagnostics): the independently recomputed value of
            // criterion 5 can differ in the last ulps when the density was
            // rebuilt from the on-disk cache, whose grid weights are
            // rederived from the stored points.
            let z_report = r1s.diagnostics["zwk"].as_f64().unwrap();
            assert!(
                ((z_report - z_ind) / z_ind).abs() < 1e-9,
                "cached and reported induced charge numbers disagree"
            );
            let arithmetic = z_report / r1s.z as f64 * r1s.first_order_uehling_ev;
            let exact_identity = r1s.scaling_estimate_ev == arithmetic;
            let value_ok = within(r1s.scaling_estimate_ev, target, 0.30);
            let overestimates = reports
                .iter()
                .all(|r| r.scaling_estimate_ev > r.f1_wk_ev);
            ok &= exact_identity && value_ok && overestimates;
            detail.push_str(&format!(
                "{} {:+.5e} (ref +{target}), identity {exact_identity}, \
                 overestimates exact {overestimates}; ",
                r1s.system, r1s.scaling_estimate_ev
            ));
        }
        tally.record(7, ok, format!("scaling estimate: {detail}"));
    }

    // ------------------------------------------------------------------
    // Criterion 8: spectral bracket vanishes without a polarization
    // potential (Furry reference configuration).
    // ------------------------------------------------------------------
    {
        let t0 = Instant::now();
        let model =
            NuclearModel::uniform_sphere_from_rms(92, cfg.systems[0].rms_fm, &c).unwrap();
        let grid = Arc::new(
            build_grid(
                cfg.numerics.grid_r_min,
                cfg.numerics.grid_r_max,
                cfg.numerics.grid_points,
                GridScheme::Log,
            )
            .unwrap(),
        );
        let bare = VPPotentialSet::build_without_vp(&model, &grid, &c).unwrap();
        let residual = furry_residual(&bare, &F2Params::default(), 5).unwrap();
        tally.record(
            8,
            residual <= 1e-10,
            format!(
                "Furry-zero residual {residual:.2e} over |kappa| <= 5 at every node \
                 (tol 1e-10, {:.1}s)",
                t0.elapsed().as_secs_f64()
            ),
        );
    }

    // ------------------------------------------------------------------
    // Criterion 9: spectral-remainder term and its share of the total.
    // ------------------------------------------------------------------
    {
        let u = u_reports[0].f2_ev;
        let pb = pb_reports[0].f2_ev;
        let ratio = (u / u_reports[0].f1_uehling_ev).abs();
        let ok = within(u, -0.0420, 0.25)
            && within(pb, -0.0180, 0.25)
            && (ratio - 0.4).abs() <= 0.15;
        tally.record(
            9,
            ok,
            format!(
                "remainder U 1s {u:+.5e} (ref -0.0420), Pb 1s {pb:+.5e} (ref -0.0180), \
                 tol 25%; U 1s share {ratio:.3} (ref 0.4 +- 0.15)"
            ),
        );
    }

    // ------------------------------------------------------------------
    // Criterion 10: stability of every reported table number under
    // independent doubling of each resolution parameter.
    // ------------------------------------------------------------------
    {
        let t0 = Instant::now();
        let mut ok = true;
        let mut worst = 0.0f64;
        let mut worst_case = String::new();
        let mut diag = Vec::new();
        for param in DOUBLED_PARAMS {
            let dcfg = doubled_config(&cfg, param).unwrap();
            for (sys, base) in cfg.systems.iter().zip(&reports) {
                let doubled = system_reports(&dcfg, sys, Some(&cache), &c).unwrap();
                for (b, d) in base.iter().zip(&doubled) {
                    for (name, vb, vd) in [
                        ("f1_uehling", b.f1_uehling_ev, d.f1_uehling_ev),
                        ("f1_wk", b.f1_wk_ev, d.f1_wk_ev),
                        ("f2", b.f2_ev, d.f2_ev),
                        ("total", b.total_ev, d.total_ev),
                    ] {
                        let rel = ((vd - vb) / vb).abs();
                        diag.push(serde_json::json!({
                            "parameter": param,
                            "system": b.system,
                            "state": b.state_label,
                            "quantity": name,
                            "base": vb,
                            "doubled": vd,
                            "rel_change": rel,
                        }));
                        if rel > worst {
                            worst = rel;
                            worst_case =
                                format!("{param} {} {} {name}", b.system, b.state_label);
                        }
                        ok &= rel < 0.01;
                    }
                }
            }
        }
        let diag_path = cache_dir().join("convergence_diagnostics.json");
        std::fs::write(
            &diag_path,
            serde_json::to_string_pretty(&serde_json::json!({ "doublings": diag })).unwrap(),
        )
        .unwrap();
        tally.record(
            10,
            ok,
            format!(
                "doubling stability: worst rel change {worst:.2e} ({worst_case}), tol 1e-2; \
                 diagnostics at {} ({:.0}s)",
                diag_path.display(),
                t0.elapsed().as_secs_f64()
            ),
        );
    }

    // ------------------------------------------------------------------
    // Criterion 11: the assembled total is the bit-exact sum of its parts.
    // ------------------------------------------------------------------
    {
        let exact = reports
            .iter()
            .flatten()
            .all(|r| r.total_ev == r.f1_uehling_ev + r.f1_wk_ev + r.f2_ev);
        let u_total = u_reports[0].total_ev;
        let pb_total = pb_reports[0].total_ev;
        tally.record(
            11,
            exact,
            format!(
                "row identity total = sum of parts bit-exact: {exact} \
                 (U 1s {u_total:+.5e} eV, Pb 1s {pb_total:+.5e} eV)"
            ),
        );
    }

    assert!(
        tally.failures.is_empty(),
        "acceptance failures:\n{}",
        tally.failures.join("\n")
    );
}
