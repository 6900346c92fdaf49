//! Configuration ingestion, run orchestration with caching, convergence
//! studies, and table/plot-data emission.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::chi::uehling_density_uniform_sphere;
use crate::consts::PhysicalConstants;
use crate::dirac::potential::NuclearPotential;
use crate::dirac::shoot::{analytic_coulomb_energy, BoundState, ShootParams};
use crate::error::{Result, VpError};
use crate::greens::{wk_density, zwk, ChargeDensity, UQuadrature};
use crate::grid::{build_grid, GridScheme, RadialFunction, RadialGrid};
use crate::nuclear::NuclearModel;
use crate::twoloop::{
    assemble_report, first_order_uehling_shift, scaling_estimate, solve_state,
    uehling_in_uehling_shift, wk_in_uehling_shift, EnergyShiftReport, F2Engine, F2Params,
    VPPotentialSet,
};

// ---------------------------------------------------------------------------
// Configuration schema
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub systems: Vec<SystemConfig>,
    pub states: Vec<String>,
    pub numerics: Numerics,
    pub constants: ConstantsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            systems: vec![SystemConfig::uranium(), SystemConfig::lead()],
            states: vec!["1s1/2".into(), "2s1/2".into(), "2p1/2".into()],
            numerics: Numerics::default(),
            constants: ConstantsConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub symbol: String,
    pub z: u32,
    pub rms_fm: f64,
    /// True when the radius is a tabulated value not taken from the
    /// reference data set (flagged in outputs).
    #[serde(default)]
    pub rms_assumed: bool,
}

impl SystemConfig {
    pub fn uranium() -> Self {
        Self {
            symbol: "U".into(),
            z: 92,
            rms_fm: 5.8604,
            rms_assumed: false,
        }
    }

    pub fn lead() -> Self {
        Self {
            symbol: "Pb".into(),
            z: 82,
            // Modern tabulated charge radius; not stated by the reference
            // data set.
            rms_fm: 5.5012,
            rms_assumed: true,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Numerics {
    /// Points of the shared tabulation grid for potentials.
    pub grid_points: usize,
    pub grid_r_min: f64,
    pub grid_r_max: f64,
    /// Points of the per-state shooting grid.
    pub shoot_grid_points: usize,
    /// Induced-density (Green-function) grid.
    pub wk_grid_points: usize,
    pub wk_grid_r_max: f64,
    /// Partial-wave cutoff of the induced density.
    pub wk_kappa_max: u32,
    /// Imaginary-energy quadrature nodes.
    pub u_nodes: usize,
    /// Nuclear model for the induced density: "shell" or "sphere".
    pub wk_model: WkModel,
    /// Partial-wave cutoff of the spectral remainder.
    pub kappa_max: u32,
    pub k_nodes: usize,
    pub k_max: f64,
    pub basis_size: usize,
    pub cavity_radius: f64,
    /// Fold the induced-density electrostatic potential into the
    /// polarization potential entering the remainder term.
    pub include_wk_in_vp: bool,
}

impl Default for Numerics {
    fn default() -> Self {
        let f2 = F2Params::default();
        Self {
            grid_points: 600,
            grid_r_min: 1e-6,
            grid_r_max: 30.0,
            shoot_grid_points: 4000,
            wk_grid_points: 350,
            wk_grid_r_max: 8.0,
            wk_kappa_max: 10,
            u_nodes: 32,
            wk_model: WkModel::Shell,
            kappa_max: f2.kappa_max,
            k_nodes: f2.k_nodes,
            k_max: f2.k_max,
            basis_size: f2.basis_size,
            cavity_radius: f2.cavity_radius,
            include_wk_in_vp: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WkModel {
    Shell,
    Sphere,
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConstantsConfig {
    pub alpha: Option<f64>,
    pub electron_rest_energy_ev: Option<f64>,
    pub fm_per_natural_length: Option<f64>,
}

impl ConstantsConfig {
    pub fn resolve(&self) -> PhysicalConstants {
        let mut c = PhysicalConstants::default();
        if let Some(a) = self.alpha {
            c.alpha = a;
        }
        if let Some(e) = self.electron_rest_energy_ev {
            c.electron_rest_energy_ev = e;
        }
        if let Some(f) = self.fm_per_natural_length {
            c.fm_per_natural_length = f;
        }
        c
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| VpError::Argument(format!("cannot read config {path:?}: {e}")))?;
        let cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| VpError::Argument(format!("config parse error: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.systems.is_empty() {
            return Err(VpError::Argument("at least one system is required".into()));
        }
        for s in &self.systems {
            if s.z == 0 || s.z > 137 {
                return Err(VpError::Argument(format!("invalid Z = {}", s.z)));
            }
            if !(s.rms_fm > 0.0) {
                return Err(VpError::Argument(format!(
                    "rms_fm must be positive, got {}",
                    s.rms_fm
                )));
            }
        }
        for label in &self.states {
            crate::twoloop::state_quantum_numbers(label)?;
        }
        let n = &self.numerics;
        let positives = [
            ("grid_points", n.grid_points as f64),
            ("grid_r_min", n.grid_r_min),
            ("grid_r_max", n.grid_r_max),
            ("shoot_grid_points", n.shoot_grid_points as f64),
            ("wk_grid_points", n.wk_grid_points as f64),
            ("wk_grid_r_max", n.wk_grid_r_max),
            ("wk_kappa_max", n.wk_kappa_max as f64),
            ("u_nodes", n.u_nodes as f64),
            ("kappa_max", n.kappa_max as f64),
            ("k_nodes", n.k_nodes as f64),
            ("k_max", n.k_max),
            ("basis_size", n.basis_size as f64),
            ("cavity_radius", n.cavity_radius),
        ];
        for (name, v) in positives {
            if !(v > 0.0) {
                return Err(VpError::Argument(format!("numerics.{name} must be positive")));
            }
        }
        Ok(())
    }

    pub fn f2_params(&self) -> F2Params {
        F2Params {
            kappa_max: self.numerics.kappa_max,
            k_max: self.numerics.k_max,
            k_nodes: self.numerics.k_nodes,
            basis_size: self.numerics.basis_size,
            cavity_radius: self.numerics.cavity_radius,
        }
    }
}

// ---------------------------------------------------------------------------
// CLI surface
// ---------------------------------------------------------------------------

#[derive(Parser)]
#[command(
    name = "vpkit",
    about = "Two-loop vacuum-polarization corrections for hydrogen-like ions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Bound-state eigenvalues in the extended-nucleus Coulomb potential.
    BoundState(CommonArgs),
    /// First-order polarization shifts (reference-table style).
    Uehling(CommonArgs),
    /// Induced higher-order charge density and its charge number.
    WkDensity(CommonArgs),
    /// Full two-loop report (table-shaped CSV plus JSON diagnostics).
    TwoLoop(CommonArgs),
    /// Parameter-doubling convergence study of the report columns.
    Convergence(CommonArgs),
    /// First-order polarization charge density curve data.
    Fig5(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Path to the TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (created if missing).
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// Recompute everything, ignoring the on-disk cache.
    #[arg(long)]
    no_cache: bool,
}

/// Entry point: returns the process exit code.
pub fn main() -> i32 {
    let cli = Cli::parse();
    let (args, run): (&CommonArgs, fn(&RunConfig, &Ctx) -> Result<()>) = match &cli.command {
        Command::BoundState(a) => (a, cmd_bound_state),
        Command::Uehling(a) => (a, cmd_uehling),
        Command::WkDensity(a) => (a, cmd_wk_density),
        Command::TwoLoop(a) => (a, cmd_two_loop),
        Command::Convergence(a) => (a, cmd_convergence),
        Command::Fig5(a) => (a, cmd_fig5),
    };
    if let Some(jobs) = args.jobs {
        // Ignore the error if a global pool already exists (e.g. in tests).
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global();
    }
    let cfg = match RunConfig::load(&args.config) {
        Ok(c) => c,
        Err(e) => return emit_error(&e, 2),
    };
    let ctx = Ctx {
        out_dir: args.out.clone(),
        use_cache: !args.no_cache,
    };
    if let Err(e) = fs::create_dir_all(&ctx.out_dir) {
        return emit_error(&VpError::Internal(format!("cannot create output dir: {e}")), 4);
    }
    match run(&cfg, &ctx) {
        Ok(()) => 0,
        Err(e) => {
            let code = match &e {
                VpError::Argument(_) | VpError::Domain(_) | VpError::UnsupportedModel(_) => 2,
                VpError::Convergence(_) | VpError::SearchFailure(_) => 3,
                VpError::Internal(_) => 4,
            };
            emit_error(&e, code)
        }
    }
}

fn emit_error(e: &VpError, code: i32) -> i32 {
    let payload = serde_json::json!({
        "error": { "kind": error_kind(e), "message": e.to_string(), "exit_code": code }
    });
    eprintln!("{payload}");
    code
}

fn error_kind(e: &VpError) -> &'static str {
    match e {
        VpError::Argument(_) => "argument",
        VpError::Domain(_) => "domain",
        VpError::UnsupportedModel(_) => "unsupported_model",
        VpError::SearchFailure(_) => "search_failure",
        VpError::Convergence(_) => "convergence",
        VpError::Internal(_) => "internal",
    }
}

struct Ctx {
    out_dir: PathBuf,
    use_cache: bool,
}

impl Ctx {
    fn cache_dir(&self) -> Option<PathBuf> {
        self.use_cache.then(|| self.out_dir.join("cache"))
    }
}

// ---------------------------------------------------------------------------
// Output plumbing
// ---------------------------------------------------------------------------

/// Write bytes atomically: temp file in the target directory, then rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .ok_or_else(|| VpError::Argument(format!("path {path:?} has no parent")))?;
    fs::create_dir_all(dir)
        .map_err(|e| VpError::Internal(format!("cannot create {dir:?}: {e}")))?;
    let tmp = dir.join(format!(
        ".{}.tmp",
        path.file_name().unwrap_or_default().to_string_lossy()
    ));
    {
        let mut f = fs::File::create(&tmp)
            .map_err(|e| VpError::Internal(format!("cannot create {tmp:?}: {e}")))?;
        f.write_all(bytes)
            .map_err(|e| VpError::Internal(format!("write failed: {e}")))?;
        f.sync_all()
            .map_err(|e| VpError::Internal(format!("sync failed: {e}")))?;
    }
    fs::rename(&tmp, path).map_err(|e| VpError::Internal(format!("rename failed: {e}")))?;
    Ok(())
}

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)
        .map_err(|e| VpError::Internal(format!("csv: {e}")))?;
    for row in rows {
        w.write_record(row)
            .map_err(|e| VpError::Internal(format!("csv: {e}")))?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| VpError::Internal(format!("csv: {e}")))?;
    write_atomic(path, &bytes)
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| VpError::Internal(format!("json: {e}")))?;
    write_atomic(path, text.as_bytes())
}

fn fmt(x: f64) -> String {
    format!("{x:.10e}")
}

// ---------------------------------------------------------------------------
// Caching
// ---------------------------------------------------------------------------

/// Content hash of a canonical serialization (stable across config-file
/// field reordering because it hashes the parsed structure).
pub fn cache_key(payload: &impl Serialize) -> Result<String> {
    let canon = serde_json::to_string(payload)
        .map_err(|e| VpError::Internal(format!("cache serialization: {e}")))?;
    let mut h = Sha256::new();
    h.update(canon.as_bytes());
    Ok(format!("{:x}", h.finalize()))
}

#[derive(Serialize)]
struct WkCacheKey<'a> {
    schema: u32,
    z: u32,
    rms_fm: f64,
    model: &'a WkModel,
    kappa_max: u32,
    u_nodes: usize,
    grid_points: usize,
    grid_r_min: f64,
    grid_r_max: f64,
    alpha: f64,
}

#[derive(Serialize, Deserialize)]
struct WkCacheEntry {
    r: Vec<f64>,
    density: Vec<f64>,
    kappa_max: u32,
    u_nodes: usize,
    tail_extrapolated: bool,
    kappa_turnover: Option<u32>,
    per_kappa_norms: Vec<f64>,
    nuclear_r0: f64,
}

fn wk_model_for(sys: &SystemConfig, kind: WkModel, c: &PhysicalConstants) -> Result<NuclearModel> {
    match kind {
        WkModel::Shell => NuclearModel::spherical_shell_from_rms(sys.z, sys.rms_fm, c),
        WkModel::Sphere => NuclearModel::uniform_sphere_from_rms(sys.z, sys.rms_fm, c),
    }
}

/// Induced density for one system, served from the content-addressed cache
/// when possible. Returns the density and its cache key.
pub fn wk_density_cached(
    cfg: &RunConfig,
    sys: &SystemConfig,
    cache_dir: Option<&Path>,
    c: &PhysicalConstants,
) -> Result<(ChargeDensity, String)> {
    let n = &cfg.numerics;
    let key = cache_key(&WkCacheKey {
        schema: 3,
        z: sys.z,
        rms_fm: sys.rms_fm,
        model: &n.wk_model,
        kappa_max: n.wk_kappa_max,
        u_nodes: n.u_nodes,
        grid_points: n.wk_grid_points,
        grid_r_min: n.grid_r_min,
        grid_r_max: n.wk_grid_r_max,
        alpha: c.alpha,
    })?;
    let cache_path = cache_dir.map(|d| d.join(format!("wk-{key}.json")));
    if let Some(path) = cache_path.as_ref().filter(|p| p.is_file()) {
        if let Ok(text) = fs::read_to_string(path) {
            if let Ok(entry) = serde_json::from_str::<WkCacheEntry>(&text) {
                let grid = Arc::new(RadialGrid::from_points(entry.r)?);
                return Ok((
                    ChargeDensity {
                        density: RadialFunction::new(grid, entry.density)?,
                        kappa_max: entry.kappa_max,
                        u_nodes: UQuadrature {
                            nodes: entry.u_nodes,
                        },
                        tail_extrapolated: entry.tail_extrapolated,
                        kappa_turnover: entry.kappa_turnover,
                        per_kappa_norms: entry.per_kappa_norms,
                        nuclear_r0: entry.nuclear_r0,
                    },
                    key,
                ));
            }
        }
    }
    let model = wk_model_for(sys, n.wk_model, c)?;
    let grid = Arc::new(build_grid(
        n.grid_r_min,
        n.wk_grid_r_max,
        n.wk_grid_points,
        GridScheme::Log,
    )?);
    let density = wk_density(
        &model,
        n.wk_kappa_max,
        UQuadrature { nodes: n.u_nodes },
        &grid,
        c,
    )?;
    if let Some(path) = cache_path.as_ref() {
        let entry = WkCacheEntry {
            r: density.density.grid().points().to_vec(),
            density: density.density.values().to_vec(),
            kappa_max: density.kappa_max,
            u_nodes: density.u_nodes.nodes,
            tail_extrapolated: density.tail_extrapolated,
            kappa_turnover: density.kappa_turnover,
            per_kappa_norms: density.per_kappa_norms.clone(),
            nuclear_r0: density.nuclear_r0,
        };
        let text = serde_json::to_string(&entry)
            .map_err(|e| VpError::Internal(format!("cache write: {e}")))?;
        write_atomic(path, text.as_bytes())?;
    }
    Ok((density, key))
}

// ---------------------------------------------------------------------------
// Shared computation helpers
// ---------------------------------------------------------------------------

fn sphere_model(sys: &SystemConfig, c: &PhysicalConstants) -> Result<NuclearModel> {
    NuclearModel::uniform_sphere_from_rms(sys.z, sys.rms_fm, c)
}

fn shoot_params(cfg: &RunConfig) -> ShootParams {
    ShootParams {
        grid_points: cfg.numerics.shoot_grid_points,
        ..ShootParams::default()
    }
}

fn solve_system_state(
    cfg: &RunConfig,
    sys: &SystemConfig,
    label: &str,
    c: &PhysicalConstants,
) -> Result<BoundState> {
    let model = sphere_model(sys, c)?;
    let pot = NuclearPotential::new(model, *c);
    solve_state(&pot, label, &shoot_params(cfg))
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

fn cmd_bound_state(cfg: &RunConfig, ctx: &Ctx) -> Result<()> {
    let c = cfg.constants.resolve();
    let mut rows = Vec::new();
    let mut diag = Vec::new();
    for sys in &cfg.systems {
        for label in &cfg.states {
            let state = solve_system_state(cfg, sys, label, &c)?;
            let binding_ev = c.to_ev(state.energy - 1.0);
            let (kappa, n_radial) = crate::twoloop::state_quantum_numbers(label)?;
            let n_principal =
                (n_radial + kappa.unsigned_abs() as usize + usize::from(kappa > 0)) as u32;
            let point_ev = c.to_ev(analytic_coulomb_energy(sys.z, n_principal, kappa, c.alpha)? - 1.0);
            rows.push(vec![
                sys.symbol.clone(),
                label.clone(),
                fmt(state.energy),
                fmt(binding_ev),
                fmt(point_ev),
            ]);
            diag.push(serde_json::json!({
                "system": sys.symbol,
                "state": label,
                "energy_total_natural": state.energy,
                "binding_ev": binding_ev,
                "point_coulomb_binding_ev": point_ev,
                "finite_size_shift_ev": binding_ev - point_ev,
                "grid_points": cfg.numerics.shoot_grid_points,
                "rms_fm": sys.rms_fm,
                "rms_assumed": sys.rms_assumed,
            }));
        }
    }
    write_csv(
        &ctx.out_dir.join("bound_state.csv"),
        &[
            "system",
            "state",
            "energy_total_natural",
            "binding_ev",
            "point_coulomb_binding_ev",
        ],
        &rows,
    )?;
    write_json(
        &ctx.out_dir.join("bound_state.json"),
        &serde_json::json!({ "states": diag }),
    )
}

fn cmd_uehling(cfg: &RunConfig, ctx: &Ctx) -> Result<()> {
    let c = cfg.constants.resolve();
    let mut rows = Vec::new();
    let mut diag = Vec::new();
    for sys in &cfg.systems {
        let model = sphere_model(sys, &c)?;
        for label in &cfg.states {
            let state = solve_system_state(cfg, sys, label, &c)?;
            let shift = first_order_uehling_shift(&state, &model, &c)?;
            rows.push(vec![sys.symbol.clone(), label.clone(), fmt(shift)]);
            diag.push(serde_json::json!({
                "system": sys.symbol,
                "state": label,
                "first_order_uehling_ev": shift,
                "rms_fm": sys.rms_fm,
                "rms_assumed": sys.rms_assumed,
                "shoot_grid_points": cfg.numerics.shoot_grid_points,
            }));
        }
    }
    write_csv(
        &ctx.out_dir.join("uehling.csv"),
        &["system", "state", "first_order_uehling_ev"],
        &rows,
    )?;
    write_json(
        &ctx.out_dir.join("uehling.json"),
        &serde_json::json!({ "shifts": diag }),
    )
}

fn cmd_wk_density(cfg: &RunConfig, ctx: &Ctx) -> Result<()> {
    let c = cfg.constants.resolve();
    let mut summary_rows = Vec::new();
    let mut diag = Vec::new();
    for sys in &cfg.systems {
        let (density, key) = wk_density_cached(cfg, sys, ctx.cache_dir().as_deref(), &c)?;
        let z = zwk(&density, &c)?;
        let rows: Vec<Vec<String>> = density
            .density
            .grid()
            .points()
            .iter()
            .zip(density.density.values())
            .map(|(&r, &v)| vec![fmt(r), fmt(v)])
            .collect();
        write_csv(
            &ctx.out_dir
                .join(format!("wk_density_{}.csv", sys.symbol.to_lowercase())),
            &["r_natural", "density"],
            &rows,
        )?;
        summary_rows.push(vec![
            sys.symbol.clone(),
            fmt(z),
            cfg.numerics.wk_kappa_max.to_string(),
            cfg.numerics.u_nodes.to_string(),
            density.tail_extrapolated.to_string(),
        ]);
        diag.push(serde_json::json!({
            "system": sys.symbol,
            "zwk": z,
            "kappa_max": density.kappa_max,
            "u_nodes": density.u_nodes.nodes,
            "tail_extrapolated": density.tail_extrapolated,
            "kappa_turnover": density.kappa_turnover,
            "per_kappa_norms": density.per_kappa_norms,
            "nuclear_r0": density.nuclear_r0,
            "cache_key": key,
            "wk_model": cfg.numerics.wk_model,
            "rms_assumed": sys.rms_assumed,
        }));
    }
    write_csv(
        &ctx.out_dir.join("wk_summary.csv"),
        &["system", "zwk", "kappa_max", "u_nodes", "tail_extrapolated"],
        &summary_rows,
    )?;
    write_json(
        &ctx.out_dir.join("wk_density.json"),
        &serde_json::json!({ "systems": diag }),
    )
}

/// The full per-system computation behind `two-loop` and `convergence`.
pub fn system_reports(
    cfg: &RunConfig,
    sys: &SystemConfig,
    cache_dir: Option<&Path>,
    c: &PhysicalConstants,
) -> Result<Vec<EnergyShiftReport>> {
    let n = &cfg.numerics;
    let model = sphere_model(sys, c)?;
    let (wk, wk_key) = wk_density_cached(cfg, sys, cache_dir, c)?;
    let zwk_val = zwk(&wk, c)?;

    let grid = Arc::new(build_grid(
        n.grid_r_min,
        n.grid_r_max,
        n.grid_points,
        GridScheme::Log,
    )?);
    let wk_for_vp = if n.include_wk_in_vp { Some(&wk) } else { None };
    let set = VPPotentialSet::build(&model, wk_for_vp, &grid, c)?;
    let engine = F2Engine::new(&set, &cfg.f2_params())?;

    let pot = NuclearPotential::new(model, *c);
    let params = shoot_params(cfg);
    let mut reports = Vec::new();
    for label in &cfg.states {
        let state = solve_state(&pot, label, &params)?;
        let first_order = first_order_uehling_shift(&state, &model, c)?;
        let f1_ueh = uehling_in_uehling_shift(&state, &model, c)?;
        let f1_wk = wk_in_uehling_shift(&state, &wk, c)?;
        let f2 = engine.shift(&state, c)?;
        let scaling = scaling_estimate(zwk_val, first_order, sys.z);
        let diagnostics = serde_json::json!({
            "zwk": zwk_val,
            "wk_cache_key": wk_key,
            "wk_kappa_max": wk.kappa_max,
            "wk_u_nodes": wk.u_nodes.nodes,
            "wk_tail_extrapolated": wk.tail_extrapolated,
            "wk_kappa_turnover": wk.kappa_turnover,
            "wk_per_kappa_norms": wk.per_kappa_norms,
            "wk_model": n.wk_model,
            "include_wk_in_vp": n.include_wk_in_vp,
            "f2": f2,
            "f2_params": cfg.f2_params(),
            "numerics": n,
            "rms_fm": sys.rms_fm,
            "rms_assumed": sys.rms_assumed,
            "perturbation_ratio": set.perturbation_ratio(),
        });
        reports.push(assemble_report(
            &sys.symbol,
            sys.z,
            label,
            f1_ueh,
            f1_wk,
            f2.shift_ev,
            scaling,
            first_order,
            diagnostics,
        ));
    }
    Ok(reports)
}

fn cmd_two_loop(cfg: &RunConfig, ctx: &Ctx) -> Result<()> {
    let c = cfg.constants.resolve();
    let mut rows = Vec::new();
    let mut all = Vec::new();
    for sys in &cfg.systems {
        let reports = system_reports(cfg, sys, ctx.cache_dir().as_deref(), &c)?;
        for r in &reports {
            rows.push(vec![
                r.system.clone(),
                r.state_label.clone(),
                fmt(r.f1_uehling_ev),
                fmt(r.total_ev),
                fmt(r.f1_wk_ev),
                fmt(r.f2_ev),
            ]);
        }
        all.extend(reports);
    }
    write_csv(
        &ctx.out_dir.join("two_loop.csv"),
        &["system", "state", "f1_uehling_ev", "total_ev", "f1_wk_ev", "f2_ev"],
        &rows,
    )?;
    let json = serde_json::to_value(&all)
        .map_err(|e| VpError::Internal(format!("report serialization: {e}")))?;
    write_json(
        &ctx.out_dir.join("two_loop.json"),
        &serde_json::json!({ "reports": json }),
    )
}

/// Parameters doubled (independently) in the convergence study.
pub const DOUBLED_PARAMS: [&str; 5] = ["grid_points", "kappa_max", "u_nodes", "k_nodes", "basis_size"];

pub fn doubled_config(cfg: &RunConfig, param: &str) -> Result<RunConfig> {
    let mut out = cfg.clone();
    let n = &mut out.numerics;
    match param {
        // All radial discretizations scale together under "grid_points".
        "grid_points" => {
            n.grid_points *= 2;
            n.shoot_grid_points *= 2;
            n.wk_grid_points *= 2;
        }
        "kappa_max" => {
            n.kappa_max *= 2;
            n.wk_kappa_max *= 2;
        }
        "u_nodes" => n.u_nodes *= 2,
        "k_nodes" => n.k_nodes *= 2,
        "basis_size" => n.basis_size *= 2,
        other => {
            return Err(VpError::Argument(format!(
                "unknown convergence parameter {other:?}"
            )))
        }
    }
    Ok(out)
}

fn cmd_convergence(cfg: &RunConfig, ctx: &Ctx) -> Result<()> {
    let c = cfg.constants.resolve();
    let mut rows = Vec::new();
    let mut diag = Vec::new();
    for sys in &cfg.systems {
        let base = system_reports(cfg, sys, ctx.cache_dir().as_deref(), &c)?;
        for param in DOUBLED_PARAMS {
            let dcfg = doubled_config(cfg, param)?;
            let doubled = system_reports(&dcfg, sys, ctx.cache_dir().as_deref(), &c)?;
            for (b, d) in base.iter().zip(&doubled) {
                for (quantity, vb, vd) in [
                    ("f1_uehling_ev", b.f1_uehling_ev, d.f1_uehling_ev),
                    ("f1_wk_ev", b.f1_wk_ev, d.f1_wk_ev),
                    ("f2_ev", b.f2_ev, d.f2_ev),
                    ("total_ev", b.total_ev, d.total_ev),
                ] {
                    let rel = (vd - vb).abs() / vb.abs().max(f64::MIN_POSITIVE);
                    rows.push(vec![
                        sys.symbol.clone(),
                        b.state_label.clone(),
                        quantity.to_string(),
                        param.to_string(),
                        fmt(vb),
                        fmt(vd),
                        fmt(rel),
                    ]);
                    diag.push(serde_json::json!({
                        "system": sys.symbol,
                        "state": b.state_label,
                        "quantity": quantity,
                        "parameter": param,
                        "base": vb,
                        "doubled": vd,
                        "rel_change": rel,
                    }));
                }
            }
        }
    }
    write_csv(
        &ctx.out_dir.join("convergence.csv"),
        &["system", "state", "quantity", "parameter", "base", "doubled", "rel_change"],
        &rows,
    )?;
    write_json(
        &ctx.out_dir.join("convergence.json"),
        &serde_json::json!({ "entries": diag }),
    )
}

fn cmd_fig5(cfg: &RunConfig, ctx: &Ctx) -> Result<()> {
    let c = cfg.constants.resolve();
    let sys = cfg
        .systems
        .iter()
        .find(|s| s.z == 92)
        .or_else(|| cfg.systems.first())
        .ok_or_else(|| VpError::Argument("no system configured".into()))?;
    let model = sphere_model(sys, &c)?;
    let r0 = model.r0;
    // Dense log grid with extra resolution across the surface feature.
    let grid = build_grid(r0 * 1e-3, r0 * 40.0, 4000, GridScheme::Log)?;
    let mut rows = Vec::new();
    for &r in grid.points() {
        let rho = uehling_density_uniform_sphere(&model, r, c.alpha)?;
        rows.push(vec![fmt(r), fmt(c.natural_to_fm(r)), fmt(rho)]);
    }
    write_csv(
        &ctx.out_dir
            .join(format!("fig5_{}.csv", sys.symbol.to_lowercase())),
        &["r_natural", "r_fm", "density"],
        &rows,
    )?;
    write_json(
        &ctx.out_dir.join("fig5.json"),
        &serde_json::json!({
            "system": sys.symbol,
            "nuclear_r0_natural": r0,
            "nuclear_r0_fm": c.natural_to_fm(r0),
            "note": "the density has an integrable logarithmic feature at the nuclear surface",
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid_and_reproduces_reference_systems() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.systems[0].z, 92);
        assert!((cfg.systems[0].rms_fm - 5.8604).abs() < 1e-12);
        assert_eq!(cfg.systems[1].z, 82);
        assert!(cfg.systems[1].rms_assumed);
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = toml::from_str::<RunConfig>("[numerics]\nnot_a_field = 3\n");
        assert!(err.is_err());
        let err = toml::from_str::<RunConfig>("frobnicate = true\n");
        assert!(err.is_err());
    }

    #[test]
    fn nonpositive_numerics_rejected() {
        let cfg: RunConfig = toml::from_str("[numerics]\nk_max = 0.0\n").unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn cache_key_stability() {
        let a: RunConfig = toml::from_str("[numerics]\nkappa_max = 10\nu_nodes = 32\n").unwrap();
        // Same fields, different order in the file.
        let b: RunConfig = toml::from_str("[numerics]\nu_nodes = 32\nkappa_max = 10\n").unwrap();
        let ka = cache_key(&a.numerics).unwrap();
        let kb = cache_key(&b.numerics).unwrap();
        assert_eq!(ka, kb);
        let mut c2 = a.clone();
        c2.numerics.kappa_max = 12;
        assert_ne!(ka, cache_key(&c2.numerics).unwrap());
    }

    #[test]
    fn atomic_write_roundtrip() {
        let dir = std::env::temp_dir().join(format!("vpkit-test-{}", std::process::id()));
        let path = dir.join("x.txt");
        write_atomic(&path, b"hello").unwrap();
        assert_eq!(fs::read(&path).unwrap(), b"hello");
        write_atomic(&path, b"world").unwrap();
        assert_eq!(fs::read(&path).unwrap(), b"world");
        let _ = fs::remove_dir_all(&dir);
    }

    #[test]
    fn doubled_config_touches_expected_fields() {
        let cfg = RunConfig::default();
        let d = doubled_config(&cfg, "kappa_max").unwrap();
        assert_eq!(d.numerics.kappa_max, 2 * cfg.numerics.kappa_max);
        assert_eq!(d.numerics.wk_kappa_max, 2 * cfg.numerics.wk_kappa_max);
        assert_eq!(d.numerics.u_nodes, cfg.numerics.u_nodes);
        assert!(doubled_config(&cfg, "bogus").is_err());
    }
}
