//! Experiment runner: builds the benchmark problem families, runs the
//! solver variants, verifies against the manufactured solution on the
//! unit-square family, and emits CSV/JSON/markdown reports.

use crate::assembly::{build_spaces, choose_penalty, AssemblyError, DgConfig, Discretization};
use crate::geometry::{
    patch_sizes, quarter_annulus_multipatch, unit_square_multipatch, GeometryError, MultiPatch,
};
use crate::ieti::{solve_ieti, IetiError, SolveOptions, Variant};
use crate::splines::GaussRule;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DriverError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error(transparent)]
    Solver(#[from] IetiError),
    #[error("usage error: {0}")]
    Usage(String),
}

/// Patch layout of an experiment.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Layout {
    Square {
        nx: usize,
        ny: usize,
    },
    Annulus {
        n_angular: usize,
        n_radial: usize,
        r_inner: f64,
        r_outer: f64,
    },
}

impl Layout {
    pub fn parse(s: &str) -> Result<Layout, DriverError> {
        let parts: Vec<&str> = s.split(':').collect();
        let grid = |g: &str| -> Result<(usize, usize), DriverError> {
            let (a, b) = g
                .split_once('x')
                .ok_or_else(|| DriverError::Usage(format!("bad grid '{g}', expected NxM")))?;
            Ok((
                a.parse()
                    .map_err(|_| DriverError::Usage(format!("bad grid size '{a}'")))?,
                b.parse()
                    .map_err(|_| DriverError::Usage(format!("bad grid size '{b}'")))?,
            ))
        };
        match parts.as_slice() {
            ["square", g] => {
                let (nx, ny) = grid(g)?;
                Ok(Layout::Square { nx, ny })
            }
            ["annulus", g] => {
                let (n_angular, n_radial) = grid(g)?;
                Ok(Layout::Annulus {
                    n_angular,
                    n_radial,
                    r_inner: 1.0,
                    r_outer: 2.0,
                })
            }
            ["annulus", g, ri, ro] => {
                let (n_angular, n_radial) = grid(g)?;
                Ok(Layout::Annulus {
                    n_angular,
                    n_radial,
                    r_inner: ri
                        .parse()
                        .map_err(|_| DriverError::Usage(format!("bad radius '{ri}'")))?,
                    r_outer: ro
                        .parse()
                        .map_err(|_| DriverError::Usage(format!("bad radius '{ro}'")))?,
                })
            }
            _ => Err(DriverError::Usage(format!(
                "bad layout '{s}', expected square:NxM or annulus:NxM[:RI:RO]"
            ))),
        }
    }

    pub fn n_patches(&self) -> usize {
        match self {
            Layout::Square { nx, ny } => nx * ny,
            Layout::Annulus {
                n_angular,
                n_radial,
                ..
            } => n_angular * n_radial,
        }
    }

    fn grid_coords(&self, k: usize) -> (usize, usize) {
        match self {
            Layout::Square { nx, .. } => (k % nx, k / nx),
            Layout::Annulus { n_angular, .. } => (k % n_angular, k / n_angular),
        }
    }
}

/// Patch color of the mixed-discretization scheme. Red patches get degree
/// p+1, grey patches one extra refinement; the assignment cycles
/// (i + 2 j) mod 3 over the grid coordinates, which exercises both kinds
/// of non-matching interfaces on every layout.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PatchColor {
    Green,
    Red,
    Grey,
}

pub fn patch_color(layout: &Layout, k: usize) -> PatchColor {
    let (i, j) = layout.grid_coords(k);
    match (i + 2 * j) % 3 {
        0 => PatchColor::Green,
        1 => PatchColor::Red,
        _ => PatchColor::Grey,
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub p: usize,
    pub r: usize,
    pub layout: Layout,
    pub variant: Variant,
    pub eps: f64,
    #[serde(default)]
    pub eps_c: Option<f64>,
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default)]
    pub mixed_degree: bool,
    #[serde(default)]
    pub mixed_refine: bool,
    #[serde(default)]
    pub quad_increment: usize,
    #[serde(default = "default_jobs")]
    pub jobs: usize,
}

fn default_jobs() -> usize {
    1
}

impl ExperimentConfig {
    pub fn new(p: usize, r: usize, layout: Layout, variant: Variant) -> Self {
        ExperimentConfig {
            p,
            r,
            layout,
            variant,
            eps: 1e-8,
            eps_c: None,
            delta: None,
            mixed_degree: false,
            mixed_refine: false,
            quad_increment: 0,
            jobs: 1,
        }
    }
}

/// One experiment's results. Timing fields vary between runs; everything
/// else is deterministic for a fixed configuration.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub variant: String,
    pub p: usize,
    pub r: usize,
    pub n_total: usize,
    pub iterations: usize,
    pub kappa_est: Option<f64>,
    pub eig_min: Option<f64>,
    pub eig_max: Option<f64>,
    pub t_psi: f64,
    pub t_setup_local: f64,
    pub t_setup_dirichlet: f64,
    pub t_apply_local: f64,
    pub t_apply_dirichlet: f64,
    pub t_solve: f64,
    pub t_total: f64,
    pub l2_err: Option<f64>,
    pub dg_err: Option<f64>,
    pub residual_history: Vec<f64>,
    pub memory_peak: u64,
    /// max_k H_k / h_k of the discretization.
    pub h_ratio: f64,
}

/// The manufactured source -laplace(u) for u = sin(pi x) sin(pi y).
pub fn manufactured_source(x: [f64; 2]) -> f64 {
    2.0 * std::f64::consts::PI.powi(2)
        * (std::f64::consts::PI * x[0]).sin()
        * (std::f64::consts::PI * x[1]).sin()
}

fn manufactured_exact(x: [f64; 2]) -> f64 {
    (std::f64::consts::PI * x[0]).sin() * (std::f64::consts::PI * x[1]).sin()
}

fn manufactured_grad(x: [f64; 2]) -> [f64; 2] {
    let pi = std::f64::consts::PI;
    [
        pi * (pi * x[0]).cos() * (pi * x[1]).sin(),
        pi * (pi * x[0]).sin() * (pi * x[1]).cos(),
    ]
}

/// Build the discretization of one experiment configuration.
pub fn build_discretization(cfg: &ExperimentConfig) -> Result<Discretization, DriverError> {
    let mp: MultiPatch = match cfg.layout {
        Layout::Square { nx, ny } => unit_square_multipatch(nx, ny)?,
        Layout::Annulus {
            n_angular,
            n_radial,
            r_inner,
            r_outer,
        } => quarter_annulus_multipatch(n_angular, n_radial, r_inner, r_outer)?,
    };
    let mut degree_refine = Vec::with_capacity(mp.n_patches());
    let mut p_max = cfg.p;
    for k in 0..mp.n_patches() {
        let color = patch_color(&cfg.layout, k);
        let p = if cfg.mixed_degree && color == PatchColor::Red {
            cfg.p + 1
        } else {
            cfg.p
        };
        let r = if cfg.mixed_refine && color == PatchColor::Grey {
            cfg.r + 1
        } else {
            cfg.r
        };
        p_max = p_max.max(p);
        degree_refine.push((p, r));
    }
    let spaces = build_spaces(&mp, &degree_refine)?;
    let delta = choose_penalty(p_max, cfg.delta)?;
    let mut dg = DgConfig::new(delta);
    dg.quad_increment = cfg.quad_increment;
    Ok(Discretization::new(mp, spaces, dg)?)
}

/// L2 and dG errors of a recovered solution against the manufactured one.
pub fn solution_errors(disc: &Discretization, patch_coeffs: &[Vec<f64>]) -> (f64, f64) {
    let mut l2 = 0.0;
    let mut dg = 0.0;
    for k in 0..disc.n_patches() {
        let basis = &disc.spaces[k];
        let map = &disc.mp.maps[k];
        let coeffs = &patch_coeffs[k];
        let rule1 = GaussRule::new(basis.kv1.degree() + 2);
        let rule2 = GaussRule::new(basis.kv2.degree() + 2);
        for w1 in basis.kv1.breakpoints().windows(2) {
            for w2 in basis.kv2.breakpoints().windows(2) {
                for (x1, q1) in rule1.mapped(w1[0], w1[1]) {
                    for (x2, q2) in rule2.mapped(w2[0], w2[1]) {
                        let (x, j, det) = map.eval([x1, x2]).expect("regular geometry");
                        let wq = q1 * q2 * det.abs();
                        let mut uh = 0.0;
                        let mut gh = [0.0, 0.0];
                        for (dof, v, g) in basis.eval([x1, x2]) {
                            let c = coeffs[dof];
                            uh += c * v;
                            gh[0] += c * (j[1][1] * g[0] - j[1][0] * g[1]) / det;
                            gh[1] += c * (-j[0][1] * g[0] + j[0][0] * g[1]) / det;
                        }
                        let e = uh - manufactured_exact(x);
                        let ge = {
                            let g = manufactured_grad(x);
                            [gh[0] - g[0], gh[1] - g[1]]
                        };
                        l2 += wq * e * e;
                        dg += wq * (ge[0] * ge[0] + ge[1] * ge[1]);
                    }
                }
            }
        }
    }
    // Penalty jump terms of the dG norm: exact solution continuous, so the
    // error jump equals the discrete jump.
    for iface in &disc.mp.topology.interfaces {
        for (k, side_k, l, side_l, flip) in [
            (iface.k, iface.side_k, iface.l, iface.side_l, iface.reversed),
            (iface.l, iface.side_l, iface.k, iface.side_k, iface.reversed),
        ] {
            let basis_k = &disc.spaces[k];
            let basis_l = &disc.spaces[l];
            let map = &disc.mp.maps[k];
            let w_pen = disc.cfg.delta / disc.h_kl(k, l);
            let mut bp = basis_k.kv(side_k.parallel_dir()).breakpoints();
            for t in basis_l.kv(side_l.parallel_dir()).breakpoints() {
                bp.push(if flip { 1.0 - t } else { t });
            }
            bp.sort_by(|x, y| x.partial_cmp(y).unwrap());
            bp.dedup_by(|x, y| (*x - *y).abs() <= 1e-14);
            let p = basis_k
                .kv(side_k.parallel_dir())
                .degree()
                .max(basis_l.kv(side_l.parallel_dir()).degree());
            let rule = GaussRule::new(p + 2);
            for w in bp.windows(2) {
                if w[1] - w[0] <= 1e-14 {
                    continue;
                }
                for (s, q) in rule.mapped(w[0], w[1]) {
                    let xi = side_k.point(s);
                    let (_, j, _) = map.eval(xi).expect("regular geometry");
                    let pd = side_k.parallel_dir();
                    let tangent = [j[0][pd], j[1][pd]];
                    let tlen = (tangent[0] * tangent[0] + tangent[1] * tangent[1]).sqrt();
                    let mut uk = 0.0;
                    for (dof, v, _) in basis_k.eval(xi) {
                        uk += patch_coeffs[k][dof] * v;
                    }
                    let t = if flip { 1.0 - s } else { s };
                    let mut ul = 0.0;
                    for (dof, v, _) in basis_l.eval(side_l.point(t)) {
                        ul += patch_coeffs[l][dof] * v;
                    }
                    dg += q * tlen * w_pen * (ul - uk) * (ul - uk);
                }
            }
        }
    }
    (l2.sqrt(), dg.sqrt())
}

/// Run one experiment end to end.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentRecord, DriverError> {
    let disc = build_discretization(cfg)?;
    let opts = SolveOptions {
        variant: cfg.variant,
        eps: cfg.eps,
        eps_c: cfg.eps_c,
        max_outer: 5000,
        max_local: 500,
        jobs: cfg.jobs,
    };
    let sol = solve_ieti(&disc, &manufactured_source, &opts)?;
    let (l2_err, dg_err) = match cfg.layout {
        Layout::Square { .. } => {
            let (l2, dg) = solution_errors(&disc, &sol.patch_coeffs);
            (Some(l2), Some(dg))
        }
        Layout::Annulus { .. } => (None, None),
    };
    let n_total: usize = disc.spaces.iter().map(|s| s.num_dofs()).sum();
    let h_ratio = (0..disc.n_patches())
        .map(|k| {
            let (h_big, _, h) = patch_sizes(&disc.mp.maps[k], &disc.spaces[k]);
            h_big / h
        })
        .fold(0.0, f64::max);
    Ok(ExperimentRecord {
        variant: cfg.variant.to_string(),
        p: cfg.p,
        r: cfg.r,
        n_total,
        iterations: sol.report.iterations,
        kappa_est: sol.report.kappa,
        eig_min: sol.report.eig_min,
        eig_max: sol.report.eig_max,
        t_psi: sol.phases.t_psi,
        t_setup_local: sol.phases.t_setup_local,
        t_setup_dirichlet: sol.phases.t_setup_dirichlet,
        t_apply_local: sol.phases.t_apply_local,
        t_apply_dirichlet: sol.phases.t_apply_dirichlet,
        t_solve: sol.phases.t_solve,
        t_total: sol.phases.t_total,
        l2_err,
        dg_err,
        residual_history: sol.report.residual_history,
        memory_peak: crate::util::peak_rss_bytes(),
        h_ratio,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
    Md,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            "md" => Ok(ReportFormat::Md),
            other => Err(format!("unknown format '{other}', expected csv|json|md")),
        }
    }
}

pub const CSV_HEADER: &str = "variant,p,r,N_total,it,kappa_est,t_psi,t_setup_local,t_setup_dirichlet,t_apply_local,t_apply_dirichlet,t_solve,t_total,l2_err,dg_err";

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6e}")).unwrap_or_default()
}

/// Emit a report document for a set of records.
pub fn emit_report(records: &[ExperimentRecord], format: ReportFormat) -> String {
    match format {
        ReportFormat::Csv => {
            let mut out = String::from(CSV_HEADER);
            out.push('\n');
            for r in records {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e},{},{}\n",
                    r.variant,
                    r.p,
                    r.r,
                    r.n_total,
                    r.iterations,
                    fmt_opt(r.kappa_est),
                    r.t_psi,
                    r.t_setup_local,
                    r.t_setup_dirichlet,
                    r.t_apply_local,
                    r.t_apply_dirichlet,
                    r.t_solve,
                    r.t_total,
                    fmt_opt(r.l2_err),
                    fmt_opt(r.dg_err),
                ));
            }
            out
        }
        ReportFormat::Json => serde_json::to_string_pretty(records).expect("record serialization"),
        ReportFormat::Md => {
            let mut out = String::new();
            out.push_str(
                "| variant | r | Psi | setup loc | setup dir | apply loc | apply dir | solving | total | it. |\n",
            );
            out.push_str(
                "|---------|---|-----|-----------|-----------|-----------|-----------|---------|-------|-----|\n",
            );
            for r in records {
                out.push_str(&format!(
                    "| {} | {} | {:.2} | {:.2} | {:.2} | {:.2} | {:.2} | {:.2} | {:.2} | {} |\n",
                    r.variant,
                    r.r,
                    r.t_psi,
                    r.t_setup_local,
                    r.t_setup_dirichlet,
                    r.t_apply_local,
                    r.t_apply_dirichlet,
                    r.t_solve,
                    r.t_total,
                    r.iterations,
                ));
            }
            out
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub r: usize,
    pub h_ratio: f64,
    pub kappa: f64,
    pub iterations: usize,
}

/// Least-squares fit of kappa against (1 + log(H/h))^2.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScalingRecord {
    pub variant: String,
    pub p: usize,
    pub points: Vec<ScalingPoint>,
    pub coefficient: f64,
    pub max_rel_deviation: f64,
    /// r-levels that failed to converge, if any.
    pub failures: Vec<usize>,
}

pub fn fit_log_squared(points: &[(f64, f64)]) -> (f64, f64) {
    // kappa ~ c * x with x = (1 + ln(H/h))^2
    let mut num = 0.0;
    let mut den = 0.0;
    for &(x, kappa) in points {
        num += kappa * x;
        den += x * x;
    }
    let c = num / den;
    let mut dev: f64 = 0.0;
    for &(x, kappa) in points {
        dev = dev.max((kappa - c * x).abs() / (c * x));
    }
    (c, dev)
}

/// Run a refinement sweep and fit the condition estimates against the
/// poly-logarithmic model.
pub fn scaling_study(
    base: &ExperimentConfig,
    r_range: std::ops::RangeInclusive<usize>,
) -> Result<ScalingRecord, DriverError> {
    let mut points = Vec::new();
    let mut failures = Vec::new();
    for r in r_range {
        let cfg = ExperimentConfig { r, ..base.clone() };
        match run_experiment(&cfg) {
            Ok(rec) => points.push(ScalingPoint {
                r,
                h_ratio: rec.h_ratio,
                kappa: rec.kappa_est.unwrap_or(f64::NAN),
                iterations: rec.iterations,
            }),
            Err(_) => failures.push(r),
        }
    }
    if points.len() < 2 {
        return Err(DriverError::Usage(
            "scaling study needs at least two successful levels".into(),
        ));
    }
    let data: Vec<(f64, f64)> = points
        .iter()
        .map(|pt| ((1.0 + pt.h_ratio.ln()).powi(2), pt.kappa))
        .collect();
    let (coefficient, max_rel_deviation) = fit_log_squared(&data);
    Ok(ScalingRecord {
        variant: base.variant.to_string(),
        p: base.p,
        points,
        coefficient,
        max_rel_deviation,
        failures,
    })
}
