//! Batch front end: TOML run configs, subcommand dispatch and artifact writing.
//!
//! Every subcommand writes into `<root>/<subcommand>/`, where `root` is taken from
//! `COUETTE_LAB_OUT` if set, else `--out`, else the config's `out_dir`, else `out`.
//! Files are written to a temporary name and renamed into place. A run that fails leaves
//! a `FAILED` file holding the reason; a successful run removes any stale one.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::diagnostics::{
    bootstrap_audit, calibrate_delta, decay_fit, run_cell, threshold_scan_with, CellOutcome, NuSetup, ScanConfig,
};
use crate::error::{Error, Result};
use crate::kernel::{eval_green, eval_green_grad, KernelParams, KernelPoint, Variable};
use crate::norms::{kernel_lp_closed_form, kernel_lp_quadrature, verify_lemma_bounds_with, Lemma, NormQuery, Slice};
use crate::solver::{duhamel_linear_apply, linear_exact_lab, simulate, DataShape, SimConfig};
use crate::spectral::{lp_norm_field, write_snapshot, GridSpec, ScalarField};

/// Environment variable that overrides the output root.
pub const OUT_ENV: &str = "COUETTE_LAB_OUT";
/// Marker left behind by a failed run.
pub const FAILED_MARKER: &str = "FAILED";
/// Slope agreement required by `verify`.
pub const SLOPE_TOL: f64 = 0.05;

const KERNEL_EVAL_COLUMNS: &str = "kernel.csv: x, y, y_prime, g, dg_dx, dg_dx_prime, dg_dy, dg_dy_prime";
const KERNEL_NORMS_COLUMNS: &str =
    "kernel_norms.csv: nu, tau, p, slice, derivative, quadrature, closed_form, rel_err (closed form only for the kernel itself)";
const VERIFY_COLUMNS: &str = "bounds_<kernel|x_derivative|y_derivative>.csv: lemma, p, nu, tau, slice, derivative, measured, envelope, ratio\n\
     slopes.csv: lemma, p, nu, slice, derivative, regime, measured_slope, envelope_slope, points";
const LINEAR_COLUMNS: &str = "linear_demo.csv: nu, t, l2_exact, l2_duhamel, rel_diff";
const SIMULATE_COLUMNS: &str = "trajectory.csv: t, l2, linf, u_l2, enstrophy_flux\n\
     decay_fit.csv: nu, window_lo, window_hi, alpha, amplitude, residual\n\
     bootstrap.csv: delta, eps, sup_envelope, hypothesis_ok, conclusion_margin, conclusion_ok, first_violation";
const SCAN_COLUMNS: &str = "thresholds.csv: nu, stable, unstable, eps_star\n\
     cells.dat: nu c eps sup_envelope resolved stable (whitespace separated)\n\
     summary.toml: delta, gamma fit and interval, censoring";

#[derive(Debug, Parser)]
#[command(name = "couette-lab", version, about = "Heat-kernel checks and vorticity runs around plane Couette flow")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// TOML run config; defaults are used for anything it leaves out.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output root (COUETTE_LAB_OUT takes precedence).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Master seed for all randomness.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Kernel value and derivatives at a list of points.
    #[command(after_help = KERNEL_EVAL_COLUMNS)]
    KernelEval,
    /// Lp norms of kernel slices by quadrature, against the closed form.
    #[command(after_help = KERNEL_NORMS_COLUMNS)]
    KernelNorms,
    /// Envelope checks for the kernel and its derivatives; exits 2 if any check fails.
    #[command(after_help = VERIFY_COLUMNS)]
    Verify,
    /// Kernel quadrature against the exact linear solution.
    #[command(after_help = LINEAR_COLUMNS)]
    LinearDemo,
    /// One shearing-frame run with decay fit and envelope audit; exits 3 if the run stops early.
    #[command(after_help = SIMULATE_COLUMNS)]
    Simulate,
    /// Amplitude threshold scan over viscosities; completed cells are reused.
    #[command(after_help = SCAN_COLUMNS)]
    ThresholdScan,
}

impl Command {
    pub fn dir_name(self) -> &'static str {
        match self {
            Command::KernelEval => "kernel-eval",
            Command::KernelNorms => "kernel-norms",
            Command::Verify => "verify",
            Command::LinearDemo => "linear-demo",
            Command::Simulate => "simulate",
            Command::ThresholdScan => "threshold-scan",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelEvalConfig {
    pub nu: f64,
    pub tau: f64,
    /// `[x, y, y']` triples.
    pub points: Vec<[f64; 3]>,
}

impl Default for KernelEvalConfig {
    fn default() -> Self {
        KernelEvalConfig {
            nu: 1.0,
            tau: 1.0,
            points: vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.5, 0.5, -0.5]],
        }
    }
}

fn default_grid() -> Vec<[f64; 2]> {
    let mut g = Vec::new();
    for nu in [1e-3, 1e-2, 1e-1, 1.0, 10.0] {
        for r in [1e-2, 1e-1, 1.0, 10.0, 100.0] {
            g.push([nu, nu * r]);
        }
    }
    g
}

fn default_p() -> Vec<f64> {
    vec![1.0, 10.0 / 9.0, 4.0 / 3.0, 5.0 / 3.0, 2.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelNormsConfig {
    /// `[nu, tau]` pairs.
    pub grid: Vec<[f64; 2]>,
    pub p: Vec<f64>,
    /// `none`, `x`, `x'`, `y` or `y'`.
    pub derivatives: Vec<String>,
}

impl Default for KernelNormsConfig {
    fn default() -> Self {
        KernelNormsConfig { grid: default_grid(), p: default_p(), derivatives: vec!["none".into()] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    pub grid: Vec<[f64; 2]>,
    pub p: Vec<f64>,
    /// Added to the envelope's tau exponent; nonzero only to check that a wrong envelope is caught.
    #[serde(default)]
    pub exponent_shift: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        let mut grid = default_grid();
        for r in [20.0, 40.0, 80.0, 160.0, 320.0] {
            grid.push([1e-2, 1e-2 * r]);
        }
        VerifyConfig { grid, p: default_p(), exponent_shift: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearDemoConfig {
    pub nu: Vec<f64>,
    pub times: Vec<f64>,
    pub grid: GridSpec,
    pub sigma: f64,
}

impl Default for LinearDemoConfig {
    fn default() -> Self {
        LinearDemoConfig {
            nu: vec![1e-1, 1e-2, 1e-3],
            times: vec![0.1, 1.0, 10.0],
            grid: GridSpec { nx: 512, ny: 128, lx: 64.0, ly: 12.0 },
            sigma: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub run: SimConfig,
    /// Physical-time window for the decay fit.
    #[serde(default)]
    pub fit_window: Option<[f64; 2]>,
    /// Envelope constant for the audit; skipped when absent.
    #[serde(default)]
    pub delta: Option<f64>,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        let grid = GridSpec { nx: 256, ny: 64, lx: 40.0, ly: 8.0 };
        let mut run = SimConfig::new(1e-2, grid, 10.0, 0.05, 0.1, DataShape::Gaussian { sigma_x: 1.0, sigma_y: 1.0 });
        run.snapshot_stride = 10;
        SimulateConfig { run, fit_window: Some([2.0, 10.0]), delta: None }
    }
}

/// The desk-scale scan: three viscosities, horizon 50, grids sized to each viscosity.
pub fn default_scan() -> ScanConfig {
    let mut template = SimConfig::new(
        1e-2,
        GridSpec { nx: 2048, ny: 128, lx: 180.0, ly: 10.0 },
        50.0,
        0.05,
        1.0,
        DataShape::Gaussian { sigma_x: 1.0, sigma_y: 1.0 },
    );
    template.snapshot_stride = 10;
    ScanConfig {
        nu_list: vec![1e-2, 3e-3, 1e-3],
        c_list: vec![3.0, 10.0, 30.0, 100.0],
        template,
        horizon: 50.0,
        delta: None,
        rel_tol: 0.1,
        per_nu: vec![
            NuSetup { nu: 1e-2, grid: GridSpec { nx: 2048, ny: 128, lx: 180.0, ly: 10.0 }, dt: 0.05 },
            NuSetup { nu: 3e-3, grid: GridSpec { nx: 1024, ny: 128, lx: 100.0, ly: 8.0 }, dt: 0.05 },
            NuSetup { nu: 1e-3, grid: GridSpec { nx: 512, ny: 128, lx: 60.0, ly: 8.0 }, dt: 0.05 },
        ],
        resamples: 2000,
        seed: 0,
    }
}

/// Everything a run needs. Sections for other subcommands are carried along untouched.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub kernel_eval: Option<KernelEvalConfig>,
    #[serde(default)]
    pub kernel_norms: Option<KernelNormsConfig>,
    #[serde(default)]
    pub verify: Option<VerifyConfig>,
    #[serde(default)]
    pub linear_demo: Option<LinearDemoConfig>,
    #[serde(default)]
    pub simulate: Option<SimulateConfig>,
    #[serde(default)]
    pub threshold_scan: Option<ScanConfig>,
}


impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Fills the section for `cmd` with defaults and pushes the master seed into it.
    pub fn resolve(&mut self, cmd: Command) {
        match cmd {
            Command::KernelEval => {
                self.kernel_eval.get_or_insert_with(Default::default);
            }
            Command::KernelNorms => {
                self.kernel_norms.get_or_insert_with(Default::default);
            }
            Command::Verify => {
                self.verify.get_or_insert_with(Default::default);
            }
            Command::LinearDemo => {
                self.linear_demo.get_or_insert_with(Default::default);
            }
            Command::Simulate => {
                let s = self.simulate.get_or_insert_with(Default::default);
                seed_data(&mut s.run.data, self.seed);
            }
            Command::ThresholdScan => {
                let s = self.threshold_scan.get_or_insert_with(default_scan);
                s.seed = self.seed;
                seed_data(&mut s.template.data, self.seed);
            }
        }
    }

    /// Schema checks beyond what deserialization already enforces.
    pub fn validate(&self) -> Result<()> {
        if let Some(k) = &self.kernel_eval {
            KernelParams::new(k.nu, k.tau)?;
        }
        if let Some(k) = &self.kernel_norms {
            for d in &k.derivatives {
                parse_derivative(d)?;
            }
            check_grid(&k.grid)?;
        }
        if let Some(v) = &self.verify {
            check_grid(&v.grid)?;
        }
        if let Some(l) = &self.linear_demo {
            GridSpec::new(l.grid.nx, l.grid.ny, l.grid.lx, l.grid.ly)?;
            if !(l.sigma > 0.0) || l.nu.iter().chain(&l.times).any(|v| !(*v > 0.0)) {
                return Err(Error::Config("linear_demo needs positive sigma, nu and times".into()));
            }
        }
        if let Some(s) = &self.simulate {
            s.run.validate()?;
        }
        if let Some(s) = &self.threshold_scan {
            s.validate()?;
        }
        Ok(())
    }
}

fn seed_data(d: &mut DataShape, seed: u64) {
    if let DataShape::RandomLocalized { seed: s, .. } = d {
        *s = seed;
    }
}

fn check_grid(g: &[[f64; 2]]) -> Result<()> {
    for &[nu, tau] in g {
        KernelParams::new(nu, tau)?;
    }
    Ok(())
}

fn parse_derivative(s: &str) -> Result<Option<Variable>> {
    if s == "none" {
        return Ok(None);
    }
    Variable::parse(s).map(Some).ok_or_else(|| Error::Config(format!("unknown derivative {s:?}")))
}

/// Resolves the output root: environment, then flag, then config, then `out`.
pub fn output_root(flag: Option<&Path>, config: Option<&Path>) -> PathBuf {
    if let Some(v) = std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()) {
        return PathBuf::from(v);
    }
    flag.or(config).map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("out"))
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("artifact");
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn csv_bytes(header: &[&str], rows: &[Vec<String>]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.to_string()))
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

/// What a finished subcommand reports back to [`run`].
#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Ok,
    /// Outputs are complete but a checked property failed.
    Checks(Vec<String>),
    /// The computation stopped early; outputs cover the part that ran.
    Stopped(String),
}

/// Runs one subcommand with a fully resolved config, writing into `dir`.
pub fn execute(cmd: Command, cfg: &RunConfig, dir: &Path) -> Result<Outcome> {
    match cmd {
        Command::KernelEval => cmd_kernel_eval(cfg.kernel_eval.as_ref().expect("resolved"), dir),
        Command::KernelNorms => cmd_kernel_norms(cfg.kernel_norms.as_ref().expect("resolved"), dir),
        Command::Verify => cmd_verify(cfg.verify.as_ref().expect("resolved"), dir),
        Command::LinearDemo => cmd_linear_demo(cfg.linear_demo.as_ref().expect("resolved"), dir),
        Command::Simulate => cmd_simulate(cfg.simulate.as_ref().expect("resolved"), dir),
        Command::ThresholdScan => cmd_scan(cfg.threshold_scan.as_ref().expect("resolved"), dir),
    }
}

pub fn cmd_kernel_eval(c: &KernelEvalConfig, dir: &Path) -> Result<Outcome> {
    let params = KernelParams::new(c.nu, c.tau)?;
    let mut rows = Vec::with_capacity(c.points.len());
    for &[x, y, yp] in &c.points {
        let pt = KernelPoint::new(x, y, yp);
        let mut r = vec![x.to_string(), y.to_string(), yp.to_string(), eval_green(&params, &pt)?.to_string()];
        for v in Variable::ALL {
            r.push(eval_green_grad(&params, &pt, v)?.to_string());
        }
        rows.push(r);
    }
    let header = ["x", "y", "y_prime", "g", "dg_dx", "dg_dx_prime", "dg_dy", "dg_dy_prime"];
    let bytes = csv_bytes(&header, &rows)?;
    std::io::stdout().write_all(&bytes)?;
    write_atomic(&dir.join("kernel.csv"), &bytes)?;
    Ok(Outcome::Ok)
}

pub fn cmd_kernel_norms(c: &KernelNormsConfig, dir: &Path) -> Result<Outcome> {
    use rayon::prelude::*;
    let derivs = c.derivatives.iter().map(|d| parse_derivative(d)).collect::<Result<Vec<_>>>()?;
    let mut jobs = Vec::new();
    for &[nu, tau] in &c.grid {
        for &p in &c.p {
            for slice in [Slice::Source, Slice::Target] {
                for &d in &derivs {
                    jobs.push((nu, tau, p, slice, d));
                }
            }
        }
    }
    let rows: Vec<Result<Vec<String>>> = jobs
        .par_iter()
        .map(|&(nu, tau, p, slice, d)| {
            let params = KernelParams::new(nu, tau)?;
            let m = kernel_lp_quadrature(&NormQuery::new(params, p, slice, d)?)?;
            let (cf, rel) = match d {
                None => {
                    let cf = kernel_lp_closed_form(&params, p)?;
                    (cf.to_string(), ((m - cf) / cf).abs().to_string())
                }
                Some(_) => (String::new(), String::new()),
            };
            Ok(vec![
                nu.to_string(),
                tau.to_string(),
                p.to_string(),
                slice.name().to_string(),
                d.map_or("none", |v| v.name()).to_string(),
                m.to_string(),
                cf,
                rel,
            ])
        })
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let header = ["nu", "tau", "p", "slice", "derivative", "quadrature", "closed_form", "rel_err"];
    write_atomic(&dir.join("kernel_norms.csv"), &csv_bytes(&header, &rows)?)?;
    Ok(Outcome::Ok)
}

pub fn cmd_verify(c: &VerifyConfig, dir: &Path) -> Result<Outcome> {
    let grid: Vec<(f64, f64)> = c.grid.iter().map(|g| (g[0], g[1])).collect();
    let mut problems = Vec::new();
    let mut slope_rows = Vec::new();
    for lemma in [Lemma::Kernel, Lemma::XDerivative, Lemma::YDerivative] {
        let rep = verify_lemma_bounds_with(lemma, &grid, &c.p, c.exponent_shift)?;
        let mut buf = Vec::new();
        rep.write_csv(&mut buf)?;
        write_atomic(&dir.join(format!("bounds_{}.csv", lemma.name())), &buf)?;
        for r in rep.flagged() {
            problems.push(format!(
                "lemma {} p={} nu={} tau={} {} {}: measured {:e} above calibrated envelope",
                lemma.name(),
                r.p,
                r.nu,
                r.tau,
                r.slice.name(),
                r.derivative.map_or("none", |v| v.name()),
                r.measured
            ));
        }
        for f in &rep.fitted_exponents {
            if (f.measured_slope - f.envelope_slope).abs() > SLOPE_TOL {
                problems.push(format!(
                    "lemma {} p={} nu={} {} {} {} regime: slope {:.4} vs envelope {:.4}",
                    lemma.name(),
                    f.p,
                    f.nu,
                    f.slice.name(),
                    f.derivative.map_or("none", |v| v.name()),
                    f.regime,
                    f.measured_slope,
                    f.envelope_slope
                ));
            }
            slope_rows.push(vec![
                lemma.name().to_string(),
                f.p.to_string(),
                f.nu.to_string(),
                f.slice.name().to_string(),
                f.derivative.map_or("none", |v| v.name()).to_string(),
                f.regime.to_string(),
                f.measured_slope.to_string(),
                f.envelope_slope.to_string(),
                f.points.to_string(),
            ]);
        }
        if lemma == Lemma::Kernel {
            for r in rep.rows.iter().filter(|r| r.p == 1.0) {
                if (r.ratio - 1.0).abs() > 1e-8 {
                    problems.push(format!("p=1 ratio {} at nu={} tau={}", r.ratio, r.nu, r.tau));
                }
            }
        }
    }
    let header = ["lemma", "p", "nu", "slice", "derivative", "regime", "measured_slope", "envelope_slope", "points"];
    write_atomic(&dir.join("slopes.csv"), &csv_bytes(&header, &slope_rows)?)?;
    if problems.is_empty() {
        Ok(Outcome::Ok)
    } else {
        Ok(Outcome::Checks(problems))
    }
}

pub fn cmd_linear_demo(c: &LinearDemoConfig, dir: &Path) -> Result<Outcome> {
    let g = GridSpec::new(c.grid.nx, c.grid.ny, c.grid.lx, c.grid.ly)?;
    let s2 = 2.0 * c.sigma * c.sigma;
    let w0 = ScalarField::from_fn(g, |x, y| (-(x * x + y * y) / s2).exp());
    let mut rows = Vec::new();
    for &nu in &c.nu {
        for &t in &c.times {
            let a = duhamel_linear_apply(&w0, t, nu)?;
            let b = linear_exact_lab(&w0, t, nu)?;
            let diff = ScalarField::new(g, a.values.iter().zip(&b.values).map(|(x, y)| x - y).collect())?;
            let le = lp_norm_field(&b, 2.0)?;
            let ld = lp_norm_field(&a, 2.0)?;
            rows.push(vec![
                nu.to_string(),
                t.to_string(),
                le.to_string(),
                ld.to_string(),
                (lp_norm_field(&diff, 2.0)? / le).to_string(),
            ]);
        }
    }
    write_atomic(&dir.join("linear_demo.csv"), &csv_bytes(&["nu", "t", "l2_exact", "l2_duhamel", "rel_diff"], &rows)?)?;
    Ok(Outcome::Ok)
}

pub fn cmd_simulate(c: &SimulateConfig, dir: &Path) -> Result<Outcome> {
    let traj = simulate(&c.run)?;
    let mut buf = Vec::new();
    traj.write_csv(&mut buf)?;
    write_atomic(&dir.join("trajectory.csv"), &buf)?;
    if let Some([lo, hi]) = c.fit_window {
        if traj.failure.is_none() && c.run.eps > 0.0 {
            let f = decay_fit(&traj, (lo, hi))?;
            let row = vec![
                c.run.nu.to_string(),
                lo.to_string(),
                hi.to_string(),
                f.alpha.to_string(),
                f.amplitude.to_string(),
                f.residual.to_string(),
            ];
            let header = ["nu", "window_lo", "window_hi", "alpha", "amplitude", "residual"];
            write_atomic(&dir.join("decay_fit.csv"), &csv_bytes(&header, &[row])?)?;
        }
    }
    if let Some(delta) = c.delta {
        if c.run.eps > 0.0 {
            let r = bootstrap_audit(&traj, c.run.eps, delta)?;
            let row = vec![
                r.delta.to_string(),
                r.eps.to_string(),
                r.sup_envelope.to_string(),
                r.hypothesis_ok.to_string(),
                r.conclusion_margin.to_string(),
                r.conclusion_ok.to_string(),
                opt(r.first_violation),
            ];
            let header =
                ["delta", "eps", "sup_envelope", "hypothesis_ok", "conclusion_margin", "conclusion_ok", "first_violation"];
            write_atomic(&dir.join("bootstrap.csv"), &csv_bytes(&header, &[row])?)?;
        }
    }
    for (i, (t, f)) in traj.fields.iter().enumerate() {
        let mut b = Vec::new();
        write_snapshot(&mut b, f, *t, c.run.nu)?;
        write_atomic(&dir.join(format!("snapshot_{i:05}.bin")), &b)?;
    }
    match traj.failure {
        Some(f) => Ok(Outcome::Stopped(f)),
        None => Ok(Outcome::Ok),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CellRecord {
    delta: f64,
    config: SimConfig,
    outcome: CellOutcome,
}

fn cell_path(dir: &Path, nu: f64, c: f64) -> PathBuf {
    dir.join("cells").join(format!("nu_{nu:e}_c_{c:e}.toml"))
}

pub fn cmd_scan(s: &ScanConfig, dir: &Path) -> Result<Outcome> {
    s.validate()?;
    let delta = match s.delta {
        Some(d) => d,
        None => calibrate_delta(s)?,
    };
    let eval = |nu: f64, c: f64| -> Result<CellOutcome> {
        let path = cell_path(dir, nu, c);
        let config = s.cell_config(nu, c);
        if let Ok(text) = fs::read_to_string(&path) {
            if let Ok(rec) = toml::from_str::<CellRecord>(&text) {
                if rec.delta == delta && rec.config == config {
                    return Ok(rec.outcome);
                }
            }
        }
        let outcome = run_cell(s, delta, nu, c)?;
        let rec = CellRecord { delta, config, outcome };
        let text = toml::to_string(&rec).map_err(|e| Error::Config(e.to_string()))?;
        write_atomic(&path, text.as_bytes())?;
        Ok(outcome)
    };
    let res = threshold_scan_with(s, delta, &eval)?;
    let mut table = Vec::new();
    res.write_table(&mut table)?;
    write_atomic(&dir.join("thresholds.csv"), &table)?;
    let mut long = Vec::new();
    res.write_long(&mut long)?;
    write_atomic(&dir.join("cells.dat"), &long)?;
    let mut summary = format!("delta = {}\nhorizon = {}\n", res.delta, res.horizon);
    if let Some(g) = res.gamma_fit {
        summary += &format!("gamma_fit = {g}\n");
    }
    if let Some((a, b)) = res.gamma_ci {
        summary += &format!("gamma_ci = [{a}, {b}]\n");
    }
    summary += &format!("gamma_censored = {}\nmonotone_in_nu = {}\n", res.gamma_censored, res.monotone_in_nu);
    for r in &res.per_nu {
        summary += &format!("\n[[nu]]\nnu = {}\ncensoring = \"{:?}\"\nexcluded = {}\n", r.nu, r.censoring, r.excluded.len());
    }
    write_atomic(&dir.join("summary.toml"), summary.as_bytes())?;
    Ok(Outcome::Ok)
}

/// Parses `args`, runs the subcommand and returns the process exit code.
///
/// Codes: 0 success, 1 error, 2 failed checks (`verify`), 3 run stopped early (`simulate`).
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let mut cfg = match &cli.common.config {
        Some(p) => match RunConfig::load(p) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {e}");
                let dir = output_root(cli.common.out.as_deref(), None).join(cli.command.dir_name());
                if fs::create_dir_all(&dir).is_ok() {
                    let _ = write_atomic(&dir.join(FAILED_MARKER), format!("{e}\n").as_bytes());
                }
                return 1;
            }
        },
        None => RunConfig::default(),
    };
    if let Some(s) = cli.common.seed {
        cfg.seed = s;
    }
    cfg.resolve(cli.command);
    let root = output_root(cli.common.out.as_deref(), cfg.out_dir.as_deref());
    let dir = root.join(cli.command.dir_name());
    if let Some(j) = cli.common.jobs {
        // fails only if a pool already exists, which is harmless
        let _ = rayon::ThreadPoolBuilder::new().num_threads(j.max(1)).build_global();
    }
    let result = (|| -> Result<Outcome> {
        fs::create_dir_all(&dir)?;
        let marker = dir.join(FAILED_MARKER);
        if marker.exists() {
            fs::remove_file(&marker)?;
        }
        cfg.validate()?;
        write_atomic(&dir.join("config.resolved.toml"), cfg.to_toml()?.as_bytes())?;
        execute(cli.command, &cfg, &dir)
    })();
    let (code, reason) = match result {
        Ok(Outcome::Ok) => (0, None),
        Ok(Outcome::Checks(list)) => (2, Some(list.join("\n"))),
        Ok(Outcome::Stopped(why)) => (3, Some(why)),
        Err(e) => (1, Some(e.to_string())),
    };
    if let Some(reason) = reason {
        eprintln!("{}: {reason}", cli.command.dir_name());
        if fs::create_dir_all(&dir).is_ok() {
            let _ = write_atomic(&dir.join(FAILED_MARKER), format!("{reason}\n").as_bytes());
        }
    }
    code
}
