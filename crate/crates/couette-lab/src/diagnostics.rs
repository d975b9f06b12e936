//! Decay fits, the bootstrap audit, Gagliardo-Nirenberg ratios and the threshold scan.

use std::io::Write;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::norms::least_squares;
use crate::solver::{simulate, SimConfig, Trajectory};
use crate::spectral::{lp_norm_field, lp_norm_vector, Fft2, GridSpec, VelocityField};

/// Which clock the decay law is fitted against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeConvention {
    Physical,
    /// `tau = nu t`.
    Rescaled { nu: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    /// Decay rate: `|w|_2 ~ amplitude (1 + t)^(-alpha)`.
    pub alpha: f64,
    pub amplitude: f64,
    pub window: (f64, f64),
    /// RMS of the log residuals.
    pub residual: f64,
    pub samples: usize,
}

pub fn decay_fit(traj: &Trajectory, window: (f64, f64)) -> Result<DecayFit> {
    decay_fit_series(&traj.times, &traj.l2_norms, window, TimeConvention::Physical)
}

/// Least-squares fit of `log v` against `log(1 + s)` over samples with `t` in `window`,
/// where `s` is `t` or `nu t` depending on the convention. The window is in physical time.
pub fn decay_fit_series(times: &[f64], values: &[f64], window: (f64, f64), conv: TimeConvention) -> Result<DecayFit> {
    let (lo, hi) = window;
    if !(lo <= hi) || times.is_empty() || lo < times[0] - 1e-12 || hi > times[times.len() - 1] + 1e-12 {
        return Err(Error::Fit(format!("window [{lo}, {hi}] outside the series")));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (&t, &v) in times.iter().zip(values) {
        if t < lo - 1e-12 || t > hi + 1e-12 {
            continue;
        }
        if !(v > 0.0) {
            return Err(Error::Fit(format!("nonpositive norm {v} at t = {t}")));
        }
        let s = match conv {
            TimeConvention::Physical => t,
            TimeConvention::Rescaled { nu } => nu * t,
        };
        xs.push(s.ln_1p());
        ys.push(v.ln());
    }
    if xs.len() < 10 {
        return Err(Error::Fit(format!("{} samples in window, need 10", xs.len())));
    }
    let (slope, icept) = least_squares(&xs, &ys);
    let residual = (xs.iter().zip(&ys).map(|(x, y)| (y - slope * x - icept).powi(2)).sum::<f64>() / xs.len() as f64).sqrt();
    Ok(DecayFit { alpha: -slope, amplitude: icept.exp(), window, residual, samples: xs.len() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapReport {
    pub delta: f64,
    pub eps: f64,
    /// `sup_t (1 + t) |w(t)|_2`.
    pub sup_envelope: f64,
    /// `sup_envelope <= delta eps`.
    pub hypothesis_ok: bool,
    /// `sup_envelope / (delta eps / 2)`.
    pub conclusion_margin: f64,
    pub conclusion_ok: bool,
    pub first_violation: Option<f64>,
}

pub fn bootstrap_audit(traj: &Trajectory, eps: f64, delta: f64) -> Result<BootstrapReport> {
    if !(eps > 0.0 && delta > 0.0) {
        return Err(Error::InvalidParam(format!("need eps > 0 and delta > 0, got {eps}, {delta}")));
    }
    let bound = delta * eps;
    let mut sup: f64 = 0.0;
    let mut first = None;
    for (&t, &v) in traj.times.iter().zip(&traj.l2_norms) {
        let e = (1.0 + t) * v;
        sup = sup.max(e);
        if first.is_none() && e > bound {
            first = Some(t);
        }
    }
    let margin = sup / (0.5 * bound);
    Ok(BootstrapReport {
        delta,
        eps,
        sup_envelope: sup,
        hypothesis_ok: first.is_none(),
        conclusion_margin: margin,
        conclusion_ok: margin <= 1.0,
        first_violation: first,
    })
}

/// Whether `(q, a)` is the scale-invariant pairing `|u|_q <= C |u|_2^a |D^2 u|_2^(1-a)` in 2-D.
pub fn gn_admissible(q: f64, a: f64) -> bool {
    q >= 2.0 && q.is_finite() && (a - (0.5 + 1.0 / q)).abs() < 1e-12
}

/// `|u|_q / (|u|_2^a |D^2 u|_2^(1-a))` per pair; `None` where the denominator vanishes.
///
/// `|D^2 u|_2` is the full Hessian norm, computed spectrally as `sum |k|^4 |u_hat|^2`.
pub fn gn_check(u: &VelocityField, pairs: &[(f64, f64)]) -> Result<Vec<Option<f64>>> {
    for &(q, a) in pairs {
        if !gn_admissible(q, a) {
            return Err(Error::InvalidParam(format!("pair (q={q}, a={a}) is not scale invariant in 2-D; need a = 1/2 + 1/q")));
        }
    }
    let g = u.u1.grid;
    let mut fft = Fft2::new(g);
    let a1 = fft.forward(&u.u1)?;
    let a2 = fft.forward(&u.u2)?;
    let mut h = 0.0;
    for iy in 0..g.ny {
        for ix in 0..g.nx {
            if ix == g.nx / 2 || iy == g.ny / 2 {
                continue;
            }
            let k2 = g.kx(ix).powi(2) + g.ky(iy).powi(2);
            let i = iy * g.nx + ix;
            h += k2 * k2 * (a1.modes[i].norm_sqr() + a2.modes[i].norm_sqr());
        }
    }
    let hess = (h * g.parseval()).sqrt();
    let l2 = lp_norm_vector(u, 2.0)?;
    pairs
        .iter()
        .map(|&(q, a)| {
            let den = l2.powf(a) * hess.powf(1.0 - a);
            if den > 0.0 && den.is_finite() {
                Ok(Some(lp_norm_vector(u, q)? / den))
            } else {
                Ok(None)
            }
        })
        .collect()
}

/// Scale-invariant pairs used by default: `q = 5/2, 4, 10`.
pub const GN_PAIRS: [(f64, f64); 3] = [(2.5, 0.9), (4.0, 0.75), (10.0, 0.6)];

/// Velocity of a moving-frame spectral state in laboratory samples at time `t`.
pub fn lab_velocity(f_hat: &[Complex64], grid: GridSpec, t: f64) -> VelocityField {
    let field = crate::spectral::SpectralField { grid, modes: f_hat.to_vec() };
    let (a, b) = crate::spectral::biot_savart_hat(&field, t);
    let mut fft = Fft2::new(grid);
    VelocityField {
        u1: crate::spectral::moving_to_lab(&mut fft, &a, t),
        u2: crate::spectral::moving_to_lab(&mut fft, &b, t),
    }
}

/// `sup_t (1 + t) |w_lin(t)|_2 / eps` for the linear problem on the template's data.
pub fn linear_constant(template: &SimConfig, nu: f64, horizon: f64) -> Result<f64> {
    let mut cfg = template.clone();
    cfg.nu = nu;
    cfg.nonlinear = false;
    cfg.eps = 1.0;
    cfg.t_end = horizon;
    let traj = simulate(&cfg)?;
    if let Some(f) = &traj.failure {
        return Err(Error::Unstable { t: *traj.times.last().unwrap_or(&0.0), what: f.clone() });
    }
    Ok(traj.times.iter().zip(&traj.l2_norms).map(|(t, v)| (1.0 + t) * v).fold(0.0, f64::max))
}

/// Grid and step used for one viscosity in a scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NuSetup {
    pub nu: f64,
    pub grid: GridSpec,
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    pub nu_list: Vec<f64>,
    /// Amplitude grid in units of `nu^(3/4)`.
    pub c_list: Vec<f64>,
    pub template: SimConfig,
    pub horizon: f64,
    /// Calibrated from the linear run at the largest viscosity when absent.
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default = "default_tol")]
    pub rel_tol: f64,
    #[serde(default)]
    pub per_nu: Vec<NuSetup>,
    #[serde(default = "default_resamples")]
    pub resamples: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_tol() -> f64 {
    0.1
}
fn default_resamples() -> usize {
    2000
}

impl ScanConfig {
    /// Setup for `nu`: the per-viscosity override if present, else the template grid.
    pub fn setup(&self, nu: f64) -> NuSetup {
        self.per_nu
            .iter()
            .find(|s| s.nu == nu)
            .copied()
            .unwrap_or(NuSetup { nu, grid: self.template.grid, dt: self.template.dt })
    }

    pub fn cell_config(&self, nu: f64, c: f64) -> SimConfig {
        let mut cfg = self.template.clone();
        cfg.nu = nu;
        cfg.eps = c * nu.powf(0.75);
        cfg.t_end = self.horizon;
        cfg.keep_fields = false;
        let s = self.setup(nu);
        cfg.grid = s.grid;
        cfg.dt = s.dt;
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        if self.nu_list.is_empty() || self.c_list.is_empty() {
            return Err(Error::InvalidParam("scan needs at least one nu and one c".into()));
        }
        if self.nu_list.iter().chain(&self.c_list).any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidParam("nu and c values must be positive".into()));
        }
        let lo = self.nu_list.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.nu_list.iter().copied().fold(0.0, f64::max);
        if hi / lo < 10.0 * (1.0 - 1e-9) {
            return Err(Error::InvalidParam(format!("nu_list must span a decade, got [{lo}, {hi}]")));
        }
        if !(self.horizon > 0.0 && self.rel_tol > 0.0) || self.delta.is_some_and(|d| !(d > 0.0)) {
            return Err(Error::InvalidParam("delta, horizon and rel_tol must be positive".into()));
        }
        self.template.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellOutcome {
    pub nu: f64,
    pub c: f64,
    pub eps: f64,
    pub sup_envelope: f64,
    pub resolved: bool,
    pub stable: bool,
}

/// `delta` as twice the linear constant at the largest viscosity of the scan.
pub fn calibrate_delta(scan: &ScanConfig) -> Result<f64> {
    let nu = scan.nu_list.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let s = scan.setup(nu);
    let mut template = scan.template.clone();
    template.grid = s.grid;
    template.dt = s.dt;
    Ok(2.0 * linear_constant(&template, nu, scan.horizon)?)
}

/// Runs one `(nu, c)` cell. The run stops as soon as the envelope is exceeded.
pub fn run_cell(scan: &ScanConfig, delta: f64, nu: f64, c: f64) -> Result<CellOutcome> {
    let mut cfg = scan.cell_config(nu, c);
    cfg.stop_envelope = Some(delta * cfg.eps);
    let traj = simulate(&cfg)?;
    // a run cut short by the envelope is decided; only resolution up to that point matters
    let resolved = traj.resolved();
    let sup = bootstrap_audit(&traj, cfg.eps, delta)?.sup_envelope;
    Ok(CellOutcome { nu, c, eps: cfg.eps, sup_envelope: sup, resolved, stable: resolved && sup <= delta * cfg.eps })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Censoring {
    None,
    /// Every resolved amplitude was stable.
    High,
    /// The smallest resolved amplitude was already unstable.
    Low,
    /// No resolved cell at all.
    Empty,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuThreshold {
    pub nu: f64,
    pub stable_eps: Option<f64>,
    pub unstable_eps: Option<f64>,
    pub eps_star: Option<f64>,
    pub censoring: Censoring,
    pub cells: Vec<CellOutcome>,
    /// Unresolved cells, never counted either way.
    pub excluded: Vec<CellOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdScanResult {
    pub per_nu: Vec<NuThreshold>,
    pub gamma_fit: Option<f64>,
    pub gamma_ci: Option<(f64, f64)>,
    /// Set when any viscosity's threshold is censored or missing.
    pub gamma_censored: bool,
    /// Whether `eps_star` is nondecreasing in `nu` over the uncensored entries.
    pub monotone_in_nu: bool,
    pub delta: f64,
    pub horizon: f64,
}

impl ThresholdScanResult {
    pub fn write_table<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["nu", "stable", "unstable", "eps_star"])?;
        let o = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        for r in &self.per_nu {
            out.write_record([r.nu.to_string(), o(r.stable_eps), o(r.unstable_eps), o(r.eps_star)])?;
        }
        out.flush()?;
        Ok(())
    }

    /// Whitespace-separated long table for plotting: one line per cell.
    pub fn write_long<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# nu c eps sup_envelope resolved stable")?;
        for r in &self.per_nu {
            for c in r.cells.iter().chain(&r.excluded) {
                writeln!(w, "{} {} {} {} {} {}", c.nu, c.c, c.eps, c.sup_envelope, c.resolved as u8, c.stable as u8)?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

pub fn threshold_scan(scan: &ScanConfig) -> Result<ThresholdScanResult> {
    scan.validate()?;
    let delta = match scan.delta {
        Some(d) => d,
        None => calibrate_delta(scan)?,
    };
    threshold_scan_with(scan, delta, &|nu, c| run_cell(scan, delta, nu, c))
}

/// Threshold scan with a caller-supplied cell evaluator (used for on-disk caching).
///
/// Viscosities run in parallel; each one walks the amplitude grid upward until the first
/// unstable cell, then bisects geometrically until the bracket is within `rel_tol`.
pub fn threshold_scan_with(
    scan: &ScanConfig,
    delta: f64,
    eval: &(dyn Fn(f64, f64) -> Result<CellOutcome> + Sync),
) -> Result<ThresholdScanResult> {
    scan.validate()?;
    let mut cs = scan.c_list.clone();
    cs.sort_by(f64::total_cmp);
    cs.dedup();
    let per_nu: Vec<Result<NuThreshold>> = scan.nu_list.par_iter().map(|&nu| scan_one(scan, nu, &cs, eval)).collect();
    let per_nu = per_nu.into_iter().collect::<Result<Vec<_>>>()?;

    let pts: Vec<(f64, f64)> = per_nu.iter().filter_map(|r| r.eps_star.map(|e| (r.nu.ln(), e.ln()))).collect();
    let gamma_censored = per_nu.iter().any(|r| r.censoring != Censoring::None);
    let distinct = |p: &[(f64, f64)]| p.iter().any(|q| (q.0 - p[0].0).abs() > 1e-12);
    let (gamma_fit, gamma_ci) = if pts.len() >= 2 && distinct(&pts) {
        let fit = |p: &[(f64, f64)]| {
            let x: Vec<f64> = p.iter().map(|v| v.0).collect();
            let y: Vec<f64> = p.iter().map(|v| v.1).collect();
            least_squares(&x, &y).0
        };
        let g = fit(&pts);
        let mut rng = ChaCha8Rng::seed_from_u64(scan.seed);
        let mut slopes = Vec::with_capacity(scan.resamples);
        for _ in 0..scan.resamples {
            let sample: Vec<(f64, f64)> = (0..pts.len()).map(|_| pts[rng.gen_range(0..pts.len())]).collect();
            if distinct(&sample) {
                slopes.push(fit(&sample));
            }
        }
        slopes.sort_by(f64::total_cmp);
        let ci = if slopes.is_empty() {
            None
        } else {
            let q = |f: f64| slopes[((f * (slopes.len() - 1) as f64).round()) as usize];
            Some((q(0.025), q(0.975)))
        };
        (Some(g), ci)
    } else {
        (None, None)
    };

    let mut ordered: Vec<(f64, f64)> = per_nu
        .iter()
        .filter(|r| r.censoring == Censoring::None)
        .filter_map(|r| r.eps_star.map(|e| (r.nu, e)))
        .collect();
    ordered.sort_by(|a, b| a.0.total_cmp(&b.0));
    let monotone_in_nu = ordered.windows(2).all(|w| w[1].1 >= w[0].1);

    Ok(ThresholdScanResult {
        per_nu,
        gamma_fit,
        gamma_ci,
        gamma_censored,
        monotone_in_nu,
        delta,
        horizon: scan.horizon,
    })
}

fn scan_one(
    scan: &ScanConfig,
    nu: f64,
    cs: &[f64],
    eval: &(dyn Fn(f64, f64) -> Result<CellOutcome> + Sync),
) -> Result<NuThreshold> {
    let mut cells = Vec::new();
    let mut excluded = Vec::new();
    let mut stable: Option<f64> = None;
    let mut unstable: Option<f64> = None;
    for &c in cs {
        let o = eval(nu, c)?;
        if !o.resolved {
            excluded.push(o);
            continue;
        }
        cells.push(o);
        if o.stable {
            stable = Some(c);
        } else {
            unstable = Some(c);
            break;
        }
    }
    if let (Some(mut lo), Some(mut hi)) = (stable, unstable) {
        while hi / lo > 1.0 + scan.rel_tol {
            let mid = (lo * hi).sqrt();
            let o = eval(nu, mid)?;
            if !o.resolved {
                excluded.push(o);
                break;
            }
            cells.push(o);
            if o.stable {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        stable = Some(lo);
        unstable = Some(hi);
    }
    let scale = nu.powf(0.75);
    let censoring = match (stable, unstable) {
        (Some(_), Some(_)) => Censoring::None,
        (Some(_), None) => Censoring::High,
        (None, Some(_)) => Censoring::Low,
        (None, None) => Censoring::Empty,
    };
    Ok(NuThreshold {
        nu,
        stable_eps: stable.map(|c| c * scale),
        unstable_eps: unstable.map(|c| c * scale),
        eps_star: stable.map(|c| c * scale),
        censoring,
        cells,
        excluded,
    })
}

/// L2 norm of a laboratory snapshot, for cross-checks against the spectral value.
pub fn snapshot_l2(f: &crate::spectral::ScalarField) -> Result<f64> {
    lp_norm_field(f, 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(alpha: f64) -> Trajectory {
        let times: Vec<f64> = (0..=100).map(|i| i as f64 * 0.5).collect();
        let l2_norms = times.iter().map(|t| 3.0 * (1.0 + t).powf(-alpha)).collect();
        Trajectory { times, l2_norms, ..Default::default() }
    }

    #[test]
    fn exact_power_laws() {
        for a in [1.0, 0.5] {
            let f = decay_fit(&synthetic(a), (5.0, 50.0)).unwrap();
            assert!((f.alpha - a).abs() < 1e-6);
            assert!((f.amplitude - 3.0).abs() < 1e-9);
            assert!(f.residual < 1e-12);
        }
    }

    #[test]
    fn fit_errors() {
        let t = synthetic(1.0);
        assert!(decay_fit(&t, (60.0, 70.0)).is_err());
        assert!(decay_fit(&t, (5.0, 6.0)).is_err());
        let mut z = t.clone();
        z.l2_norms[20] = 0.0;
        assert!(decay_fit(&z, (5.0, 50.0)).is_err());
    }

    #[test]
    fn audit_boundary_cases() {
        let mut zero = synthetic(1.0);
        zero.l2_norms.iter_mut().for_each(|v| *v = 0.0);
        let r = bootstrap_audit(&zero, 1.0, 2.0).unwrap();
        assert!(r.hypothesis_ok && r.conclusion_margin == 0.0 && r.first_violation.is_none());

        // exactly on the envelope (1 + t) |w| = delta eps
        let (delta, eps) = (4.0, 0.5);
        let mut on = synthetic(1.0);
        for (t, v) in on.times.iter().zip(on.l2_norms.iter_mut()) {
            *v = delta * eps / (1.0 + t);
        }
        let r = bootstrap_audit(&on, eps, delta).unwrap();
        assert!(r.hypothesis_ok);
        assert!(!r.conclusion_ok);
        assert!((r.conclusion_margin - 2.0).abs() < 1e-12);
        assert!(bootstrap_audit(&on, 0.0, 1.0).is_err());
    }

    #[test]
    fn admissible_pairs() {
        for (q, a) in GN_PAIRS {
            assert!(gn_admissible(q, a));
        }
        assert!(!gn_admissible(10.0, 0.9));
    }
}
