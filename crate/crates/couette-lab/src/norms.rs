//! Lp norms of kernel slices: adaptive quadrature, the closed form, envelope checks
//! and the Young-type operator bound.

use std::f64::consts::PI;
use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernel::{KernelParams, KernelPoint, Variable};
use crate::quadrature::{breakpoints, integrate, QuadOptions};

/// Which pair of variables is integrated out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Slice {
    /// Fixed `(x, y)`, integrate over `(x', y')`.
    Source,
    /// Fixed `(x', y')`, integrate over `(x, y)`.
    Target,
}

impl Slice {
    pub fn name(self) -> &'static str {
        match self {
            Slice::Source => "source",
            Slice::Target => "target",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormQuery {
    pub params: KernelParams,
    pub p: f64,
    pub slice: Slice,
    pub derivative: Option<Variable>,
    /// The fixed pair: `(x, y)` for a source slice, `(x', y')` for a target slice.
    pub anchor: (f64, f64),
}

impl NormQuery {
    pub fn new(params: KernelParams, p: f64, slice: Slice, derivative: Option<Variable>) -> Result<Self> {
        check_p(p)?;
        Ok(NormQuery { params, p, slice, derivative, anchor: (0.0, 0.0) })
    }
}

fn check_p(p: f64) -> Result<()> {
    if p.is_finite() && p >= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParam(format!("need 1 <= p < inf, got {p}")))
    }
}

/// Lp norm of a kernel slice by nested adaptive Gauss-Kronrod quadrature.
///
/// The outer variable is `s = y - y'`, the inner one the sheared offset `xi`; the actual
/// kernel coordinates are rebuilt from `(s, xi)` and the anchor before each evaluation.
pub fn kernel_lp_quadrature(q: &NormQuery) -> Result<f64> {
    check_p(q.p)?;
    let shape = q.params.shape();
    let tau = shape.tau;
    let one_k = 1.0 + shape.kappa;
    let sd_s = (2.0 * tau).sqrt();
    let sd_xi = (2.0 * tau * one_k).sqrt();
    let (a0, b0) = q.anchor;
    let p = q.p;

    let point = |s: f64, xi: f64| -> KernelPoint {
        match q.slice {
            Slice::Target => {
                let (xp, yp) = (a0, b0);
                let y = yp + s;
                let x = xp + shape.drift * (y + yp) + xi;
                KernelPoint::new(x - xp, y, yp)
            }
            Slice::Source => {
                let (x, y) = (a0, b0);
                let yp = y - s;
                let xp = x - shape.drift * (y + yp) - xi;
                KernelPoint::new(x - xp, y, yp)
            }
        }
    };
    let value = |pt: &KernelPoint| -> f64 {
        let v = match q.derivative {
            None => shape.value(pt),
            Some(w) => shape.grad(pt, w),
        };
        v.abs().powf(p)
    };

    let inner_opts = QuadOptions { abs_tol: 0.0, rel_tol: 1e-13, max_intervals: 400 };
    let outer_opts = QuadOptions { abs_tol: 0.0, rel_tol: 1e-12, max_intervals: 400 };
    let w_xi = 12.0 * sd_xi;
    let w_s = 12.0 * sd_s;

    let mut inner_err: Option<Error> = None;
    let outer = integrate(
        |s| {
            // zero of the derivative factor along xi, if any
            let kink = match q.derivative {
                Some(Variable::Y) => s * one_k / shape.drift,
                Some(Variable::YPrime) => -s * one_k / shape.drift,
                _ => 0.0,
            };
            let kink = if kink.is_finite() { kink } else { 0.0 };
            let pts = breakpoints(-w_xi, w_xi, &[0.0, kink]);
            match integrate(|xi| value(&point(s, xi)), &pts, &inner_opts) {
                Ok(r) => r.value,
                Err(e) => {
                    inner_err.get_or_insert(e);
                    f64::NAN
                }
            }
        },
        &breakpoints(-w_s, w_s, &[0.0]),
        &outer_opts,
    );
    if let Some(e) = inner_err {
        return Err(e);
    }
    let integral = outer?.value;
    if !(integral.is_finite() && integral > 0.0) {
        return Err(Error::Quadrature(format!("non-positive integral {integral}")));
    }
    Ok(integral.powf(1.0 / p))
}

/// `p^(-1/p) (4 pi tau)^(-(1-1/p)) (1 + kappa)^(-(1-1/p)/2)`.
pub fn kernel_lp_closed_form(params: &KernelParams, p: f64) -> Result<f64> {
    check_p(p)?;
    let e = 1.0 - 1.0 / p;
    let log = -p.ln() / p - e * (4.0 * PI * params.tau()).ln() - 0.5 * e * params.kappa().ln_1p();
    Ok(log.exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Lemma {
    /// The kernel itself.
    Kernel,
    /// x-derivatives: extra `tau^-1/2 (1+kappa)^-1/2`.
    XDerivative,
    /// y-derivatives: extra `tau^-1/2` only.
    YDerivative,
}

impl Lemma {
    pub fn name(self) -> &'static str {
        match self {
            Lemma::Kernel => "kernel",
            Lemma::XDerivative => "x_derivative",
            Lemma::YDerivative => "y_derivative",
        }
    }

    pub fn derivatives(self) -> Vec<Option<Variable>> {
        match self {
            Lemma::Kernel => vec![None],
            Lemma::XDerivative => vec![Some(Variable::X), Some(Variable::XPrime)],
            Lemma::YDerivative => vec![Some(Variable::Y), Some(Variable::YPrime)],
        }
    }

    /// Envelope value; `exponent_shift` is added to the tau exponent (zero for the real envelope).
    pub fn envelope(self, params: &KernelParams, p: f64, exponent_shift: f64) -> f64 {
        let e = 1.0 - 1.0 / p;
        let tau = params.tau();
        let lk = params.kappa().ln_1p();
        let mut log = -e * tau.ln() - 0.5 * e * lk + exponent_shift * tau.ln();
        match self {
            Lemma::Kernel => {}
            Lemma::XDerivative => log += -0.5 * tau.ln() - 0.5 * lk,
            Lemma::YDerivative => log += -0.5 * tau.ln(),
        }
        log.exp()
    }

    /// d log(envelope) / d log(tau) as kappa -> infinity.
    pub fn asymptotic_slope(self, p: f64) -> f64 {
        let e = 1.0 - 1.0 / p;
        match self {
            Lemma::Kernel => -2.0 * e,
            Lemma::XDerivative => -2.0 * e - 1.5,
            Lemma::YDerivative => -2.0 * e - 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormRow {
    pub lemma: Lemma,
    pub p: f64,
    pub nu: f64,
    pub tau: f64,
    pub slice: Slice,
    pub derivative: Option<Variable>,
    pub measured: f64,
    pub envelope: f64,
    pub ratio: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlopeFit {
    pub lemma: Lemma,
    pub p: f64,
    pub nu: f64,
    pub slice: Slice,
    pub derivative: Option<Variable>,
    /// `"large"` for tau >> nu, `"small"` for tau << nu.
    pub regime: &'static str,
    pub measured_slope: f64,
    pub envelope_slope: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormReport {
    pub rows: Vec<NormRow>,
    /// Per `(p, slice, derivative)`: 1.01 times the largest ratio on the calibration subgrid.
    pub constants: Vec<(f64, Slice, Option<Variable>, f64)>,
    pub fitted_exponents: Vec<SlopeFit>,
}

impl NormReport {
    pub fn flagged(&self) -> impl Iterator<Item = &NormRow> {
        self.rows.iter().filter(|r| r.flagged)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["lemma", "p", "nu", "tau", "slice", "derivative", "measured", "envelope", "ratio"])?;
        for r in &self.rows {
            out.write_record([
                r.lemma.name().to_string(),
                r.p.to_string(),
                r.nu.to_string(),
                r.tau.to_string(),
                r.slice.name().to_string(),
                r.derivative.map_or("none", |v| v.name()).to_string(),
                r.measured.to_string(),
                r.envelope.to_string(),
                r.ratio.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Ratio of tau to nu above which a point is in the enhanced regime, and below which
/// (inverted) it is in the heat regime.
pub const REGIME_SPLIT: f64 = 10.0;

/// Measure every `(nu, tau, p, slice, derivative)` combination for a lemma and compare
/// against its envelope.
///
/// The calibration subgrid is every other `(nu, tau)` entry plus the last one.
pub fn verify_lemma_bounds(lemma: Lemma, grid: &[(f64, f64)], p_list: &[f64]) -> Result<NormReport> {
    verify_lemma_bounds_with(lemma, grid, p_list, 0.0)
}

/// As [`verify_lemma_bounds`] with the envelope's tau exponent shifted by `exponent_shift`.
/// A nonzero shift is a deliberately wrong envelope.
pub fn verify_lemma_bounds_with(
    lemma: Lemma,
    grid: &[(f64, f64)],
    p_list: &[f64],
    exponent_shift: f64,
) -> Result<NormReport> {
    let mut jobs = Vec::new();
    for (gi, &(nu, tau)) in grid.iter().enumerate() {
        let params = KernelParams::new(nu, tau)?;
        for &p in p_list {
            check_p(p)?;
            for slice in [Slice::Source, Slice::Target] {
                for d in lemma.derivatives() {
                    jobs.push((gi, params, p, slice, d));
                }
            }
        }
    }
    let measured: Vec<Result<f64>> = jobs
        .par_iter()
        .map(|&(_, params, p, slice, d)| {
            kernel_lp_quadrature(&NormQuery::new(params, p, slice, d)?).map_err(|e| {
                Error::Quadrature(format!(
                    "nu={} tau={} p={p} slice={} derivative={}: {e}",
                    params.nu(),
                    params.tau(),
                    slice.name(),
                    d.map_or("none", |v| v.name())
                ))
            })
        })
        .collect();

    let mut rows = Vec::with_capacity(jobs.len());
    let mut calib = Vec::with_capacity(jobs.len());
    for (&(gi, params, p, slice, d), m) in jobs.iter().zip(measured) {
        let m = m?;
        let env = lemma.envelope(&params, p, exponent_shift);
        rows.push(NormRow {
            lemma,
            p,
            nu: params.nu(),
            tau: params.tau(),
            slice,
            derivative: d,
            measured: m,
            envelope: env,
            ratio: m / env,
            flagged: false,
        });
        calib.push(gi % 2 == 0 || gi + 1 == grid.len());
    }

    let mut constants: Vec<(f64, Slice, Option<Variable>, f64)> = Vec::new();
    for (r, &c) in rows.iter().zip(&calib) {
        if !c {
            continue;
        }
        match constants
            .iter_mut()
            .find(|k| k.0 == r.p && k.1 == r.slice && k.2 == r.derivative)
        {
            Some(k) => k.3 = k.3.max(1.01 * r.ratio),
            None => constants.push((r.p, r.slice, r.derivative, 1.01 * r.ratio)),
        }
    }
    for r in rows.iter_mut() {
        let c = constants
            .iter()
            .find(|k| k.0 == r.p && k.1 == r.slice && k.2 == r.derivative)
            .map(|k| k.3)
            .unwrap_or(f64::INFINITY);
        r.flagged = !(r.measured <= c * r.envelope);
    }

    let fitted_exponents = fit_slopes(lemma, &rows);
    Ok(NormReport { rows, constants, fitted_exponents })
}

fn fit_slopes(lemma: Lemma, rows: &[NormRow]) -> Vec<SlopeFit> {
    let mut keys: Vec<(f64, f64, Slice, Option<Variable>)> = Vec::new();
    for r in rows {
        let k = (r.p, r.nu, r.slice, r.derivative);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    let mut fits = Vec::new();
    for (p, nu, slice, d) in keys {
        for regime in ["small", "large"] {
            let sel: Vec<&NormRow> = rows
                .iter()
                .filter(|r| r.p == p && r.nu == nu && r.slice == slice && r.derivative == d)
                .filter(|r| match regime {
                    "large" => r.tau / r.nu >= REGIME_SPLIT,
                    _ => r.tau / r.nu <= 1.0 / REGIME_SPLIT,
                })
                .collect();
            if sel.len() < 2 {
                continue;
            }
            let xs: Vec<f64> = sel.iter().map(|r| r.tau.ln()).collect();
            let ym: Vec<f64> = sel.iter().map(|r| r.measured.ln()).collect();
            let ye: Vec<f64> = sel.iter().map(|r| r.envelope.ln()).collect();
            fits.push(SlopeFit {
                lemma,
                p,
                nu,
                slice,
                derivative: d,
                regime,
                measured_slope: least_squares(&xs, &ym).0,
                envelope_slope: least_squares(&xs, &ye).0,
                points: sel.len(),
            });
        }
    }
    fits
}

/// Slope and intercept of the least-squares line through `(x, y)`.
pub fn least_squares(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Result of [`young_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YoungBound {
    pub lhs: f64,
    pub bound_fine: f64,
    pub bound_coarse: f64,
    /// Largest q-norm over sources, `max_j ||K(., j)||_q`.
    pub a: f64,
    /// Largest q-norm over targets, `max_i ||K(i, .)||_q`.
    pub b: f64,
}

/// Exponent triple check `1 + 1/r = 1/q + 1/p`.
pub fn young_exponents_ok(p: f64, q: f64, r: f64) -> bool {
    [p, q, r].iter().all(|v| v.is_finite() && *v >= 1.0) && ((1.0 + 1.0 / r) - (1.0 / q + 1.0 / p)).abs() < 1e-12
}

/// Discrete Young bound for `(Tf)_i = sum_j K[i][j] f_j w` with cell weight `w`.
///
/// `kernel` is row-major `n x n` with rows indexed by target `i` and columns by source `j`.
pub fn young_check(kernel: &[f64], f: &[f64], w: f64, p: f64, q: f64, r: f64) -> Result<YoungBound> {
    if !young_exponents_ok(p, q, r) {
        return Err(Error::InvalidParam(format!("exponents ({p}, {q}, {r}) violate 1 + 1/r = 1/q + 1/p")));
    }
    let n = f.len();
    if kernel.len() != n * n {
        return Err(Error::InvalidParam(format!("kernel has {} entries, expected {}", kernel.len(), n * n)));
    }
    if !(w > 0.0) {
        return Err(Error::InvalidParam("cell weight must be positive".into()));
    }
    let lq = |it: &mut dyn Iterator<Item = f64>| -> f64 { (it.map(|v| v.abs().powf(q)).sum::<f64>() * w).powf(1.0 / q) };
    let mut a: f64 = 0.0;
    for j in 0..n {
        a = a.max(lq(&mut (0..n).map(|i| kernel[i * n + j])));
    }
    let mut b: f64 = 0.0;
    for i in 0..n {
        b = b.max(lq(&mut kernel[i * n..(i + 1) * n].iter().copied()));
    }
    let tf: Vec<f64> = (0..n)
        .map(|i| kernel[i * n..(i + 1) * n].iter().zip(f).map(|(k, v)| k * v).sum::<f64>() * w)
        .collect();
    let lp = |v: &[f64], e: f64| (v.iter().map(|x| x.abs().powf(e)).sum::<f64>() * w).powf(1.0 / e);
    let fp = lp(f, p);
    let lhs = lp(&tf, r);
    Ok(YoungBound {
        lhs,
        bound_fine: a.powf(q / r) * b.powf(1.0 - q / r) * fp,
        bound_coarse: a.max(b) * fp,
        a,
        b,
    })
}
