//! Periodic-box fields, the Fourier pair, Biot-Savart and the shearing-frame relabeling.
//!
//! The box is `[-lx, lx) x [-ly, ly)`. Transforms use the continuum normalization
//! `f_hat(k, eta) ~ integral f exp(-i (k x + eta y))`, sampled at `k = pi m / lx`, so that
//! `||f||_2^2 = sum |f_hat|^2 / (4 lx ly)` and multipliers act like their continuum symbols.
//!
//! Spectral arrays are row-major with `y` rows and `x` contiguous, both axes in FFT order.
//! A moving-frame field `f(X, Y) = omega(X + t Y, Y)` lives on the same arrays; its mode
//! `(k, eta)` carries the laboratory wavenumber `(k, eta - k t)`.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::io::{Read, Write};
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Sample counts and half-lengths per axis.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
}

impl GridSpec {
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self> {
        for n in [nx, ny] {
            if n < 16 || !n.is_power_of_two() {
                return Err(Error::InvalidParam(format!("grid size {n} must be a power of two >= 16")));
            }
        }
        for l in [lx, ly] {
            if !(l.is_finite() && l > 0.0) {
                return Err(Error::InvalidParam(format!("half-length {l} must be positive")));
            }
        }
        Ok(GridSpec { nx, ny, lx, ly })
    }

    pub fn square(n: usize, l: f64) -> Result<Self> {
        Self::new(n, n, l, l)
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dx(&self) -> f64 {
        2.0 * self.lx / self.nx as f64
    }

    pub fn dy(&self) -> f64 {
        2.0 * self.ly / self.ny as f64
    }

    pub fn cell(&self) -> f64 {
        self.dx() * self.dy()
    }

    pub fn x(&self, ix: usize) -> f64 {
        -self.lx + ix as f64 * self.dx()
    }

    pub fn y(&self, iy: usize) -> f64 {
        -self.ly + iy as f64 * self.dy()
    }

    /// Signed mode number of FFT index `i` on an axis of `n` points.
    pub fn mode(i: usize, n: usize) -> i64 {
        if i < n / 2 {
            i as i64
        } else {
            i as i64 - n as i64
        }
    }

    pub fn kx(&self, ix: usize) -> f64 {
        PI * Self::mode(ix, self.nx) as f64 / self.lx
    }

    pub fn ky(&self, iy: usize) -> f64 {
        PI * Self::mode(iy, self.ny) as f64 / self.ly
    }

    pub fn k_max(&self) -> f64 {
        PI * (self.nx / 2) as f64 / self.lx
    }

    pub fn eta_max(&self) -> f64 {
        PI * (self.ny / 2) as f64 / self.ly
    }

    /// 2/3-rule retained set: `|m| <= n/3` on both axes; Nyquist rows always dropped.
    pub fn dealias_keep(&self, ix: usize, iy: usize) -> bool {
        let mx = Self::mode(ix, self.nx).unsigned_abs() as usize;
        let my = Self::mode(iy, self.ny).unsigned_abs() as usize;
        3 * mx <= self.nx && 3 * my <= self.ny
    }

    /// Parseval weight: `||f||_2^2 = parseval() * sum |f_hat|^2`.
    pub fn parseval(&self) -> f64 {
        1.0 / (4.0 * self.lx * self.ly)
    }

    fn ensure_same(&self, other: &GridSpec) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!("{self:?} vs {other:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub grid: GridSpec,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: GridSpec) -> Self {
        ScalarField { grid, values: vec![0.0; grid.len()] }
    }

    pub fn from_fn<F: Fn(f64, f64) -> f64>(grid: GridSpec, f: F) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for iy in 0..grid.ny {
            let y = grid.y(iy);
            for ix in 0..grid.nx {
                values.push(f(grid.x(ix), y));
            }
        }
        ScalarField { grid, values }
    }

    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!("{} samples for a {}x{} grid", values.len(), grid.nx, grid.ny)));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("field samples"));
        }
        Ok(ScalarField { grid, values })
    }

    pub fn at(&self, ix: usize, iy: usize) -> f64 {
        self.values[iy * self.grid.nx + ix]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest boundary sample over the largest sample, 0 for a zero field.
    pub fn boundary_ratio(&self) -> f64 {
        let g = self.grid;
        let max = self.max_abs();
        if max == 0.0 {
            return 0.0;
        }
        let mut b: f64 = 0.0;
        for ix in 0..g.nx {
            b = b.max(self.at(ix, 0).abs()).max(self.at(ix, g.ny - 1).abs());
        }
        for iy in 0..g.ny {
            b = b.max(self.at(0, iy).abs()).max(self.at(g.nx - 1, iy).abs());
        }
        b / max
    }

    /// Errors unless the field is small on the box boundary relative to its maximum.
    pub fn check_localized(&self, limit: f64) -> Result<()> {
        let ratio = self.boundary_ratio();
        if ratio <= limit {
            Ok(())
        } else {
            Err(Error::Localization { ratio, limit })
        }
    }

    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell()
    }

    pub fn scale(&mut self, c: f64) {
        self.values.iter_mut().for_each(|v| *v *= c);
    }
}

/// Localization limit used for admissible data.
pub const LOCALIZATION_LIMIT: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    pub grid: GridSpec,
    pub modes: Vec<Complex64>,
}

impl SpectralField {
    pub fn zeros(grid: GridSpec) -> Self {
        SpectralField { grid, modes: vec![Complex64::new(0.0, 0.0); grid.len()] }
    }

    pub fn at(&self, ix: usize, iy: usize) -> Complex64 {
        self.modes[iy * self.grid.nx + ix]
    }

    /// `||f||_2` by Parseval.
    pub fn l2(&self) -> f64 {
        (self.modes.iter().map(|c| c.norm_sqr()).sum::<f64>() * self.grid.parseval()).sqrt()
    }

    /// `||grad f||_2` with the laboratory symbol `(k, eta - k t)` (use `t = 0` for a lab field).
    pub fn grad_l2(&self, t: f64) -> f64 {
        let g = self.grid;
        let mut s = 0.0;
        for iy in 0..g.ny {
            let eta = g.ky(iy);
            for ix in 0..g.nx {
                let k = g.kx(ix);
                let el = eta - k * t;
                s += (k * k + el * el) * self.modes[iy * g.nx + ix].norm_sqr();
            }
        }
        (s * g.parseval()).sqrt()
    }

    /// Applies the 2/3 rule in place.
    pub fn dealias(&mut self) {
        let g = self.grid;
        for iy in 0..g.ny {
            for ix in 0..g.nx {
                if !g.dealias_keep(ix, iy) {
                    self.modes[iy * g.nx + ix] = Complex64::new(0.0, 0.0);
                }
            }
        }
    }

    /// Largest relative deviation from conjugate symmetry, ignoring Nyquist rows and columns.
    pub fn conjugate_asymmetry(&self) -> f64 {
        let g = self.grid;
        let mut worst: f64 = 0.0;
        let scale = self.modes.iter().fold(0.0f64, |m, c| m.max(c.norm())).max(1e-300);
        for iy in 0..g.ny {
            for ix in 0..g.nx {
                if ix == g.nx / 2 || iy == g.ny / 2 {
                    continue;
                }
                let jx = (g.nx - ix) % g.nx;
                let jy = (g.ny - iy) % g.ny;
                let d = self.at(ix, iy) - self.at(jx, jy).conj();
                worst = worst.max(d.norm() / scale);
            }
        }
        worst
    }
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Cached FFT plans and scratch for one grid, with per-axis continuum normalization.
pub struct Fft2 {
    grid: GridSpec,
    fx: Arc<dyn Fft<f64>>,
    bx: Arc<dyn Fft<f64>>,
    fy: Arc<dyn Fft<f64>>,
    by: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
    tbuf: Vec<Complex64>,
}

impl Fft2 {
    pub fn new(grid: GridSpec) -> Self {
        let (fx, bx, fy, by) = PLANNER.with(|p| {
            let mut p = p.borrow_mut();
            (
                p.plan_fft_forward(grid.nx),
                p.plan_fft_inverse(grid.nx),
                p.plan_fft_forward(grid.ny),
                p.plan_fft_inverse(grid.ny),
            )
        });
        let scratch_len = [&fx, &bx, &fy, &by].iter().map(|f| f.get_inplace_scratch_len()).max().unwrap_or(0);
        Fft2 {
            grid,
            fx,
            bx,
            fy,
            by,
            scratch: vec![Complex64::new(0.0, 0.0); scratch_len],
            tbuf: vec![Complex64::new(0.0, 0.0); grid.len()],
        }
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    fn sign(i: usize) -> f64 {
        if i.is_multiple_of(2) {
            1.0
        } else {
            -1.0
        }
    }

    /// Real space to spectral along x.
    pub fn forward_x(&mut self, buf: &mut [Complex64]) {
        let (nx, dx) = (self.grid.nx, self.grid.dx());
        self.fx.process_with_scratch(buf, &mut self.scratch);
        for row in buf.chunks_exact_mut(nx) {
            for (ix, c) in row.iter_mut().enumerate() {
                *c *= dx * Self::sign(ix);
            }
        }
    }

    pub fn backward_x(&mut self, buf: &mut [Complex64]) {
        let nx = self.grid.nx;
        let w = 1.0 / (self.grid.dx() * nx as f64);
        for row in buf.chunks_exact_mut(nx) {
            for (ix, c) in row.iter_mut().enumerate() {
                *c *= w * Self::sign(ix);
            }
        }
        self.bx.process_with_scratch(buf, &mut self.scratch);
    }

    fn along_y(&mut self, buf: &mut [Complex64], forward: bool) {
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        for iy in 0..ny {
            for ix in 0..nx {
                self.tbuf[ix * ny + iy] = buf[iy * nx + ix];
            }
        }
        if forward {
            self.fy.process_with_scratch(&mut self.tbuf, &mut self.scratch);
        } else {
            self.by.process_with_scratch(&mut self.tbuf, &mut self.scratch);
        }
        for ix in 0..nx {
            for iy in 0..ny {
                buf[iy * nx + ix] = self.tbuf[ix * ny + iy];
            }
        }
    }

    pub fn forward_y(&mut self, buf: &mut [Complex64]) {
        let (nx, dy) = (self.grid.nx, self.grid.dy());
        self.along_y(buf, true);
        for (iy, row) in buf.chunks_exact_mut(nx).enumerate() {
            let s = dy * Self::sign(iy);
            row.iter_mut().for_each(|c| *c *= s);
        }
    }

    pub fn backward_y(&mut self, buf: &mut [Complex64]) {
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        let w = 1.0 / (self.grid.dy() * ny as f64);
        for (iy, row) in buf.chunks_exact_mut(nx).enumerate() {
            let s = w * Self::sign(iy);
            row.iter_mut().for_each(|c| *c *= s);
        }
        self.along_y(buf, false);
    }

    pub fn forward(&mut self, f: &ScalarField) -> Result<SpectralField> {
        self.grid.ensure_same(&f.grid)?;
        let mut buf: Vec<Complex64> = f.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward_x(&mut buf);
        self.forward_y(&mut buf);
        Ok(SpectralField { grid: self.grid, modes: buf })
    }

    pub fn backward(&mut self, f: &SpectralField) -> Result<ScalarField> {
        self.grid.ensure_same(&f.grid)?;
        let mut buf = f.modes.clone();
        self.backward_y(&mut buf);
        self.backward_x(&mut buf);
        Ok(ScalarField { grid: self.grid, values: buf.iter().map(|c| c.re).collect() })
    }

    /// Real samples from spectral data already in `buf` (consumed).
    pub fn backward_real(&mut self, buf: &mut [Complex64], out: &mut [f64]) {
        self.backward_y(buf);
        self.backward_x(buf);
        for (o, c) in out.iter_mut().zip(buf.iter()) {
            *o = c.re;
        }
    }
}

pub fn transform_forward(f: &ScalarField) -> Result<SpectralField> {
    Fft2::new(f.grid).forward(f)
}

pub fn transform_backward(f: &SpectralField) -> Result<ScalarField> {
    Fft2::new(f.grid).backward(f)
}

#[derive(Debug, Clone, PartialEq)]
pub struct VelocityField {
    pub u1: ScalarField,
    pub u2: ScalarField,
}

/// Fourier multipliers taking `omega_hat` to `(u1_hat, u2_hat)` at wavenumber `(k, eta)`.
///
/// `u = (d_y phi, -d_x phi)` with `lap phi = omega`, so the vorticity is recovered as
/// `d_y u1 - d_x u2`. The zero mode maps to zero.
#[inline]
pub fn biot_savart_symbol(k: f64, eta: f64) -> (Complex64, Complex64) {
    let k2 = k * k + eta * eta;
    if k2 == 0.0 {
        return (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
    }
    (Complex64::new(0.0, -eta / k2), Complex64::new(0.0, k / k2))
}

/// Spectral velocity of a field whose modes carry laboratory wavenumbers `(k, eta - k t)`.
pub fn biot_savart_hat(omega_hat: &SpectralField, t: f64) -> (SpectralField, SpectralField) {
    let g = omega_hat.grid;
    let mut u1 = SpectralField::zeros(g);
    let mut u2 = SpectralField::zeros(g);
    for iy in 0..g.ny {
        let eta = g.ky(iy);
        for ix in 0..g.nx {
            let k = g.kx(ix);
            let i = iy * g.nx + ix;
            let (a, b) = biot_savart_symbol(k, eta - k * t);
            u1.modes[i] = a * omega_hat.modes[i];
            u2.modes[i] = b * omega_hat.modes[i];
        }
    }
    (u1, u2)
}

pub fn biot_savart(omega_hat: &SpectralField) -> Result<VelocityField> {
    if omega_hat.modes.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
        return Err(Error::NonFinite("vorticity modes"));
    }
    let (a, b) = biot_savart_hat(omega_hat, 0.0);
    let mut fft = Fft2::new(omega_hat.grid);
    Ok(VelocityField { u1: fft.backward(&a)?, u2: fft.backward(&b)? })
}

/// `(||div u||, ||grad u||)` in spectral L2, Nyquist modes excluded.
pub fn divergence_ratio(u: &VelocityField) -> Result<f64> {
    let mut fft = Fft2::new(u.u1.grid);
    let a = fft.forward(&u.u1)?;
    let b = fft.forward(&u.u2)?;
    let g = a.grid;
    let (mut div, mut grad) = (0.0, 0.0);
    for iy in 0..g.ny {
        for ix in 0..g.nx {
            if ix == g.nx / 2 || iy == g.ny / 2 {
                continue;
            }
            let (k, eta) = (g.kx(ix), g.ky(iy));
            let i = iy * g.nx + ix;
            div += (Complex64::new(0.0, k) * a.modes[i] + Complex64::new(0.0, eta) * b.modes[i]).norm_sqr();
            grad += (k * k + eta * eta) * (a.modes[i].norm_sqr() + b.modes[i].norm_sqr());
        }
    }
    Ok(if grad == 0.0 { 0.0 } else { (div / grad).sqrt() })
}

/// `d_y u1 - d_x u2` spectrally.
pub fn curl(u: &VelocityField) -> Result<ScalarField> {
    let mut fft = Fft2::new(u.u1.grid);
    let a = fft.forward(&u.u1)?;
    let b = fft.forward(&u.u2)?;
    let g = a.grid;
    let mut w = SpectralField::zeros(g);
    for iy in 0..g.ny {
        for ix in 0..g.nx {
            if ix == g.nx / 2 || iy == g.ny / 2 {
                continue;
            }
            let i = iy * g.nx + ix;
            w.modes[i] = Complex64::new(0.0, g.ky(iy)) * a.modes[i] - Complex64::new(0.0, g.kx(ix)) * b.modes[i];
        }
    }
    fft.backward(&w)
}

/// Eta-index shift taking moving mode `mx` to its laboratory row at time `t`, if integral.
fn frame_shift(g: &GridSpec, mx: i64, t: f64) -> Option<i64> {
    let s = mx as f64 * t * g.ly / g.lx;
    let r = s.round();
    if (s - r).abs() <= 1e-9 * s.abs().max(1.0) {
        Some(r as i64)
    } else {
        None
    }
}

/// Relabels moving-frame mode `(k, eta)` as laboratory mode `(k, eta - k t)`.
///
/// Modes with `|f_hat| <= floor * max |f_hat|` count as empty and are dropped. Occupied
/// modes whose target row is off the grid give [`Error::FrameOverflow`]; a time for which the
/// shift is not a whole number of rows gives [`Error::OffGridShift`].
pub fn shear_frame_map_with_floor(omega_hat: &SpectralField, t: f64, floor: f64) -> Result<SpectralField> {
    let g = omega_hat.grid;
    let max = omega_hat.modes.iter().fold(0.0f64, |m, c| m.max(c.norm()));
    let cut = floor * max;
    let mut out = SpectralField::zeros(g);
    let half = (g.ny / 2) as i64;
    for ix in 0..g.nx {
        let mx = GridSpec::mode(ix, g.nx);
        let occupied = (0..g.ny).any(|iy| omega_hat.at(ix, iy).norm() > cut);
        if !occupied {
            continue;
        }
        let shift = frame_shift(&g, mx, t).ok_or(Error::OffGridShift { t })?;
        for iy in 0..g.ny {
            let c = omega_hat.at(ix, iy);
            if c.norm() <= cut {
                continue;
            }
            let my = GridSpec::mode(iy, g.ny) - shift;
            if my < -half || my >= half {
                return Err(Error::FrameOverflow { t, kx: mx, ky: GridSpec::mode(iy, g.ny) });
            }
            let jy = my.rem_euclid(g.ny as i64) as usize;
            out.modes[jy * g.nx + ix] = c;
        }
    }
    Ok(out)
}

pub fn shear_frame_map(omega_hat: &SpectralField, t: f64) -> Result<SpectralField> {
    shear_frame_map_with_floor(omega_hat, t, 0.0)
}

/// `integral_a^b (k^2 + (eta - k s)^2) ds` for a moving-frame mode, in a cancellation-free form.
#[inline]
pub fn viscous_exponent(k: f64, eta: f64, a: f64, b: f64) -> f64 {
    let h = b - a;
    let u = eta - k * a;
    k * k * h + h * ((u - 0.5 * k * h).powi(2) + k * k * h * h / 12.0)
}

/// The same integral without shear: `(k^2 + eta^2) (b - a)`.
#[inline]
pub fn heat_exponent(k: f64, eta: f64, a: f64, b: f64) -> f64 {
    (k * k + eta * eta) * (b - a)
}

/// `M(k, eta, t) = k^2 t + ((eta + k t)^3 - eta^3) / (3 k)` for a laboratory wavenumber.
pub fn linear_symbol(k: f64, eta: f64, t: f64) -> f64 {
    viscous_exponent(k, eta + k * t, 0.0, t)
}

/// Exact linear evolution of moving-frame modes from time 0 to `t`.
pub fn linear_exact_moving(omega0_hat: &SpectralField, t: f64, nu: f64) -> SpectralField {
    let g = omega0_hat.grid;
    let mut out = omega0_hat.clone();
    for iy in 0..g.ny {
        let eta = g.ky(iy);
        for ix in 0..g.nx {
            out.modes[iy * g.nx + ix] *= (-nu * viscous_exponent(g.kx(ix), eta, 0.0, t)).exp();
        }
    }
    out
}

/// Exact linear evolution in laboratory modes; needs an on-grid frame shift at `t`.
pub fn linear_exact_fourier(omega0_hat: &SpectralField, t: f64, nu: f64) -> Result<SpectralField> {
    if !(t >= 0.0 && nu >= 0.0) {
        return Err(Error::InvalidParam(format!("need t >= 0 and nu >= 0, got t={t}, nu={nu}")));
    }
    shear_frame_map(&linear_exact_moving(omega0_hat, t, nu), t)
}

/// Laboratory samples of a moving-frame field at time `t` (any `t`): `omega(x, y) = f(x - t y, y)`.
pub fn moving_to_lab(fft: &mut Fft2, f_hat: &SpectralField, t: f64) -> ScalarField {
    let g = f_hat.grid;
    let mut buf = f_hat.modes.clone();
    fft.backward_y(&mut buf);
    for iy in 0..g.ny {
        let y = g.y(iy);
        for ix in 0..g.nx {
            let ph = -g.kx(ix) * t * y;
            buf[iy * g.nx + ix] *= Complex64::from_polar(1.0, ph);
        }
    }
    fft.backward_x(&mut buf);
    ScalarField { grid: g, values: buf.iter().map(|c| c.re).collect() }
}

/// Riemann-sum Lp norm; `p = inf` gives the max modulus.
pub fn lp_norm_field(f: &ScalarField, p: f64) -> Result<f64> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::InvalidParam(format!("p must be >= 1, got {p}")));
    }
    if p.is_infinite() {
        return Ok(f.max_abs());
    }
    let s: f64 = if p == 2.0 {
        f.values.iter().map(|v| v * v).sum()
    } else if p == 1.0 {
        f.values.iter().map(|v| v.abs()).sum()
    } else {
        f.values.iter().map(|v| v.abs().powf(p)).sum()
    };
    Ok((s * f.grid.cell()).powf(1.0 / p))
}

/// Lp norm of the Euclidean magnitude of a vector field.
pub fn lp_norm_vector(u: &VelocityField, p: f64) -> Result<f64> {
    let mag = ScalarField {
        grid: u.u1.grid,
        values: u.u1.values.iter().zip(&u.u2.values).map(|(a, b)| a.hypot(*b)).collect(),
    };
    lp_norm_field(&mag, p)
}

const SNAPSHOT_HEADER: usize = 48;

/// Writes `nx, ny` (u64), `lx, ly, time, nu` (f64), then row-major samples, little-endian.
pub fn write_snapshot<W: Write>(mut w: W, f: &ScalarField, time: f64, nu: f64) -> Result<()> {
    let g = f.grid;
    let mut bytes = Vec::with_capacity(SNAPSHOT_HEADER + 8 * f.values.len());
    bytes.extend_from_slice(&(g.nx as u64).to_le_bytes());
    bytes.extend_from_slice(&(g.ny as u64).to_le_bytes());
    for v in [g.lx, g.ly, time, nu] {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    for v in &f.values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&bytes)?;
    Ok(())
}

/// Inverse of [`write_snapshot`]: `(field, time, nu)`.
pub fn read_snapshot<R: Read>(mut r: R) -> Result<(ScalarField, f64, f64)> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() < SNAPSHOT_HEADER {
        return Err(Error::Io("snapshot shorter than its header".into()));
    }
    let u = |i: usize| u64::from_le_bytes(bytes[i..i + 8].try_into().unwrap());
    let f = |i: usize| f64::from_le_bytes(bytes[i..i + 8].try_into().unwrap());
    let grid = GridSpec::new(u(0) as usize, u(8) as usize, f(16), f(24))?;
    if bytes.len() != SNAPSHOT_HEADER + 8 * grid.len() {
        return Err(Error::Io(format!("snapshot has {} bytes, expected {}", bytes.len(), SNAPSHOT_HEADER + 8 * grid.len())));
    }
    let values = (0..grid.len()).map(|i| f(SNAPSHOT_HEADER + 8 * i)).collect();
    Ok((ScalarField { grid, values }, f(32), f(40)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian(grid: GridSpec, s: f64) -> ScalarField {
        ScalarField::from_fn(grid, |x, y| (-(x * x + y * y) / (2.0 * s * s)).exp())
    }

    #[test]
    fn grid_validation() {
        assert!(GridSpec::new(8, 16, 1.0, 1.0).is_err());
        assert!(GridSpec::new(24, 16, 1.0, 1.0).is_err());
        assert!(GridSpec::new(16, 16, 0.0, 1.0).is_err());
        let g = GridSpec::new(32, 16, 2.0, 1.0).unwrap();
        assert_eq!(g.dx(), 0.125);
        assert_eq!(g.x(0), -2.0);
        assert_eq!(GridSpec::mode(31, 32), -1);
        assert_eq!(GridSpec::mode(16, 32), -16);
    }

    #[test]
    fn norm_examples() {
        let g = GridSpec::square(16, 1.0).unwrap();
        let one = ScalarField::from_fn(g, |_, _| 1.0);
        assert!((lp_norm_field(&one, 2.0).unwrap() - 2.0).abs() < 1e-14);
        let g = GridSpec::square(128, 10.0).unwrap();
        let f = gaussian(g, 1.0);
        assert!((lp_norm_field(&f, 2.0).unwrap() - PI.sqrt()).abs() < 1e-6);
        assert_eq!(lp_norm_field(&f, f64::INFINITY).unwrap(), 1.0);
        assert!(lp_norm_field(&f, 0.5).is_err());
    }

    #[test]
    fn spike_has_flat_spectrum() {
        let g = GridSpec::square(16, 1.0).unwrap();
        let mut f = ScalarField::zeros(g);
        f.values[5 * 16 + 3] = 1.0;
        let h = transform_forward(&f).unwrap();
        let m0 = h.modes[0].norm();
        assert!(h.modes.iter().all(|c| (c.norm() - m0).abs() < 1e-15));
    }

    #[test]
    fn gaussian_transform_matches_continuum() {
        let g = GridSpec::new(64, 128, 10.0, 12.0).unwrap();
        let f = gaussian(g, 1.0);
        let h = transform_forward(&f).unwrap();
        for &(ix, iy) in &[(0usize, 0usize), (3, 0), (0, 5), (2, 7), (63, 120)] {
            let (k, eta) = (g.kx(ix), g.ky(iy));
            let exact = 2.0 * PI * (-(k * k + eta * eta) / 2.0).exp();
            assert!((h.at(ix, iy).re - exact).abs() < 1e-12, "{ix} {iy}");
            assert!(h.at(ix, iy).im.abs() < 1e-12);
        }
    }

    #[test]
    fn biot_savart_sine() {
        let g = GridSpec::square(32, PI).unwrap();
        let w = ScalarField::from_fn(g, |x, _| x.sin());
        let u = biot_savart(&transform_forward(&w).unwrap()).unwrap();
        for iy in 0..g.ny {
            for ix in 0..g.nx {
                let i = iy * g.nx + ix;
                assert!(u.u1.values[i].abs() < 1e-13);
                assert!((u.u2.values[i] - g.x(ix).cos()).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn zero_vorticity_zero_velocity() {
        let g = GridSpec::square(16, 1.0).unwrap();
        let u = biot_savart(&SpectralField::zeros(g)).unwrap();
        assert!(u.u1.values.iter().chain(&u.u2.values).all(|v| *v == 0.0));
    }

    #[test]
    fn frame_map_examples() {
        let g = GridSpec::square(32, PI).unwrap();
        let mut f = SpectralField::zeros(g);
        f.modes[1] = Complex64::new(1.0, 0.5);
        let m = shear_frame_map(&f, 2.0).unwrap();
        let iy = (g.ny as i64 - 2) as usize;
        assert_eq!(m.at(1, iy), Complex64::new(1.0, 0.5));
        assert_eq!(m.modes.iter().filter(|c| c.norm() > 0.0).count(), 1);
        assert_eq!(shear_frame_map(&f, 0.0).unwrap(), f);
        assert!(matches!(shear_frame_map(&f, 0.5), Err(Error::OffGridShift { .. })));
        assert!(matches!(shear_frame_map(&f, 17.0), Err(Error::FrameOverflow { kx: 1, ky: 0, .. })));
        let mut z = SpectralField::zeros(g);
        z.modes[3 * g.nx] = Complex64::new(2.0, 0.0);
        assert_eq!(shear_frame_map(&z, 5.0).unwrap(), z);
    }

    #[test]
    fn symbol_forms_agree() {
        for &(k, eta, t) in &[(1.0f64, 0.0f64, 2.0f64), (-2.0, 3.0, 0.7), (0.5, -4.0, 10.0)] {
            let direct: f64 = k * k * t + ((eta + k * t).powi(3) - eta.powi(3)) / (3.0 * k);
            assert!((linear_symbol(k, eta, t) - direct).abs() < 1e-10 * direct.abs().max(1.0));
        }
        assert!((linear_symbol(0.0, 2.0, 3.0) - 12.0).abs() < 1e-14);
        let nu: f64 = 1e-3;
        let t = nu.powf(-1.0 / 3.0);
        assert!((-nu * linear_symbol(1.0, 0.0, t)).exp() <= (-1.0f64 / 3.0).exp());
    }

    #[test]
    fn snapshot_round_trip() {
        let g = GridSpec::new(16, 32, 1.5, 2.0).unwrap();
        let f = gaussian(g, 0.3);
        let mut bytes = Vec::new();
        write_snapshot(&mut bytes, &f, 2.5, 1e-3).unwrap();
        assert_eq!(bytes.len(), 48 + 8 * 512);
        let (h, t, nu) = read_snapshot(&bytes[..]).unwrap();
        assert_eq!((h, t, nu), (f, 2.5, 1e-3));
        assert!(read_snapshot(&bytes[..40]).is_err());
    }

    #[test]
    fn localization_check() {
        let g = GridSpec::square(64, 8.0).unwrap();
        assert!(gaussian(g, 1.0).check_localized(LOCALIZATION_LIMIT).is_ok());
        assert!(gaussian(g, 3.0).check_localized(LOCALIZATION_LIMIT).is_err());
    }
}
