//! Linear propagation by kernel quadrature and the nonlinear shearing-frame time stepper.
//!
//! The unknown is the vorticity perturbation around `(y, 0)`:
//! `d_t w + y d_x w - nu lap w = -div(u w)`, `u = (d_y phi, -d_x phi)`, `lap phi = w`.
//! The stepper advances the moving-frame field `f(X, Y) = w(X + t Y, Y)`, whose modes
//! carry laboratory wavenumbers `(k, eta - k t)`. Viscosity is applied exactly through an
//! integrating factor and the nonlinearity by classical RK4.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::to_rescaled_time;
use crate::quadrature::{breakpoints, integrate_vec, QuadOptions};
use crate::spectral::{
    biot_savart_symbol, heat_exponent, lp_norm_field, viscous_exponent, Fft2, GridSpec, ScalarField, SpectralField,
    LOCALIZATION_LIMIT,
};

/// Initial-data profiles. Amplitude is fixed afterwards by normalizing to `eps`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DataShape {
    Gaussian { sigma_x: f64, sigma_y: f64 },
    /// Opposite-signed Gaussians centred at `(+-separation/2, 0)`.
    GaussianDipole { sigma: f64, separation: f64 },
    /// Gaussian envelope times a seeded sum of plane waves with wavenumbers up to `2 / sigma`.
    RandomLocalized { sigma: f64, seed: u64, modes: usize },
}

impl DataShape {
    pub fn sample(&self, grid: GridSpec) -> ScalarField {
        match *self {
            DataShape::Gaussian { sigma_x, sigma_y } => ScalarField::from_fn(grid, |x, y| {
                (-(x * x) / (2.0 * sigma_x * sigma_x) - y * y / (2.0 * sigma_y * sigma_y)).exp()
            }),
            DataShape::GaussianDipole { sigma, separation } => {
                let h = 0.5 * separation;
                let s2 = 2.0 * sigma * sigma;
                ScalarField::from_fn(grid, |x, y| {
                    (-((x - h).powi(2) + y * y) / s2).exp() - (-((x + h).powi(2) + y * y) / s2).exp()
                })
            }
            DataShape::RandomLocalized { sigma, seed, modes } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let waves: Vec<(f64, f64, f64, f64)> = (0..modes.max(1))
                    .map(|_| {
                        let r = rng.gen::<f64>() * 2.0 / sigma;
                        let th = rng.gen::<f64>() * 2.0 * PI;
                        (r * th.cos(), r * th.sin(), rng.gen::<f64>() * 2.0 * PI, rng.gen::<f64>() * 2.0 - 1.0)
                    })
                    .collect();
                let s2 = 2.0 * sigma * sigma;
                ScalarField::from_fn(grid, |x, y| {
                    let env = (-(x * x + y * y) / s2).exp();
                    env * waves.iter().map(|&(k, l, ph, a)| a * (k * x + l * y + ph).cos()).sum::<f64>()
                })
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            DataShape::Gaussian { sigma_x, sigma_y } => sigma_x > 0.0 && sigma_y > 0.0,
            DataShape::GaussianDipole { sigma, separation } => sigma > 0.0 && separation.is_finite(),
            DataShape::RandomLocalized { sigma, .. } => sigma > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParam(format!("bad data shape {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub nu: f64,
    pub grid: GridSpec,
    pub t_end: f64,
    pub dt: f64,
    pub eps: f64,
    pub data: DataShape,
    #[serde(default = "yes")]
    pub dealias: bool,
    #[serde(default = "one")]
    pub snapshot_stride: usize,
    /// Off for the linear problem.
    #[serde(default = "yes")]
    pub nonlinear: bool,
    /// Off for the pure heat comparison (no background flow).
    #[serde(default = "yes")]
    pub shear: bool,
    /// Keep laboratory-frame field dumps at every snapshot.
    #[serde(default)]
    pub keep_fields: bool,
    #[serde(default = "default_cfl")]
    pub cfl_limit: f64,
    #[serde(default = "default_localization")]
    pub localization_limit: f64,
    /// Stop as soon as `(1 + t) |w|_2` exceeds this value or the spectral tail leaves the resolved band (used by scans once a cell is decided).
    #[serde(default)]
    pub stop_envelope: Option<f64>,
}

fn yes() -> bool {
    true
}
fn one() -> usize {
    1
}
fn default_cfl() -> f64 {
    2.0
}
fn default_localization() -> f64 {
    LOCALIZATION_LIMIT
}

impl SimConfig {
    pub fn new(nu: f64, grid: GridSpec, t_end: f64, dt: f64, eps: f64, data: DataShape) -> Self {
        SimConfig {
            nu,
            grid,
            t_end,
            dt,
            eps,
            data,
            dealias: true,
            snapshot_stride: 1,
            nonlinear: true,
            shear: true,
            keep_fields: false,
            cfl_limit: default_cfl(),
            localization_limit: default_localization(),
            stop_envelope: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        GridSpec::new(self.grid.nx, self.grid.ny, self.grid.lx, self.grid.ly)?;
        self.data.validate()?;
        let bad = |m: String| Err(Error::InvalidParam(m));
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return bad(format!("nu must be positive, got {}", self.nu));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return bad(format!("t_end must be positive, got {}", self.t_end));
        }
        if !(self.dt > 0.0 && self.dt <= self.t_end) {
            return bad(format!("dt must be in (0, t_end], got {}", self.dt));
        }
        if !(self.eps >= 0.0 && self.eps.is_finite()) {
            return bad(format!("eps must be nonnegative, got {}", self.eps));
        }
        if self.snapshot_stride == 0 {
            return bad("snapshot_stride must be at least 1".into());
        }
        if !(self.cfl_limit > 0.0) {
            return bad("cfl_limit must be positive".into());
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.dt - 1e-9).ceil().max(1.0) as usize
    }
}

/// Time series from [`simulate`]. The `failure` field marks a run that stopped early.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub l2_norms: Vec<f64>,
    pub linf_norms: Vec<f64>,
    pub velocity_l2: Vec<f64>,
    /// `(|w_{n+1}|^2 - |w_n|^2) / dt` for the step ending at each sample (0 at t = 0).
    pub enstrophy_flux: Vec<f64>,
    /// `-2 nu |grad w|^2` averaged over the same step.
    pub dissipation: Vec<f64>,
    /// `|w_hat| on the outer retained band / |w_hat|`.
    pub tail_fraction: Vec<f64>,
    /// Largest boundary sample over the largest sample in the moving-frame box.
    pub boundary_ratio: Vec<f64>,
    pub fields: Vec<(f64, ScalarField)>,
    /// Largest relative per-step growth of `|w|_2` (0 when it never grows).
    pub max_l2_growth: f64,
    pub l1_initial: f64,
    pub l2_initial: f64,
    pub failure: Option<String>,
    /// Time at which `stop_envelope` ended the run.
    pub stopped_at: Option<f64>,
}

impl Trajectory {
    pub fn max_tail_fraction(&self) -> f64 {
        self.tail_fraction.iter().fold(0.0, |m: f64, v| m.max(*v))
    }

    pub fn resolved(&self) -> bool {
        self.failure.is_none() && self.max_tail_fraction() <= TAIL_LIMIT
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["t", "l2", "linf", "u_l2", "enstrophy_flux"])?;
        for i in 0..self.times.len() {
            out.write_record([
                self.times[i].to_string(),
                self.l2_norms[i].to_string(),
                self.linf_norms[i].to_string(),
                self.velocity_l2[i].to_string(),
                self.enstrophy_flux[i].to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Resolvedness requirement on [`Trajectory::tail_fraction`].
pub const TAIL_LIMIT: f64 = 1e-6;
/// Modes beyond this fraction of the retained cutoff (either axis) form the tail.
pub const TAIL_BAND: f64 = 0.8;

/// Mode-wise work arrays for one grid.
pub struct Stepper {
    grid: GridSpec,
    nu: f64,
    shear: bool,
    dealias: bool,
    fft: Fft2,
    keep: Vec<bool>,
    kx: Vec<f64>,
    ky: Vec<f64>,
    bufs: [Vec<Complex64>; 3],
    real: [Vec<f64>; 3],
    /// Largest `|u1 - t u2|` and `|u2|` seen by the last nonlinear evaluation.
    pub last_speed: (f64, f64),
}

impl Stepper {
    pub fn new(grid: GridSpec, nu: f64, shear: bool, dealias: bool) -> Self {
        let n = grid.len();
        let keep = (0..n).map(|i| !dealias || grid.dealias_keep(i % grid.nx, i / grid.nx)).collect();
        let zero = Complex64::new(0.0, 0.0);
        Stepper {
            grid,
            nu,
            shear,
            dealias,
            fft: Fft2::new(grid),
            keep,
            kx: (0..grid.nx).map(|i| grid.kx(i)).collect(),
            ky: (0..grid.ny).map(|i| grid.ky(i)).collect(),
            bufs: [vec![zero; n], vec![zero; n], vec![zero; n]],
            real: [vec![0.0; n], vec![0.0; n], vec![0.0; n]],
            last_speed: (0.0, 0.0),
        }
    }

    fn frame_t(&self, t: f64) -> f64 {
        if self.shear {
            t
        } else {
            0.0
        }
    }

    /// Integrating factor from `a` to `b` for every mode.
    pub fn factor(&self, a: f64, b: f64, out: &mut [f64]) {
        let g = self.grid;
        for iy in 0..g.ny {
            for ix in 0..g.nx {
                let e = if self.shear {
                    viscous_exponent(self.kx[ix], self.ky[iy], a, b)
                } else {
                    heat_exponent(self.kx[ix], self.ky[iy], a, b)
                };
                out[iy * g.nx + ix] = (-self.nu * e).exp();
            }
        }
    }

    /// `-div(u w)` for the moving-frame field `f` at time `t`, dealiased when enabled.
    pub fn nonlinear_rhs(&mut self, f: &[Complex64], t: f64, out: &mut [Complex64]) {
        let g = self.grid;
        let ts = self.frame_t(t);
        let zero = Complex64::new(0.0, 0.0);
        {
            let [b0, b1, b2] = &mut self.bufs;
            for iy in 0..g.ny {
                for ix in 0..g.nx {
                    let i = iy * g.nx + ix;
                    if !self.keep[i] {
                        b0[i] = zero;
                        b1[i] = zero;
                        b2[i] = zero;
                        continue;
                    }
                    let k = self.kx[ix];
                    let (a, b) = biot_savart_symbol(k, self.ky[iy] - k * ts);
                    b0[i] = f[i];
                    b1[i] = a * f[i];
                    b2[i] = b * f[i];
                }
            }
        }
        for j in 0..3 {
            let (bufs, real) = (&mut self.bufs[j], &mut self.real[j]);
            self.fft.backward_real(bufs, real);
        }
        let (mut sx, mut sy) = (0.0f64, 0.0f64);
        {
            let [w, u1, u2] = &self.real;
            let [p1, p2, _] = &mut self.bufs;
            for i in 0..g.len() {
                sx = sx.max((u1[i] - ts * u2[i]).abs());
                sy = sy.max(u2[i].abs());
                p1[i] = Complex64::new(u1[i] * w[i], 0.0);
                p2[i] = Complex64::new(u2[i] * w[i], 0.0);
            }
        }
        self.last_speed = (sx, sy);
        for j in 0..2 {
            let b = &mut self.bufs[j];
            self.fft.forward_x(b);
            self.fft.forward_y(b);
        }
        let [p1, p2, _] = &self.bufs;
        for iy in 0..g.ny {
            for ix in 0..g.nx {
                let i = iy * g.nx + ix;
                if !self.keep[i] {
                    out[i] = zero;
                    continue;
                }
                let k = self.kx[ix];
                let el = self.ky[iy] - k * ts;
                out[i] = -(Complex64::new(0.0, k) * p1[i] + Complex64::new(0.0, el) * p2[i]);
            }
        }
    }

    /// One integrating-factor RK4 step from `t` to `t + dt`.
    pub fn step(&mut self, state: &mut [Complex64], t: f64, dt: f64, nonlinear: bool) {
        let n = state.len();
        let mut e1 = vec![0.0; n];
        let mut e2 = vec![0.0; n];
        self.factor(t, t + 0.5 * dt, &mut e1);
        self.factor(t + 0.5 * dt, t + dt, &mut e2);
        if !nonlinear {
            for i in 0..n {
                state[i] *= e1[i] * e2[i];
            }
            return;
        }
        let zero = Complex64::new(0.0, 0.0);
        let mut k1 = vec![zero; n];
        let mut k2 = vec![zero; n];
        let mut k3 = vec![zero; n];
        let mut k4 = vec![zero; n];
        let mut tmp = vec![zero; n];
        let h = dt;
        self.nonlinear_rhs(state, t, &mut k1);
        let speed1 = self.last_speed;
        for i in 0..n {
            tmp[i] = e1[i] * (state[i] + 0.5 * h * k1[i]);
        }
        self.nonlinear_rhs(&tmp, t + 0.5 * h, &mut k2);
        for i in 0..n {
            tmp[i] = e1[i] * state[i] + 0.5 * h * k2[i];
        }
        self.nonlinear_rhs(&tmp, t + 0.5 * h, &mut k3);
        for i in 0..n {
            tmp[i] = e1[i] * e2[i] * state[i] + h * e2[i] * k3[i];
        }
        self.nonlinear_rhs(&tmp, t + h, &mut k4);
        for i in 0..n {
            let e = e1[i] * e2[i];
            state[i] = e * state[i] + h / 6.0 * (e * k1[i] + 2.0 * e2[i] * (k2[i] + k3[i]) + k4[i]);
        }
        self.last_speed = (speed1.0.max(self.last_speed.0), speed1.1.max(self.last_speed.1));
    }

    /// Spectral CFL number `dt (max|U_X| k_c + max|U_Y| eta_c)` for the last evaluation.
    pub fn cfl(&self, dt: f64) -> f64 {
        let f = if self.dealias { 2.0 / 3.0 } else { 1.0 };
        dt * (self.last_speed.0 * self.grid.k_max() * f + self.last_speed.1 * self.grid.eta_max() * f)
    }

    pub fn enstrophy(&self, f: &[Complex64]) -> f64 {
        f.iter().map(|c| c.norm_sqr()).sum::<f64>() * self.grid.parseval()
    }

    pub fn grad_enstrophy(&self, f: &[Complex64], t: f64) -> f64 {
        let ts = self.frame_t(t);
        let g = self.grid;
        let mut s = 0.0;
        for iy in 0..g.ny {
            for ix in 0..g.nx {
                let k = self.kx[ix];
                let el = self.ky[iy] - k * ts;
                s += (k * k + el * el) * f[iy * g.nx + ix].norm_sqr();
            }
        }
        s * g.parseval()
    }

    pub fn velocity_l2(&self, f: &[Complex64], t: f64) -> f64 {
        let ts = self.frame_t(t);
        let g = self.grid;
        let mut s = 0.0;
        for iy in 0..g.ny {
            for ix in 0..g.nx {
                let k = self.kx[ix];
                let el = self.ky[iy] - k * ts;
                let k2 = k * k + el * el;
                if k2 > 0.0 {
                    s += f[iy * g.nx + ix].norm_sqr() / k2;
                }
            }
        }
        (s * g.parseval()).sqrt()
    }

    /// Fraction of `|f|_2` carried by retained modes beyond [`TAIL_BAND`] of the cutoff.
    pub fn tail_fraction(&self, f: &[Complex64]) -> f64 {
        let g = self.grid;
        let (cx, cy) = if self.dealias { (g.nx / 3, g.ny / 3) } else { (g.nx / 2, g.ny / 2) };
        let (mut tail, mut all) = (0.0, 0.0);
        for iy in 0..g.ny {
            let my = GridSpec::mode(iy, g.ny).unsigned_abs() as f64;
            for ix in 0..g.nx {
                let i = iy * g.nx + ix;
                if !self.keep[i] {
                    continue;
                }
                let mx = GridSpec::mode(ix, g.nx).unsigned_abs() as f64;
                let e = f[i].norm_sqr();
                all += e;
                if mx > TAIL_BAND * cx as f64 || my > TAIL_BAND * cy as f64 {
                    tail += e;
                }
            }
        }
        if all == 0.0 {
            0.0
        } else {
            (tail / all).sqrt()
        }
    }

    /// Moving-frame real samples.
    pub fn real_field(&mut self, f: &[Complex64]) -> ScalarField {
        let mut buf = f.to_vec();
        let mut out = vec![0.0; f.len()];
        self.fft.backward_real(&mut buf, &mut out);
        ScalarField { grid: self.grid, values: out }
    }

    pub fn fft(&mut self) -> &mut Fft2 {
        &mut self.fft
    }
}

/// `|w|_{H^1} + |w|_{L^1}` with the H1 part computed spectrally.
pub fn h1_l1_norm(f: &ScalarField, f_hat: &SpectralField) -> Result<f64> {
    let l2 = f_hat.l2();
    let grad = f_hat.grad_l2(0.0);
    Ok((l2 * l2 + grad * grad).sqrt() + lp_norm_field(f, 1.0)?)
}

/// Initial data scaled so that `|w0|_{H^1} + |w0|_{L^1} = eps`.
pub fn initial_data(cfg: &SimConfig) -> Result<(ScalarField, SpectralField)> {
    let mut f = cfg.data.sample(cfg.grid);
    f.check_localized(cfg.localization_limit)?;
    let mut fft = Fft2::new(cfg.grid);
    let h = fft.forward(&f)?;
    let n = h1_l1_norm(&f, &h)?;
    if !(n > 0.0) {
        return Err(Error::InvalidParam("initial profile has zero norm".into()));
    }
    f.scale(cfg.eps / n);
    let h = fft.forward(&f)?;
    Ok((f, h))
}

/// Integrates the configured problem and records diagnostics every `snapshot_stride` steps.
pub fn simulate(cfg: &SimConfig) -> Result<Trajectory> {
    cfg.validate()?;
    let (f0, h0) = initial_data(cfg)?;
    let mut st = Stepper::new(cfg.grid, cfg.nu, cfg.shear, cfg.dealias);
    let mut state = h0.modes;
    if cfg.dealias {
        for (c, &k) in state.iter_mut().zip(&st.keep) {
            if !k {
                *c = Complex64::new(0.0, 0.0);
            }
        }
    }
    let steps = cfg.steps();
    let dt = cfg.t_end / steps as f64;
    let mut traj = Trajectory {
        l1_initial: lp_norm_field(&f0, 1.0)?,
        l2_initial: lp_norm_field(&f0, 2.0)?,
        ..Default::default()
    };

    let mut z = st.enstrophy(&state);
    let mut d = st.grad_enstrophy(&state, 0.0);
    record(&mut traj, &mut st, &state, 0.0, 0.0, 0.0, cfg);

    for n in 0..steps {
        let t = n as f64 * dt;
        st.step(&mut state, t, dt, cfg.nonlinear && cfg.eps > 0.0);
        let t1 = (n + 1) as f64 * dt;
        if cfg.nonlinear && cfg.eps > 0.0 {
            let c = st.cfl(dt);
            if !(c <= cfg.cfl_limit) {
                traj.failure = Some(format!("t = {t}: CFL number {c:.3} above {}", cfg.cfl_limit));
                break;
            }
        }
        let z1 = st.enstrophy(&state);
        if !z1.is_finite() {
            traj.failure = Some(Error::Unstable { t: t1, what: "non-finite enstrophy".into() }.to_string());
            break;
        }
        let d1 = st.grad_enstrophy(&state, t1);
        if z > 0.0 {
            traj.max_l2_growth = traj.max_l2_growth.max((z1 / z).sqrt() - 1.0);
        }
        let flux = (z1 - z) / dt;
        let diss = -cfg.nu * (d + d1);
        z = z1;
        d = d1;
        if (n + 1) % cfg.snapshot_stride == 0 || n + 1 == steps {
            record(&mut traj, &mut st, &state, t1, flux, diss, cfg);
            let b = *traj.boundary_ratio.last().unwrap();
            if b > cfg.localization_limit {
                traj.failure = Some(Error::Localization { ratio: b, limit: cfg.localization_limit }.to_string());
                break;
            }
            if let Some(cap) = cfg.stop_envelope {
                // an unresolved cell is excluded whatever happens next
                if *traj.tail_fraction.last().unwrap() > TAIL_LIMIT {
                    traj.stopped_at = Some(t1);
                    break;
                }
                if (1.0 + t1) * traj.l2_norms.last().unwrap() > cap {
                    traj.stopped_at = Some(t1);
                    break;
                }
            }
        }
    }
    Ok(traj)
}

fn record(traj: &mut Trajectory, st: &mut Stepper, state: &[Complex64], t: f64, flux: f64, diss: f64, cfg: &SimConfig) {
    let real = st.real_field(state);
    traj.times.push(t);
    traj.l2_norms.push(st.enstrophy(state).sqrt());
    traj.linf_norms.push(real.max_abs());
    traj.velocity_l2.push(st.velocity_l2(state, t));
    traj.enstrophy_flux.push(flux);
    traj.dissipation.push(diss);
    traj.tail_fraction.push(st.tail_fraction(state));
    traj.boundary_ratio.push(real.boundary_ratio());
    if cfg.keep_fields {
        let lab = if cfg.shear {
            crate::spectral::moving_to_lab(st.fft(), &SpectralField { grid: cfg.grid, modes: state.to_vec() }, t)
        } else {
            real
        };
        traj.fields.push((t, lab));
    }
}

/// Linear evolution by the kernel: exact Gaussian convolution in `x` through its Fourier
/// multiplier, adaptive quadrature in the source height `y'`.
///
/// Returns laboratory samples at physical time `t_phys`.
pub fn duhamel_linear_apply(omega0: &ScalarField, t_phys: f64, nu: f64) -> Result<ScalarField> {
    duhamel_linear_apply_with(omega0, t_phys, nu, &QuadOptions { abs_tol: 0.0, rel_tol: 1e-10, max_intervals: 400 })
}

pub fn duhamel_linear_apply_with(omega0: &ScalarField, t_phys: f64, nu: f64, opts: &QuadOptions) -> Result<ScalarField> {
    let tau = to_rescaled_time(t_phys, nu)?;
    omega0.check_localized(LOCALIZATION_LIMIT)?;
    let g = omega0.grid;
    let mut fft = Fft2::new(g);
    let w0 = fft.forward(omega0)?;
    let kappa = t_phys * t_phys / 12.0;
    let xmult: Vec<f64> = (0..g.nx).map(|ix| (-g.kx(ix).powi(2) * tau * (1.0 + kappa)).exp()).collect();
    let sd = (2.0 * tau).sqrt();
    let norm = 1.0 / (4.0 * PI * tau).sqrt();
    let n = g.len();
    let mut buf = vec![Complex64::new(0.0, 0.0); n];

    // integrand: A(s) exp(-i k t (y - s/2)) w0_x(k, y - s) times the x multiplier
    let integrand = |s: f64, out: &mut [f64]| {
        for iy in 0..g.ny {
            let ph = Complex64::from_polar(1.0, -g.ky(iy) * s);
            for ix in 0..g.nx {
                let i = iy * g.nx + ix;
                buf[i] = w0.modes[i] * ph;
            }
        }
        fft.backward_y(&mut buf);
        let a = norm * (-s * s / (4.0 * tau)).exp();
        for iy in 0..g.ny {
            let y = g.y(iy);
            for ix in 0..g.nx {
                let i = iy * g.nx + ix;
                let k = g.kx(ix);
                let v = buf[i] * Complex64::from_polar(a * xmult[ix], -k * t_phys * (y - 0.5 * s));
                out[2 * i] = v.re;
                out[2 * i + 1] = v.im;
            }
        }
    };
    let w = 12.0 * sd;
    let pts = breakpoints(-w, w, &[-4.0 * sd, -2.0 * sd, -sd, 0.0, sd, 2.0 * sd, 4.0 * sd]);
    let (v, _) = integrate_vec(2 * n, integrand, &pts, opts)?;
    let mut out: Vec<Complex64> = (0..n).map(|i| Complex64::new(v[2 * i], v[2 * i + 1])).collect();
    fft.backward_x(&mut out);
    ScalarField::new(g, out.iter().map(|c| c.re).collect())
}

/// Moving-frame exact multiplier followed by the laboratory row shift; the oracle that
/// [`duhamel_linear_apply`] is compared with.
pub fn linear_exact_lab(omega0: &ScalarField, t_phys: f64, nu: f64) -> Result<ScalarField> {
    let mut fft = Fft2::new(omega0.grid);
    let w0 = fft.forward(omega0)?;
    let wt = crate::spectral::linear_exact_moving(&w0, t_phys, nu);
    Ok(crate::spectral::moving_to_lab(&mut fft, &wt, t_phys))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> SimConfig {
        let grid = GridSpec::square(32, 6.0).unwrap();
        SimConfig::new(1e-2, grid, 1.0, 0.05, 1.0, DataShape::Gaussian { sigma_x: 0.7, sigma_y: 0.7 })
    }

    #[test]
    fn zero_data_stays_zero() {
        let mut c = small_cfg();
        c.eps = 0.0;
        let t = simulate(&c).unwrap();
        assert!(t.l2_norms.iter().all(|v| *v == 0.0));
        assert!(t.failure.is_none());
    }

    #[test]
    fn config_validation() {
        let mut c = small_cfg();
        c.dt = 0.0;
        assert!(simulate(&c).is_err());
        let mut c = small_cfg();
        c.nu = -1.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn initial_norm_is_eps() {
        let mut c = small_cfg();
        c.eps = 0.37;
        let (f, h) = initial_data(&c).unwrap();
        assert!((h1_l1_norm(&f, &h).unwrap() - 0.37).abs() < 1e-13);
    }

    #[test]
    fn parallel_shear_has_no_nonlinearity() {
        let g = GridSpec::square(32, 4.0).unwrap();
        let f = ScalarField::from_fn(g, |_, y| (-y * y).exp());
        let h = Fft2::new(g).forward(&f).unwrap();
        let mut st = Stepper::new(g, 1e-2, true, true);
        let mut out = vec![Complex64::new(0.0, 0.0); g.len()];
        st.nonlinear_rhs(&h.modes, 0.0, &mut out);
        assert!(out.iter().all(|c| c.norm() < 1e-14));
    }

    #[test]
    fn dipole_shape_is_odd() {
        let g = GridSpec::square(32, 6.0).unwrap();
        let d = DataShape::GaussianDipole { sigma: 0.5, separation: 1.5 }.sample(g);
        assert!(d.integral().abs() < 1e-12);
    }

    #[test]
    fn random_shape_is_seeded() {
        let g = GridSpec::square(32, 6.0).unwrap();
        let a = DataShape::RandomLocalized { sigma: 0.7, seed: 9, modes: 5 }.sample(g);
        let b = DataShape::RandomLocalized { sigma: 0.7, seed: 9, modes: 5 }.sample(g);
        let c = DataShape::RandomLocalized { sigma: 0.7, seed: 10, modes: 5 }.sample(g);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
