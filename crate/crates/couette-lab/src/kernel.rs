//! The Couette-advected heat kernel, its first derivatives and the plain heat kernel.
//!
//! Everything here is in rescaled time `tau = nu * t_phys`. With that scaling the
//! kernel solves `d_tau G + (y / nu) d_x G = lap G` and reads
//!
//! ```text
//! G = (4 pi tau)^-1 (1 + kappa)^-1/2 exp(-xi^2 / (4 tau (1 + kappa)) - (y - y')^2 / (4 tau))
//! xi = (x - x') - tau (y + y') / (2 nu),   kappa = tau^2 / (12 nu^2)
//! ```

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Viscosity and rescaled time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelParams {
    nu: f64,
    tau: f64,
}

impl KernelParams {
    pub fn new(nu: f64, tau: f64) -> Result<Self> {
        if !nu.is_finite() || !tau.is_finite() {
            return Err(Error::NonFinite("kernel params"));
        }
        if nu <= 0.0 {
            return Err(Error::InvalidParam(format!("nu must be positive, got {nu}")));
        }
        if tau <= 0.0 {
            return Err(Error::InvalidParam(format!("tau must be positive, got {tau}")));
        }
        let p = KernelParams { nu, tau };
        if !p.kappa().is_finite() {
            return Err(Error::InvalidParam(format!("kappa overflows for nu={nu}, tau={tau}")));
        }
        Ok(p)
    }

    /// Parameters for physical time `t_phys`.
    pub fn from_physical(nu: f64, t_phys: f64) -> Result<Self> {
        Self::new(nu, to_rescaled_time(t_phys, nu)?)
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn kappa(&self) -> f64 {
        self.tau * self.tau / (12.0 * self.nu * self.nu)
    }

    pub fn shape(&self) -> GreenShape {
        GreenShape {
            tau: self.tau,
            kappa: self.kappa(),
            drift: self.tau / (2.0 * self.nu),
        }
    }
}

/// Offset `x - x'`, evaluation height `y` and source height `y'`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelPoint {
    pub x: f64,
    pub y: f64,
    pub y_prime: f64,
}

impl KernelPoint {
    pub fn new(x: f64, y: f64, y_prime: f64) -> Self {
        KernelPoint { x, y, y_prime }
    }

    fn check(&self) -> Result<()> {
        if self.x.is_finite() && self.y.is_finite() && self.y_prime.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite("kernel point"))
        }
    }
}

/// Variable a derivative is taken with respect to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variable {
    X,
    XPrime,
    Y,
    YPrime,
}

impl Variable {
    pub const ALL: [Variable; 4] = [Variable::X, Variable::XPrime, Variable::Y, Variable::YPrime];

    pub fn name(self) -> &'static str {
        match self {
            Variable::X => "x",
            Variable::XPrime => "x'",
            Variable::Y => "y",
            Variable::YPrime => "y'",
        }
    }

    pub fn parse(s: &str) -> Option<Variable> {
        match s {
            "x" => Some(Variable::X),
            "x'" | "xp" | "x_prime" => Some(Variable::XPrime),
            "y" => Some(Variable::Y),
            "y'" | "yp" | "y_prime" => Some(Variable::YPrime),
            _ => None,
        }
    }
}

/// The three numbers the kernel formula actually depends on.
///
/// Kept separate from [`KernelParams`] so the heat-kernel limit (no enhancement, no drift)
/// can be evaluated through the same code path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GreenShape {
    pub tau: f64,
    pub kappa: f64,
    /// `tau / (2 nu)`: the x-drift per unit of `y + y'`.
    pub drift: f64,
}

impl GreenShape {
    pub fn heat(tau: f64) -> Self {
        GreenShape { tau, kappa: 0.0, drift: 0.0 }
    }

    pub fn xi(&self, pt: &KernelPoint) -> f64 {
        pt.x - self.drift * (pt.y + pt.y_prime)
    }

    fn log_value(&self, pt: &KernelPoint) -> f64 {
        let a = 4.0 * self.tau * (1.0 + self.kappa);
        let b = 4.0 * self.tau;
        let xi = self.xi(pt);
        let s = pt.y - pt.y_prime;
        -(xi * xi) / a - s * s / b - (4.0 * PI * self.tau).ln() - 0.5 * self.kappa.ln_1p()
    }

    pub fn value(&self, pt: &KernelPoint) -> f64 {
        self.log_value(pt).exp()
    }

    /// `(M1, M2)` for the y-derivative: `M1` is the drift (shear) contribution,
    /// `M2` the plain Gaussian one. For `Y'` the sign of `M2` flips.
    pub fn y_parts(&self, pt: &KernelPoint, which: Variable) -> (f64, f64) {
        let g = self.value(pt);
        let xi = self.xi(pt);
        let s = pt.y - pt.y_prime;
        let m1 = g * self.drift * xi / (2.0 * self.tau * (1.0 + self.kappa));
        let m2 = -g * s / (2.0 * self.tau);
        match which {
            Variable::YPrime => (m1, -m2),
            _ => (m1, m2),
        }
    }

    pub fn grad(&self, pt: &KernelPoint, which: Variable) -> f64 {
        match which {
            Variable::X | Variable::XPrime => {
                let dx = -self.value(pt) * self.xi(pt) / (2.0 * self.tau * (1.0 + self.kappa));
                if which == Variable::X {
                    dx
                } else {
                    -dx
                }
            }
            Variable::Y | Variable::YPrime => {
                let (m1, m2) = self.y_parts(pt, which);
                m1 + m2
            }
        }
    }
}

/// `(1 + kappa)^(-1/2)`.
pub fn enhancement_factor(params: &KernelParams) -> f64 {
    (-0.5 * params.kappa().ln_1p()).exp()
}

pub fn eval_green(params: &KernelParams, pt: &KernelPoint) -> Result<f64> {
    pt.check()?;
    Ok(params.shape().value(pt))
}

pub fn eval_green_grad(params: &KernelParams, pt: &KernelPoint, which: Variable) -> Result<f64> {
    pt.check()?;
    Ok(params.shape().grad(pt, which))
}

/// The two pieces of the y-derivative, `M1` proportional to `tau / nu` and `M2` the rest.
pub fn eval_green_y_parts(
    params: &KernelParams,
    pt: &KernelPoint,
    which: Variable,
) -> Result<(f64, f64)> {
    pt.check()?;
    if !matches!(which, Variable::Y | Variable::YPrime) {
        return Err(Error::InvalidParam("M1/M2 split exists only for y derivatives".into()));
    }
    Ok(params.shape().y_parts(pt, which))
}

/// 2-D heat kernel `(4 pi t)^-1 exp(-(x^2 + y^2) / (4 t))`.
pub fn eval_heat(t: f64, x: f64, y: f64) -> Result<f64> {
    if !t.is_finite() || !x.is_finite() || !y.is_finite() {
        return Err(Error::NonFinite("heat kernel"));
    }
    if t <= 0.0 {
        return Err(Error::InvalidParam(format!("heat kernel needs t > 0, got {t}")));
    }
    Ok(GreenShape::heat(t).value(&KernelPoint::new(x, y, 0.0)))
}

pub fn to_rescaled_time(t_phys: f64, nu: f64) -> Result<f64> {
    positive(t_phys, "t_phys")?;
    positive(nu, "nu")?;
    Ok(nu * t_phys)
}

pub fn from_rescaled_time(tau: f64, nu: f64) -> Result<f64> {
    positive(tau, "tau")?;
    positive(nu, "nu")?;
    Ok(tau / nu)
}

fn positive(v: f64, what: &str) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParam(format!("{what} must be positive and finite, got {v}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn enhancement_examples() {
        let p = KernelParams::new(1.0, 1e-12).unwrap();
        assert!((enhancement_factor(&p) - 1.0).abs() < 1e-15);
        let p = KernelParams::new(1.0, 1.0).unwrap();
        assert!(rel(enhancement_factor(&p), (13.0f64 / 12.0).powf(-0.5)) < 1e-14);
        let p = KernelParams::new(1e-3, 1.0).unwrap();
        let f = enhancement_factor(&p);
        assert!(rel(f, (1.0 + 1e6 / 12.0f64).powf(-0.5)) < 1e-12);
        assert!(f < 1e-2);
    }

    #[test]
    fn origin_value() {
        let p = KernelParams::new(1.0, 1.0).unwrap();
        let g = eval_green(&p, &KernelPoint::new(0.0, 0.0, 0.0)).unwrap();
        assert!(rel(g, (12.0f64 / 13.0).sqrt() / (4.0 * PI)) < 1e-14);
        assert!((g - 0.0764556).abs() < 1e-7);
    }

    #[test]
    fn rejects_bad_params() {
        assert!(KernelParams::new(1.0, 0.0).is_err());
        assert!(KernelParams::new(1.0, -1.0).is_err());
        assert!(KernelParams::new(0.0, 1.0).is_err());
        assert!(KernelParams::new(f64::NAN, 1.0).is_err());
        let p = KernelParams::new(1.0, 1.0).unwrap();
        assert!(eval_green(&p, &KernelPoint::new(f64::INFINITY, 0.0, 0.0)).is_err());
        assert!(eval_heat(0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn heat_values() {
        assert!(rel(eval_heat(1.0, 0.0, 0.0).unwrap(), 1.0 / (4.0 * PI)) < 1e-15);
        assert!(rel(eval_heat(2.0, 0.0, 0.0).unwrap(), 1.0 / (8.0 * PI)) < 1e-15);
    }

    #[test]
    fn huge_viscosity_is_heat() {
        let p = KernelParams::new(1e12, 1.0).unwrap();
        for &(x, y, yp) in &[(0.3, -0.2, 0.5), (1.0, 1.0, -1.0), (-2.0, 0.1, 0.0)] {
            let g = eval_green(&p, &KernelPoint::new(x, y, yp)).unwrap();
            let h = eval_heat(1.0, x, y - yp).unwrap();
            assert!(rel(g, h) < 1e-6);
        }
    }

    #[test]
    fn forced_heat_limit_is_identical() {
        let tau = 0.7;
        let shape = GreenShape { tau, kappa: 0.0, drift: 0.0 };
        for &(x, y, yp) in &[(0.3, -0.2, 0.5), (1.0, 1.0, -1.0), (-2.0, 0.1, 0.0)] {
            let g = shape.value(&KernelPoint::new(x, y, yp));
            let h = eval_heat(tau, x, y - yp).unwrap();
            assert!((g - h).abs() <= 1e-12 * h);
        }
    }

    #[test]
    fn gradient_zero_at_peak() {
        let p = KernelParams::new(0.3, 0.9).unwrap();
        let (y, yp) = (0.4, 0.4);
        let pt = KernelPoint::new(p.tau() * (y + yp) / (2.0 * p.nu()), y, yp);
        assert_eq!(eval_green_grad(&p, &pt, Variable::X).unwrap(), 0.0);
    }

    #[test]
    fn y_split_carries_drift() {
        let p = KernelParams::new(0.1, 2.0).unwrap();
        let pt = KernelPoint::new(1.0, 0.3, -0.2);
        let (m1, m2) = eval_green_y_parts(&p, &pt, Variable::Y).unwrap();
        let g = eval_green(&p, &pt).unwrap();
        let xi = pt.x - p.tau() * (pt.y + pt.y_prime) / (2.0 * p.nu());
        let expect_m1 = g * (p.tau() / p.nu()) * xi / (4.0 * p.tau() * (1.0 + p.kappa()));
        assert!(rel(m1, expect_m1) < 1e-13);
        assert!(rel(m2, -g * 0.5 / (2.0 * p.tau())) < 1e-13);
        assert!(rel(m1 + m2, eval_green_grad(&p, &pt, Variable::Y).unwrap()) < 1e-15);
        assert!(eval_green_y_parts(&p, &pt, Variable::X).is_err());
    }

    #[test]
    fn physical_kappa_independent_of_nu() {
        for &nu in &[1e-1, 1e-3, 1e-4] {
            let p = KernelParams::from_physical(nu, 3.0).unwrap();
            assert!(rel(p.kappa(), 9.0 / 12.0) < 1e-12);
        }
        assert_eq!(to_rescaled_time(1.0, 1e-3).unwrap(), 1e-3);
        assert!(to_rescaled_time(-1.0, 1e-3).is_err());
        assert!(from_rescaled_time(1.0, 0.0).is_err());
    }
}
