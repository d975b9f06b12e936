//! Globally adaptive 7/15-point Gauss-Kronrod quadrature, scalar and vector valued.
//!
//! The error estimate is the raw Gauss/Kronrod difference, which is pessimistic for
//! smooth integrands. Nested use gives the 2-D integrals needed by `norms`.

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions { abs_tol: 1e-13, rel_tol: 1e-11, max_intervals: 2000 }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub evals: usize,
}

struct Piece {
    a: f64,
    b: f64,
    value: Vec<f64>,
    err: f64,
}

fn kronrod<F: FnMut(f64, &mut [f64])>(f: &mut F, a: f64, b: f64, dim: usize, buf: &mut [f64]) -> (Vec<f64>, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut k = vec![0.0; dim];
    let mut g = vec![0.0; dim];
    f(c, buf);
    for d in 0..dim {
        k[d] = WGK[7] * buf[d];
        g[d] = WG[3] * buf[d];
    }
    for j in 0..7 {
        let dx = h * XGK[j];
        let add = |buf: &[f64], k: &mut [f64], g: &mut [f64]| {
            for d in 0..dim {
                k[d] += WGK[j] * buf[d];
                if j % 2 == 1 {
                    g[d] += WG[j / 2] * buf[d];
                }
            }
        };
        f(c - dx, buf);
        add(buf, &mut k, &mut g);
        f(c + dx, buf);
        add(buf, &mut k, &mut g);
    }
    let mut err2 = 0.0;
    for d in 0..dim {
        k[d] *= h;
        g[d] *= h;
        err2 += (k[d] - g[d]).powi(2);
    }
    (k, err2.sqrt())
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Vector-valued adaptive integration over the consecutive intervals of `points`.
///
/// `f(x, out)` fills `out` (length `dim`). Tolerances apply to the Euclidean norm of the
/// result. Returns the integral and the error estimate.
pub fn integrate_vec<F: FnMut(f64, &mut [f64])>(
    dim: usize,
    mut f: F,
    points: &[f64],
    opts: &QuadOptions,
) -> Result<(Vec<f64>, f64)> {
    if points.len() < 2 {
        return Err(Error::InvalidParam("quadrature needs at least two points".into()));
    }
    if points.iter().any(|p| !p.is_finite()) || points.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidParam("quadrature points must be finite and sorted".into()));
    }
    let mut buf = vec![0.0; dim];
    let mut pieces: Vec<Piece> = Vec::new();
    for w in points.windows(2) {
        if w[1] > w[0] {
            let (value, err) = kronrod(&mut f, w[0], w[1], dim, &mut buf);
            pieces.push(Piece { a: w[0], b: w[1], value, err });
        }
    }
    loop {
        let mut total = vec![0.0; dim];
        let mut err = 0.0;
        for p in &pieces {
            for d in 0..dim {
                total[d] += p.value[d];
            }
            err += p.err;
        }
        let target = opts.abs_tol.max(opts.rel_tol * norm(&total));
        if err <= target || pieces.is_empty() {
            return Ok((total, err));
        }
        if pieces.len() >= opts.max_intervals {
            return Err(Error::Quadrature(format!(
                "{} intervals, error {err:.3e} above target {target:.3e}",
                pieces.len()
            )));
        }
        let worst = pieces
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.err.total_cmp(&b.1.err))
            .map(|(i, _)| i)
            .unwrap();
        let p = pieces.swap_remove(worst);
        let mid = 0.5 * (p.a + p.b);
        if !(mid > p.a && mid < p.b) {
            return Err(Error::Quadrature(format!("interval [{}, {}] cannot be split", p.a, p.b)));
        }
        let (v1, e1) = kronrod(&mut f, p.a, mid, dim, &mut buf);
        let (v2, e2) = kronrod(&mut f, mid, p.b, dim, &mut buf);
        pieces.push(Piece { a: p.a, b: mid, value: v1, err: e1 });
        pieces.push(Piece { a: mid, b: p.b, value: v2, err: e2 });
    }
}

/// Scalar adaptive integration over the intervals of `points` (breakpoints included).
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, points: &[f64], opts: &QuadOptions) -> Result<QuadResult> {
    let mut evals = 0usize;
    let (v, err) = integrate_vec(1, |x, out| {
        evals += 1;
        out[0] = f(x);
    }, points, opts)?;
    Ok(QuadResult { value: v[0], error: err, evals })
}

/// Sorted copy of `points` restricted to `[a, b]`, with both ends included.
pub fn breakpoints(a: f64, b: f64, interior: &[f64]) -> Vec<f64> {
    let mut pts = vec![a, b];
    pts.extend(interior.iter().copied().filter(|&p| p > a && p < b));
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomials_exact() {
        let r = integrate(|x| x.powi(20) - 3.0 * x.powi(7), &[0.0, 1.0], &QuadOptions::default()).unwrap();
        assert!((r.value - (1.0 / 21.0 - 3.0 / 8.0)).abs() < 1e-14);
    }

    #[test]
    fn gaussian_integral() {
        let r = integrate(|x| (-x * x).exp(), &[-12.0, 0.0, 12.0], &QuadOptions::default()).unwrap();
        assert!((r.value - std::f64::consts::PI.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn kink_needs_refinement_or_breakpoint() {
        let opts = QuadOptions::default();
        let with_bp = integrate(|x: f64| (x - 0.3).abs(), &breakpoints(-1.0, 1.0, &[0.3]), &opts).unwrap();
        let exact = 0.5 * (1.3f64.powi(2) + 0.7f64.powi(2));
        assert!((with_bp.value - exact).abs() < 1e-14);
        let without = integrate(|x: f64| (x - 0.3).abs(), &[-1.0, 1.0], &opts).unwrap();
        assert!((without.value - exact).abs() < 1e-9);
        assert!(without.evals > with_bp.evals);
    }

    #[test]
    fn reports_non_convergence() {
        let opts = QuadOptions { max_intervals: 5, ..Default::default() };
        let r = integrate(|x| (1.0 / x).sin(), &[1e-6, 1.0], &opts);
        assert!(matches!(r, Err(Error::Quadrature(_))));
    }

    #[test]
    fn vector_components() {
        let (v, _) = integrate_vec(2, |x, out| {
            out[0] = x.cos();
            out[1] = x.sin();
        }, &[0.0, 1.0], &QuadOptions::default())
        .unwrap();
        assert!((v[0] - 1f64.sin()).abs() < 1e-14);
        assert!((v[1] - (1.0 - 1f64.cos())).abs() < 1e-14);
    }
}
