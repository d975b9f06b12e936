//! Gagliardo-Nirenberg ratios for a single cosine mode and a Gaussian vortex.

use couette_lab::diagnostics::{gn_check, GN_PAIRS};
use couette_lab::spectral::{biot_savart, transform_forward, GridSpec, ScalarField, VelocityField};

fn main() -> couette_lab::Result<()> {
    let g = GridSpec::square(64, std::f64::consts::PI)?;
    let cosine = VelocityField { u1: ScalarField::zeros(g), u2: ScalarField::from_fn(g, |x, _| x.cos()) };
    let g2 = GridSpec::square(128, 10.0)?;
    let vortex = biot_savart(&transform_forward(&ScalarField::from_fn(g2, |x, y| (-(x * x + y * y) / 2.0).exp()))?)?;
    for (name, u) in [("cosine", &cosine), ("vortex", &vortex)] {
        let r = gn_check(u, &GN_PAIRS)?;
        for ((q, a), v) in GN_PAIRS.iter().zip(r) {
            println!("{name}: q = {q}, a = {a}: ratio {}", v.map_or("undefined".into(), |x| format!("{x:.6}")));
        }
    }
    Ok(())
}
