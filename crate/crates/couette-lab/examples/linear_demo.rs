//! Linear evolution two ways: kernel quadrature and the exact spectral multiplier.

use couette_lab::solver::{duhamel_linear_apply, linear_exact_lab};
use couette_lab::spectral::{lp_norm_field, GridSpec, ScalarField};

fn main() -> couette_lab::Result<()> {
    let g = GridSpec::new(256, 64, 32.0, 8.0)?;
    let w0 = ScalarField::from_fn(g, |x, y| (-(x * x + y * y) / 0.5).exp());
    for nu in [1e-1, 1e-2] {
        for t in [0.5, 2.0, 5.0] {
            let a = duhamel_linear_apply(&w0, t, nu)?;
            let b = linear_exact_lab(&w0, t, nu)?;
            let d = ScalarField::new(g, a.values.iter().zip(&b.values).map(|(x, y)| x - y).collect())?;
            let n = lp_norm_field(&b, 2.0)?;
            println!("nu {nu:<5} t {t:<4} |w|_2 {n:.6e}  relative difference {:.2e}", lp_norm_field(&d, 2.0)? / n);
        }
    }
    Ok(())
}
