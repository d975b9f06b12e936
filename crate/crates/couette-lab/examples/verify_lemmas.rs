//! Derivative-norm envelopes: measured log-log slopes in the strongly sheared regime.

use couette_lab::norms::{verify_lemma_bounds, Lemma};

fn main() -> couette_lab::Result<()> {
    let nu = 1e-2;
    let grid: Vec<(f64, f64)> = [20.0, 40.0, 80.0, 160.0, 320.0].iter().map(|r| (nu, nu * r)).collect();
    let ps = [1.0, 4.0 / 3.0, 2.0];
    for lemma in [Lemma::Kernel, Lemma::XDerivative, Lemma::YDerivative] {
        let rep = verify_lemma_bounds(lemma, &grid, &ps)?;
        println!("lemma {}: {} rows, {} flagged", lemma.name(), rep.rows.len(), rep.flagged().count());
        for f in rep.fitted_exponents.iter().filter(|f| f.slice == couette_lab::norms::Slice::Source) {
            println!(
                "  p={:.3} {:>4}: slope {:+.4}  envelope {:+.4}  asymptotic {:+.4}",
                f.p,
                f.derivative.map_or("none", |v| v.name()),
                f.measured_slope,
                f.envelope_slope,
                lemma.asymptotic_slope(f.p)
            );
        }
    }
    Ok(())
}
