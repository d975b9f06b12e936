//! A small threshold scan on coarse grids; the full desk-scale scan is `couette-lab threshold-scan`.

use couette_lab::diagnostics::{threshold_scan, ScanConfig};
use couette_lab::solver::{DataShape, SimConfig};
use couette_lab::spectral::GridSpec;

fn main() -> couette_lab::Result<()> {
    let grid = GridSpec::new(256, 64, 30.0, 8.0)?;
    let template = SimConfig::new(1e-2, grid, 8.0, 0.05, 1.0, DataShape::Gaussian { sigma_x: 1.0, sigma_y: 1.0 });
    let scan = ScanConfig {
        nu_list: vec![1e-2, 3e-3, 1e-3],
        c_list: vec![1.0, 10.0, 100.0, 1000.0],
        template,
        horizon: 8.0,
        delta: None,
        rel_tol: 0.1,
        per_nu: vec![],
        resamples: 500,
        seed: 0,
    };
    let res = threshold_scan(&scan)?;
    println!("delta = {:.4}", res.delta);
    for r in &res.per_nu {
        println!(
            "nu {:<6} stable {:?} unstable {:?} censoring {:?} ({} cells, {} excluded)",
            r.nu,
            r.stable_eps,
            r.unstable_eps,
            r.censoring,
            r.cells.len(),
            r.excluded.len()
        );
    }
    println!("gamma = {:?}, interval {:?}, censored {}", res.gamma_fit, res.gamma_ci, res.gamma_censored);
    Ok(())
}
