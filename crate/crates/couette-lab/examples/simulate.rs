//! A short nonlinear run next to its linear counterpart, with decay fits and the envelope audit.

use couette_lab::diagnostics::{bootstrap_audit, decay_fit};
use couette_lab::solver::{simulate, DataShape, SimConfig};
use couette_lab::spectral::GridSpec;

fn main() -> couette_lab::Result<()> {
    let grid = GridSpec::new(512, 128, 40.0, 8.0)?;
    let mut cfg = SimConfig::new(1e-2, grid, 10.0, 0.05, 0.3, DataShape::Gaussian { sigma_x: 1.0, sigma_y: 1.0 });
    cfg.snapshot_stride = 10;
    for nonlinear in [false, true] {
        cfg.nonlinear = nonlinear;
        let traj = simulate(&cfg)?;
        let fit = decay_fit(&traj, (2.0, 10.0))?;
        let audit = bootstrap_audit(&traj, cfg.eps, 20.0)?;
        println!(
            "nonlinear={nonlinear}: |w(10)|_2 = {:.5e}, alpha = {:.3}, sup (1+t)|w|/eps = {:.3}, tail {:.1e}, resolved {}",
            traj.l2_norms.last().unwrap(),
            fit.alpha,
            audit.sup_envelope / cfg.eps,
            traj.max_tail_fraction(),
            traj.resolved()
        );
    }
    Ok(())
}
