//! Enhanced versus plain viscous decay: linear runs with and without the background shear.

use couette_lab::diagnostics::decay_fit;
use couette_lab::solver::{simulate, DataShape, SimConfig};
use couette_lab::spectral::GridSpec;

fn main() -> couette_lab::Result<()> {
    for shear in [true, false] {
        let grid = if shear { GridSpec::new(8192, 512, 200.0, 8.0)? } else { GridSpec::square(512, 8.0)? };
        let mut cfg = SimConfig::new(1e-2, grid, 50.0, 0.25, 1.0, DataShape::Gaussian { sigma_x: 0.1, sigma_y: 0.1 });
        cfg.nonlinear = false;
        cfg.dealias = false;
        cfg.shear = shear;
        cfg.snapshot_stride = 2;
        let fit = decay_fit(&simulate(&cfg)?, (5.0, 50.0))?;
        println!("shear={shear}: |w|_2 ~ (1+t)^-{:.4} (rms log residual {:.1e})", fit.alpha, fit.residual);
    }
    Ok(())
}
