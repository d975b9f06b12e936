//! Discrete Young bound for the kernel as a 1-D operator in `x`, with random inputs.

use couette_lab::kernel::{eval_green, KernelParams, KernelPoint};
use couette_lab::norms::young_check;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> couette_lab::Result<()> {
    let params = KernelParams::new(1e-1, 0.5)?;
    let n = 128;
    let h = 0.1;
    let xs: Vec<f64> = (0..n).map(|i| (i as f64 - n as f64 / 2.0) * h).collect();
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            k[i * n + j] = eval_green(&params, &KernelPoint::new(xs[i] - xs[j], 0.3, -0.2))?;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (p, q, r) = (5.0 / 3.0, 10.0 / 9.0, 2.0);
    for trial in 0..5 {
        let f: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b = young_check(&k, &f, h, p, q, r)?;
        println!("trial {trial}: |Tf|_r = {:.6e} <= {:.6e} (coarse {:.6e})", b.lhs, b.bound_fine, b.bound_coarse);
    }
    Ok(())
}
