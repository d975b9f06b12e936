//! Kernel value and all four first derivatives at a few points.
//!
//! `cargo run --example kernel_eval -- [nu] [tau]`

use couette_lab::kernel::{enhancement_factor, eval_green, eval_green_grad, KernelParams, KernelPoint, Variable};

fn main() -> couette_lab::Result<()> {
    let args: Vec<f64> = std::env::args().skip(1).map(|a| a.parse().expect("number")).collect();
    let nu = args.first().copied().unwrap_or(1.0);
    let tau = args.get(1).copied().unwrap_or(1.0);
    let params = KernelParams::new(nu, tau)?;
    println!("nu = {nu}, tau = {tau}, kappa = {:.6}, (1+kappa)^-1/2 = {:.6}", params.kappa(), enhancement_factor(&params));
    println!("{:>6} {:>6} {:>6} {:>14} {:>14} {:>14} {:>14} {:>14}", "x", "y", "y'", "G", "dx", "dx'", "dy", "dy'");
    for (x, y, yp) in [(0.0, 0.0, 0.0), (1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (2.0, 1.0, -1.0)] {
        let pt = KernelPoint::new(x, y, yp);
        print!("{x:>6} {y:>6} {yp:>6} {:>14.6e}", eval_green(&params, &pt)?);
        for v in Variable::ALL {
            print!(" {:>14.6e}", eval_green_grad(&params, &pt, v)?);
        }
        println!();
    }
    Ok(())
}
