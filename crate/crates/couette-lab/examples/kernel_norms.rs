//! Lp norms of the kernel by quadrature next to the closed form, both slices.

use couette_lab::kernel::KernelParams;
use couette_lab::norms::{kernel_lp_closed_form, kernel_lp_quadrature, NormQuery, Slice};

fn main() -> couette_lab::Result<()> {
    println!("{:>8} {:>8} {:>6} {:>8} {:>16} {:>16} {:>10}", "nu", "tau", "p", "slice", "quadrature", "closed form", "rel err");
    for (nu, tau) in [(1.0, 1.0), (1e-2, 1.0), (1e-2, 1e-4)] {
        let params = KernelParams::new(nu, tau)?;
        for p in [1.0, 4.0 / 3.0, 2.0] {
            let exact = kernel_lp_closed_form(&params, p)?;
            for slice in [Slice::Source, Slice::Target] {
                let q = kernel_lp_quadrature(&NormQuery::new(params, p, slice, None)?)?;
                println!(
                    "{nu:>8} {tau:>8} {p:>6.3} {:>8} {q:>16.10e} {exact:>16.10e} {:>10.2e}",
                    slice.name(),
                    (q / exact - 1.0).abs()
                );
            }
        }
    }
    Ok(())
}
