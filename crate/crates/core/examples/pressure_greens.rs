//! Pressure gradient two ways: spectral Neumann solve and direct convolution
//! with the image-series Green's function.
//!
//!     cargo run --example pressure_greens

use alfven_slab::greens::{grad_p_direct_spec, grad_p_spectral_at, greens_grad, image_sum, image_tail_bound, kernel_bound_fit, DirectOptions, ImageKernelQuery};
use alfven_slab::packet::gaussian_packet_spec;
use alfven_slab::{DtPolicy, GridSpec, PacketSpec, SpecState, Solver, System};
use std::f64::consts::PI;

fn main() -> alfven_slab::Result<()> {
    let q = ImageKernelQuery::new([0.3, -0.2, 0.1], [1.1, 0.4, -0.3], 0.5);
    let k = greens_grad(&q)?;
    println!("grad G = {:?} ({} image pairs, tail <= {:.1e})", k.grad, k.pairs, k.tail_bound);
    for n in [1, 4, 16] {
        let (a, b) = (image_sum(&q, n)?, image_sum(&q, 2 * n)?);
        let change = (0..3).map(|i| (a[i] - b[i]).powi(2)).sum::<f64>().sqrt();
        println!("  {n:>2} pairs: change to {:>2} pairs {change:.2e}, bound {:.2e}", 2 * n, image_tail_bound(&q, n));
    }
    for delta in [1.0, 0.5, 0.25] {
        println!("fitted C in |grad G| <= C/(delta |x_h - y_h|), delta {delta}: {:.4}", kernel_bound_fit(delta, 300, 1)?);
    }

    let g = GridSpec::with_box(64, 64, 16.0 * PI, 16.0 * PI, 8, 0.5)?;
    let (zp, zm) = gaussian_packet_spec(g, &PacketSpec::default())?;
    let s = SpecState { zp, zm, t: 0.0 };
    let p = Solver::new(g, System::slab(), DtPolicy::default())?.rhs(&s).aux.p;
    let pts = [[0.0, 0.0, 0.0], [1.5, -2.0, 0.3], [-4.0, 3.0, -0.4]];
    let spec = grad_p_spectral_at(&s, &p, &pts);
    let direct = grad_p_direct_spec(&s, &pts, &DirectOptions::default())?;
    for ((x, a), b) in pts.iter().zip(&spec).zip(&direct.values) {
        println!("x = {x:?}\n  spectral [{:+.4e}, {:+.4e}, {:+.4e}]\n  direct   [{:+.4e}, {:+.4e}, {:+.4e}]", a[0], a[1], a[2], b[0], b[1], b[2]);
    }
    Ok(())
}
