//! Sampled constants for the characteristic weights, the anisotropic Sobolev
//! inequality and the weighted div-curl estimate.
//!
//!     cargo run --example weight_probes

use alfven_slab::diagnostics::{divcurl_probe, sobolev_probe, weight_probe};
use alfven_slab::packet::gaussian_packet;
use alfven_slab::{GridSpec, PacketSpec, Parity, ScalarField, WeightContext};
use std::f64::consts::PI;

fn main() -> alfven_slab::Result<()> {
    println!("{:>5} {:>8} {:>8} {:>8} {:>8} {:>8}", "a", "near", "far", "d1", "d3", "product");
    for a in [0.0, 10.0, 100.0] {
        let p = weight_probe(&WeightContext::new(0.25, a), 40.0, 5000, 3);
        println!("{a:>5} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8.4}", p.near, p.far, p.deriv[0], p.deriv[2], p.product);
    }
    for delta in [1.0, 0.25, 0.0625] {
        let g = GridSpec::new(32, 32, 8.0 * PI, 8, delta)?;
        let f = ScalarField::from_fn(g, |x1, x2, x3| (-(x1 * x1 + x2 * x2) / 8.0).exp() * (1.0 + (PI * x3 / delta).cos()));
        let st = gaussian_packet(g, &PacketSpec { widths: (2.0, 2.0), ..Default::default() })?;
        let dc = divcurl_probe(&st.zp, &WeightContext::new(0.25, 0.0), 0.0)?;
        println!(
            "delta {delta:<7} sup/(delta^-1/2 H2) = {:.4}   div-curl lhs/rhs = {:.4} (div {:.1e}, wall {:.1e})",
            sobolev_probe(&f, Parity::Cos)?,
            dc.lhs / dc.rhs(),
            dc.div,
            dc.wall
        );
    }
    Ok(())
}
