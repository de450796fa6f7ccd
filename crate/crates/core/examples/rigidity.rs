//! Rigidity experiment: scatter forward, re-centre, run back, compare norms.
//!
//!     cargo run --example rigidity

use alfven_slab::experiments::{rigidity_sweep, RigidityParams};
use alfven_slab::packet::gaussian_packet_spec;
use alfven_slab::{GridSpec, PacketSpec, SpecState};
use std::f64::consts::PI;

fn main() -> alfven_slab::Result<()> {
    let g = GridSpec::with_box(128, 32, 40.0 * PI, 8.0 * PI, 4, 0.5)?;
    let (zp, zm) = gaussian_packet_spec(g, &PacketSpec { widths: (2.5, 2.5), ..Default::default() })?;
    let s0 = SpecState { zp, zm, t: 0.0 };
    for r in rigidity_sweep(&s0, &RigidityParams::default(), &[5.0, 10.0])? {
        println!(
            "T = {:>4}: eta_hat {:.5e}, tail {:.2e}, recovered {:.5e}, rho {:.5}, reversibility {:.1e}, a -> {}",
            r.t_end, r.eta_hat, r.tail, r.recovered_norm, r.rho, r.reversibility, r.a_recentred
        );
    }
    Ok(())
}
