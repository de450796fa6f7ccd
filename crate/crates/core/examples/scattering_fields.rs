//! Scattering fields of a small packet, with residuals and the certified tail.
//!
//!     cargo run --example scattering_fields

use alfven_slab::packet::gaussian_packet_spec;
use alfven_slab::scattering::{residual_lined, scattering_norms, ScatteringAccumulator};
use alfven_slab::{run, DtPolicy, GridSpec, PacketSpec, RunOptions, Sign, SpecState, Solver, System, WeightContext};
use std::f64::consts::PI;

fn main() -> alfven_slab::Result<()> {
    let g = GridSpec::with_box(128, 32, 40.0 * PI, 8.0 * PI, 4, 0.5)?;
    let (zp, zm) = gaussian_packet_spec(g, &PacketSpec { widths: (2.5, 2.5), amplitude: 0.02, ..Default::default() })?;
    let s0 = SpecState { zp, zm, t: 0.0 };
    let checkpoints = [2.0, 5.0, 10.0];
    let mut acc = ScatteringAccumulator::new(&s0, &checkpoints);
    let mut solver = Solver::new(g, System::slab(), DtPolicy::Directional { cfl: 0.4, dt_max: 0.1 })?;
    run(&mut solver, s0, &RunOptions::to(20.0), &mut [&mut acc])?;
    let sc = acc.finalize(0.25, 0.0);
    let ctx = WeightContext::new(0.25, 0.0);
    for (f, sign) in sc.iter().zip([Sign::Plus, Sign::Minus]) {
        println!("{sign:?}: C_hat {:.3e}, tail beyond T={} <= {:.3e}", f.c_hat, f.t_max, f.tail_bound);
        for (k, l, v) in scattering_norms(&f.values, sign, &ctx, 2).field {
            println!("  k={k} l={l}: {v:.5e}");
        }
    }
    for (t, lined) in &acc.snapshots {
        let r = [residual_lined(&sc[0], &lined[0], &ctx)?, residual_lined(&sc[1], &lined[1], &ctx)?];
        println!("residual at T={t:>4.1}: {:.3e} / {:.3e}", r[0], r[1]);
    }
    Ok(())
}
