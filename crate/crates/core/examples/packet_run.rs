//! Forward and backward run of a small Gaussian packet with an energy ledger.
//!
//!     cargo run --example packet_run

use alfven_slab::diagnostics::{LedgerConfig, LedgerSet};
use alfven_slab::packet::gaussian_packet_spec;
use alfven_slab::{run, DtPolicy, GridSpec, PacketSpec, RunOptions, SpecState, Solver, System};
use std::f64::consts::PI;

fn main() -> alfven_slab::Result<()> {
    let g = GridSpec::with_box(64, 32, 50.0, 8.0 * PI, 4, 0.5)?;
    let (zp, zm) = gaussian_packet_spec(g, &PacketSpec { widths: (2.5, 2.5), ..Default::default() })?;
    let s0 = SpecState { zp, zm, t: 0.0 };
    let mut solver = Solver::new(g, System::slab(), DtPolicy::Cfl { cfl: 0.4 })?;
    let mut ledgers = LedgerSet::new(g, vec![LedgerConfig::slab(g.delta, 0.0), LedgerConfig::slab(g.delta, 10.0)])?;

    let fwd = run(&mut solver, s0.clone(), &RunOptions::to(4.0), &mut [&mut ledgers])?;
    let r = &fwd.report;
    println!("forward: {} steps, dt in [{:.3}, {:.3}], energy drift {:.2e}/{:.2e}", r.steps, r.dt_min, r.dt_max, r.drift[0], r.drift[1]);
    println!("max div {:.1e}, max |z1| {:.2e}, boundary fraction {:.1e}", r.max_divergence, r.max_z1, r.max_boundary_fraction);
    for l in &ledgers.ledgers {
        let s = l.summary();
        println!("a = {:>4}: max E/E(0) = {:.4}, max E_delta/E_delta(0) = {:.4}", s.a, s.max_agg_ratio, s.max_agg_delta_ratio);
    }

    let back = run(&mut solver, fwd.state, &RunOptions::to(0.0), &mut [])?;
    let mut d = back.state.clone();
    for (x, y) in d.zp.iter_mut().chain(d.zm.iter_mut()).zip(s0.zp.iter().chain(s0.zm.iter())) {
        x.axpy(-1.0, y);
    }
    let e = d.energy();
    let e0 = s0.energy();
    println!("reversibility: relative L2 error {:.2e}", ((e[0] + e[1]) / (e0[0] + e0[1])).sqrt());
    Ok(())
}
