//! Two-dimensional Alfven waves: run, ledger, scattering and pressure decay.
//!
//!     cargo run --example planar_2d

use alfven_slab::greens::DirectOptions;
use alfven_slab::solver2d::{packet2d, pressure_decay_probe, scattering2d, Grid2, Ledger2Config, Ledger2Set, Solver2D};
use alfven_slab::{DtPolicy, PacketSpec, RunOptions, WeightContext};
use std::f64::consts::PI;

fn main() -> alfven_slab::Result<()> {
    let g = Grid2::new(256, 64, 40.0 * PI, 16.0 * PI)?;
    let s0 = packet2d(g, &PacketSpec::default())?;
    let ctx = WeightContext::new(0.25, 0.0);
    let probe = pressure_decay_probe(&s0, &[[0.0, 0.0], [20.0, 0.0], [40.0, 5.0]], &ctx, &DirectOptions::default())?;
    for q in &probe.points {
        println!("x = {:?}: spectral grad p [{:+.3e}, {:+.3e}], direct [{:+.3e}, {:+.3e}]", q.x, q.spectral[0], q.spectral[1], q.direct[0], q.direct[1]);
    }
    let mut solver = Solver2D::new(g, true, DtPolicy::Directional { cfl: 0.4, dt_max: 0.25 })?;
    let mut led = Ledger2Set::new(g, vec![Ledger2Config::new(0.0), Ledger2Config::new(10.0)])?;
    let (res, sc) = scattering2d(&mut solver, s0, &RunOptions::to(20.0), 0.25, 0.0, &mut [&mut led])?;
    println!("{} steps, energy drift {:.2e}, div {:.1e}", res.report.steps, res.report.drift[0].max(res.report.drift[1]), res.report.max_divergence);
    for l in &led.ledgers {
        let s = l.summary();
        println!("ledger a = {:>4}: max E/E(0) {:.4}, sup integrand {:.3e}/{:.3e}", s.a, s.max_agg_ratio, s.sup_integrand[0], s.sup_integrand[1]);
    }
    for f in &sc {
        println!("{:?}: C_hat {:.3e}, tail {:.3e}", f.sign, f.c_hat, f.tail_bound);
    }
    Ok(())
}
