//! Energy ratios across thicknesses and position parameters.
//!
//!     cargo run --example uniformity_sweep

use alfven_slab::experiments::{uniformity_sweep, SweepParams};
use alfven_slab::GridSpec;
use std::f64::consts::PI;

fn main() -> alfven_slab::Result<()> {
    let g = GridSpec::with_box(64, 64, 16.0 * PI, 16.0 * PI, 4, 1.0)?;
    let p = SweepParams { deltas: vec![1.0, 0.25], t_end: 3.0, ..Default::default() };
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    let r = uniformity_sweep(g, &p, threads)?;
    for s in &r.summaries {
        println!("delta {:<5} a {:>4}: max E/E(0) {:.4}, max E_delta/E_delta(0) {:.4}, boot {:.3}", s.delta, s.a, s.max_agg_ratio, s.max_agg_delta_ratio, s.boot_ratio);
    }
    println!("spread {:.3} / {:.3}, bootstrap {}", r.spread, r.spread_delta, r.bootstrap_ok);
    Ok(())
}
