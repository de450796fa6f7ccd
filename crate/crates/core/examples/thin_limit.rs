//! Thin-slab limit: slab runs with shrinking delta against the planar run.
//!
//!     cargo run --example thin_limit

use alfven_slab::experiments::{delta_limit_experiment, Family, LimitParams};
use alfven_slab::{GridSpec, PacketSpec};
use std::f64::consts::PI;

fn main() -> alfven_slab::Result<()> {
    let g = GridSpec::with_box(64, 64, 16.0 * PI, 16.0 * PI, 4, 1.0)?;
    for family in [Family::Generic, Family::Embedded] {
        let p = LimitParams {
            deltas: vec![0.4, 0.2, 0.1],
            t_eval: 2.0,
            family,
            packet: PacketSpec { amplitude: 0.05, vertical: 1.0, ..Default::default() },
            ..Default::default()
        };
        let r = delta_limit_experiment(g, &p, 1)?;
        println!("{family:?} (reference norm {:.4e})", r.reference_norm);
        for row in &r.rows {
            println!("  delta {:<5} slice diff {:.3e}  z3 {:.3e}  scattering {:.3e}", row.delta, row.max_diff(), row.max_z3(), row.max_scattering());
        }
    }
    Ok(())
}
